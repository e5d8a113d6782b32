#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sysrisk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Argument outside the mathematical domain of a function (support, (0,1), ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Operation not available for the given model, event or engine combination.
class CapabilityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid parameters or configuration, rejected at construction time.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sampler failure at run time (degenerate slices, runaway reflections, ...).
class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbClamp = 1e-12;

inline double clamp_prob(double u) {
  if (u < kProbClamp) return kProbClamp;
  if (u > 1.0 - kProbClamp) return 1.0 - kProbClamp;
  return u;
}

/// Copy of `x` with entry `j` removed.
inline Vector drop(const Vector& x, Eigen::Index j) {
  Vector out(x.size() - 1);
  for (Eigen::Index i = 0, k = 0; i < x.size(); ++i) {
    if (i != j) out(k++) = x(i);
  }
  return out;
}

/// Inverse of drop(): insert `value` at position `j`.
inline Vector insert(const Vector& rest, Eigen::Index j, double value) {
  Vector out(rest.size() + 1);
  for (Eigen::Index i = 0, k = 0; i < out.size(); ++i) {
    out(i) = (i == j) ? value : rest(k++);
  }
  return out;
}

/// Unbiased sample covariance of the rows of `x`.
inline Matrix sample_covariance(const Matrix& x) {
  const Vector mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - mean.transpose();
  return (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
}

}  // namespace sysrisk
