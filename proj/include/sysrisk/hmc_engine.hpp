#pragma once

#include "sysrisk/core.hpp"
#include "sysrisk/crisis_event.hpp"
#include "sysrisk/risk_measures.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace sysrisk {

/// Unnormalised log-density on R^d restricted to linear constraints.
template <typename T>
concept ConstrainedTarget = requires(const T& t, const Vector& x, Vector& g) {
  { t.dim() } -> std::convertible_to<int>;
  { t.constraints() } -> std::convertible_to<const ConstraintSet&>;
  { t.log_density(x) } -> std::convertible_to<double>;
  { t.log_density_and_grad(x, g) } -> std::convertible_to<double>;
};

struct HmcParams {
  double eps = 0.1;  // leapfrog stepsize
  int steps = 10;    // leapfrog steps per proposal (integration time T)

  void validate() const {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("HMC stepsize must be > 0");
    if (steps < 1) throw ConfigError("HMC integration time must be >= 1");
  }
};

struct HmcDiagnostics {
  double acr = 0.0;
  std::vector<double> hamiltonian_errors;  // H(candidate) - H(current), per proposal
  std::vector<int> reflections;            // reflections per proposal
  std::vector<bool> accepted;
  int non_finite = 0;  // proposals rejected for a non-finite energy
};

/// Ordered chain states with provenance.
struct MarkovPath {
  Matrix samples;  // N x d
  std::string engine;
  std::uint64_t seed = 0;
};

inline constexpr int kMaxReflectionsPerDrift = 10000;

/// One leapfrog step for H = U(x) + |p|^2 / 2. `grad_u` returns grad U = -grad log pi.
template <typename GradU>
std::pair<Vector, Vector> leapfrog(const Vector& x, const Vector& p, double eps, GradU&& grad_u) {
  Vector p_half = p - 0.5 * eps * grad_u(x);
  Vector x_new = x + eps * p_half;
  Vector p_new = p_half - 0.5 * eps * grad_u(x_new);
  return {std::move(x_new), std::move(p_new)};
}

/// Drift x += eps p, reflecting off every hyperplane met on the way.
/// Returns the number of reflections.
inline int reflective_drift(Vector& x, Vector& p, double eps, const ConstraintSet& constraints) {
  double remaining = eps;
  int n_reflections = 0;
  while (remaining > 0.0) {
    double t_min = std::numeric_limits<double>::infinity();
    std::size_t m_min = constraints.size();
    for (std::size_t m = 0; m < constraints.size(); ++m) {
      const auto t = hit_time(x, p, remaining, constraints[m]);
      if (t && *t < t_min) {
        t_min = *t;
        m_min = m;
      }
    }
    if (m_min == constraints.size()) {
      x += remaining * p;
      break;
    }
    if (++n_reflections > kMaxReflectionsPerDrift) {
      throw SamplerError("leapfrog_reflect: more than 10^4 reflections in one drift");
    }
    const LinearConstraint& c = constraints[m_min];
    x += (t_min * remaining) * p;
    // Put the hit point exactly on the hyperplane before reflecting.
    x -= (c.slack(x) / c.h.squaredNorm()) * c.h;
    p = reflect(x, p, c).second;
    remaining *= (1.0 - t_min);
  }
  return n_reflections;
}

struct ReflectStep {
  Vector x;
  Vector p;
  int reflections = 0;
};

/// Leapfrog step whose drift phase reflects off the constraint hyperplanes.
template <typename GradU>
ReflectStep leapfrog_reflect(const Vector& x, const Vector& p, double eps, GradU&& grad_u,
                             const ConstraintSet& constraints) {
  ReflectStep out{x, p - 0.5 * eps * grad_u(x), 0};
  out.reflections = reflective_drift(out.x, out.p, eps, constraints);
  out.p -= 0.5 * eps * grad_u(out.x);
  return out;
}

namespace detail {

// Phase-space state with cached potential and gradient of U.
struct HamiltonianState {
  Vector x;
  Vector p;
  double u = 0.0;     // -log pi(x)
  Vector grad_u;      // grad U(x)

  double hamiltonian() const { return u + 0.5 * p.squaredNorm(); }
};

template <ConstrainedTarget Target>
bool evaluate(const Target& target, HamiltonianState& s) {
  Vector g;
  double lp = -std::numeric_limits<double>::infinity();
  try {
    lp = target.log_density_and_grad(s.x, g);
  } catch (const DomainError&) {
    return false;
  }
  if (!std::isfinite(lp) || !g.allFinite()) return false;
  s.u = -lp;
  s.grad_u = -g;
  return true;
}

// One reflective leapfrog step reusing the cached gradient. Returns false when
// the endpoint has no finite density; `reflections` is incremented.
template <ConstrainedTarget Target>
bool step(const Target& target, HamiltonianState& s, double eps, int& reflections) {
  s.p -= 0.5 * eps * s.grad_u;
  reflections += reflective_drift(s.x, s.p, eps, target.constraints());
  if (!evaluate(target, s)) return false;
  s.p -= 0.5 * eps * s.grad_u;
  return true;
}

}  // namespace detail

template <ConstrainedTarget Target>
struct HmcRun {
  MarkovPath path;
  HmcDiagnostics diagnostics;
};

/// HMC with standard normal kinetic energy and reflective leapfrog.
template <ConstrainedTarget Target>
HmcRun<Target> hmc_sample(const Target& target, const HmcParams& params, const Vector& x0,
                          Eigen::Index n, std::uint64_t seed) {
  params.validate();
  if (x0.size() != target.dim()) throw ConfigError("hmc_sample: initial state has wrong dimension");
  if (!feasible(target.constraints(), x0, kStrictFeasibilityMargin)) {
    throw ConfigError("hmc_sample: initial state is not strictly feasible");
  }
  detail::HamiltonianState current;
  current.x = x0;
  if (!detail::evaluate(target, current)) {
    throw ConfigError("hmc_sample: target has no finite log-density at the initial state");
  }

  Rng rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int d = target.dim();

  HmcRun<Target> run;
  run.path.engine = "hmc";
  run.path.seed = seed;
  run.path.samples.resize(n, d);
  auto& diag = run.diagnostics;
  diag.hamiltonian_errors.reserve(static_cast<std::size_t>(n));
  diag.reflections.reserve(static_cast<std::size_t>(n));
  diag.accepted.reserve(static_cast<std::size_t>(n));

  for (Eigen::Index it = 0; it < n; ++it) {
    current.p.resize(d);
    for (int i = 0; i < d; ++i) current.p(i) = norm(rng);
    const double h0 = current.hamiltonian();

    detail::HamiltonianState cand = current;
    int reflections = 0;
    bool ok = true;
    try {
      for (int t = 0; t < params.steps && ok; ++t) ok = detail::step(target, cand, params.eps, reflections);
    } catch (const SamplerError&) {
      ok = false;
    }
    cand.p = -cand.p;
    const double delta_h = ok ? cand.hamiltonian() - h0 : std::numeric_limits<double>::infinity();
    const double log_u = std::log(unif(rng));

    bool accept = false;
    if (!std::isfinite(delta_h)) {
      ++diag.non_finite;
    } else {
      accept = log_u < -delta_h;
    }
    if (accept) current = std::move(cand);
    run.path.samples.row(it) = current.x.transpose();
    diag.hamiltonian_errors.push_back(delta_h);
    diag.reflections.push_back(reflections);
    diag.accepted.push_back(accept);
  }
  diag.acr = n > 0 ? acceptance_rate(diag.accepted) : 0.0;
  return run;
}

// ---------------------------------------------------------------------------
// Standardisation

/// Affine map x = mu + L y from the presample mean and covariance.
struct Standardizer {
  Vector mu;
  Matrix lower;  // Cholesky factor of the covariance
  bool jittered = false;

  Vector to_x(const Vector& y) const { return mu + lower * y; }
  Vector to_y(const Vector& x) const {
    return lower.triangularView<Eigen::Lower>().solve(x - mu);
  }
  Matrix to_x_rows(const Matrix& ys) const {
    return (ys * lower.transpose()).rowwise() + mu.transpose();
  }
  Matrix to_y_rows(const Matrix& xs) const {
    const Matrix centered = xs.rowwise() - mu.transpose();
    return lower.triangularView<Eigen::Lower>().solve(centered.transpose()).transpose();
  }
};

inline Standardizer make_standardizer(const Vector& mu, const Matrix& cov) {
  Standardizer s;
  s.mu = mu;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-8 * cov.trace() / static_cast<double>(cov.rows());
    llt.compute(cov + jitter * Matrix::Identity(cov.rows(), cov.cols()));
    if (llt.info() != Eigen::Success || !(jitter > 0.0)) {
      throw ConfigError("standardize: covariance is rank deficient even after jitter");
    }
    s.jittered = true;
  }
  s.lower = llt.matrixL();
  return s;
}

/// Standardizer from the rows of a presample restricted to the target's coordinates.
inline Standardizer standardize(const Matrix& presample_conditional) {
  if (presample_conditional.rows() < 2) throw ConfigError("standardize: need at least 2 presample rows");
  return make_standardizer(presample_conditional.colwise().mean().transpose(),
                           sample_covariance(presample_conditional));
}

/// Target in whitened coordinates y, with x = mu + L y. The constant Jacobian is dropped.
template <ConstrainedTarget Target>
class StandardizedTarget {
 public:
  StandardizedTarget(const Target& base, Standardizer s)
      : base_(&base),
        map_(std::move(s)),
        constraints_(standardize_constraints(base.constraints(), map_.lower, map_.mu)) {}

  int dim() const { return base_->dim(); }
  const ConstraintSet& constraints() const { return constraints_; }
  const Standardizer& map() const { return map_; }

  double log_density(const Vector& y) const { return base_->log_density(map_.to_x(y)); }
  double log_density_and_grad(const Vector& y, Vector& grad) const {
    Vector gx;
    const double lp = base_->log_density_and_grad(map_.to_x(y), gx);
    grad = map_.lower.transpose() * gx;
    return lp;
  }

 private:
  const Target* base_;
  Standardizer map_;
  ConstraintSet constraints_;
};

// ---------------------------------------------------------------------------
// Tuning

struct TuneResult {
  HmcParams params;
  double target_acceptance = 0.0;
  double min_acceptance = 0.0;
  int halvings = 0;
  int capped_trajectories = 0;  // trajectories that hit T_max without a U-turn
  double mean_turning_point = 0.0;
};

inline double target_acceptance(int d) { return (1.0 + (d - 1) * 0.65) / d; }

/// Stepsize / integration-time heuristic driven by feasible presample points.
///
/// Halves eps (starting from c_eps d^{-1/4}) until the smallest stepwise
/// acceptance ratio along all trajectories, each stopped at its first U-turn,
/// reaches (1 + 0.65 (d - 1)) / d. T is the floor of the mean turning point.
template <ConstrainedTarget Target>
TuneResult tune(const Target& target, const Matrix& presample_conditional, std::uint64_t seed,
                double c_eps = 1.0, int t_max = 1000) {
  const int d = target.dim();
  if (presample_conditional.cols() != d) throw ConfigError("tune: presample has wrong dimension");
  std::vector<Vector> starts;
  for (Eigen::Index r = 0; r < presample_conditional.rows(); ++r) {
    Vector x = presample_conditional.row(r).transpose();
    if (feasible(target.constraints(), x, kStrictFeasibilityMargin)) starts.push_back(std::move(x));
  }
  if (starts.size() < 10) {
    throw ConfigError("tune: need at least 10 strictly feasible presample points, got " +
                      std::to_string(starts.size()));
  }

  TuneResult res;
  res.target_acceptance = target_acceptance(d);
  Rng rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  double eps = c_eps * std::pow(static_cast<double>(d), -0.25);
  double alpha_min = 0.0;

  while (alpha_min < res.target_acceptance) {
    eps *= 0.5;
    ++res.halvings;
    if (eps < 1e-12) {
      std::ostringstream os;
      os << "tune: stepsize underflow below 1e-12; worst acceptance ratio " << alpha_min
         << " vs target " << res.target_acceptance;
      throw SamplerError(os.str());
    }
    alpha_min = 1.0;
    long turning_sum = 0;
    res.capped_trajectories = 0;
    for (const Vector& x_start : starts) {
      detail::HamiltonianState s;
      s.x = x_start;
      if (!detail::evaluate(target, s)) continue;
      s.p.resize(d);
      for (int i = 0; i < d; ++i) s.p(i) = norm(rng);

      double h_prev = s.hamiltonian();
      double dist_prev = 0.0;
      double delta_prev = 0.0;
      int turning = t_max;
      std::vector<double> alphas;
      for (int t = 1; t <= t_max; ++t) {
        int refl = 0;
        bool ok = true;
        try {
          ok = detail::step(target, s, eps, refl);
        } catch (const SamplerError&) {
          ok = false;
        }
        if (!ok) {
          alphas.push_back(0.0);
          turning = t;
          break;
        }
        const double h = s.hamiltonian();
        alphas.push_back(std::min(1.0, std::exp(h_prev - h)));
        h_prev = h;
        const double dist = (s.x - x_start).norm();
        const double delta = dist - dist_prev;
        dist_prev = dist;
        if (t >= 2 && delta < 0.0 && delta_prev > 0.0) {
          turning = t - 1;
          break;
        }
        delta_prev = delta;
      }
      if (turning == t_max) ++res.capped_trajectories;
      turning_sum += turning;
      for (int t = 0; t < turning && t < static_cast<int>(alphas.size()); ++t) {
        alpha_min = std::min(alpha_min, alphas[static_cast<std::size_t>(t)]);
      }
    }
    res.mean_turning_point = static_cast<double>(turning_sum) / static_cast<double>(starts.size());
  }
  res.min_acceptance = alpha_min;
  res.params.eps = eps;
  res.params.steps = std::max(1, static_cast<int>(std::floor(res.mean_turning_point)));
  return res;
}

}  // namespace sysrisk
