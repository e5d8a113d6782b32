#pragma once

#include "sysrisk/core.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sysrisk {

enum class MarginalKind { GPD, Pareto, StudentT, Normal };
enum class Support { NonNegative, Real };
enum class MarginalQuantity { Pdf, LogPdf, DLogPdf, Cdf, Quantile };

inline std::string_view to_string(MarginalKind k) {
  switch (k) {
    case MarginalKind::GPD: return "GPD";
    case MarginalKind::Pareto: return "Pareto";
    case MarginalKind::StudentT: return "StudentT";
    case MarginalKind::Normal: return "Normal";
  }
  return "?";
}

/// Univariate parametric loss distribution with closed-form pdf, cdf and quantile.
///
/// Parameterisations:
///   GPD(shape xi >= 0, scale beta > 0)           F(x) = 1 - (1 + xi x / beta)^(-1/xi), x >= 0
///   Pareto(scale lambda > 0, shape theta > 0)    F(x) = 1 - (lambda / (lambda + x))^theta, x >= 0
///   StudentT(nu > 0, location mu, scale sigma > 0)
///   Normal(mu, sigma > 0)
class MarginalModel {
 public:
  static MarginalModel gpd(double shape, double scale) {
    if (!(shape >= 0.0) || !std::isfinite(shape)) throw ConfigError("GPD shape must be finite and >= 0");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("GPD scale must be > 0");
    return MarginalModel(MarginalKind::GPD, {shape, scale});
  }
  static MarginalModel pareto(double scale, double shape) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("Pareto scale must be > 0");
    if (!(shape > 0.0) || !std::isfinite(shape)) throw ConfigError("Pareto shape must be > 0");
    return MarginalModel(MarginalKind::Pareto, {scale, shape});
  }
  static MarginalModel student_t(double dof, double location = 0.0, double scale = 1.0) {
    if (!(dof > 0.0) || !std::isfinite(dof)) throw ConfigError("StudentT degrees of freedom must be > 0");
    if (!std::isfinite(location)) throw ConfigError("StudentT location must be finite");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("StudentT scale must be > 0");
    return MarginalModel(MarginalKind::StudentT, {dof, location, scale});
  }
  static MarginalModel normal(double mean = 0.0, double sd = 1.0) {
    if (!std::isfinite(mean)) throw ConfigError("Normal mean must be finite");
    if (!(sd > 0.0) || !std::isfinite(sd)) throw ConfigError("Normal sd must be > 0");
    return MarginalModel(MarginalKind::Normal, {mean, sd});
  }

  MarginalKind kind() const { return kind_; }
  const std::vector<double>& params() const { return params_; }

  Support support() const {
    return (kind_ == MarginalKind::GPD || kind_ == MarginalKind::Pareto) ? Support::NonNegative
                                                                         : Support::Real;
  }
  bool in_support(double x) const {
    if (std::isnan(x)) return false;
    return support() == Support::Real ? std::isfinite(x) : (x >= 0.0 && x < kInf);
  }

  double pdf(double x) const { return std::exp(logpdf(x)); }

  double logpdf(double x) const {
    check_support(x);
    switch (kind_) {
      case MarginalKind::GPD: {
        const double xi = params_[0], beta = params_[1];
        if (xi == 0.0) return -std::log(beta) - x / beta;
        return -std::log(beta) - (1.0 / xi + 1.0) * std::log1p(xi * x / beta);
      }
      case MarginalKind::Pareto: {
        const double lambda = params_[0], theta = params_[1];
        return std::log(theta) + theta * std::log(lambda) - (theta + 1.0) * std::log(lambda + x);
      }
      case MarginalKind::StudentT: {
        const double nu = params_[0], sigma = params_[2];
        const double z = (x - params_[1]) / sigma;
        return t_log_norm_const(nu) - 0.5 * (nu + 1.0) * std::log1p(z * z / nu) - std::log(sigma);
      }
      case MarginalKind::Normal: {
        const double sigma = params_[1];
        const double z = (x - params_[0]) / sigma;
        return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * M_PI);
      }
    }
    return 0.0;
  }

  /// d/dx log f(x).
  double dlogpdf(double x) const {
    check_support(x);
    switch (kind_) {
      case MarginalKind::GPD: {
        const double xi = params_[0], beta = params_[1];
        return -(1.0 + xi) / (beta + xi * x);
      }
      case MarginalKind::Pareto:
        return -(params_[1] + 1.0) / (params_[0] + x);
      case MarginalKind::StudentT: {
        const double nu = params_[0], sigma = params_[2];
        const double z = (x - params_[1]) / sigma;
        return -(nu + 1.0) * z / (sigma * (nu + z * z));
      }
      case MarginalKind::Normal:
        return -(x - params_[0]) / (params_[1] * params_[1]);
    }
    return 0.0;
  }

  double cdf(double x) const {
    check_support(x);
    switch (kind_) {
      case MarginalKind::GPD: {
        const double xi = params_[0], beta = params_[1];
        if (xi == 0.0) return -std::expm1(-x / beta);
        return -std::expm1(-std::log1p(xi * x / beta) / xi);
      }
      case MarginalKind::Pareto: {
        const double lambda = params_[0], theta = params_[1];
        return -std::expm1(theta * (std::log(lambda) - std::log(lambda + x)));
      }
      case MarginalKind::StudentT:
        return boost::math::cdf(boost::math::students_t_distribution<double>(params_[0]),
                                (x - params_[1]) / params_[2]);
      case MarginalKind::Normal:
        return boost::math::cdf(boost::math::normal_distribution<double>(params_[0], params_[1]), x);
    }
    return 0.0;
  }

  /// Generalised inverse inf{x : F(x) >= u} for u in (0,1).
  double quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) {
      throw DomainError("quantile level must lie in (0,1), got " + std::to_string(u));
    }
    switch (kind_) {
      case MarginalKind::GPD: {
        const double xi = params_[0], beta = params_[1];
        if (xi == 0.0) return -beta * std::log1p(-u);
        return beta / xi * std::expm1(-xi * std::log1p(-u));
      }
      case MarginalKind::Pareto: {
        const double lambda = params_[0], theta = params_[1];
        return lambda * std::expm1(-std::log1p(-u) / theta);
      }
      case MarginalKind::StudentT:
        return params_[1] +
               params_[2] * boost::math::quantile(
                                boost::math::students_t_distribution<double>(params_[0]), u);
      case MarginalKind::Normal:
        return boost::math::quantile(
            boost::math::normal_distribution<double>(params_[0], params_[1]), u);
    }
    return 0.0;
  }

  double eval(double arg, MarginalQuantity what) const {
    switch (what) {
      case MarginalQuantity::Pdf: return pdf(arg);
      case MarginalQuantity::LogPdf: return logpdf(arg);
      case MarginalQuantity::DLogPdf: return dlogpdf(arg);
      case MarginalQuantity::Cdf: return cdf(arg);
      case MarginalQuantity::Quantile: return quantile(arg);
    }
    return 0.0;
  }

  /// Cdf that maps points outside the support to 0 (below) instead of throwing.
  double cdf_extended(double x) const {
    if (x == -kInf) return 0.0;
    if (x == kInf) return 1.0;
    if (support() == Support::NonNegative && x <= 0.0) return 0.0;
    return cdf(x);
  }

  /// Mean, if finite.
  std::optional<double> mean() const {
    switch (kind_) {
      case MarginalKind::GPD:
        if (params_[0] < 1.0) return params_[1] / (1.0 - params_[0]);
        return std::nullopt;
      case MarginalKind::Pareto:
        if (params_[1] > 1.0) return params_[0] / (params_[1] - 1.0);
        return std::nullopt;
      case MarginalKind::StudentT:
        if (params_[0] > 1.0) return params_[1];
        return std::nullopt;
      case MarginalKind::Normal:
        return params_[0];
    }
    return std::nullopt;
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  MarginalModel(MarginalKind kind, std::vector<double> params)
      : kind_(kind), params_(std::move(params)) {}

  static double t_log_norm_const(double nu) {
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * M_PI);
  }

  void check_support(double x) const {
    if (!in_support(x)) {
      throw DomainError(std::string(to_string(kind_)) + ": x = " + std::to_string(x) +
                        " outside support");
    }
  }

  MarginalKind kind_;
  std::vector<double> params_;
};

}  // namespace sysrisk
