#pragma once

#include "sysrisk/core.hpp"
#include "sysrisk/joint_model.hpp"
#include "sysrisk/risk_measures.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sysrisk {

/// Half-space h . x >= v.
struct LinearConstraint {
  Vector h;
  double v = 0.0;

  LinearConstraint() = default;
  LinearConstraint(Vector normal, double offset) : h(std::move(normal)), v(offset) {
    if (h.size() == 0 || h.isZero(0.0)) throw ConfigError("constraint normal h must be nonzero");
  }

  double slack(const Vector& x) const { return h.dot(x) - v; }
  bool satisfied(const Vector& x, double tol = 0.0) const { return slack(x) >= -tol; }
};

using ConstraintSet = std::vector<LinearConstraint>;

inline bool feasible(const ConstraintSet& cs, const Vector& x, double margin = 0.0) {
  for (const auto& c : cs) {
    if (c.slack(x) < margin) return false;
  }
  return true;
}

/// Initial MCMC states must clear every hyperplane by this margin.
inline constexpr double kStrictFeasibilityMargin = 1e-12;

struct CrisisEventSpec {
  enum class Kind { VaR, RVaR, ES };

  Kind kind = Kind::ES;
  double alpha1 = 0.99;  // alpha for VaR and ES
  double alpha2 = 1.0;   // upper level for RVaR
  double delta = 0.0;    // half-width of the VaR band used by plain MC

  static CrisisEventSpec var(double alpha, double delta = 0.0) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("VaR event level must lie in (0,1)");
    if (!(delta >= 0.0)) throw ConfigError("VaR band delta must be >= 0");
    return {Kind::VaR, alpha, 1.0, delta};
  }
  static CrisisEventSpec rvar(double alpha1, double alpha2) {
    if (!(alpha1 > 0.0 && alpha1 < alpha2 && alpha2 <= 1.0)) {
      throw ConfigError("RVaR event levels must satisfy 0 < alpha1 < alpha2 <= 1");
    }
    return {Kind::RVaR, alpha1, alpha2, 0.0};
  }
  static CrisisEventSpec es(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("ES event level must lie in (0,1)");
    return {Kind::ES, alpha, 1.0, 0.0};
  }

  /// Nominal probability of the event (band probability 2 delta for VaR).
  double probability() const {
    switch (kind) {
      case Kind::VaR: return 2.0 * delta;
      case Kind::RVaR: return alpha2 - alpha1;
      case Kind::ES: return 1.0 - alpha1;
    }
    return 0.0;
  }
};

inline std::string to_string(CrisisEventSpec::Kind k) {
  switch (k) {
    case CrisisEventSpec::Kind::VaR: return "VaR";
    case CrisisEventSpec::Kind::RVaR: return "RVaR";
    case CrisisEventSpec::Kind::ES: return "ES";
  }
  return "?";
}

/// Estimated quantiles of the aggregate loss S = 1 . X defining the event.
struct EventThresholds {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  std::optional<double> var_level;  // v* for VaR events
};

/// Crisis event with thresholds plugged in.
struct ConcreteCrisisEvent {
  CrisisEventSpec spec;
  SupportClass support = SupportClass::ProfitAndLoss;
  int dim = 0;
  ConstraintSet constraints;
  std::optional<double> sum_equality;
  EventThresholds thresholds;

  /// Membership; the sum equality (if any) is checked to 1e-9 relative.
  bool contains(const Vector& x) const {
    if (!feasible(constraints, x)) return false;
    if (sum_equality) {
      const double v = *sum_equality;
      if (std::abs(x.sum() - v) > 1e-9 * std::max(1.0, std::abs(v))) return false;
    }
    return true;
  }

  /// The same event without the sum equality: the delta band for VaR events.
  ConcreteCrisisEvent mc_band() const {
    ConcreteCrisisEvent out = *this;
    out.sum_equality.reset();
    return out;
  }
};

inline bool contains(const ConcreteCrisisEvent& event, const Vector& x) { return event.contains(x); }

namespace detail {

inline ConstraintSet sum_band_constraints(int d, double lower, double upper) {
  ConstraintSet cs;
  if (std::isfinite(lower)) cs.emplace_back(Vector::Ones(d), lower);
  if (std::isfinite(upper)) cs.emplace_back(-Vector::Ones(d), -upper);
  return cs;
}

inline void add_nonnegativity(ConstraintSet& cs, int d) {
  for (int j = 0; j < d; ++j) cs.emplace_back(Vector::Unit(d, j), 0.0);
}

}  // namespace detail

/// Plug empirical quantiles of the presample row sums into the event definition.
inline ConcreteCrisisEvent estimate_event(const CrisisEventSpec& spec, const Matrix& presample,
                                          SupportClass support) {
  using Kind = CrisisEventSpec::Kind;
  if (presample.rows() < 100) {
    throw ConfigError("estimate_event: presample needs at least 100 rows, got " +
                      std::to_string(presample.rows()));
  }
  const int d = static_cast<int>(presample.cols());
  const Vector sums = presample.rowwise().sum();

  ConcreteCrisisEvent ev;
  ev.spec = spec;
  ev.support = support;
  ev.dim = d;
  switch (spec.kind) {
    case Kind::VaR: {
      const double lo = spec.alpha1 - spec.delta, hi = spec.alpha1 + spec.delta;
      if (!(lo > 0.0 && hi < 1.0)) throw ConfigError("VaR band levels alpha +- delta must stay in (0,1)");
      const double v_star = empirical_quantile(sums, spec.alpha1);
      ev.thresholds.var_level = v_star;
      ev.sum_equality = v_star;
      if (spec.delta > 0.0) {
        ev.thresholds.lower = empirical_quantile(sums, lo);
        ev.thresholds.upper = empirical_quantile(sums, hi);
      } else {
        ev.thresholds.lower = ev.thresholds.upper = v_star;
      }
      ev.constraints = detail::sum_band_constraints(d, ev.thresholds.lower, ev.thresholds.upper);
      break;
    }
    case Kind::RVaR:
      ev.thresholds.lower = empirical_quantile(sums, spec.alpha1);
      ev.thresholds.upper = empirical_quantile(sums, spec.alpha2);
      ev.constraints = detail::sum_band_constraints(d, ev.thresholds.lower, ev.thresholds.upper);
      break;
    case Kind::ES:
      ev.thresholds.lower = empirical_quantile(sums, spec.alpha1);
      ev.constraints = detail::sum_band_constraints(d, ev.thresholds.lower, ev.thresholds.upper);
      break;
  }
  if (support == SupportClass::PureLosses) detail::add_nonnegativity(ev.constraints, d);
  return ev;
}

/// Map constraints through x = mu + L y: (h, v) becomes (L^T h, v - h . mu).
inline ConstraintSet standardize_constraints(const ConstraintSet& cs, const Matrix& lower,
                                             const Vector& mu) {
  if (lower.rows() != lower.cols() || lower.rows() != mu.size()) {
    throw DomainError("standardize_constraints: shape mismatch");
  }
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    if (lower(i, i) == 0.0) throw DomainError("standardize_constraints: singular factor L");
  }
  ConstraintSet out;
  out.reserve(cs.size());
  for (const auto& c : cs) out.emplace_back(lower.transpose() * c.h, c.v - c.h.dot(mu));
  return out;
}

/// Constraints of X - c for losses supported on [c, inf): v becomes v - h . c.
inline ConstraintSet shift_constraints(const ConstraintSet& cs, const Vector& shift) {
  return standardize_constraints(cs, Matrix::Identity(shift.size(), shift.size()), shift);
}

/// Fraction in [0,1] of the straight drift x -> x + eps p at which it meets the
/// hyperplane, or nullopt if it does not within this step. Only approaching
/// motion (h . p < 0) can hit; a point already on or marginally past the
/// hyperplane yields 0.
inline std::optional<double> hit_time(const Vector& x, const Vector& p, double eps,
                                      const LinearConstraint& c) {
  const double rate = eps * c.h.dot(p);
  if (!(rate < 0.0)) return std::nullopt;
  const double t = std::max(0.0, c.slack(x)) / -rate;
  if (t <= 1.0) return t;
  return std::nullopt;
}

/// Mirror the position across the hyperplane and flip the normal component of
/// the momentum (p_par - p_perp).
inline std::pair<Vector, Vector> reflect(const Vector& x_star, const Vector& p,
                                         const LinearConstraint& c) {
  const double hh = c.h.squaredNorm();
  Vector x_r = x_star - 2.0 * c.slack(x_star) / hh * c.h;
  Vector p_r = p - 2.0 * c.h.dot(p) / hh * c.h;
  return {std::move(x_r), std::move(p_r)};
}

/// Target of the VaR event after eliminating X_d = v* - 1 . x': lives on the
/// first d - 1 coordinates, with x' >= 0 and 1 . x' <= v*.
class ReducedVarTarget {
 public:
  ReducedVarTarget(JointLossModel model, double v_star) : model_(std::move(model)), v_star_(v_star) {
    if (model_.support_class() != SupportClass::PureLosses) {
      throw CapabilityError(
          "reduced VaR target requires pure losses; for P&L models the reduced target is "
          "unconstrained and not handled here");
    }
    const int dr = model_.dim() - 1;
    detail::add_nonnegativity(constraints_, dr);
    constraints_.emplace_back(-Vector::Ones(dr), -v_star_);
  }

  int dim() const { return model_.dim() - 1; }
  double level() const { return v_star_; }
  const JointLossModel& model() const { return model_; }
  const ConstraintSet& constraints() const { return constraints_; }

  Vector lift(const Vector& x_reduced) const {
    Vector x(model_.dim());
    x.head(dim()) = x_reduced;
    x(dim()) = v_star_ - x_reduced.sum();
    return x;
  }

  double log_density(const Vector& x_reduced) const { return model_.logpdf(lift(x_reduced)); }

  /// Gradient of log f(x', v* - 1 . x') with respect to x'.
  Vector grad_log_density(const Vector& x_reduced) const {
    const Vector g = model_.grad_logpdf(lift(x_reduced));
    return g.head(dim()).array() - g(dim());
  }

  double log_density_and_grad(const Vector& x_reduced, Vector& grad) const {
    Vector g;
    const double lp = model_.logpdf_and_grad(lift(x_reduced), g);
    grad = g.head(dim()).array() - g(dim());
    return lp;
  }

 private:
  JointLossModel model_;
  double v_star_;
  ConstraintSet constraints_;
};

inline ReducedVarTarget reduce_var_event(const JointLossModel& model, double v_star) {
  return ReducedVarTarget(model, v_star);
}

/// Joint density restricted to a set of half-spaces.
class EventTarget {
 public:
  EventTarget(JointLossModel model, ConstraintSet constraints)
      : model_(std::move(model)), constraints_(std::move(constraints)) {}

  int dim() const { return model_.dim(); }
  const JointLossModel& model() const { return model_; }
  const ConstraintSet& constraints() const { return constraints_; }

  double log_density(const Vector& x) const {
    if (!feasible(constraints_, x)) return -std::numeric_limits<double>::infinity();
    return model_.logpdf(x);
  }
  Vector grad_log_density(const Vector& x) const { return model_.grad_logpdf(x); }
  double log_density_and_grad(const Vector& x, Vector& grad) const {
    return model_.logpdf_and_grad(x, grad);
  }

 private:
  JointLossModel model_;
  ConstraintSet constraints_;
};

}  // namespace sysrisk
