#pragma once

#include "sysrisk/core.hpp"
#include "sysrisk/crisis_event.hpp"
#include "sysrisk/joint_model.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>

namespace sysrisk {

namespace detail {

// E[Z 1{q1 < Z <= q2}] for standardized Z (normal or t_nu), with q = -inf / +inf allowed.
inline double partial_first_moment(bool student_t, double dof, double q1, double q2) {
  auto term = [&](double q) {
    if (std::isinf(q)) return 0.0;
    if (student_t) {
      const boost::math::students_t_distribution<double> t(dof);
      return (dof + q * q) * boost::math::pdf(t, q) / (dof - 1.0);
    }
    return boost::math::pdf(boost::math::normal_distribution<double>(), q);
  };
  return term(q1) - term(q2);
}

inline double standard_quantile(bool student_t, double dof, double a) {
  if (a >= 1.0) return std::numeric_limits<double>::infinity();
  if (student_t) return boost::math::quantile(boost::math::students_t_distribution<double>(dof), a);
  return boost::math::quantile(boost::math::normal_distribution<double>(), a);
}

}  // namespace detail

/// Risk measure rho(S) of the aggregate S = 1 . X of an elliptical model.
inline double elliptical_aggregate_measure(const EllipticalForm& e, const CrisisEventSpec& spec) {
  if (e.student_t && !(e.dof > 1.0)) throw CapabilityError("elliptical oracle needs a finite mean (nu > 1)");
  const Vector ones = Vector::Ones(e.location.size());
  const double mu_s = e.location.sum();
  const double s = std::sqrt(ones.dot(e.dispersion * ones));
  double a1 = spec.alpha1, a2 = 1.0;
  switch (spec.kind) {
    case CrisisEventSpec::Kind::VaR:
      return mu_s + s * detail::standard_quantile(e.student_t, e.dof, spec.alpha1);
    case CrisisEventSpec::Kind::RVaR: a2 = spec.alpha2; break;
    case CrisisEventSpec::Kind::ES: break;
  }
  const double q1 = detail::standard_quantile(e.student_t, e.dof, a1);
  const double q2 = detail::standard_quantile(e.student_t, e.dof, a2);
  return mu_s + s * detail::partial_first_moment(e.student_t, e.dof, q1, q2) / (a2 - a1);
}

/// Risk contributions E[X | event] of a multivariate normal or t model:
/// mu_j + (Sigma 1)_j / (1' Sigma 1) (rho(S) - 1' mu).
inline Vector elliptical_oracle(const JointLossModel& model, const CrisisEventSpec& spec) {
  const auto e = model.elliptical_form();
  if (!e) throw CapabilityError("elliptical oracle requires a multivariate normal or t model");
  const Vector ones = Vector::Ones(model.dim());
  const Vector sigma_one = e->dispersion * ones;
  const double total = ones.dot(sigma_one);
  const double rho = elliptical_aggregate_measure(*e, spec);
  return e->location + sigma_one / total * (rho - e->location.sum());
}

}  // namespace sysrisk
