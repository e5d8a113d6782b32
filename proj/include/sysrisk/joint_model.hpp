#pragma once

#include "sysrisk/copula.hpp"
#include "sysrisk/core.hpp"
#include "sysrisk/marginal.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sysrisk {

enum class SupportClass { PureLosses, ProfitAndLoss };

inline std::string_view to_string(SupportClass s) {
  return s == SupportClass::PureLosses ? "pure-losses" : "pnl";
}

/// Location and dispersion of an elliptical joint model (multivariate normal or t).
struct EllipticalForm {
  bool student_t = false;
  double dof = 0.0;
  Vector location;
  Matrix dispersion;
};

/// Joint loss distribution composed from marginals and a copula via Sklar's theorem.
class JointLossModel {
 public:
  JointLossModel(std::vector<MarginalModel> marginals, CopulaModel copula)
      : marginals_(std::move(marginals)), copula_(std::move(copula)) {
    if (marginals_.size() < 2) throw ConfigError("joint model needs d >= 2 marginals");
    if (static_cast<int>(marginals_.size()) != copula_.dim()) {
      throw ConfigError("copula dimension " + std::to_string(copula_.dim()) +
                        " does not match number of marginals " + std::to_string(marginals_.size()));
    }
    support_ = SupportClass::PureLosses;
    for (const auto& m : marginals_) {
      if (m.support() == Support::Real) support_ = SupportClass::ProfitAndLoss;
    }
    if (auto e = elliptical_form()) {
      Direct dd;
      const Eigen::LLT<Matrix> llt(e->dispersion);
      if (llt.info() == Eigen::Success) {
        const double d = static_cast<double>(dim());
        const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        dd.precision = llt.solve(Matrix::Identity(dim(), dim()));
        dd.log_norm = -0.5 * log_det;
        if (e->student_t) {
          dd.log_norm += std::lgamma(0.5 * (e->dof + d)) - std::lgamma(0.5 * e->dof) - 0.5 * d * std::log(e->dof * M_PI);
        } else {
          dd.log_norm -= 0.5 * d * std::log(2.0 * M_PI);
        }
        dd.form = std::move(*e);
        direct_ = std::move(dd);
      }
    }
  }

  int dim() const { return static_cast<int>(marginals_.size()); }
  const std::vector<MarginalModel>& marginals() const { return marginals_; }
  const MarginalModel& marginal(int j) const { return marginals_.at(static_cast<size_t>(j)); }
  const CopulaModel& copula() const { return copula_; }
  SupportClass support_class() const { return support_; }

  bool in_support(const Vector& x) const {
    if (x.size() != dim()) return false;
    for (int j = 0; j < dim(); ++j) {
      if (!marginals_[j].in_support(x(j))) return false;
    }
    return true;
  }

  /// log f_X(x); -infinity outside the support.
  double logpdf(const Vector& x) const {
    if (!in_support(x)) return -std::numeric_limits<double>::infinity();
    if (direct_) {
      Vector g;
      return direct_logpdf(x, g);
    }
    double out = 0.0;
    Vector u(dim());
    for (int j = 0; j < dim(); ++j) {
      u(j) = clamp_prob(marginals_[j].cdf(x(j)));
      out += marginals_[j].logpdf(x(j));
    }
    return out + copula_.log_density(u);
  }

  Vector grad_logpdf(const Vector& x) const {
    if (!in_support(x)) throw DomainError("joint_grad_logpdf: point outside the support");
    if (direct_) {
      Vector g;
      direct_logpdf(x, g);
      return g;
    }
    Vector u(dim());
    for (int j = 0; j < dim(); ++j) u(j) = clamp_prob(marginals_[j].cdf(x(j)));
    Vector g = copula_.grad_log_density(u);
    for (int j = 0; j < dim(); ++j) {
      g(j) = g(j) * marginals_[j].pdf(x(j)) + marginals_[j].dlogpdf(x(j));
    }
    return g;
  }

  /// Log density and gradient in one pass (shares the marginal cdf evaluations).
  double logpdf_and_grad(const Vector& x, Vector& grad) const {
    if (!in_support(x)) throw DomainError("joint_grad_logpdf: point outside the support");
    if (direct_) return direct_logpdf(x, grad);
    Vector u(dim());
    double out = 0.0;
    Vector pdf(dim());
    for (int j = 0; j < dim(); ++j) {
      u(j) = clamp_prob(marginals_[j].cdf(x(j)));
      const double lp = marginals_[j].logpdf(x(j));
      pdf(j) = std::exp(lp);
      out += lp;
    }
    out += copula_.log_density(u);
    grad = copula_.grad_log_density(u);
    for (int j = 0; j < dim(); ++j) grad(j) = grad(j) * pdf(j) + marginals_[j].dlogpdf(x(j));
    return out;
  }

  Matrix sample(Eigen::Index n, Rng& rng) const {
    Matrix x = copula_.sample(n, rng);
    for (int j = 0; j < dim(); ++j) {
      const auto& m = marginals_[j];
      for (Eigen::Index r = 0; r < n; ++r) x(r, j) = m.quantile(x(r, j));
    }
    return x;
  }

  /// Full conditional distribution of X_j given X_-j = x_rest, with the
  /// conditioning transforms evaluated once.
  class Conditional {
   public:
    Conditional(const JointLossModel& model, int j, const Vector& x_rest)
        : model_(&model), j_(j), u_rest_(x_rest.size()) {
      if (j < 0 || j >= model.dim()) throw DomainError("conditional index out of range");
      if (x_rest.size() != model.dim() - 1) throw DomainError("x_rest must have d-1 entries");
      for (int i = 0, k = 0; i < model.dim(); ++i) {
        if (i == j) continue;
        const auto& m = model.marginal(i);
        if (!m.in_support(x_rest(k))) throw DomainError("conditioning point outside the support");
        u_rest_(k) = clamp_prob(m.cdf(x_rest(k)));
        ++k;
      }
    }

    /// F_{X_j | X_-j}(x); accepts +-infinity and points below the support.
    double cdf(double x) const {
      const double u = model_->marginal(j_).cdf_extended(x);
      return model_->copula().hfun(j_, u, u_rest_);
    }

    double quantile(double p) const {
      if (!(p > 0.0 && p < 1.0)) throw DomainError("conditional quantile level outside (0,1)");
      return model_->marginal(j_).quantile(model_->copula().hfun_inv(j_, p, u_rest_));
    }

   private:
    const JointLossModel* model_;
    int j_;
    Vector u_rest_;
  };

  Conditional conditional(int j, const Vector& x_rest) const { return Conditional(*this, j, x_rest); }

  double full_conditional_cdf(int j, const Vector& x_rest, double x) const {
    return conditional(j, x_rest).cdf(x);
  }
  double full_conditional_quantile(int j, const Vector& x_rest, double p) const {
    return conditional(j, x_rest).quantile(p);
  }

  /// Multivariate normal or t form, when marginals and copula combine into one.
  std::optional<EllipticalForm> elliptical_form() const {
    const int d = dim();
    EllipticalForm e;
    e.location.resize(d);
    Vector scale(d);
    if (copula_.kind() == CopulaKind::Gaussian) {
      for (int j = 0; j < d; ++j) {
        const auto& m = marginals_[j];
        if (m.kind() != MarginalKind::Normal) return std::nullopt;
        e.location(j) = m.params()[0];
        scale(j) = m.params()[1];
      }
    } else if (copula_.kind() == CopulaKind::StudentT) {
      e.student_t = true;
      e.dof = copula_.dof();
      for (int j = 0; j < d; ++j) {
        const auto& m = marginals_[j];
        if (m.kind() != MarginalKind::StudentT || m.params()[0] != e.dof) return std::nullopt;
        e.location(j) = m.params()[1];
        scale(j) = m.params()[2];
      }
    } else {
      return std::nullopt;
    }
    e.dispersion = scale.asDiagonal() * copula_.correlation() * scale.asDiagonal();
    return e;
  }

 private:
  // Closed-form density of the multivariate normal / t, bypassing the copula.
  struct Direct {
    EllipticalForm form;
    Matrix precision;
    double log_norm = 0.0;
  };

  double direct_logpdf(const Vector& x, Vector& grad) const {
    const auto& e = direct_->form;
    const Vector z = x - e.location;
    const Vector pz = direct_->precision * z;
    const double q = z.dot(pz);
    if (e.student_t) {
      const double a = 0.5 * (e.dof + static_cast<double>(dim()));
      grad = -(2.0 * a / (e.dof + q)) * pz;
      return direct_->log_norm - a * std::log1p(q / e.dof);
    }
    grad = -pz;
    return direct_->log_norm - 0.5 * q;
  }

  std::vector<MarginalModel> marginals_;
  CopulaModel copula_;
  SupportClass support_;
  std::optional<Direct> direct_;
};

/// Multivariate t_nu(location, correlation) with unit scales.
inline JointLossModel multivariate_t(double dof, const Matrix& correlation) {
  std::vector<MarginalModel> m;
  for (Eigen::Index j = 0; j < correlation.rows(); ++j) m.push_back(MarginalModel::student_t(dof));
  return JointLossModel(std::move(m), CopulaModel::student_t(dof, correlation));
}

inline JointLossModel multivariate_normal(const Matrix& correlation) {
  std::vector<MarginalModel> m;
  for (Eigen::Index j = 0; j < correlation.rows(); ++j) m.push_back(MarginalModel::normal());
  return JointLossModel(std::move(m), CopulaModel::gaussian(correlation));
}

inline Matrix equicorrelation(int d, double rho) {
  Matrix r = Matrix::Constant(d, d, rho);
  r.diagonal().setOnes();
  return r;
}

namespace presets {

/// Three GPD(0.3, 1) losses coupled by a survival Clayton copula with theta = 2 (Kendall's tau 0.5).
inline JointLossModel m1() {
  std::vector<MarginalModel> m(3, MarginalModel::gpd(0.3, 1.0));
  return JointLossModel(std::move(m), CopulaModel::survival_clayton(3, 2.0));
}

/// Trivariate t_5 with dispersion entries |i - j| / d off the diagonal.
inline JointLossModel m2() {
  const int d = 3;
  Matrix r(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) r(i, j) = (i == j) ? 1.0 : std::abs(i - j) / static_cast<double>(d);
  return multivariate_t(5.0, r);
}

/// Loss/expense model: Pareto marginals with a survival Clayton copula (theta = 0.512).
inline JointLossModel m3() {
  std::vector<MarginalModel> m{MarginalModel::pareto(14036.0, 1.122),
                               MarginalModel::pareto(14219.0, 2.118)};
  return JointLossModel(std::move(m), CopulaModel::survival_clayton(2, 0.512));
}

inline std::vector<std::string> names() { return {"M1", "M2", "M3"}; }

inline std::string describe(const std::string& name) {
  if (name == "M1") return "d=3, GPD(xi=0.3, beta=1) marginals, survival Clayton(theta=2) copula";
  if (name == "M2") return "d=3, multivariate t (nu=5), dispersion rho_ij=|i-j|/3";
  if (name == "M3") return "d=2, Pareto(14036, 1.122) and Pareto(14219, 2.118), survival Clayton(theta=0.512)";
  return {};
}

inline JointLossModel by_name(const std::string& name) {
  if (name == "M1") return m1();
  if (name == "M2") return m2();
  if (name == "M3") return m3();
  throw ConfigError("unknown model preset '" + name + "' (available: M1, M2, M3)");
}

}  // namespace presets
}  // namespace sysrisk
