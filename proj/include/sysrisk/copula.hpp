#pragma once

#include "sysrisk/core.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <random>
#include <string>
#include <string_view>

namespace sysrisk {

enum class CopulaKind { Independence, Clayton, SurvivalClayton, Gaussian, StudentT };

inline std::string_view to_string(CopulaKind k) {
  switch (k) {
    case CopulaKind::Independence: return "Independence";
    case CopulaKind::Clayton: return "Clayton";
    case CopulaKind::SurvivalClayton: return "SurvivalClayton";
    case CopulaKind::Gaussian: return "Gaussian";
    case CopulaKind::StudentT: return "StudentT";
  }
  return "?";
}

/// Copula with closed-form density, log-density gradient, full conditional
/// distributions C_{j|-j} and their inverses, and an i.i.d. sampler.
///
/// Probability-scale inputs strictly inside (0,1) are clamped to
/// [1e-12, 1 - 1e-12] before evaluation; inputs on or outside the boundary
/// raise DomainError.
class CopulaModel {
 public:
  static CopulaModel independence(int dim) {
    check_dim(dim);
    return CopulaModel(CopulaKind::Independence, dim);
  }
  static CopulaModel clayton(int dim, double theta) {
    check_dim(dim);
    if (!(theta > 0.0) || !std::isfinite(theta)) throw ConfigError("Clayton theta must be > 0");
    CopulaModel c(CopulaKind::Clayton, dim);
    c.theta_ = theta;
    return c;
  }
  static CopulaModel survival_clayton(int dim, double theta) {
    CopulaModel c = clayton(dim, theta);
    c.kind_ = CopulaKind::SurvivalClayton;
    return c;
  }
  static CopulaModel gaussian(const Matrix& correlation) {
    CopulaModel c(CopulaKind::Gaussian, static_cast<int>(correlation.rows()));
    c.set_correlation(correlation);
    return c;
  }
  static CopulaModel student_t(double dof, const Matrix& correlation) {
    if (!(dof > 0.0) || !std::isfinite(dof)) throw ConfigError("t copula dof must be > 0");
    CopulaModel c(CopulaKind::StudentT, static_cast<int>(correlation.rows()));
    c.dof_ = dof;
    c.set_correlation(correlation);
    return c;
  }

  CopulaKind kind() const { return kind_; }
  int dim() const { return dim_; }
  double theta() const { return theta_; }
  double dof() const { return dof_; }
  const Matrix& correlation() const { return corr_; }

  double density(const Vector& u) const { return std::exp(log_density(u)); }

  double log_density(const Vector& u_in) const {
    const Vector u = interior(u_in);
    switch (kind_) {
      case CopulaKind::Independence:
        return 0.0;
      case CopulaKind::Clayton:
        return clayton_log_density(u);
      case CopulaKind::SurvivalClayton:
        return clayton_log_density(Vector::Ones(dim_) - u);
      case CopulaKind::Gaussian: {
        const Vector z = normal_scores(u);
        return -0.5 * z.dot((precision_ - Matrix::Identity(dim_, dim_)) * z) - 0.5 * log_det_;
      }
      case CopulaKind::StudentT: {
        const Vector z = t_scores(u);
        const double nu = dof_, d = dim_;
        double out = t_const_ - 0.5 * (nu + d) * std::log1p(z.dot(precision_ * z) / nu);
        for (int i = 0; i < dim_; ++i) out += 0.5 * (nu + 1.0) * std::log1p(z(i) * z(i) / nu);
        return out;
      }
    }
    return 0.0;
  }

  /// Gradient of log c with respect to u.
  Vector grad_log_density(const Vector& u_in) const {
    const Vector u = interior(u_in);
    switch (kind_) {
      case CopulaKind::Independence:
        return Vector::Zero(dim_);
      case CopulaKind::Clayton:
        return clayton_grad(u);
      case CopulaKind::SurvivalClayton:
        return -clayton_grad(Vector::Ones(dim_) - u);
      case CopulaKind::Gaussian: {
        const Vector z = normal_scores(u);
        const Vector dz = (precision_ - Matrix::Identity(dim_, dim_)) * z;
        Vector g(dim_);
        for (int j = 0; j < dim_; ++j) g(j) = -dz(j) / std_normal_pdf(z(j));
        return g;
      }
      case CopulaKind::StudentT: {
        const Vector z = t_scores(u);
        const double nu = dof_, d = dim_;
        const Vector pz = precision_ * z;
        const double q = z.dot(pz);
        Vector g(dim_);
        for (int j = 0; j < dim_; ++j) {
          const double dlogc_dz = -(nu + d) * pz(j) / (nu + q) + (nu + 1.0) * z(j) / (nu + z(j) * z(j));
          g(j) = dlogc_dz / boost::math::pdf(t_, z(j));
        }
        return g;
      }
    }
    return Vector::Zero(dim_);
  }

  /// Full conditional copula C_{j|-j}(u_j | u_rest). u_j may be 0 or 1.
  double hfun(int j, double u_j, const Vector& u_rest_in) const {
    check_index(j, u_rest_in);
    if (!(u_j >= 0.0 && u_j <= 1.0)) throw DomainError("hfun: u_j outside [0,1]");
    if (u_j == 0.0) return 0.0;
    if (u_j == 1.0) return 1.0;
    u_j = clamp_prob(u_j);
    const Vector u_rest = interior(u_rest_in);
    switch (kind_) {
      case CopulaKind::Independence:
        return u_j;
      case CopulaKind::Clayton:
        return clayton_h(u_j, u_rest);
      case CopulaKind::SurvivalClayton:
        return 1.0 - clayton_h(1.0 - u_j, Vector::Ones(u_rest.size()) - u_rest);
      case CopulaKind::Gaussian: {
        const auto [mu, sd] = normal_conditional(j, u_rest);
        return std_normal_cdf((normal_score(u_j) - mu) / sd);
      }
      case CopulaKind::StudentT: {
        const auto [mu, scale] = t_conditional(j, u_rest);
        return boost::math::cdf(t_cond_, (t_score(u_j) - mu) / scale);
      }
    }
    return u_j;
  }

  /// Inverse of hfun in its first argument.
  double hfun_inv(int j, double p, const Vector& u_rest_in) const {
    check_index(j, u_rest_in);
    if (!(p > 0.0 && p < 1.0)) throw DomainError("hfun_inv: p outside (0,1)");
    p = clamp_prob(p);
    const Vector u_rest = interior(u_rest_in);
    switch (kind_) {
      case CopulaKind::Independence:
        return p;
      case CopulaKind::Clayton:
        return clayton_h_inv(p, u_rest);
      case CopulaKind::SurvivalClayton:
        return 1.0 - clayton_h_inv(1.0 - p, Vector::Ones(u_rest.size()) - u_rest);
      case CopulaKind::Gaussian: {
        const auto [mu, sd] = normal_conditional(j, u_rest);
        return clamp_prob(std_normal_cdf(mu + sd * boost::math::quantile(std_normal_, p)));
      }
      case CopulaKind::StudentT: {
        const auto [mu, scale] = t_conditional(j, u_rest);
        const double z = mu + scale * boost::math::quantile(t_cond_, p);
        return clamp_prob(boost::math::cdf(t_, z));
      }
    }
    return p;
  }

  /// n x d matrix of i.i.d. draws.
  Matrix sample(Eigen::Index n, Rng& rng) const {
    Matrix u(n, dim_);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> norm(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    switch (kind_) {
      case CopulaKind::Independence:
        for (Eigen::Index r = 0; r < n; ++r)
          for (int c = 0; c < dim_; ++c) u(r, c) = unif(rng);
        break;
      case CopulaKind::Clayton:
      case CopulaKind::SurvivalClayton: {
        // Marshall-Olkin: frailty V ~ Gamma(1/theta), U_i = psi(E_i / V).
        std::gamma_distribution<double> frailty(1.0 / theta_, 1.0);
        for (Eigen::Index r = 0; r < n; ++r) {
          const double v = frailty(rng);
          for (int c = 0; c < dim_; ++c) {
            const double ui = std::exp(-std::log1p(expo(rng) / v) / theta_);
            u(r, c) = kind_ == CopulaKind::Clayton ? ui : 1.0 - ui;
          }
        }
        break;
      }
      case CopulaKind::Gaussian: {
        Vector e(dim_);
        for (Eigen::Index r = 0; r < n; ++r) {
          for (int c = 0; c < dim_; ++c) e(c) = norm(rng);
          const Vector z = chol_ * e;
          for (int c = 0; c < dim_; ++c) u(r, c) = std_normal_cdf(z(c));
        }
        break;
      }
      case CopulaKind::StudentT: {
        std::chi_squared_distribution<double> chi2(dof_);
        Vector e(dim_);
        for (Eigen::Index r = 0; r < n; ++r) {
          for (int c = 0; c < dim_; ++c) e(c) = norm(rng);
          const double w = std::sqrt(chi2(rng) / dof_);
          const Vector z = chol_ * e / w;
          for (int c = 0; c < dim_; ++c) u(r, c) = boost::math::cdf(t_, z(c));
        }
        break;
      }
    }
    return u.unaryExpr([](double x) { return clamp_prob(x); });
  }

 private:
  CopulaModel(CopulaKind kind, int dim) : kind_(kind), dim_(dim) {}

  static void check_dim(int dim) {
    if (dim < 2) throw ConfigError("copula dimension must be >= 2");
  }

  void check_index(int j, const Vector& u_rest) const {
    if (j < 0 || j >= dim_) throw DomainError("copula index out of range");
    if (u_rest.size() != dim_ - 1) throw DomainError("conditioning vector must have d-1 entries");
  }

  Vector interior(const Vector& u) const {
    if (u.size() != dim_ && u.size() != dim_ - 1) throw DomainError("copula argument has wrong length");
    Vector out(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      if (!(u(i) > 0.0 && u(i) < 1.0)) {
        throw DomainError("copula argument u_" + std::to_string(i) + " = " + std::to_string(u(i)) +
                          " not in (0,1)");
      }
      out(i) = clamp_prob(u(i));
    }
    return out;
  }

  void set_correlation(const Matrix& r) {
    check_dim(static_cast<int>(r.rows()));
    if (r.rows() != r.cols()) throw ConfigError("correlation matrix must be square");
    if (!r.isApprox(r.transpose(), 1e-12)) throw ConfigError("correlation matrix must be symmetric");
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      if (std::abs(r(i, i) - 1.0) > 1e-12) throw ConfigError("correlation matrix needs unit diagonal");
    }
    Eigen::LLT<Matrix> llt(r);
    if (llt.info() != Eigen::Success) throw ConfigError("correlation matrix must be positive definite");
    corr_ = r;
    chol_ = llt.matrixL();
    precision_ = llt.solve(Matrix::Identity(dim_, dim_));
    log_det_ = 2.0 * chol_.diagonal().array().log().sum();
    if (kind_ == CopulaKind::StudentT) {
      const double nu = dof_, d = dim_;
      t_ = boost::math::students_t_distribution<double>(nu);
      t_cond_ = boost::math::students_t_distribution<double>(nu + d - 1.0);
      t_const_ = std::lgamma(0.5 * (nu + d)) + (d - 1.0) * std::lgamma(0.5 * nu) -
                 d * std::lgamma(0.5 * (nu + 1.0)) - 0.5 * log_det_;
    }
  }

  // Clayton family ---------------------------------------------------------

  double clayton_log_density(const Vector& u) const {
    const double th = theta_, d = dim_;
    double s = 1.0 - d, log_sum = 0.0, c = 0.0;
    for (int i = 0; i < dim_; ++i) {
      const double lu = std::log(u(i));
      s += std::exp(-th * lu);
      log_sum += lu;
      c += std::log1p(i * th);
    }
    return c - (th + 1.0) * log_sum - (1.0 / th + d) * std::log(s);
  }

  Vector clayton_grad(const Vector& u) const {
    const double th = theta_, d = dim_;
    double s = 1.0 - d;
    for (int i = 0; i < dim_; ++i) s += std::pow(u(i), -th);
    Vector g(dim_);
    for (int j = 0; j < dim_; ++j) {
      g(j) = -(th + 1.0) / u(j) + (1.0 + d * th) * std::pow(u(j), -th - 1.0) / s;
    }
    return g;
  }

  // A = 1 + sum_{i != j} (u_i^-theta - 1); C_{j|-j} = (1 + (u_j^-theta - 1)/A)^-(1/theta + d - 1).
  double clayton_a(const Vector& u_rest) const {
    double a = 1.0;
    for (Eigen::Index i = 0; i < u_rest.size(); ++i) a += std::expm1(-theta_ * std::log(u_rest(i)));
    return a;
  }

  double clayton_h(double u_j, const Vector& u_rest) const {
    const double expo = 1.0 / theta_ + dim_ - 1.0;
    const double t = std::expm1(-theta_ * std::log(u_j)) / clayton_a(u_rest);
    return std::exp(-expo * std::log1p(t));
  }

  double clayton_h_inv(double p, const Vector& u_rest) const {
    const double expo = 1.0 / theta_ + dim_ - 1.0;
    const double t = clayton_a(u_rest) * std::expm1(-std::log(p) / expo);
    return clamp_prob(std::exp(-std::log1p(t) / theta_));
  }

  // Elliptical family ------------------------------------------------------

  static double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / M_SQRT2); }
  static double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
  double normal_score(double u) const { return boost::math::quantile(std_normal_, u); }
  double t_score(double u) const { return boost::math::quantile(t_, u); }

  Vector normal_scores(const Vector& u) const {
    return u.unaryExpr([this](double x) { return normal_score(x); });
  }
  Vector t_scores(const Vector& u) const {
    return u.unaryExpr([this](double x) { return t_score(x); });
  }

  // Conditional mean and variance of Z_j given Z_-j = z_rest, via the precision matrix.
  std::pair<double, double> elliptical_conditional(int j, const Vector& z_rest, double* quad_rest) const {
    const double pjj = precision_(j, j);
    double acc = 0.0;
    for (int i = 0, k = 0; i < dim_; ++i) {
      if (i == j) continue;
      acc += precision_(j, i) * z_rest(k++);
    }
    const double mu = -acc / pjj;
    if (quad_rest != nullptr) {
      double q = 0.0;
      for (int a = 0, ka = 0; a < dim_; ++a) {
        if (a == j) continue;
        for (int b = 0, kb = 0; b < dim_; ++b) {
          if (b == j) continue;
          q += z_rest(ka) * precision_(a, b) * z_rest(kb);
          ++kb;
        }
        ++ka;
      }
      *quad_rest = q - pjj * mu * mu;
    }
    return {mu, 1.0 / pjj};
  }

  std::pair<double, double> normal_conditional(int j, const Vector& u_rest) const {
    const auto [mu, var] = elliptical_conditional(j, normal_scores(u_rest), nullptr);
    return {mu, std::sqrt(var)};
  }

  std::pair<double, double> t_conditional(int j, const Vector& u_rest) const {
    double q = 0.0;
    const auto [mu, var] = elliptical_conditional(j, t_scores(u_rest), &q);
    const double scale2 = var * (dof_ + q) / (dof_ + dim_ - 1.0);
    return {mu, std::sqrt(scale2)};
  }

  CopulaKind kind_;
  int dim_;
  double theta_ = 0.0;
  double dof_ = 0.0;
  Matrix corr_;
  Matrix chol_;
  Matrix precision_;
  double log_det_ = 0.0;
  double t_const_ = 0.0;
  boost::math::normal_distribution<double> std_normal_{0.0, 1.0};
  boost::math::students_t_distribution<double> t_{1.0};
  boost::math::students_t_distribution<double> t_cond_{1.0};
};

}  // namespace sysrisk
