#include "sysrisk/joint_model.hpp"
#include "test_util.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <catch_amalgamated.hpp>

#include <cmath>

using namespace sysrisk;
using Catch::Approx;

namespace {

double bisect_quantile(const MarginalModel& m, double u, double hi) {
  double lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (m.cdf(mid) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double clayton_cdf2(double u, double v, double theta) {
  return std::pow(std::pow(u, -theta) + std::pow(v, -theta) - 1.0, -1.0 / theta);
}

std::vector<CopulaModel> copula_suite() {
  Matrix r(3, 3);
  r << 1.0, 0.4, -0.2, 0.4, 1.0, 0.3, -0.2, 0.3, 1.0;
  return {CopulaModel::independence(3), CopulaModel::clayton(3, 2.0), CopulaModel::survival_clayton(3, 2.0),
          CopulaModel::clayton(2, 0.512), CopulaModel::gaussian(r), CopulaModel::student_t(5.0, r),
          CopulaModel::student_t(6.0, equicorrelation(5, 1.0 / 12.0))};
}

}  // namespace

TEST_CASE("GPD and Pareto closed forms", "[marginal]") {
  const auto gpd = MarginalModel::gpd(0.3, 1.0);
  CHECK(gpd.cdf(0.0) == 0.0);
  CHECK(gpd.quantile(0.99) == Approx(9.936905685116571).epsilon(1e-12));
  CHECK(bisect_quantile(gpd, 0.99, 1e3) == Approx(gpd.quantile(0.99)).epsilon(1e-10));

  const auto par = MarginalModel::pareto(14036.0, 1.122);
  CHECK(par.quantile(0.99) == Approx(836660.3194729071).epsilon(1e-12));
  CHECK(bisect_quantile(par, 0.99, 1e8) == Approx(par.quantile(0.99)).epsilon(1e-9));
  CHECK(par.cdf(par.quantile(0.3)) == Approx(0.3).epsilon(1e-12));
}

TEST_CASE("marginal derivatives and moments", "[marginal]") {
  for (const auto& m : {MarginalModel::gpd(0.3, 1.0), MarginalModel::pareto(2.0, 3.0),
                        MarginalModel::student_t(5.0, 0.5, 2.0), MarginalModel::normal(1.0, 2.0)}) {
    for (double u : {0.1, 0.5, 0.9}) {
      const double x = m.quantile(u);
      const double h = 1e-6 * std::max(1.0, std::abs(x));
      CHECK(m.dlogpdf(x) == Approx((m.logpdf(x + h) - m.logpdf(x - h)) / (2 * h)).epsilon(1e-6).margin(1e-8));
      CHECK(m.pdf(x) == Approx((m.cdf(x + h) - m.cdf(x - h)) / (2 * h)).epsilon(1e-6));
      CHECK(m.eval(x, MarginalQuantity::Cdf) == Approx(u).epsilon(1e-12));
    }
  }
  CHECK(*MarginalModel::gpd(0.3, 1.0).mean() == Approx(1.0 / 0.7));
  CHECK_FALSE(MarginalModel::gpd(1.2, 1.0).mean().has_value());
}

TEST_CASE("marginal domain and parameter errors", "[marginal]") {
  const auto gpd = MarginalModel::gpd(0.3, 1.0);
  CHECK_THROWS_AS(gpd.cdf(-1.0), DomainError);
  CHECK_THROWS_AS(gpd.pdf(-0.5), DomainError);
  CHECK_THROWS_AS(gpd.quantile(0.0), DomainError);
  CHECK_THROWS_AS(gpd.quantile(1.0), DomainError);
  CHECK(gpd.cdf_extended(-3.0) == 0.0);
  CHECK(gpd.cdf_extended(std::numeric_limits<double>::infinity()) == 1.0);
  CHECK_THROWS_AS(MarginalModel::gpd(0.3, 0.0), ConfigError);
  CHECK_THROWS_AS(MarginalModel::gpd(-0.1, 1.0), ConfigError);
  CHECK_THROWS_AS(MarginalModel::pareto(-1.0, 2.0), ConfigError);
  CHECK_THROWS_AS(MarginalModel::student_t(0.0), ConfigError);
  CHECK_THROWS_AS(MarginalModel::normal(0.0, -1.0), ConfigError);
}

TEST_CASE("copula densities", "[copula]") {
  const Vector u = (Vector(3) << 0.2, 0.7, 0.4).finished();
  CHECK(CopulaModel::independence(3).density(u) == 1.0);

  const auto c = CopulaModel::clayton(3, 2.0);
  const auto s = CopulaModel::survival_clayton(3, 2.0);
  CHECK(s.log_density(u) == Approx(c.log_density(Vector::Ones(3) - u)).epsilon(1e-14));

  const auto c2 = CopulaModel::clayton(2, 2.0);
  const Vector half = Vector::Constant(2, 0.5);
  CHECK(c2.density(half) == Approx(1.481003649342278).epsilon(1e-12));
  const double h = 1e-4;
  const double mixed = (clayton_cdf2(0.5 + h, 0.5 + h, 2) - clayton_cdf2(0.5 + h, 0.5 - h, 2) -
                        clayton_cdf2(0.5 - h, 0.5 + h, 2) + clayton_cdf2(0.5 - h, 0.5 - h, 2)) /
                       (4 * h * h);
  CHECK(c2.density(half) == Approx(mixed).epsilon(1e-6));

  CHECK_THROWS_AS(c.log_density((Vector(3) << 0.0, 0.5, 0.5).finished()), DomainError);
  CHECK_THROWS_AS(c.log_density((Vector(3) << 0.5, 1.0, 0.5).finished()), DomainError);
  CHECK_THROWS_AS(CopulaModel::clayton(3, 0.0), ConfigError);
  Matrix bad = equicorrelation(3, 0.5);
  bad(0, 1) = 0.6;
  CHECK_THROWS_AS(CopulaModel::gaussian(bad), ConfigError);
  CHECK_THROWS_AS(CopulaModel::gaussian(equicorrelation(3, -0.6)), ConfigError);
}

TEST_CASE("copula log-density gradients", "[copula]") {
  CHECK(CopulaModel::independence(3).grad_log_density(Vector::Constant(3, 0.3)).isZero(0.0));
  CHECK(CopulaModel::gaussian(Matrix::Identity(3, 3)).grad_log_density(Vector::Constant(3, 0.3)).norm() < 1e-14);

  Rng rng(7);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  for (const auto& c : copula_suite()) {
    for (int rep = 0; rep < 10; ++rep) {
      Vector u(c.dim());
      for (int j = 0; j < c.dim(); ++j) u(j) = unif(rng);
      const Vector g = c.grad_log_density(u);
      const Vector fd = testing::central_difference([&](const Vector& v) { return c.log_density(v); }, u, 1e-6);
      CHECK((g - fd).norm() <= 1e-5 * std::max(1.0, g.norm()));
    }
  }
}

TEST_CASE("copula h-functions", "[copula]") {
  const Vector rest1 = Vector::Constant(1, 0.5);
  CHECK(CopulaModel::independence(2).hfun(0, 0.37, rest1) == 0.37);
  CHECK(CopulaModel::independence(2).hfun_inv(0, 0.37, rest1) == 0.37);
  CHECK(CopulaModel::gaussian(Matrix::Identity(2, 2)).hfun_inv(0, 0.37, rest1) == Approx(0.37).epsilon(1e-12));

  const auto c2 = CopulaModel::clayton(2, 2.0);
  CHECK(c2.hfun(0, 0.5, rest1) == Approx(0.4319593977248311).epsilon(1e-12));
  const double h = 1e-6;
  CHECK(c2.hfun(0, 0.5, rest1) ==
        Approx((clayton_cdf2(0.5, 0.5 + h, 2) - clayton_cdf2(0.5, 0.5 - h, 2)) / (2 * h)).epsilon(1e-7));
  CHECK(c2.hfun_inv(0, 0.4319593977248311, rest1) == Approx(0.5).epsilon(1e-10));

  const auto s3 = CopulaModel::survival_clayton(3, 2.0);
  const auto c3 = CopulaModel::clayton(3, 2.0);
  const Vector rest2 = (Vector(2) << 0.3, 0.8).finished();
  for (double uj : {0.1, 0.45, 0.9}) {
    CHECK(s3.hfun(1, uj, rest2) == Approx(1.0 - c3.hfun(1, 1.0 - uj, Vector::Ones(2) - rest2)).epsilon(1e-14));
    // Rotating twice gives the original copula back.
    const double twice = 1.0 - (1.0 - c3.hfun(1, uj, rest2));
    CHECK(std::abs(1.0 - s3.hfun(1, 1.0 - uj, Vector::Ones(2) - rest2) - twice) <= 1e-12);
  }
}

TEST_CASE("h-function roundtrip and monotonicity on random grids", "[copula][property]") {
  Rng rng(11);
  std::uniform_real_distribution<double> unif(0.01, 0.99);
  for (const auto& c : copula_suite()) {
    for (int j = 0; j < c.dim(); ++j) {
      for (int a = 0; a < 10; ++a) {
        Vector rest(c.dim() - 1);
        for (int k = 0; k < rest.size(); ++k) rest(k) = unif(rng);
        double prev = -1.0;
        for (int b = 0; b < 10; ++b) {
          const double p = unif(rng);
          const double u = c.hfun_inv(j, p, rest);
          CHECK(std::abs(c.hfun(j, u, rest) - p) <= 1e-8);
          const double grid_u = (b + 0.5) / 10.0;
          const double hv = c.hfun(j, grid_u, rest);
          CHECK(hv >= prev);
          CHECK(hv >= 0.0);
          CHECK(hv <= 1.0);
          prev = hv;
        }
      }
    }
  }
}

TEST_CASE("joint log-density", "[joint]") {
  const JointLossModel indep({MarginalModel::gpd(0.3, 1.0), MarginalModel::gpd(0.3, 1.0)},
                             CopulaModel::independence(2));
  CHECK(indep.logpdf(Vector::Zero(2)) == Approx(0.0).margin(1e-15));
  CHECK(indep.logpdf((Vector(2) << -1.0, 1.0).finished()) == -std::numeric_limits<double>::infinity());
  CHECK(indep.support_class() == SupportClass::PureLosses);
  CHECK(presets::m2().support_class() == SupportClass::ProfitAndLoss);

  const auto m1 = presets::m1();
  const Vector x = (Vector(3) << 0.8, 2.5, 1.1).finished();
  double direct = m1.copula().density((Vector(3) << m1.marginal(0).cdf(x(0)), m1.marginal(1).cdf(x(1)),
                                       m1.marginal(2).cdf(x(2))).finished());
  for (int j = 0; j < 3; ++j) direct *= m1.marginal(j).pdf(x(j));
  CHECK(std::exp(m1.logpdf(x)) == Approx(direct).epsilon(1e-12));

  CHECK(presets::m2().logpdf(Vector::Zero(3)) == Approx(-2.2587313443987185).epsilon(1e-12));

  CHECK_THROWS_AS(JointLossModel({MarginalModel::gpd(0.3, 1.0)}, CopulaModel::independence(2)), ConfigError);
  CHECK_THROWS_AS(presets::by_name("M9"), ConfigError);
}

TEST_CASE("joint gradient", "[joint]") {
  const JointLossModel indep({MarginalModel::gpd(0.3, 1.0), MarginalModel::pareto(2.0, 3.0)},
                             CopulaModel::independence(2));
  const Vector x = (Vector(2) << 0.7, 1.9).finished();
  const Vector g = indep.grad_logpdf(x);
  CHECK(g(0) == Approx(indep.marginal(0).dlogpdf(0.7)));
  CHECK(g(1) == Approx(indep.marginal(1).dlogpdf(1.9)));
  CHECK_THROWS_AS(indep.grad_logpdf((Vector(2) << -0.1, 1.0).finished()), DomainError);

  const Vector sym = Vector::Constant(3, 1.7);
  const Vector gs = presets::m1().grad_logpdf(sym);
  CHECK(gs(0) == Approx(gs(1)).epsilon(1e-13));
  CHECK(gs(1) == Approx(gs(2)).epsilon(1e-13));
}

TEST_CASE("gradient consistency with central differences on every preset", "[joint][property]") {
  for (const auto& name : presets::names()) {
    const auto model = presets::by_name(name);
    Rng rng(3);
    const Matrix pts = model.sample(100, rng);
    Vector scale(model.dim());
    for (int j = 0; j < model.dim(); ++j) {
      scale(j) = model.marginal(j).quantile(0.75) - model.marginal(j).quantile(0.25);
    }
    for (Eigen::Index r = 0; r < pts.rows(); ++r) {
      const Vector x = pts.row(r).transpose();
      const Vector g = model.grad_logpdf(x);
      Vector fd(model.dim());
      for (int j = 0; j < model.dim(); ++j) {
        double h = 1e-5 * scale(j);
        if (model.marginal(j).support() == Support::NonNegative) h = std::min(h, 0.5 * x(j));
        Vector xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        fd(j) = (model.logpdf(xp) - model.logpdf(xm)) / (2 * h);
      }
      INFO(name << " at row " << r);
      CHECK(((g - fd).cwiseProduct(scale)).norm() <= 1e-5 * std::max(1.0, g.cwiseProduct(scale).norm()));
    }
  }
}

TEST_CASE("joint sampling", "[joint][sampling]") {
  Rng rng(2024);
  const auto m1 = presets::m1();
  const Matrix x = m1.sample(100000, rng);
  for (int j = 0; j < 3; ++j) {
    const Vector col = x.col(j);
    CHECK(testing::ks_statistic(col, [&](double v) { return m1.marginal(j).cdf(v); }) < 0.01);
  }
  const Matrix xs = x.topRows(20000);
  CHECK(testing::kendall_tau(xs.col(0), xs.col(1)) == Approx(0.5).margin(0.02));

  const JointLossModel indep({MarginalModel::normal(), MarginalModel::normal(), MarginalModel::normal()},
                             CopulaModel::independence(3));
  Rng rng2(5);
  const Matrix y = indep.sample(20000, rng2);
  CHECK(testing::kendall_tau(y.col(0), y.col(2)) == Approx(0.0).margin(0.02));

  Rng a(99), b(99);
  CHECK(m1.sample(50, a) == m1.sample(50, b));
}

TEST_CASE("full conditional distributions", "[joint][conditional]") {
  const JointLossModel indep({MarginalModel::gpd(0.3, 1.0), MarginalModel::gpd(0.3, 1.0)},
                             CopulaModel::independence(2));
  const Vector rest = Vector::Constant(1, 2.0);
  for (double v : {0.1, 1.0, 5.0}) CHECK(indep.full_conditional_cdf(0, rest, v) == Approx(indep.marginal(0).cdf(v)));

  Rng rng(8);
  std::uniform_real_distribution<double> unif(0.02, 0.98);
  for (const auto& name : presets::names()) {
    const auto model = presets::by_name(name);
    const Matrix pts = model.sample(10, rng);
    for (int j = 0; j < model.dim(); ++j) {
      for (Eigen::Index r = 0; r < pts.rows(); ++r) {
        const Vector xr = drop(Vector(pts.row(r).transpose()), j);
        const auto cond = model.conditional(j, xr);
        const double xj = model.marginal(j).quantile(unif(rng));
        CHECK(cond.quantile(cond.cdf(xj)) == Approx(xj).epsilon(1e-8).margin(1e-8));
      }
    }
  }

  // Quadrature oracle for M1, first coordinate given (1, 1).
  const auto m1 = presets::m1();
  auto dens = [&](double t) { return std::exp(m1.logpdf((Vector(3) << t, 1.0, 1.0).finished())); };
  const double total = boost::math::quadrature::exp_sinh<double>().integrate(dens);
  const Vector r11 = Vector::Constant(2, 1.0);
  for (double v : {0.25, 1.0, 2.0, 6.0}) {
    const double part = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(dens, 0.0, v, 15, 1e-12);
    CHECK(m1.full_conditional_cdf(0, r11, v) == Approx(part / total).margin(1e-4));
  }
}

TEST_CASE("density normalisation for two-dimensional models", "[joint][property]") {
  const JointLossModel gpd2({MarginalModel::gpd(0.3, 1.0), MarginalModel::gpd(0.3, 1.0)},
                            CopulaModel::survival_clayton(2, 2.0));
  for (const auto& model : {presets::m3(), gpd2}) {
    // Trapezoid rule on a grid placed at marginal quantiles covering 0.9995 per axis.
    const int n = 600;
    std::vector<double> g0(n + 1), g1(n + 1);
    for (int i = 0; i <= n; ++i) {
      const double u = 0.9995 * i / n;
      g0[i] = i == 0 ? 0.0 : model.marginal(0).quantile(u);
      g1[i] = i == 0 ? 0.0 : model.marginal(1).quantile(u);
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        double f = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            f += std::exp(model.logpdf((Vector(2) << g0[i + a], g1[k + b]).finished()));
        total += 0.25 * f * (g0[i + 1] - g0[i]) * (g1[k + 1] - g1[k]);
      }
    }
    CHECK(total == Approx(1.0).margin(1e-2));
  }
}
