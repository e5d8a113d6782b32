#include "sysrisk/gibbs_engine.hpp"
#include "sysrisk/mc_engine.hpp"
#include "test_util.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <catch_amalgamated.hpp>

#include <cmath>

using namespace sysrisk;
using Catch::Approx;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector v1(double a) { return Vector::Constant(1, a); }

JointLossModel exp2() {
  const auto e = MarginalModel::gpd(0.0, 1.0);
  return JointLossModel({e, e}, CopulaModel::independence(2));
}

JointLossModel gpd2() {
  const auto g = MarginalModel::gpd(0.3, 1.0);
  return JointLossModel({g, g}, CopulaModel::independence(2));
}

}  // namespace

TEST_CASE("truncated full conditional sampling", "[gibbs]") {
  // X1 ~ Exp(1) restricted to x1 + 0.3 >= 1: the median of the truncated law is 0.7 + log 2.
  const BandEvent band(Vector::Ones(2), 1.0, kInf);
  CHECK(full_conditional_sample(exp2(), 0, v1(0.3), band, 0.5) == Approx(0.7 + std::log(2.0)).epsilon(1e-12));

  // Two-sided slice: result stays inside and inverts the truncated cdf.
  const BandEvent two(Vector::Ones(2), 1.0, 2.0);
  for (double u : {0.0, 0.1, 0.5, 0.9, 0.999999}) {
    const double x = full_conditional_sample(exp2(), 1, v1(0.3), two, u);
    CHECK(x >= 0.7);
    CHECK(x <= 1.7);
    const double c_lo = 1 - std::exp(-0.7), c_hi = 1 - std::exp(-1.7);
    CHECK((1 - std::exp(-x) - c_lo) / (c_hi - c_lo) == Approx(u).margin(1e-9));
  }

  // The conditioning point may rule out the whole slice.
  const BandEvent zero_h((Vector(2) << 0.0, 1.0).finished(), 1.0, 2.0);
  CHECK_THROWS_AS(full_conditional_sample(exp2(), 0, v1(5.0), zero_h, 0.5), DomainError);
  CHECK(full_conditional_sample(exp2(), 0, v1(1.5), zero_h, 0.5) == Approx(std::log(2.0)));

  const BandEvent sliver(Vector::Ones(2), 10.0, std::nextafter(10.0, 11.0));
  CHECK_THROWS_AS(full_conditional_sample(exp2(), 0, v1(5.0), sliver, 0.5), DegenerateSlice);
}

TEST_CASE("unconstrained slices reduce to the full conditional", "[gibbs]") {
  const auto m1 = presets::m1();
  const BandEvent all(Vector::Ones(3), -kInf, kInf);
  const Vector rest = (Vector(2) << 1.0, 2.0).finished();
  Rng rng(1);
  std::uniform_real_distribution<double> unif;
  Vector draws(4000);
  for (auto& x : draws) x = full_conditional_sample(m1, 1, rest, all, unif(rng));
  const auto cond = m1.conditional(1, rest);
  const double d = testing::ks_statistic(draws, [&](double x) { return cond.cdf(x); });
  CHECK(d < 1.63 / std::sqrt(4000.0));
}

TEST_CASE("slice draws follow the truncated conditional cdf on M1", "[gibbs]") {
  const auto m1 = presets::m1();
  const BandEvent band(Vector::Ones(3), 12.0, 30.0);
  const Vector rest = (Vector(2) << 2.0, 4.0).finished();
  const auto cond = m1.conditional(0, rest);
  const double c_lo = cond.cdf(6.0), c_hi = cond.cdf(24.0);
  Rng rng(2);
  std::uniform_real_distribution<double> unif;
  Vector draws(10000);
  for (auto& x : draws) x = full_conditional_sample(m1, 0, rest, band, unif(rng));
  std::vector<double> sorted(draws.data(), draws.data() + draws.size());
  std::sort(sorted.begin(), sorted.end());
  double sup = 0.0;
  for (int g = 0; g <= 200; ++g) {
    const double x = 6.0 + 18.0 * g / 200.0;
    const double ecdf = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) / 10000.0;
    sup = std::max(sup, std::abs(ecdf - (cond.cdf(x) - c_lo) / (c_hi - c_lo)));
  }
  CHECK(sup < 0.02);
  CHECK(draws.minCoeff() >= 6.0);
  CHECK(draws.maxCoeff() <= 24.0);
}

TEST_CASE("negative band coefficients swap the slice bounds", "[gibbs][property]") {
  Matrix r(2, 2);
  r << 1.0, 0.4, 0.4, 1.0;
  Matrix r_flip = r;
  r_flip(0, 1) = r_flip(1, 0) = -0.4;
  const JointLossModel model({MarginalModel::normal(0.5, 1.0), MarginalModel::normal(0.0, 2.0)}, CopulaModel::gaussian(r));
  const JointLossModel flipped({MarginalModel::normal(-0.5, 1.0), MarginalModel::normal(0.0, 2.0)},
                               CopulaModel::gaussian(r_flip));
  const BandEvent band(Vector::Ones(2), 1.0, 3.0);
  const BandEvent band_flip((Vector(2) << -1.0, 1.0).finished(), 1.0, 3.0);
  Rng rng(6);
  std::uniform_real_distribution<double> unif(0.01, 0.99);
  for (int rep = 0; rep < 100; ++rep) {
    const Vector rest = v1(4 * unif(rng) - 1);
    const double u = unif(rng);
    const double x = full_conditional_sample(model, 0, rest, band, u);
    const double y = full_conditional_sample(flipped, 0, rest, band_flip, 1.0 - u);
    CHECK(y == Approx(-x).margin(1e-8));
  }
}

TEST_CASE("selection probabilities", "[gibbs]") {
  CHECK(select_probs(Matrix::Identity(3, 3)).isApprox(Vector::Constant(3, 1.0 / 3)));
  for (int d : {2, 4, 7}) CHECK(select_probs(equicorrelation(d, 0.35)).isApprox(Vector::Constant(d, 1.0 / d)));

  Matrix cov(3, 3);
  cov << 2.0, 0.3, 0.5, 0.3, 1.0, -0.2, 0.5, -0.2, 4.0;
  const Vector p = select_probs(cov);
  CHECK(p.sum() == Approx(1.0));
  CHECK(select_probs(7.5 * cov).isApprox(p, 1e-12));
  const Vector cond_var = cov.inverse().diagonal().cwiseInverse();
  CHECK(p.isApprox(cond_var / cond_var.sum(), 1e-12));

  Eigen::PermutationMatrix<3> perm;
  perm.indices() << 2, 0, 1;
  const Matrix cov_p = perm * cov * perm.transpose();
  CHECK(select_probs(cov_p).isApprox(perm * p, 1e-12));

  CHECK_THROWS_AS(select_probs(Matrix::Ones(3, 3)), SamplerError);
}

TEST_CASE("thinning interval", "[gibbs]") {
  Rng rng(3);
  std::normal_distribution<double> z;
  Matrix iid(100, 3);
  for (Eigen::Index i = 0; i < iid.size(); ++i) iid.data()[i] = z(rng);
  const auto t = thin_interval(iid, 0.15);
  CHECK(t.thin == 1);
  CHECK_FALSE(t.capped);

  Matrix frozen = iid;
  frozen.col(1).setConstant(2.0);
  const auto f = thin_interval(frozen, 0.15);
  CHECK(f.thin == 25);
  CHECK(f.capped);

  Matrix trend(100, 2);
  for (int i = 0; i < 100; ++i) trend.row(i) << i + 0.1 * z(rng), -i + 0.1 * z(rng);
  CHECK(thin_interval(trend, 0.15).capped);

  CHECK_THROWS_AS(thin_interval(iid.topRows(49), 0.15), ConfigError);
}

TEST_CASE("random scan Gibbs sampler", "[gibbs]") {
  const auto m1 = presets::m1();
  const BandEvent band(Vector::Ones(3), 20.0, 40.0);
  GibbsParams params;
  params.p = Vector::Constant(3, 1.0 / 3);
  params.thin = 4;
  const Vector x0 = Vector::Constant(3, 10.0);
  const auto run = rsgs_sample(m1, band, params, x0, 2000, 17);
  CHECK(run.path.samples.rows() == 2000);
  CHECK(run.diagnostics.coordinate_updated.size() == 8000u + run.diagnostics.degenerate_slices);
  for (Eigen::Index r = 0; r < 2000; ++r) {
    const Vector x = run.path.samples.row(r).transpose();
    CHECK(band.contains(x));
    CHECK((x.array() >= 0.0).all());
  }
  CHECK(rsgs_sample(m1, band, params, x0, 50, 17).path.samples == run.path.samples.topRows(50));

  CHECK_THROWS_AS(rsgs_sample(m1, band, params, Vector::Constant(3, 1.0), 10, 1), ConfigError);
  GibbsParams bad = params;
  bad.p = Vector::Constant(3, 0.5);
  CHECK_THROWS_AS(rsgs_sample(m1, band, bad, x0, 10, 1), ConfigError);

  const BandEvent sliver(Vector::Ones(3), 30.0, std::nextafter(30.0, 31.0));
  CHECK_THROWS_AS(rsgs_sample(m1, sliver, params, x0, 10, 1), SamplerError);
}

TEST_CASE("a single-site update preserves the target distribution", "[gibbs][property]") {
  // Target draws from plain MC; one update each; compare 2-D histograms.
  const auto model = gpd2();
  int passes = 0;
  for (int seed = 0; seed < 20; ++seed) {
    McRunConfig cfg;
    cfg.n = 20000;
    cfg.seed = 1000 + seed;
    cfg.spec = CrisisEventSpec::rvar(0.5, 0.9);
    cfg.measures = std::vector<MarginalRiskMeasure>(2, MarginalRiskMeasure::mean());
    const auto mc = mc_allocate(model, cfg);
    const BandEvent band = band_event(mc.event);
    const Matrix& before = mc.conditional_sample;
    Matrix after = before;
    Rng rng(seed);
    std::uniform_real_distribution<double> unif;
    for (Eigen::Index r = 0; r < after.rows(); ++r) {
      const int j = unif(rng) < 0.5 ? 0 : 1;
      Vector x = after.row(r).transpose();
      x(j) = full_conditional_sample(model, j, drop(x, j), band, unif(rng));
      after.row(r) = x.transpose();
    }
    // 4 x 4 bins from quartiles of the first coordinate and of the share x1 / (x1 + x2).
    auto bin = [&](const Matrix& m, const std::vector<double>& q1, const std::vector<double>& q2) {
      std::vector<double> counts(16, 0.0);
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double a = m(r, 0), b = m(r, 0) / (m(r, 0) + m(r, 1));
        const int i = static_cast<int>(std::upper_bound(q1.begin(), q1.end(), a) - q1.begin());
        const int k = static_cast<int>(std::upper_bound(q2.begin(), q2.end(), b) - q2.begin());
        counts[4 * i + k] += 1.0;
      }
      return counts;
    };
    const Vector c0 = before.col(0);
    const Vector share = before.col(0).cwiseQuotient(before.rowwise().sum());
    std::vector<double> q1, q2;
    for (double a : {0.25, 0.5, 0.75}) {
      q1.push_back(empirical_quantile(c0, a));
      q2.push_back(empirical_quantile(share, a));
    }
    const auto h0 = bin(before, q1, q2), h1 = bin(after, q1, q2);
    double chi2 = 0.0;
    int cells = 0;
    for (int c = 0; c < 16; ++c) {
      const double tot = h0[c] + h1[c];
      if (tot == 0.0) continue;
      chi2 += (h0[c] - h1[c]) * (h0[c] - h1[c]) / tot;
      ++cells;
    }
    const double pval = 1.0 - boost::math::cdf(boost::math::chi_squared_distribution<double>(cells - 1), chi2);
    passes += pval > 0.01;
  }
  CHECK(passes >= 19);
}

TEST_CASE("Gibbs heuristic on M1 with an ES event", "[gibbs]") {
  const auto m1 = presets::m1();
  McRunConfig cfg;
  cfg.n = 100000;
  cfg.seed = 31;
  cfg.spec = CrisisEventSpec::es(0.99);
  cfg.measures = std::vector<MarginalRiskMeasure>(3, MarginalRiskMeasure::mean());
  const auto mc = mc_allocate(m1, cfg);
  const BandEvent band = band_event(mc.event);
  const Vector x0 = mc.conditional_sample.colwise().mean().transpose();
  const auto h = gibbs_heuristic(m1, band, mc.conditional_sample, x0, 5);
  CHECK(h.params.p.sum() == Approx(1.0));
  CHECK(h.prerun.rows() == 100);
  CHECK(h.params.thin >= 1);
  CHECK(h.params.thin <= 25);
  CHECK(band.contains(h.start));
}

TEST_CASE("selection probabilities on the M1 ES event centre on the uniform split", "[gibbs][property]") {
  // M1 is exchangeable, so the population probabilities are 1/3 each; single
  // presample estimates scatter widely because the GPD(0.3) tail has no fourth moment.
  const auto m = presets::m1();
  std::vector<std::vector<double>> per_coord(3);
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const auto pre = mc_presample(m, 100000, seed);
    const auto ev = estimate_event(CrisisEventSpec::es(0.99), pre.sample, m.support_class());
    const Vector p = select_probs(sample_covariance(select_rows(pre.sample, ev)));
    CHECK(p.sum() == Approx(1.0));
    for (int j = 0; j < 3; ++j) per_coord[j].push_back(p(j));
  }
  for (auto& v : per_coord) {
    std::nth_element(v.begin(), v.begin() + 7, v.end());
    CHECK(std::abs(v[7] - 1.0 / 3.0) <= 0.03);
  }
}
