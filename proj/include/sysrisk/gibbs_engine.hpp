#pragma once

#include "sysrisk/core.hpp"
#include "sysrisk/crisis_event.hpp"
#include "sysrisk/hmc_engine.hpp"
#include "sysrisk/joint_model.hpp"
#include "sysrisk/risk_measures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace sysrisk {

/// v1 <= h . x <= v2.
struct BandEvent {
  Vector h;
  double v1 = -std::numeric_limits<double>::infinity();
  double v2 = std::numeric_limits<double>::infinity();

  BandEvent() = default;
  BandEvent(Vector normal, double lower, double upper) : h(std::move(normal)), v1(lower), v2(upper) {
    if (h.size() == 0 || h.isZero(0.0)) throw ConfigError("band normal h must be nonzero");
    if (!(v1 < v2)) throw ConfigError("band requires v1 < v2");
  }

  bool contains(const Vector& x, double tol = 0.0) const {
    const double s = h.dot(x);
    return s >= v1 - tol && s <= v2 + tol;
  }
};

/// Band representation of an RVaR or ES event on the aggregate loss.
inline BandEvent band_event(const ConcreteCrisisEvent& event) {
  if (event.spec.kind == CrisisEventSpec::Kind::VaR) {
    throw CapabilityError(
        "gibbs requires an event of the form v1 <= h.x <= v2; the VaR event is a sum equality");
  }
  return BandEvent(Vector::Ones(event.dim), event.thresholds.lower, event.thresholds.upper);
}

class DegenerateSlice : public SamplerError {
 public:
  using SamplerError::SamplerError;
};

inline constexpr double kMinSliceMass = 1e-14;

/// Draw X_j from its full conditional truncated to the band, by inversion of
/// the truncated cdf at C_lo + u (C_hi - C_lo).
inline double full_conditional_sample(const JointLossModel& model, int j, const Vector& x_rest,
                                      const BandEvent& band, double u) {
  const double hj = band.h(j);
  const double r = band.h.dot(insert(x_rest, j, 0.0));
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  if (hj > 0.0) {
    lo = (band.v1 - r) / hj;
    hi = (band.v2 - r) / hj;
  } else if (hj < 0.0) {
    lo = (band.v2 - r) / hj;
    hi = (band.v1 - r) / hj;
  } else if (r < band.v1 || r > band.v2) {
    throw DomainError("full_conditional_sample: conditioning point lies outside the band");
  }
  const auto cond = model.conditional(j, x_rest);
  const double c_lo = cond.cdf(lo);
  const double c_hi = cond.cdf(hi);
  if (!(c_hi - c_lo >= kMinSliceMass)) {
    throw DegenerateSlice("full_conditional_sample: conditional mass of the slice is below 1e-14");
  }
  const double ut = clamp_prob(std::clamp(c_lo + u * (c_hi - c_lo), c_lo, c_hi));
  return std::clamp(cond.quantile(ut), lo, hi);
}

/// Selection probabilities proportional to the conditional variances
/// Sigma_jj - Sigma_j,-j Sigma_-j,-j^{-1} Sigma_-j,j.
inline Vector select_probs(const Matrix& cov) {
  const Eigen::Index d = cov.rows();
  if (d < 2 || cov.cols() != d) throw ConfigError("select_probs: need a square covariance with d >= 2");
  Vector p(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Matrix sub(d - 1, d - 1);
    Vector cross(d - 1);
    for (Eigen::Index a = 0, ia = 0; a < d; ++a) {
      if (a == j) continue;
      cross(ia) = cov(a, j);
      for (Eigen::Index b = 0, ib = 0; b < d; ++b) {
        if (b == j) continue;
        sub(ia, ib) = cov(a, b);
        ++ib;
      }
      ++ia;
    }
    Eigen::LLT<Matrix> llt(sub);
    if (llt.info() != Eigen::Success) throw SamplerError("select_probs: singular covariance submatrix");
    p(j) = cov(j, j) - cross.dot(llt.solve(cross));
    if (!(p(j) > 0.0)) throw SamplerError("select_probs: covariance is not positive definite");
  }
  return p / p.sum();
}

struct ThinResult {
  int thin = 1;
  bool capped = false;
};

/// Smallest lag at which every coordinate's prerun autocorrelation is <= rho_target,
/// capped at n_pre / 4.
inline ThinResult thin_interval(const Matrix& prerun, double rho_target = 0.15) {
  const Eigen::Index n = prerun.rows();
  if (n < 50) throw ConfigError("thin_interval: prerun needs at least 50 states");
  const auto cap = static_cast<std::size_t>(n / 4);
  std::vector<std::vector<double>> acfs;
  for (Eigen::Index j = 0; j < prerun.cols(); ++j) {
    const Vector col = prerun.col(j);
    auto a = acf(col, cap);
    if (!a) return {static_cast<int>(cap), true};  // a frozen coordinate never decorrelates
    acfs.push_back(std::move(*a));
  }
  for (std::size_t lag = 1; lag <= cap; ++lag) {
    bool ok = true;
    for (const auto& a : acfs) ok = ok && a[lag] <= rho_target;
    if (ok) return {static_cast<int>(lag), false};
  }
  return {static_cast<int>(cap), true};
}

struct GibbsParams {
  Vector p;
  int thin = 1;
  int n_pre = 100;
  double rho_target = 0.15;

  void validate(int d) const {
    if (p.size() != d) throw ConfigError("gibbs: selection probabilities must have d entries");
    if ((p.array() <= 0.0).any()) throw ConfigError("gibbs: selection probabilities must be > 0");
    if (std::abs(p.sum() - 1.0) > 1e-9) throw ConfigError("gibbs: selection probabilities must sum to 1");
    if (thin < 1) throw ConfigError("gibbs: thinning interval must be >= 1");
  }
};

struct GibbsDiagnostics {
  std::vector<int> coordinate_updated;  // per single-coordinate update; -1 marks a skipped degenerate slice
  int degenerate_slices = 0;
};

struct GibbsRun {
  MarkovPath path;
  GibbsDiagnostics diagnostics;
};

namespace detail {

inline constexpr int kMaxConsecutiveDegenerate = 100;

inline int draw_index(const Vector& cum, double u) {
  for (Eigen::Index j = 0; j < cum.size() - 1; ++j) {
    if (u < cum(j)) return static_cast<int>(j);
  }
  return static_cast<int>(cum.size() - 1);
}

// One random-scan update of x in place. Returns the updated coordinate.
inline int gibbs_update(const JointLossModel& model, const BandEvent& band, const Vector& cum, Vector& x,
                        Rng& rng, std::uniform_real_distribution<double>& unif, GibbsDiagnostics& diag) {
  int consecutive = 0;
  int last = -1;
  while (true) {
    int j = draw_index(cum, unif(rng));
    if (consecutive > 0 && cum.size() > 1) {
      while (j == last) j = draw_index(cum, unif(rng));
    }
    const double u = unif(rng);
    try {
      x(j) = full_conditional_sample(model, j, drop(x, j), band, u);
      return j;
    } catch (const DegenerateSlice&) {
      ++diag.degenerate_slices;
      diag.coordinate_updated.push_back(-1);
      if (++consecutive > kMaxConsecutiveDegenerate) {
        throw SamplerError("rsgs_sample: more than 100 consecutive degenerate slices");
      }
      last = j;
    }
  }
}

}  // namespace detail

/// Random-scan Gibbs sampler emitting one state per `thin` single-coordinate updates.
inline GibbsRun rsgs_sample(const JointLossModel& model, const BandEvent& band, const GibbsParams& params,
                            const Vector& x0, Eigen::Index n, std::uint64_t seed) {
  const int d = model.dim();
  params.validate(d);
  if (x0.size() != d) throw ConfigError("rsgs_sample: initial state has wrong dimension");
  if (!band.contains(x0) || !model.in_support(x0)) throw ConfigError("rsgs_sample: initial state is infeasible");

  Vector cum(d);
  std::partial_sum(params.p.data(), params.p.data() + d, cum.data());
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  GibbsRun run;
  run.path.engine = "gibbs";
  run.path.seed = seed;
  run.path.samples.resize(n, d);
  run.diagnostics.coordinate_updated.reserve(static_cast<std::size_t>(n * params.thin));
  Vector x = x0;
  for (Eigen::Index it = 0; it < n; ++it) {
    for (int t = 0; t < params.thin; ++t) {
      run.diagnostics.coordinate_updated.push_back(
          detail::gibbs_update(model, band, cum, x, rng, unif, run.diagnostics));
    }
    run.path.samples.row(it) = x.transpose();
  }
  return run;
}

struct GibbsHeuristicResult {
  GibbsParams params;
  Matrix prerun;
  bool thin_capped = false;
  Vector start;  // last prerun state
};

/// Selection probabilities from the presample covariance, an unthinned prerun,
/// and the thinning interval from its autocorrelations.
inline GibbsHeuristicResult gibbs_heuristic(const JointLossModel& model, const BandEvent& band,
                                            const Matrix& presample_conditional, const Vector& x0,
                                            std::uint64_t seed, int n_pre = 100, double rho_target = 0.15) {
  GibbsHeuristicResult res;
  res.params.p = select_probs(sample_covariance(presample_conditional));
  res.params.n_pre = n_pre;
  res.params.rho_target = rho_target;
  res.params.thin = 1;
  const GibbsRun pre = rsgs_sample(model, band, res.params, x0, n_pre, seed);
  res.prerun = pre.path.samples;
  const ThinResult th = thin_interval(res.prerun, rho_target);
  res.params.thin = th.thin;
  res.thin_capped = th.capped;
  res.start = res.prerun.row(res.prerun.rows() - 1).transpose();
  return res;
}

}  // namespace sysrisk
