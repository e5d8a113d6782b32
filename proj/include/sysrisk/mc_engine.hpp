#pragma once

#include "sysrisk/core.hpp"
#include "sysrisk/crisis_event.hpp"
#include "sysrisk/joint_model.hpp"
#include "sysrisk/risk_measures.hpp"

#include <chrono>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace sysrisk {

/// Raised when too few presample rows fall into the event; the levels need widening.
class InsufficientConditionalSample : public SamplerError {
 public:
  InsufficientConditionalSample(const std::string& what, Eigen::Index k)
      : SamplerError(what), k_(k) {}
  Eigen::Index count() const { return k_; }

 private:
  Eigen::Index k_;
};

struct Presample {
  Matrix sample;  // n x d
  Vector mean;
  Matrix cov;
  Vector row_sums;
};

inline Presample summarize_presample(Matrix sample) {
  Presample p;
  p.mean = sample.colwise().mean().transpose();
  p.cov = sample_covariance(sample);
  p.row_sums = sample.rowwise().sum();
  p.sample = std::move(sample);
  return p;
}

inline Presample mc_presample(const JointLossModel& model, Eigen::Index n, std::uint64_t seed) {
  if (n < 100) throw ConfigError("mc_presample: need n >= 100");
  Rng rng(seed);
  return summarize_presample(model.sample(n, rng));
}

struct McRunConfig {
  Eigen::Index n = 100000;
  std::uint64_t seed = 1;
  CrisisEventSpec spec;
  std::vector<MarginalRiskMeasure> measures;
  Eigen::Index min_conditional = 100;
};

struct McResult {
  std::vector<EstimateWithSE> estimates;
  ConcreteCrisisEvent event;
  Matrix conditional_sample;  // k x d
  Eigen::Index k = 0;
  double runtime = 0.0;  // seconds
};

/// Rows of `sample` lying in the event (the delta band for VaR events).
inline Matrix select_rows(const Matrix& sample, const ConcreteCrisisEvent& event) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index r = 0; r < sample.rows(); ++r) {
    if (event.contains(sample.row(r).transpose())) keep.push_back(r);
  }
  Matrix out(static_cast<Eigen::Index>(keep.size()), sample.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = sample.row(keep[i]);
  return out;
}

/// Per-column estimates with batch-means SEs.
inline std::vector<EstimateWithSE> column_estimates(const Matrix& sample,
                                                    const std::vector<MarginalRiskMeasure>& measures) {
  if (static_cast<Eigen::Index>(measures.size()) != sample.cols()) {
    throw ConfigError("need one marginal risk measure per coordinate");
  }
  std::vector<EstimateWithSE> out;
  for (Eigen::Index j = 0; j < sample.cols(); ++j) {
    const Vector col = sample.col(j);
    out.push_back(batch_means_se(col, measures[static_cast<std::size_t>(j)]));
  }
  return out;
}

namespace detail {

inline void validate_mc_spec(const CrisisEventSpec& spec) {
  if (spec.kind == CrisisEventSpec::Kind::VaR && !(spec.delta > 0.0)) {
    throw ConfigError(
        "plain MC cannot condition on the VaR event (probability zero); set delta > 0 to use the "
        "band [alpha - delta, alpha + delta]");
  }
}

}  // namespace detail

/// Plain MC allocation from an existing unconditional sample: estimate the
/// event on that sample, keep the rows inside it, apply the measures.
inline McResult mc_allocate_on_sample(const Matrix& sample, SupportClass support,
                                      const McRunConfig& cfg) {
  detail::validate_mc_spec(cfg.spec);
  if (static_cast<Eigen::Index>(cfg.measures.size()) != sample.cols()) {
    throw ConfigError("need one marginal risk measure per coordinate");
  }
  McResult res;
  res.event = estimate_event(cfg.spec, sample, support);
  res.conditional_sample = select_rows(sample, res.event.mc_band());
  res.k = res.conditional_sample.rows();
  const Eigen::Index needed = std::max<Eigen::Index>(cfg.min_conditional, 100);
  if (res.k < needed) {
    std::ostringstream os;
    os << "only " << res.k << " of " << sample.rows() << " MC samples fall in the crisis event (need "
       << needed << "); widen the event levels or increase n";
    throw InsufficientConditionalSample(os.str(), res.k);
  }
  res.estimates = column_estimates(res.conditional_sample, cfg.measures);
  return res;
}

inline McResult mc_allocate(const JointLossModel& model, const McRunConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("mc_allocate: n must be >= 1");
  detail::validate_mc_spec(cfg.spec);
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(cfg.seed);
  const Matrix sample = model.sample(cfg.n, rng);
  McResult res = mc_allocate_on_sample(sample, model.support_class(), cfg);
  res.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace sysrisk
