#pragma once

#include "sysrisk/core.hpp"
#include "sysrisk/crisis_event.hpp"
#include "sysrisk/gibbs_engine.hpp"
#include "sysrisk/hmc_engine.hpp"
#include "sysrisk/joint_model.hpp"
#include "sysrisk/mc_engine.hpp"
#include "sysrisk/oracle.hpp"
#include "sysrisk/risk_measures.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace sysrisk {

inline constexpr const char* kVersion = "0.1.0";

enum class Engine { Mc, Hmc, Gibbs };

inline std::string to_string(Engine e) {
  switch (e) {
    case Engine::Mc: return "mc";
    case Engine::Hmc: return "hmc";
    case Engine::Gibbs: return "gibbs";
  }
  return "?";
}

inline Engine engine_from_string(const std::string& s) {
  if (s == "mc") return Engine::Mc;
  if (s == "hmc") return Engine::Hmc;
  if (s == "gibbs" || s == "gs") return Engine::Gibbs;
  throw ConfigError("unknown engine '" + s + "' (expected mc, hmc or gibbs)");
}

struct HmcOptions {
  std::optional<HmcParams> fixed;  // skip tuning when set
  double c_eps = 1.0;
  int t_max = 1000;
  // Band half-width used to pick presample points for tuning on the VaR event
  // when the event itself has delta = 0.
  double var_tuning_delta = 0.001;
};

struct GibbsOptions {
  std::optional<int> thin;   // skip the autocorrelation heuristic when set
  std::optional<Vector> p;   // skip the covariance heuristic when set
  int n_pre = 100;
  double rho_target = 0.15;
};

/// Model given by preset name or an inline description, kept verbatim for manifests.
struct ModelRef {
  std::string preset = "M1";
  std::optional<JointLossModel> inline_model;
  std::string inline_description;

  JointLossModel build() const { return inline_model ? *inline_model : presets::by_name(preset); }
  std::string label() const { return inline_model ? "inline" : preset; }
};

struct RunConfig {
  ModelRef model;
  CrisisEventSpec event = CrisisEventSpec::es(0.99);
  std::vector<MarginalRiskMeasure> measures;  // empty: mean for every coordinate
  Engine engine = Engine::Mc;
  Eigen::Index n_mc = 100000;
  Eigen::Index n_mcmc = 10000;
  std::uint64_t seed = 1;
  std::string output_dir;
  HmcOptions hmc;
  GibbsOptions gibbs;
  bool widen = true;  // MC only: lower the event level by 0.01 until 100 conditional samples exist
};

struct HmcRecord {
  HmcParams params;
  bool tuned = false;
  std::optional<TuneResult> tuning;
  double acr = 0.0;
  int non_finite = 0;
  double mean_reflections = 0.0;
  bool reduced_var = false;
  bool jittered = false;
  Eigen::Index tuning_points = 0;
  std::vector<double> hamiltonian_errors;
  std::vector<int> reflections;
  std::vector<bool> accepted;
};

struct GibbsRecord {
  GibbsParams params;
  bool heuristic_p = false;
  bool heuristic_thin = false;
  bool thin_capped = false;
  std::vector<std::vector<double>> prerun_acf;  // per coordinate, lags 0..n_pre/4
  int degenerate_slices = 0;
  std::vector<int> coordinate_updated;
};

struct McRecord {
  Eigen::Index k = 0;
  CrisisEventSpec effective_event;
};

struct AllocationReport {
  RunConfig config;
  int dim = 0;
  SupportClass support = SupportClass::PureLosses;
  std::vector<MarginalRiskMeasure> measures;
  ConcreteCrisisEvent event;
  std::vector<EstimateWithSE> estimates;
  Matrix samples;  // conditional sample (MC) or chain states (HMC, Gibbs)
  Eigen::Index presample_conditional = 0;
  std::optional<McRecord> mc;
  std::optional<HmcRecord> hmc;
  std::optional<GibbsRecord> gibbs;
  std::vector<std::string> warnings;
  double runtime = 0.0;  // seconds, sampling phase
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream seeds for the presample, tuning / prerun, and chain.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) + stream);
}

inline std::vector<MarginalRiskMeasure> resolve_measures(const RunConfig& cfg, int d) {
  if (cfg.measures.empty()) return std::vector<MarginalRiskMeasure>(static_cast<std::size_t>(d), MarginalRiskMeasure::mean());
  if (static_cast<int>(cfg.measures.size()) != d) {
    throw ConfigError("got " + std::to_string(cfg.measures.size()) + " marginal risk measures for a model of dimension " +
                      std::to_string(d));
  }
  return cfg.measures;
}

inline bool all_means(const std::vector<MarginalRiskMeasure>& ms) {
  for (const auto& m : ms)
    if (m.kind != MarginalRiskMeasure::Kind::Mean) return false;
  return true;
}

inline Matrix strictly_feasible_rows(const Matrix& x, const ConstraintSet& cs) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    if (feasible(cs, x.row(r).transpose(), kStrictFeasibilityMargin)) keep.push_back(r);
  Matrix out(static_cast<Eigen::Index>(keep.size()), x.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(keep[i]);
  return out;
}

inline std::string describe_spec(const CrisisEventSpec& s) {
  std::ostringstream os;
  switch (s.kind) {
    case CrisisEventSpec::Kind::VaR: os << "VaR(" << s.alpha1 << ", delta=" << s.delta << ")"; break;
    case CrisisEventSpec::Kind::RVaR: os << "RVaR(" << s.alpha1 << "," << s.alpha2 << ")"; break;
    case CrisisEventSpec::Kind::ES: os << "ES(" << s.alpha1 << ")"; break;
  }
  return os.str();
}

// Lower the event's lower level by 0.01 (VaR: widen the band by 0.01).
inline std::optional<CrisisEventSpec> widened(const CrisisEventSpec& s) {
  CrisisEventSpec w = s;
  if (s.kind == CrisisEventSpec::Kind::VaR) {
    w.delta = s.delta + 0.01;
    if (!(s.alpha1 - w.delta > 0.0 && s.alpha1 + w.delta < 1.0)) return std::nullopt;
  } else {
    w.alpha1 = s.alpha1 - 0.01;
    if (!(w.alpha1 > 0.0)) return std::nullopt;
  }
  return w;
}

// HMC on the crisis event for an arbitrary constrained target: standardize,
// tune (unless parameters are fixed), run from the mean of the feasible
// presample points, and map the chain back.
template <ConstrainedTarget Target>
Matrix run_hmc_pipeline(const Target& target, const Matrix& presample_rows, const RunConfig& cfg, HmcRecord& rec) {
  const Matrix pts = strictly_feasible_rows(presample_rows, target.constraints());
  rec.tuning_points = pts.rows();
  if (pts.rows() < 10) {
    throw SamplerError("hmc: only " + std::to_string(pts.rows()) +
                       " presample points lie strictly inside the event; increase n_mc");
  }
  const Standardizer map = standardize(pts);
  rec.jittered = map.jittered;
  const StandardizedTarget<Target> st(target, map);
  const Matrix ys = map.to_y_rows(pts);
  if (cfg.hmc.fixed) {
    rec.params = *cfg.hmc.fixed;
  } else {
    rec.tuning = tune(st, ys, stream_seed(cfg.seed, 1), cfg.hmc.c_eps, cfg.hmc.t_max);
    rec.params = rec.tuning->params;
    rec.tuned = true;
  }
  Vector x0 = pts.colwise().mean().transpose();
  if (!feasible(target.constraints(), x0, kStrictFeasibilityMargin) || !std::isfinite(target.log_density(x0))) {
    x0 = pts.row(0).transpose();
  }
  auto run = hmc_sample(st, rec.params, map.to_y(x0), cfg.n_mcmc, stream_seed(cfg.seed, 2));
  rec.acr = run.diagnostics.acr;
  rec.non_finite = run.diagnostics.non_finite;
  double refl = 0.0;
  for (int r : run.diagnostics.reflections) refl += r;
  rec.mean_reflections = refl / static_cast<double>(std::max<Eigen::Index>(1, cfg.n_mcmc));
  rec.hamiltonian_errors = std::move(run.diagnostics.hamiltonian_errors);
  rec.reflections = std::move(run.diagnostics.reflections);
  rec.accepted = std::move(run.diagnostics.accepted);
  return map.to_x_rows(run.path.samples);
}

// Presample rows projected onto the reduced VaR coordinates: the delta band
// around v* (or a default band), first d - 1 coordinates.
inline Matrix reduced_var_presample(const Matrix& presample, const ConcreteCrisisEvent& event, const RunConfig& cfg) {
  CrisisEventSpec band_spec = event.spec;
  if (!(band_spec.delta > 0.0)) band_spec.delta = cfg.hmc.var_tuning_delta;
  const auto band = estimate_event(band_spec, presample, event.support).mc_band();
  const Matrix rows = select_rows(presample, band);
  return rows.leftCols(rows.cols() - 1);
}

}  // namespace detail

/// Tuned HMC parameters for the configured event (no chain is run).
inline TuneResult tune_only(const RunConfig& cfg) {
  const JointLossModel model = cfg.model.build();
  const Presample pre = mc_presample(model, cfg.n_mc, detail::stream_seed(cfg.seed, 0));
  const ConcreteCrisisEvent event = estimate_event(cfg.event, pre.sample, model.support_class());
  auto tune_on = [&](const auto& target, const Matrix& rows) {
    const Matrix pts = detail::strictly_feasible_rows(rows, target.constraints());
    if (pts.rows() < 10) throw SamplerError("tune: fewer than 10 presample points lie strictly inside the event");
    const Standardizer map = standardize(pts);
    const StandardizedTarget st(target, map);
    return tune(st, map.to_y_rows(pts), detail::stream_seed(cfg.seed, 1), cfg.hmc.c_eps, cfg.hmc.t_max);
  };
  if (cfg.event.kind == CrisisEventSpec::Kind::VaR) {
    const ReducedVarTarget target(model, *event.thresholds.var_level);
    return tune_on(target, detail::reduced_var_presample(pre.sample, event, cfg));
  }
  const EventTarget target(model, event.constraints);
  return tune_on(target, select_rows(pre.sample, event));
}

/// Full pipeline: presample, event estimation, engine, estimates with SEs.
inline AllocationReport run(const RunConfig& cfg) {
  const JointLossModel model = cfg.model.build();
  AllocationReport rep;
  rep.config = cfg;
  rep.dim = model.dim();
  rep.support = model.support_class();
  rep.measures = detail::resolve_measures(cfg, model.dim());
  if (cfg.n_mcmc < 100 && cfg.engine != Engine::Mc) throw ConfigError("n_mcmc must be >= 100");

  if (cfg.engine == Engine::Gibbs && cfg.event.kind == CrisisEventSpec::Kind::VaR) {
    throw CapabilityError(
        "gibbs + VaR event is unsupported: the Gibbs sampler needs a band event v1 <= h.x <= v2, "
        "and the VaR event is the sum equality 1.x = v*; use hmc, or mc with delta > 0");
  }
  if (cfg.engine == Engine::Hmc && cfg.event.kind == CrisisEventSpec::Kind::VaR &&
      model.support_class() != SupportClass::PureLosses) {
    throw CapabilityError(
        "hmc + VaR event requires a pure-loss model (all marginals on [0, inf)); the reduced VaR target of a "
        "P&L model is unconstrained and not supported");
  }
  if (cfg.engine == Engine::Mc && cfg.event.kind == CrisisEventSpec::Kind::VaR && !(cfg.event.delta > 0.0)) {
    throw ConfigError("mc + VaR event needs delta > 0: the event {1.x = v*} has probability zero");
  }

  const auto t0 = std::chrono::steady_clock::now();
  const Presample pre = mc_presample(model, cfg.n_mc, detail::stream_seed(cfg.seed, 0));

  switch (cfg.engine) {
    case Engine::Mc: {
      McRunConfig mc;
      mc.n = cfg.n_mc;
      mc.seed = cfg.seed;
      mc.spec = cfg.event;
      mc.measures = rep.measures;
      while (true) {
        try {
          McResult res = mc_allocate_on_sample(pre.sample, model.support_class(), mc);
          rep.event = res.event;
          rep.estimates = std::move(res.estimates);
          rep.samples = std::move(res.conditional_sample);
          rep.mc = McRecord{res.k, mc.spec};
          rep.presample_conditional = res.k;
          break;
        } catch (const InsufficientConditionalSample& e) {
          const auto w = cfg.widen ? detail::widened(mc.spec) : std::nullopt;
          if (!w) throw;
          rep.warnings.push_back("event widened from " + detail::describe_spec(mc.spec) + " to " +
                                 detail::describe_spec(*w) + " (only " + std::to_string(e.count()) +
                                 " conditional MC samples)");
          mc.spec = *w;
        }
      }
      break;
    }
    case Engine::Hmc: {
      rep.event = estimate_event(cfg.event, pre.sample, model.support_class());
      HmcRecord rec;
      if (cfg.event.kind == CrisisEventSpec::Kind::VaR) {
        const double v_star = *rep.event.thresholds.var_level;
        const ReducedVarTarget target(model, v_star);
        rec.reduced_var = true;
        const Matrix rows = detail::reduced_var_presample(pre.sample, rep.event, cfg);
        rep.presample_conditional = rows.rows();
        const Matrix reduced = detail::run_hmc_pipeline(target, rows, cfg, rec);
        rep.samples.resize(reduced.rows(), model.dim());
        for (Eigen::Index r = 0; r < reduced.rows(); ++r) {
          rep.samples.row(r) = target.lift(reduced.row(r).transpose()).transpose();
        }
      } else {
        const EventTarget target(model, rep.event.constraints);
        const Matrix rows = select_rows(pre.sample, rep.event);
        rep.presample_conditional = rows.rows();
        rep.samples = detail::run_hmc_pipeline(target, rows, cfg, rec);
      }
      rep.estimates = column_estimates(rep.samples, rep.measures);
      if (rec.reduced_var && detail::all_means(rep.measures)) {
        // Allocation of the eliminated coordinate: v* minus the other contributions.
        double rest = 0.0;
        for (int j = 0; j + 1 < model.dim(); ++j) rest += rep.estimates[static_cast<std::size_t>(j)].point;
        rep.estimates.back().point = *rep.event.thresholds.var_level - rest;
      }
      if (rec.tuning && rec.tuning->capped_trajectories > 0) {
        rep.warnings.push_back(std::to_string(rec.tuning->capped_trajectories) +
                               " tuning trajectories reached T_max without a U-turn");
      }
      if (rec.jittered) rep.warnings.push_back("presample covariance was jittered before standardization");
      if (rec.non_finite > 0) {
        rep.warnings.push_back(std::to_string(rec.non_finite) + " proposals had a non-finite Hamiltonian error");
      }
      rep.hmc = std::move(rec);
      break;
    }
    case Engine::Gibbs: {
      rep.event = estimate_event(cfg.event, pre.sample, model.support_class());
      const BandEvent band = band_event(rep.event);
      const Matrix rows = select_rows(pre.sample, rep.event);
      rep.presample_conditional = rows.rows();
      if (rows.rows() < 2) throw SamplerError("gibbs: fewer than 2 presample points fall in the event; increase n_mc");
      Vector x0 = rows.colwise().mean().transpose();
      GibbsRecord rec;
      GibbsParams params;
      params.n_pre = cfg.gibbs.n_pre;
      params.rho_target = cfg.gibbs.rho_target;
      if (cfg.gibbs.p) {
        params.p = *cfg.gibbs.p;
      } else {
        params.p = select_probs(sample_covariance(rows));
        rec.heuristic_p = true;
      }
      if (cfg.gibbs.thin) {
        params.thin = *cfg.gibbs.thin;
      } else {
        GibbsParams pre_params = params;
        pre_params.thin = 1;
        const GibbsRun prerun = rsgs_sample(model, band, pre_params, x0, cfg.gibbs.n_pre, detail::stream_seed(cfg.seed, 1));
        const ThinResult th = thin_interval(prerun.path.samples, cfg.gibbs.rho_target);
        params.thin = th.thin;
        rec.thin_capped = th.capped;
        rec.heuristic_thin = true;
        const auto lag_cap = static_cast<std::size_t>(cfg.gibbs.n_pre / 4);
        for (int j = 0; j < model.dim(); ++j) {
          const Vector col = prerun.path.samples.col(j);
          rec.prerun_acf.push_back(acf(col, lag_cap).value_or(std::vector<double>{}));
        }
        x0 = prerun.path.samples.row(prerun.path.samples.rows() - 1).transpose();
        if (th.capped) rep.warnings.push_back("thinning interval capped at n_pre/4 = " + std::to_string(th.thin));
      }
      GibbsRun run = rsgs_sample(model, band, params, x0, cfg.n_mcmc, detail::stream_seed(cfg.seed, 2));
      rec.params = params;
      rec.degenerate_slices = run.diagnostics.degenerate_slices;
      rec.coordinate_updated = std::move(run.diagnostics.coordinate_updated);
      rep.samples = std::move(run.path.samples);
      rep.estimates = column_estimates(rep.samples, rep.measures);
      rep.gibbs = std::move(rec);
      break;
    }
  }
  rep.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (std::size_t j = 0; j < rep.estimates.size(); ++j) {
    if (rep.estimates[j].few_batches) {
      rep.warnings.push_back("coordinate " + std::to_string(j + 1) + ": fewer than 10 batches, SE unreliable");
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Comparison

/// b^2 + sigma^2 / ((S_MCMC / S_MC) N_MCMC).
inline double time_adjusted_mse_mc(double bias, double sigma, double n_mcmc, double runtime_mcmc, double runtime_mc) {
  return bias * bias + sigma * sigma / ((runtime_mcmc / runtime_mc) * n_mcmc);
}

/// b^2 + sigma^2 / N_MCMC.
inline double time_adjusted_mse_mcmc(double bias, double sigma, double n_mcmc) {
  return bias * bias + sigma * sigma / n_mcmc;
}

struct ComparisonRow {
  std::string engine;
  std::uint64_t seed = 0;
  int coordinate = 0;  // 1-based
  double estimate = 0.0;
  double se = 0.0;
  std::optional<double> oracle;
  std::optional<double> bias;
  std::optional<double> time_adjusted_mse;
  double runtime = 0.0;
  Eigen::Index n = 0;
};

/// Oracle allocation for a run, when the model is elliptical and all measures are means.
inline std::optional<Vector> default_oracle(const RunConfig& cfg) {
  const JointLossModel model = cfg.model.build();
  if (!model.elliptical_form()) return std::nullopt;
  if (!cfg.measures.empty() && !detail::all_means(cfg.measures)) return std::nullopt;
  return elliptical_oracle(model, cfg.event);
}

/// Rows of bias / SE / time-adjusted MSE per run and coordinate. The MC rows
/// are time-adjusted against the MCMC run with the same seed (else the first
/// MCMC run); sigma is SE sqrt(N) of the respective run.
inline std::vector<ComparisonRow> compare_reports(const std::vector<AllocationReport>& reports,
                                                  const std::optional<Vector>& oracle) {
  auto mcmc_partner = [&](const AllocationReport& r) -> const AllocationReport* {
    const AllocationReport* first = nullptr;
    for (const auto& o : reports) {
      if (o.config.engine == Engine::Mc) continue;
      if (!first) first = &o;
      if (o.config.seed == r.config.seed) return &o;
    }
    return first;
  };
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) {
    const bool is_mc = r.config.engine == Engine::Mc;
    const Eigen::Index n = is_mc ? r.config.n_mc : r.config.n_mcmc;
    const AllocationReport* partner = is_mc ? mcmc_partner(r) : nullptr;
    for (std::size_t j = 0; j < r.estimates.size(); ++j) {
      ComparisonRow row;
      row.engine = to_string(r.config.engine);
      row.seed = r.config.seed;
      row.coordinate = static_cast<int>(j) + 1;
      row.estimate = r.estimates[j].point;
      row.se = r.estimates[j].se;
      row.runtime = r.runtime;
      row.n = n;
      if (oracle && oracle->size() == static_cast<Eigen::Index>(r.estimates.size())) {
        row.oracle = (*oracle)(static_cast<Eigen::Index>(j));
        row.bias = row.estimate - *row.oracle;
        const double sigma = row.se * std::sqrt(static_cast<double>(n));
        if (!is_mc) {
          row.time_adjusted_mse = time_adjusted_mse_mcmc(*row.bias, sigma, static_cast<double>(n));
        } else if (partner && r.runtime > 0.0 && partner->runtime > 0.0) {
          row.time_adjusted_mse = time_adjusted_mse_mc(*row.bias, sigma, static_cast<double>(partner->config.n_mcmc),
                                                       partner->runtime, r.runtime);
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::vector<ComparisonRow> compare(const std::vector<RunConfig>& configs, std::optional<Vector> oracle = std::nullopt) {
  if (configs.empty()) throw ConfigError("compare: no runs configured");
  if (!oracle) oracle = default_oracle(configs.front());
  std::vector<AllocationReport> reports;
  for (const auto& c : configs) reports.push_back(run(c));
  return compare_reports(reports, oracle);
}

}  // namespace sysrisk
