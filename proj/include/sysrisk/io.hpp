#pragma once

#include "sysrisk/harness.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace sysrisk {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_numbers(const std::string& s) {
  std::vector<double> out;
  std::string tok;
  std::istringstream is(s);
  while (std::getline(is, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw ConfigError("");
    } catch (...) {
      throw ConfigError("not a number: '" + tok + "'");
    }
  }
  return out;
}

// %.17g keeps doubles round-trippable in CSV output.
inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("matrix must be a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Matrix m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) throw ConfigError("matrix must be square");
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Events and measures

/// "var", "rvar" or "es" with levels ("0.99" or "0.975,0.99").
inline CrisisEventSpec parse_event(const std::string& kind, const std::vector<double>& levels, double delta = 0.0) {
  const std::string k = detail::lower(kind);
  if (k == "var") {
    if (levels.size() != 1) throw ConfigError("VaR event takes one level");
    return CrisisEventSpec::var(levels[0], delta);
  }
  if (k == "rvar") {
    if (levels.size() != 2) throw ConfigError("RVaR event takes two levels");
    return CrisisEventSpec::rvar(levels[0], levels[1]);
  }
  if (k == "es") {
    if (levels.size() != 1) throw ConfigError("ES event takes one level");
    return CrisisEventSpec::es(levels[0]);
  }
  throw ConfigError("unknown event '" + kind + "' (expected var, rvar or es)");
}

/// "mean", "var:0.9", "rvar:0.9,0.95" or "es:0.9".
inline MarginalRiskMeasure parse_measure(const std::string& text) {
  const std::string t = detail::lower(detail::trim(text));
  if (t == "mean") return MarginalRiskMeasure::mean();
  const auto colon = t.find(':');
  if (colon == std::string::npos) throw ConfigError("bad risk measure '" + text + "'");
  const std::string kind = t.substr(0, colon);
  const auto lv = detail::parse_numbers(t.substr(colon + 1));
  if (kind == "var" && lv.size() == 1) return MarginalRiskMeasure::var(lv[0]);
  if (kind == "rvar" && lv.size() == 2) return MarginalRiskMeasure::rvar(lv[0], lv[1]);
  if (kind == "es" && lv.size() == 1) return MarginalRiskMeasure::es(lv[0]);
  throw ConfigError("bad risk measure '" + text + "'");
}

inline std::string measure_text(const MarginalRiskMeasure& m) {
  std::ostringstream os;
  os.precision(17);
  switch (m.kind) {
    case MarginalRiskMeasure::Kind::Mean: return "mean";
    case MarginalRiskMeasure::Kind::VaR: os << "var:" << m.level1; break;
    case MarginalRiskMeasure::Kind::RVaR: os << "rvar:" << m.level1 << "," << m.level2; break;
    case MarginalRiskMeasure::Kind::ES: os << "es:" << m.level1; break;
  }
  return os.str();
}

inline Json event_to_json(const CrisisEventSpec& s) {
  Json j;
  switch (s.kind) {
    case CrisisEventSpec::Kind::VaR: j["kind"] = "var"; j["levels"] = {s.alpha1}; break;
    case CrisisEventSpec::Kind::RVaR: j["kind"] = "rvar"; j["levels"] = {s.alpha1, s.alpha2}; break;
    case CrisisEventSpec::Kind::ES: j["kind"] = "es"; j["levels"] = {s.alpha1}; break;
  }
  j["delta"] = s.delta;
  return j;
}

// ---------------------------------------------------------------------------
// Models

/// Inline model: {"marginals": [{"kind": "gpd", "params": [0.3, 1]}, ...],
///                "copula": {"kind": "survival_clayton", "theta": 2}}
/// or {"kind": "multivariate_t", "dof": 5, "dispersion": [[...]]}
/// or {"kind": "multivariate_normal", "correlation": [[...]]}.
inline JointLossModel model_from_json(const Json& j) {
  const std::string kind = detail::lower(j.value("kind", std::string("copula")));
  if (kind == "multivariate_t") return multivariate_t(j.at("dof").get<double>(), detail::matrix_from_json(j.at("dispersion")));
  if (kind == "multivariate_normal") return multivariate_normal(detail::matrix_from_json(j.at("correlation")));
  if (kind != "copula") throw ConfigError("unknown model kind '" + kind + "'");

  std::vector<MarginalModel> ms;
  for (const auto& m : j.at("marginals")) {
    const std::string mk = detail::lower(m.at("kind").get<std::string>());
    const auto p = m.at("params").get<std::vector<double>>();
    auto need = [&](std::size_t n) {
      if (p.size() != n) throw ConfigError("marginal '" + mk + "' takes " + std::to_string(n) + " parameters");
    };
    if (mk == "gpd") {
      need(2);
      ms.push_back(MarginalModel::gpd(p[0], p[1]));
    } else if (mk == "pareto") {
      need(2);
      ms.push_back(MarginalModel::pareto(p[0], p[1]));
    } else if (mk == "t" || mk == "student_t") {
      need(3);
      ms.push_back(MarginalModel::student_t(p[0], p[1], p[2]));
    } else if (mk == "normal") {
      need(2);
      ms.push_back(MarginalModel::normal(p[0], p[1]));
    } else {
      throw ConfigError("unknown marginal '" + mk + "' (expected gpd, pareto, t or normal)");
    }
  }
  const int d = static_cast<int>(ms.size());
  const Json& c = j.at("copula");
  const std::string ck = detail::lower(c.at("kind").get<std::string>());
  CopulaModel cop = [&] {
    if (ck == "independence") return CopulaModel::independence(d);
    if (ck == "clayton") return CopulaModel::clayton(d, c.at("theta").get<double>());
    if (ck == "survival_clayton") return CopulaModel::survival_clayton(d, c.at("theta").get<double>());
    if (ck == "gaussian") return CopulaModel::gaussian(detail::matrix_from_json(c.at("correlation")));
    if (ck == "t" || ck == "student_t") {
      return CopulaModel::student_t(c.at("dof").get<double>(), detail::matrix_from_json(c.at("correlation")));
    }
    throw ConfigError("unknown copula '" + ck + "'");
  }();
  return JointLossModel(std::move(ms), std::move(cop));
}

inline ModelRef model_ref_from_json(const Json& j) {
  ModelRef ref;
  if (j.is_string()) {
    ref.preset = j.get<std::string>();
    presets::by_name(ref.preset);
    return ref;
  }
  ref.inline_model = model_from_json(j);
  ref.inline_description = j.dump();
  return ref;
}

// ---------------------------------------------------------------------------
// RunConfig

inline Json config_to_json(const RunConfig& c) {
  Json j;
  j["model"] = c.model.inline_model ? Json::parse(c.model.inline_description) : Json(c.model.preset);
  j["event"] = event_to_json(c.event);
  Json ms = Json::array();
  for (const auto& m : c.measures) ms.push_back(measure_text(m));
  j["measures"] = ms;
  j["engine"] = to_string(c.engine);
  j["n_mc"] = c.n_mc;
  j["n_mcmc"] = c.n_mcmc;
  j["seed"] = c.seed;
  j["widen"] = c.widen;
  Json h;
  if (c.hmc.fixed) {
    h["eps"] = c.hmc.fixed->eps;
    h["steps"] = c.hmc.fixed->steps;
  }
  h["c_eps"] = c.hmc.c_eps;
  h["t_max"] = c.hmc.t_max;
  h["var_tuning_delta"] = c.hmc.var_tuning_delta;
  j["hmc"] = h;
  Json g;
  if (c.gibbs.thin) g["thin"] = *c.gibbs.thin;
  if (c.gibbs.p) g["p"] = std::vector<double>(c.gibbs.p->data(), c.gibbs.p->data() + c.gibbs.p->size());
  g["n_pre"] = c.gibbs.n_pre;
  g["rho_target"] = c.gibbs.rho_target;
  j["gibbs"] = g;
  return j;
}

/// Fields absent from the JSON keep the values already in `c`.
inline void apply_json(RunConfig& c, const Json& j) {
  static const std::vector<std::string> known{"model", "event", "measures", "engine", "n_mc", "n_mcmc", "n",
                                              "seed", "output_dir", "out", "widen", "hmc", "gibbs"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key '" + k + "'");
  }
  try {
    if (j.contains("model")) c.model = model_ref_from_json(j["model"]);
    if (j.contains("event")) {
      const Json& e = j["event"];
      std::vector<double> lv = e.at("levels").is_array() ? e.at("levels").get<std::vector<double>>()
                                                          : std::vector<double>{e.at("levels").get<double>()};
      c.event = parse_event(e.at("kind").get<std::string>(), lv, e.value("delta", 0.0));
    }
    if (j.contains("measures")) {
      c.measures.clear();
      for (const auto& m : j["measures"]) c.measures.push_back(parse_measure(m.get<std::string>()));
    }
    if (j.contains("engine")) c.engine = engine_from_string(j["engine"].get<std::string>());
    if (j.contains("n_mc")) c.n_mc = j["n_mc"].get<Eigen::Index>();
    if (j.contains("n_mcmc")) c.n_mcmc = j["n_mcmc"].get<Eigen::Index>();
    if (j.contains("n")) c.n_mcmc = c.n_mc = j["n"].get<Eigen::Index>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("out")) c.output_dir = j["out"].get<std::string>();
    if (j.contains("widen")) c.widen = j["widen"].get<bool>();
    if (j.contains("hmc")) {
      const Json& h = j["hmc"];
      if (h.contains("eps") != h.contains("steps")) throw ConfigError("hmc: give both eps and steps, or neither");
      if (h.contains("eps")) {
        HmcParams p{h["eps"].get<double>(), h["steps"].get<int>()};
        p.validate();
        c.hmc.fixed = p;
      }
      c.hmc.c_eps = h.value("c_eps", c.hmc.c_eps);
      c.hmc.t_max = h.value("t_max", c.hmc.t_max);
      c.hmc.var_tuning_delta = h.value("var_tuning_delta", c.hmc.var_tuning_delta);
    }
    if (j.contains("gibbs")) {
      const Json& g = j["gibbs"];
      if (g.contains("thin")) c.gibbs.thin = g["thin"].get<int>();
      if (g.contains("p")) {
        const auto p = g["p"].get<std::vector<double>>();
        c.gibbs.p = Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
      }
      c.gibbs.n_pre = g.value("n_pre", c.gibbs.n_pre);
      c.gibbs.rho_target = g.value("rho_target", c.gibbs.rho_target);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

/// Flat "key = value" lines. Keys: model, event, levels, delta, measures,
/// engine, n, n_mc, n_mcmc, seed, out, widen, hmc.eps, hmc.steps, hmc.c_eps,
/// hmc.t_max, gibbs.thin, gibbs.p, gibbs.n_pre, gibbs.rho_target.
inline Json key_value_to_json(const std::string& text) {
  Json j;
  std::string event_kind = "es", levels, delta;
  bool has_event = false;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string k = detail::trim(line.substr(0, eq)), v = detail::trim(line.substr(eq + 1));
    auto num = [&] { return detail::parse_numbers(v).at(0); };
    if (k == "model") j["model"] = v;
    else if (k == "event") { event_kind = v; has_event = true; }
    else if (k == "levels") { levels = v; has_event = true; }
    else if (k == "delta") { delta = v; has_event = true; }
    else if (k == "measures") {
      Json ms = Json::array();
      std::istringstream ls(v);
      std::string m;
      while (std::getline(ls, m, ';')) ms.push_back(detail::trim(m));
      j["measures"] = ms;
    }
    else if (k == "engine") j["engine"] = v;
    else if (k == "n" || k == "n_mc" || k == "n_mcmc") j[k] = static_cast<Eigen::Index>(num());
    else if (k == "seed") j["seed"] = static_cast<std::uint64_t>(std::stoull(v));
    else if (k == "out" || k == "output_dir") j["output_dir"] = v;
    else if (k == "widen") j["widen"] = (v == "true" || v == "1");
    else if (k == "hmc.steps" || k == "hmc.t_max") j["hmc"][k.substr(4)] = static_cast<int>(num());
    else if (k.rfind("hmc.", 0) == 0) j["hmc"][k.substr(4)] = num();
    else if (k == "gibbs.thin" || k == "gibbs.n_pre") j["gibbs"][k.substr(6)] = static_cast<int>(num());
    else if (k == "gibbs.p") j["gibbs"]["p"] = detail::parse_numbers(v);
    else if (k == "gibbs.rho_target") j["gibbs"]["rho_target"] = num();
    else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + k + "'");
  }
  if (has_event) {
    if (levels.empty()) throw ConfigError("config: event given without levels");
    j["event"] = {{"kind", event_kind}, {"levels", detail::parse_numbers(levels)},
                  {"delta", delta.empty() ? 0.0 : detail::parse_numbers(delta).at(0)}};
  }
  return j;
}

/// JSON when the text starts with '{' or '[', key-value lines otherwise.
inline Json parse_config_text(const std::string& text) {
  const std::string t = detail::trim(text);
  if (!t.empty() && (t[0] == '{' || t[0] == '[')) {
    try {
      return Json::parse(t);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  return key_value_to_json(t);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline RunConfig load_config(const std::string& path) {
  RunConfig c;
  apply_json(c, parse_config_text(read_file(path)));
  return c;
}

// ---------------------------------------------------------------------------
// Reports

/// Everything except wall-clock timings, so identical runs give identical bytes.
inline Json report_to_json(const AllocationReport& r) {
  Json j;
  j["version"] = kVersion;
  j["config"] = config_to_json(r.config);
  const JointLossModel model = r.config.model.build();
  j["model"] = {{"name", r.config.model.label()},
                {"description", r.config.model.inline_model ? r.config.model.inline_description
                                                            : presets::describe(r.config.model.preset)},
                {"dim", r.dim},
                {"support", r.support == SupportClass::PureLosses ? "pure-losses" : "profit-and-loss"}};
  j["engine"] = to_string(r.config.engine);
  j["seed"] = r.config.seed;
  Json ev = event_to_json(r.mc ? r.mc->effective_event : r.config.event);
  ev["lower"] = detail::finite_or_null(r.event.thresholds.lower);
  ev["upper"] = detail::finite_or_null(r.event.thresholds.upper);
  ev["var_level"] = r.event.thresholds.var_level ? Json(*r.event.thresholds.var_level) : Json(nullptr);
  ev["constraints"] = r.event.constraints.size();
  ev["presample_points_in_event"] = r.presample_conditional;
  j["event"] = ev;
  Json est = Json::array();
  double total = 0.0;
  for (std::size_t i = 0; i < r.estimates.size(); ++i) {
    const auto& e = r.estimates[i];
    total += e.point;
    est.push_back({{"coordinate", i + 1},
                   {"measure", r.measures[i].name()},
                   {"estimate", e.point},
                   {"se", e.se},
                   {"batches", e.n_batches},
                   {"few_batches", e.few_batches}});
  }
  j["estimates"] = est;
  j["sum_of_estimates"] = total;
  j["n_samples"] = r.samples.rows();
  Json diag;
  if (r.mc) {
    diag["conditional_samples"] = r.mc->k;
  }
  if (r.hmc) {
    const auto& h = *r.hmc;
    diag["eps"] = h.params.eps;
    diag["steps"] = h.params.steps;
    diag["tuned"] = h.tuned;
    if (h.tuning) {
      diag["target_acceptance"] = h.tuning->target_acceptance;
      diag["min_acceptance"] = h.tuning->min_acceptance;
      diag["halvings"] = h.tuning->halvings;
      diag["mean_turning_point"] = h.tuning->mean_turning_point;
      diag["capped_trajectories"] = h.tuning->capped_trajectories;
    }
    diag["tuning_points"] = h.tuning_points;
    diag["reduced_var_target"] = h.reduced_var;
    diag["acceptance_rate"] = h.acr;
    diag["mean_reflections"] = h.mean_reflections;
    diag["non_finite"] = h.non_finite;
    diag["jittered"] = h.jittered;
  }
  if (r.gibbs) {
    const auto& g = *r.gibbs;
    diag["p"] = std::vector<double>(g.params.p.data(), g.params.p.data() + g.params.p.size());
    diag["thin"] = g.params.thin;
    diag["p_heuristic"] = g.heuristic_p;
    diag["thin_heuristic"] = g.heuristic_thin;
    diag["thin_capped"] = g.thin_capped;
    diag["degenerate_slices"] = g.degenerate_slices;
    if (!g.prerun_acf.empty()) diag["prerun_acf"] = g.prerun_acf;
  }
  j["diagnostics"] = diag;
  j["warnings"] = r.warnings;
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  out << s;
}

inline std::string samples_csv(const Matrix& x) {
  std::ostringstream os;
  for (Eigen::Index j = 0; j < x.cols(); ++j) os << (j ? "," : "") << "x" << (j + 1);
  os << "\n";
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) os << (j ? "," : "") << detail::fmt(x(r, j));
    os << "\n";
  }
  return os.str();
}

/// HMC: iteration,delta_H,accepted,reflections. Gibbs: iteration,coordinate_updated,accepted
/// (coordinate 0 marks an update skipped on a degenerate slice). MC: iteration,accepted.
inline std::string diagnostics_csv(const AllocationReport& r) {
  std::ostringstream os;
  if (r.hmc) {
    os << "iteration,delta_H,accepted,reflections\n";
    for (std::size_t i = 0; i < r.hmc->hamiltonian_errors.size(); ++i) {
      os << i + 1 << "," << detail::fmt(r.hmc->hamiltonian_errors[i]) << "," << (r.hmc->accepted[i] ? 1 : 0) << ","
         << r.hmc->reflections[i] << "\n";
    }
  } else if (r.gibbs) {
    os << "iteration,coordinate_updated,accepted\n";
    for (std::size_t i = 0; i < r.gibbs->coordinate_updated.size(); ++i) {
      os << i + 1 << "," << r.gibbs->coordinate_updated[i] + 1 << ",1\n";
    }
  } else {
    os << "iteration,accepted\n";
    for (Eigen::Index i = 0; i < r.samples.rows(); ++i) os << i + 1 << ",1\n";
  }
  return os.str();
}

inline std::string estimates_csv(const AllocationReport& r) {
  std::ostringstream os;
  os << "coordinate,measure,estimate,se,batches\n";
  for (std::size_t i = 0; i < r.estimates.size(); ++i) {
    os << i + 1 << "," << r.measures[i].name() << "," << detail::fmt(r.estimates[i].point) << ","
       << detail::fmt(r.estimates[i].se) << "," << r.estimates[i].n_batches << "\n";
  }
  return os.str();
}

/// report.json, estimates.csv, samples.csv, diagnostics.csv and timing.json under `dir`.
inline void write_outputs(const AllocationReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_to_json(r).dump(2) + "\n");
  write_text(dir / "estimates.csv", estimates_csv(r));
  write_text(dir / "samples.csv", samples_csv(r.samples));
  write_text(dir / "diagnostics.csv", diagnostics_csv(r));
  write_text(dir / "timing.json", Json{{"runtime_seconds", r.runtime}}.dump(2) + "\n");
}

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "engine,seed,coordinate,n,estimate,se,oracle,bias,time_adjusted_mse,runtime_seconds\n";
  auto opt = [](const std::optional<double>& v) { return v ? detail::fmt(*v) : std::string(); };
  for (const auto& r : rows) {
    os << r.engine << "," << r.seed << "," << r.coordinate << "," << r.n << "," << detail::fmt(r.estimate) << ","
       << detail::fmt(r.se) << "," << opt(r.oracle) << "," << opt(r.bias) << "," << opt(r.time_adjusted_mse) << ","
       << detail::fmt(r.runtime) << "\n";
  }
  return os.str();
}

}  // namespace sysrisk
