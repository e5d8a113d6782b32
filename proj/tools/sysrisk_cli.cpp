#include "sysrisk/io.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace sysrisk;

namespace {

struct RunFlags {
  std::string config;
  std::string model;
  std::string event;
  std::string levels;
  std::optional<double> delta;
  std::vector<std::string> measures;
  std::string engine;
  std::optional<long long> n;
  std::optional<long long> n_mc;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> eps;
  std::optional<int> steps;
  std::optional<int> thin;
  bool no_widen = false;
};

void add_run_flags(CLI::App* app, RunFlags& f, bool with_engine) {
  app->add_option("--config", f.config, "JSON or key = value config file; flags override it");
  app->add_option("--model", f.model, "preset name (M1, M2, M3) or path to a JSON model description");
  app->add_option("--event", f.event, "crisis event: var, rvar or es");
  app->add_option("--levels", f.levels, "event levels, e.g. 0.99 or 0.975,0.99");
  app->add_option("--delta", f.delta, "VaR band half-width (MC only)");
  app->add_option("--measure", f.measures, "marginal risk measure per coordinate: mean, var:b, rvar:b1,b2, es:b");
  if (with_engine) app->add_option("--engine", f.engine, "mc, hmc or gibbs");
  app->add_option("--n", f.n, "number of MCMC states (allocate with the MC engine: number of MC samples)");
  app->add_option("--n-mc", f.n_mc, "number of MC presample draws");
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--eps", f.eps, "HMC stepsize (skips tuning, needs --steps)");
  app->add_option("--steps", f.steps, "HMC leapfrog steps (skips tuning, needs --eps)");
  app->add_option("--thin", f.thin, "Gibbs thinning interval (skips the heuristic)");
  app->add_flag("--no-widen", f.no_widen, "MC: fail instead of widening the event when too few samples fall in it");
}

RunConfig build_config(const RunFlags& f, bool n_is_mcmc = false) {
  RunConfig c;
  if (!f.config.empty()) c = load_config(f.config);
  if (!f.model.empty()) {
    const auto names = presets::names();
    const bool preset = std::find(names.begin(), names.end(), f.model) != names.end();
    c.model = preset ? model_ref_from_json(Json(f.model)) : model_ref_from_json(parse_config_text(read_file(f.model)));
  }
  if (!f.event.empty() || !f.levels.empty() || f.delta) {
    std::string kind = f.event;
    if (kind.empty()) kind = Json(event_to_json(c.event))["kind"].get<std::string>();
    std::vector<double> lv = f.levels.empty() ? event_to_json(c.event)["levels"].get<std::vector<double>>()
                                              : detail::parse_numbers(f.levels);
    if (!f.event.empty() && f.levels.empty()) throw ConfigError("--event needs --levels");
    c.event = parse_event(kind, lv, f.delta.value_or(c.event.delta));
  }
  if (!f.measures.empty()) {
    c.measures.clear();
    for (const auto& m : f.measures) c.measures.push_back(parse_measure(m));
  }
  if (!f.engine.empty()) c.engine = engine_from_string(f.engine);
  if (f.n_mc) c.n_mc = *f.n_mc;
  if (f.n) {
    if (c.engine == Engine::Mc && !n_is_mcmc) c.n_mc = *f.n;
    else c.n_mcmc = *f.n;
  }
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.eps.has_value() != f.steps.has_value()) throw ConfigError("--eps and --steps go together");
  if (f.eps) {
    HmcParams p{*f.eps, *f.steps};
    p.validate();
    c.hmc.fixed = p;
  }
  if (f.thin) c.gibbs.thin = *f.thin;
  if (f.no_widen) c.widen = false;
  return c;
}

void print_estimates(const AllocationReport& r) {
  std::cout << "engine " << to_string(r.config.engine) << ", seed " << r.config.seed << ", " << r.samples.rows()
            << " samples\n";
  double total = 0.0;
  for (std::size_t j = 0; j < r.estimates.size(); ++j) {
    total += r.estimates[j].point;
    std::cout << "  x" << j + 1 << "  " << r.measures[j].name() << " = " << detail::fmt(r.estimates[j].point)
              << "  (se " << detail::fmt(r.estimates[j].se) << ")\n";
  }
  std::cout << "  sum = " << detail::fmt(total) << "\n";
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_allocate(const RunFlags& f) {
  const RunConfig c = build_config(f);
  const AllocationReport r = run(c);
  print_estimates(r);
  if (!c.output_dir.empty()) {
    write_outputs(r, c.output_dir);
    std::cout << "wrote " << c.output_dir << "/report.json\n";
  }
  return 0;
}

int cmd_tune(const RunFlags& f) {
  const RunConfig c = build_config(f);
  const TuneResult t = tune_only(c);
  Json j{{"eps", t.params.eps},
         {"steps", t.params.steps},
         {"target_acceptance", t.target_acceptance},
         {"min_acceptance", t.min_acceptance},
         {"halvings", t.halvings},
         {"mean_turning_point", t.mean_turning_point},
         {"capped_trajectories", t.capped_trajectories}};
  std::cout << j.dump(2) << "\n";
  if (!c.output_dir.empty()) {
    std::filesystem::create_directories(c.output_dir);
    write_text(std::filesystem::path(c.output_dir) / "tuning.json", j.dump(2) + "\n");
  }
  return 0;
}

int cmd_compare(const RunFlags& f, const std::string& engines, const std::string& seeds) {
  const RunConfig base = build_config(f, true);
  std::vector<RunConfig> runs;
  std::istringstream es(engines);
  std::string e;
  std::vector<std::uint64_t> seed_list;
  if (seeds.empty()) {
    seed_list.push_back(base.seed);
  } else {
    for (double s : detail::parse_numbers(seeds)) seed_list.push_back(static_cast<std::uint64_t>(s));
  }
  while (std::getline(es, e, ',')) {
    for (auto s : seed_list) {
      RunConfig c = base;
      c.engine = engine_from_string(detail::trim(e));
      c.seed = s;
      runs.push_back(c);
    }
  }
  const auto rows = compare(runs);
  const std::string csv = comparison_csv(rows);
  std::cout << csv;
  if (!base.output_dir.empty()) {
    std::filesystem::create_directories(base.output_dir);
    write_text(std::filesystem::path(base.output_dir) / "comparison.csv", csv);
  }
  return 0;
}

int cmd_presets() {
  for (const auto& n : presets::names()) std::cout << n << "  " << presets::describe(n) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Systemic risk allocations under crisis events"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  RunFlags alloc_f, tune_f, cmp_f;
  auto* alloc = app.add_subcommand("allocate", "estimate risk allocations for one engine");
  add_run_flags(alloc, alloc_f, true);
  auto* tune_cmd = app.add_subcommand("tune", "print tuned HMC stepsize and trajectory length");
  add_run_flags(tune_cmd, tune_f, false);
  auto* cmp = app.add_subcommand("compare", "run several engines and seeds, report bias, SE and time-adjusted MSE");
  add_run_flags(cmp, cmp_f, false);
  std::string engines = "mc,hmc,gibbs", seeds;
  cmp->add_option("--engines", engines, "comma-separated engines");
  cmp->add_option("--seeds", seeds, "comma-separated seeds (default: --seed)");
  app.add_subcommand("presets", "list model presets");

  CLI11_PARSE(app, argc, argv);
  try {
    if (alloc->parsed()) return cmd_allocate(alloc_f);
    if (tune_cmd->parsed()) return cmd_tune(tune_f);
    if (cmp->parsed()) return cmd_compare(cmp_f, engines, seeds);
    return cmd_presets();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CapabilityError& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
