#pragma once

#include <cassert>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crd/crd.hpp"

namespace crd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  out << text;
}

inline EngineConfig config_or_default(const std::string& path, std::optional<std::uint64_t> seed) {
  EngineConfig config = path.empty() ? EngineConfig{} : load_config(path);
  if (seed) config.seed = *seed;
  return config;
}

inline void print_links(const CausalModel& model, std::ostream& out) {
  const auto& vars = model.variables();
  for (const auto& [key, s] : model.links()) {
    out << "  " << vars[key.cause] << " -> " << vars[key.effect] << " lag=" << key.lag
        << " stat=" << format_double(s.statistic) << " p=" << format_p(s.p_value) << "\n";
  }
}

}  // namespace detail

struct SimulateArgs {
  std::string spec, out, plan;
  std::size_t t_total = 0;
  std::optional<std::uint64_t> seed;
};

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  auto spec = load_scenario(a.spec);
  if (a.seed) spec.seed = *a.seed;
  std::optional<InterventionPlan> plan;
  if (!a.plan.empty()) plan = load_plan(a.plan, spec.variables);
  auto trace = generate(spec, a.t_total, plan ? &*plan : nullptr);
  std::ofstream file(a.out, std::ios::binary | std::ios::trunc);
  require(file.good(), ErrorCode::InvalidArgument, "cannot write '" + a.out + "'");
  write_window(trace.window, format_from_path(a.out), file);
  out << "wrote " << trace.window.rows() << " samples of " << spec.variables.size() << " variables to " << a.out
      << "\n";
  for (const auto& iv : trace.executed)
    out << "intervened " << spec.variables[iv.variable] << " over [" << iv.start << ", " << iv.end << ")\n";
  return kExitOk;
}

struct DiscoverArgs {
  std::string data, config, out;
  std::optional<std::uint64_t> seed;
};

inline int cmd_discover(const DiscoverArgs& a, std::ostream& out) {
  const auto config = detail::config_or_default(a.config, a.seed);
  auto window = standardize(ingest(a.data, std::nullopt, config.window_capacity));
  const auto params = config.discovery();
  auto result = discover_cold(window, params, 1);
  save(result.model, a.out);
  out << "samples=" << window.rows() << " variables=" << window.cols() << " links=" << result.model.links().size()
      << " ci_tests=" << result.ci_tests << "\n";
  detail::print_links(result.model, out);
  return kExitOk;
}

struct ContinualArgs {
  std::vector<std::string> windows;
  std::string live, config, out;
  std::size_t n_windows = 10;
  std::optional<std::size_t> k;
  bool interventions = false;
  std::optional<std::uint64_t> seed;
};

inline int cmd_continual(const ContinualArgs& a, std::ostream& out) {
  require(a.windows.empty() != a.live.empty(), ErrorCode::InvalidArgument,
          "give exactly one of --windows or --live");
  auto config = detail::config_or_default(a.config, a.seed);
  if (a.k) config.intervention_k = *a.k;
  validate(config);
  SessionOptions options;
  options.interventions = a.interventions || a.k.has_value();

  std::filesystem::create_directories(a.out);
  const auto model_path = (std::filesystem::path(a.out) / "model.json").string();
  const auto log_path = (std::filesystem::path(a.out) / "session.log").string();
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  require(log.good(), ErrorCode::InvalidArgument, "cannot write '" + log_path + "'");

  SampleMeter::reset_peak();
  const auto baseline = SampleMeter::retained();
  auto emit = [&](const RunRecord& record, const SessionState& state) {
    log << to_json(record, state.current_model->variables()).dump() << "\n";
    log.flush();
    save(*state.current_model, model_path);
    out << "run " << record.run_id << ": " << to_string(record.branch) << " links=" << record.link_count
        << " disagreement=" << format_double(record.disagreement) << " ci_tests=" << record.ci_test_count
        << (record.plan ? " plan=yes" : "") << "\n";
  };

  SessionState final_state;
  if (!a.live.empty()) {
    auto spec = load_scenario(a.live);
    spec.seed = config.seed;
    require(spec.tau_max <= config.tau_max, ErrorCode::InvalidArgument,
            "scenario tau_max exceeds the configured tau_max");
    Simulator sim(spec);
    ContinualSession session(config, options);
    for (std::size_t w = 0; w < a.n_windows; ++w) {
      const InterventionPlan* plan = session.pending_plan() ? &*session.pending_plan() : nullptr;
      auto trace = sim.advance(config.window_capacity, plan, config.window_capacity);
      const auto& record = session.process(std::move(trace.window));
      assert(SampleMeter::retained() - baseline <= config.window_capacity);
      emit(record, session.state());
    }
    final_state = session.state();
  } else {
    ContinualSession session(config, options);
    std::optional<VariableSet> vars;
    for (const auto& path : a.windows) {
      auto window = ingest(path, vars, config.window_capacity);
      if (!vars) vars = window.variables();
      const auto& record = session.process(std::move(window));
      assert(SampleMeter::retained() - baseline <= config.window_capacity);
      emit(record, session.state());
    }
    final_state = session.state();
  }
  out << "runs=" << final_state.run_counter << " links=" << final_state.current_model->links().size()
      << " peak_retained_samples=" << SampleMeter::peak() - baseline << "\n";
  detail::print_links(*final_state.current_model, out);
  return kExitOk;
}

struct EvalArgs {
  std::string model, spec;
  std::size_t regime = 0;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto model = load(a.model);
  const auto spec = load_scenario(a.spec);
  const auto m = evaluate(model, ground_truth(spec), a.regime);
  out << nlohmann::ordered_json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}}.dump() << "\n";
  return kExitOk;
}

struct ExportArgs {
  std::string model, out;
};

inline int cmd_export_dot(const ExportArgs& a, std::ostream& out) {
  const auto dot = export_dot(load(a.model));
  if (a.out.empty()) {
    out << dot;
  } else {
    detail::write_text(a.out, dot);
  }
  return kExitOk;
}

struct ScenarioArgs {
  std::string name, out;
  std::optional<std::uint64_t> seed;
};

inline int cmd_scenario(const ScenarioArgs& a, std::ostream& out) {
  const auto spec = scenarios::by_name(a.name, a.seed.value_or(0));
  const auto text = to_json(spec).dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    detail::write_text(a.out, text);
  }
  return kExitOk;
}

/// Parses argv and runs one subcommand. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Continual causal discovery on lagged time-series"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a trace from a scenario spec");
  simulate->add_option("--spec", sim.spec, "Scenario spec (JSON)")->required();
  simulate->add_option("--t", sim.t_total, "Number of samples")->required();
  simulate->add_option("--out", sim.out, "Trace output (.csv or .jsonl)")->required();
  simulate->add_option("--plan", sim.plan, "Intervention plan (JSON)");
  simulate->add_option("--seed", sim.seed, "Override the spec seed");

  DiscoverArgs disc;
  auto* discover = app.add_subcommand("discover", "Run PCMCI on one data file and save the model");
  discover->add_option("--data", disc.data, "Data file (.csv or .jsonl)")->required();
  discover->add_option("--config", disc.config, "Engine config (JSON)");
  discover->add_option("--out", disc.out, "Model output path")->required();
  discover->add_option("--seed", disc.seed, "Override the config seed");

  ContinualArgs cont;
  auto* continual = app.add_subcommand("continual", "Run the continual loop over windows or a live simulation");
  continual->add_option("--windows", cont.windows, "Ordered window files");
  continual->add_option("--live", cont.live, "Scenario spec for closed-loop simulation");
  continual->add_option("--n-windows", cont.n_windows, "Windows to generate in live mode");
  continual->add_option("--config", cont.config, "Engine config (JSON)");
  continual->add_option("--out", cont.out, "Model store directory")->required();
  continual->add_option("--k", cont.k, "Intervention target count (enables interventions)");
  continual->add_flag("--interventions", cont.interventions, "Suggest interventions after stationary runs");
  continual->add_option("--seed", cont.seed, "Override the config seed");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score a model against a scenario's ground truth");
  eval->add_option("--model", ev.model, "Model file")->required();
  eval->add_option("--spec", ev.spec, "Scenario spec (JSON)")->required();
  eval->add_option("--regime", ev.regime, "Regime index");

  ExportArgs ex;
  auto* dot = app.add_subcommand("export-dot", "Print a model as a Graphviz digraph");
  dot->add_option("--model", ex.model, "Model file")->required();
  dot->add_option("--out", ex.out, "Output path (default: stdout)");

  ScenarioArgs sc;
  auto* scenario = app.add_subcommand("scenario", "Write a built-in scenario spec");
  scenario->add_option("--name", sc.name, "Scenario name")->required();
  scenario->add_option("--out", sc.out, "Output path (default: stdout)");
  scenario->add_option("--seed", sc.seed, "Scenario seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*simulate) return cmd_simulate(sim, out);
    if (*discover) return cmd_discover(disc, out);
    if (*continual) return cmd_continual(cont, out);
    if (*eval) return cmd_eval(ev, out);
    if (*dot) return cmd_export_dot(ex, out);
    if (*scenario) return cmd_scenario(sc, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? kExitInput : kExitNumerical;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInput;
}

}  // namespace crd::cli
