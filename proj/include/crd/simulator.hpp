#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crd/error.hpp"
#include "crd/intervention.hpp"
#include "crd/link.hpp"
#include "crd/model.hpp"
#include "crd/timeseries.hpp"

namespace crd {

struct Edge {
  std::size_t cause = 0;
  std::size_t effect = 0;
  int lag = 1;
  double coefficient = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Regime {
  long start_time = 0;
  std::vector<Edge> edges;

  friend bool operator==(const Regime&, const Regime&) = default;
};

/// Linear lagged SCM with Gaussian noise and piecewise-constant regimes.
struct ScenarioSpec {
  std::string name;
  VariableSet variables;
  int tau_max = 1;
  std::vector<Regime> regimes;
  std::vector<double> noise_sd;
  std::uint64_t seed = 0;
  // Optional per-row offsets for the first rows (noise-free debug runs).
  std::vector<std::vector<double>> initial;

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

inline constexpr double kStabilityBound = 0.9;

inline void validate(const ScenarioSpec& spec) {
  const auto n = spec.variables.size();
  require(n >= 2, ErrorCode::InvalidArgument, "scenario needs at least two variables");
  require(spec.tau_max >= 1, ErrorCode::InvalidArgument, "tau_max must be at least 1");
  require(spec.noise_sd.size() == n, ErrorCode::InvalidArgument, "noise_sd needs one entry per variable");
  for (double sd : spec.noise_sd)
    require(std::isfinite(sd) && sd >= 0.0, ErrorCode::InvalidArgument, "noise_sd entries must be >= 0");
  require(!spec.regimes.empty(), ErrorCode::InvalidArgument, "scenario needs at least one regime");
  require(spec.regimes.front().start_time == 0, ErrorCode::InvalidArgument, "first regime must start at time 0");
  require(spec.initial.size() <= static_cast<std::size_t>(spec.tau_max), ErrorCode::InvalidArgument,
          "at most tau_max initial rows");
  for (const auto& row : spec.initial)
    require(row.size() == n, ErrorCode::InvalidArgument, "initial rows need one value per variable");

  for (std::size_t r = 0; r < spec.regimes.size(); ++r) {
    const auto& regime = spec.regimes[r];
    if (r > 0)
      require(regime.start_time > spec.regimes[r - 1].start_time, ErrorCode::InvalidArgument,
              "regime start times must be strictly increasing");
    std::vector<double> load(n, 0.0);
    std::set<LinkKey> seen;
    for (const auto& e : regime.edges) {
      require(e.cause < n && e.effect < n, ErrorCode::InvalidArgument, "edge variable out of range");
      require(e.lag >= 1 && e.lag <= spec.tau_max, ErrorCode::InvalidArgument, "edge lag outside [1, tau_max]");
      require(std::isfinite(e.coefficient), ErrorCode::InvalidArgument, "edge coefficient must be finite");
      require(seen.insert(LinkKey{e.cause, e.effect, e.lag}).second, ErrorCode::InvalidArgument,
              "duplicate edge in regime " + std::to_string(r));
      load[e.effect] += std::abs(e.coefficient);
    }
    for (std::size_t j = 0; j < n; ++j)
      require(load[j] <= kStabilityBound + 1e-12, ErrorCode::UnstableSpec,
              "regime " + std::to_string(r) + ": sum of |coefficients| into '" + spec.variables[j] + "' is " +
                  std::to_string(load[j]) + " > 0.9");
  }
}

/// True link sets per regime, read straight off the edge lists. Zero
/// coefficients are not links.
struct GroundTruth {
  VariableSet variables;
  std::vector<std::set<LinkKey>> regimes;
};

inline GroundTruth ground_truth(const ScenarioSpec& spec) {
  GroundTruth truth{spec.variables, {}};
  for (const auto& regime : spec.regimes) {
    std::set<LinkKey> links;
    for (const auto& e : regime.edges)
      if (e.coefficient != 0.0) links.insert(LinkKey{e.cause, e.effect, e.lag});
    truth.regimes.push_back(std::move(links));
  }
  return truth;
}

struct Metrics {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
};

/// Set-overlap scores of the model's links against one regime's truth. An
/// empty model has precision 1; an empty truth has recall 1.
inline Metrics evaluate(const std::set<LinkKey>& found, const std::set<LinkKey>& truth) {
  std::size_t hits = 0;
  for (const auto& k : found) hits += truth.contains(k) ? 1 : 0;
  Metrics m;
  m.precision = found.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(found.size());
  m.recall = truth.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(truth.size());
  m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

inline std::set<LinkKey> link_set(const CausalModel& model) {
  std::set<LinkKey> out;
  for (const auto& [key, s] : model.links()) out.insert(key);
  return out;
}

inline Metrics evaluate(const CausalModel& model, const GroundTruth& truth, std::size_t regime) {
  require(regime < truth.regimes.size(), ErrorCode::RegimeOutOfRange,
          "regime " + std::to_string(regime) + " of " + std::to_string(truth.regimes.size()));
  require(model.variables() == truth.variables, ErrorCode::ShapeMismatch, "model and scenario variables differ");
  return evaluate(link_set(model), truth.regimes[regime]);
}

struct Trace {
  TimeWindow window;
  std::vector<ExecutedInterval> executed;
};

/// Stateful generator: successive advance() calls continue the same
/// trajectory, keeping only the last tau_max rows as recurrence state.
class Simulator {
 public:
  explicit Simulator(ScenarioSpec spec)
      : spec_(std::move(spec)),
        noise_rng_(spec_.seed),
        signal_rng_(spec_.seed ^ 0x9e3779b97f4a7c15ULL),
        history_(static_cast<std::size_t>(spec_.tau_max), std::vector<double>(spec_.variables.size(), 0.0)) {
    validate(spec_);
  }

  const ScenarioSpec& spec() const { return spec_; }
  long time() const { return time_; }

  /// Generates the next `n` rows. A plan, if given, is executed from the
  /// start of this chunk; its schedule must fit inside the chunk.
  Trace advance(std::size_t n, const InterventionPlan* plan = nullptr, std::size_t capacity = 0) {
    require(n >= 1, ErrorCode::InvalidArgument, "cannot generate an empty chunk");
    const auto nvars = spec_.variables.size();
    std::vector<ExecutedInterval> executed;
    if (plan && !plan->empty()) {
      require(plan->duration >= 1, ErrorCode::ScheduleOutOfRange, "intervention duration must be positive");
      require(plan->span_length() <= n, ErrorCode::ScheduleOutOfRange,
              "plan needs " + std::to_string(plan->span_length()) + " samples, chunk has " + std::to_string(n));
      for (const auto& t : plan->targets)
        require(t.variable < nvars, ErrorCode::InvalidArgument, "plan targets an unknown variable");
      executed = schedule(*plan, time_);
    }

    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nvars));
    std::vector<double> row(nvars);
    std::vector<double> noise(nvars);
    const auto tau = static_cast<long>(spec_.tau_max);
    for (std::size_t s = 0; s < n; ++s, ++time_) {
      for (std::size_t j = 0; j < nvars; ++j) noise[j] = spec_.noise_sd[j] * normal_(noise_rng_);
      if (time_ < tau) {
        for (std::size_t j = 0; j < nvars; ++j) {
          const auto t = static_cast<std::size_t>(time_);
          row[j] = (t < spec_.initial.size() ? spec_.initial[t][j] : 0.0) + noise[j];
        }
      } else {
        const auto& regime = regime_at(time_);
        row = noise;
        for (const auto& e : regime.edges) row[e.effect] += e.coefficient * past(e.lag)[e.cause];
      }
      for (const auto& iv : executed)
        if (time_ >= iv.start && time_ < iv.end) row[iv.variable] = signal_value(plan->signal);
      history_[static_cast<std::size_t>(time_ % tau)] = row;
      for (std::size_t j = 0; j < nvars; ++j)
        out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = row[j];
    }

    const long start = time_ - static_cast<long>(n);
    TimeWindow window(spec_.variables, std::move(out), capacity == 0 ? n : capacity, start);
    if (!executed.empty()) window = annotate(std::move(window), *plan, executed);
    return Trace{std::move(window), std::move(executed)};
  }

 private:
  const Regime& regime_at(long t) const {
    auto it = std::upper_bound(spec_.regimes.begin(), spec_.regimes.end(), t,
                               [](long value, const Regime& r) { return value < r.start_time; });
    return *std::prev(it);
  }

  const std::vector<double>& past(int lag) const {
    return history_[static_cast<std::size_t>((time_ - lag) % spec_.tau_max)];
  }

  double signal_value(const Signal& signal) {
    if (signal.kind == Signal::Kind::Constant) return signal.value;
    return coin_(signal_rng_) ? signal.value : -signal.value;
  }

  ScenarioSpec spec_;
  std::mt19937_64 noise_rng_;
  std::mt19937_64 signal_rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::bernoulli_distribution coin_{0.5};
  std::vector<std::vector<double>> history_;
  long time_ = 0;
};

/// Full trace of `t_total` rows from time 0.
inline Trace generate(const ScenarioSpec& spec, std::size_t t_total, const InterventionPlan* plan = nullptr) {
  require(t_total > static_cast<std::size_t>(spec.tau_max), ErrorCode::InvalidArgument,
          "t_total must exceed tau_max");
  Simulator sim(spec);
  return sim.advance(t_total, plan);
}

inline nlohmann::ordered_json to_json(const ScenarioSpec& spec) {
  const auto& vars = spec.variables;
  nlohmann::ordered_json regimes = nlohmann::ordered_json::array();
  for (const auto& r : spec.regimes) {
    nlohmann::ordered_json edges = nlohmann::ordered_json::array();
    for (const auto& e : r.edges)
      edges.push_back(
          {{"cause", vars[e.cause]}, {"effect", vars[e.effect]}, {"lag", e.lag}, {"coefficient", e.coefficient}});
    regimes.push_back({{"start_time", r.start_time}, {"edges", std::move(edges)}});
  }
  nlohmann::ordered_json j{{"name", spec.name},       {"variables", vars.names()},
                           {"tau_max", spec.tau_max}, {"noise_sd", spec.noise_sd},
                           {"seed", spec.seed},       {"regimes", std::move(regimes)}};
  if (!spec.initial.empty()) j["initial"] = spec.initial;
  return j;
}

inline ScenarioSpec scenario_from_json(const nlohmann::json& doc) {
  try {
    ScenarioSpec spec;
    spec.name = doc.value("name", std::string("scenario"));
    spec.variables = VariableSet(doc.at("variables").get<std::vector<std::string>>());
    spec.tau_max = doc.at("tau_max").get<int>();
    spec.noise_sd = doc.at("noise_sd").get<std::vector<double>>();
    spec.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("initial")) spec.initial = doc.at("initial").get<std::vector<std::vector<double>>>();
    for (const auto& r : doc.at("regimes")) {
      Regime regime{r.at("start_time").get<long>(), {}};
      for (const auto& e : r.at("edges")) {
        regime.edges.push_back(Edge{spec.variables.at(e.at("cause").get<std::string>()),
                                    spec.variables.at(e.at("effect").get<std::string>()), e.at("lag").get<int>(),
                                    e.at("coefficient").get<double>()});
      }
      spec.regimes.push_back(std::move(regime));
    }
    validate(spec);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed scenario: ") + e.what());
  }
}

inline ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::InvalidArgument, "cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, "'" + path + "': " + e.what());
  }
  return scenario_from_json(doc);
}

}  // namespace crd
