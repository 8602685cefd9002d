#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crd/error.hpp"
#include "crd/link.hpp"
#include "crd/model.hpp"
#include "crd/timeseries.hpp"

namespace crd {

struct Signal {
  enum class Kind { RandomPulse, Constant };

  Kind kind = Kind::RandomPulse;
  double value = 3.0;  // amplitude for RandomPulse, level for Constant

  static Signal random_pulse(double amplitude) { return {Kind::RandomPulse, amplitude}; }
  static Signal constant(double level) { return {Kind::Constant, level}; }

  friend bool operator==(const Signal&, const Signal&) = default;
};

struct PlanTarget {
  std::size_t variable = 0;
  LinkKey link;
  double p_value = 0.0;

  friend bool operator==(const PlanTarget&, const PlanTarget&) = default;
};

/// Do-interventions to run one after another, each for `duration` samples,
/// starting `start` samples into the next generated window.
struct InterventionPlan {
  std::vector<PlanTarget> targets;
  std::size_t duration = 0;
  Signal signal;
  std::size_t start = 0;

  bool empty() const { return targets.empty(); }
  std::size_t span_length() const { return start + targets.size() * duration; }

  friend bool operator==(const InterventionPlan&, const InterventionPlan&) = default;
};

/// Half-open global time interval [start, end) during which `variable` was
/// forced by the plan's signal.
struct ExecutedInterval {
  std::size_t variable = 0;
  long start = 0;
  long end = 0;

  friend bool operator==(const ExecutedInterval&, const ExecutedInterval&) = default;
};

/// Ranks the model's retained links from least to most reliable (p-value
/// descending) and targets their cause variables, each variable once.
inline InterventionPlan suggest(const CausalModel& model, std::size_t k, double alpha_link, std::size_t duration,
                                Signal signal = Signal{}) {
  require(k >= 1, ErrorCode::InvalidArgument, "k must be at least 1");
  std::vector<std::pair<LinkKey, double>> ranked;
  for (const auto& [key, stats] : model.links())
    if (stats.p_value <= alpha_link) ranked.emplace_back(key, stats.p_value);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  InterventionPlan plan;
  plan.duration = duration;
  plan.signal = signal;
  for (const auto& [key, p] : ranked) {
    if (plan.targets.size() == k) break;
    const bool seen = std::any_of(plan.targets.begin(), plan.targets.end(),
                                  [&](const PlanTarget& t) { return t.variable == key.cause; });
    if (!seen) plan.targets.push_back({key.cause, key, p});
  }
  return plan;
}

/// Sequential schedule of the plan over a window starting at `window_start`.
inline std::vector<ExecutedInterval> schedule(const InterventionPlan& plan, long window_start) {
  std::vector<ExecutedInterval> out;
  long t = window_start + static_cast<long>(plan.start);
  for (const auto& target : plan.targets) {
    out.push_back({target.variable, t, t + static_cast<long>(plan.duration)});
    t += static_cast<long>(plan.duration);
  }
  return out;
}

/// Marks the executed intervention cells in the window's mask.
inline TimeWindow annotate(TimeWindow window, const InterventionPlan& plan,
                           std::span<const ExecutedInterval> executed) {
  auto& mask = window.mutable_mask();
  for (const auto& iv : executed) {
    require(iv.variable < window.cols(), ErrorCode::RangeError, "intervened variable index out of range");
    require(iv.start <= iv.end && iv.start >= window.start_index() && iv.end <= window.end_index(),
            ErrorCode::RangeError,
            "interval [" + std::to_string(iv.start) + ", " + std::to_string(iv.end) + ") outside window [" +
                std::to_string(window.start_index()) + ", " + std::to_string(window.end_index()) + ")");
    require(plan.empty() || std::any_of(plan.targets.begin(), plan.targets.end(),
                                        [&](const PlanTarget& t) { return t.variable == iv.variable; }),
            ErrorCode::InvalidArgument, "executed interval on a variable the plan does not target");
    const auto from = static_cast<Eigen::Index>(iv.start - window.start_index());
    const auto len = static_cast<Eigen::Index>(iv.end - iv.start);
    mask.col(static_cast<Eigen::Index>(iv.variable)).segment(from, len).setConstant(true);
  }
  return window;
}

inline nlohmann::ordered_json to_json(const InterventionPlan& plan, const VariableSet& vars) {
  nlohmann::ordered_json targets = nlohmann::ordered_json::array();
  for (const auto& t : plan.targets) {
    targets.push_back({{"variable", vars[t.variable]},
                       {"link", {{"cause", vars[t.link.cause]}, {"effect", vars[t.link.effect]}, {"lag", t.link.lag}}},
                       {"p_value", t.p_value}});
  }
  nlohmann::ordered_json signal;
  if (plan.signal.kind == Signal::Kind::RandomPulse) {
    signal = {{"kind", "random_pulse"}, {"amplitude", plan.signal.value}};
  } else {
    signal = {{"kind", "constant"}, {"level", plan.signal.value}};
  }
  return nlohmann::ordered_json{{"targets", std::move(targets)},
                                {"duration", plan.duration},
                                {"start", plan.start},
                                {"signal", std::move(signal)},
                                {"schedule", "sequential"}};
}

inline InterventionPlan plan_from_json(const nlohmann::json& doc, const VariableSet& vars) {
  try {
    InterventionPlan plan;
    plan.duration = doc.at("duration").get<std::size_t>();
    plan.start = doc.value("start", std::size_t{0});
    require(doc.value("schedule", std::string("sequential")) == "sequential", ErrorCode::InvalidArgument,
            "only sequential schedules are supported");
    const auto& sig = doc.at("signal");
    const auto kind = sig.at("kind").get<std::string>();
    if (kind == "random_pulse") {
      plan.signal = Signal::random_pulse(sig.at("amplitude").get<double>());
    } else if (kind == "constant") {
      plan.signal = Signal::constant(sig.at("level").get<double>());
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown signal kind '" + kind + "'");
    }
    for (const auto& t : doc.at("targets")) {
      PlanTarget target;
      target.variable = vars.at(t.at("variable").get<std::string>());
      if (t.contains("link")) {
        const auto& l = t.at("link");
        target.link = LinkKey{vars.at(l.at("cause").get<std::string>()), vars.at(l.at("effect").get<std::string>()),
                              l.at("lag").get<int>()};
      } else {
        target.link = LinkKey{target.variable, target.variable, 1};
      }
      target.p_value = t.value("p_value", 0.0);
      require(std::none_of(plan.targets.begin(), plan.targets.end(),
                           [&](const PlanTarget& p) { return p.variable == target.variable; }),
              ErrorCode::InvalidArgument, "duplicate target variable '" + vars[target.variable] + "'");
      plan.targets.push_back(target);
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed plan: ") + e.what());
  }
}

inline InterventionPlan load_plan(const std::string& path, const VariableSet& vars) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::InvalidArgument, "cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, "'" + path + "': " + e.what());
  }
  return plan_from_json(doc, vars);
}

}  // namespace crd
