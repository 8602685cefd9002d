#pragma once

#include <cassert>
#include <cstddef>
#include <functional>
#include <optional>
#include <utility>

#include "crd/config.hpp"
#include "crd/continual.hpp"
#include "crd/intervention.hpp"
#include "crd/simulator.hpp"
#include "crd/timeseries.hpp"

namespace crd {

struct SessionOptions {
  bool interventions = false;
  Signal signal = Signal::random_pulse(3.0);
};

/// Drives the continual loop one raw window at a time. Each window is
/// standardized, consumed by step(), and dropped; only the model survives.
/// With interventions enabled, every stationary run proposes a plan for the
/// next window.
class ContinualSession {
 public:
  ContinualSession(EngineConfig config, SessionOptions options = {})
      : config_(std::move(config)), params_(config_.discovery()), options_(options) {
    validate(config_);
  }

  const RunRecord& process(TimeWindow window) {
    window = standardize(std::move(window));
    state_ = step(std::move(state_), window, params_);
    auto& record = state_.history.back();
    pending_.reset();
    if (options_.interventions && record.branch == Branch::Stationary) {
      auto plan = suggest(*state_.current_model, config_.intervention_k, config_.alpha_link, 0, options_.signal);
      if (!plan.empty()) {
        plan.duration = config_.window_capacity / plan.targets.size();
        record.plan = plan;
        pending_ = std::move(plan);
      }
    }
    return record;
  }

  const SessionState& state() const { return state_; }
  const EngineConfig& config() const { return config_; }
  const std::optional<InterventionPlan>& pending_plan() const { return pending_; }

 private:
  EngineConfig config_;
  DiscoveryParams params_;
  SessionOptions options_;
  SessionState state_;
  std::optional<InterventionPlan> pending_;
};

/// Closed loop against the simulator: generates window_capacity rows per
/// window, executing the previous run's plan when there is one.
inline SessionState run_live(const ScenarioSpec& spec, const EngineConfig& config, std::size_t windows,
                             SessionOptions options = {},
                             const std::function<void(const RunRecord&)>& on_record = {}) {
  Simulator sim(spec);
  ContinualSession session(config, options);
  [[maybe_unused]] const auto baseline = SampleMeter::retained();
  for (std::size_t w = 0; w < windows; ++w) {
    const InterventionPlan* plan = session.pending_plan() ? &*session.pending_plan() : nullptr;
    auto trace = sim.advance(config.window_capacity, plan, config.window_capacity);
    const auto& record = session.process(std::move(trace.window));
    assert(SampleMeter::retained() - baseline <= config.window_capacity);
    if (on_record) on_record(record);
  }
  return session.state();
}

}  // namespace crd
