#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crd/error.hpp"
#include "crd/intervention.hpp"
#include "crd/model.hpp"
#include "crd/pcmci.hpp"
#include "crd/timeseries.hpp"

namespace crd {

struct DiscoveryParams {
  PcmciParams pcmci;
  double alpha_link = 3e-4;
  double theta_s = 0.1;
};

struct StationarityReport {
  double disagreement = 0.0;
  bool stationary = true;
  std::vector<LinkKey> flipped_links;
};

namespace detail {

inline void require_same_shape(const VariableSet& a, int tau_a, const VariableSet& b, int tau_b) {
  require(a == b, ErrorCode::ShapeMismatch, "variable sets differ");
  require(tau_a == tau_b, ErrorCode::ShapeMismatch,
          "tau_max differs (" + std::to_string(tau_a) + " vs " + std::to_string(tau_b) + ")");
}

}  // namespace detail

/// Does the stored model still fit a freshly estimated matrix? Counts the
/// links whose significance decision differs between the two.
inline StationarityReport check_stationarity(const CausalModel& model, const InferenceMatrix& fresh, double alpha_link,
                                             double theta_s) {
  detail::require_same_shape(model.variables(), model.tau_max(), fresh.variables(), fresh.tau_max());
  require(theta_s >= 0.0 && theta_s <= 1.0, ErrorCode::InvalidArgument, "theta_s must lie in [0, 1]");
  StationarityReport report;
  for (std::size_t idx = 0; idx < fresh.cell_count(); ++idx) {
    const auto key = fresh.key_at(idx);
    const bool before = model.has_link(key);
    const bool now = fresh.p_value_at(idx) <= alpha_link;
    if (before != now) report.flipped_links.push_back(key);
  }
  report.disagreement =
      static_cast<double>(report.flipped_links.size()) / static_cast<double>(fresh.cell_count());
  report.stationary = report.disagreement <= theta_s;
  return report;
}

/// Cell-wise minimum-p merge of the stored model with a fresh matrix. The
/// winning side's statistic and provenance travel with the p-value; ties go
/// to the fresh side.
inline CausalModel merge_models(const CausalModel& old, const InferenceMatrix& fresh, double alpha_link, long run_id) {
  detail::require_same_shape(old.variables(), old.tau_max(), fresh.variables(), fresh.tau_max());
  const auto& prev = old.inference();
  InferenceMatrix merged(fresh.variables(), fresh.tau_max(), fresh.sample_count(), fresh.produced_at());
  std::vector<long> source_run(fresh.cell_count());
  std::vector<std::size_t> sample_count(fresh.cell_count());
  std::map<LinkKey, LinkStats> links;
  for (std::size_t idx = 0; idx < fresh.cell_count(); ++idx) {
    const bool take_fresh = fresh.p_value_at(idx) <= prev.p_value_at(idx);
    const auto& src = take_fresh ? fresh : prev;
    merged.set_at(idx, src.statistic_at(idx), src.p_value_at(idx));
    source_run[idx] = take_fresh ? run_id : old.cell_source_run()[idx];
    sample_count[idx] = take_fresh ? fresh.sample_count() : old.cell_sample_count()[idx];
    if (merged.p_value_at(idx) <= alpha_link) {
      links.emplace(merged.key_at(idx),
                    LinkStats{merged.statistic_at(idx), merged.p_value_at(idx), source_run[idx], sample_count[idx]});
    }
  }
  return CausalModel(std::move(merged), std::move(source_run), std::move(sample_count), std::move(links), alpha_link,
                     run_id);
}

struct Rediscovery {
  CausalModel model;
  std::size_t ci_tests = 0;
};

inline Rediscovery discover_cold(const TimeWindow& window, const DiscoveryParams& params, long run_id) {
  auto result = run_pcmci(window, params.pcmci);
  return {build_model(result.matrix, params.alpha_link, run_id), result.ci_tests};
}

/// Old links grouped by effect, strongest (by stored |statistic|) first.
inline CarryOver carry_over(const CausalModel& old) {
  CarryOver carry;
  carry.per_effect.resize(old.variables().size());
  std::vector<std::pair<LinkKey, double>> links;
  for (const auto& [key, s] : old.links()) links.emplace_back(key, s.statistic);
  std::sort(links.begin(), links.end(),
            [](const auto& a, const auto& b) { return detail::stronger(a.second, a.first, b.second, b.first); });
  for (const auto& [key, s] : links) carry.per_effect[key.effect].push_back(key);
  return carry;
}

/// Rediscovery after a scenario change, seeded with the old model's links.
/// Old links that remain unconditionally significant skip the higher-order
/// condition tests.
inline Rediscovery rediscover_warm(const CausalModel& old, const TimeWindow& window, const DiscoveryParams& params,
                                   long run_id) {
  detail::require_same_shape(old.variables(), old.tau_max(), window.variables(), params.pcmci.tau_max);
  const auto carry = carry_over(old);
  auto result = run_pcmci(window, params.pcmci, &carry);
  return {build_model(result.matrix, params.alpha_link, run_id), result.ci_tests};
}

enum class Branch { Cold, Stationary, NonStationary };

constexpr std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::Cold: return "cold";
    case Branch::Stationary: return "stationary";
    case Branch::NonStationary: return "non_stationary";
  }
  return "unknown";
}

struct RunRecord {
  long run_id = 0;
  Branch branch = Branch::Cold;
  double disagreement = 0.0;
  std::size_t flipped = 0;
  std::size_t link_count = 0;
  std::size_t ci_test_count = 0;
  std::optional<InterventionPlan> plan;
};

/// Everything a session keeps between windows. No samples live here.
struct SessionState {
  std::optional<CausalModel> current_model;
  long run_counter = 0;
  std::size_t ci_test_count_last_run = 0;
  std::vector<RunRecord> history;
};

/// One iteration of the continual loop over a standardized window.
inline SessionState step(SessionState state, const TimeWindow& window, const DiscoveryParams& params) {
  const long run_id = state.run_counter + 1;
  RunRecord record;
  record.run_id = run_id;

  if (!state.current_model) {
    auto cold = discover_cold(window, params, run_id);
    record.branch = Branch::Cold;
    record.ci_test_count = cold.ci_tests;
    state.current_model = std::move(cold.model);
  } else {
    const auto& old = *state.current_model;
    detail::require_same_shape(old.variables(), old.tau_max(), window.variables(), params.pcmci.tau_max);
    auto fresh = run_pcmci(window, params.pcmci);
    const auto report = check_stationarity(old, fresh.matrix, params.alpha_link, params.theta_s);
    record.disagreement = report.disagreement;
    record.flipped = report.flipped_links.size();
    record.ci_test_count = fresh.ci_tests;
    if (report.stationary) {
      record.branch = Branch::Stationary;
      state.current_model = merge_models(old, fresh.matrix, params.alpha_link, run_id);
    } else {
      record.branch = Branch::NonStationary;
      auto warm = rediscover_warm(old, window, params, run_id);
      record.ci_test_count += warm.ci_tests;
      state.current_model = std::move(warm.model);
    }
  }

  record.link_count = state.current_model->links().size();
  state.run_counter = run_id;
  state.ci_test_count_last_run = record.ci_test_count;
  state.history.push_back(std::move(record));
  return state;
}

inline nlohmann::ordered_json to_json(const RunRecord& r, const VariableSet& vars) {
  nlohmann::ordered_json j{{"run_id", r.run_id},
                           {"branch", std::string(to_string(r.branch))},
                           {"stationary", r.branch != Branch::NonStationary},
                           {"disagreement", r.disagreement},
                           {"flipped_links", r.flipped},
                           {"link_count", r.link_count},
                           {"ci_test_count", r.ci_test_count}};
  if (r.plan) j["plan"] = to_json(*r.plan, vars);
  return j;
}

}  // namespace crd
