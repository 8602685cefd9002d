#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "crd/error.hpp"
#include "crd/simulator.hpp"

// Seeded scenario library used by the acceptance suite and the CLI.
namespace crd::scenarios {

namespace detail {

inline ScenarioSpec make(std::string name, std::vector<std::string> vars, int tau_max, std::vector<Regime> regimes,
                         std::uint64_t seed) {
  ScenarioSpec spec;
  spec.name = std::move(name);
  spec.noise_sd.assign(vars.size(), 1.0);
  spec.variables = VariableSet(std::move(vars));
  spec.tau_max = tau_max;
  spec.regimes = std::move(regimes);
  spec.seed = seed;
  validate(spec);
  return spec;
}

}  // namespace detail

// x -> y -> z, no autocorrelation.
inline ScenarioSpec chain(std::uint64_t seed = 0) {
  return detail::make("chain", {"x", "y", "z"}, 2, {{0, {{0, 1, 1, 0.7}, {1, 2, 1, 0.7}}}}, seed);
}

// x drives y and z at different lags.
inline ScenarioSpec fork(std::uint64_t seed = 0) {
  return detail::make("fork", {"x", "y", "z"}, 2, {{0, {{0, 0, 1, 0.4}, {0, 1, 1, 0.6}, {0, 2, 2, 0.5}}}}, seed);
}

// x and y both drive z.
inline ScenarioSpec collider(std::uint64_t seed = 0) {
  return detail::make("collider", {"x", "y", "z"}, 2, {{0, {{0, 2, 1, 0.5}, {1, 2, 2, 0.4}, {1, 1, 1, 0.4}}}}, seed);
}

inline ScenarioSpec autocorrelated4(std::uint64_t seed = 0) {
  return detail::make("autocorrelated4", {"a", "b", "c", "d"}, 3,
                      {{0,
                        {{0, 0, 1, 0.6},
                         {1, 1, 1, 0.5},
                         {0, 1, 2, 0.3},
                         {1, 2, 1, 0.4},
                         {2, 2, 1, 0.4},
                         {2, 3, 3, 0.4},
                         {3, 3, 2, 0.3}}}},
                      seed);
}

inline constexpr long kRegimeSwitchTime = 2000;

// Half of the regime-0 links survive the switch at t = 2000.
inline ScenarioSpec regime_switching3(std::uint64_t seed = 0) {
  return detail::make("regime_switching3", {"x", "y", "z"}, 2,
                      {{0, {{0, 0, 1, 0.5}, {0, 1, 1, 0.6}, {1, 2, 1, 0.5}, {2, 2, 1, 0.4}}},
                       {kRegimeSwitchTime, {{0, 0, 1, 0.5}, {0, 1, 1, 0.6}, {2, 1, 2, 0.3}, {2, 0, 1, 0.4}}}},
                      seed);
}

// A single weak x -> y link, used to exercise interventions.
inline ScenarioSpec weak_link(std::uint64_t seed = 0) {
  return detail::make("weak_link", {"x", "y"}, 3, {{0, {{0, 1, 1, 0.15}}}}, seed);
}

/// The five-scenario recovery corpus.
inline std::vector<ScenarioSpec> library(std::uint64_t seed = 0) {
  return {chain(seed), fork(seed), collider(seed), autocorrelated4(seed), regime_switching3(seed)};
}

inline ScenarioSpec by_name(std::string_view name, std::uint64_t seed = 0) {
  if (name == "chain") return chain(seed);
  if (name == "fork") return fork(seed);
  if (name == "collider") return collider(seed);
  if (name == "autocorrelated4") return autocorrelated4(seed);
  if (name == "regime_switching3") return regime_switching3(seed);
  if (name == "weak_link") return weak_link(seed);
  throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + std::string(name) + "'");
}

inline std::vector<std::string> names() {
  return {"chain", "fork", "collider", "autocorrelated4", "regime_switching3", "weak_link"};
}

}  // namespace crd::scenarios
