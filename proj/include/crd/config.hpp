#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "crd/continual.hpp"
#include "crd/error.hpp"
#include "crd/timeseries.hpp"

namespace crd {

/// Engine parameters in one place. Loaded from a JSON object whose keys are
/// exactly these field names; anything else is rejected.
struct EngineConfig {
  int tau_max = 3;
  double alpha_pc = 0.05;
  double alpha_link = 3e-4;
  double theta_s = 0.1;
  std::size_t window_capacity = kDefaultWindowCapacity;
  int max_conds = 3;
  int max_px = 1;
  std::size_t intervention_k = 1;
  std::uint64_t seed = 0;

  DiscoveryParams discovery() const {
    DiscoveryParams p;
    p.pcmci.tau_max = tau_max;
    p.pcmci.alpha_pc = alpha_pc;
    p.pcmci.max_conds = max_conds;
    p.pcmci.max_px = max_px;
    p.alpha_link = alpha_link;
    p.theta_s = theta_s;
    return p;
  }
};

inline void validate(const EngineConfig& c) {
  require(c.alpha_pc > 0.0 && c.alpha_pc < 1.0, ErrorCode::InvalidArgument, "alpha_pc must lie in (0, 1)");
  require(c.alpha_link > 0.0 && c.alpha_link < 1.0, ErrorCode::InvalidArgument, "alpha_link must lie in (0, 1)");
  require(c.theta_s >= 0.0 && c.theta_s <= 1.0, ErrorCode::InvalidArgument, "theta_s must lie in [0, 1]");
  require(c.tau_max >= 1, ErrorCode::InvalidArgument, "tau_max must be at least 1");
  require(c.max_conds >= 0 && c.max_px >= 0, ErrorCode::InvalidArgument, "max_conds and max_px must be >= 0");
  require(c.window_capacity > static_cast<std::size_t>(c.tau_max + c.max_conds + 4), ErrorCode::InvalidArgument,
          "window_capacity must exceed tau_max + max_conds + 4");
  require(c.intervention_k >= 1, ErrorCode::InvalidArgument, "intervention_k must be at least 1");
}

inline EngineConfig config_from_json(const nlohmann::json& doc) {
  require(doc.is_object(), ErrorCode::InvalidArgument, "config must be a JSON object");
  EngineConfig c;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "tau_max") c.tau_max = value.get<int>();
      else if (key == "alpha_pc") c.alpha_pc = value.get<double>();
      else if (key == "alpha_link") c.alpha_link = value.get<double>();
      else if (key == "theta_s") c.theta_s = value.get<double>();
      else if (key == "window_capacity") c.window_capacity = value.get<std::size_t>();
      else if (key == "max_conds") c.max_conds = value.get<int>();
      else if (key == "max_px") c.max_px = value.get<int>();
      else if (key == "intervention_k") c.intervention_k = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
  }
  validate(c);
  return c;
}

inline nlohmann::ordered_json to_json(const EngineConfig& c) {
  return {{"tau_max", c.tau_max},         {"alpha_pc", c.alpha_pc},   {"alpha_link", c.alpha_link},
          {"theta_s", c.theta_s},         {"window_capacity", c.window_capacity},
          {"max_conds", c.max_conds},     {"max_px", c.max_px},       {"intervention_k", c.intervention_k},
          {"seed", c.seed}};
}

inline EngineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::InvalidArgument, "cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, "'" + path + "': " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace crd
