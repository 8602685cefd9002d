#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crd/error.hpp"
#include "crd/link.hpp"
#include "crd/pcmci.hpp"
#include "crd/timeseries.hpp"

namespace crd {

inline constexpr int kModelSchemaVersion = 1;

/// The stored causal model: retained links plus the full inference matrix
/// they were drawn from, with per-cell provenance (which run produced each
/// cell and from how many samples).
class CausalModel {
 public:
  CausalModel() = default;

  CausalModel(InferenceMatrix inference, std::vector<long> cell_source_run, std::vector<std::size_t> cell_sample_count,
              std::map<LinkKey, LinkStats> links, double alpha_link, long run_counter)
      : inference_(std::move(inference)),
        cell_source_run_(std::move(cell_source_run)),
        cell_sample_count_(std::move(cell_sample_count)),
        links_(std::move(links)),
        alpha_link_(alpha_link),
        run_counter_(run_counter) {
    require(alpha_link_ > 0.0 && alpha_link_ < 1.0, ErrorCode::InvalidArgument, "alpha_link must lie in (0, 1)");
    require(run_counter_ >= 0, ErrorCode::InvalidArgument, "run counter must be non-negative");
    require(cell_source_run_.size() == inference_.cell_count() && cell_sample_count_.size() == inference_.cell_count(),
            ErrorCode::ShapeMismatch, "provenance arrays must cover every inference cell");
    for (const auto& [key, stats] : links_) {
      require(key.lag >= 1, ErrorCode::InvalidArgument, "links must have lag >= 1");
      require(inference_.is_legal(key), ErrorCode::InvalidArgument, "link outside the variable set or tau_max");
      require(stats.p_value >= 0.0 && stats.p_value <= alpha_link_, ErrorCode::InvalidArgument,
              "retained link p-value exceeds alpha_link");
      require(stats.statistic >= -1.0 && stats.statistic <= 1.0, ErrorCode::InvalidArgument,
              "link statistic outside [-1, 1]");
      require(stats.source_run >= 0, ErrorCode::InvalidArgument, "source_run must be non-negative");
    }
  }

  const VariableSet& variables() const { return inference_.variables(); }
  int tau_max() const { return inference_.tau_max(); }
  const InferenceMatrix& inference() const { return inference_; }
  const std::vector<long>& cell_source_run() const { return cell_source_run_; }
  const std::vector<std::size_t>& cell_sample_count() const { return cell_sample_count_; }
  const std::map<LinkKey, LinkStats>& links() const { return links_; }
  double alpha_link() const { return alpha_link_; }
  long run_counter() const { return run_counter_; }
  int schema_version() const { return kModelSchemaVersion; }
  bool has_link(const LinkKey& key) const { return links_.contains(key); }

  friend bool operator==(const CausalModel&, const CausalModel&) = default;

 private:
  InferenceMatrix inference_;
  std::vector<long> cell_source_run_;
  std::vector<std::size_t> cell_sample_count_;
  std::map<LinkKey, LinkStats> links_;
  double alpha_link_ = 3e-4;
  long run_counter_ = 0;
};

inline CausalModel build_model(const InferenceMatrix& matrix, double alpha_link, long run_id) {
  auto links = significant_links(matrix, alpha_link);
  for (auto& [key, stats] : links) stats.source_run = run_id;
  return CausalModel(matrix, std::vector<long>(matrix.cell_count(), run_id),
                     std::vector<std::size_t>(matrix.cell_count(), matrix.sample_count()), std::move(links),
                     alpha_link, run_id);
}

// Serialization. Doubles go through nlohmann's shortest round-trip
// formatting, so load(save(m)) reproduces every cell bit-for-bit.

inline nlohmann::ordered_json to_json(const CausalModel& model) {
  const auto& vars = model.variables();
  nlohmann::ordered_json links = nlohmann::ordered_json::array();
  for (const auto& [key, s] : model.links()) {
    links.push_back({{"cause", vars[key.cause]},
                     {"effect", vars[key.effect]},
                     {"lag", key.lag},
                     {"statistic", s.statistic},
                     {"p_value", s.p_value},
                     {"source_run", s.source_run},
                     {"sample_count", s.sample_count}});
  }
  const auto& m = model.inference();
  nlohmann::ordered_json inference{
      {"sample_count", m.sample_count()},
      {"produced_at", m.produced_at()},
      {"statistic", std::vector<double>(m.statistics().begin(), m.statistics().end())},
      {"p_value", std::vector<double>(m.p_values().begin(), m.p_values().end())},
      {"source_run", model.cell_source_run()},
      {"cell_sample_count", model.cell_sample_count()},
  };
  return nlohmann::ordered_json{
      {"schema_version", model.schema_version()},
      {"variables", vars.names()},
      {"tau_max", model.tau_max()},
      {"alpha_link", model.alpha_link()},
      {"run_counter", model.run_counter()},
      {"links", std::move(links)},
      {"inference", std::move(inference)},
  };
}

inline CausalModel model_from_json(const nlohmann::json& doc) {
  require(doc.is_object(), ErrorCode::CorruptFile, "model document is not an object");
  auto version = doc.find("schema_version");
  require(version != doc.end() && version->is_number_integer(), ErrorCode::CorruptFile, "missing schema_version");
  require(version->get<long>() == kModelSchemaVersion, ErrorCode::SchemaVersionUnsupported,
          "schema_version " + version->dump() + " (supported: " + std::to_string(kModelSchemaVersion) + ")");
  try {
    VariableSet vars(doc.at("variables").get<std::vector<std::string>>());
    const auto tau_max = doc.at("tau_max").get<int>();
    const auto& inf = doc.at("inference");
    InferenceMatrix matrix(vars, tau_max, inf.at("sample_count").get<std::size_t>(), inf.at("produced_at").get<long>());
    const auto stats = inf.at("statistic").get<std::vector<double>>();
    const auto pvals = inf.at("p_value").get<std::vector<double>>();
    require(stats.size() == matrix.cell_count() && pvals.size() == matrix.cell_count(), ErrorCode::CorruptFile,
            "inference arrays do not match variables and tau_max");
    for (std::size_t i = 0; i < stats.size(); ++i) matrix.set_at(i, stats[i], pvals[i]);

    std::map<LinkKey, LinkStats> links;
    for (const auto& l : doc.at("links")) {
      LinkKey key{vars.at(l.at("cause").get<std::string>()), vars.at(l.at("effect").get<std::string>()),
                  l.at("lag").get<int>()};
      LinkStats s{l.at("statistic").get<double>(), l.at("p_value").get<double>(), l.at("source_run").get<long>(),
                  l.at("sample_count").get<std::size_t>()};
      require(links.emplace(key, s).second, ErrorCode::CorruptFile, "duplicate link in model file");
    }
    return CausalModel(std::move(matrix), inf.at("source_run").get<std::vector<long>>(),
                       inf.at("cell_sample_count").get<std::vector<std::size_t>>(), std::move(links),
                       doc.at("alpha_link").get<double>(), doc.at("run_counter").get<long>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptFile) throw;
    throw Error(ErrorCode::CorruptFile, e.what());
  }
}

inline std::string dump_model(const CausalModel& model) { return to_json(model).dump(2) + "\n"; }

inline void save(const CausalModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  out << dump_model(model);
  require(out.good(), ErrorCode::InvalidArgument, "failed writing '" + path + "'");
}

inline CausalModel parse_model(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::CorruptFile, e.what());
  }
  return model_from_json(doc);
}

inline CausalModel load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::InvalidArgument, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

inline std::string format_p(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%#.3g", p);
  return buf;
}

/// Graphviz digraph: one node per variable, one edge per retained link.
inline std::string export_dot(const CausalModel& model) {
  const auto& vars = model.variables();
  auto quote = [](const std::string& s) { return nlohmann::json(s).dump(); };
  std::ostringstream out;
  out << "digraph causal_model {\n";
  for (const auto& name : vars.names()) out << "  " << quote(name) << ";\n";
  for (const auto& [key, s] : model.links()) {
    out << "  " << quote(vars[key.cause]) << " -> " << quote(vars[key.effect]) << " [label=\"lag=" << key.lag
        << ", p=" << format_p(s.p_value) << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace crd
