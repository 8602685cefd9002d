#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crd/error.hpp"

namespace crd {

inline constexpr std::size_t kDefaultWindowCapacity = 500;

/// Ordered, fixed list of variable names. Every matrix in the engine is
/// indexed by this order.
class VariableSet {
 public:
  VariableSet() = default;

  explicit VariableSet(std::vector<std::string> names) : names_(std::move(names)) {
    require(names_.size() >= 2, ErrorCode::InvalidArgument, "a variable set needs at least two variables");
    std::unordered_set<std::string_view> seen;
    for (const auto& name : names_) {
      require(!name.empty(), ErrorCode::InvalidArgument, "variable names must be non-empty");
      require(seen.insert(name).second, ErrorCode::InvalidArgument, "duplicate variable name '" + name + "'");
    }
  }

  std::size_t size() const { return names_.size(); }
  const std::string& operator[](std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names_.begin());
  }

  std::size_t at(std::string_view name) const {
    auto idx = index_of(name);
    require(idx.has_value(), ErrorCode::InvalidArgument, "unknown variable '" + std::string(name) + "'");
    return *idx;
  }

  friend bool operator==(const VariableSet&, const VariableSet&) = default;

 private:
  std::vector<std::string> names_;
};

/// Process-wide count of sample rows held by live TimeWindow objects, with
/// a high-water mark. This is the instrumentation behind the memory bound.
class SampleMeter {
 public:
  static std::size_t retained() { return live().load(); }
  static std::size_t peak() { return high().load(); }
  static void reset_peak() { high().store(live().load()); }

  static void add(std::size_t rows) {
    const std::size_t now = live().fetch_add(rows) + rows;
    std::size_t prev = high().load();
    while (now > prev && !high().compare_exchange_weak(prev, now)) {
    }
  }
  static void remove(std::size_t rows) { live().fetch_sub(rows); }

 private:
  static std::atomic<std::size_t>& live() {
    static std::atomic<std::size_t> value{0};
    return value;
  }
  static std::atomic<std::size_t>& high() {
    static std::atomic<std::size_t> value{0};
    return value;
  }
};

namespace detail {

// Registers a row count with SampleMeter for as long as it lives.
class RowTicket {
 public:
  RowTicket() = default;
  explicit RowTicket(std::size_t rows) : rows_(rows) { SampleMeter::add(rows_); }
  RowTicket(const RowTicket& other) : rows_(other.rows_) { SampleMeter::add(rows_); }
  RowTicket(RowTicket&& other) noexcept : rows_(std::exchange(other.rows_, 0)) {}
  RowTicket& operator=(const RowTicket& other) {
    if (this != &other) resize(other.rows_);
    return *this;
  }
  RowTicket& operator=(RowTicket&& other) noexcept {
    if (this != &other) {
      SampleMeter::remove(rows_);
      rows_ = std::exchange(other.rows_, 0);
    }
    return *this;
  }
  ~RowTicket() { SampleMeter::remove(rows_); }

  void resize(std::size_t rows) {
    if (rows > rows_) {
      SampleMeter::add(rows - rows_);
    } else {
      SampleMeter::remove(rows_ - rows);
    }
    rows_ = rows;
  }

 private:
  std::size_t rows_ = 0;
};

}  // namespace detail

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Bounded buffer of multivariate samples (row = time step, column =
/// variable). Holds at most `capacity` rows; appends past that evict the
/// oldest rows and advance start_index.
class TimeWindow {
 public:
  TimeWindow(VariableSet variables, Eigen::MatrixXd samples, std::size_t capacity = kDefaultWindowCapacity,
             long start_index = 0)
      : variables_(std::move(variables)), capacity_(capacity), start_index_(start_index) {
    require(capacity_ >= 1, ErrorCode::InvalidArgument, "window capacity must be positive");
    require(samples.rows() >= 1, ErrorCode::TooFewSamples, "a window needs at least one row");
    require(static_cast<std::size_t>(samples.cols()) == variables_.size(), ErrorCode::ShapeMismatch,
            "sample columns do not match the variable count");
    require(samples.allFinite(), ErrorCode::NonNumericCell, "samples contain NaN or infinite values");
    const auto rows = static_cast<std::size_t>(samples.rows());
    if (rows > capacity_) {
      const auto drop = rows - capacity_;
      samples_ = samples.bottomRows(static_cast<Eigen::Index>(capacity_));
      start_index_ += static_cast<long>(drop);
    } else {
      samples_ = std::move(samples);
    }
    constant_.assign(variables_.size(), false);
    ticket_ = detail::RowTicket(this->rows());
  }

  const VariableSet& variables() const { return variables_; }
  const Eigen::MatrixXd& samples() const { return samples_; }
  std::size_t rows() const { return static_cast<std::size_t>(samples_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(samples_.cols()); }
  std::size_t capacity() const { return capacity_; }
  long start_index() const { return start_index_; }
  long end_index() const { return start_index_ + static_cast<long>(rows()); }

  const std::optional<BoolMatrix>& intervention_mask() const { return mask_; }
  BoolMatrix& mutable_mask() {
    if (!mask_) mask_ = BoolMatrix::Constant(samples_.rows(), samples_.cols(), false);
    return *mask_;
  }

  /// Columns that standardize() found constant and zeroed.
  const std::vector<bool>& constant_columns() const { return constant_; }

  void append(const Eigen::MatrixXd& rows) {
    require(rows.rows() >= 1, ErrorCode::ShapeMismatch, "append needs at least one row");
    require(rows.cols() == samples_.cols(), ErrorCode::ShapeMismatch,
            "appended rows have " + std::to_string(rows.cols()) + " columns, expected " +
                std::to_string(samples_.cols()));
    require(rows.allFinite(), ErrorCode::NonNumericCell, "appended rows contain NaN or infinite values");

    const std::size_t total = this->rows() + static_cast<std::size_t>(rows.rows());
    const std::size_t kept = std::min(total, capacity_);
    const std::size_t drop = total - kept;

    Eigen::MatrixXd next(static_cast<Eigen::Index>(kept), samples_.cols());
    const auto from_old = static_cast<Eigen::Index>(this->rows() > drop ? this->rows() - drop : 0);
    const auto from_new = static_cast<Eigen::Index>(kept) - from_old;
    if (from_old > 0) next.topRows(from_old) = samples_.bottomRows(from_old);
    next.bottomRows(from_new) = rows.bottomRows(from_new);

    if (mask_) {
      BoolMatrix mask = BoolMatrix::Constant(next.rows(), next.cols(), false);
      if (from_old > 0) mask.topRows(from_old) = mask_->bottomRows(from_old);
      mask_ = std::move(mask);
    }
    samples_ = std::move(next);
    start_index_ += static_cast<long>(drop);
    ticket_.resize(kept);
  }

  friend TimeWindow standardize(TimeWindow window);

 private:
  VariableSet variables_;
  Eigen::MatrixXd samples_;
  std::size_t capacity_;
  long start_index_;
  std::optional<BoolMatrix> mask_;
  std::vector<bool> constant_;
  detail::RowTicket ticket_;
};

/// Zero mean, unit population standard deviation per column. Constant
/// columns (sd below 1e-12) become all-zero and are flagged.
inline TimeWindow standardize(TimeWindow window) {
  require(window.rows() >= 2, ErrorCode::TooFewSamples, "standardize needs at least two rows");
  auto& x = window.samples_;
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    auto col = x.col(j);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / n);
    if (sd < 1e-12) {
      col.setZero();
      window.constant_[static_cast<std::size_t>(j)] = true;
    } else {
      col /= sd;
      window.constant_[static_cast<std::size_t>(j)] = false;
    }
  }
  return window;
}

enum class DataFormat { Csv, Jsonl };

inline DataFormat format_from_path(const std::string& path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".jsonl") || ends_with(".ndjson")) return DataFormat::Jsonl;
  if (ends_with(".csv")) return DataFormat::Csv;
  throw Error(ErrorCode::InvalidArgument, "cannot infer data format from '" + path + "' (expected .csv or .jsonl)");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_number(std::string_view cell) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

// Accumulates parsed rows and flushes them into a capacity-bounded window
// in small blocks so ingest never holds more than capacity + block rows.
class WindowBuilder {
 public:
  WindowBuilder(VariableSet vars, std::size_t capacity) : vars_(std::move(vars)), capacity_(capacity) {}

  void push(const std::vector<double>& row) {
    pending_.push_back(row);
    if (pending_.size() >= kBlock) flush();
  }

  std::optional<TimeWindow> finish() {
    flush();
    return std::move(window_);
  }

 private:
  static constexpr std::size_t kBlock = 64;

  void flush() {
    if (pending_.empty()) return;
    Eigen::MatrixXd block(static_cast<Eigen::Index>(pending_.size()), static_cast<Eigen::Index>(vars_.size()));
    for (std::size_t r = 0; r < pending_.size(); ++r)
      for (std::size_t c = 0; c < vars_.size(); ++c)
        block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = pending_[r][c];
    if (window_) {
      window_->append(block);
    } else {
      window_.emplace(vars_, std::move(block), capacity_, 0);
    }
    pending_.clear();
  }

  VariableSet vars_;
  std::size_t capacity_;
  std::vector<std::vector<double>> pending_;
  std::optional<TimeWindow> window_;
};

inline std::vector<std::string> csv_header(std::istream& in, const std::string& path) {
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      std::vector<std::string> names;
      for (auto cell : split_csv(line)) names.emplace_back(cell);
      return names;
    }
  }
  throw Error(ErrorCode::EmptyFile, "'" + path + "' has no header row");
}

inline TimeWindow ingest_csv(std::istream& in, const std::string& path, const std::optional<VariableSet>& wanted,
                             std::size_t capacity) {
  const auto header = csv_header(in, path);
  const VariableSet vars = wanted ? *wanted : VariableSet(header);
  std::vector<std::size_t> source(vars.size());
  for (std::size_t v = 0; v < vars.size(); ++v) {
    auto it = std::find(header.begin(), header.end(), vars[v]);
    require(it != header.end(), ErrorCode::MissingColumn, "column '" + vars[v] + "' not found in '" + path + "'");
    source[v] = static_cast<std::size_t>(it - header.begin());
  }

  WindowBuilder builder(vars, capacity);
  std::string line;
  std::vector<double> row(vars.size());
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    require(cells.size() == header.size(), ErrorCode::ShapeMismatch,
            "row " + std::to_string(data_row) + " has " + std::to_string(cells.size()) + " cells, header has " +
                std::to_string(header.size()));
    for (std::size_t v = 0; v < vars.size(); ++v) {
      auto value = parse_number(cells[source[v]]);
      require(value.has_value(), ErrorCode::NonNumericCell,
              "row " + std::to_string(data_row) + ", column '" + vars[v] + "': '" + std::string(cells[source[v]]) +
                  "'");
      row[v] = *value;
    }
    builder.push(row);
    ++data_row;
  }
  auto window = builder.finish();
  require(window.has_value(), ErrorCode::EmptyFile, "'" + path + "' has a header but no data rows");
  return std::move(*window);
}

inline TimeWindow ingest_jsonl(std::istream& in, const std::string& path, const std::optional<VariableSet>& wanted,
                               std::size_t capacity) {
  std::optional<VariableSet> vars = wanted;
  std::optional<WindowBuilder> builder;
  std::string line;
  std::size_t data_row = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    nlohmann::ordered_json obj;
    try {
      obj = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::CorruptFile, "row " + std::to_string(data_row) + " of '" + path + "': " + e.what());
    }
    require(obj.is_object(), ErrorCode::CorruptFile, "row " + std::to_string(data_row) + " is not a JSON object");
    if (!vars) {
      std::vector<std::string> names;
      for (const auto& item : obj.items()) names.push_back(item.key());
      vars = VariableSet(std::move(names));
    }
    if (!builder) {
      builder.emplace(*vars, capacity);
      row.resize(vars->size());
    }
    for (std::size_t v = 0; v < vars->size(); ++v) {
      auto it = obj.find((*vars)[v]);
      require(it != obj.end(), ErrorCode::MissingColumn,
              "field '" + (*vars)[v] + "' missing in row " + std::to_string(data_row) + " of '" + path + "'");
      require(it->is_number(), ErrorCode::NonNumericCell,
              "row " + std::to_string(data_row) + ", field '" + (*vars)[v] + "': " + it->dump());
      row[v] = it->get<double>();
    }
    builder->push(row);
    ++data_row;
  }
  require(builder.has_value(), ErrorCode::EmptyFile, "'" + path + "' has no data rows");
  auto window = builder->finish();
  return std::move(*window);
}

}  // namespace detail

/// Reads a CSV or JSONL file into a window. When `variables` is given only
/// those columns are kept (in that order); otherwise the file's own columns
/// are used. Files longer than `capacity` keep their most recent rows.
inline TimeWindow ingest(const std::string& path, DataFormat format,
                         const std::optional<VariableSet>& variables = std::nullopt,
                         std::size_t capacity = kDefaultWindowCapacity) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::InvalidArgument, "cannot open '" + path + "'");
  return format == DataFormat::Csv ? detail::ingest_csv(in, path, variables, capacity)
                                   : detail::ingest_jsonl(in, path, variables, capacity);
}

inline TimeWindow ingest(const std::string& path, const std::optional<VariableSet>& variables = std::nullopt,
                         std::size_t capacity = kDefaultWindowCapacity) {
  return ingest(path, format_from_path(path), variables, capacity);
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

inline void write_csv(const TimeWindow& window, std::ostream& out) {
  const auto& names = window.variables().names();
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  const auto& x = window.samples();
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << (j ? "," : "") << format_double(x(t, j));
    out << '\n';
  }
}

inline void write_jsonl(const TimeWindow& window, std::ostream& out) {
  const auto& names = window.variables().names();
  const auto& x = window.samples();
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    out << '{';
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out << (j ? "," : "") << nlohmann::json(names[static_cast<std::size_t>(j)]).dump() << ':'
          << format_double(x(t, j));
    }
    out << "}\n";
  }
}

inline void write_window(const TimeWindow& window, DataFormat format, std::ostream& out) {
  format == DataFormat::Csv ? write_csv(window, out) : write_jsonl(window, out);
}

}  // namespace crd
