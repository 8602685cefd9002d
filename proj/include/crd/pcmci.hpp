#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crd/citest.hpp"
#include "crd/error.hpp"
#include "crd/link.hpp"
#include "crd/parallel.hpp"
#include "crd/timeseries.hpp"

namespace crd {

struct PcmciParams {
  int tau_max = 3;
  double alpha_pc = 0.05;
  int max_conds = 3;
  int max_px = 1;
  unsigned threads = 1;
};

/// Dense statistic / p-value result of one MCI pass, one cell per
/// (cause, effect, lag) with lag in [1, tau_max].
class InferenceMatrix {
 public:
  InferenceMatrix() = default;

  InferenceMatrix(VariableSet variables, int tau_max, std::size_t sample_count, long produced_at)
      : variables_(std::move(variables)), tau_max_(tau_max), sample_count_(sample_count), produced_at_(produced_at) {
    require(tau_max_ >= 1, ErrorCode::InvalidArgument, "tau_max must be at least 1");
    statistic_.assign(cell_count(), 0.0);
    p_value_.assign(cell_count(), 1.0);
  }

  const VariableSet& variables() const { return variables_; }
  int tau_max() const { return tau_max_; }
  std::size_t sample_count() const { return sample_count_; }
  long produced_at() const { return produced_at_; }
  std::size_t cell_count() const {
    return variables_.size() * variables_.size() * static_cast<std::size_t>(tau_max_);
  }

  bool is_legal(const LinkKey& key) const {
    return key.cause < variables_.size() && key.effect < variables_.size() && key.lag >= 1 && key.lag <= tau_max_;
  }

  // Cells are laid out by (cause, effect, lag), so index order is key order.
  std::size_t index(const LinkKey& key) const {
    require(is_legal(key), ErrorCode::InvalidArgument, "link key outside the matrix");
    const auto n = variables_.size();
    return (key.cause * n + key.effect) * static_cast<std::size_t>(tau_max_) + static_cast<std::size_t>(key.lag - 1);
  }

  LinkKey key_at(std::size_t idx) const {
    const auto n = variables_.size();
    const auto tau = static_cast<std::size_t>(tau_max_);
    return LinkKey{idx / (n * tau), (idx / tau) % n, static_cast<int>(idx % tau) + 1};
  }

  double statistic(const LinkKey& key) const { return statistic_[index(key)]; }
  double p_value(const LinkKey& key) const { return p_value_[index(key)]; }
  double statistic_at(std::size_t idx) const { return statistic_[idx]; }
  double p_value_at(std::size_t idx) const { return p_value_[idx]; }

  void set(const LinkKey& key, double statistic, double p_value) { set_at(index(key), statistic, p_value); }

  void set_at(std::size_t idx, double statistic, double p_value) {
    require(statistic >= -1.0 && statistic <= 1.0, ErrorCode::InvalidArgument, "statistic outside [-1, 1]");
    require(p_value >= 0.0 && p_value <= 1.0, ErrorCode::InvalidArgument, "p-value outside [0, 1]");
    statistic_[idx] = statistic;
    p_value_[idx] = p_value;
  }

  std::span<const double> statistics() const { return statistic_; }
  std::span<const double> p_values() const { return p_value_; }

  friend bool operator==(const InferenceMatrix&, const InferenceMatrix&) = default;

 private:
  VariableSet variables_;
  int tau_max_ = 1;
  std::size_t sample_count_ = 0;
  long produced_at_ = 0;
  std::vector<double> statistic_;
  std::vector<double> p_value_;
};

struct Parent {
  LinkKey key;
  double statistic = 0.0;
};

/// Surviving candidate parents of one effect, strongest first.
struct ParentSet {
  std::size_t effect = 0;
  std::vector<Parent> parents;
};

/// Links carried over from a previous model, per effect, in the order they
/// should be tried. Carried links that stay marginally significant are not
/// retested at higher condition cardinalities.
struct CarryOver {
  std::vector<std::vector<LinkKey>> per_effect;
};

struct SelectionResult {
  std::vector<ParentSet> parents;
  std::size_t ci_tests = 0;
};

struct MciResult {
  InferenceMatrix matrix;
  std::size_t ci_tests = 0;
};

struct DiscoveryResult {
  std::vector<ParentSet> parents;
  InferenceMatrix matrix;
  std::size_t ci_tests = 0;
};

namespace detail {

inline bool stronger(double a_stat, const LinkKey& a, double b_stat, const LinkKey& b) {
  const double fa = std::abs(a_stat);
  const double fb = std::abs(b_stat);
  if (fa != fb) return fa > fb;
  if (a.cause != b.cause) return a.cause < b.cause;
  return a.lag < b.lag;
}

inline void validate(const PcmciParams& p) {
  require(p.tau_max >= 1, ErrorCode::InvalidArgument, "tau_max must be at least 1");
  require(p.alpha_pc > 0.0 && p.alpha_pc < 1.0, ErrorCode::InvalidArgument, "alpha_pc must lie in (0, 1)");
  require(p.max_conds >= 0, ErrorCode::InvalidArgument, "max_conds must be non-negative");
  require(p.max_px >= 0, ErrorCode::InvalidArgument, "max_px must be non-negative");
}

template <class Test>
ParentSet select_parents(const Eigen::MatrixXd& x, std::size_t effect, const PcmciParams& params,
                         std::span<const LinkKey> carried, const Test& test, std::size_t& tests) {
  struct Candidate {
    LinkKey key;
    double statistic;
    bool exempt;
  };
  const auto n = static_cast<std::size_t>(x.cols());
  const LaggedVar target{effect, 0};
  auto is_carried = [&](const LinkKey& k) { return std::find(carried.begin(), carried.end(), k) != carried.end(); };

  std::vector<LinkKey> order(carried.begin(), carried.end());
  for (std::size_t i = 0; i < n; ++i)
    for (int tau = 1; tau <= params.tau_max; ++tau) {
      LinkKey key{i, effect, tau};
      if (!is_carried(key)) order.push_back(key);
    }

  std::vector<Candidate> survivors;
  for (const auto& key : order) {
    const auto r = test(x, LaggedVar{key.cause, key.lag}, target, std::span<const LaggedVar>{});
    ++tests;
    if (r.p_value <= params.alpha_pc) survivors.push_back({key, r.statistic, is_carried(key)});
  }

  auto sort_survivors = [&] {
    std::sort(survivors.begin(), survivors.end(), [](const Candidate& a, const Candidate& b) {
      return stronger(a.statistic, a.key, b.statistic, b.key);
    });
  };
  sort_survivors();

  std::vector<LaggedVar> conds;
  for (int q = 1; q <= params.max_conds && static_cast<std::size_t>(q) + 1 <= survivors.size(); ++q) {
    std::vector<bool> drop(survivors.size(), false);
    for (std::size_t k = 0; k < survivors.size(); ++k) {
      auto& cand = survivors[k];
      if (cand.exempt) continue;
      conds.clear();
      for (std::size_t m = 0; m < survivors.size() && conds.size() < static_cast<std::size_t>(q); ++m)
        if (m != k) conds.push_back(LaggedVar{survivors[m].key.cause, survivors[m].key.lag});
      const auto r = test(x, LaggedVar{cand.key.cause, cand.key.lag}, target, std::span<const LaggedVar>(conds));
      ++tests;
      if (std::abs(r.statistic) < std::abs(cand.statistic)) cand.statistic = r.statistic;
      if (r.p_value > params.alpha_pc) drop[k] = true;
    }
    std::vector<Candidate> kept;
    for (std::size_t k = 0; k < survivors.size(); ++k)
      if (!drop[k]) kept.push_back(survivors[k]);
    survivors = std::move(kept);
    sort_survivors();
  }

  ParentSet out{effect, {}};
  for (const auto& c : survivors) out.parents.push_back({c.key, c.statistic});
  return out;
}

}  // namespace detail

/// Condition-selection phase: for every effect, prune the N * tau_max
/// lagged candidates with tests of growing condition cardinality. Only the
/// single strongest-q condition subset is tried at each cardinality.
template <class Test = ParCorrTest>
SelectionResult condition_selection(const TimeWindow& window, const PcmciParams& params,
                                    const CarryOver* carry = nullptr, const Test& test = Test{}) {
  detail::validate(params);
  const auto n = window.cols();
  require(window.rows() >= static_cast<std::size_t>(params.tau_max + params.max_conds + 4), ErrorCode::TooFewSamples,
          std::to_string(window.rows()) + " samples are too few for tau_max " + std::to_string(params.tau_max) +
              " and max_conds " + std::to_string(params.max_conds));
  require(!carry || carry->per_effect.size() == n, ErrorCode::ShapeMismatch, "carry-over does not match variables");

  SelectionResult result;
  result.parents.resize(n);
  std::vector<std::size_t> tests(n, 0);
  detail::parallel_for(n, params.threads, [&](std::size_t j) {
    std::span<const LinkKey> carried;
    if (carry) carried = carry->per_effect[j];
    result.parents[j] = detail::select_parents(window.samples(), j, params, carried, test, tests[j]);
  });
  for (auto t : tests) result.ci_tests += t;
  return result;
}

/// Conditioning set for one MCI test: the effect's parents without the
/// tested link, plus the cause's strongest max_px parents shifted by lag.
inline std::vector<LaggedVar> mci_conditions(const LinkKey& key, const std::vector<ParentSet>& parents, int max_px) {
  std::vector<LaggedVar> conds;
  for (const auto& p : parents[key.effect].parents) {
    if (p.key.cause == key.cause && p.key.lag == key.lag) continue;
    conds.push_back(LaggedVar{p.key.cause, p.key.lag});
  }
  const auto& cause_parents = parents[key.cause].parents;
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(max_px), cause_parents.size());
  for (std::size_t k = 0; k < take; ++k) {
    const LaggedVar shifted{cause_parents[k].key.cause, cause_parents[k].key.lag + key.lag};
    if (std::find(conds.begin(), conds.end(), shifted) == conds.end()) conds.push_back(shifted);
  }
  return conds;
}

/// Momentary-conditional-independence phase over every legal link.
template <class Test = ParCorrTest>
MciResult mci(const TimeWindow& window, const std::vector<ParentSet>& parents, const PcmciParams& params,
              const Test& test = Test{}) {
  detail::validate(params);
  require(parents.size() == window.cols(), ErrorCode::ShapeMismatch, "one parent set per variable is required");
  for (std::size_t j = 0; j < parents.size(); ++j)
    require(parents[j].effect == j, ErrorCode::ShapeMismatch, "parent sets must be ordered by effect");

  MciResult result{InferenceMatrix(window.variables(), params.tau_max, window.rows(), window.end_index()), 0};
  auto& matrix = result.matrix;
  const auto cells = matrix.cell_count();
  std::vector<CITestResult> out(cells);
  detail::parallel_for(cells, params.threads, [&](std::size_t idx) {
    const auto key = matrix.key_at(idx);
    const auto conds = mci_conditions(key, parents, params.max_px);
    out[idx] = test(window.samples(), LaggedVar{key.cause, key.lag}, LaggedVar{key.effect, 0},
                    std::span<const LaggedVar>(conds));
  });
  for (std::size_t idx = 0; idx < cells; ++idx) matrix.set_at(idx, out[idx].statistic, out[idx].p_value);
  result.ci_tests = cells;
  return result;
}

template <class Test = ParCorrTest>
DiscoveryResult run_pcmci(const TimeWindow& window, const PcmciParams& params, const CarryOver* carry = nullptr,
                          const Test& test = Test{}) {
  auto selection = condition_selection(window, params, carry, test);
  auto phase2 = mci(window, selection.parents, params, test);
  return DiscoveryResult{std::move(selection.parents), std::move(phase2.matrix),
                         selection.ci_tests + phase2.ci_tests};
}

/// Cells with p <= alpha_link, keyed in (cause, effect, lag) order.
inline std::map<LinkKey, LinkStats> significant_links(const InferenceMatrix& matrix, double alpha_link) {
  require(alpha_link > 0.0 && alpha_link < 1.0, ErrorCode::InvalidArgument, "alpha_link must lie in (0, 1)");
  std::map<LinkKey, LinkStats> links;
  for (std::size_t idx = 0; idx < matrix.cell_count(); ++idx) {
    if (matrix.p_value_at(idx) <= alpha_link)
      links.emplace(matrix.key_at(idx), LinkStats{matrix.statistic_at(idx), matrix.p_value_at(idx), 0,
                                                  matrix.sample_count()});
  }
  return links;
}

}  // namespace crd
