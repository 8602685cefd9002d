#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "crd/error.hpp"
#include "crd/timeseries.hpp"

namespace crd {

/// A variable observed `lag` steps before the reference time.
struct LaggedVar {
  std::size_t var = 0;
  int lag = 0;

  friend auto operator<=>(const LaggedVar&, const LaggedVar&) = default;
};

struct CITestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t effective_n = 0;
  bool ridge_fallback = false;
};

inline constexpr double kCorrelationClamp = 1e-10;
inline constexpr double kConditionLimit = 1e10;
inline constexpr double kRidgeLambda = 1e-8;

/// Upper tail of the standard normal, 1 - Phi(x).
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

/// Two-sided Fisher-z p-value for a (partial) correlation estimated from
/// `n` samples with `conditions` conditioning variables.
inline double fisher_z_pvalue(double r, std::size_t n, std::size_t conditions) {
  const double clamped = std::clamp(r, -1.0 + kCorrelationClamp, 1.0 - kCorrelationClamp);
  const double dof = static_cast<double>(n) - static_cast<double>(conditions) - 3.0;
  const double z = std::sqrt(std::max(dof, 0.0)) * std::atanh(clamped);
  return std::min(1.0, 2.0 * normal_sf(std::abs(z)));
}

namespace detail {

inline Eigen::VectorXd lagged_column(const Eigen::MatrixXd& samples, LaggedVar v, int max_lag, Eigen::Index n) {
  return samples.col(static_cast<Eigen::Index>(v.var)).segment(max_lag - v.lag, n);
}

inline double residual_correlation(const Eigen::VectorXd& rx, const Eigen::VectorXd& ry) {
  const double nx = rx.norm();
  const double ny = ry.norm();
  // A column fully explained by the conditions carries no information.
  if (nx <= 1e-12 * std::sqrt(static_cast<double>(rx.size())) || ny <= 1e-12 * std::sqrt(static_cast<double>(ry.size())))
    return 0.0;
  return std::clamp(rx.dot(ry) / (nx * ny), -1.0, 1.0);
}

}  // namespace detail

/// Partial correlation of x and y given z, by correlating OLS residuals.
/// All lagged columns are aligned on the range shared by the largest lag in
/// the test. Collinear conditioning sets fall back to a tiny ridge.
inline CITestResult partial_correlation(const Eigen::MatrixXd& samples, LaggedVar x, LaggedVar y,
                                        std::span<const LaggedVar> z) {
  const auto vars = static_cast<std::size_t>(samples.cols());
  auto check_var = [&](LaggedVar v) {
    require(v.var < vars, ErrorCode::InvalidArgument, "variable index " + std::to_string(v.var) + " out of range");
    require(v.lag >= 0, ErrorCode::InvalidArgument, "lags must be non-negative");
  };
  check_var(x);
  check_var(y);
  require(x != y, ErrorCode::InvalidArgument, "x and y must differ");
  int max_lag = std::max(x.lag, y.lag);
  for (const auto& c : z) {
    check_var(c);
    require(c != x && c != y, ErrorCode::InvalidArgument, "x and y must not appear in the conditioning set");
    max_lag = std::max(max_lag, c.lag);
  }

  const auto total = static_cast<long>(samples.rows());
  const long n = total - max_lag;
  require(n >= static_cast<long>(z.size()) + 4, ErrorCode::TooFewSamples,
          std::to_string(std::max(n, 0L)) + " aligned samples for a test with " + std::to_string(z.size()) +
              " conditions");

  CITestResult result;
  result.effective_n = static_cast<std::size_t>(n);

  Eigen::MatrixXd xy(n, 2);
  xy.col(0) = detail::lagged_column(samples, x, max_lag, n);
  xy.col(1) = detail::lagged_column(samples, y, max_lag, n);

  Eigen::MatrixXd residuals;
  if (z.empty()) {
    residuals = xy.rowwise() - xy.colwise().mean();
  } else {
    Eigen::MatrixXd design(n, static_cast<Eigen::Index>(z.size()) + 1);
    design.col(0).setOnes();
    for (std::size_t k = 0; k < z.size(); ++k)
      design.col(static_cast<Eigen::Index>(k) + 1) = detail::lagged_column(samples, z[k], max_lag, n);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    const Eigen::VectorXd diag = qr.matrixR().diagonal().cwiseAbs();
    const double smallest = diag.minCoeff();
    const double condition = smallest > 0.0 ? diag.maxCoeff() / smallest : INFINITY;
    Eigen::MatrixXd beta;
    if (condition > kConditionLimit) {
      Eigen::MatrixXd gram = design.transpose() * design;
      gram.diagonal().array() += kRidgeLambda;
      beta = gram.ldlt().solve(design.transpose() * xy);
      result.ridge_fallback = true;
    } else {
      beta = qr.solve(xy);
    }
    residuals = xy - design * beta;
  }
  require(residuals.allFinite(), ErrorCode::NumericalFailure, "non-finite regression residuals");

  result.statistic = detail::residual_correlation(residuals.col(0), residuals.col(1));
  result.p_value = fisher_z_pvalue(result.statistic, result.effective_n, z.size());
  return result;
}

inline CITestResult partial_correlation(const TimeWindow& window, LaggedVar x, LaggedVar y,
                                        std::span<const LaggedVar> z) {
  return partial_correlation(window.samples(), x, y, z);
}

/// Default conditional-independence test used by the discovery engine.
/// Any type with the same call signature can stand in for it.
struct ParCorrTest {
  CITestResult operator()(const Eigen::MatrixXd& samples, LaggedVar x, LaggedVar y,
                          std::span<const LaggedVar> z) const {
    return partial_correlation(samples, x, y, z);
  }
};

}  // namespace crd
