#pragma once

#include <compare>
#include <cstddef>

namespace crd {

/// Directed lagged edge: cause at t - lag drives effect at t.
struct LinkKey {
  std::size_t cause = 0;
  std::size_t effect = 0;
  int lag = 1;

  friend auto operator<=>(const LinkKey&, const LinkKey&) = default;
};

struct LinkStats {
  double statistic = 0.0;
  double p_value = 1.0;
  long source_run = 0;
  std::size_t sample_count = 0;

  friend bool operator==(const LinkStats&, const LinkStats&) = default;
};

}  // namespace crd
