#pragma once

#include <string>
#include <vector>

#include "hfm/geometry.hpp"

namespace hfm::eval {

inline constexpr double kThresholds[3] = {11.25, 22.5, 30.0};

struct MetricsReport {
  double mean = 0;    // degrees
  double median = 0;  // degrees
  double within[3] = {0, 0, 0};  // fraction strictly below each threshold
  std::size_t count = 0;
  // Per-pixel angular errors the statistics were computed from; kept so
  // reports can be pooled pixel-wise.
  std::vector<double> errors;

  bool defined() const { return count > 0; }
};

// Statistics of a list of angular errors; an empty list gives count 0 and
// zeroed (undefined) statistics.
MetricsReport summarize(std::vector<double> errors);

// Angular error over pixels valid in both maps.
MetricsReport evaluate(const geometry::NormalMap& pred, const geometry::NormalMap& gt);

// Pixel-weighted pooling: statistics of all per-pixel errors concatenated.
MetricsReport aggregate(const std::vector<MetricsReport>& reports);

// Median by full sort; the selection-based median in summarize() is
// cross-checked against it in tests.
double median_by_sort(std::vector<double> values);

// Plain-text table with rows mean, median, 11.25, 22.5, 30.
std::string format_report(const MetricsReport& report, const std::string& title);

}  // namespace hfm::eval
