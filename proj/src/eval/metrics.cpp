#include "hfm/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace hfm::eval {
namespace {

double median_by_selection(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

double median_by_sort(std::vector<double> values) {
  require(!values.empty(), "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

MetricsReport summarize(std::vector<double> errors) {
  MetricsReport r;
  r.count = errors.size();
  if (!errors.empty()) {
    r.mean = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
    r.median = median_by_selection(errors);
    for (int t = 0; t < 3; ++t) {
      const auto below = std::count_if(errors.begin(), errors.end(), [&](double e) { return e < kThresholds[t]; });
      r.within[t] = static_cast<double>(below) / static_cast<double>(errors.size());
    }
  }
  r.errors = std::move(errors);
  return r;
}

MetricsReport evaluate(const geometry::NormalMap& pred, const geometry::NormalMap& gt) {
  return summarize(geometry::angle_error(pred, gt));
}

MetricsReport aggregate(const std::vector<MetricsReport>& reports) {
  require(!reports.empty(), "aggregate: no reports");
  std::vector<double> all;
  for (const auto& r : reports) all.insert(all.end(), r.errors.begin(), r.errors.end());
  return summarize(std::move(all));
}

std::string format_report(const MetricsReport& report, const std::string& title) {
  std::ostringstream out;
  out << "# " << title << "\n";
  out << "# pixels: " << report.count << " (statistics pooled over all valid pixels)\n";
  if (!report.defined()) {
    out << "# no valid pixels: statistics undefined\n";
    return out.str();
  }
  char line[64];
  std::snprintf(line, sizeof line, "%-8s %8.3f\n", "mean", report.mean);
  out << line;
  std::snprintf(line, sizeof line, "%-8s %8.3f\n", "median", report.median);
  out << line;
  for (int t = 0; t < 3; ++t) {
    char label[16];
    std::snprintf(label, sizeof label, "%g", kThresholds[t]);
    std::snprintf(line, sizeof line, "%-8s %8.3f\n", label, 100.0 * report.within[t]);
    out << line;
  }
  return out.str();
}

}  // namespace hfm::eval
