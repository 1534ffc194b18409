#include "lego/harness/shortcut.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "lego/core/error.hpp"

namespace lego::harness {

OnsetReport shortcut_report(const MetricsTable& metrics, double threshold) {
  OnsetReport r;
  r.threshold = threshold;
  const auto n = static_cast<std::size_t>(metrics.n);
  r.onset.assign(n, std::nullopt);
  for (const auto& e : metrics.epochs) {
    for (std::size_t p = 0; p < n; ++p) {
      if (!r.onset[p] && e.test_accuracy.at(p) > threshold) {
        r.onset[p] = e.epoch;
      }
    }
  }
  if (metrics.n < 4) {
    return r;
  }
  constexpr double kNever = std::numeric_limits<double>::infinity();
  std::vector<double> middle;
  for (int p = 2; p <= metrics.n - 2; ++p) {
    const auto& o = r.onset[static_cast<std::size_t>(p)];
    middle.push_back(o ? static_cast<double>(*o) : kNever);
  }
  std::sort(middle.begin(), middle.end());
  const auto k = middle.size();
  const double median = k % 2 == 1 ? middle[k / 2] : 0.5 * (middle[k / 2 - 1] + middle[k / 2]);
  if (median != kNever) {
    r.reference = median;
  }
  const auto& last = r.onset.back();
  r.shortcut = last.has_value() && static_cast<double>(*last) < median;
  return r;
}

void write_onset_csv(const std::filesystem::path& path, const OnsetReport& report) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << "position,onset_epoch\n";
  for (std::size_t p = 0; p < report.onset.size(); ++p) {
    out << p << ',';
    if (report.onset[p]) {
      out << *report.onset[p];
    }
    out << '\n';
  }
}

}  // namespace lego::harness
