#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "lego/harness/train.hpp"

namespace lego::harness {

struct OnsetReport {
  double threshold = 0.9;
  std::vector<std::optional<int>> onset;  // per position; empty when never reached
  std::optional<double> reference;        // median onset of positions 2..n-2
  bool shortcut = false;
};

/// First epoch whose test accuracy exceeds `threshold`, per position. The
/// shortcut signature is flagged when the last position's onset precedes the
/// median onset of positions 2..n-2; unreached onsets count as later than any
/// epoch.
OnsetReport shortcut_report(const MetricsTable& metrics, double threshold = 0.9);

/// Header `position,onset_epoch`; the epoch field is empty when absent.
void write_onset_csv(const std::filesystem::path& path, const OnsetReport& report);

}  // namespace lego::harness
