#pragma once

#include <algorithm>
#include <limits>
#include <string>

namespace npcflow {

/// Outcome of one inequality / theorem verification run.
///
/// A check records one violation value per sample; a sample fails when its
/// violation exceeds the report tolerance. Checks that fold per-sample
/// tolerances into the violation itself use tolerance = 0 and say so in
/// `details`.
struct CheckReport {
  std::string name;
  long trials = 0;
  long failures = 0;
  long skipped = 0;
  double worst_violation = -std::numeric_limits<double>::infinity();
  double tolerance = 0.0;
  bool passed = false;
  std::string details;

  void record(double violation) {
    ++trials;
    worst_violation = std::max(worst_violation, violation);
    if (violation > tolerance) ++failures;
  }

  void skip() { ++skipped; }

  CheckReport& finish() {
    if (trials == 0) worst_violation = 0.0;
    passed = failures == 0;
    return *this;
  }
};

}  // namespace npcflow
