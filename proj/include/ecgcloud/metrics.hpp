// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "ecgcloud/error.hpp"

namespace ecgcloud::metrics {

struct RocPoint {
  double false_positive_rate;
  double true_positive_rate;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

/// Starts at (0,0) and ends at (1,1); one point per distinct score, swept
/// from the highest score down. Tied scores move both rates in one step.
struct RocCurve {
  std::vector<RocPoint> points;
};

/// Throws ValidationError("DEGENERATE_LABELS") when only one class is
/// present and ("LENGTH_MISMATCH") when the inputs differ in length.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Trapezoidal area under roc_curve. Ties count half, so this equals
/// P(score_pos > score_neg) + P(tie) / 2.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

std::string roc_curve_csv(const RocCurve& curve);

}  // namespace ecgcloud::metrics
