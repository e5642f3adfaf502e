// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <numeric>

namespace ecgcloud::metrics {

namespace {

struct Step {
  std::uint64_t fp;
  std::uint64_t tp;
};

struct Sweep {
  std::vector<Step> steps;  // cumulative counts, starting at {0, 0}
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
};

Sweep sweep(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("LENGTH_MISMATCH", "scores and labels differ in length");
  }
  Sweep s;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("INVALID_LABEL", "labels must be 0 or 1");
    (y == 1 ? s.positives : s.negatives) += 1;
  }
  if (s.positives == 0 || s.negatives == 0) {
    throw ValidationError("DEGENERATE_LABELS", "ROC needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  s.steps.push_back({0, 0});
  Step cur{0, 0};
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? cur.tp : cur.fp) += 1;
      ++j;
    }
    s.steps.push_back(cur);
    i = j;
  }
  return s;
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const Sweep s = sweep(scores, labels);
  RocCurve curve;
  for (const Step& st : s.steps) {
    curve.points.push_back({static_cast<double>(st.fp) / static_cast<double>(s.negatives),
                            static_cast<double>(st.tp) / static_cast<double>(s.positives)});
  }
  return curve;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const Sweep s = sweep(scores, labels);
  // Twice the trapezoid area in count units; exact in integers.
  std::uint64_t twice_area = 0;
  for (std::size_t i = 1; i < s.steps.size(); ++i) {
    twice_area += (s.steps[i].fp - s.steps[i - 1].fp) * (s.steps[i].tp + s.steps[i - 1].tp);
  }
  return static_cast<double>(twice_area) /
         (2.0 * static_cast<double>(s.positives) * static_cast<double>(s.negatives));
}

std::string roc_curve_csv(const RocCurve& curve) {
  std::string out = "false_positive_rate,true_positive_rate\n";
  char buf[32];
  for (const auto& p : curve.points) {
    out.append(buf, std::to_chars(buf, buf + sizeof(buf), p.false_positive_rate).ptr);
    out += ',';
    out.append(buf, std::to_chars(buf, buf + sizeof(buf), p.true_positive_rate).ptr);
    out += '\n';
  }
  return out;
}

}  // namespace ecgcloud::metrics
