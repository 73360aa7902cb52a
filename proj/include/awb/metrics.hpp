#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "awb/error.hpp"

namespace awb::train {

/// Confusion counts and derived scores for a binary evaluation
/// (positive class = label 1, i.e. "real").
struct Metrics {
  int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double log_loss = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();

  int64_t total() const { return tp + tn + fp + fn; }
};

inline constexpr double kProbClamp = 1e-12;

/// Binary cross-entropy over probabilities of the positive class, with
/// probabilities clamped to [1e-12, 1 - 1e-12] before the logs.
inline double log_loss(const std::vector<int>& labels,
                       const std::vector<double>& probs) {
  if (labels.size() != probs.size())
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(labels.size()) + " labels vs " +
                    std::to_string(probs.size()) + " probabilities");
  if (labels.empty())
    throw Error(ErrorKind::EmptyDataset, "log_loss over zero samples");
  double total = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    double p = std::min(1.0 - kProbClamp, std::max(kProbClamp, probs[i]));
    total += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(labels.size());
}

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

struct RocResult {
  std::vector<RocPoint> curve;
  double auc = 0.0;
};

/// ROC curve by sweeping the distinct scores descending (ties grouped into a
/// single step) and trapezoidal AUC. Requires both classes present.
inline RocResult roc_auc(const std::vector<int>& labels,
                         const std::vector<double>& scores) {
  if (labels.size() != scores.size())
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(labels.size()) + " labels vs " +
                    std::to_string(scores.size()) + " scores");
  int64_t pos = 0, neg = 0;
  for (int y : labels) (y == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw Error(ErrorKind::SingleClass,
                "ROC needs both classes; got " + std::to_string(pos) +
                    " positive and " + std::to_string(neg) + " negative");

  // sort (score, label) by score descending; equal scores collapse below
  std::vector<std::pair<double, int>> pairs(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) pairs[i] = {scores[i], labels[i]};
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second > b.second);
  });

  RocResult result;
  result.curve.push_back(
      {std::numeric_limits<double>::infinity(), 0.0, 0.0});
  int64_t tp = 0, fp = 0;
  double auc = 0.0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  size_t i = 0;
  while (i < pairs.size()) {
    double score = pairs[i].first;
    while (i < pairs.size() && pairs[i].first == score) {
      (pairs[i].second == 1 ? tp : fp)++;
      ++i;
    }
    double fpr = static_cast<double>(fp) / static_cast<double>(neg);
    double tpr = static_cast<double>(tp) / static_cast<double>(pos);
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    result.curve.push_back({score, fpr, tpr});
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  result.auc = auc;
  return result;
}

/// Confusion counts -> derived rates. Exposed so golden-value checks can hit
/// the arithmetic directly.
inline Metrics metrics_from_counts(int64_t tp, int64_t tn, int64_t fp,
                                   int64_t fn) {
  Metrics m;
  m.tp = tp;
  m.tn = tn;
  m.fp = fp;
  m.fn = fn;
  int64_t total = m.total();
  m.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
  m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return m;
}

}  // namespace awb::train
