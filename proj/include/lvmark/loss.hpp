#pragma once

#include "lvmark/gnn.hpp"
#include "lvmark/landmarks.hpp"

#include <cmath>
#include <vector>

namespace lvmark {

struct LossConfig {
  double pos_weight = 9000.0;
  double lambda_l2 = 1.0;
  std::vector<double> level_weights;  // empty means uniform 1.0

  void validate(int num_levels) const {
    require(pos_weight > 0.0, "LossConfig: pos_weight must be > 0");
    require(lambda_l2 >= 0.0, "LossConfig: lambda_l2 must be >= 0");
    if (!level_weights.empty()) {
      require(static_cast<int>(level_weights.size()) == num_levels,
              "LossConfig: level_weights must have one entry per level");
      for (const double w : level_weights) {
        require(w >= 0.0, "LossConfig: level weights must be >= 0");
      }
    }
  }

  double level_weight(int level_index) const {
    return level_weights.empty() ? 1.0 : level_weights[level_index];
  }
};

struct LossReport {
  std::vector<double> bce_per_level;
  double l2 = 0.0;
  double total = 0.0;
};

inline constexpr double kBceClampEps = 1e-7;

/// Mean over nodes x channels of -[pos_weight*y*ln(p) + (1-y)*ln(1-p)],
/// with p clamped to [eps, 1-eps].
inline double weighted_bce(const Matrix& probs, const Matrix& labels, double pos_weight) {
  require(probs.rows() == labels.rows() && probs.cols() == labels.cols(),
          "weighted_bce: shape mismatch");
  require(probs.size() > 0, "weighted_bce: empty input");
  require(pos_weight > 0.0, "weighted_bce: pos_weight must be > 0");
  const auto p = probs.array().min(1.0 - kBceClampEps).max(kBceClampEps);
  const auto y = labels.array();
  const double sum = -(pos_weight * y * p.log() + (1.0 - y) * (1.0 - p).log()).sum();
  return sum / static_cast<double>(probs.size());
}

/// Gradient of weighted_bce w.r.t. the probabilities.
inline Matrix weighted_bce_grad(const Matrix& probs, const Matrix& labels,
                                double pos_weight) {
  require(probs.rows() == labels.rows() && probs.cols() == labels.cols(),
          "weighted_bce_grad: shape mismatch");
  const auto p = probs.array().min(1.0 - kBceClampEps).max(kBceClampEps);
  const auto y = labels.array();
  return ((-pos_weight * y / p + (1.0 - y) / (1.0 - p)) /
          static_cast<double>(probs.size()))
      .matrix();
}

/// Gradient of weighted_bce w.r.t. pre-sigmoid logits, given p = sigmoid(z).
/// Algebraically (-w*y*(1-p) + (1-y)*p)/n, which stays finite under
/// saturation.
inline Matrix weighted_bce_grad_logits(const Matrix& probs, const Matrix& labels,
                                       double pos_weight) {
  require(probs.rows() == labels.rows() && probs.cols() == labels.cols(),
          "weighted_bce_grad_logits: shape mismatch");
  const auto p = probs.array();
  const auto y = labels.array();
  return ((-pos_weight * y * (1.0 - p) + (1.0 - y) * p) /
          static_cast<double>(probs.size()))
      .matrix();
}

/// Mean squared Euclidean distance over the four landmarks, pixel units.
/// Predictions are (x, y); ground truth points are (h, w).
inline double coord_l2(const CoordinatePrediction& pred, const LandmarkSet& gt) {
  double sum = 0.0;
  for (int p = 0; p < 4; ++p) {
    const double dx = pred.points[p].first - gt.points[p].w;
    const double dy = pred.points[p].second - gt.points[p].h;
    sum += dx * dx + dy * dy;
  }
  return sum / 4.0;
}

/// Multi-level objective: weighted BCE per level plus the coordinate L2 term.
inline LossReport total_loss(const Heatmaps& heatmaps,
                             const std::vector<LevelLabels>& labels,
                             const CoordinatePrediction& pred, const LandmarkSet& gt,
                             const LossConfig& cfg) {
  const int num_levels = static_cast<int>(heatmaps.per_level.size());
  require(static_cast<int>(labels.size()) == num_levels,
          "total_loss: one label set per heatmap level required");
  cfg.validate(num_levels);

  LossReport report;
  report.bce_per_level.resize(num_levels);
  for (int li = 0; li < num_levels; ++li) {
    const int expected_level = li + 1 == num_levels ? kMainLevel : li + 1;
    require(labels[li].level == expected_level, "total_loss: label level out of order");
    report.bce_per_level[li] =
        weighted_bce(heatmaps.per_level[li], labels[li].values, cfg.pos_weight);
    report.total += cfg.level_weight(li) * report.bce_per_level[li];
  }
  report.l2 = coord_l2(pred, gt);
  report.total += cfg.lambda_l2 * report.l2;
  return report;
}

}  // namespace lvmark
