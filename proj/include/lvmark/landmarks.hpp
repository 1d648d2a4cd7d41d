#pragma once

#include "lvmark/common.hpp"
#include "lvmark/graph.hpp"

#include <array>
#include <cmath>

namespace lvmark {

/// Four ordered landmarks on a frame, top to bottom along the measurement
/// axis: septum top, septum bottom (= chamber top), chamber bottom
/// (= posterior wall top), posterior wall bottom.
struct LandmarkSet {
  std::array<PixelPoint, 4> points;
  double spacing_mm = 1.0;  // physical size of one pixel, isotropic
  int frame_h = 0;
  int frame_w = 0;

  void validate() const {
    require(frame_h > 0 && frame_w > 0, "LandmarkSet: frame dimensions must be positive");
    require(spacing_mm > 0.0, "LandmarkSet: spacing_mm must be positive");
    for (const auto& p : points) {
      require(p.h >= 0.0 && p.h < frame_h && p.w >= 0.0 && p.w < frame_w,
              "LandmarkSet: landmark outside frame");
    }
  }
};

/// Binary supervision for one level: (nodes at level) x 4 channels, one
/// channel per landmark.
struct LevelLabels {
  int level = kMainLevel;  // 1..K, or kMainLevel
  Matrix values;
};

struct MeasurementTriple {
  double ivs_mm = 0.0;
  double lvid_mm = 0.0;
  double lvpw_mm = 0.0;
};

/// Marks, per channel, the level-k patch containing that channel's landmark.
inline LevelLabels induce_level_labels(const LandmarkSet& landmarks, int k) {
  landmarks.validate();
  require(k >= 1 && k <= 15, "induce_level_labels: level out of range");
  require((1 << k) <= landmarks.frame_h && (1 << k) <= landmarks.frame_w,
          "induce_level_labels: frame smaller than 2^k");
  const int m = 1 << k;
  LevelLabels labels{k, Matrix::Zero(m * m, 4)};
  for (int p = 0; p < 4; ++p) {
    const int node = patch_index(landmarks.points[p].h, landmarks.points[p].w, k,
                                 landmarks.frame_h, landmarks.frame_w);
    labels.values(node, p) = 1.0;
  }
  return labels;
}

/// One-hot pixel-level labels; sub-pixel coordinates floor to their pixel.
inline LevelLabels main_graph_labels(const LandmarkSet& landmarks) {
  landmarks.validate();
  LevelLabels labels{kMainLevel,
                     Matrix::Zero(landmarks.frame_h * landmarks.frame_w, 4)};
  for (int p = 0; p < 4; ++p) {
    const int h = static_cast<int>(std::floor(landmarks.points[p].h));
    const int w = static_cast<int>(std::floor(landmarks.points[p].w));
    labels.values(h * landmarks.frame_w + w, p) = 1.0;
  }
  return labels;
}

/// Labels for every level of a K-level hierarchy: aux 1..K, then main.
inline std::vector<LevelLabels> hierarchical_labels(const LandmarkSet& landmarks,
                                                    int levels) {
  std::vector<LevelLabels> out;
  out.reserve(levels + 1);
  for (int k = 1; k <= levels; ++k) out.push_back(induce_level_labels(landmarks, k));
  out.push_back(main_graph_labels(landmarks));
  return out;
}

inline MeasurementTriple measurements_from_landmarks(const LandmarkSet& landmarks) {
  landmarks.validate();
  auto dist = [&](int a, int b) {
    const double dh = landmarks.points[a].h - landmarks.points[b].h;
    const double dw = landmarks.points[a].w - landmarks.points[b].w;
    return std::sqrt(dh * dh + dw * dw) * landmarks.spacing_mm;
  };
  return {dist(0, 1), dist(1, 2), dist(2, 3)};
}

/// Rescales landmark coordinates to a new frame size. Only isotropic rescales
/// are allowed since spacing_mm must stay a single scalar; coordinates stay
/// strictly inside [0, H') x [0, W').
inline LandmarkSet rescale_landmarks(const LandmarkSet& landmarks, int to_h, int to_w) {
  landmarks.validate();
  require(to_h > 0 && to_w > 0, "rescale_landmarks: target size must be positive");
  require(static_cast<std::int64_t>(to_h) * landmarks.frame_w ==
              static_cast<std::int64_t>(to_w) * landmarks.frame_h,
          "rescale_landmarks: anisotropic rescale not supported with mm spacing");
  const double scale_h = static_cast<double>(to_h) / landmarks.frame_h;
  const double scale_w = static_cast<double>(to_w) / landmarks.frame_w;
  LandmarkSet out = landmarks;
  out.frame_h = to_h;
  out.frame_w = to_w;
  out.spacing_mm = landmarks.spacing_mm * landmarks.frame_h / to_h;
  for (auto& p : out.points) {
    p.h = std::min(std::max(p.h * scale_h, 0.0),
                   std::nextafter(static_cast<double>(to_h), 0.0));
    p.w = std::min(std::max(p.w * scale_w, 0.0),
                   std::nextafter(static_cast<double>(to_w), 0.0));
  }
  return out;
}

}  // namespace lvmark
