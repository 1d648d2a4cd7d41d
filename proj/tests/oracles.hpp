// Independent reference constructions used as test oracles. These
// deliberately avoid the lvmark implementation paths they check.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

namespace oracles {

using EdgeSet = std::set<std::pair<std::uint32_t, std::uint32_t>>;

// Naive double-loop construction of the full hierarchy edge set, global ids
// ordered aux levels 1..K (row-major) then main pixels (row-major).
inline EdgeSet naive_hierarchy_edges(int K, int H, int W) {
  EdgeSet edges;
  auto canon = [](std::uint32_t a, std::uint32_t b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  };

  std::vector<int> offsets(K + 2, 0);
  for (int k = 1; k <= K; ++k) {
    int count = 1;
    for (int i = 0; i < k; ++i) count *= 4;
    offsets[k] = offsets[k - 1] + count;
  }
  offsets[K + 1] = offsets[K] + H * W;

  // intra-level grids: connect every pair at Manhattan distance 1
  for (int k = 1; k <= K; ++k) {
    const int m = 1 << k;
    for (int r1 = 0; r1 < m; ++r1)
      for (int c1 = 0; c1 < m; ++c1)
        for (int r2 = 0; r2 < m; ++r2)
          for (int c2 = 0; c2 < m; ++c2) {
            if (std::abs(r1 - r2) + std::abs(c1 - c2) == 1) {
              edges.insert(canon(offsets[k - 1] + r1 * m + c1,
                                 offsets[k - 1] + r2 * m + c2));
            }
          }
  }
  for (int r1 = 0; r1 < H; ++r1)
    for (int c1 = 0; c1 < W; ++c1)
      for (int r2 = 0; r2 < H; ++r2)
        for (int c2 = 0; c2 < W; ++c2) {
          if (std::abs(r1 - r2) + std::abs(c1 - c2) == 1) {
            edges.insert(canon(offsets[K] + r1 * W + c1, offsets[K] + r2 * W + c2));
          }
        }

  // aux->aux: parent (r, c) at level k owns children with floor(r'/2) == r
  for (int k = 1; k < K; ++k) {
    const int m = 1 << k;
    const int m2 = m * 2;
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c)
        for (int r2 = 0; r2 < m2; ++r2)
          for (int c2 = 0; c2 < m2; ++c2) {
            if (r2 / 2 == r && c2 / 2 == c) {
              edges.insert(canon(offsets[k - 1] + r * m + c, offsets[k] + r2 * m2 + c2));
            }
          }
  }

  // aux-K -> main: pixel joins the patch that contains it
  const int mk = 1 << K;
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w)
      for (int r = 0; r < mk; ++r)
        for (int c = 0; c < mk; ++c) {
          const bool contains_h =
              h >= r * H / static_cast<double>(mk) && h < (r + 1) * H / static_cast<double>(mk);
          const bool contains_w =
              w >= c * W / static_cast<double>(mk) && w < (c + 1) * W / static_cast<double>(mk);
          if (contains_h && contains_w) {
            edges.insert(canon(offsets[K - 1] + r * mk + c, offsets[K] + h * W + w));
          }
        }
  return edges;
}

// Dense-matrix evaluation of one normalized graph-convolution layer:
// ReLU(D^{-1/2} (A+I) D^{-1/2} X W + b).
inline Eigen::MatrixXd dense_gcn_layer(
    int n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& undirected_edges,
    const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::RowVectorXd& b) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  for (const auto& [u, v] : undirected_edges) {
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  Eigen::VectorXd deg = a.rowwise().sum();
  Eigen::MatrixXd dinv = deg.array().rsqrt().matrix().asDiagonal();
  Eigen::MatrixXd pre = (dinv * a * dinv * x * w).rowwise() + b;
  return pre.cwiseMax(0.0);
}

}  // namespace oracles
