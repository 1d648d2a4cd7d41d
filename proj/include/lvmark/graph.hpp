#pragma once

#include "lvmark/common.hpp"

#include <cmath>
#include <cstdint>
#include <ostream>
#include <utility>
#include <vector>

namespace lvmark {

/// Level tag for the pixel-resolution grid; auxiliary levels are 1..K.
inline constexpr int kMainLevel = -1;

using Edge = std::pair<std::uint32_t, std::uint32_t>;

/// Geometry of one grid level: 2^k x 2^k patch nodes for auxiliary level k,
/// one node per pixel for the main level.
struct GridSpec {
  int level = kMainLevel;
  int rows = 0;
  int cols = 0;
  int image_h = 0;
  int image_w = 0;

  static GridSpec aux(int k, int image_h, int image_w) {
    require(k >= 1 && k <= 15, "GridSpec: auxiliary level must be in [1, 15]");
    const int m = 1 << k;
    require(image_h >= m && image_w >= m,
            "GridSpec: image must be at least 2^k x 2^k");
    return GridSpec{k, m, m, image_h, image_w};
  }

  static GridSpec main(int image_h, int image_w) {
    require(image_h >= 2 && image_w >= 2, "GridSpec: image must be at least 2x2");
    return GridSpec{kMainLevel, image_h, image_w, image_h, image_w};
  }

  bool is_main() const { return level == kMainLevel; }
  int node_count() const { return rows * cols; }
};

/// The assembled multi-level graph. Global node ids run over auxiliary levels
/// 1..K (coarse to fine, row-major within a level) followed by the main grid.
/// Edges are stored undirected, one canonical (u < v) pair each.
struct HierGraph {
  int levels = 0;  // number of auxiliary levels K
  int image_h = 0;
  int image_w = 0;
  std::vector<int> level_offsets;  // K+2 entries; back() == total node count
  std::vector<Edge> edges;
  std::vector<std::uint8_t> node_level;            // level index: 0..K-1 aux, K main
  std::vector<std::pair<double, double>> node_loc;  // (x, y) in pixel units

  int num_levels() const { return levels + 1; }
  int main_level_index() const { return levels; }
  int total_nodes() const { return level_offsets.back(); }
  int level_offset(int level_index) const { return level_offsets[level_index]; }
  int level_node_count(int level_index) const {
    return level_offsets[level_index + 1] - level_offsets[level_index];
  }
};

/// Row-major index of the level-k patch containing pixel (h, w).
inline int patch_index(int h, int w, int k, int image_h, int image_w) {
  require(k >= 1 && k <= 15, "patch_index: level out of range");
  const std::int64_t m = std::int64_t{1} << k;
  require(image_h >= m && image_w >= m, "patch_index: image smaller than 2^k");
  require(h >= 0 && h < image_h && w >= 0 && w < image_w,
          "patch_index: pixel outside frame");
  const std::int64_t r = (static_cast<std::int64_t>(h) * m) / image_h;
  const std::int64_t c = (static_cast<std::int64_t>(w) * m) / image_w;
  return static_cast<int>(r * m + c);
}

/// Sub-pixel overload; a coordinate exactly on a patch boundary belongs to the
/// higher-index patch.
inline int patch_index(double h, double w, int k, int image_h, int image_w) {
  require(k >= 1 && k <= 15, "patch_index: level out of range");
  const double m = static_cast<double>(std::int64_t{1} << k);
  require(image_h >= m && image_w >= m, "patch_index: image smaller than 2^k");
  require(h >= 0.0 && h < image_h && w >= 0.0 && w < image_w,
          "patch_index: coordinate outside frame");
  const int mi = static_cast<int>(m);
  int r = static_cast<int>(std::floor(h * m / image_h));
  int c = static_cast<int>(std::floor(w * m / image_w));
  r = std::min(std::max(r, 0), mi - 1);
  c = std::min(std::max(c, 0), mi - 1);
  return r * mi + c;
}

/// 4-neighbor grid edges on rows x cols nodes, row-major local ids.
inline std::vector<Edge> grid_edges(int rows, int cols) {
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(rows) * (cols - 1) +
                static_cast<std::size_t>(cols) * (rows - 1));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::uint32_t id = static_cast<std::uint32_t>(r * cols + c);
      if (c + 1 < cols) edges.emplace_back(id, id + 1);
      if (r + 1 < rows) edges.emplace_back(id, id + static_cast<std::uint32_t>(cols));
    }
  }
  return edges;
}

/// Intra-level grid for auxiliary level k: 4^k nodes, 2 * 2^k * (2^k - 1) edges.
inline std::pair<int, std::vector<Edge>> build_aux_graph(int k) {
  require(k >= 1 && k <= 15, "build_aux_graph: level must be in [1, 15]");
  const int m = 1 << k;
  return {m * m, grid_edges(m, m)};
}

/// Pixel-level grid: H*W nodes, H*(W-1) + W*(H-1) edges.
inline std::pair<int, std::vector<Edge>> build_main_graph(int image_h, int image_w) {
  require(image_h >= 2 && image_w >= 2, "build_main_graph: dimensions must be >= 2");
  return {image_h * image_w, grid_edges(image_h, image_w)};
}

/// Edges between adjacent levels, as (coarse local id, fine local id) pairs.
/// For aux->aux (fine == coarse+1) each coarse node links to its 4 quadrant
/// children. For aux->main (fine == kMainLevel) each pixel links to the single
/// level-`coarse` node whose patch contains it.
inline std::vector<Edge> build_interlevel_edges(int coarse, int fine, int image_h,
                                                int image_w) {
  require(coarse >= 1 && coarse <= 15, "build_interlevel_edges: bad coarse level");
  std::vector<Edge> edges;
  if (fine == kMainLevel) {
    require(image_h >= (1 << coarse) && image_w >= (1 << coarse),
            "build_interlevel_edges: image smaller than 2^coarse");
    edges.reserve(static_cast<std::size_t>(image_h) * image_w);
    for (int h = 0; h < image_h; ++h) {
      for (int w = 0; w < image_w; ++w) {
        const int parent = patch_index(h, w, coarse, image_h, image_w);
        edges.emplace_back(static_cast<std::uint32_t>(parent),
                           static_cast<std::uint32_t>(h * image_w + w));
      }
    }
    return edges;
  }
  require(fine == coarse + 1, "build_interlevel_edges: levels must be adjacent");
  const int m = 1 << coarse;
  const int m2 = m * 2;
  edges.reserve(static_cast<std::size_t>(4) * m * m);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      const std::uint32_t parent = static_cast<std::uint32_t>(r * m + c);
      for (int dr = 0; dr < 2; ++dr) {
        for (int dc = 0; dc < 2; ++dc) {
          const std::uint32_t child =
              static_cast<std::uint32_t>((2 * r + dr) * m2 + (2 * c + dc));
          edges.emplace_back(parent, child);
        }
      }
    }
  }
  return edges;
}

/// Builds the full hierarchy for K auxiliary levels over an H x W frame.
/// Pure function of (K, H, W); identical inputs yield bit-identical graphs.
inline HierGraph assemble_hierarchy(int levels, int image_h, int image_w) {
  require(levels >= 1 && levels <= 15, "assemble_hierarchy: K must be in [1, 15]");
  require(image_h >= (1 << levels) && image_w >= (1 << levels),
          "assemble_hierarchy: image must be at least 2^K x 2^K");

  HierGraph g;
  g.levels = levels;
  g.image_h = image_h;
  g.image_w = image_w;

  g.level_offsets.resize(levels + 2);
  g.level_offsets[0] = 0;
  for (int k = 1; k <= levels; ++k) {
    g.level_offsets[k] = g.level_offsets[k - 1] + (1 << (2 * k));
  }
  g.level_offsets[levels + 1] = g.level_offsets[levels] + image_h * image_w;

  const int total = g.level_offsets.back();
  g.node_level.resize(total);
  g.node_loc.resize(total);
  for (int k = 1; k <= levels; ++k) {
    const int m = 1 << k;
    const int offset = g.level_offsets[k - 1];
    const double patch_h = static_cast<double>(image_h) / m;
    const double patch_w = static_cast<double>(image_w) / m;
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < m; ++c) {
        const int id = offset + r * m + c;
        g.node_level[id] = static_cast<std::uint8_t>(k - 1);
        g.node_loc[id] = {(c + 0.5) * patch_w, (r + 0.5) * patch_h};
      }
    }
  }
  const int main_offset = g.level_offsets[levels];
  for (int h = 0; h < image_h; ++h) {
    for (int w = 0; w < image_w; ++w) {
      const int id = main_offset + h * image_w + w;
      g.node_level[id] = static_cast<std::uint8_t>(levels);
      g.node_loc[id] = {static_cast<double>(w), static_cast<double>(h)};
    }
  }

  auto append_shifted = [&g](const std::vector<Edge>& edges, int off_u, int off_v) {
    for (const auto& [u, v] : edges) {
      g.edges.emplace_back(u + static_cast<std::uint32_t>(off_u),
                           v + static_cast<std::uint32_t>(off_v));
    }
  };

  for (int k = 1; k <= levels; ++k) {
    append_shifted(build_aux_graph(k).second, g.level_offsets[k - 1],
                   g.level_offsets[k - 1]);
  }
  append_shifted(build_main_graph(image_h, image_w).second, main_offset, main_offset);
  for (int k = 1; k < levels; ++k) {
    append_shifted(build_interlevel_edges(k, k + 1, image_h, image_w),
                   g.level_offsets[k - 1], g.level_offsets[k]);
  }
  append_shifted(build_interlevel_edges(levels, kMainLevel, image_h, image_w),
                 g.level_offsets[levels - 1], main_offset);
  return g;
}

/// Edge-list dump: header "K H W total_nodes", then one "u v" pair per line.
inline void write_edge_list(const HierGraph& g, std::ostream& os) {
  os << g.levels << ' ' << g.image_h << ' ' << g.image_w << ' ' << g.total_nodes()
     << '\n';
  for (const auto& [u, v] : g.edges) os << u << ' ' << v << '\n';
}

}  // namespace lvmark
