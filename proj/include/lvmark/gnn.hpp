#pragma once

#include "lvmark/graph.hpp"
#include "lvmark/nn.hpp"

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lvmark {

struct GnnConfig {
  int layers = 3;
  int width = 128;
  int mlp_hidden = 128;
  double softmax_temperature = 1.0;

  void validate() const {
    require(layers >= 1, "GnnConfig: layers must be >= 1");
    require(width >= 1 && mlp_hidden >= 1, "GnnConfig: widths must be >= 1");
    require(softmax_temperature > 0.0, "GnnConfig: temperature must be > 0");
  }
};

/// D^{-1/2} (A + I) D^{-1/2} in CSR form. Symmetric; built once per graph
/// shape and immutable afterwards, so it can be shared across threads.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency() = default;

  NormalizedAdjacency(int num_nodes, std::span<const Edge> undirected_edges)
      : n_(num_nodes) {
    require(n_ > 0, "NormalizedAdjacency: empty graph");
    std::vector<int> degree(n_, 1);  // self-loop
    for (const auto& [u, v] : undirected_edges) {
      require(u < static_cast<std::uint32_t>(n_) && v < static_cast<std::uint32_t>(n_),
              "NormalizedAdjacency: edge endpoint out of range");
      require(u != v, "NormalizedAdjacency: self-edges not allowed");
      ++degree[u];
      ++degree[v];
    }
    row_ptr_.assign(n_ + 1, 0);
    for (int i = 0; i < n_; ++i) row_ptr_[i + 1] = row_ptr_[i] + degree[i];
    col_.resize(row_ptr_.back());
    val_.resize(row_ptr_.back());

    std::vector<int> cursor(row_ptr_.begin(), row_ptr_.end() - 1);
    std::vector<double> inv_sqrt(n_);
    for (int i = 0; i < n_; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(degree[i]));
    for (int i = 0; i < n_; ++i) {
      col_[cursor[i]] = i;
      val_[cursor[i]] = inv_sqrt[i] * inv_sqrt[i];
      ++cursor[i];
    }
    for (const auto& [u, v] : undirected_edges) {
      const double c = inv_sqrt[u] * inv_sqrt[v];
      col_[cursor[u]] = static_cast<int>(v);
      val_[cursor[u]++] = c;
      col_[cursor[v]] = static_cast<int>(u);
      val_[cursor[v]++] = c;
    }
  }

  int size() const { return n_; }

  void apply_into(const Matrix& x, Matrix& y) const {
    require(x.rows() == n_, "NormalizedAdjacency: row count mismatch");
    y.resize(x.rows(), x.cols());
    y.setZero();
    for (int i = 0; i < n_; ++i) {
      auto yi = y.row(i);
      for (int idx = row_ptr_[i]; idx < row_ptr_[i + 1]; ++idx) {
        yi += val_[idx] * x.row(col_[idx]);
      }
    }
  }

  Matrix apply(const Matrix& x) const {
    Matrix y;
    apply_into(x, y);
    return y;
  }

 private:
  int n_ = 0;
  std::vector<int> row_ptr_;
  std::vector<int> col_;
  std::vector<double> val_;
};

/// One symmetric-normalized graph convolution followed by ReLU.
class GraphConvLayer {
 public:
  GraphConvLayer(const std::string& name, int in_dim, int out_dim, std::mt19937_64& rng)
      : w_(name + ".w", in_dim, out_dim), b_(name + ".b", 1, out_dim) {
    nn::he_uniform(w_.value, in_dim, rng);
  }

  Matrix forward(const NormalizedAdjacency& adj, const Matrix& x) {
    require(x.cols() == w_.value.rows(), "GraphConvLayer: width mismatch");
    adj.apply_into(x, ax_);
    out_ = ax_ * w_.value;
    out_.rowwise() += b_.value.row(0);
    out_ = out_.cwiseMax(0.0);
    return out_;
  }

  Matrix backward(const NormalizedAdjacency& adj, const Matrix& dout) {
    Matrix dpre = dout.cwiseProduct((out_.array() > 0.0).cast<double>().matrix());
    w_.grad += ax_.transpose() * dpre;
    b_.grad.row(0) += dpre.colwise().sum();
    const Matrix dax = dpre * w_.value.transpose();
    return adj.apply(dax);
  }

  void visit_params(const nn::ParamVisitor& fn) {
    fn(w_);
    fn(b_);
  }

 private:
  nn::Tensor w_, b_;
  Matrix ax_, out_;
};

/// L stacked graph convolutions; one weight set spans all hierarchy levels.
class GraphConvStack {
 public:
  GraphConvStack(int layers, int width, std::mt19937_64& rng) {
    require(layers >= 1, "GraphConvStack: layers must be >= 1");
    for (int l = 0; l < layers; ++l) {
      layers_.emplace_back("gcn.layer" + std::to_string(l + 1), width, width, rng);
    }
  }

  Matrix forward(const NormalizedAdjacency& adj, Matrix x) {
    for (auto& layer : layers_) x = layer.forward(adj, x);
    return x;
  }

  Matrix backward(const NormalizedAdjacency& adj, Matrix dout) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      dout = it->backward(adj, dout);
    }
    return dout;
  }

  void visit_params(const nn::ParamVisitor& fn) {
    for (auto& layer : layers_) layer.visit_params(fn);
  }

 private:
  std::vector<GraphConvLayer> layers_;
};

/// Per-node MLP (one hidden ReLU layer) to 4 logits, then sigmoid.
class HeatmapHead {
 public:
  HeatmapHead(int in_dim, int hidden, std::mt19937_64& rng)
      : fc1_("head.fc1", in_dim, hidden, rng), fc2_("head.fc2", hidden, 4, rng) {}

  Matrix forward(const Matrix& embeddings) {
    hidden_ = fc1_.forward(embeddings).cwiseMax(0.0);
    const Matrix logits = fc2_.forward(hidden_);
    return 1.0 / (1.0 + (-logits.array()).exp());
  }

  /// Takes the gradient w.r.t. the pre-sigmoid logits.
  Matrix backward(const Matrix& dlogits) {
    Matrix dh = fc2_.backward(dlogits);
    dh = dh.cwiseProduct((hidden_.array() > 0.0).cast<double>().matrix());
    return fc1_.backward(dh);
  }

  void visit_params(const nn::ParamVisitor& fn) {
    fc1_.visit_params(fn);
    fc2_.visit_params(fn);
  }

 private:
  nn::Linear fc1_, fc2_;
  Matrix hidden_;
};

/// Model outputs per level, values in [0, 1], 4 channels per node.
struct Heatmaps {
  std::vector<Matrix> per_level;  // aux 1..K then main

  const Matrix& main() const { return per_level.back(); }
};

inline Heatmaps split_by_level(const Matrix& node_values, const HierGraph& g) {
  require(node_values.rows() == g.total_nodes(), "split_by_level: row mismatch");
  Heatmaps maps;
  maps.per_level.reserve(g.num_levels());
  for (int li = 0; li < g.num_levels(); ++li) {
    maps.per_level.push_back(
        node_values.middleRows(g.level_offset(li), g.level_node_count(li)));
  }
  return maps;
}

/// Four decoded (x, y) sub-pixel coordinates in pixel units.
struct CoordinatePrediction {
  std::array<std::pair<double, double>, 4> points;
};

struct SoftArgmaxResult {
  double x = 0.0;
  double y = 0.0;
  std::vector<double> weights;
};

/// Softmax-weighted expectation of node locations over one heatmap channel.
inline SoftArgmaxResult soft_argmax(std::span<const double> values,
                                    std::span<const std::pair<double, double>> locs,
                                    double tau) {
  require(!values.empty(), "soft_argmax: empty heatmap");
  require(values.size() == locs.size(), "soft_argmax: values/locations mismatch");
  require(tau > 0.0, "soft_argmax: temperature must be > 0");
  SoftArgmaxResult r;
  r.weights.resize(values.size());
  double vmax = values[0];
  for (const double v : values) vmax = std::max(vmax, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    r.weights[i] = std::exp((values[i] - vmax) / tau);
    sum += r.weights[i];
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    r.weights[i] /= sum;
    r.x += r.weights[i] * locs[i].first;
    r.y += r.weights[i] * locs[i].second;
  }
  return r;
}

/// Accumulates d(gx*x + gy*y)/d(values) into dvalues.
inline void soft_argmax_backward(const SoftArgmaxResult& r,
                                 std::span<const std::pair<double, double>> locs,
                                 double tau, double gx, double gy, double* dvalues) {
  for (std::size_t i = 0; i < r.weights.size(); ++i) {
    dvalues[i] += r.weights[i] / tau *
                  (gx * (locs[i].first - r.x) + gy * (locs[i].second - r.y));
  }
}

}  // namespace lvmark
