#pragma once

#include "lvmark/backbone.hpp"
#include "lvmark/gnn.hpp"
#include "lvmark/graph.hpp"
#include "lvmark/image.hpp"
#include "lvmark/loss.hpp"

#include <array>
#include <random>
#include <vector>

namespace lvmark {

struct ModelConfig {
  int image_h = 224;
  int image_w = 224;
  int levels = 7;
  FeatureConfig features;
  GnnConfig gnn;

  static ModelConfig make(int image_size, int levels, int gnn_width = 128,
                          int expand_channels = 4) {
    ModelConfig cfg;
    cfg.image_h = cfg.image_w = image_size;
    cfg.levels = levels;
    cfg.features = FeatureConfig::for_levels(levels, gnn_width, expand_channels);
    cfg.gnn.width = gnn_width;
    return cfg;
  }

  void validate() const {
    require(levels >= 1 && levels <= 15, "ModelConfig: levels must be in [1, 15]");
    require(image_h >= (1 << levels) && image_w >= (1 << levels),
            "ModelConfig: image size must be at least 2^K");
    require(features.gnn_width == gnn.width,
            "ModelConfig: backbone and GNN widths must agree");
    gnn.validate();
  }
};

/// End-to-end landmark detector: backbone features -> message passing over
/// the hierarchical graph -> sigmoid heatmaps -> softmax-expectation decode.
class LandmarkModel {
 public:
  LandmarkModel(const ModelConfig& cfg, std::uint64_t init_seed)
      : cfg_(cfg), graph_(assemble_hierarchy(cfg.levels, cfg.image_h, cfg.image_w)),
        adjacency_(graph_.total_nodes(), graph_.edges) {
    cfg_.validate();
    std::mt19937_64 rng(init_seed);
    backbone_ = std::make_unique<HierFeatureNet>(cfg.image_h, cfg.image_w, cfg.levels,
                                                 cfg.features, rng);
    gcn_ = std::make_unique<GraphConvStack>(cfg.gnn.layers, cfg.gnn.width, rng);
    head_ = std::make_unique<HeatmapHead>(cfg.gnn.width, cfg.gnn.mlp_hidden, rng);
    main_locs_.assign(graph_.node_loc.begin() + graph_.level_offset(graph_.main_level_index()),
                      graph_.node_loc.end());
  }

  struct ForwardResult {
    Matrix probs;  // |V| x 4
    Heatmaps heatmaps;
    CoordinatePrediction coords;
    std::array<SoftArgmaxResult, 4> decode;
  };

  ForwardResult forward(const Image& img) {
    ForwardResult out;
    const NodeFeatures nf = backbone_->forward(img, graph_);
    const Matrix emb = gcn_->forward(adjacency_, nf.concat(graph_));
    out.probs = head_->forward(emb);
    out.heatmaps = split_by_level(out.probs, graph_);
    decode_coordinates(out.heatmaps.main(), out.coords, out.decode);
    return out;
  }

  CoordinatePrediction predict(const Image& img) { return forward(img).coords; }

  /// Forward + loss + gradient accumulation; gradients are scaled by
  /// `grad_scale` (1/batch for mean-over-batch training).
  LossReport learn(const Image& img, const std::vector<LevelLabels>& labels,
                   const LandmarkSet& gt, const LossConfig& loss_cfg,
                   double grad_scale = 1.0) {
    ForwardResult f = forward(img);
    const LossReport report = total_loss(f.heatmaps, labels, f.coords, gt, loss_cfg);

    Matrix dlogits = Matrix::Zero(f.probs.rows(), 4);
    for (int li = 0; li < graph_.num_levels(); ++li) {
      const double lw = loss_cfg.level_weight(li) * grad_scale;
      if (lw == 0.0) continue;
      dlogits.middleRows(graph_.level_offset(li), graph_.level_node_count(li)) +=
          lw * weighted_bce_grad_logits(f.heatmaps.per_level[li], labels[li].values,
                                        loss_cfg.pos_weight);
    }

    if (loss_cfg.lambda_l2 > 0.0) {
      const int main_offset = graph_.level_offset(graph_.main_level_index());
      const int main_count = graph_.level_node_count(graph_.main_level_index());
      const Matrix& main_probs = f.heatmaps.main();
      Vector dvalues(main_count);
      for (int p = 0; p < 4; ++p) {
        const double gx = loss_cfg.lambda_l2 * grad_scale * 2.0 *
                          (f.coords.points[p].first - gt.points[p].w) / 4.0;
        const double gy = loss_cfg.lambda_l2 * grad_scale * 2.0 *
                          (f.coords.points[p].second - gt.points[p].h) / 4.0;
        dvalues.setZero();
        soft_argmax_backward(f.decode[p], main_locs_, cfg_.gnn.softmax_temperature, gx,
                             gy, dvalues.data());
        // chain through the sigmoid: dz = dp * p * (1 - p)
        for (int i = 0; i < main_count; ++i) {
          const double prob = main_probs(i, p);
          dlogits(main_offset + i, p) += dvalues(i) * prob * (1.0 - prob);
        }
      }
    }

    const Matrix demb = head_->backward(dlogits);
    const Matrix dfeat = gcn_->backward(adjacency_, demb);
    NodeFeatures dnf;
    dnf.per_level.resize(graph_.num_levels());
    for (int li = 0; li < graph_.num_levels(); ++li) {
      dnf.per_level[li] =
          dfeat.middleRows(graph_.level_offset(li), graph_.level_node_count(li));
    }
    backbone_->backward(dnf);
    return report;
  }

  void zero_grad() {
    visit_params([](nn::Tensor& t) { t.grad.setZero(); });
  }

  void visit_params(const nn::ParamVisitor& fn) {
    backbone_->visit_params(fn);
    gcn_->visit_params(fn);
    head_->visit_params(fn);
  }

  const ModelConfig& config() const { return cfg_; }
  const HierGraph& graph() const { return graph_; }
  const NormalizedAdjacency& adjacency() const { return adjacency_; }
  HierFeatureNet& backbone() { return *backbone_; }

 private:
  void decode_coordinates(const Matrix& main_probs, CoordinatePrediction& coords,
                          std::array<SoftArgmaxResult, 4>& decode) {
    const int n = static_cast<int>(main_probs.rows());
    std::vector<double> column(n);
    for (int p = 0; p < 4; ++p) {
      for (int i = 0; i < n; ++i) column[i] = main_probs(i, p);
      decode[p] = soft_argmax(column, main_locs_, cfg_.gnn.softmax_temperature);
      coords.points[p] = {decode[p].x, decode[p].y};
    }
  }

  ModelConfig cfg_;
  HierGraph graph_;
  NormalizedAdjacency adjacency_;
  std::unique_ptr<HierFeatureNet> backbone_;
  std::unique_ptr<GraphConvStack> gcn_;
  std::unique_ptr<HeatmapHead> head_;
  std::vector<std::pair<double, double>> main_locs_;
};

}  // namespace lvmark
