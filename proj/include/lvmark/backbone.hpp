#pragma once

#include "lvmark/graph.hpp"
#include "lvmark/image.hpp"
#include "lvmark/nn.hpp"

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lvmark {

/// Backbone configuration. Encoder stages are listed coarse-ward:
/// (spatial size, channels) with spatial sizes 2^K, 2^(K-1), ..., 2.
struct FeatureConfig {
  int expand_channels = 4;
  int gnn_width = 128;
  std::vector<std::pair<int, int>> encoder_dims = default_encoder_dims(7);

  static std::vector<std::pair<int, int>> default_encoder_dims(int levels,
                                                               int base_channels = 8) {
    std::vector<std::pair<int, int>> dims;
    dims.reserve(levels);
    for (int j = 0; j < levels; ++j) {
      dims.emplace_back(1 << (levels - j), base_channels << j);
    }
    return dims;
  }

  static FeatureConfig for_levels(int levels, int gnn_width = 128,
                                  int expand_channels = 4) {
    FeatureConfig cfg;
    cfg.expand_channels = expand_channels;
    cfg.gnn_width = gnn_width;
    cfg.encoder_dims = default_encoder_dims(levels);
    return cfg;
  }

  /// Channels of the encoder/decoder feature map at spatial size 2^k.
  int channels_at_level(int k) const {
    const int levels = static_cast<int>(encoder_dims.size());
    require(k >= 1 && k <= levels, "FeatureConfig: level out of range");
    return encoder_dims[levels - k].second;
  }
};

/// Per-level node-feature matrices: aux levels 1..K at [0..K-1], main at [K].
struct NodeFeatures {
  std::vector<Matrix> per_level;

  Matrix concat(const HierGraph& g) const {
    require(static_cast<int>(per_level.size()) == g.num_levels(),
            "NodeFeatures: level count mismatch");
    Matrix out(g.total_nodes(), per_level.front().cols());
    for (int li = 0; li < g.num_levels(); ++li) {
      require(per_level[li].rows() == g.level_node_count(li),
              "NodeFeatures: row count mismatch at level");
      out.middleRows(g.level_offset(li), g.level_node_count(li)) = per_level[li];
    }
    return out;
  }
};

namespace detail {

inline nn::FeatureMap concat_channels(const nn::FeatureMap& a, const nn::FeatureMap& b) {
  require(a.h == b.h && a.w == b.w, "concat_channels: spatial mismatch");
  nn::FeatureMap out(a.channels + b.channels, a.h, a.w);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

inline std::pair<nn::FeatureMap, nn::FeatureMap> split_channels(const nn::FeatureMap& d,
                                                                int channels_a) {
  nn::FeatureMap a(channels_a, d.h, d.w);
  nn::FeatureMap b(d.channels - channels_a, d.h, d.w);
  std::copy(d.data.begin(), d.data.begin() + a.data.size(), a.data.begin());
  std::copy(d.data.begin() + a.data.size(), d.data.end(), b.data.begin());
  return {std::move(a), std::move(b)};
}

inline void add_into(nn::FeatureMap& acc, const nn::FeatureMap& g) {
  if (acc.data.empty()) {
    acc = g;
    return;
  }
  require(acc.channels == g.channels && acc.h == g.h && acc.w == g.w,
          "add_into: shape mismatch");
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
}

}  // namespace detail

/// Node features for every level of the hierarchy from a raw grayscale frame:
/// channel-expansion CNN, U-Net encoder/decoder, per-level affine projection
/// to the shared message-passing width.
class HierFeatureNet {
 public:
  HierFeatureNet(int image_h, int image_w, int levels, FeatureConfig cfg,
                 std::mt19937_64& rng)
      : image_h_(image_h), image_w_(image_w), levels_(levels), cfg_(std::move(cfg)) {
    require(levels_ >= 1 && levels_ <= 15, "HierFeatureNet: K must be in [1, 15]");
    require(static_cast<int>(cfg_.encoder_dims.size()) == levels_,
            "HierFeatureNet: number of encoder stages must equal K");
    for (int j = 0; j < levels_; ++j) {
      require(cfg_.encoder_dims[j].first == (1 << (levels_ - j)),
              "HierFeatureNet: encoder spatial sizes must be 2^K..2");
      require(cfg_.encoder_dims[j].second >= 1, "HierFeatureNet: bad channel count");
    }
    require(image_h_ >= (1 << levels_) && image_w_ >= (1 << levels_),
            "HierFeatureNet: input smaller than coarsest stage");
    require(cfg_.expand_channels >= 1 && cfg_.gnn_width >= 1,
            "HierFeatureNet: bad feature config");

    expand_ = std::make_unique<nn::Conv3x3>("backbone.expand", 1, cfg_.expand_channels, rng);

    int in_ch = cfg_.expand_channels;
    for (int j = 0; j < levels_; ++j) {
      const auto [spatial, ch] = cfg_.encoder_dims[j];
      enc_blocks_.push_back(std::make_unique<nn::ConvBlock>(
          "backbone.enc" + std::to_string(j + 1), in_ch, ch, ch, rng));
      enc_pools_.emplace_back(spatial, spatial);
      in_ch = ch;
    }

    for (int k = 2; k <= levels_; ++k) {
      const int ch_in = cfg_.channels_at_level(k - 1) + cfg_.channels_at_level(k);
      const int ch_out = cfg_.channels_at_level(k);
      dec_resizes_.emplace_back(1 << k, 1 << k);
      dec_blocks_.push_back(std::make_unique<nn::ConvBlock>(
          "backbone.dec" + std::to_string(k), ch_in, ch_out, ch_out, rng));
    }
    main_resize_ = std::make_unique<nn::BilinearResize>(image_h_, image_w_);
    main_block_ = std::make_unique<nn::ConvBlock>(
        "backbone.main",
        cfg_.channels_at_level(levels_) + cfg_.expand_channels,
        cfg_.expand_channels, cfg_.expand_channels, rng);

    for (int k = 1; k <= levels_; ++k) {
      projections_.push_back(std::make_unique<nn::Linear>(
          "backbone.proj_l" + std::to_string(k), cfg_.channels_at_level(k),
          cfg_.gnn_width, rng));
    }
    projections_.push_back(std::make_unique<nn::Linear>(
        "backbone.proj_main", cfg_.expand_channels, cfg_.gnn_width, rng));
  }

  /// Channel expansion: 1 -> C channels, spatial dims preserved.
  nn::FeatureMap expand(const nn::FeatureMap& gray) {
    require(gray.channels == 1, "expand: input must be single-channel");
    require(gray.h == image_h_ && gray.w == image_w_, "expand: unexpected image size");
    return expand_->forward(gray);
  }

  /// Decoder feature maps at 2x2 .. 2^K x 2^K plus the full-resolution map,
  /// indexed [0..K-1] for aux levels and [K] for main.
  std::vector<nn::FeatureMap> unet(const nn::FeatureMap& expanded) {
    require(expanded.h >= (1 << levels_) && expanded.w >= (1 << levels_),
            "unet: input smaller than coarsest stage");
    x0_ = expanded;
    enc_outs_.clear();
    enc_outs_.reserve(levels_);
    nn::FeatureMap e = expanded;
    for (int j = 0; j < levels_; ++j) {
      nn::FeatureMap a = enc_blocks_[j]->forward(e);
      e = enc_pools_[j].forward(a);
      enc_outs_.push_back(e);
    }

    std::vector<nn::FeatureMap> maps(levels_ + 1);
    maps[0] = enc_outs_.back();
    for (int k = 2; k <= levels_; ++k) {
      nn::FeatureMap up = dec_resizes_[k - 2].forward(maps[k - 2]);
      nn::FeatureMap cat = detail::concat_channels(up, enc_outs_[levels_ - k]);
      maps[k - 1] = dec_blocks_[k - 2]->forward(cat);
    }
    nn::FeatureMap up = main_resize_->forward(maps[levels_ - 1]);
    nn::FeatureMap cat = detail::concat_channels(up, x0_);
    maps[levels_] = main_block_->forward(cat);
    return maps;
  }

  /// Level-specific affine projection to the shared width, rows ordered by
  /// node id within each level.
  NodeFeatures project(const std::vector<nn::FeatureMap>& maps, const HierGraph& g) {
    require(static_cast<int>(maps.size()) == levels_ + 1,
            "project: one map per level required");
    NodeFeatures nf;
    nf.per_level.resize(levels_ + 1);
    for (int li = 0; li <= levels_; ++li) {
      require(maps[li].h * maps[li].w == g.level_node_count(li),
              "project: map size does not match level node count");
      nf.per_level[li] = projections_[li]->forward(nn::map_to_rows(maps[li]));
    }
    return nf;
  }

  NodeFeatures forward(const Image& img, const HierGraph& g) {
    require(img.h == image_h_ && img.w == image_w_, "backbone: image size mismatch");
    nn::FeatureMap gray(1, img.h, img.w);
    gray.data = img.px;
    maps_ = unet(expand(gray));
    return project(maps_, g);
  }

  /// Backpropagates node-feature gradients into all backbone parameters.
  void backward(const NodeFeatures& dfeatures) {
    require(static_cast<int>(dfeatures.per_level.size()) == levels_ + 1,
            "backbone backward: level count mismatch");
    std::vector<nn::FeatureMap> dmaps(levels_ + 1);
    for (int li = 0; li <= levels_; ++li) {
      const Matrix drows = projections_[li]->backward(dfeatures.per_level[li]);
      dmaps[li] = nn::rows_to_map(drows, maps_[li].channels, maps_[li].h, maps_[li].w);
    }

    nn::FeatureMap dx0;
    std::vector<nn::FeatureMap> denc(levels_);

    {
      nn::FeatureMap dcat = main_block_->backward(dmaps[levels_]);
      auto [dup, dskip] = detail::split_channels(dcat, cfg_.channels_at_level(levels_));
      detail::add_into(dmaps[levels_ - 1], main_resize_->backward(dup));
      dx0 = std::move(dskip);
    }
    for (int k = levels_; k >= 2; --k) {
      nn::FeatureMap dcat = dec_blocks_[k - 2]->backward(dmaps[k - 1]);
      auto [dup, dskip] = detail::split_channels(dcat, cfg_.channels_at_level(k - 1));
      detail::add_into(dmaps[k - 2], dec_resizes_[k - 2].backward(dup));
      detail::add_into(denc[levels_ - k], dskip);
    }
    detail::add_into(denc[levels_ - 1], dmaps[0]);

    for (int j = levels_ - 1; j >= 0; --j) {
      nn::FeatureMap da = enc_pools_[j].backward(denc[j]);
      nn::FeatureMap dprev = enc_blocks_[j]->backward(da);
      if (j > 0) {
        detail::add_into(denc[j - 1], dprev);
      } else {
        detail::add_into(dx0, dprev);
      }
    }
    expand_->backward(dx0);
  }

  void visit_params(const nn::ParamVisitor& fn) {
    expand_->visit_params(fn);
    for (auto& b : enc_blocks_) b->visit_params(fn);
    for (auto& b : dec_blocks_) b->visit_params(fn);
    main_block_->visit_params(fn);
    for (auto& p : projections_) p->visit_params(fn);
  }

  const FeatureConfig& config() const { return cfg_; }

 private:
  int image_h_, image_w_, levels_;
  FeatureConfig cfg_;

  std::unique_ptr<nn::Conv3x3> expand_;
  std::vector<std::unique_ptr<nn::ConvBlock>> enc_blocks_;
  std::vector<nn::AdaptiveAvgPool> enc_pools_;
  std::vector<nn::BilinearResize> dec_resizes_;
  std::vector<std::unique_ptr<nn::ConvBlock>> dec_blocks_;
  std::unique_ptr<nn::BilinearResize> main_resize_;
  std::unique_ptr<nn::ConvBlock> main_block_;
  std::vector<std::unique_ptr<nn::Linear>> projections_;

  // forward caches
  nn::FeatureMap x0_;
  std::vector<nn::FeatureMap> enc_outs_;
  std::vector<nn::FeatureMap> maps_;
};

}  // namespace lvmark
