#pragma once

#include "lvmark/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lvmark::nn {

/// Named parameter with its gradient accumulator.
struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;

  Tensor() = default;
  Tensor(std::string n, int rows, int cols)
      : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}
};

using ParamVisitor = std::function<void(Tensor&)>;

inline void he_uniform(Matrix& m, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
  }
}

/// Multi-channel 2D feature map, channel-major contiguous storage.
struct FeatureMap {
  int channels = 0;
  int h = 0;
  int w = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int c, int height, int width)
      : channels(c), h(height), w(width),
        data(static_cast<std::size_t>(c) * height * width, 0.0) {}

  Eigen::Map<Matrix> chan(int c) {
    return {&data[static_cast<std::size_t>(c) * h * w], h, w};
  }
  Eigen::Map<const Matrix> chan(int c) const {
    return {&data[static_cast<std::size_t>(c) * h * w], h, w};
  }
};

/// (h*w) x channels matrix view of a map, rows in row-major pixel order.
inline Matrix map_to_rows(const FeatureMap& m) {
  Matrix out(m.h * m.w, m.channels);
  for (int c = 0; c < m.channels; ++c) {
    out.col(c) = Eigen::Map<const Eigen::VectorXd>(
        &m.data[static_cast<std::size_t>(c) * m.h * m.w], m.h * m.w);
  }
  return out;
}

inline FeatureMap rows_to_map(const Matrix& rows, int channels, int h, int w) {
  require(rows.rows() == h * w && rows.cols() == channels,
          "rows_to_map: shape mismatch");
  FeatureMap m(channels, h, w);
  for (int c = 0; c < channels; ++c) {
    Eigen::Map<Eigen::VectorXd>(&m.data[static_cast<std::size_t>(c) * h * w], h * w) =
        rows.col(c);
  }
  return m;
}

inline void relu_inplace(FeatureMap& m) {
  for (auto& v : m.data) v = v > 0.0 ? v : 0.0;
}

/// Zeroes entries of `grad` where the cached post-ReLU activation is zero.
inline void relu_mask(FeatureMap& grad, const FeatureMap& activation) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (activation.data[i] <= 0.0) grad.data[i] = 0.0;
  }
}

/// 3x3 convolution, stride 1, zero padding; spatial dims preserved.
class Conv3x3 {
 public:
  Conv3x3(std::string name, int in_ch, int out_ch, std::mt19937_64& rng)
      : in_ch_(in_ch), out_ch_(out_ch),
        w_(name + ".w", out_ch, in_ch * 9), b_(name + ".b", 1, out_ch) {
    he_uniform(w_.value, in_ch * 9, rng);
  }

  FeatureMap forward(const FeatureMap& x) {
    require(x.channels == in_ch_, "Conv3x3: input channel mismatch");
    in_ = x;
    FeatureMap y(out_ch_, x.h, x.w);
    for (int oc = 0; oc < out_ch_; ++oc) {
      auto yc = y.chan(oc);
      yc.setConstant(b_.value(0, oc));
      for (int ic = 0; ic < in_ch_; ++ic) {
        const auto xc = x.chan(ic);
        for (int dy = -1; dy <= 1; ++dy) {
          const int oy = std::max(0, -dy), iy = std::max(0, dy);
          const int bh = x.h - std::abs(dy);
          for (int dx = -1; dx <= 1; ++dx) {
            const int ox = std::max(0, -dx), ix = std::max(0, dx);
            const int bw = x.w - std::abs(dx);
            const double wv = w_.value(oc, ic * 9 + (dy + 1) * 3 + (dx + 1));
            yc.block(oy, ox, bh, bw) += wv * xc.block(iy, ix, bh, bw);
          }
        }
      }
    }
    return y;
  }

  FeatureMap backward(const FeatureMap& dy) {
    FeatureMap dx(in_ch_, in_.h, in_.w);
    for (int oc = 0; oc < out_ch_; ++oc) {
      const auto dyc = dy.chan(oc);
      b_.grad(0, oc) += dyc.sum();
      for (int ic = 0; ic < in_ch_; ++ic) {
        const auto xc = in_.chan(ic);
        auto dxc = dx.chan(ic);
        for (int dy_ = -1; dy_ <= 1; ++dy_) {
          const int oy = std::max(0, -dy_), iy = std::max(0, dy_);
          const int bh = in_.h - std::abs(dy_);
          for (int dx_ = -1; dx_ <= 1; ++dx_) {
            const int ox = std::max(0, -dx_), ix = std::max(0, dx_);
            const int bw = in_.w - std::abs(dx_);
            const int widx = ic * 9 + (dy_ + 1) * 3 + (dx_ + 1);
            dxc.block(iy, ix, bh, bw) += w_.value(oc, widx) * dyc.block(oy, ox, bh, bw);
            w_.grad(oc, widx) +=
                (xc.block(iy, ix, bh, bw).array() * dyc.block(oy, ox, bh, bw).array())
                    .sum();
          }
        }
      }
    }
    return dx;
  }

  void visit_params(const ParamVisitor& fn) {
    fn(w_);
    fn(b_);
  }

  int out_channels() const { return out_ch_; }

 private:
  int in_ch_, out_ch_;
  Tensor w_, b_;
  FeatureMap in_;
};

/// Two 3x3 convolutions, each followed by ReLU.
class ConvBlock {
 public:
  ConvBlock(const std::string& name, int in_ch, int mid_ch, int out_ch,
            std::mt19937_64& rng)
      : conv1_(name + ".conv1", in_ch, mid_ch, rng),
        conv2_(name + ".conv2", mid_ch, out_ch, rng) {}

  FeatureMap forward(const FeatureMap& x) {
    a1_ = conv1_.forward(x);
    relu_inplace(a1_);
    a2_ = conv2_.forward(a1_);
    relu_inplace(a2_);
    return a2_;
  }

  FeatureMap backward(FeatureMap dy) {
    relu_mask(dy, a2_);
    FeatureMap d1 = conv2_.backward(dy);
    relu_mask(d1, a1_);
    return conv1_.backward(d1);
  }

  void visit_params(const ParamVisitor& fn) {
    conv1_.visit_params(fn);
    conv2_.visit_params(fn);
  }

 private:
  Conv3x3 conv1_, conv2_;
  FeatureMap a1_, a2_;
};

/// Average pooling to a fixed output size; output cell (i, j) averages input
/// rows [floor(i*in/out), ceil((i+1)*in/out)). Regions may overlap when the
/// input size is not a multiple of the output size.
class AdaptiveAvgPool {
 public:
  AdaptiveAvgPool(int to_h, int to_w) : th_(to_h), tw_(to_w) {}

  FeatureMap forward(const FeatureMap& x) {
    in_ch_ = x.channels;
    in_h_ = x.h;
    in_w_ = x.w;
    FeatureMap y(x.channels, th_, tw_);
    for (int c = 0; c < x.channels; ++c) {
      const auto xc = x.chan(c);
      auto yc = y.chan(c);
      for (int i = 0; i < th_; ++i) {
        const auto [ys, ye] = region(i, in_h_, th_);
        for (int j = 0; j < tw_; ++j) {
          const auto [xs, xe] = region(j, in_w_, tw_);
          yc(i, j) = xc.block(ys, xs, ye - ys, xe - xs).mean();
        }
      }
    }
    return y;
  }

  FeatureMap backward(const FeatureMap& dy) {
    FeatureMap dx(in_ch_, in_h_, in_w_);
    for (int c = 0; c < in_ch_; ++c) {
      const auto dyc = dy.chan(c);
      auto dxc = dx.chan(c);
      for (int i = 0; i < th_; ++i) {
        const auto [ys, ye] = region(i, in_h_, th_);
        for (int j = 0; j < tw_; ++j) {
          const auto [xs, xe] = region(j, in_w_, tw_);
          const double g = dyc(i, j) / ((ye - ys) * (xe - xs));
          dxc.block(ys, xs, ye - ys, xe - xs).array() += g;
        }
      }
    }
    return dx;
  }

 private:
  static std::pair<int, int> region(int i, int in, int out) {
    return {(i * in) / out, ((i + 1) * in + out - 1) / out};
  }

  int th_, tw_;
  int in_ch_ = 0, in_h_ = 0, in_w_ = 0;
};

/// Bilinear resize with the pixel-center convention; linear, so the backward
/// pass is the transpose scatter of the interpolation weights.
class BilinearResize {
 public:
  BilinearResize(int to_h, int to_w) : th_(to_h), tw_(to_w) {}

  FeatureMap forward(const FeatureMap& x) {
    in_ch_ = x.channels;
    in_h_ = x.h;
    in_w_ = x.w;
    build_tables();
    FeatureMap y(x.channels, th_, tw_);
    for (int c = 0; c < x.channels; ++c) {
      const auto xc = x.chan(c);
      auto yc = y.chan(c);
      for (int i = 0; i < th_; ++i) {
        for (int j = 0; j < tw_; ++j) {
          yc(i, j) = (1 - wy_[i]) * ((1 - wx_[j]) * xc(y0_[i], x0_[j]) +
                                     wx_[j] * xc(y0_[i], x1_[j])) +
                     wy_[i] * ((1 - wx_[j]) * xc(y1_[i], x0_[j]) +
                               wx_[j] * xc(y1_[i], x1_[j]));
        }
      }
    }
    return y;
  }

  FeatureMap backward(const FeatureMap& dy) {
    FeatureMap dx(in_ch_, in_h_, in_w_);
    for (int c = 0; c < in_ch_; ++c) {
      const auto dyc = dy.chan(c);
      auto dxc = dx.chan(c);
      for (int i = 0; i < th_; ++i) {
        for (int j = 0; j < tw_; ++j) {
          const double g = dyc(i, j);
          dxc(y0_[i], x0_[j]) += (1 - wy_[i]) * (1 - wx_[j]) * g;
          dxc(y0_[i], x1_[j]) += (1 - wy_[i]) * wx_[j] * g;
          dxc(y1_[i], x0_[j]) += wy_[i] * (1 - wx_[j]) * g;
          dxc(y1_[i], x1_[j]) += wy_[i] * wx_[j] * g;
        }
      }
    }
    return dx;
  }

 private:
  void build_tables() {
    y0_.resize(th_);
    y1_.resize(th_);
    wy_.resize(th_);
    x0_.resize(tw_);
    x1_.resize(tw_);
    wx_.resize(tw_);
    const double sy = static_cast<double>(in_h_) / th_;
    const double sx = static_cast<double>(in_w_) / tw_;
    for (int i = 0; i < th_; ++i) {
      const double f = std::clamp((i + 0.5) * sy - 0.5, 0.0, in_h_ - 1.0);
      y0_[i] = static_cast<int>(f);
      y1_[i] = std::min(y0_[i] + 1, in_h_ - 1);
      wy_[i] = f - y0_[i];
    }
    for (int j = 0; j < tw_; ++j) {
      const double f = std::clamp((j + 0.5) * sx - 0.5, 0.0, in_w_ - 1.0);
      x0_[j] = static_cast<int>(f);
      x1_[j] = std::min(x0_[j] + 1, in_w_ - 1);
      wx_[j] = f - x0_[j];
    }
  }

  int th_, tw_;
  int in_ch_ = 0, in_h_ = 0, in_w_ = 0;
  std::vector<int> y0_, y1_, x0_, x1_;
  std::vector<double> wy_, wx_;
};

/// Per-row affine map: y = x W + b.
class Linear {
 public:
  Linear(std::string name, int in_dim, int out_dim, std::mt19937_64& rng)
      : w_(name + ".w", in_dim, out_dim), b_(name + ".b", 1, out_dim) {
    he_uniform(w_.value, in_dim, rng);
  }

  Matrix forward(const Matrix& x) {
    require(x.cols() == w_.value.rows(), "Linear: input width mismatch");
    in_ = x;
    Matrix y = x * w_.value;
    y.rowwise() += b_.value.row(0);
    return y;
  }

  Matrix backward(const Matrix& dy) {
    w_.grad += in_.transpose() * dy;
    b_.grad.row(0) += dy.colwise().sum();
    return dy * w_.value.transpose();
  }

  void visit_params(const ParamVisitor& fn) {
    fn(w_);
    fn(b_);
  }

  Tensor& weight() { return w_; }
  Tensor& bias() { return b_; }

 private:
  Tensor w_, b_;
  Matrix in_;
};

}  // namespace lvmark::nn
