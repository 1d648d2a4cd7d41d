#pragma once

#include "lvmark/data.hpp"
#include "lvmark/model.hpp"
#include "lvmark/serialize.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace lvmark {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0001;
  double epsilon = 1e-8;

  void validate() const {
    require(lr > 0.0, "AdamConfig: lr must be > 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            "AdamConfig: betas must be in [0, 1)");
    require(weight_decay >= 0.0, "AdamConfig: weight_decay must be >= 0");
  }
};

/// Adam with L2 weight decay folded into the gradient. Moment buffers are
/// keyed by the model's stable parameter visit order.
class Adam {
 public:
  explicit Adam(const AdamConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

  void step(LandmarkModel& model) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::size_t i = 0;
    model.visit_params([&](nn::Tensor& p) {
      if (i == m_.size()) {
        names_.push_back(p.name);
        m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      }
      require(names_[i] == p.name, "Adam: parameter order changed");
      const Matrix g = p.grad + cfg_.weight_decay * p.value;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      p.value.array() -=
          cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.epsilon);
      ++i;
    });
  }

  std::int64_t t() const { return t_; }

  NamedMatrices first_moments() const { return zip(names_, m_); }
  NamedMatrices second_moments() const { return zip(names_, v_); }

  void restore(std::int64_t t, const NamedMatrices& m, const NamedMatrices& v) {
    t_ = t;
    names_.clear();
    m_.clear();
    v_.clear();
    require(m.size() == v.size(), "Adam: inconsistent moment state");
    for (std::size_t i = 0; i < m.size(); ++i) {
      require(m[i].first == v[i].first, "Adam: inconsistent moment state");
      names_.push_back(m[i].first);
      m_.push_back(m[i].second);
      v_.push_back(v[i].second);
    }
  }

 private:
  static NamedMatrices zip(const std::vector<std::string>& names,
                           const std::vector<Matrix>& mats) {
    NamedMatrices out;
    out.reserve(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) out.emplace_back(names[i], mats[i]);
    return out;
  }

  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::string> names_;
  std::vector<Matrix> m_, v_;
};

inline constexpr double kSdrThresholdStrictMm = 2.0;
inline constexpr double kSdrThresholdLooseMm = 6.0;

struct MeasureStats {
  double mae_mm = 0.0;
  double mpe_percent = 0.0;
  int mpe_excluded = 0;  // samples with zero ground-truth length
};

struct MetricsReport {
  MeasureStats ivs, lvid, lvpw;
  double sdr2 = 0.0;  // fraction of samples with |LVID error| < 2 mm
  double sdr6 = 0.0;
  int sample_count = 0;

  double mean_mpe() const {
    return (ivs.mpe_percent + lvid.mpe_percent + lvpw.mpe_percent) / 3.0;
  }
};

inline void to_json(nlohmann::json& j, const MeasureStats& s) {
  j = {{"mae_mm", s.mae_mm}, {"mpe_percent", s.mpe_percent}, {"mpe_excluded", s.mpe_excluded}};
}

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = {{"ivs", r.ivs},
       {"lvid", r.lvid},
       {"lvpw", r.lvpw},
       {"sdr_2mm", r.sdr2},
       {"sdr_6mm", r.sdr6},
       {"sample_count", r.sample_count},
       {"mean_mpe_percent", r.mean_mpe()}};
}

using PredictFn = std::function<CoordinatePrediction(const EchoSample&)>;

inline CoordinatePrediction gt_as_prediction(const EchoSample& s) {
  CoordinatePrediction c;
  for (int p = 0; p < 4; ++p) {
    c.points[p] = {s.landmarks.points[p].w, s.landmarks.points[p].h};
  }
  return c;
}

/// MAE / MPE / SDR over a split. Per-sample values are sorted before
/// aggregation so the result does not depend on sample order.
inline MetricsReport evaluate_with(const PredictFn& predict,
                                   const std::vector<EchoSample>& samples) {
  require(!samples.empty(), "evaluate: empty split");

  std::array<std::vector<double>, 3> abs_err;  // ivs, lvid, lvpw (mm)
  std::array<std::vector<double>, 3> pct_err;
  std::array<int, 3> excluded = {0, 0, 0};
  int sdr2 = 0, sdr6 = 0;

  for (const auto& s : samples) {
    const CoordinatePrediction coords = predict(s);
    LandmarkSet pred = s.landmarks;
    for (int p = 0; p < 4; ++p) {
      pred.points[p] = {coords.points[p].second, coords.points[p].first};
    }
    const MeasurementTriple mp = measurements_from_landmarks(pred);
    const MeasurementTriple mt = measurements_from_landmarks(s.landmarks);
    const std::array<std::pair<double, double>, 3> pairs = {
        std::pair{mp.ivs_mm, mt.ivs_mm},
        std::pair{mp.lvid_mm, mt.lvid_mm},
        std::pair{mp.lvpw_mm, mt.lvpw_mm}};
    for (int i = 0; i < 3; ++i) {
      const double err = std::abs(pairs[i].first - pairs[i].second);
      abs_err[i].push_back(err);
      if (pairs[i].second > 0.0) {
        pct_err[i].push_back(100.0 * err / pairs[i].second);
      } else {
        ++excluded[i];
      }
    }
    const double lvid_err = std::abs(mp.lvid_mm - mt.lvid_mm);
    if (lvid_err < kSdrThresholdStrictMm) ++sdr2;
    if (lvid_err < kSdrThresholdLooseMm) ++sdr6;
  }

  auto sorted_mean = [](std::vector<double>& v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };

  MetricsReport r;
  r.sample_count = static_cast<int>(samples.size());
  MeasureStats* stats[3] = {&r.ivs, &r.lvid, &r.lvpw};
  for (int i = 0; i < 3; ++i) {
    stats[i]->mae_mm = sorted_mean(abs_err[i]);
    stats[i]->mpe_percent = sorted_mean(pct_err[i]);
    stats[i]->mpe_excluded = excluded[i];
  }
  r.sdr2 = static_cast<double>(sdr2) / r.sample_count;
  r.sdr6 = static_cast<double>(sdr6) / r.sample_count;
  return r;
}

inline MetricsReport evaluate(LandmarkModel& model, const std::vector<EchoSample>& samples) {
  return evaluate_with([&](const EchoSample& s) { return model.predict(s.image); },
                       samples);
}

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  AdamConfig optim;
  int epochs = 50;
  int batch_size = 4;
  std::uint64_t seed = 1;

  void validate() const {
    model.validate();
    loss.validate(model.levels + 1);
    optim.validate();
    require(epochs >= 0, "TrainConfig: epochs must be >= 0");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  }
};

struct TrainIO {
  std::filesystem::path checkpoint_path;  // empty: skip writing
  std::filesystem::path log_path;         // empty: skip writing
  std::filesystem::path resume_path;      // empty: fresh start
  std::string config_echo;                // stored verbatim in the checkpoint
  bool verbose = false;
};

struct EpochRecord {
  int epoch = 0;
  std::int64_t step = 0;
  LossReport train_loss;
  bool has_val = false;
  MetricsReport val;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::int64_t steps = 0;
  int best_epoch = 0;  // 0 when no validation-based selection happened
};

namespace detail {

inline std::vector<Matrix> snapshot_params(LandmarkModel& model) {
  std::vector<Matrix> out;
  model.visit_params([&](nn::Tensor& t) { out.push_back(t.value); });
  return out;
}

inline void restore_params(LandmarkModel& model, const std::vector<Matrix>& snapshot) {
  std::size_t i = 0;
  model.visit_params([&](nn::Tensor& t) { t.value = snapshot[i++]; });
}

inline void apply_tensors(LandmarkModel& model, const NamedMatrices& tensors) {
  std::size_t i = 0;
  model.visit_params([&](nn::Tensor& t) {
    require(i < tensors.size(), "checkpoint: missing tensor '" + t.name + "'");
    const auto& [name, value] = tensors[i];
    require(name == t.name, "checkpoint: tensor name mismatch, have '" + name +
                                "', want '" + t.name + "'");
    require(value.rows() == t.value.rows() && value.cols() == t.value.cols(),
            "checkpoint: shape mismatch for tensor '" + name + "'");
    t.value = value;
    ++i;
  });
  require(i == tensors.size(), "checkpoint: extra tensors present");
}

inline NamedMatrices collect_tensors(LandmarkModel& model) {
  NamedMatrices out;
  model.visit_params([&](nn::Tensor& t) { out.emplace_back(t.name, t.value); });
  return out;
}

}  // namespace detail

inline void save_model_checkpoint(const std::filesystem::path& path, LandmarkModel& model,
                                  const Adam* opt, std::int64_t step, std::uint64_t seed,
                                  const std::string& config_echo) {
  CheckpointData ckpt;
  ckpt.config_json = config_echo;
  ckpt.seed = seed;
  ckpt.step = step;
  ckpt.tensors = detail::collect_tensors(model);
  if (opt != nullptr) {
    ckpt.has_optimizer = true;
    ckpt.adam_t = opt->t();
    ckpt.adam_m = opt->first_moments();
    ckpt.adam_v = opt->second_moments();
  }
  save_checkpoint(path, ckpt);
}

/// Adam over the multi-level loss. Deterministic given the seed (up to
/// platform floating-point behavior). Returns the trained model with the
/// best-validation parameters restored when a validation split is present.
inline LandmarkModel train(const TrainConfig& cfg, const std::vector<EchoSample>& train_set,
                           const std::vector<EchoSample>& val_set, const TrainIO& io = {},
                           TrainResult* result = nullptr) {
  cfg.validate();
  require(!train_set.empty(), "train: empty training split");
  for (const auto& s : train_set) {
    require(s.image.h == cfg.model.image_h && s.image.w == cfg.model.image_w,
            "train: sample '" + s.id + "' does not match the configured image size");
  }

  LandmarkModel model(cfg.model, cfg.seed);
  Adam opt(cfg.optim);
  std::int64_t step = 0;

  if (!io.resume_path.empty()) {
    const CheckpointData ckpt = load_checkpoint(io.resume_path);
    detail::apply_tensors(model, ckpt.tensors);
    if (ckpt.has_optimizer) opt.restore(ckpt.adam_t, ckpt.adam_m, ckpt.adam_v);
    step = ckpt.step;
  }

  std::vector<std::vector<LevelLabels>> labels;
  labels.reserve(train_set.size());
  for (const auto& s : train_set) {
    labels.push_back(hierarchical_labels(s.landmarks, cfg.model.levels));
  }

  std::ofstream log;
  if (!io.log_path.empty()) {
    log.open(io.log_path, std::ios::app);
    if (!log) throw std::runtime_error("cannot open training log: " + io.log_path.string());
    nlohmann::json header = {{"event", "start"},
                             {"seed", cfg.seed},
                             {"resumed_from_step", step},
                             {"epochs", cfg.epochs},
                             {"batch_size", cfg.batch_size},
                             {"train_samples", train_set.size()},
                             {"val_samples", val_set.size()},
                             {"note", "deterministic per seed up to platform floating-point behavior"}};
    if (!io.config_echo.empty()) header["config"] = nlohmann::json::parse(io.config_echo);
    log << header.dump() << '\n';
  }

  std::mt19937_64 order_rng(cfg.seed + 1);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult local_result;
  TrainResult& res = result != nullptr ? *result : local_result;
  double best_mpe = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_params;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);

    LossReport epoch_loss;
    epoch_loss.bce_per_level.assign(cfg.model.levels + 1, 0.0);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double batch_n = static_cast<double>(end - start);
      model.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = train_set[order[i]];
        const LossReport r =
            model.learn(s.image, labels[order[i]], s.landmarks, cfg.loss, 1.0 / batch_n);
        if (!std::isfinite(r.total)) {
          throw std::runtime_error("train: non-finite loss at step " +
                                   std::to_string(step) + " on sample '" + s.id + "'");
        }
        epoch_loss.total += r.total;
        epoch_loss.l2 += r.l2;
        for (std::size_t li = 0; li < r.bce_per_level.size(); ++li) {
          epoch_loss.bce_per_level[li] += r.bce_per_level[li];
        }
      }
      opt.step(model);
      ++step;
    }
    const double inv_n = 1.0 / static_cast<double>(order.size());
    epoch_loss.total *= inv_n;
    epoch_loss.l2 *= inv_n;
    for (auto& v : epoch_loss.bce_per_level) v *= inv_n;

    EpochRecord record;
    record.epoch = epoch;
    record.step = step;
    record.train_loss = epoch_loss;
    if (!val_set.empty()) {
      record.has_val = true;
      record.val = evaluate(model, val_set);
      if (record.val.mean_mpe() < best_mpe) {
        best_mpe = record.val.mean_mpe();
        best_params = detail::snapshot_params(model);
        res.best_epoch = epoch;
      }
    }
    res.history.push_back(record);

    if (log.is_open()) {
      nlohmann::json j = {{"event", "epoch"},
                          {"epoch", epoch},
                          {"step", step},
                          {"loss_total", epoch_loss.total},
                          {"loss_l2", epoch_loss.l2},
                          {"loss_bce_per_level", epoch_loss.bce_per_level}};
      if (record.has_val) j["val"] = record.val;
      log << j.dump() << '\n';
      log.flush();
    }
    if (io.verbose) {
      std::fprintf(stderr, "epoch %d/%d  loss %.6f  l2 %.4f%s\n", epoch, cfg.epochs,
                   epoch_loss.total, epoch_loss.l2,
                   record.has_val
                       ? ("  val mean MPE " + std::to_string(record.val.mean_mpe()) + "%").c_str()
                       : "");
    }
  }

  if (!best_params.empty()) detail::restore_params(model, best_params);
  res.steps = step;

  if (!io.checkpoint_path.empty()) {
    save_model_checkpoint(io.checkpoint_path, model, &opt, step, cfg.seed, io.config_echo);
  }
  return model;
}

/// Loads checkpoint tensors into a freshly constructed model.
inline LandmarkModel model_from_checkpoint(const CheckpointData& ckpt,
                                           const ModelConfig& model_cfg) {
  LandmarkModel model(model_cfg, ckpt.seed);
  detail::apply_tensors(model, ckpt.tensors);
  return model;
}

struct HeatmapExport {
  std::filesystem::path container;
  std::vector<std::filesystem::path> overlays;
};

namespace detail {

inline RgbImage render_overlay(const Image& frame, const Matrix& values, int grid_rows,
                               int grid_cols) {
  static constexpr std::array<std::array<int, 3>, 4> kChannelColors = {
      {{255, 64, 64}, {64, 255, 255}, {255, 64, 255}, {64, 255, 64}}};
  RgbImage out(frame.h, frame.w);
  for (int r = 0; r < frame.h; ++r) {
    for (int c = 0; c < frame.w; ++c) {
      const int gr = static_cast<int>(static_cast<std::int64_t>(r) * grid_rows / frame.h);
      const int gc = static_cast<int>(static_cast<std::int64_t>(c) * grid_cols / frame.w);
      const int node = gr * grid_cols + gc;
      double rgb[3];
      const double gray = 255.0 * std::clamp(frame.at(r, c), 0.0, 1.0);
      rgb[0] = rgb[1] = rgb[2] = gray;
      for (int ch = 0; ch < 4; ++ch) {
        const double a = 0.55 * std::clamp(values(node, ch), 0.0, 1.0);
        for (int i = 0; i < 3; ++i) {
          rgb[i] = (1.0 - a) * rgb[i] + a * kChannelColors[ch][i];
        }
      }
      auto* px = out.at(r, c);
      for (int i = 0; i < 3; ++i) {
        px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(rgb[i], 0.0, 255.0)));
      }
    }
  }
  return out;
}

}  // namespace detail

/// Writes the per-level heatmap container plus one color-coded overlay image
/// per level for a single sample.
inline HeatmapExport export_heatmaps(LandmarkModel& model, const EchoSample& sample,
                                     const std::filesystem::path& out_dir) {
  require(sample.image.h == model.config().image_h &&
              sample.image.w == model.config().image_w,
          "export_heatmaps: sample size does not match the model");
  std::filesystem::create_directories(out_dir);
  const Heatmaps maps = model.forward(sample.image).heatmaps;
  const int levels = model.config().levels;

  NamedMatrices arrays;
  for (int k = 1; k <= levels; ++k) {
    arrays.emplace_back("level_" + std::to_string(k), maps.per_level[k - 1]);
  }
  arrays.emplace_back("main", maps.per_level[levels]);

  HeatmapExport result;
  result.container = out_dir / (sample.id + "_heatmaps.bin");
  save_heatmap_container(result.container, arrays);

  for (int li = 0; li <= levels; ++li) {
    const bool is_main = li == levels;
    const int rows = is_main ? sample.image.h : (1 << (li + 1));
    const int cols = is_main ? sample.image.w : (1 << (li + 1));
    const RgbImage overlay =
        detail::render_overlay(sample.image, maps.per_level[li], rows, cols);
    const std::string name = is_main ? "main" : "level_" + std::to_string(li + 1);
    auto path = out_dir / (sample.id + "_overlay_" + name + ".ppm");
    auto tmp = path;
    tmp += ".tmp";
    write_ppm(overlay, tmp);
    std::filesystem::rename(tmp, path);
    result.overlays.push_back(std::move(path));
  }
  return result;
}

}  // namespace lvmark
