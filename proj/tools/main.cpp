// lvmark command-line interface: dataset synthesis, training, evaluation,
// prediction and heatmap export.

#include "lvmark/config.hpp"
#include "lvmark/data.hpp"
#include "lvmark/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool env_verbose() {
  const char* v = std::getenv("LVMARK_VERBOSE");
  return v != nullptr && std::string(v) != "0" && std::string(v) != "";
}

int cmd_make_synthetic(const std::string& out, int count, int size, std::uint64_t seed) {
  const fs::path out_dir(out);
  if (fs::exists(out_dir)) {
    throw std::runtime_error("output directory already exists: " + out_dir.string());
  }
  fs::path tmp_dir = out_dir;
  tmp_dir += ".tmp";
  fs::remove_all(tmp_dir);
  fs::create_directories(tmp_dir / "images");

  const int n_train = count * 8 / 10;
  const int n_val = count / 10;
  std::vector<lvmark::ManifestRecord> records;
  for (int i = 0; i < count; ++i) {
    lvmark::EchoSample s = lvmark::generate_phantom(seed + static_cast<std::uint64_t>(i), size);
    s.split = i < n_train            ? lvmark::Split::kTrain
              : i < n_train + n_val  ? lvmark::Split::kVal
                                     : lvmark::Split::kTest;
    const std::string rel = "images/" + s.id + ".pgm";
    lvmark::write_pgm(s.image, tmp_dir / rel);
    lvmark::ManifestRecord rec;
    rec.id = s.id;
    rec.image_path = rel;
    rec.points = s.landmarks.points;
    rec.spacing_mm = s.landmarks.spacing_mm;
    rec.split = s.split;
    records.push_back(std::move(rec));
  }
  lvmark::write_manifest(tmp_dir / "manifest.csv", records);
  fs::rename(tmp_dir, out_dir);
  std::cout << "wrote " << count << " phantoms (" << size << "x" << size << ") to "
            << out_dir.string() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& manifest_override,
              const std::string& out_dir_override, int epochs_override,
              std::int64_t seed_override, const std::string& resume) {
  lvmark::RunConfig cfg = lvmark::load_run_config(config_path);
  if (!manifest_override.empty()) cfg.manifest = manifest_override;
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  if (epochs_override >= 0) cfg.train.epochs = epochs_override;
  if (seed_override >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_override);

  if (cfg.manifest.empty()) {
    throw std::runtime_error(
        "no manifest given: set data.manifest in the config or pass --manifest");
  }
  if (cfg.out_dir.empty()) {
    throw std::runtime_error(
        "no output directory given: set data.out_dir in the config or pass --out-dir");
  }
  fs::create_directories(cfg.out_dir);

  const auto samples = lvmark::load_manifest(cfg.manifest);
  auto to_model_size = [&](std::vector<lvmark::EchoSample> set) {
    for (auto& s : set) {
      if (s.image.h != cfg.train.model.image_h || s.image.w != cfg.train.model.image_w) {
        s = lvmark::resize_sample(s, cfg.train.model.image_h, cfg.train.model.image_w);
      }
    }
    return set;
  };
  const auto train_set = to_model_size(lvmark::filter_split(samples, lvmark::Split::kTrain));
  const auto val_set = to_model_size(lvmark::filter_split(samples, lvmark::Split::kVal));
  if (train_set.empty()) {
    throw std::runtime_error("manifest has no samples in the 'train' split");
  }

  lvmark::TrainIO io;
  io.checkpoint_path = cfg.out_dir / "checkpoint.bin";
  io.log_path = cfg.out_dir / "train_log.jsonl";
  io.resume_path = resume;
  io.config_echo = lvmark::run_config_to_json(cfg).dump();
  io.verbose = env_verbose();

  lvmark::TrainResult result;
  lvmark::LandmarkModel model = lvmark::train(cfg.train, train_set, val_set, io, &result);

  std::cout << "trained " << result.steps << " steps; checkpoint: "
            << io.checkpoint_path.string() << "\n";
  if (!val_set.empty()) {
    const lvmark::MetricsReport metrics = lvmark::evaluate(model, val_set);
    std::cout << "validation metrics (best epoch " << result.best_epoch << "):\n"
              << json(metrics).dump(2) << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest,
             const std::string& split_name, const std::string& out_json, bool oracle_gt) {
  auto samples = lvmark::filter_split(lvmark::load_manifest(manifest),
                                      lvmark::split_from_string(split_name));
  if (samples.empty()) {
    throw std::runtime_error("split '" + split_name + "' is empty in " + manifest);
  }

  lvmark::MetricsReport metrics;
  if (oracle_gt) {
    metrics = lvmark::evaluate_with(lvmark::gt_as_prediction, samples);
  } else {
    if (checkpoint.empty()) {
      throw std::runtime_error("--checkpoint is required unless --oracle-gt is given");
    }
    const lvmark::CheckpointData ckpt = lvmark::load_checkpoint(checkpoint);
    const lvmark::RunConfig cfg = lvmark::run_config_from_checkpoint(ckpt);
    lvmark::LandmarkModel model = lvmark::model_from_checkpoint(ckpt, cfg.train.model);
    for (auto& s : samples) {
      if (s.image.h != cfg.train.model.image_h || s.image.w != cfg.train.model.image_w) {
        s = lvmark::resize_sample(s, cfg.train.model.image_h, cfg.train.model.image_w);
      }
    }
    metrics = lvmark::evaluate(model, samples);
  }

  const json doc = metrics;
  const std::string text = doc.dump(2) + "\n";
  std::cout << text;
  if (!out_json.empty()) {
    lvmark::atomic_write(out_json, [&](std::ostream& os) { os << text; });
    std::cerr << "metrics written to " << out_json << "\n";
  }
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& image_path,
                double spacing_mm, const std::string& export_dir, bool allow_resize) {
  const lvmark::CheckpointData ckpt = lvmark::load_checkpoint(checkpoint);
  const lvmark::RunConfig cfg = lvmark::run_config_from_checkpoint(ckpt);
  lvmark::LandmarkModel model = lvmark::model_from_checkpoint(ckpt, cfg.train.model);

  const lvmark::Image original = lvmark::read_pgm(image_path);
  lvmark::Image input = original;
  if (original.h != cfg.train.model.image_h || original.w != cfg.train.model.image_w) {
    if (!allow_resize) {
      throw std::runtime_error(
          "image is " + std::to_string(original.h) + "x" + std::to_string(original.w) +
          " but the checkpoint expects " + std::to_string(cfg.train.model.image_h) + "x" +
          std::to_string(cfg.train.model.image_w) + "; pass --resize to resample");
    }
    input = lvmark::resize_bilinear(original, cfg.train.model.image_h, cfg.train.model.image_w);
  }

  const lvmark::CoordinatePrediction coords = model.predict(input);
  // report in the original frame
  const double sx = static_cast<double>(original.w) / cfg.train.model.image_w;
  const double sy = static_cast<double>(original.h) / cfg.train.model.image_h;
  lvmark::LandmarkSet pred;
  pred.frame_h = original.h;
  pred.frame_w = original.w;
  pred.spacing_mm = spacing_mm > 0.0 ? spacing_mm : 1.0;
  for (int p = 0; p < 4; ++p) {
    const double x = coords.points[p].first * sx;
    const double y = coords.points[p].second * sy;
    pred.points[p] = {y, x};
    std::printf("landmark %d: x=%.3f y=%.3f\n", p + 1, x, y);
  }
  if (spacing_mm > 0.0) {
    const lvmark::MeasurementTriple m = lvmark::measurements_from_landmarks(pred);
    std::printf("ivs_mm=%.3f lvid_mm=%.3f lvpw_mm=%.3f\n", m.ivs_mm, m.lvid_mm, m.lvpw_mm);
  }

  if (!export_dir.empty()) {
    lvmark::EchoSample sample;
    sample.id = fs::path(image_path).stem().string();
    sample.image = input;
    const lvmark::HeatmapExport exported =
        lvmark::export_heatmaps(model, sample, export_dir);
    std::cerr << "heatmaps written to " << exported.container.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical graph-network landmark detection for LV measurements"};
  app.require_subcommand(1);

  auto* mk = app.add_subcommand("make-synthetic", "Generate a phantom dataset directory");
  std::string mk_out;
  int mk_count = 0;
  int mk_size = 64;
  std::uint64_t mk_seed = 1;
  mk->add_option("--out", mk_out, "Output directory (must not exist)")->required();
  mk->add_option("--count", mk_count, "Number of phantoms")->required()->check(CLI::PositiveNumber);
  mk->add_option("--size", mk_size, "Frame size in pixels (square)");
  mk->add_option("--seed", mk_seed, "Base seed");

  auto* tr = app.add_subcommand("train", "Train a model from a JSON config");
  std::string tr_config, tr_manifest, tr_out, tr_resume;
  int tr_epochs = -1;
  std::int64_t tr_seed = -1;
  tr->add_option("--config", tr_config, "JSON run configuration")->required();
  tr->add_option("--manifest", tr_manifest, "Override data.manifest");
  tr->add_option("--out-dir", tr_out, "Override data.out_dir");
  tr->add_option("--epochs", tr_epochs, "Override train.epochs");
  tr->add_option("--seed", tr_seed, "Override train.seed");
  tr->add_option("--resume", tr_resume, "Resume from a checkpoint file");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  std::string ev_ckpt, ev_manifest, ev_split = "test", ev_out;
  bool ev_oracle = false;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file");
  ev->add_option("--manifest", ev_manifest, "Manifest CSV")->required();
  ev->add_option("--split", ev_split, "Split to evaluate (train|val|test)");
  ev->add_option("--out", ev_out, "Write metrics JSON to this path");
  ev->add_flag("--oracle-gt", ev_oracle, "Use ground truth as predictions (pipeline self-check)");

  auto* pr = app.add_subcommand("predict", "Predict landmarks for one image");
  std::string pr_ckpt, pr_image, pr_export;
  double pr_spacing = 0.0;
  bool pr_resize = false;
  pr->add_option("--checkpoint", pr_ckpt, "Checkpoint file")->required();
  pr->add_option("--image", pr_image, "Grayscale PGM image")->required();
  pr->add_option("--spacing-mm", pr_spacing, "Pixel spacing of the input image (mm/px)");
  pr->add_option("--export-heatmaps", pr_export, "Directory for heatmap container + overlays");
  pr->add_flag("--resize", pr_resize, "Resample the image to the checkpoint's size if needed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mk->parsed()) return cmd_make_synthetic(mk_out, mk_count, mk_size, mk_seed);
    if (tr->parsed()) return cmd_train(tr_config, tr_manifest, tr_out, tr_epochs, tr_seed, tr_resume);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_manifest, ev_split, ev_out, ev_oracle);
    if (pr->parsed()) return cmd_predict(pr_ckpt, pr_image, pr_spacing, pr_export, pr_resize);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
