#pragma once

#include "lvmark/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace lvmark {

/// Raised on schema violations; the message lists every violation at once.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::vector<std::string>& violations)
      : std::runtime_error(join(violations)) {}

 private:
  static std::string join(const std::vector<std::string>& violations) {
    std::string msg = "invalid config:";
    for (const auto& v : violations) msg += "\n  - " + v;
    return msg;
  }
};

struct RunConfig {
  TrainConfig train;
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(const nlohmann::json& root) : root_(root) {}

  const nlohmann::json* section(const std::string& name,
                                const std::set<std::string>& allowed_keys) {
    seen_top_.insert(name);
    if (!root_.contains(name)) return nullptr;
    const auto& j = root_.at(name);
    if (!j.is_object()) {
      violations_.push_back("'" + name + "' must be an object");
      return nullptr;
    }
    for (const auto& [key, _] : j.items()) {
      if (!allowed_keys.contains(key)) {
        violations_.push_back("unknown key '" + name + "." + key + "'");
      }
    }
    return &j;
  }

  void finish_top_level() {
    if (!root_.is_object()) {
      violations_.push_back("top-level config must be a JSON object");
      return;
    }
    for (const auto& [key, _] : root_.items()) {
      if (!seen_top_.contains(key)) {
        violations_.push_back("unknown top-level key '" + key + "'");
      }
    }
  }

  template <typename T>
  void number(const nlohmann::json* sec, const std::string& sec_name,
              const std::string& key, T& out) {
    if (sec == nullptr || !sec->contains(key)) return;
    const auto& v = sec->at(key);
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) {
        violations_.push_back("'" + sec_name + "." + key + "' must be an integer");
        return;
      }
    } else {
      if (!v.is_number()) {
        violations_.push_back("'" + sec_name + "." + key + "' must be a number");
        return;
      }
    }
    out = v.get<T>();
  }

  void string(const nlohmann::json* sec, const std::string& sec_name,
              const std::string& key, std::string& out) {
    if (sec == nullptr || !sec->contains(key)) return;
    const auto& v = sec->at(key);
    if (!v.is_string()) {
      violations_.push_back("'" + sec_name + "." + key + "' must be a string");
      return;
    }
    out = v.get<std::string>();
  }

  void number_array(const nlohmann::json* sec, const std::string& sec_name,
                    const std::string& key, std::vector<double>& out) {
    if (sec == nullptr || !sec->contains(key)) return;
    const auto& v = sec->at(key);
    if (!v.is_array()) {
      violations_.push_back("'" + sec_name + "." + key + "' must be an array of numbers");
      return;
    }
    std::vector<double> values;
    for (const auto& item : v) {
      if (!item.is_number()) {
        violations_.push_back("'" + sec_name + "." + key + "' must contain only numbers");
        return;
      }
      values.push_back(item.get<double>());
    }
    out = std::move(values);
  }

  void add_violation(std::string v) { violations_.push_back(std::move(v)); }
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  const nlohmann::json& root_;
  std::set<std::string> seen_top_;
  std::vector<std::string> violations_;
};

}  // namespace detail

/// Parses and validates a run configuration. Unknown keys are rejected and
/// all violations are reported together.
inline RunConfig parse_run_config(const nlohmann::json& root) {
  detail::ConfigReader reader(root);

  const auto* data = reader.section("data", {"manifest", "out_dir"});
  const auto* model = reader.section(
      "model", {"image_size", "levels", "expand_channels", "gnn_layers", "gnn_width",
                "mlp_hidden", "softmax_temperature"});
  const auto* loss = reader.section("loss", {"pos_weight", "lambda_l2", "level_weights"});
  const auto* optim = reader.section("optim", {"lr", "beta1", "beta2", "weight_decay"});
  const auto* train = reader.section("train", {"epochs", "batch_size", "seed"});
  reader.finish_top_level();

  RunConfig cfg;
  std::string manifest, out_dir;
  reader.string(data, "data", "manifest", manifest);
  reader.string(data, "data", "out_dir", out_dir);
  cfg.manifest = manifest;
  cfg.out_dir = out_dir;

  int image_size = 224;
  int levels = 7;
  int expand_channels = 4;
  int gnn_width = 128;
  int gnn_layers = 3;
  int mlp_hidden = 128;
  double softmax_temperature = 1.0;
  reader.number(model, "model", "image_size", image_size);
  reader.number(model, "model", "levels", levels);
  reader.number(model, "model", "expand_channels", expand_channels);
  reader.number(model, "model", "gnn_width", gnn_width);
  reader.number(model, "model", "gnn_layers", gnn_layers);
  reader.number(model, "model", "mlp_hidden", mlp_hidden);
  reader.number(model, "model", "softmax_temperature", softmax_temperature);

  reader.number(loss, "loss", "pos_weight", cfg.train.loss.pos_weight);
  reader.number(loss, "loss", "lambda_l2", cfg.train.loss.lambda_l2);
  reader.number_array(loss, "loss", "level_weights", cfg.train.loss.level_weights);

  reader.number(optim, "optim", "lr", cfg.train.optim.lr);
  reader.number(optim, "optim", "beta1", cfg.train.optim.beta1);
  reader.number(optim, "optim", "beta2", cfg.train.optim.beta2);
  reader.number(optim, "optim", "weight_decay", cfg.train.optim.weight_decay);

  reader.number(train, "train", "epochs", cfg.train.epochs);
  reader.number(train, "train", "batch_size", cfg.train.batch_size);
  std::int64_t seed = static_cast<std::int64_t>(cfg.train.seed);
  reader.number(train, "train", "seed", seed);
  cfg.train.seed = static_cast<std::uint64_t>(seed);

  std::vector<std::string> violations = reader.violations();
  {
    if (image_size < 2 || levels < 1 || levels > 15 ||
        image_size < (1 << std::min(levels, 15))) {
      violations.push_back(
          "'model.levels' requires image_size >= 2^levels (got image_size=" +
          std::to_string(image_size) + ", levels=" + std::to_string(levels) + ")");
    }
    if (softmax_temperature <= 0.0) {
      violations.push_back("'model.softmax_temperature' must be > 0");
    }
    if (gnn_layers < 1) violations.push_back("'model.gnn_layers' must be >= 1");
    if (gnn_width < 1 || mlp_hidden < 1 || expand_channels < 1) {
      violations.push_back("'model' widths and channels must be >= 1");
    }
    if (cfg.train.loss.pos_weight <= 0.0) violations.push_back("'loss.pos_weight' must be > 0");
    if (cfg.train.loss.lambda_l2 < 0.0) violations.push_back("'loss.lambda_l2' must be >= 0");
    if (!cfg.train.loss.level_weights.empty() &&
        static_cast<int>(cfg.train.loss.level_weights.size()) != levels + 1) {
      violations.push_back("'loss.level_weights' must have levels+1 entries (aux 1..K, then main)");
    }
    if (cfg.train.optim.lr <= 0.0) violations.push_back("'optim.lr' must be > 0");
    if (cfg.train.epochs < 0) violations.push_back("'train.epochs' must be >= 0");
    if (cfg.train.batch_size < 1) violations.push_back("'train.batch_size' must be >= 1");
  }
  if (!violations.empty()) throw ConfigError(violations);

  cfg.train.model = ModelConfig::make(image_size, levels, gnn_width, expand_channels);
  cfg.train.model.gnn.layers = gnn_layers;
  cfg.train.model.gnn.mlp_hidden = mlp_hidden;
  cfg.train.model.gnn.softmax_temperature = softmax_temperature;
  cfg.train.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path.string());
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({std::string("JSON parse error: ") + e.what()});
  }
  return parse_run_config(root);
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  return {
      {"data", {{"manifest", cfg.manifest.string()}, {"out_dir", cfg.out_dir.string()}}},
      {"model",
       {{"image_size", cfg.train.model.image_h},
        {"levels", cfg.train.model.levels},
        {"expand_channels", cfg.train.model.features.expand_channels},
        {"gnn_layers", cfg.train.model.gnn.layers},
        {"gnn_width", cfg.train.model.gnn.width},
        {"mlp_hidden", cfg.train.model.gnn.mlp_hidden},
        {"softmax_temperature", cfg.train.model.gnn.softmax_temperature}}},
      {"loss",
       {{"pos_weight", cfg.train.loss.pos_weight},
        {"lambda_l2", cfg.train.loss.lambda_l2},
        {"level_weights", cfg.train.loss.level_weights}}},
      {"optim",
       {{"lr", cfg.train.optim.lr},
        {"beta1", cfg.train.optim.beta1},
        {"beta2", cfg.train.optim.beta2},
        {"weight_decay", cfg.train.optim.weight_decay}}},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"seed", cfg.train.seed}}}};
}

/// Rebuilds the RunConfig stored in a checkpoint's config echo.
inline RunConfig run_config_from_checkpoint(const CheckpointData& ckpt) {
  if (ckpt.config_json.empty()) {
    throw std::runtime_error("checkpoint carries no config echo");
  }
  return parse_run_config(nlohmann::json::parse(ckpt.config_json));
}

}  // namespace lvmark
