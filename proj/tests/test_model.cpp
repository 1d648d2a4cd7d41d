#include "lvmark/model.hpp"

#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace lvmark;
using testutil::central_diff;
using testutil::rel_err;

namespace {

Image random_image(int hw, std::mt19937_64& rng) {
  Image img(hw, hw);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (auto& v : img.px) v = uni(rng);
  return img;
}

ModelConfig tiny_config() {
  ModelConfig cfg = ModelConfig::make(16, 2, 8, 4);
  cfg.gnn.layers = 2;
  cfg.gnn.mlp_hidden = 8;
  cfg.gnn.softmax_temperature = 0.5;
  return cfg;
}

}  // namespace

TEST_CASE("zeroed head decodes every landmark at the frame center") {
  LandmarkModel model(tiny_config(), 7);
  model.visit_params([](nn::Tensor& t) {
    if (t.name.rfind("head.", 0) == 0) t.value.setZero();
  });
  std::mt19937_64 rng(1);
  const Image img = random_image(16, rng);
  const auto f = model.forward(img);
  CHECK((f.heatmaps.main().array() == 0.5).all());
  for (const auto& [x, y] : f.coords.points) {
    CHECK(x == Catch::Approx(7.5).margin(1e-9));
    CHECK(y == Catch::Approx(7.5).margin(1e-9));
  }
}

TEST_CASE("heatmaps are bounded and coordinates stay inside the frame") {
  LandmarkModel model(tiny_config(), 99);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto f = model.forward(random_image(16, rng));
    for (const auto& level : f.heatmaps.per_level) {
      CHECK(level.minCoeff() > 0.0);
      CHECK(level.maxCoeff() < 1.0);
    }
    for (const auto& [x, y] : f.coords.points) {
      CHECK(x >= 0.0);
      CHECK(x <= 15.0);
      CHECK(y >= 0.0);
      CHECK(y <= 15.0);
    }
  }
}

TEST_CASE("per-level heatmap row counts match the graph") {
  LandmarkModel model(tiny_config(), 3);
  std::mt19937_64 rng(3);
  const auto f = model.forward(random_image(16, rng));
  REQUIRE(f.heatmaps.per_level.size() == 3);
  CHECK(f.heatmaps.per_level[0].rows() == 4);
  CHECK(f.heatmaps.per_level[1].rows() == 16);
  CHECK(f.heatmaps.per_level[2].rows() == 256);
  for (const auto& level : f.heatmaps.per_level) CHECK(level.cols() == 4);
}

TEST_CASE("every parameter receives gradient from the total loss") {
  LandmarkModel model(tiny_config(), 11);
  std::mt19937_64 rng(4);
  const Image img = random_image(16, rng);
  const auto lm = testutil::random_landmarks(16, 16, rng);
  const auto labels = hierarchical_labels(lm, 2);

  model.zero_grad();
  const LossReport report = model.learn(img, labels, lm, LossConfig{});
  CHECK(std::isfinite(report.total));
  model.visit_params([](nn::Tensor& t) {
    INFO(t.name);
    CHECK(t.grad.cwiseAbs().maxCoeff() > 0.0);
  });
}

TEST_CASE("end-to-end gradients match finite differences") {
  LandmarkModel model(tiny_config(), 13);
  std::mt19937_64 rng(5);
  const Image img = random_image(16, rng);
  const auto lm = testutil::random_landmarks(16, 16, rng);
  const auto labels = hierarchical_labels(lm, 2);
  LossConfig loss_cfg;
  loss_cfg.pos_weight = 50.0;  // keep FD well-conditioned

  const auto eval = [&] {
    auto f = model.forward(img);
    return total_loss(f.heatmaps, labels, f.coords, lm, loss_cfg).total;
  };

  model.zero_grad();
  model.learn(img, labels, lm, loss_cfg);

  // at least five parameters spread over every component
  const std::vector<std::string> probes = {
      "backbone.expand.w", "backbone.enc1.conv1.w", "backbone.dec2.conv2.w",
      "backbone.proj_main.w", "gcn.layer1.w", "gcn.layer2.w", "head.fc1.w",
      "head.fc2.b"};
  int checked = 0;
  model.visit_params([&](nn::Tensor& t) {
    for (const auto& name : probes) {
      if (t.name != name) continue;
      const Eigen::Index r = t.value.rows() / 2, c = t.value.cols() / 2;
      const double fd = central_diff(t.value(r, c), eval, 1e-6);
      INFO(t.name);
      CHECK(rel_err(t.grad(r, c), fd, 1e-7) < 1e-4);
      ++checked;
    }
  });
  CHECK(checked == static_cast<int>(probes.size()));
}

TEST_CASE("forward is deterministic for identical models") {
  LandmarkModel a(tiny_config(), 21);
  LandmarkModel b(tiny_config(), 21);
  std::mt19937_64 rng(6);
  const Image img = random_image(16, rng);
  const auto fa = a.forward(img);
  const auto fb = b.forward(img);
  CHECK(fa.probs == fb.probs);
  for (int p = 0; p < 4; ++p) {
    CHECK(fa.coords.points[p] == fb.coords.points[p]);
  }
}

TEST_CASE("model config validation") {
  ModelConfig bad = ModelConfig::make(16, 2, 8);
  bad.image_h = 2;
  CHECK_THROWS_AS(LandmarkModel(bad, 1), std::invalid_argument);

  ModelConfig mismatch = ModelConfig::make(16, 2, 8);
  mismatch.gnn.width = 16;
  CHECK_THROWS_AS(LandmarkModel(mismatch, 1), std::invalid_argument);
}
