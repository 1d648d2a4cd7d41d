#include "lvmark/loss.hpp"

#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace lvmark;
using testutil::central_diff;
using testutil::make_landmarks;
using testutil::rel_err;

namespace {

Matrix single(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

}  // namespace

TEST_CASE("weighted bce single-element values") {
  CHECK(std::abs(weighted_bce(single(0.5), single(1.0), 9000.0) -
                 9000.0 * std::log(2.0)) < 1e-6);
  CHECK(std::abs(weighted_bce(single(0.5), single(0.0), 9000.0) - std::log(2.0)) < 1e-6);
  CHECK(weighted_bce(single(1e-12), single(0.0), 9000.0) < 1e-6);  // perfect negative
  CHECK(weighted_bce(single(1.0 - 1e-12), single(1.0), 9000.0) < 1e-2);
}

TEST_CASE("weighted bce is nonnegative and monotone for positives") {
  CHECK(weighted_bce(single(0.999), single(1.0), 9000.0) >= 0.0);
  double prev = weighted_bce(single(0.9), single(1.0), 9000.0);
  for (const double p : {0.7, 0.5, 0.3, 0.1}) {
    const double cur = weighted_bce(single(p), single(1.0), 9000.0);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("positive/negative gradient magnitude ratio equals pos_weight") {
  const double p = 0.37;
  const Matrix gp = weighted_bce_grad(single(p), single(1.0), 9000.0);
  const Matrix gn = weighted_bce_grad(single(1.0 - p), single(0.0), 9000.0);
  CHECK(rel_err(std::abs(gp(0, 0)) / std::abs(gn(0, 0)), 9000.0) < 1e-6);
}

TEST_CASE("bce gradients match finite differences") {
  std::mt19937_64 rng(3);
  Matrix probs = testutil::random_matrix(3, 4, rng, 0.05, 0.95);
  Matrix labels = Matrix::Zero(3, 4);
  labels(0, 1) = 1.0;
  labels(2, 3) = 1.0;
  const double w = 50.0;

  const Matrix grad = weighted_bce_grad(probs, labels, w);
  for (const auto [r, c] : {std::pair{0, 1}, {1, 2}, {2, 3}}) {
    const double fd =
        central_diff(probs(r, c), [&] { return weighted_bce(probs, labels, w); });
    CHECK(rel_err(grad(r, c), fd) < 1e-5);
  }

  // logits-space gradient: p = sigmoid(z)
  Matrix z = testutil::random_matrix(3, 4, rng, -2.0, 2.0);
  const auto sigmoid = [](const Matrix& m) {
    return Matrix((1.0 / (1.0 + (-m.array()).exp())).matrix());
  };
  const Matrix glog = weighted_bce_grad_logits(sigmoid(z), labels, w);
  for (const auto [r, c] : {std::pair{0, 1}, {1, 0}, {2, 3}}) {
    const double fd = central_diff(
        z(r, c), [&] { return weighted_bce(sigmoid(z), labels, w); });
    CHECK(rel_err(glog(r, c), fd) < 1e-5);
  }
}

TEST_CASE("weighted bce rejects shape mismatch") {
  CHECK_THROWS_AS(weighted_bce(Matrix::Zero(2, 4), Matrix::Zero(3, 4), 1.0),
                  std::invalid_argument);
}

TEST_CASE("coordinate l2") {
  const auto gt = make_landmarks({{{10, 10}, {20, 20}, {30, 30}, {40, 40}}}, 64, 64);
  CoordinatePrediction exact;
  for (int p = 0; p < 4; ++p) exact.points[p] = {gt.points[p].w, gt.points[p].h};
  CHECK(coord_l2(exact, gt) == 0.0);

  CoordinatePrediction off = exact;
  off.points[2] = {gt.points[2].w + 4.0, gt.points[2].h + 3.0};
  CHECK(coord_l2(off, gt) == Catch::Approx(25.0 / 4.0));

  CoordinatePrediction shifted = exact;
  for (auto& [x, y] : shifted.points) x += 1.0;
  CHECK(coord_l2(shifted, gt) == Catch::Approx(1.0));
}

TEST_CASE("total loss on the hand-computed 2x2 fixture") {
  // K = 1 over a 2x2 frame: 4 aux nodes + 4 main nodes. Landmarks sit on the
  // four pixels in row-major order, so labels are diagonal at both levels.
  const auto lm = make_landmarks({{{0, 0}, {0, 1}, {1, 0}, {1, 1}}}, 2, 2);
  std::vector<LevelLabels> labels = hierarchical_labels(lm, 1);
  REQUIRE(labels[0].values == Matrix::Identity(4, 4));
  REQUIRE(labels[1].values == Matrix::Identity(4, 4));

  Heatmaps maps;
  maps.per_level.resize(2);
  maps.per_level[0] = Matrix::Constant(4, 4, 0.2);
  maps.per_level[0].diagonal().setConstant(0.8);
  maps.per_level[1] = Matrix::Constant(4, 4, 0.1);
  maps.per_level[1].diagonal().setConstant(0.9);

  // decode per channel with tau = 1 over main locations (0,0),(1,0),(0,1),(1,1)
  const std::vector<std::pair<double, double>> locs = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  CoordinatePrediction pred;
  std::array<SoftArgmaxResult, 4> dec;
  for (int p = 0; p < 4; ++p) {
    std::vector<double> column(4);
    for (int i = 0; i < 4; ++i) column[i] = maps.per_level[1](i, p);
    dec[p] = soft_argmax(column, locs, 1.0);
    pred.points[p] = {dec[p].x, dec[p].y};
  }

  LossConfig cfg;  // defaults: pos_weight 9000, lambda 1, uniform level weights
  const LossReport report = total_loss(maps, labels, pred, lm, cfg);

  // independent hand computation of every term
  const double bce_aux =
      (4.0 * 9000.0 * -std::log(0.8) + 12.0 * -std::log(0.8)) / 16.0;
  const double bce_main =
      (4.0 * 9000.0 * -std::log(0.9) + 12.0 * -std::log(0.9)) / 16.0;
  // softmax weights for one channel: e^0.9 on the hot node, e^0.1 elsewhere
  const double hot = std::exp(0.9), cold = std::exp(0.1);
  const double denom = hot + 3.0 * cold;
  // channel 1 (gt at x=0, y=0): x_hat = (locs 1 and 3 have x=1)
  const double xhat = (cold + cold) / denom;
  // by symmetry every channel errs by the same offset in x and y
  const double l2 = 2.0 * xhat * xhat;

  CHECK(report.bce_per_level[0] == Catch::Approx(bce_aux).epsilon(1e-12));
  CHECK(report.bce_per_level[1] == Catch::Approx(bce_main).epsilon(1e-12));
  CHECK(report.l2 == Catch::Approx(l2).epsilon(1e-9));
  CHECK(report.total == Catch::Approx(bce_aux + bce_main + l2).epsilon(1e-9));
}

TEST_CASE("total loss weighting switches") {
  const auto lm = make_landmarks({{{0, 0}, {0, 1}, {1, 0}, {1, 1}}}, 2, 2);
  const auto labels = hierarchical_labels(lm, 1);
  Heatmaps maps;
  maps.per_level = {Matrix::Constant(4, 4, 0.5), Matrix::Constant(4, 4, 0.5)};
  CoordinatePrediction pred;
  for (int p = 0; p < 4; ++p) pred.points[p] = {0.5, 0.5};

  LossConfig no_l2;
  no_l2.lambda_l2 = 0.0;
  const LossReport a = total_loss(maps, labels, pred, lm, no_l2);
  CHECK(a.total == Catch::Approx(a.bce_per_level[0] + a.bce_per_level[1]));

  LossConfig only_l2;
  only_l2.level_weights = {0.0, 0.0};
  const LossReport b = total_loss(maps, labels, pred, lm, only_l2);
  CHECK(b.total == Catch::Approx(b.l2));
}

TEST_CASE("total loss validates label levels") {
  const auto lm = make_landmarks({{{0, 0}, {0, 1}, {1, 0}, {1, 1}}}, 2, 2);
  auto labels = hierarchical_labels(lm, 1);
  Heatmaps maps;
  maps.per_level = {Matrix::Constant(4, 4, 0.5), Matrix::Constant(4, 4, 0.5)};
  CoordinatePrediction pred{};

  auto missing = labels;
  missing.pop_back();
  CHECK_THROWS_AS(total_loss(maps, missing, pred, lm, {}), std::invalid_argument);

  auto swapped = labels;
  std::swap(swapped[0], swapped[1]);
  CHECK_THROWS_AS(total_loss(maps, swapped, pred, lm, {}), std::invalid_argument);
}
