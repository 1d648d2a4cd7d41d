#include "lvmark/nn.hpp"

#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace lvmark;
using nn::FeatureMap;
using testutil::central_diff;
using testutil::rel_err;

namespace {

FeatureMap random_map(int c, int h, int w, std::mt19937_64& rng) {
  FeatureMap m(c, h, w);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (auto& v : m.data) v = uni(rng);
  return m;
}

// scalar probe loss: sum of output times a fixed random mask
double probe_loss(const FeatureMap& y, const FeatureMap& mask) {
  double sum = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) sum += y.data[i] * mask.data[i];
  return sum;
}

}  // namespace

TEST_CASE("feature map rows round-trip") {
  std::mt19937_64 rng(1);
  const FeatureMap m = random_map(3, 4, 5, rng);
  const Matrix rows = nn::map_to_rows(m);
  REQUIRE(rows.rows() == 20);
  REQUIRE(rows.cols() == 3);
  CHECK(rows(2 * 5 + 3, 1) == m.chan(1)(2, 3));
  const FeatureMap back = nn::rows_to_map(rows, 3, 4, 5);
  CHECK(back.data == m.data);
}

TEST_CASE("conv3x3 gradients match finite differences") {
  std::mt19937_64 rng(7);
  nn::Conv3x3 conv("t", 2, 3, rng);
  FeatureMap x = random_map(2, 5, 6, rng);
  const FeatureMap mask = random_map(3, 5, 6, rng);

  const auto eval = [&] { return probe_loss(conv.forward(x), mask); };

  conv.visit_params([](nn::Tensor& t) { t.grad.setZero(); });
  conv.forward(x);
  FeatureMap dy = mask;
  const FeatureMap dx = conv.backward(dy);

  conv.visit_params([&](nn::Tensor& t) {
    for (const auto [r, c] : {std::pair{0, 0}, {0, 3}, {t.value.rows() > 2 ? 2 : 0, 1}}) {
      if (r >= t.value.rows() || c >= t.value.cols()) continue;
      const double fd = central_diff(t.value(r, c), eval);
      CHECK(rel_err(t.grad(r, c), fd) < 1e-6);
    }
  });
  for (const std::size_t i : {std::size_t{0}, std::size_t{17}, x.data.size() - 1}) {
    const double fd = central_diff(x.data[i], eval);
    CHECK(rel_err(dx.data[i], fd) < 1e-6);
  }
}

TEST_CASE("adaptive average pool matches finite differences") {
  std::mt19937_64 rng(13);
  nn::AdaptiveAvgPool pool(3, 2);
  FeatureMap x = random_map(2, 7, 5, rng);
  const FeatureMap mask = random_map(2, 3, 2, rng);

  const auto eval = [&] { return probe_loss(pool.forward(x), mask); };
  pool.forward(x);
  const FeatureMap dx = pool.backward(mask);
  for (const std::size_t i : {std::size_t{0}, std::size_t{11}, x.data.size() - 1}) {
    CHECK(rel_err(dx.data[i], central_diff(x.data[i], eval)) < 1e-6);
  }

  // exact 2x downsampling is a plain average
  nn::AdaptiveAvgPool half(2, 2);
  FeatureMap q(1, 4, 4);
  for (std::size_t i = 0; i < q.data.size(); ++i) q.data[i] = static_cast<double>(i);
  const FeatureMap y = half.forward(q);
  CHECK(y.chan(0)(0, 0) == Catch::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(y.chan(0)(1, 1) == Catch::Approx((10 + 11 + 14 + 15) / 4.0));
}

TEST_CASE("bilinear resize layer matches finite differences") {
  std::mt19937_64 rng(17);
  for (const auto [th, tw] : {std::pair{7, 9}, {3, 2}}) {
    nn::BilinearResize resize(th, tw);
    FeatureMap x = random_map(2, 4, 5, rng);
    const FeatureMap mask = random_map(2, th, tw, rng);
    const auto eval = [&] { return probe_loss(resize.forward(x), mask); };
    resize.forward(x);
    const FeatureMap dx = resize.backward(mask);
    for (const std::size_t i : {std::size_t{0}, std::size_t{9}, x.data.size() - 1}) {
      CHECK(rel_err(dx.data[i], central_diff(x.data[i], eval)) < 1e-6);
    }
  }
}

TEST_CASE("linear layer matches finite differences") {
  std::mt19937_64 rng(23);
  nn::Linear fc("t", 4, 3, rng);
  Matrix x = testutil::random_matrix(5, 4, rng);
  const Matrix mask = testutil::random_matrix(5, 3, rng);

  const auto eval = [&] { return (fc.forward(x).array() * mask.array()).sum(); };
  fc.visit_params([](nn::Tensor& t) { t.grad.setZero(); });
  fc.forward(x);
  const Matrix dx = fc.backward(mask);

  fc.visit_params([&](nn::Tensor& t) {
    const double fd = central_diff(t.value(0, t.value.cols() - 1), eval);
    CHECK(rel_err(t.grad(0, t.value.cols() - 1), fd) < 1e-6);
  });
  CHECK(rel_err(dx(2, 1), central_diff(x(2, 1), eval)) < 1e-6);
}

TEST_CASE("conv block chains two convolutions with relu") {
  std::mt19937_64 rng(31);
  nn::ConvBlock block("t", 2, 3, 2, rng);
  FeatureMap x = random_map(2, 4, 4, rng);
  const FeatureMap mask = random_map(2, 4, 4, rng);

  const auto eval = [&] { return probe_loss(block.forward(x), mask); };
  block.visit_params([](nn::Tensor& t) { t.grad.setZero(); });
  block.forward(x);
  const FeatureMap dx = block.backward(mask);

  int checked = 0;
  block.visit_params([&](nn::Tensor& t) {
    const double fd = central_diff(t.value(0, 0), eval);
    if (std::abs(fd) > 1e-9 || std::abs(t.grad(0, 0)) > 1e-9) {
      CHECK(rel_err(t.grad(0, 0), fd) < 1e-5);
      ++checked;
    }
  });
  CHECK(checked >= 2);
  CHECK(rel_err(dx.data[5], central_diff(x.data[5], eval)) < 1e-5);
}

TEST_CASE("he initialization is deterministic per seed") {
  std::mt19937_64 a(42), b(42);
  nn::Conv3x3 c1("t", 2, 2, a), c2("t", 2, 2, b);
  bool equal = true;
  std::vector<Matrix> va, vb;
  c1.visit_params([&](nn::Tensor& t) { va.push_back(t.value); });
  c2.visit_params([&](nn::Tensor& t) { vb.push_back(t.value); });
  for (std::size_t i = 0; i < va.size(); ++i) equal = equal && va[i] == vb[i];
  CHECK(equal);
}
