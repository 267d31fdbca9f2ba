// Layer ops against independent oracles: central finite differences for every
// backward pass, the inner-product adjoint identity tying deconv2d to conv2d,
// and a handful of frozen closed-form values.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dcec/gradient_check.hpp"
#include "dcec/nn_ops.hpp"
#include "dcec/tensor.hpp"

using namespace dcec;

namespace {

TensorD random_tensor(std::vector<Index> shape, std::mt19937& rng, double lo = -1.0,
                      double hi = 1.0) {
  TensorD t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

double weighted_sum(const TensorD& values, const TensorD& weights) {
  return values.vec().dot(weights.vec());
}

}  // namespace

TEST_CASE("elu matches its closed form") {
  TensorD x({4}, {-1.0, 0.0, 2.0, -3.0});
  TensorD y = elu(x);
  CHECK(y[0] == doctest::Approx(-0.6321205588).epsilon(1e-9));
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);
  CHECK(y[3] == doctest::Approx(std::expm1(-3.0)).epsilon(1e-12));

  TensorD up({4}, {2.0, 1.0, 1.0, 1.0});
  TensorD dx = elu_backward(x, up);
  CHECK(dx[0] == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-9));  // 0.7357588823
  CHECK(dx[2] == 1.0);
}

TEST_CASE("elu_backward agrees with finite differences") {
  std::mt19937 rng(7);
  TensorD x = random_tensor({3, 5}, rng, -2.0, 2.0);
  TensorD w = random_tensor({3, 5}, rng);
  TensorD analytic = elu_backward(x, w, 1.3);
  auto objective = [&] { return weighted_sum(elu(x, 1.3), w); };
  auto report = gradient_check(objective, {&x}, {&analytic});
  CHECK(report.coords_checked == 15);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("elu rejects mismatched upstream") {
  TensorD x({2, 2});
  TensorD up({4});
  CHECK_THROWS_AS(elu_backward(x, up), ShapeError);
}

TEST_CASE("dense matches the affine hand value") {
  TensorD x({1, 2}, {1.0, 2.0});
  TensorD w({2, 2}, {1.0, 0.0, 0.0, 1.0});
  TensorD b({2}, {3.0, 4.0});
  TensorD y = dense(x, w, b);
  CHECK(y[0] == 4.0);
  CHECK(y[1] == 6.0);
  CHECK_THROWS_AS(dense(x, TensorD({3, 2}), b), ShapeError);
}

TEST_CASE("dense_backward agrees with finite differences") {
  std::mt19937 rng(11);
  TensorD x = random_tensor({4, 6}, rng);
  TensorD w = random_tensor({6, 3}, rng);
  TensorD b = random_tensor({3}, rng);
  TensorD u = random_tensor({4, 3}, rng);

  DenseGrads<double> g = dense_backward(x, w, u);
  auto objective = [&] { return weighted_sum(dense(x, w, b), u); };
  auto report = gradient_check(objective, {&x, &w, &b}, {&g.d_input, &g.d_weights, &g.d_bias});
  CHECK(report.coords_checked == 24 + 18 + 3);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("conv2d is cross-correlation, not flipped convolution") {
  // Identity-diagonal kernel on the 2x2 ramp.
  TensorD x({1, 2, 2, 1}, {1.0, 2.0, 3.0, 4.0});
  TensorD k({2, 2, 1, 1}, {1.0, 0.0, 0.0, 1.0});
  TensorD b({1}, {0.0});
  TensorD y = conv2d(x, k, b, 1, Padding::kValid);
  CHECK(y.shape() == std::vector<Index>{1, 1, 1, 1});
  CHECK(y[0] == 5.0);

  // Asymmetric kernel: correlation reads k[0][0] at the top-left tap.
  TensorD x2({1, 2, 2, 1}, {1.0, 0.0, 0.0, 0.0});
  TensorD k2({2, 2, 1, 1}, {1.0, 2.0, 3.0, 4.0});
  CHECK(conv2d(x2, k2, b, 1, Padding::kValid)[0] == 1.0);
}

TEST_CASE("same padding uses the ceil convention with extra pad at bottom/right") {
  ConvGeometry g = make_conv_geometry({1, 5, 5, 1}, {3, 3, 1, 2}, 2, Padding::kSame);
  CHECK(g.out_h == 3);
  CHECK(g.pad_top == 1);

  g = make_conv_geometry({1, 6, 6, 1}, {5, 5, 1, 2}, 2, Padding::kSame);
  CHECK(g.out_h == 3);
  // pad_total = 3: one row on top, two on the bottom.
  CHECK(g.pad_top == 1);

  g = make_conv_geometry({2, 8, 8, 3}, {5, 5, 3, 4}, 2, Padding::kSame);
  CHECK(g.out_h == 4);
  CHECK(g.out_w == 4);
}

TEST_CASE("conv2d shape contract violations throw") {
  TensorD x({1, 4, 4, 2});
  TensorD k({3, 3, 3, 4});  // channel mismatch
  TensorD b({4});
  CHECK_THROWS_AS(conv2d(x, k, b, 1, Padding::kSame), ShapeError);
  TensorD k2({5, 5, 2, 4});  // larger than input under valid padding
  TensorD b2({4});
  CHECK_THROWS_AS(conv2d(x, k2, b2, 1, Padding::kValid), ShapeError);
  TensorD k3({3, 3, 2, 4});
  CHECK_THROWS_AS(conv2d(x, k3, TensorD({5}), 1, Padding::kSame), ShapeError);
}

TEST_CASE("conv2d_backward agrees with finite differences") {
  std::mt19937 rng(23);
  struct Case {
    std::vector<Index> x, k;
    Index stride;
    Padding pad;
  };
  const Case cases[] = {
      {{2, 5, 5, 2}, {3, 3, 2, 3}, 1, Padding::kValid},
      {{1, 5, 5, 2}, {3, 3, 2, 3}, 2, Padding::kSame},
      {{2, 6, 6, 1}, {5, 5, 1, 2}, 2, Padding::kSame},
      {{1, 4, 6, 2}, {3, 3, 2, 2}, 2, Padding::kSame},
  };
  for (const Case& c : cases) {
    CAPTURE(c.stride);
    TensorD x = random_tensor(c.x, rng);
    TensorD k = random_tensor(c.k, rng);
    TensorD b = random_tensor({c.k[3]}, rng);
    TensorD y = conv2d(x, k, b, c.stride, c.pad);
    TensorD u = random_tensor(y.shape(), rng);

    ConvGrads<double> g = conv2d_backward(x, k, c.stride, c.pad, u);
    auto objective = [&] { return weighted_sum(conv2d(x, k, b, c.stride, c.pad), u); };
    GradCheckConfig cfg;
    cfg.max_coords = 60;
    cfg.seed = 99;
    auto report = gradient_check(objective, {&x, &k, &b}, {&g.d_input, &g.d_kernels, &g.d_bias},
                                 cfg);
    CHECK(report.max_rel_error < 1e-6);
  }
}

TEST_CASE("deconv2d is the exact adjoint of same-padded conv2d") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    const Index s = 1 + trial % 2;
    const Index out_h = 5 + trial % 3;
    const Index out_w = 4 + trial % 4;
    const Index c = 2, f = 3;
    const Index h = (out_h + s - 1) / s, w = (out_w + s - 1) / s;

    TensorD k = random_tensor({3, 3, c, f}, rng);
    TensorD zero_f({f}), zero_c({c});
    TensorD x = random_tensor({2, out_h, out_w, c}, rng);
    TensorD y = random_tensor({2, h, w, f}, rng);

    // <conv(x), y> must equal <x, deconv(y)> when both use zero bias.
    const double lhs = weighted_sum(conv2d(x, k, zero_f, s, Padding::kSame), y);
    const double rhs = weighted_sum(deconv2d(y, k, zero_c, s, out_h, out_w), x);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("deconv2d validates the spatial contract") {
  TensorD y({1, 4, 4, 8});
  TensorD k({3, 3, 4, 8});
  TensorD b({4});
  // ceil(9/2) = 5 != 4
  CHECK_THROWS_AS(deconv2d(y, k, b, 2, 9, 9), ShapeError);
  // filter count mismatch
  TensorD k2({3, 3, 4, 6});
  CHECK_THROWS_AS(deconv2d(y, k2, b, 2, 8, 8), ShapeError);
  CHECK(deconv2d(y, k, b, 2, 8, 8).shape() == std::vector<Index>{1, 8, 8, 4});
  CHECK(deconv2d(y, k, b, 2, 7, 8).shape() == std::vector<Index>{1, 7, 8, 4});
}

TEST_CASE("deconv2d_backward agrees with finite differences") {
  std::mt19937 rng(43);
  struct Case {
    Index stride, out_h, out_w, c, f;
  };
  const Case cases[] = {{2, 8, 8, 2, 3}, {2, 7, 9, 1, 2}, {1, 5, 5, 2, 2}};
  for (const Case& c : cases) {
    CAPTURE(c.out_h);
    const Index h = (c.out_h + c.stride - 1) / c.stride;
    const Index w = (c.out_w + c.stride - 1) / c.stride;
    TensorD x = random_tensor({2, h, w, c.f}, rng);
    TensorD k = random_tensor({3, 3, c.c, c.f}, rng);
    TensorD b = random_tensor({c.c}, rng);
    TensorD u = random_tensor({2, c.out_h, c.out_w, c.c}, rng);

    ConvGrads<double> g = deconv2d_backward(x, k, c.stride, c.out_h, c.out_w, u);
    auto objective = [&] {
      return weighted_sum(deconv2d(x, k, b, c.stride, c.out_h, c.out_w), u);
    };
    GradCheckConfig cfg;
    cfg.max_coords = 60;
    cfg.seed = 5;
    auto report = gradient_check(objective, {&x, &k, &b}, {&g.d_input, &g.d_kernels, &g.d_bias},
                                 cfg);
    CHECK(report.max_rel_error < 1e-6);
  }
}

TEST_CASE("gradient_check harness flags wrong gradients and honours sampling") {
  std::mt19937 rng(3);
  TensorD x = random_tensor({10}, rng, 0.5, 1.5);
  auto objective = [&] { return x.vec().squaredNorm(); };

  TensorD good({10});
  good.vec() = 2.0 * x.vec();
  auto ok = gradient_check(objective, {&x}, {&good});
  CHECK(ok.max_rel_error < 1e-8);

  // A gradient scaled by 2 sits at relative error 0.5 under the
  // max(|a|,|fd|) normalisation.
  TensorD doubled({10});
  doubled.vec() = 4.0 * x.vec();
  auto bad = gradient_check(objective, {&x}, {&doubled});
  CHECK(bad.max_rel_error == doctest::Approx(0.5).epsilon(1e-3));

  GradCheckConfig cfg;
  cfg.max_coords = 4;
  cfg.seed = 17;
  auto sampled = gradient_check(objective, {&x}, {&good}, cfg);
  auto sampled2 = gradient_check(objective, {&x}, {&good}, cfg);
  CHECK(sampled.coords_checked == 4);
  CHECK(sampled.max_rel_error == sampled2.max_rel_error);

  GradCheckConfig bad_eps;
  bad_eps.epsilon = 0.5;
  CHECK_THROWS_AS(gradient_check(objective, {&x}, {&good}, bad_eps), NumericError);

  auto poisoned = [&] { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(gradient_check(poisoned, {&x}, {&good}), NumericError);
}

TEST_CASE("tensor views and reshape guard their contracts") {
  TensorF t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.matrix()(1, 2) == 6.0f);
  CHECK(t.matrix(3, 2)(2, 1) == 6.0f);
  CHECK_THROWS_AS(t.matrix(4, 2), ShapeError);
  CHECK_THROWS_AS(t.reshaped({5}), ShapeError);
  CHECK(t.reshaped({6}).rank() == 1);
  CHECK_THROWS_AS(TensorF({0, 3}), ShapeError);
  CHECK_THROWS_AS((TensorF({2, 2}, {1.0f})), ShapeError);

  TensorD d = t.cast<double>();
  CHECK(d[5] == 6.0);

  TensorF g = gather_rows(t, {1, 0, 1});
  CHECK(g.dim(0) == 3);
  CHECK(g.at({0, 0}) == 4.0f);
  CHECK(g.at({1, 2}) == 3.0f);
  CHECK_THROWS_AS(gather_rows(t, {2}), ShapeError);
}
