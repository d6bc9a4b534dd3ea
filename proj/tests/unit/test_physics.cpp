#include "share/physics.hpp"
#include "support.hpp"

// torch logging headers define their own CHECK.
#undef CHECK
#include <doctest.h>

using namespace share;

namespace {

// Direct evaluation of convolution + stride-s subsampling with the kernel
// centred at index k/2 and a circular boundary: y[i] = sum_u k[u] x[s i + k/2 - u].
torch::Tensor brute_force_circular(const torch::Tensor& x, const torch::Tensor& k, int64_t s) {
  auto xd = x.to(torch::kFloat64);
  auto kd = k.to(torch::kFloat64);
  const int64_t c = x.size(0), H = x.size(1), W = x.size(2), ks = k.size(0);
  auto out = torch::zeros({c, H / s, W / s}, torch::kFloat64);
  for (int64_t b = 0; b < c; ++b)
    for (int64_t i = 0; i < H / s; ++i)
      for (int64_t j = 0; j < W / s; ++j) {
        double acc = 0.0;
        for (int64_t u = 0; u < ks; ++u)
          for (int64_t v = 0; v < ks; ++v) {
            int64_t r = ((i * s + ks / 2 - u) % H + H) % H;
            int64_t q = ((j * s + ks / 2 - v) % W + W) % W;
            acc += kd[u][v].item<double>() * xd[b][r][q].item<double>();
          }
        out[b][i][j] = acc;
      }
  return out;
}

std::vector<std::unique_ptr<LinearOperator>> operators(int64_t c, int64_t H, int64_t W) {
  std::vector<std::unique_ptr<LinearOperator>> ops;
  RandomSource rng(4, "mask");
  ops.push_back(std::make_unique<InpaintOperator>(column_mask(c, H, W, 0.25, ColumnPattern::Random, rng)));
  for (auto pad : {PadMode::Reflect, PadMode::Circular, PadMode::Zero}) {
    ops.push_back(std::make_unique<BlurDownsampleOperator>(gaussian_kernel(7, 1.0), 2, pad));
    ops.push_back(std::make_unique<BlurDownsampleOperator>(gaussian_kernel(4, 1.2), 2, pad));
    ops.push_back(std::make_unique<BlurDownsampleOperator>(box_kernel(3), 4, pad));
  }
  return ops;
}

}  // namespace

TEST_CASE("inpainting algebra") {
  RandomSource rng(1, "mask");
  auto mask = column_mask(3, 8, 8, 0.25, ColumnPattern::Random, rng);
  InpaintOperator op(mask);
  auto x = testing::randn({3, 8, 8}, 2);
  CHECK(testing::bit_equal(op.apply(op.apply(x)), op.apply(x)));
  CHECK(testing::bit_equal(op.adjoint(x), op.apply(x)));
  CHECK(testing::bit_equal(op.apply(op.pseudo_inverse(op.apply(x))), op.apply(x)));
  InpaintOperator ones(torch::ones({3, 8, 8}));
  CHECK(testing::bit_equal(ones.apply(x), x));
  CHECK(testing::bit_equal(ones.pseudo_inverse(x), x));
  CHECK_THROWS_AS(InpaintOperator(torch::full({1, 2, 2}, 0.5)), ParameterError);
  CHECK_THROWS_AS(op.apply(torch::zeros({3, 8, 9})), ShapeError);
}

TEST_CASE("column masks") {
  for (auto pattern : {ColumnPattern::Periodic, ColumnPattern::Random, ColumnPattern::Blocks})
    for (double ratio : kBenchmarkMaskRatios) {
      RandomSource rng(3, "mask");
      auto m = column_mask(4, 16, 144, ratio, pattern, rng);
      auto missing_cols = (m[0][0] == 0).sum().item<int64_t>();
      CHECK(missing_cols == std::llround(ratio * 144));
      // Whole columns through every band and row.
      CHECK(testing::bit_equal(m, m[0][0].expand({4, 16, 144})));
    }
}

TEST_CASE("blur-downsample apply") {
  SUBCASE("delta kernel with s = 1 is the identity") {
    BlurDownsampleOperator op(delta_kernel(), 1);
    auto x = testing::randn({2, 6, 6}, 1);
    CHECK(testing::bit_equal(op.apply(x), x));
    CHECK(testing::bit_equal(op.adjoint(x), x));
  }
  SUBCASE("2x2 box, circular, s = 2 on a 4x4 ramp: block means") {
    auto x = torch::arange(16, torch::kFloat64).reshape({1, 4, 4});
    BlurDownsampleOperator op(box_kernel(2), 2, PadMode::Circular);
    auto y = op.apply(x);
    auto expected = brute_force_circular(x, box_kernel(2), 2);
    CHECK(testing::max_abs(y - expected) < 1e-12);
    // Output (1, 1) sits on full-resolution pixel (2, 2) and averages rows and cols 2..3.
    CHECK(y[0][1][1].item<double>() == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
  }
  SUBCASE("asymmetric kernel, circular, against brute force") {
    auto x = testing::randn({2, 12, 12}, 7);
    auto k = testing::rand({4, 4}, 8);
    k = k / k.sum();
    BlurDownsampleOperator op(k, 3, PadMode::Circular);
    CHECK(testing::max_abs(op.apply(x) - brute_force_circular(x, k, 3)) < 1e-10);
  }
  SUBCASE("kernel validation") {
    CHECK_THROWS_AS(BlurDownsampleOperator(torch::ones({2, 2}), 2), ParameterError);
    CHECK(gaussian_kernel(15, 2.0).sum().item<double>() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("adjoint dot-product test on 100 probes") {
  for (auto& op : operators(3, 16, 16)) {
    CAPTURE(op->to_json().dump());
    const auto [h, w] = op->measurement_size(16, 16);
    double worst = 0.0;
    for (int p = 0; p < 100; ++p) {
      auto x = testing::randn({3, 16, 16}, 100 + p);
      auto m = testing::randn({3, h, w}, 500 + p);
      worst = std::max(worst, testing::rel_err(testing::dot(op->apply(x), m), testing::dot(x, op->adjoint(m))));
    }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("linearity") {
  for (auto& op : operators(2, 16, 16)) {
    auto x1 = testing::randn({2, 16, 16}, 1), x2 = testing::randn({2, 16, 16}, 2);
    auto lhs = op->apply(0.3 * x1 - 1.7 * x2);
    auto rhs = 0.3 * op->apply(x1) - 1.7 * op->apply(x2);
    CHECK(testing::max_abs(lhs - rhs) <= 1e-6 * testing::max_abs(rhs));
  }
}

TEST_CASE("pseudo-inverse") {
  SUBCASE("delta kernel, s = 2, bicubic: H H+ m = m") {
    BlurDownsampleOperator op(delta_kernel(), 2);
    auto m = testing::randn({3, 8, 8}, 3);
    CHECK(testing::max_abs(op.apply(op.pseudo_inverse(m)) - m) < 1e-4);
  }
  SUBCASE("exact mode: H H+ H = H on random probes") {
    for (auto pad : {PadMode::Circular, PadMode::Reflect, PadMode::Zero}) {
      BlurDownsampleOperator op(gaussian_kernel(5, 1.0), 2, pad, PinvMode::Exact);
      for (int p = 0; p < 5; ++p) {
        auto x = testing::randn({2, 16, 16}, 40 + p);
        auto hx = op.apply(x);
        CHECK(testing::max_abs(op.apply(op.pseudo_inverse(hx)) - hx) <= 1e-4 * testing::max_abs(hx));
      }
    }
  }
  SUBCASE("circular s = 1: spectral inverse") {
    BlurDownsampleOperator op(gaussian_kernel(7, 1.0), 1, PadMode::Circular, PinvMode::Exact);
    auto x = testing::randn({2, 16, 12}, 50);
    auto hx = op.apply(x);
    CHECK(testing::max_abs(op.apply(op.pseudo_inverse(hx)) - hx) <= 1e-8 * testing::max_abs(hx));
    // Asymmetric even-size kernel, against the brute-force circular oracle.
    auto k = testing::rand({4, 4}, 51);
    BlurDownsampleOperator asym(k / k.sum(), 1, PadMode::Circular, PinvMode::Exact);
    auto m = asym.apply(x);
    CHECK(testing::max_abs(asym.apply(asym.pseudo_inverse(m)) - m) <= 1e-8 * testing::max_abs(m));
    // On an invertible blur the pseudo-inverse recovers the signal.
    auto x1 = testing::randn({1, 8, 8}, 52);
    auto near_delta = torch::full({3, 3}, 0.02, torch::kFloat64);
    near_delta[1][1] = 0.84;
    BlurDownsampleOperator mild(near_delta, 1, PadMode::Circular, PinvMode::Exact);
    CHECK(testing::max_abs(mild.pseudo_inverse(mild.apply(x1)) - x1) <= 1e-10);
    CHECK((mild.pseudo_inverse(mild.apply(x1.to(torch::kFloat32))).scalar_type() == torch::kFloat32));
  }
  SUBCASE("shapes") {
    BlurDownsampleOperator op(gaussian_kernel(7, 1.0), 4);
    CHECK(op.pseudo_inverse(torch::zeros({3, 5, 6})).sizes() == std::vector<int64_t>{3, 20, 24});
    CHECK(op.signal_size(5, 6) == std::pair<int64_t, int64_t>{20, 24});
  }
}

TEST_CASE("noise models") {
  SUBCASE("sigma 0 leaves the input unchanged") {
    auto m = testing::rand({2, 4, 4}, 1, torch::kFloat32);
    RandomSource rng(1, "noise");
    CHECK(testing::bit_equal(corrupt(m, {NoiseKind::Gaussian, 0.0, 1.0}, rng), m));
  }
  SUBCASE("gaussian empirical std") {
    RandomSource rng(2, "noise");
    const double sigma = 25.0 / 255.0;
    auto y = corrupt(torch::full({10, 100, 100}, 0.5, torch::kFloat64), {NoiseKind::Gaussian, sigma, 1.0}, rng);
    CHECK(testing::rel_err(y.std().item<double>(), sigma) < 0.02);
  }
  SUBCASE("poisson empirical moments") {
    RandomSource rng(3, "noise");
    const double gain = 1.0 / 25.0;
    auto y = corrupt(torch::full({10, 100, 100}, 0.5, torch::kFloat64), {NoiseKind::Poisson, 0.0, gain}, rng);
    CHECK(testing::rel_err(y.mean().item<double>(), 0.5) < 0.02);
    CHECK(testing::rel_err(y.var().item<double>(), gain * 0.5) < 0.05);
  }
  SUBCASE("domain and determinism") {
    RandomSource rng(4, "noise");
    CHECK_THROWS_AS(corrupt(torch::full({1, 2, 2}, -0.1), {NoiseKind::Poisson, 0.0, 1.0}, rng), DomainError);
    RandomSource a(5, "noise"), b(5, "noise"), c(5, "other");
    NoiseModel n{NoiseKind::Gaussian, 0.1, 1.0};
    auto m = torch::zeros({1, 8, 8});
    auto ya = corrupt(m, n, a);
    CHECK(testing::bit_equal(ya, corrupt(m, n, b)));
    CHECK_FALSE(torch::equal(ya, corrupt(m, n, c)));
    CHECK_THROWS(NoiseModel{NoiseKind::Gaussian, -1.0, 1.0}.validate());
    CHECK_THROWS(NoiseModel{NoiseKind::Poisson, 0.0, 0.0}.validate());
  }
}

TEST_CASE("kernel and operator JSON") {
  auto k = kernel_from_json({{"type", "gaussian"}, {"size", 7}, {"std", 1.0}});
  CHECK(testing::max_abs(k - gaussian_kernel(7, 1.0)) == 0.0);
  CHECK(testing::max_abs(kernel_from_json(kernel_to_json(k)) - k) < 1e-15);
  BlurDownsampleOperator op(k, 2, PadMode::Circular);
  auto copy = blur_operator_from_json(op.to_json());
  auto x = testing::randn({1, 8, 8}, 1);
  CHECK(testing::max_abs(copy->apply(x) - op.apply(x)) < 1e-12);
}
