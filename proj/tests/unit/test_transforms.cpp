#include "share/transforms.hpp"
#include "support.hpp"

// torch logging headers define their own CHECK.
#undef CHECK
#include <doctest.h>

using namespace share;

namespace {

// f(i, j) = a + b i + c j: reproduced exactly by bilinear interpolation.
torch::Tensor linear_ramp(int64_t c, int64_t H, int64_t W) {
  auto i = torch::arange(H, torch::kFloat64).view({1, H, 1});
  auto j = torch::arange(W, torch::kFloat64).view({1, 1, W});
  auto b = torch::arange(c, torch::kFloat64).view({c, 1, 1});
  return (0.5 + b + 0.03 * i - 0.02 * j).expand({c, H, W}).contiguous();
}

torch::Tensor interior(const torch::Tensor& x, int64_t margin) {
  return x.slice(-2, margin, x.size(-2) - margin).slice(-1, margin, x.size(-1) - margin);
}

double homography_identity_error(const GroupAction& t, int64_t H, int64_t W) {
  auto a = homography(t, H, W), b = homography(inverse(t), H, W);
  double worst = 0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double p = 0, q = 0;
      for (int k = 0; k < 3; ++k) p += b[r * 3 + k] * a[k * 3 + c];
      for (int k = 0; k < 3; ++k) q += b[2 * 3 + k] * a[k * 3 + 2];
      worst = std::max(worst, std::abs(p / q - (r == c ? 1.0 : 0.0)));
    }
  return worst;
}

}  // namespace

TEST_CASE("identities") {
  auto x = testing::randn({3, 8, 8}, 1);
  CHECK(testing::bit_equal(act(GroupAction::shift(0, 0), x), x));
  CHECK(testing::bit_equal(act(GroupAction::identity(), x), x));
  auto r = GroupAction::rotation(90);
  CHECK(testing::bit_equal(act(r, act(r, act(r, act(r, x)))), x));
  CHECK(testing::max_abs(act(GroupAction::scale(1.0), x) - x) < 1e-12);
}

TEST_CASE("shift and rotation values") {
  auto x = torch::arange(12, torch::kFloat64).reshape({1, 3, 4});
  auto y = act(GroupAction::shift(1, 2), x);
  // Circular shift moves x[i][j] to y[i+1][j+2].
  CHECK(testing::bit_equal(y, torch::roll(x, {1, 2}, {1, 2})));
  auto sq = torch::arange(9, torch::kFloat64).reshape({1, 3, 3});
  auto r = act(GroupAction::rotation(90), sq);
  CHECK(testing::bit_equal(act(GroupAction::rotation(180), sq), torch::rot90(sq, 2, {1, 2})));
  CHECK((testing::bit_equal(r, torch::rot90(sq, 1, {1, 2})) || testing::bit_equal(r, torch::rot90(sq, -1, {1, 2}))));
  CHECK_THROWS(act(GroupAction::rotation(90), torch::zeros({1, 3, 4})));
  CHECK_THROWS(act(GroupAction::rotation(30), sq));
}

TEST_CASE("group laws on shift and rot-90 subgroups") {
  auto x = testing::randn({2, 6, 6}, 3);
  for (int a = -3; a < 7; ++a)
    for (int b = -2; b < 5; ++b) {
      auto s1 = GroupAction::shift(a, b), s2 = GroupAction::shift(b, 2 * a);
      auto c = compose(s1, s2, 6, 6);
      CHECK(testing::bit_equal(act(c, x), act(s1, act(s2, x))));
      CHECK(c.params[0] >= 0);
      CHECK(c.params[0] < 6);
    }
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j) {
      auto r1 = GroupAction::rotation(90.0 * k), r2 = GroupAction::rotation(90.0 * j);
      CHECK(testing::bit_equal(act(compose(r1, r2), x), act(r1, act(r2, x))));
      CHECK(testing::bit_equal(act(compose(r1, r2), x), act(GroupAction::rotation(90.0 * ((k + j) % 4)), x)));
    }
  auto s = GroupAction::shift(2, 1);
  CHECK(compose(s, GroupAction::identity()) == s);
  CHECK(compose(GroupAction::identity(), s) == s);
  CHECK_THROWS_AS(compose(GroupAction::shift(1, 1), GroupAction::rotation(90)), UnsupportedError);
}

TEST_CASE("exact inverses and norm preservation") {
  auto x = testing::randn({2, 8, 8}, 5);
  for (const auto& t : {GroupAction::shift(3, -5), GroupAction::reflection(0), GroupAction::reflection(1),
                        GroupAction::rotation(90), GroupAction::rotation(270)}) {
    CAPTURE(t.to_json().dump());
    auto y = act(t, x);
    CHECK(testing::bit_equal(act(inverse(t), y), x));
    CHECK(y.norm().item<double>() == doctest::Approx(x.norm().item<double>()).epsilon(1e-14));
  }
}

TEST_CASE("bilinear inverses on interior pixels") {
  auto x = linear_ramp(2, 32, 32);
  RandomSource rng(1, "transform");
  for (auto kind : {TransformKind::Scale, TransformKind::Similarity, TransformKind::Affine, TransformKind::PanTiltRotate,
                    TransformKind::Euclidean}) {
    for (int draw = 0; draw < 3; ++draw) {
      auto t = sample(kind, rng, 32, 32);
      CAPTURE(t.to_json().dump());
      auto back = act(inverse(t), act(t, x));
      // A projective warp of a ramp is no longer linear, so its bilinear
      // resampling is inexact; the coordinate maps still compose to the identity.
      const double tol = kind == TransformKind::PanTiltRotate ? 1e-4 : 1e-5;
      CHECK(testing::max_abs(interior(back - x, 10)) <= tol);
      CHECK(homography_identity_error(t, 32, 32) <= 1e-12);
    }
  }
  auto shift = GroupAction::shift(0.5, -1.25, Interpolation::Bilinear);
  CHECK(testing::max_abs(interior(act(inverse(shift), act(shift, x)) - x, 3)) <= 1e-5);
}

TEST_CASE("bilinear act is linear and has the finite-difference gradient") {
  RandomSource rng(2, "transform");
  auto t = sample(TransformKind::Similarity, rng, 12, 12);
  auto x1 = testing::randn({2, 12, 12}, 1), x2 = testing::randn({2, 12, 12}, 2);
  auto lhs = act(t, 0.7 * x1 + 1.3 * x2);
  auto rhs = 0.7 * act(t, x1) + 1.3 * act(t, x2);
  CHECK(testing::max_abs(lhs - rhs) <= 1e-6 * testing::max_abs(rhs));

  auto x = x1.clone().requires_grad_(true);
  auto w = testing::randn({2, 12, 12}, 3);
  (act(t, x) * w).sum().backward();
  auto dir = testing::randn({2, 12, 12}, 4);
  const double eps = 1e-6;
  double fd = ((act(t, x1 + eps * dir) * w).sum().item<double>() - (act(t, x1 - eps * dir) * w).sum().item<double>()) /
              (2 * eps);
  CHECK(testing::rel_err(testing::dot(x.grad(), dir), fd) < 1e-4);
}

TEST_CASE("samplers") {
  RandomSource rng(3, "transform");
  for (int i = 0; i < 200; ++i) {
    auto s = sample(TransformKind::Shift, rng, 8, 8);
    for (double p : s.params) {
      CHECK(p == std::floor(p));
      CHECK(p >= 0);
      CHECK(p <= 7);
    }
  }
  double lo = 10, hi = -10;
  for (int i = 0; i < 10000; ++i) {
    auto s = sample(TransformKind::Scale, rng, 16, 16);
    lo = std::min(lo, s.params[0]);
    hi = std::max(hi, s.params[0]);
  }
  CHECK(lo >= 0.75);
  CHECK(hi <= 1.25);
  CHECK(lo < 0.76);
  CHECK(hi > 1.24);
  for (int i = 0; i < 50; ++i) {
    auto r = sample(TransformKind::Rotation, rng, 8, 8);
    double q = r.params[0] / 90.0;
    CHECK(q == std::round(q));
    CHECK(std::fmod(r.params[0], 360.0) != 0.0);
  }
  RandomSource a(9, "transform"), b(9, "transform");
  for (auto kind : {TransformKind::Shift, TransformKind::Affine, TransformKind::PanTiltRotate})
    for (int i = 0; i < 10; ++i) CHECK(sample(kind, a, 16, 16) == sample(kind, b, 16, 16));
}

TEST_CASE("json round trip and homography") {
  GroupAction t{TransformKind::Affine, {1.1, 0.1, -0.05, 0.95, 1.0, -2.0}, Interpolation::Bilinear,
                WarpBoundary::Reflect, true};
  CHECK(GroupAction::from_json(t.to_json()) == t);
  auto h = homography(GroupAction::shift(2, 3), 8, 8);
  CHECK(h[2] == 3.0);
  CHECK(h[5] == 2.0);
}
