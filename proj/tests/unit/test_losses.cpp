#include "share/losses.hpp"
#include "support.hpp"

// torch logging headers define their own CHECK.
#undef CHECK
#include <doctest.h>

using namespace share;

namespace {

InpaintOperator identity_op(int64_t c, int64_t h, int64_t w) { return InpaintOperator(torch::ones({c, h, w})); }

struct Stats {
  double mean = 0, se = 0;
};

Stats stats(const std::vector<double>& v) {
  double m = 0, s = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
}

}  // namespace

TEST_CASE("sigma = 0 collapses sure to mc and rec to ec") {
  auto op = identity_op(2, 6, 6);
  auto y = testing::rand({2, 6, 6}, 1);
  Reconstructor f = [](const torch::Tensor& z) { return torch::tanh(0.8 * z) + 0.1; };
  RandomSource rng(3, "probe");
  CHECK(testing::bit_equal(loss_sure_gaussian(f, op, y, 0.0, 0.01, rng), loss_mc(f, op, y)));
  RandomSource nrng(4, "noise");
  auto t = GroupAction::shift(1, 2);
  NoiseModel silent{NoiseKind::Gaussian, 0.0, 1.0};
  CHECK(testing::bit_equal(loss_rec(f, op, y, t, silent, nrng), loss_ec(f, op, y, t)));

  LossSpec a, b;
  a.noise = b.noise = silent;
  a.terms = {LossTerm::Sure, LossTerm::Rec};
  b.terms = {LossTerm::Mc, LossTerm::Ec};
  LossRng ra(9), rb(9);
  auto la = loss_share(f, op, y, a, t, ra), lb = loss_share(f, op, y, b, t, rb);
  CHECK(testing::bit_equal(la.total, lb.total));
}

TEST_CASE("closed forms") {
  auto op = identity_op(1, 4, 4);
  auto y = torch::full({1, 4, 4}, 0.5, torch::kFloat64);
  Reconstructor zero = [](const torch::Tensor& z) { return torch::zeros_like(z); };
  CHECK(loss_mc(zero, op, y).item<double>() == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(loss_ec(zero, op, y, GroupAction::shift(1, 1)).item<double>() == 0.0);

  // f constant: the divergence vanishes, SURE = mc - sigma^2.
  RandomSource rng(1, "p");
  CHECK(loss_sure_gaussian(zero, op, y, 0.1, 0.01, rng).item<double>() == doctest::Approx(0.25 - 0.01));
  // PURE of f = 0: mean(y^2) - gain mean(y).
  CHECK(loss_sure_poisson(zero, op, y, 0.2, 0.01, rng).item<double>() == doctest::Approx(0.25 - 0.1));

  // Masked entries do not contribute to mc.
  auto mask = torch::ones({1, 4, 4});
  mask.index_put_({0, torch::indexing::Slice(), 0}, 0.0);
  InpaintOperator half(mask);
  Reconstructor one = [](const torch::Tensor& z) { return torch::ones_like(z); };
  CHECK(loss_mc(one, half, half.apply(y)).item<double>() == doctest::Approx(0.25 * 12.0 / 16.0));
}

TEST_CASE("identity reconstruction: SURE estimates sigma^2") {
  const double sigma = 0.1;
  auto op = identity_op(4, 64, 64);
  auto y = testing::rand({4, 64, 64}, 2);
  Reconstructor f = [](const torch::Tensor& z) { return z; };
  RandomSource rng(5, "p");
  double s = loss_sure_gaussian(f, op, y, sigma, 1e-3, rng, 4).item<double>();
  CHECK(std::abs(s - sigma * sigma) < 0.05 * sigma * sigma);
}

TEST_CASE("Gaussian SURE is unbiased for the true risk") {
  const double sigma = 0.2;
  auto op = identity_op(1, 4, 4);
  auto x = testing::rand({1, 4, 4}, 3);
  Reconstructor f = [](const torch::Tensor& z) { return 0.6 * z + 0.2 * torch::tanh(2 * z); };
  RandomSource noise(6, "meas"), probe(7, "probe");
  std::vector<double> diff;
  for (int k = 0; k < 10000; ++k) {
    auto y = x + sigma * noise.normal({1, 4, 4}, torch::kFloat64);
    double est = loss_sure_gaussian(f, op, y, sigma, 1e-4, probe).item<double>();
    double truth = (f(y) - x).pow(2).mean().item<double>();
    diff.push_back(est - truth);
  }
  auto s = stats(diff);
  CAPTURE(s.mean);
  CAPTURE(s.se);
  CHECK(std::abs(s.mean) < 3 * s.se);
}

TEST_CASE("Monte-Carlo divergence matches the Jacobian trace") {
  const double sigma = 0.5, tau = 1e-4;
  auto op = identity_op(1, 8, 8);
  auto y = testing::randn({1, 8, 8}, 4);
  Reconstructor mc_only = [](const torch::Tensor& z) { return z; };

  SUBCASE("elementwise nonlinearity") {
    Reconstructor f = [](const torch::Tensor& z) { return torch::tanh(z); };
    RandomSource rng(8, "p");
    double sure = loss_sure_gaussian(f, op, y, sigma, tau, rng, 1000).item<double>();
    double mc = loss_mc(f, op, y).item<double>();
    double div = (sure - mc + sigma * sigma) / (2 * sigma * sigma);
    double trace = (1 - torch::tanh(y).pow(2)).mean().item<double>();
    CHECK(std::abs(div - trace) < 0.02 * trace);
  }
  SUBCASE("dense linear map") {
    auto W = testing::randn({64, 64}, 9) / 8.0;
    Reconstructor f = [&](const torch::Tensor& z) { return torch::matmul(W, z.reshape({64})).reshape(z.sizes()); };
    RandomSource rng(10, "p");
    double sure = loss_sure_gaussian(f, op, y, sigma, tau, rng, 1000).item<double>();
    double mc = loss_mc(f, op, y).item<double>();
    double div = (sure - mc + sigma * sigma) / (2 * sigma * sigma);
    double trace = W.trace().item<double>() / 64.0;
    // Probe std of b^T W b / n is sqrt(sum (W_ij + W_ji)^2 / 2) / n per probe.
    double se = std::sqrt(((W + W.t()).pow(2).sum().item<double>() / 2.0)) / 64.0 / std::sqrt(1000.0);
    CHECK(std::abs(div - trace) < 4 * se);
  }
}

TEST_CASE("Poisson and mixed estimates against simulation") {
  const double gain = 0.05, sigma = 0.05;
  auto op = identity_op(1, 4, 4);
  auto x = 0.2 + 0.8 * testing::rand({1, 4, 4}, 11);
  Reconstructor f = [](const torch::Tensor& z) { return 0.7 * z + 0.05; };
  for (auto kind : {NoiseKind::Poisson, NoiseKind::Mixed}) {
    CAPTURE(to_string(kind));
    NoiseModel model{kind, sigma, gain};
    RandomSource noise(12, "meas"), probe(13, "probe");
    std::vector<double> diff;
    for (int k = 0; k < 10000; ++k) {
      auto y = corrupt(x, model, noise);
      auto est = kind == NoiseKind::Poisson ? loss_sure_poisson(f, op, y, gain, 1e-3, probe)
                                            : loss_sure_mixed(f, op, y, gain, sigma, 1e-3, probe);
      diff.push_back(est.item<double>() - (f(y) - x).pow(2).mean().item<double>());
    }
    auto s = stats(diff);
    CAPTURE(s.mean);
    CAPTURE(s.se);
    CHECK(std::abs(s.mean) < 3 * s.se);
  }
  RandomSource rng(1, "p");
  CHECK_THROWS_AS(loss_sure_poisson(f, op, -torch::ones({1, 4, 4}, torch::kFloat64), gain, 1e-3, rng),
                  DomainError);
}

TEST_CASE("loss_share breakdown") {
  auto op = identity_op(2, 8, 8);
  auto y = testing::rand({2, 8, 8}, 14);
  Reconstructor f = [](const torch::Tensor& z) { return torch::sigmoid(3 * z - 1); };
  auto t = GroupAction::shift(3, 5);
  LossSpec spec;
  spec.alpha = 0.7;
  for (auto terms : std::vector<std::vector<LossTerm>>{{LossTerm::Sure, LossTerm::Rec},
                                                       {LossTerm::Mc, LossTerm::Ec},
                                                       {LossTerm::Mc},
                                                       {LossTerm::Rec}}) {
    spec.terms = terms;
    LossRng rng(1);
    auto b = loss_share(f, op, y, spec, t, rng);
    CHECK(b.total.item<double>() == doctest::Approx(b.fidelity.item<double>() + 0.7 * b.equivariance.item<double>()));
  }
  spec.terms = {LossTerm::Mc, LossTerm::Ec};
  LossRng rng(1);
  auto b = loss_share(f, op, y, spec, t, rng);
  CHECK(b.fidelity.item<double>() == doctest::Approx(loss_mc(f, op, y).item<double>()));
  CHECK(b.equivariance.item<double>() == doctest::Approx(loss_ec(f, op, y, t).item<double>()));
  spec.alpha = 0.0;
  LossRng rng0(1);
  auto z = loss_share(f, op, y, spec, t, rng0);
  CHECK(z.equivariance.item<double>() == 0.0);
  CHECK(testing::bit_equal(z.total, z.fidelity));
}

TEST_CASE("spec validation") {
  auto bad = [](std::vector<LossTerm> terms) {
    LossSpec s;
    s.terms = std::move(terms);
    return s;
  };
  CHECK_THROWS_AS(bad({LossTerm::Mc, LossTerm::Sure}).validate(), SpecError);
  CHECK_THROWS_AS(bad({LossTerm::Ec, LossTerm::Rec}).validate(), SpecError);
  CHECK_THROWS_AS(bad({}).validate(), SpecError);
  CHECK_THROWS_AS(bad({LossTerm::Mc, LossTerm::Mc}).validate(), SpecError);
  LossSpec s;
  s.tau = 0;
  CHECK_THROWS_AS(s.validate(), SpecError);
  s = {};
  s.alpha = std::nan("");
  CHECK_THROWS_AS(s.validate(), SpecError);
  s = {};
  s.probe_count = 0;
  CHECK_THROWS_AS(s.validate(), SpecError);
  CHECK_THROWS_AS(parse_loss_term("l1"), SpecError);
  LossSpec ok;
  CHECK(LossSpec::from_json(ok.to_json()).to_json() == ok.to_json());
}

TEST_CASE("analytic gradients of every term match finite differences") {
  auto op = InpaintOperator((testing::rand({2, 6, 6}, 15, torch::kFloat32) > 0.3).to(torch::kFloat32));
  auto y = op.apply(testing::rand({2, 6, 6}, 16));
  auto theta = torch::tensor({0.8, 0.3, -0.1}, torch::kFloat64).requires_grad_(true);
  Reconstructor f = [&](const torch::Tensor& z) {
    return theta[0] * z + theta[1] * torch::tanh(z.roll(1, -1)) + theta[2];
  };
  const auto t = GroupAction::shift(2, 1);
  NoiseModel gauss{NoiseKind::Gaussian, 0.1, 1.0};

  std::vector<std::pair<std::string, std::function<torch::Tensor()>>> terms = {
      {"mc", [&] { return loss_mc(f, op, y); }},
      {"sure", [&] { RandomSource r(1, "p"); return loss_sure_gaussian(f, op, y, 0.1, 1e-3, r); }},
      {"pure", [&] { RandomSource r(1, "p"); return loss_sure_poisson(f, op, y, 0.05, 1e-3, r); }},
      {"mixed", [&] { RandomSource r(1, "p"); return loss_sure_mixed(f, op, y, 0.05, 0.1, 1e-3, r); }},
      {"ec", [&] { return loss_ec(f, op, y, t); }},
      {"rec", [&] { RandomSource r(1, "n"); return loss_rec(f, op, y, t, gauss, r); }},
      {"share", [&] { LossRng r(1); return loss_share(f, op, y, LossSpec{}, t, r).total; }},
  };
  for (auto& [name, loss] : terms) {
    CAPTURE(name);
    if (theta.grad().defined()) theta.grad().zero_();
    loss().backward();
    auto grad = theta.grad().clone();
    for (int64_t k = 0; k < 3; ++k) {
      const double eps = 1e-6;
      double plus, minus;
      {
        torch::NoGradGuard g;
        theta[k].add_(eps);
        plus = loss().item<double>();
        theta[k].add_(-2 * eps);
        minus = loss().item<double>();
        theta[k].add_(eps);
      }
      double fd = (plus - minus) / (2 * eps);
      CHECK(std::abs(fd - grad[k].item<double>()) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("Poisson re-noising passes gradients straight through") {
  auto op = identity_op(1, 4, 4);
  auto y = testing::rand({1, 4, 4}, 17);
  auto theta = torch::tensor({0.9}, torch::kFloat64).requires_grad_(true);
  Reconstructor f = [&](const torch::Tensor& z) { return theta * z; };
  NoiseModel poisson{NoiseKind::Poisson, 0.0, 0.05};
  RandomSource r(2, "n");
  auto loss = loss_rec(f, op, y, GroupAction::shift(1, 0), poisson, r);
  loss.backward();
  CHECK(std::isfinite(theta.grad().item<double>()));
  CHECK(theta.grad().item<double>() != 0.0);
}
