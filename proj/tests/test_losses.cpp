#include "doctest.h"
#include "fd.hpp"
#include "oracles.hpp"
#include "toys.hpp"

#include "uno/error.hpp"
#include "uno/losses.hpp"

#include <cmath>

using namespace uno;
using namespace uno::testing;

TEST_CASE("Bernoulli loss of the all-half decoder is 784 ln 2") {
  const VaeModel z = VaeModel::zeros(VaeArch{});
  std::mt19937_64 rng(1);
  const Mat x = (uniform(5, 784, rng).array() > 0.5).cast<double>().matrix();
  const Mat eps = gaussian(5, 2, rng);
  CHECK(vae_loss_bernoulli(z, x, eps) == doctest::Approx(784 * std::log(2.0)).epsilon(1e-12));
  CHECK(784 * std::log(2.0) == doctest::Approx(543.427).epsilon(1e-6));
  CHECK_THROWS_AS(vae_loss_gaussian(z, x, eps), Error);
}

TEST_CASE("KL term examples") {
  Posterior<Mat> std_post{Mat::Zero(3, 2), Mat::Ones(3, 2), Mat::Zero(3, 2)};
  CHECK(ad::item(kl_standard_normal<Mat>(std_post)) == 0.0);
  Posterior<Mat> shifted{Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Zero(1, 1)};
  CHECK(ad::item(kl_standard_normal<Mat>(shifted)) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("Gaussian reconstruction term") {
  std::mt19937_64 rng(2);
  const Mat x = uniform(1, 6, rng);
  CHECK(ad::item(squared_error<Mat>(x, x)) == 0.0);
  Mat shifted = x;
  shifted(0, 0) += 1.0;
  CHECK(ad::item(squared_error<Mat>(shifted, x)) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("Gaussian VAE loss matches an elementwise summation oracle") {
  VaeArch arch = toy_vae_arch();
  arch.head = OutputHead::Gaussian;
  const VaeModel m = VaeModel::create(arch, 5);
  std::mt19937_64 rng(3);
  const Mat x = uniform(4, 6, rng), eps = gaussian(4, 2, rng);
  const auto post = encode(m, x);
  const Mat z = (post.mu.array() + post.sigma.array() * eps.array()).matrix();
  const Mat xbar = decode(m, z);
  double total = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) total += (x(i, j) - xbar(i, j)) * (x(i, j) - xbar(i, j));
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double mu = post.mu(i, j), s = post.sigma(i, j);
      total += 0.5 * (mu * mu + s * s - std::log(s * s) - 1);
    }
  }
  CHECK(vae_loss_gaussian(m, x, eps) == doctest::Approx(total / 4).epsilon(1e-12));
}

TEST_CASE("VAE losses are batch-mean consistent under replication") {
  const VaeModel m = VaeModel::create(toy_vae_arch(), 6);
  std::mt19937_64 rng(4);
  const Mat x = uniform(3, 6, rng), eps = gaussian(3, 2, rng);
  Mat x3(9, 6), e3(9, 2);
  x3 << x, x, x;
  e3 << eps, eps, eps;
  CHECK(vae_loss(m, x3, e3) == doctest::Approx(vae_loss(m, x, eps)).epsilon(1e-13));
}

TEST_CASE("cosine squared examples and properties") {
  auto lay = [] {
    Layout l;
    l.add("v", 2, 1);
    return std::make_shared<const Layout>(std::move(l));
  }();
  auto v = [&](double a, double b) { return GradVector(lay, Vec{{a, b}}); };
  CHECK(cosine_sq(v(1, 0), v(0, 3)) == 0.0);
  CHECK(cosine_sq(v(2, 2), v(1, 1)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_sq(v(1, 0), v(1, 1)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cosine_sq(v(0, 0), v(1, 1)) == 0.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int i = 0; i < 200; ++i) {
    const GradVector a = v(n(rng), n(rng)), b = v(n(rng), n(rng));
    const double c = cosine_sq(a, b);
    CHECK(c >= 0);
    CHECK(c <= 1 + 1e-15);
    CHECK(c == cosine_sq(b, a));
  }
}

TEST_CASE("Bernoulli KL examples") {
  CHECK(std::abs(bernoulli_kl(1 - 0.01, 0.01)) < 1e-15);
  CHECK(bernoulli_kl(0.5, 0.01) ==
        doctest::Approx(0.5 * std::log(0.5 / 0.99) + 0.5 * std::log(0.5 / 0.01)).epsilon(1e-14));
  CHECK(bernoulli_kl(0.5, 0.01) == doctest::Approx(1.6145).epsilon(1e-4));
  CHECK(bernoulli_kl(1.0, 1e-8) == doctest::Approx(1e-8).epsilon(1e-3));
}

TEST_CASE("Bernoulli KL grid scan: nonnegative with minimum at 1 - alpha") {
  const double alpha = 0.01;
  double best = 1e300;
  int best_i = -1;
  for (int i = 0; i <= 10000; ++i) {
    const double kl = bernoulli_kl(i * 1e-4, alpha);
    CHECK(kl >= -1e-9);
    if (kl < best) {
      best = kl;
      best_i = i;
    }
  }
  CHECK(best_i == 9900);
}

TEST_CASE("retain probability with stub classifiers") {
  const VaeModel m = VaeModel::create(toy_vae_arch(), 7);
  const NoiseBatch noise = NoiseBatch::draw(50, 2, 8);
  CHECK(retain_probability(m, constant_classifier(toy_classifier_arch(), 40.0), noise) == 1.0);
  CHECK(retain_probability(m, constant_classifier(toy_classifier_arch(), std::log(1.0 / 3.0)), noise) ==
        doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("L_UNO reduces to the retain loss without the regularizer") {
  const VaeModel m = VaeModel::create(toy_vae_arch(), 9);
  std::mt19937_64 rng(10);
  const StepInputs in = toy_inputs(m.arch, 4, 0, rng);
  LossConfig cfg;
  cfg.beta_o_times_B = 0;
  const UnoGradient u = uno_gradient(m, in, nullptr, cfg, false);
  CHECK(u.loss == u.retain_loss);
  CHECK(u.g.values() == grad(vae_objective(m, in.retain, in.eps_retain), m.params).values());
}

TEST_CASE("L_UNO with structurally orthogonal gradients equals the retain loss") {
  Layout l;
  l.add("t", 2, 1);
  const ParamVector theta(std::make_shared<const Layout>(std::move(l)), Vec{{1.0, 1.0}});
  DiffContext ctx(theta);
  auto pick = [](const ad::Var& t, Eigen::Index i) { return ad::cols(ad::transpose(t), i, 1); };
  const ad::Var lr = ad::square(pick(ctx.params()[0], 0));
  const ad::Var lf = ad::square(pick(ctx.params()[0], 1));
  const VarList gr = ctx.gradient(lr, true), gf = ctx.gradient(lf, true);
  const ad::Var total = loss_uno(lr, gr, gf, LossConfig{});
  CHECK(total.item() == lr.item());
  CHECK(ctx.gradient_vector(total).values() == ctx.gradient_vector(lr).values());
}

TEST_CASE("L_UNO gradient matches finite differences on a toy model") {
  for (bool stop : {false, true}) {
    CAPTURE(stop);
    const VaeModel m = VaeModel::create(toy_vae_arch(4, 3), 11);
    std::mt19937_64 rng(12);
    const StepInputs in = toy_inputs(m.arch, 3, 0, rng);
    LossConfig cfg;
    cfg.stop_gradient_forget = stop;
    const UnoGradient u = uno_gradient(m, in, nullptr, cfg, false);
    CHECK(u.loss == doctest::Approx(uno_value(m, in, nullptr, cfg, false)).epsilon(1e-12));
    if (stop) continue;  // the stopped variant is not the gradient of any scalar
    const Vec fd = central_diff(
        [&](const ParamVector& p) { return uno_value(VaeModel{m.arch, p}, in, nullptr, cfg, false); }, m.params, 1e-5);
    CHECK(max_rel_error(fd, u.g.values(), 1e-6) < 1e-4);
  }
}

TEST_CASE("stop-gradient changes the update but not the loss value") {
  const VaeModel m = VaeModel::create(toy_vae_arch(4, 3), 13);
  std::mt19937_64 rng(14);
  const StepInputs in = toy_inputs(m.arch, 3, 0, rng);
  LossConfig full, stopped;
  stopped.stop_gradient_forget = true;
  const UnoGradient a = uno_gradient(m, in, nullptr, full, false);
  const UnoGradient b = uno_gradient(m, in, nullptr, stopped, false);
  CHECK(a.loss == b.loss);
  CHECK((a.g.values() - b.g.values()).norm() > 0);
}
