#include "doctest.h"
#include "fd.hpp"

#include "uno/error.hpp"
#include "uno/gradcore.hpp"

#include <random>

using namespace uno;
using uno::ad::Var;

namespace {

LayoutPtr flat_layout(Eigen::Index n) {
  Layout l;
  l.add("theta", n, 1);
  return std::make_shared<const Layout>(std::move(l));
}

ParamVector flat(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return ParamVector(flat_layout(v.size()), v);
}

ParamVector random_params(const LayoutPtr& layout, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0, scale);
  Vec v(layout->total_size());
  for (auto& x : v) x = n(rng);
  return ParamVector(layout, v);
}

double eval(const Objective& f, const ParamVector& p) {
  ad::NoGradGuard guard;
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < p.layout().count(); ++i) leaves.push_back(ad::constant(p.tensor(i)));
  return f(leaves).item();
}

Var elem(const Var& theta, Eigen::Index i) {
  return ad::cols(ad::transpose(theta), i, 1);
}

}  // namespace

TEST_CASE("grad of half squared norm is the identity") {
  const ParamVector theta = flat({1.5, -2.0, 0.25});
  const GradVector g = grad([](std::span<const Var> p) { return ad::scale(ad::sum(ad::square(p[0])), 0.5); }, theta);
  CHECK(g.values() == theta.values());
}

TEST_CASE("grad of t0*t1 + t0^2 at (2,3) is (7,2)") {
  const ParamVector theta = flat({2.0, 3.0});
  Objective f = [](std::span<const Var> p) {
    Var a = elem(p[0], 0), b = elem(p[0], 1);
    return ad::mul(a, b) + ad::square(a);
  };
  const GradVector g = grad(f, theta);
  CHECK(g.values()[0] == doctest::Approx(7.0).epsilon(1e-14));
  CHECK(g.values()[1] == doctest::Approx(2.0).epsilon(1e-14));
  const Vec fd = testing::central_diff([&](const ParamVector& p) { return eval(f, p); }, theta);
  CHECK(testing::max_rel_error(fd, g.values()) < 1e-8);
}

TEST_CASE("second-order gradient of cos^2 matches finite differences") {
  const ParamVector theta = flat({1.0, 2.0, 3.0});
  Objective a = [](std::span<const Var> p) { return ad::mul(elem(p[0], 0), elem(p[0], 1)); };
  Objective b = [](std::span<const Var> p) { return ad::mul(elem(p[0], 1), elem(p[0], 2)); };
  GradFunctional outer = [](std::span<const Var> ga, std::span<const Var> gb) { return cosine_sq(ga, gb); };
  const GradVector g = grad_of_grad_functional(outer, a, b, theta);

  // closed form: ga = (t1, t0, 0), gb = (0, t2, t1); cos^2 = t0^2 t2^2 / ((t0^2+t1^2)(t1^2+t2^2))
  auto c2 = [](const ParamVector& p) {
    const double x = p.values()[0], y = p.values()[1], z = p.values()[2];
    return x * x * z * z / ((x * x + y * y) * (y * y + z * z));
  };
  const Vec fd = testing::central_diff(c2, theta);
  CHECK(testing::max_rel_error(fd, g.values()) < 1e-7);
}

TEST_CASE("degenerate inner gradient is reported") {
  const ParamVector theta = flat({0.0, 0.0});
  Objective zero_grad = [](std::span<const Var> p) { return ad::sum(ad::square(p[0])); };
  Objective other = [](std::span<const Var> p) { return ad::sum(p[0]); };
  GradFunctional outer = [](std::span<const Var> ga, std::span<const Var> gb) { return cosine_sq(ga, gb); };
  try {
    grad_of_grad_functional(outer, zero_grad, other, theta);
    FAIL("expected DegenerateGradient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateGradient);
  }
}

TEST_CASE("non-finite gradient raises") {
  const ParamVector theta = flat({0.0});
  Objective f = [](std::span<const Var> p) { return ad::sum(ad::sqrt(p[0])); };
  try {
    grad(f, theta);
    FAIL("expected NonFiniteGradient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteGradient);
  }
}

TEST_CASE("every op: first and second derivatives agree with finite differences") {
  Layout l;
  l.add("a", 3, 4).add("b", 4, 2).add("r", 1, 4).add("c", 3, 1);
  auto layout = std::make_shared<const Layout>(std::move(l));
  std::mt19937_64 rng(7);

  using Body = std::function<Var(const Var&, const Var&, const Var&, const Var&)>;
  const std::vector<std::pair<const char*, Body>> ops = {
      {"matmul/tanh", [](auto& a, auto& b, auto&, auto&) { return ad::tanh(ad::matmul(a, b)); }},
      {"add_row/sigmoid", [](auto& a, auto&, auto& r, auto&) { return ad::sigmoid(ad::add_row(a, r)); }},
      {"mul_col/softplus", [](auto& a, auto&, auto&, auto& c) { return ad::softplus(ad::mul_col(a, c)); }},
      {"exp/log", [](auto& a, auto&, auto&, auto&) { return ad::log(ad::add_scalar(ad::exp(a), 1.0)); }},
      {"div/square", [](auto& a, auto&, auto&, auto&) { return ad::div(ad::square(a), ad::add_scalar(ad::square(a), 1.0)); }},
      {"sum_rows/sum_cols", [](auto& a, auto&, auto&, auto& c) {
         return ad::matmul(ad::sum_cols(ad::tanh(a)), ad::sum_rows(ad::square(c)));
       }},
      {"broadcast", [](auto& a, auto&, auto& r, auto& c) {
         return ad::mul(ad::broadcast_rows(r, 3), ad::broadcast_cols(c, 4)) + ad::broadcast(ad::mean(a), 3, 4);
       }},
      {"cols/pad_cols", [](auto& a, auto&, auto&, auto&) { return ad::pad_cols(ad::square(ad::cols(a, 1, 2)), 1, 5); }},
      {"log_softmax", [](auto& a, auto&, auto&, auto&) { return ad::log_softmax_rows(ad::scale(a, 2.0)); }},
      {"sqrt/transpose", [](auto& a, auto&, auto&, auto&) { return ad::transpose(ad::sqrt(ad::add_scalar(ad::square(a), 0.5))); }},
      {"sub/neg", [](auto& a, auto&, auto& r, auto&) { return ad::neg(ad::sub(ad::square(a), ad::broadcast_rows(r, 3))); }},
      {"clamp", [](auto& a, auto&, auto&, auto&) { return ad::square(ad::clamp(a, -0.5, 0.5)); }},
  };

  for (const auto& [name, body] : ops) {
    CAPTURE(name);
    const ParamVector theta = random_params(layout, rng);
    // first order on sum(w * body)
    const Mat w = Mat::Random(body(ad::constant(theta.tensor(0)), ad::constant(theta.tensor(1)),
                                   ad::constant(theta.tensor(2)), ad::constant(theta.tensor(3)))
                                  .rows(),
                              body(ad::constant(theta.tensor(0)), ad::constant(theta.tensor(1)),
                                   ad::constant(theta.tensor(2)), ad::constant(theta.tensor(3)))
                                  .cols());
    Objective f = [&](std::span<const Var> p) { return ad::sum(ad::mul(body(p[0], p[1], p[2], p[3]), ad::constant(w))); };
    const GradVector g = grad(f, theta);
    const Vec fd = testing::central_diff([&](const ParamVector& p) { return eval(f, p); }, theta);
    CHECK(testing::max_rel_error(fd, g.values(), 1e-4) < 1e-6);

    // second order: d/dθ of 0.5 |∇f|^2 is H ∇f
    GradFunctional sq = [](std::span<const Var> ga, std::span<const Var>) { return ad::scale(squared_norm(ga), 0.5); };
    const GradVector hg = grad_of_grad_functional(sq, f, f, theta);
    auto half_sq = [&](const ParamVector& p) { return 0.5 * grad(f, p).values().squaredNorm(); };
    const Vec fd2 = testing::central_diff(half_sq, theta);
    CHECK(testing::max_rel_error(fd2, hg.values(), 1e-4) < 1e-5);
  }
}

TEST_CASE("gradient is linear in the objective") {
  Layout l;
  l.add("w", 5, 3);
  auto layout = std::make_shared<const Layout>(std::move(l));
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const ParamVector theta = random_params(layout, rng);
    Objective f = [](std::span<const Var> p) { return ad::sum(ad::tanh(p[0])); };
    Objective h = [](std::span<const Var> p) { return ad::sum(ad::square(ad::sigmoid(p[0]))); };
    const double a = 0.3 + trial, b = -1.7;
    Objective comb = [&](std::span<const Var> p) { return ad::scale(f(p), a) + ad::scale(h(p), b); };
    const Vec lhs = grad(comb, theta).values();
    const Vec rhs = a * grad(f, theta).values() + b * grad(h, theta).values();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12 * (1 + rhs.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("gradients are deterministic") {
  Layout l;
  l.add("w", 6, 4).add("v", 4, 1);
  auto layout = std::make_shared<const Layout>(std::move(l));
  std::mt19937_64 rng(3);
  const ParamVector theta = random_params(layout, rng);
  Objective f = [](std::span<const Var> p) { return ad::sum(ad::tanh(ad::matmul(ad::tanh(p[0]), p[1]))); };
  CHECK(grad(f, theta).values() == grad(f, theta).values());
}

TEST_CASE("layout mismatch is rejected") {
  const GradVector a(flat_layout(2));
  const GradVector b(flat_layout(3));
  CHECK_THROWS_AS(dot(a, b), Error);
  const ParamVector p(flat_layout(3));
  CHECK_THROWS_AS(axpy(1.0, a, p), Error);
}
