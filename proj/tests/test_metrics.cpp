#include "doctest.h"
#include "toys.hpp"

#include "uno/error.hpp"
#include "uno/metrics.hpp"

#include <Eigen/Eigenvalues>

using namespace uno;
using namespace uno::testing;

namespace {

RunRecord record_of(std::vector<double> ff, std::vector<double> t) {
  RunRecord r;
  for (std::size_t i = 0; i < ff.size(); ++i) r.steps.push_back({static_cast<int>(i) + 1, ff[i], t[i], 0, ""});
  return r;
}

GaussianStats stats(Vec mean, Mat cov) { return {std::move(mean), std::move(cov), 100}; }

// Tr sqrt(A B) through the general (non-symmetric) eigen solver.
double frechet_oracle(const GaussianStats& a, const GaussianStats& b) {
  const Eigen::EigenSolver<Mat> es(a.cov * b.cov);
  double tr = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) tr += std::sqrt(std::max(0.0, es.eigenvalues()[i].real()));
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2 * tr;
}

Mat random_spd(int d, std::mt19937_64& rng) {
  const Mat g = gaussian(d, d, rng);
  return g * g.transpose() / d + 0.1 * Mat::Identity(d, d);
}

}  // namespace

TEST_CASE("forget fraction counting") {
  Mat probs = Mat::Constant(500, 1, 0.9);
  CHECK(forget_fraction(probs) == 0.0);
  for (int i = 0; i < 7; ++i) probs(i * 13, 0) = 0.2;
  CHECK(forget_fraction(probs) == doctest::Approx(0.014));
  CHECK(forget_fraction(Mat::Constant(500, 1, 0.1)) == 1.0);

  const VaeModel m = VaeModel::create(toy_vae_arch(), 1);
  CHECK(forget_fraction(m, constant_classifier(toy_classifier_arch(), 20), 500, 3) == 0.0);
  CHECK(forget_fraction(m, constant_classifier(toy_classifier_arch(), -20), 500, 3) == 1.0);
}

TEST_CASE("forget fraction estimates agree across monitor seeds") {
  const VaeModel m = VaeModel::create(toy_vae_arch(), 2);
  // the retain probability depends on the sample, so the fraction is a real estimate
  ClassifierModel c = ClassifierModel::create(toy_classifier_arch(), 3);
  const double ref = forget_fraction(m, c, 20000, 100);
  const double sd = std::sqrt(std::max(ref * (1 - ref), 1e-4) / 500);
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(std::abs(forget_fraction(m, c, 500, s) - ref) < 3 * sd + 1e-12);
}

TEST_CASE("crossing step and time") {
  const RunRecord r = record_of({0.3, 0.05, 0.01}, {1, 2, 3});
  CHECK(*time_to_unlearn(r) == 3);
  CHECK(*steps_to_unlearn(r) == 3);
  CHECK_FALSE(time_to_unlearn(record_of({0.3, 0.02, 0.05}, {1, 2, 3})).has_value());
  CHECK(*time_to_unlearn(record_of({0.0, 0.5}, {0.25, 1})) == 0.25);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 0.3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> ff(30), t(30);
    for (int i = 0; i < 30; ++i) {
      ff[i] = u(rng);
      t[i] = i + 1.0;
    }
    const RunRecord rr = record_of(ff, t);
    const auto lo = time_to_unlearn(rr, 0.02), hi = time_to_unlearn(rr, 0.1);
    if (lo) REQUIRE(hi);
    if (lo) CHECK(*hi <= *lo);
  }
}

TEST_CASE("gaussian stats") {
  Mat two(2, 2);
  two << 0, 0, 2, 2;
  const GaussianStats s = gaussian_stats(two);
  CHECK(s.mean == Vec{{1, 1}});
  CHECK(s.cov == Mat{{2, 2}, {2, 2}});
  CHECK(gaussian_stats(Mat::Constant(4, 3, 0.7)).cov.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(gaussian_stats(Mat::Zero(1, 3)), Error);

  std::mt19937_64 rng(5);
  const Mat x = gaussian(40, 5, rng);
  const GaussianStats g = gaussian_stats(x);
  Vec mean = Vec::Zero(5);
  for (int i = 0; i < 40; ++i) mean += x.row(i).transpose();
  mean /= 40;
  Mat cov = Mat::Zero(5, 5);
  for (int i = 0; i < 40; ++i)
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 5; ++b) cov(a, b) += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
  cov /= 39;
  CHECK((g.mean - mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g.cov - cov).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g.cov - g.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("frechet closed forms") {
  CHECK(frechet_distance(stats(Vec{{0.0}}, Mat{{1.0}}), stats(Vec{{1.0}}, Mat{{1.0}})) == 1.0);
  CHECK(frechet_distance(stats(Vec{{0.0}}, Mat{{1.0}}), stats(Vec{{0.0}}, Mat{{4.0}})) == 1.0);
  std::mt19937_64 rng(6);
  const GaussianStats a = stats(gaussian(5, 1, rng), random_spd(5, rng));
  CHECK(frechet_distance(a, a) < 1e-10);
  CHECK_THROWS_AS(frechet_distance(a, stats(Vec::Zero(5), -Mat::Identity(5, 5))), Error);
}

TEST_CASE("frechet matches an independent eigen oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const GaussianStats a = stats(gaussian(5, 1, rng), random_spd(5, rng));
    const GaussianStats b = stats(gaussian(5, 1, rng), random_spd(5, rng));
    const double d = frechet_distance(a, b), o = frechet_oracle(a, b);
    CHECK(std::abs(d - o) <= 1e-8 * std::abs(o));
    CHECK(std::abs(d - frechet_distance(b, a)) <= 1e-10 * std::abs(d));
    CHECK(d >= 0);
  }
}

TEST_CASE("fid sanity") {
  const ClassifierModel c = ClassifierModel::create(toy_classifier_arch(), 8);
  std::mt19937_64 rng(9);
  // self-FID of two halves of one distribution shrinks with n
  auto half_fid = [&](int n) {
    const Mat x = uniform(2 * n, 6, rng);
    return frechet_distance(feature_stats(c, x.topRows(n)), feature_stats(c, x.bottomRows(n)));
  };
  const double small = half_fid(100), large = half_fid(4000);
  CHECK(small > 0);
  CHECK(large > 0);
  CHECK(large < small);

  const VaeModel m = VaeModel::create(toy_vae_arch(), 10);
  const Mat real = uniform(300, 6, rng);
  const double f = fid(m, c, real, 200, 11);
  CHECK(f == fid(m, c, gaussian_stats(features(c, real.topRows(200))), 200, 11));
  CHECK(f >= 0);
  CHECK_THROWS_AS(fid(m, c, real, 3, 11), Error);
}

TEST_CASE("digit histogram") {
  const VaeModel m = VaeModel::create(toy_vae_arch(), 12);
  ClassifierModel c = ClassifierModel::zeros(toy_classifier_arch());
  c.params.tensor(c.params.layout().index_of("classes.b"))(0, 2) = 5.0;
  const std::vector<double> h = digit_histogram(m, c, 100, 13);
  CHECK(h == std::vector<double>{0, 0, 1});
  const std::vector<double> r = digit_histogram(m, ClassifierModel::create(toy_classifier_arch(), 14), 333, 13);
  double sum = 0;
  for (double v : r) sum += v;
  CHECK(std::abs(sum - 1) < 1e-12);
}

TEST_CASE("speed up") {
  CHECK(speed_up(3.094, 0.014) == doctest::Approx(221.0).epsilon(1e-3));
  CHECK(speed_up(2, 2) == 1);
  CHECK(speed_up(10, 5) == 2);
}
