#include "uno/metrics.hpp"

#include "uno/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace uno {

double forget_fraction(const Mat& retain_probs) {
  if (retain_probs.size() == 0) throw Error(ErrorCode::InsufficientSamples, "no probabilities to count");
  const Eigen::Index below = (retain_probs.array() < kForgetCut).count();
  return static_cast<double>(below) / static_cast<double>(retain_probs.size());
}

double forget_fraction(const VaeModel& model, const ClassifierModel& classifier, const NoiseBatch& noise) {
  return forget_fraction(classify_prob(classifier, generate(model, noise)));
}

double forget_fraction(const VaeModel& model, const ClassifierModel& classifier, int n_monitor,
                       std::uint64_t seed) {
  return forget_fraction(model, classifier, NoiseBatch::draw(n_monitor, model.arch.latent_dim, seed));
}

std::optional<int> steps_to_unlearn(const RunRecord& record, double threshold) {
  for (const StepRecord& s : record.steps)
    if (s.forget_fraction < threshold) return s.step;
  return std::nullopt;
}

std::optional<double> time_to_unlearn(const RunRecord& record, double threshold) {
  for (const StepRecord& s : record.steps)
    if (s.forget_fraction < threshold) return s.cum_update_time_s;
  return std::nullopt;
}

GaussianStats gaussian_stats(const Mat& features) {
  const Eigen::Index n = features.rows();
  if (n < 2) throw Error(ErrorCode::InsufficientSamples, "need at least two samples, got " + std::to_string(n));
  GaussianStats s;
  s.n = n;
  s.mean = features.colwise().mean().transpose();
  const Mat centered = features.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

namespace {

// Eigenvalues/vectors of a symmetric PSD matrix with small negatives clamped.
Eigen::SelfAdjointEigenSolver<Mat> psd_eigen(const Mat& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NonPsdCovariance, std::string(what) + ": eigensolver failed");
  const double tol = 1e-6 * std::max(std::abs(m.trace()), 1e-300);
  if (es.eigenvalues().size() > 0 && es.eigenvalues().minCoeff() < -tol)
    throw Error(ErrorCode::NonPsdCovariance,
                std::string(what) + ": eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
  return es;
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows())
    throw Error(ErrorCode::LayoutMismatch, "feature dimensions differ");
  const auto ea = psd_eigen(a.cov, "first covariance");
  psd_eigen(b.cov, "second covariance");
  const Vec root_vals = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Mat root_a = ea.eigenvectors() * root_vals.asDiagonal() * ea.eigenvectors().transpose();
  Mat inner = root_a * b.cov * root_a;
  inner = 0.5 * (inner + inner.transpose());
  const auto ei = psd_eigen(inner, "covariance product");
  const double cross = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(d, 0.0);
}

GaussianStats feature_stats(const ClassifierModel& classifier, const Mat& images) {
  return gaussian_stats(features(classifier, images));
}

double fid(const VaeModel& model, const ClassifierModel& classifier, const GaussianStats& real, int n_fid,
           std::uint64_t seed) {
  if (n_fid < classifier.arch.feature_dim() + 1)
    throw Error(ErrorCode::InsufficientSamples, "n_fid must exceed the feature dimension");
  const NoiseBatch noise = NoiseBatch::draw(n_fid, model.arch.latent_dim, seed);
  return frechet_distance(feature_stats(classifier, generate(model, noise)), real);
}

double fid(const VaeModel& model, const ClassifierModel& classifier, const Mat& real_images, int n_fid,
           std::uint64_t seed) {
  const Eigen::Index take = std::min<Eigen::Index>(n_fid, real_images.rows());
  return fid(model, classifier, feature_stats(classifier, real_images.topRows(take)), n_fid, seed);
}

std::vector<double> digit_histogram(const VaeModel& model, const ClassifierModel& classifier, int n_samples,
                                    std::uint64_t seed) {
  const NoiseBatch noise = NoiseBatch::draw(n_samples, model.arch.latent_dim, seed);
  const std::vector<int> cls = predict_class(classifier, generate(model, noise));
  std::vector<double> hist(static_cast<std::size_t>(classifier.arch.num_classes), 0.0);
  for (int c : cls) hist[static_cast<std::size_t>(c)] += 1.0;
  for (double& h : hist) h /= static_cast<double>(cls.size());
  return hist;
}

double speed_up(double time_base, double time_hat) {
  if (!(time_base > 0) || !(time_hat > 0)) throw Error(ErrorCode::InvalidConfig, "speed-up needs positive times");
  return time_base / time_hat;
}

}  // namespace uno
