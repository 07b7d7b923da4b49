#pragma once

#include "uno/models.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace uno {

// Hard-label cut on the retain probability.
inline constexpr double kForgetCut = 0.5;

struct StepRecord {
  int step = 0;  // 1-based
  double forget_fraction = 0;
  double cum_update_time_s = 0;
  double retain_loss = 0;
  std::string extra_loss_terms;  // "name=value;..." or empty
};

struct RunRecord {
  std::string run_id;
  std::string algorithm;
  std::uint64_t seed = 0;
  double initial_forget_fraction = 0;
  std::vector<StepRecord> steps;
  bool failed = false;
  std::string failure;
  double fid_before = std::numeric_limits<double>::quiet_NaN();
  double fid_after = std::numeric_limits<double>::quiet_NaN();
  double fid_at_crossing = std::numeric_limits<double>::quiet_NaN();
};

// Fraction of entries below kForgetCut.
double forget_fraction(const Mat& retain_probs);
double forget_fraction(const VaeModel& model, const ClassifierModel& classifier, const NoiseBatch& noise);
double forget_fraction(const VaeModel& model, const ClassifierModel& classifier, int n_monitor,
                       std::uint64_t seed);

// First step whose forget fraction is below threshold; nullopt = not reached.
std::optional<int> steps_to_unlearn(const RunRecord& record, double threshold = 0.02);
std::optional<double> time_to_unlearn(const RunRecord& record, double threshold = 0.02);

struct GaussianStats {
  Vec mean;
  Mat cov;
  Eigen::Index n = 0;
};

// Sample mean and unbiased covariance of the rows. Throws InsufficientSamples.
GaussianStats gaussian_stats(const Mat& features);

// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2) via symmetric
// eigendecompositions, negative eigenvalues clamped at 0. Throws
// NonPsdCovariance when an eigenvalue is below -1e-6 * trace.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

GaussianStats feature_stats(const ClassifierModel& classifier, const Mat& images);

// Frechet distance between classifier features of n_fid generated samples and
// the given real-image statistics.
double fid(const VaeModel& model, const ClassifierModel& classifier, const GaussianStats& real, int n_fid,
           std::uint64_t seed);
double fid(const VaeModel& model, const ClassifierModel& classifier, const Mat& real_images, int n_fid,
           std::uint64_t seed);

// Normalized predicted-class frequencies over n_samples generated images.
std::vector<double> digit_histogram(const VaeModel& model, const ClassifierModel& classifier, int n_samples,
                                    std::uint64_t seed);

double speed_up(double time_base, double time_hat);

}  // namespace uno
