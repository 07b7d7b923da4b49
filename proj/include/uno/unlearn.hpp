#pragma once

#include <optional>

#include "uno/data.hpp"
#include "uno/losses.hpp"
#include "uno/metrics.hpp"

#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <utility>

namespace uno {

enum class Algorithm { A, AD, SA, S, UNO, UNOS, SHat, UNOHat, UNOSHat, H };

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::A,    Algorithm::AD,     Algorithm::SA,      Algorithm::S,
                                               Algorithm::UNO,  Algorithm::UNOS,   Algorithm::SHat,    Algorithm::UNOHat,
                                               Algorithm::UNOSHat, Algorithm::H};

// "A", "A-D", "SA", "S", "UNO", "UNO-S", "S-hat", "UNO-hat", "UNO-S-hat", "H"
std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);
// Needs generated samples and the classifier inside the update.
bool uses_classifier(Algorithm a);

struct UnlearnConfig {
  double eta = 1e-3;
  int K = 530;
  int B = 128;
  Algorithm algorithm = Algorithm::UNO;
  LossConfig loss;
  std::uint64_t seed = 0;
  double threshold = 0.02;
  int n_monitor = 500;
  // end the run at the first step whose forget fraction is below threshold
  bool stop_at_threshold = false;

  void validate() const;  // throws InvalidConfig
};

// Everything random that one step consumes.
struct StepInputs {
  Mat retain;       // B x input_dim
  Mat forget;       // B x input_dim
  Mat eps_retain;   // B x d_z reparameterization noise
  Mat eps_forget;
  Mat z_generate;   // N_g x d_z, empty when the rule has no classifier term
};

struct GradPair {
  GradVector g_r;
  GradVector g_f;
  double retain_loss = 0;
  double forget_loss = 0;
  double kl = std::numeric_limits<double>::quiet_NaN();  // d_KL when hat is set
  double vae_retain_loss = 0;  // retain_loss without the classifier term
};

// Mini-batch mean gradients of the training loss on retain/forget batches.
// With hat set, beta_h * grad d_KL is added to both. Throws NonFiniteGradient.
GradPair compute_gradients(const VaeModel& model, const StepInputs& in, const ClassifierModel* classifier,
                           const LossConfig& config, bool hat);

ParamVector step_ascent(const ParamVector& theta, const GradVector& g_f, double eta);
// Ascent on odd k, descent on even k.
ParamVector step_ascent_descent(const ParamVector& theta, const GradVector& g_r, const GradVector& g_f, double eta,
                                int k);
// a - (a.b / |b|^2) b; a unchanged when |b| < kDegenerateNorm.
GradVector project_out(const GradVector& a, const GradVector& b);
ParamVector step_surgery_ascent(const ParamVector& theta, const GradVector& g_r, const GradVector& g_f, double eta);
ParamVector step_surgery(const ParamVector& theta, const GradVector& g_r, const GradVector& g_f, double eta);

// grad of L_UNO (hat: L_UNO-hat) with the values it was built from.
struct UnoGradient {
  GradVector g;
  double loss = 0;         // L_UNO itself
  double retain_loss = 0;  // includes beta_h d_KL when hat is set
  double cos2 = 0;
  double kl = std::numeric_limits<double>::quiet_NaN();
  double vae_retain_loss = 0;
};

UnoGradient uno_gradient(const VaeModel& model, const StepInputs& in, const ClassifierModel* classifier,
                         const LossConfig& config, bool hat);

// grad of mean retain loss + beta_h d_KL.
UnoGradient h_gradient(const VaeModel& model, const StepInputs& in, const ClassifierModel& classifier,
                       const LossConfig& config);

struct UnoStep {
  ParamVector theta;
  double retain_loss = 0;
  double cos2 = 0;
  double kl = std::numeric_limits<double>::quiet_NaN();
  double vae_retain_loss = 0;
};

// theta - eta grad L_UNO (or L_UNO-hat). Throws NonFiniteGradient.
UnoStep step_uno(const VaeModel& model, const StepInputs& in, const ClassifierModel* classifier,
                 const LossConfig& config, double eta, bool hat);

struct HStep {
  ParamVector theta;
  double retain_loss = 0;
  double kl = 0;
  double vae_retain_loss = 0;
};

HStep step_h(const VaeModel& model, const StepInputs& in, const ClassifierModel& classifier,
             const LossConfig& config, double eta);

// Retain/forget image sets for a run.
struct UnlearnData {
  const Mat* retain = nullptr;
  const Mat* forget = nullptr;
};

// Deterministic source of StepInputs for one run.
class StepSampler {
 public:
  StepSampler(const UnlearnData& data, const UnlearnConfig& config, int latent_dim);
  StepInputs next(bool with_generation);

 private:
  Mat normal(Eigen::Index rows, std::mt19937_64& rng);

  BatchStream retain_;
  BatchStream forget_;
  std::mt19937_64 rng_;
  // separate stream so rules with and without generation see the same batches and eps
  std::mt19937_64 gen_rng_;
  std::size_t batch_;
  int n_generate_;
  int latent_dim_;
};

struct RunResult {
  RunRecord record;
  VaeModel model;  // final parameters (last finite state if the run failed)
  std::optional<VaeModel> at_crossing;  // parameters right after the first sub-threshold step
};

// Runs K steps of the configured rule. Monitoring uses one fixed noise batch of
// n_monitor draws per run; its cost is excluded from the timer.
RunResult run(const UnlearnConfig& config, const VaeModel& model, const ClassifierModel& classifier,
              const UnlearnData& data, const std::string& run_id);

void write_csv_header(std::ostream& out);
void write_csv_rows(std::ostream& out, const RunRecord& record);

}  // namespace uno
