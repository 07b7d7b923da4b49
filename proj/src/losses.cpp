#include "uno/losses.hpp"

#include "uno/error.hpp"

#include <cmath>

namespace uno {

void LossConfig::validate() const {
  if (!(alpha > 0 && alpha < 0.5)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 0.5)");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch size must be positive");
  if (n_generate < 1) throw Error(ErrorCode::InvalidConfig, "n_generate must be positive");
  if (!(beta_o_times_B >= 0) || !(beta_h_times_B >= 0))
    throw Error(ErrorCode::InvalidConfig, "regularizer weights must be nonnegative");
}

namespace {

double finite_loss(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteLoss, "loss evaluated to " + std::to_string(v));
  return v;
}

}  // namespace

double vae_loss(const VaeModel& model, const Mat& x, const Mat& eps) {
  const std::vector<Mat> p = model.params.tensors();
  return finite_loss(ad::item(vae_loss_with<Mat>(model.arch, p, model.decoder_begin(), x, eps)));
}

double vae_loss_bernoulli(const VaeModel& model, const Mat& x, const Mat& eps) {
  if (model.arch.head != OutputHead::Bernoulli)
    throw Error(ErrorCode::InvalidConfig, "model does not have a Bernoulli head");
  return vae_loss(model, x, eps);
}

double vae_loss_gaussian(const VaeModel& model, const Mat& x, const Mat& eps) {
  if (model.arch.head != OutputHead::Gaussian)
    throw Error(ErrorCode::InvalidConfig, "model does not have a Gaussian head");
  return vae_loss(model, x, eps);
}

double cosine_sq(const GradVector& g_r, const GradVector& g_f) {
  const double nr = norm(g_r), nf = norm(g_f);
  if (nr < kDegenerateNorm || nf < kDegenerateNorm) return 0.0;
  const double c = dot(g_r, g_f) / (nr * nf);
  return c * c;
}

double bernoulli_kl(double p_r, double alpha) { return ad::item(bernoulli_kl<Mat>(Mat::Constant(1, 1, p_r), alpha)); }

double retain_probability(const VaeModel& model, const ClassifierModel& classifier, const NoiseBatch& noise) {
  const std::vector<Mat> vae = model.params.tensors();
  const std::vector<Mat> frozen = classifier.params.tensors();
  const double p = ad::item(retain_probability_with<Mat>(model.arch, vae, model.decoder_begin(), classifier.arch, frozen, noise.z));
  if (!std::isfinite(p)) throw Error(ErrorCode::NonFiniteActivation, "retain probability");
  return p;
}

Objective vae_objective(const VaeModel& model, const Mat& x, const Mat& eps) {
  return [arch = model.arch, begin = model.decoder_begin(), &x, &eps](std::span<const ad::Var> p) {
    return vae_loss_with<ad::Var>(arch, p, begin, x, eps);
  };
}

Objective histogram_objective(const VaeModel& model, const ClassifierModel& classifier, const Mat& z,
                              const LossConfig& config) {
  auto frozen = std::make_shared<std::vector<ad::Var>>(frozen_tensors(classifier.params));
  return [arch = model.arch, begin = model.decoder_begin(), carch = classifier.arch, frozen, &z,
          beta = config.beta_h(), alpha = config.alpha](std::span<const ad::Var> p) {
    const ad::Var p_r = retain_probability_with<ad::Var>(arch, p, begin, carch, *frozen, z);
    return ad::scale(bernoulli_kl<ad::Var>(p_r, alpha), beta);
  };
}

ad::Var loss_uno(const ad::Var& retain_loss, std::span<const ad::Var> g_r, std::span<const ad::Var> g_f,
                 const LossConfig& config) {
  VarList forget(g_f.begin(), g_f.end());
  if (config.stop_gradient_forget)
    for (ad::Var& t : forget) t = ad::constant(t.value());
  return ad::add(retain_loss, ad::scale(cosine_sq(g_r, forget), config.beta_o()));
}

}  // namespace uno
