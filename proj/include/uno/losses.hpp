#pragma once

#include "uno/gradcore.hpp"
#include "uno/models.hpp"

namespace uno {

// Clamp applied to Bernoulli decoder outputs before taking logs.
inline constexpr double kPixelClamp = 1e-7;
// Clamp applied to the retain probability inside the KL term.
inline constexpr double kProbClamp = 1e-12;

struct LossConfig {
  // Products B*beta, stored the way the hyperparameter table states them.
  double beta_o_times_B = 1e3;
  double beta_h_times_B = 1e3;
  double alpha = 1e-8;
  int batch_size = 128;
  int n_generate = 128;
  // Treat g_f as a constant inside the orthogonality term (ablation only).
  bool stop_gradient_forget = false;

  double beta_o() const { return beta_o_times_B / batch_size; }
  double beta_h() const { return beta_h_times_B / batch_size; }
  void validate() const;  // throws InvalidConfig
};

// Mean over the batch of 1/2 sum(mu^2 + sigma^2 - log sigma^2 - 1).
template <class T>
T kl_standard_normal(const Posterior<T>& post) {
  const Eigen::Index n = post.mu.rows();
  T terms = ad::add(ad::square(post.mu), ad::square(post.sigma));
  terms = ad::sub(terms, ad::scale(post.log_sigma, 2.0));
  return ad::scale(ad::add_scalar(ad::sum(terms), -static_cast<double>(post.mu.rows() * post.mu.cols())), 0.5 / n);
}

// Sum over pixels of the Bernoulli negative log likelihood, averaged over rows.
template <class T>
T bernoulli_nll(const T& xbar, const Mat& x) {
  const T p = ad::clamp(xbar, kPixelClamp, 1.0 - kPixelClamp);
  const T ll = ad::add(ad::mul(ad::lift<T>(x), ad::log(p)),
                       ad::mul(ad::lift<T>(Mat(1.0 - x.array())), ad::log(ad::add_scalar(ad::neg(p), 1.0))));
  return ad::scale(ad::sum(ll), -1.0 / x.rows());
}

template <class T>
T squared_error(const T& xbar, const Mat& x) {
  return ad::scale(ad::sum(ad::square(ad::sub(xbar, ad::lift<T>(x)))), 1.0 / x.rows());
}

// VAE training loss on batch x with reparameterization noise eps (n x d_z).
// The reconstruction term follows the model's output head.
template <class T>
T vae_loss_with(const VaeArch& arch, std::span<const T> p, std::size_t decoder_begin, const Mat& x,
                const Mat& eps) {
  const Posterior<T> post = encode_with<T>(arch, p, ad::lift<T>(x));
  const T z = reparameterize<T>(post.mu, post.sigma, ad::lift<T>(eps));
  const T xbar = decode_with<T>(arch, p, decoder_begin, z);
  const T recon = arch.head == OutputHead::Bernoulli ? bernoulli_nll<T>(xbar, x) : squared_error<T>(xbar, x);
  return ad::add(recon, kl_standard_normal<T>(post));
}

// Plain evaluations; NonFiniteLoss on NaN/Inf. Each requires the matching head.
double vae_loss_bernoulli(const VaeModel& model, const Mat& x, const Mat& eps);
double vae_loss_gaussian(const VaeModel& model, const Mat& x, const Mat& eps);
double vae_loss(const VaeModel& model, const Mat& x, const Mat& eps);

// (a.b / |a||b|)^2, or 0 when either norm is below kDegenerateNorm.
double cosine_sq(const GradVector& g_r, const GradVector& g_f);

double bernoulli_kl(double p_r, double alpha);

template <class T>
T bernoulli_kl(const T& p_r, double alpha) {
  const T p = ad::clamp(p_r, kProbClamp, 1.0 - kProbClamp);
  const T q = ad::add_scalar(ad::neg(p), 1.0);
  return ad::add(ad::mul(p, ad::add_scalar(ad::log(p), -std::log1p(-alpha))),
                 ad::mul(q, ad::add_scalar(ad::log(q), -std::log(alpha))));
}

// Mean classifier retain probability over decoded z (a 1x1 scalar).
template <class T>
T retain_probability_with(const VaeArch& arch, std::span<const T> vae, std::size_t decoder_begin,
                          const ClassifierArch& carch, std::span<const T> frozen, const Mat& z) {
  const T samples = decode_with<T>(arch, vae, decoder_begin, ad::lift<T>(z));
  return ad::mean(classify_prob_with<T>(carch, frozen, samples));
}

double retain_probability(const VaeModel& model, const ClassifierModel& classifier, const NoiseBatch& noise);

// ---- objectives over bound parameters ------------------------------------

Objective vae_objective(const VaeModel& model, const Mat& x, const Mat& eps);

// beta_h * d_KL(p_r) with p_r computed from the decoder at noise z.
Objective histogram_objective(const VaeModel& model, const ClassifierModel& classifier, const Mat& z,
                              const LossConfig& config);

// L_UNO = retain_loss + beta_o * cos^2(g_r, g_f). Gradients must have been
// built with create_graph for the result to carry second-order structure.
ad::Var loss_uno(const ad::Var& retain_loss, std::span<const ad::Var> g_r, std::span<const ad::Var> g_f,
                 const LossConfig& config);

}  // namespace uno
