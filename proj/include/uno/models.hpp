#pragma once

#include "uno/ad.hpp"
#include "uno/params.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace uno {

enum class Activation { Tanh, Relu, Softplus };
enum class OutputHead { Bernoulli, Gaussian };

std::string to_string(Activation a);
std::string to_string(OutputHead h);
Activation parse_activation(const std::string& s);
OutputHead parse_output_head(const std::string& s);

struct VaeArch {
  int input_dim = 784;
  int latent_dim = 2;
  std::vector<int> encoder_hidden{64};
  std::vector<int> decoder_hidden{64};
  Activation activation = Activation::Tanh;
  OutputHead head = OutputHead::Bernoulli;

  bool operator==(const VaeArch&) const = default;
};

struct ClassifierArch {
  int input_dim = 784;
  std::vector<int> hidden{64, 32};  // last entry is the feature width F
  Activation activation = Activation::Tanh;
  int num_classes = 10;

  int feature_dim() const { return hidden.back(); }
  bool operator==(const ClassifierArch&) const = default;
};

LayoutPtr make_vae_layout(const VaeArch& arch);
LayoutPtr make_classifier_layout(const ClassifierArch& arch);

// Weights ~ N(0, 1/fan_in), biases zero.
ParamVector init_params(const LayoutPtr& layout, std::uint64_t seed);

struct VaeModel {
  VaeArch arch;
  ParamVector params;

  static VaeModel create(const VaeArch& arch, std::uint64_t seed);
  static VaeModel zeros(const VaeArch& arch);
  // Index of the first decoder tensor in the layout.
  std::size_t decoder_begin() const;
};

// Frozen discriminator: binary retain-probability head and a multiclass head
// over a shared feature trunk.
struct ClassifierModel {
  ClassifierArch arch;
  ParamVector params;

  static ClassifierModel create(const ClassifierArch& arch, std::uint64_t seed);
  static ClassifierModel zeros(const ClassifierArch& arch);
};

struct NoiseBatch {
  Mat z;  // n x d_z standard normal draws
  std::uint64_t seed = 0;

  static NoiseBatch draw(Eigen::Index n, Eigen::Index latent_dim, std::uint64_t seed);
};

template <class T>
struct Posterior {
  T mu;
  T sigma;
  T log_sigma;
};

// ---- templated forward passes ------------------------------------------

template <class T>
T activate(Activation a, const T& x) {
  switch (a) {
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Relu: return ad::relu(x);
    case Activation::Softplus: return ad::softplus(x);
  }
  return x;
}

template <class T>
T dense(const T& x, const T& weight, const T& bias) {
  return ad::add_row(ad::matmul(x, weight), bias);
}

// Runs hidden layers starting at tensor index `first`; advances `first`.
template <class T>
T mlp_trunk(std::span<const T> p, std::size_t& first, std::size_t depth, Activation act, T x) {
  for (std::size_t i = 0; i < depth; ++i, first += 2) x = activate(act, dense(x, p[first], p[first + 1]));
  return x;
}

template <class T>
Posterior<T> encode_with(const VaeArch& arch, std::span<const T> p, const T& x) {
  std::size_t k = 0;
  T h = mlp_trunk(p, k, arch.encoder_hidden.size(), arch.activation, x);
  T out = dense(h, p[k], p[k + 1]);
  T mu = ad::cols(out, 0, arch.latent_dim);
  T log_sigma = ad::cols(out, arch.latent_dim, arch.latent_dim);
  T sigma = ad::exp(log_sigma);
  return {std::move(mu), std::move(sigma), std::move(log_sigma)};
}

// `p` holds the full VAE tensor list; decoder tensors start at `begin`.
template <class T>
T decode_with(const VaeArch& arch, std::span<const T> p, std::size_t begin, const T& z) {
  std::size_t k = begin;
  T h = mlp_trunk(p, k, arch.decoder_hidden.size(), arch.activation, z);
  T out = dense(h, p[k], p[k + 1]);
  return arch.head == OutputHead::Bernoulli ? ad::sigmoid(out) : out;
}

template <class T>
T reparameterize(const T& mu, const T& sigma, const T& eps) {
  return ad::add(mu, ad::mul(sigma, eps));
}

template <class T>
T classifier_features_with(const ClassifierArch& arch, std::span<const T> p, const T& x) {
  std::size_t k = 0;
  return mlp_trunk(p, k, arch.hidden.size(), arch.activation, x);
}

// Retain logit (n x 1) and class logits (n x C) from features.
template <class T>
T retain_logit_from_features(const ClassifierArch& arch, std::span<const T> p, const T& f) {
  const std::size_t k = 2 * arch.hidden.size();
  return dense(f, p[k], p[k + 1]);
}

template <class T>
T class_logits_from_features(const ClassifierArch& arch, std::span<const T> p, const T& f) {
  const std::size_t k = 2 * arch.hidden.size() + 2;
  return dense(f, p[k], p[k + 1]);
}

template <class T>
T classify_prob_with(const ClassifierArch& arch, std::span<const T> p, const T& x) {
  return ad::sigmoid(retain_logit_from_features(arch, p, classifier_features_with(arch, p, x)));
}

// ---- plain evaluation ----------------------------------------------------

// Throw NonFiniteActivation on NaN/Inf outputs.
Posterior<Mat> encode(const VaeModel& model, const Mat& x);
Mat decode(const VaeModel& model, const Mat& z);
Mat generate(const VaeModel& model, const NoiseBatch& noise);

// Per-sample retain probability (n x 1).
Mat classify_prob(const ClassifierModel& classifier, const Mat& x);
Mat features(const ClassifierModel& classifier, const Mat& x);
Mat class_logits(const ClassifierModel& classifier, const Mat& x);
std::vector<int> predict_class(const ClassifierModel& classifier, const Mat& x);

// Frozen classifier tensors as graph constants.
std::vector<ad::Var> frozen_tensors(const ParamVector& params);

}  // namespace uno
