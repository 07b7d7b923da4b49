#include "uno/models.hpp"

#include "uno/error.hpp"

#include <random>

namespace uno {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Softplus: return "softplus";
  }
  return "tanh";
}

std::string to_string(OutputHead h) { return h == OutputHead::Bernoulli ? "bernoulli" : "gaussian"; }

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "softplus") return Activation::Softplus;
  throw Error(ErrorCode::InvalidConfig, "unknown activation '" + s + "'");
}

OutputHead parse_output_head(const std::string& s) {
  if (s == "bernoulli") return OutputHead::Bernoulli;
  if (s == "gaussian") return OutputHead::Gaussian;
  throw Error(ErrorCode::InvalidConfig, "unknown output head '" + s + "'");
}

namespace {

void add_dense(Layout& layout, const std::string& prefix, int in, int out) {
  layout.add(prefix + ".w", in, out).add(prefix + ".b", 1, out);
}

void check_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::NonFiniteActivation, what);
}

}  // namespace

LayoutPtr make_vae_layout(const VaeArch& arch) {
  if (arch.input_dim <= 0 || arch.latent_dim <= 0)
    throw Error(ErrorCode::InvalidConfig, "VAE dimensions must be positive");
  Layout layout;
  int width = arch.input_dim;
  for (std::size_t i = 0; i < arch.encoder_hidden.size(); ++i) {
    add_dense(layout, "enc.l" + std::to_string(i), width, arch.encoder_hidden[i]);
    width = arch.encoder_hidden[i];
  }
  add_dense(layout, "enc.head", width, 2 * arch.latent_dim);
  width = arch.latent_dim;
  for (std::size_t i = 0; i < arch.decoder_hidden.size(); ++i) {
    add_dense(layout, "dec.l" + std::to_string(i), width, arch.decoder_hidden[i]);
    width = arch.decoder_hidden[i];
  }
  add_dense(layout, "dec.out", width, arch.input_dim);
  return std::make_shared<const Layout>(std::move(layout));
}

LayoutPtr make_classifier_layout(const ClassifierArch& arch) {
  if (arch.hidden.empty()) throw Error(ErrorCode::InvalidConfig, "classifier needs a feature layer");
  Layout layout;
  int width = arch.input_dim;
  for (std::size_t i = 0; i < arch.hidden.size(); ++i) {
    add_dense(layout, "trunk.l" + std::to_string(i), width, arch.hidden[i]);
    width = arch.hidden[i];
  }
  add_dense(layout, "retain", width, 1);
  add_dense(layout, "classes", width, arch.num_classes);
  return std::make_shared<const Layout>(std::move(layout));
}

ParamVector init_params(const LayoutPtr& layout, std::uint64_t seed) {
  ParamVector p(layout);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < layout->count(); ++i) {
    const TensorSpec& t = (*layout)[i];
    if (t.rows == 1) continue;  // bias
    const double s = 1.0 / std::sqrt(static_cast<double>(t.rows));
    auto w = p.tensor(i);
    for (Eigen::Index c = 0; c < t.cols; ++c)
      for (Eigen::Index r = 0; r < t.rows; ++r) w(r, c) = s * normal(rng);
  }
  return p;
}

VaeModel VaeModel::create(const VaeArch& arch, std::uint64_t seed) {
  return VaeModel{arch, init_params(make_vae_layout(arch), seed)};
}

VaeModel VaeModel::zeros(const VaeArch& arch) { return VaeModel{arch, ParamVector(make_vae_layout(arch))}; }

std::size_t VaeModel::decoder_begin() const { return 2 * (arch.encoder_hidden.size() + 1); }

ClassifierModel ClassifierModel::create(const ClassifierArch& arch, std::uint64_t seed) {
  return ClassifierModel{arch, init_params(make_classifier_layout(arch), seed)};
}

ClassifierModel ClassifierModel::zeros(const ClassifierArch& arch) {
  return ClassifierModel{arch, ParamVector(make_classifier_layout(arch))};
}

NoiseBatch NoiseBatch::draw(Eigen::Index n, Eigen::Index latent_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat z(n, latent_dim);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < latent_dim; ++c) z(r, c) = normal(rng);
  return NoiseBatch{std::move(z), seed};
}

Posterior<Mat> encode(const VaeModel& model, const Mat& x) {
  const std::vector<Mat> p = model.params.tensors();
  Posterior<Mat> post = encode_with<Mat>(model.arch, p, x);
  check_finite(post.mu, "encoder mean");
  check_finite(post.sigma, "encoder scale");
  return post;
}

Mat decode(const VaeModel& model, const Mat& z) {
  if (z.cols() != model.arch.latent_dim)
    throw Error(ErrorCode::InvalidConfig, "latent width does not match the decoder");
  const std::vector<Mat> p = model.params.tensors();
  Mat out = decode_with<Mat>(model.arch, p, model.decoder_begin(), z);
  check_finite(out, "decoder output");
  return out;
}

Mat generate(const VaeModel& model, const NoiseBatch& noise) { return decode(model, noise.z); }

Mat classify_prob(const ClassifierModel& classifier, const Mat& x) {
  const std::vector<Mat> p = classifier.params.tensors();
  Mat out = classify_prob_with<Mat>(classifier.arch, p, x);
  check_finite(out, "classifier probability");
  return out;
}

Mat features(const ClassifierModel& classifier, const Mat& x) {
  const std::vector<Mat> p = classifier.params.tensors();
  Mat out = classifier_features_with<Mat>(classifier.arch, p, x);
  check_finite(out, "classifier features");
  return out;
}

Mat class_logits(const ClassifierModel& classifier, const Mat& x) {
  const std::vector<Mat> p = classifier.params.tensors();
  Mat out = class_logits_from_features<Mat>(classifier.arch, p,
                                            classifier_features_with<Mat>(classifier.arch, p, x));
  check_finite(out, "classifier logits");
  return out;
}

std::vector<int> predict_class(const ClassifierModel& classifier, const Mat& x) {
  const Mat logits = class_logits(classifier, x);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

std::vector<ad::Var> frozen_tensors(const ParamVector& params) {
  std::vector<ad::Var> out;
  out.reserve(params.layout().count());
  for (std::size_t i = 0; i < params.layout().count(); ++i) out.push_back(ad::constant(params.tensor(i)));
  return out;
}

}  // namespace uno
