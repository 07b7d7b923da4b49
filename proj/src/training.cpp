#include "uno/training.hpp"

#include "uno/error.hpp"
#include "uno/gradcore.hpp"
#include "uno/losses.hpp"
#include "uno/seed.hpp"

#include <cmath>
#include <random>

namespace uno {

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::step(ParamVector& theta, const GradVector& g) {
  if (m_.size() == 0) {
    m_ = Vec::Zero(theta.values().size());
    v_ = Vec::Zero(theta.values().size());
  }
  ++t_;
  m_ = b1_ * m_ + (1 - b1_) * g.values();
  v_ = b2_ * v_ + (1 - b2_) * g.values().cwiseAbs2();
  const double c1 = 1 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1 - std::pow(b2_, static_cast<double>(t_));
  theta.values().array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

namespace {

Mat standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

double checked(double loss) {
  if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "training loss became " + std::to_string(loss));
  return loss;
}

}  // namespace

TrainReport train_vae(VaeModel& model, const Mat& images, const TrainConfig& config, const EpochCallback& on_epoch) {
  BatchStream stream(images, derive_seed(config.seed, "vae-batches"));
  std::mt19937_64 rng(derive_seed(config.seed, "vae-noise"));
  Adam adam(config.lr);
  const std::size_t n = static_cast<std::size_t>(images.rows());
  const std::size_t batch = std::min(n, static_cast<std::size_t>(config.batch_size));
  TrainReport report;
  for (int ep = 0; ep < config.epochs; ++ep) {
    double total = 0;
    std::size_t seen = 0;
    while (seen < n) {
      const Mat x = stream.next_batch(batch);
      const Mat eps = standard_normal(x.rows(), model.arch.latent_dim, rng);
      DiffContext ctx(model.params);
      const ad::Var loss = vae_objective(model, x, eps)(ctx.params());
      total += checked(loss.item()) * static_cast<double>(x.rows());
      adam.step(model.params, ctx.gradient_vector(loss));
      seen += static_cast<std::size_t>(x.rows());
    }
    report.final_loss = total / static_cast<double>(n);
    if (on_epoch) on_epoch(ep + 1, report.final_loss);
  }
  return report;
}

TrainReport train_classifier(ClassifierModel& classifier, const LabeledDataset& data,
                             const std::set<int>& forget_labels, const TrainConfig& config,
                             const EpochCallback& on_epoch) {
  const ClassifierArch& arch = classifier.arch;
  BatchStream stream(data.images, derive_seed(config.seed, "classifier-batches"));
  Adam adam(config.lr);
  const std::size_t n = data.size();
  const std::size_t batch = std::min(n, static_cast<std::size_t>(config.batch_size));
  TrainReport report;
  for (int ep = 0; ep < config.epochs; ++ep) {
    double total = 0;
    std::size_t seen = 0;
    while (seen < n) {
      const std::vector<std::size_t> idx = stream.next_indices(batch);
      const Mat x = select_rows(data.images, idx);
      const Eigen::Index b = x.rows();
      Mat retain(b, 1), onehot = Mat::Zero(b, arch.num_classes);
      for (Eigen::Index i = 0; i < b; ++i) {
        const int label = data.labels[idx[static_cast<std::size_t>(i)]];
        retain(i, 0) = forget_labels.count(label) ? 0.0 : 1.0;
        onehot(i, label) = 1.0;
      }
      DiffContext ctx(classifier.params);
      const auto p = ctx.params();
      const ad::Var f = classifier_features_with<ad::Var>(arch, p, ad::constant(x));
      const ad::Var logit = retain_logit_from_features<ad::Var>(arch, p, f);
      // softplus(l) - y l is the stable logistic loss
      const ad::Var bce = ad::mean(ad::sub(ad::softplus(logit), ad::mul(logit, ad::constant(retain))));
      const ad::Var ce = ad::scale(
          ad::sum(ad::mul(ad::log_softmax_rows(class_logits_from_features<ad::Var>(arch, p, f)), ad::constant(onehot))),
          -1.0 / static_cast<double>(b));
      const ad::Var loss = bce + ce;
      total += checked(loss.item()) * static_cast<double>(b);
      adam.step(classifier.params, ctx.gradient_vector(loss));
      seen += idx.size();
    }
    report.final_loss = total / static_cast<double>(n);
    if (on_epoch) on_epoch(ep + 1, report.final_loss);
  }
  return report;
}

ClassifierAccuracy evaluate_classifier(const ClassifierModel& classifier, const LabeledDataset& data,
                                       const std::set<int>& forget_labels) {
  if (data.size() == 0) throw Error(ErrorCode::InsufficientSamples, "empty evaluation set");
  const Mat prob = classify_prob(classifier, data.images);
  const std::vector<int> cls = predict_class(classifier, data.images);
  std::size_t bin_ok = 0, cls_ok = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool is_retain = !forget_labels.count(data.labels[i]);
    bin_ok += ((prob(static_cast<Eigen::Index>(i), 0) >= 0.5) == is_retain);
    cls_ok += (cls[i] == data.labels[i]);
  }
  const double n = static_cast<double>(data.size());
  return {static_cast<double>(bin_ok) / n, static_cast<double>(cls_ok) / n};
}

}  // namespace uno
