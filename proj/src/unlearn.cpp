#include "uno/unlearn.hpp"

#include "uno/error.hpp"
#include "uno/seed.hpp"

#include <chrono>
#include <cstdio>

namespace uno {

namespace {

struct AlgoName {
  Algorithm algo;
  const char* name;
};

constexpr AlgoName kNames[] = {{Algorithm::A, "A"},         {Algorithm::AD, "A-D"},         {Algorithm::SA, "SA"},
                               {Algorithm::S, "S"},         {Algorithm::UNO, "UNO"},        {Algorithm::UNOS, "UNO-S"},
                               {Algorithm::SHat, "S-hat"},  {Algorithm::UNOHat, "UNO-hat"}, {Algorithm::UNOSHat, "UNO-S-hat"},
                               {Algorithm::H, "H"}};

}  // namespace

std::string to_string(Algorithm a) {
  for (const auto& n : kNames)
    if (n.algo == a) return n.name;
  return "?";
}

Algorithm parse_algorithm(const std::string& s) {
  for (const auto& n : kNames)
    if (s == n.name) return n.algo;
  throw Error(ErrorCode::InvalidConfig, "unknown algorithm '" + s + "'");
}

bool uses_classifier(Algorithm a) {
  return a == Algorithm::SHat || a == Algorithm::UNOHat || a == Algorithm::UNOSHat || a == Algorithm::H;
}

void UnlearnConfig::validate() const {
  if (!(eta >= 0)) throw Error(ErrorCode::InvalidConfig, "eta must be nonnegative");
  if (K < 1) throw Error(ErrorCode::InvalidConfig, "K must be at least 1");
  if (B < 1) throw Error(ErrorCode::InvalidConfig, "B must be at least 1");
  if (!(threshold > 0 && threshold < 1)) throw Error(ErrorCode::InvalidConfig, "threshold must lie in (0,1)");
  if (n_monitor < 1) throw Error(ErrorCode::InvalidConfig, "n_monitor must be positive");
  loss.validate();
}

// ---- gradients -----------------------------------------------------------

namespace {

// Builds the (possibly hat-augmented) retain and forget losses in ctx.
struct BatchLosses {
  ad::Var retain;
  ad::Var forget;
  double kl = std::numeric_limits<double>::quiet_NaN();
  double vae_retain = 0;  // before any classifier term
};

BatchLosses batch_losses(const DiffContext& ctx, const VaeModel& model, const StepInputs& in,
                         const ClassifierModel* classifier, const LossConfig& config, bool hat, bool need_forget) {
  BatchLosses out;
  out.retain = vae_objective(model, in.retain, in.eps_retain)(ctx.params());
  out.vae_retain = out.retain.item();
  if (need_forget) out.forget = vae_objective(model, in.forget, in.eps_forget)(ctx.params());
  if (hat) {
    if (!classifier) throw Error(ErrorCode::InvalidConfig, "classifier-guided rule without a classifier");
    if (in.z_generate.rows() == 0) throw Error(ErrorCode::InvalidConfig, "no generation noise supplied");
    const VarList frozen = frozen_tensors(classifier->params);
    const ad::Var p_r = retain_probability_with<ad::Var>(model.arch, ctx.params(), model.decoder_begin(),
                                                          classifier->arch, frozen, in.z_generate);
    const ad::Var kl = bernoulli_kl<ad::Var>(p_r, config.alpha);
    const ad::Var d = ad::scale(kl, config.beta_h());
    out.kl = kl.item();
    out.retain = out.retain + d;
    if (need_forget) out.forget = out.forget + d;
  }
  return out;
}

GradVector single_gradient(const VaeModel& model, const Mat& x, const Mat& eps) {
  return grad(vae_objective(model, x, eps), model.params);
}

double cos2_value(std::span<const ad::Var> a, std::span<const ad::Var> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += (a[i].value().array() * b[i].value().array()).sum();
    aa += a[i].value().squaredNorm();
    bb += b[i].value().squaredNorm();
  }
  if (std::sqrt(aa) < kDegenerateNorm || std::sqrt(bb) < kDegenerateNorm) return 0.0;
  return ab * ab / (aa * bb);
}

}  // namespace

GradPair compute_gradients(const VaeModel& model, const StepInputs& in, const ClassifierModel* classifier,
                           const LossConfig& config, bool hat) {
  DiffContext ctx(model.params);
  const BatchLosses l = batch_losses(ctx, model, in, classifier, config, hat, true);
  GradVector g_r = ctx.gradient_vector(l.retain);
  GradVector g_f = ctx.gradient_vector(l.forget);
  return GradPair{std::move(g_r), std::move(g_f), l.retain.item(), l.forget.item(), l.kl, l.vae_retain};
}

// ---- first-order rules ---------------------------------------------------

ParamVector step_ascent(const ParamVector& theta, const GradVector& g_f, double eta) {
  return axpy(eta, g_f, theta);
}

ParamVector step_ascent_descent(const ParamVector& theta, const GradVector& g_r, const GradVector& g_f, double eta,
                                int k) {
  return k % 2 == 1 ? axpy(eta, g_f, theta) : axpy(-eta, g_r, theta);
}

GradVector project_out(const GradVector& a, const GradVector& b) {
  const double bb = dot(b, b);
  if (std::sqrt(bb) < kDegenerateNorm) return a;
  return axpy(-dot(a, b) / bb, b, a);
}

ParamVector step_surgery_ascent(const ParamVector& theta, const GradVector& g_r, const GradVector& g_f, double eta) {
  return axpy(eta, project_out(g_f, g_r), theta);
}

ParamVector step_surgery(const ParamVector& theta, const GradVector& g_r, const GradVector& g_f, double eta) {
  return axpy(-eta, project_out(g_r, g_f), theta);
}

// ---- second-order and histogram rules ------------------------------------

UnoGradient uno_gradient(const VaeModel& model, const StepInputs& in, const ClassifierModel* classifier,
                         const LossConfig& config, bool hat) {
  DiffContext ctx(model.params);
  const BatchLosses l = batch_losses(ctx, model, in, classifier, config, hat, true);
  const VarList g_r = ctx.gradient(l.retain, true);
  const VarList g_f = ctx.gradient(l.forget, true);
  const ad::Var total = loss_uno(l.retain, g_r, g_f, config);
  return UnoGradient{ctx.gradient_vector(total), total.item(), l.retain.item(), cos2_value(g_r, g_f), l.kl, l.vae_retain};
}

UnoGradient h_gradient(const VaeModel& model, const StepInputs& in, const ClassifierModel& classifier,
                       const LossConfig& config) {
  DiffContext ctx(model.params);
  const BatchLosses l = batch_losses(ctx, model, in, &classifier, config, true, false);
  return UnoGradient{ctx.gradient_vector(l.retain), l.retain.item(), l.retain.item(), 0.0, l.kl, l.vae_retain};
}

UnoStep step_uno(const VaeModel& model, const StepInputs& in, const ClassifierModel* classifier,
                 const LossConfig& config, double eta, bool hat) {
  UnoGradient u = uno_gradient(model, in, classifier, config, hat);
  return UnoStep{axpy(-eta, u.g, model.params), u.retain_loss, u.cos2, u.kl, u.vae_retain_loss};
}

HStep step_h(const VaeModel& model, const StepInputs& in, const ClassifierModel& classifier,
             const LossConfig& config, double eta) {
  UnoGradient u = h_gradient(model, in, classifier, config);
  return HStep{axpy(-eta, u.g, model.params), u.retain_loss, u.kl, u.vae_retain_loss};
}

// ---- sampling ------------------------------------------------------------

StepSampler::StepSampler(const UnlearnData& data, const UnlearnConfig& config, int latent_dim)
    : retain_(*data.retain, derive_seed(config.seed, "retain-batches")),
      forget_(*data.forget, derive_seed(config.seed, "forget-batches")),
      rng_(derive_seed(config.seed, "step-noise")),
      gen_rng_(derive_seed(config.seed, "generation-noise")),
      batch_(static_cast<std::size_t>(config.B)),
      n_generate_(config.loss.n_generate),
      latent_dim_(latent_dim) {}

Mat StepSampler::normal(Eigen::Index rows, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);  // local: a shared one would carry a cached draw across streams
  Mat m(rows, latent_dim_);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < latent_dim_; ++c) m(r, c) = n(rng);
  return m;
}

StepInputs StepSampler::next(bool with_generation) {
  StepInputs in;
  in.retain = retain_.next_batch(std::min(batch_, retain_.permutation().size()));
  in.forget = forget_.next_batch(std::min(batch_, forget_.permutation().size()));
  in.eps_retain = normal(in.retain.rows(), rng_);
  in.eps_forget = normal(in.forget.rows(), rng_);
  if (with_generation) in.z_generate = normal(n_generate_, gen_rng_);
  return in;
}

// ---- run loop ------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Outcome {
  ParamVector theta;
  std::string extra;
  std::optional<double> retain_loss;  // set when the rule already evaluated it
};

Outcome apply_rule(Algorithm algo, int k, const VaeModel& m, const StepInputs& in, const ClassifierModel& clf,
                   const UnlearnConfig& cfg) {
  const LossConfig& lc = cfg.loss;
  auto surgery_with = [&](bool hat) {
    const GradPair g = compute_gradients(m, in, &clf, lc, hat);
    std::string extra = "cos2=" + fmt(cosine_sq(g.g_r, g.g_f));
    if (hat) extra += ";kl=" + fmt(g.kl);
    return Outcome{step_surgery(m.params, g.g_r, g.g_f, cfg.eta), extra, g.vae_retain_loss};
  };
  auto uno_with = [&](bool hat) {
    UnoStep s = step_uno(m, in, &clf, lc, cfg.eta, hat);
    std::string extra = "cos2=" + fmt(s.cos2);
    if (hat) extra += ";kl=" + fmt(s.kl);
    return Outcome{std::move(s.theta), extra, s.vae_retain_loss};
  };

  switch (algo) {
    case Algorithm::A:
      return {step_ascent(m.params, single_gradient(m, in.forget, in.eps_forget), cfg.eta), "", std::nullopt};
    case Algorithm::AD:
      if (k % 2 == 1) return {step_ascent(m.params, single_gradient(m, in.forget, in.eps_forget), cfg.eta), "", std::nullopt};
      return {axpy(-cfg.eta, single_gradient(m, in.retain, in.eps_retain), m.params), "", std::nullopt};
    case Algorithm::SA: {
      const GradPair g = compute_gradients(m, in, nullptr, lc, false);
      return {step_surgery_ascent(m.params, g.g_r, g.g_f, cfg.eta), "cos2=" + fmt(cosine_sq(g.g_r, g.g_f)),
              g.vae_retain_loss};
    }
    case Algorithm::S: return surgery_with(false);
    case Algorithm::SHat: return surgery_with(true);
    case Algorithm::UNO: return uno_with(false);
    case Algorithm::UNOHat: return uno_with(true);
    case Algorithm::UNOS: return k % 2 == 1 ? uno_with(false) : surgery_with(false);
    case Algorithm::UNOSHat: return k % 2 == 1 ? uno_with(true) : surgery_with(true);
    case Algorithm::H: {
      HStep s = step_h(m, in, clf, lc, cfg.eta);
      return {std::move(s.theta), "kl=" + fmt(s.kl), s.vae_retain_loss};
    }
  }
  throw Error(ErrorCode::InvalidConfig, "unhandled algorithm");
}

}  // namespace

RunResult run(const UnlearnConfig& config, const VaeModel& model, const ClassifierModel& classifier,
              const UnlearnData& data, const std::string& run_id) {
  config.validate();
  if (!data.retain || !data.forget) throw Error(ErrorCode::InvalidConfig, "run needs retain and forget sets");
  if (data.retain->rows() == 0) throw Error(ErrorCode::EmptyRetainSet, "retain set is empty");
  if (data.forget->rows() == 0) throw Error(ErrorCode::EmptyForgetSet, "forget set is empty");

  RunResult out{RunRecord{}, model, std::nullopt};
  RunRecord& rec = out.record;
  rec.run_id = run_id;
  rec.algorithm = to_string(config.algorithm);
  rec.seed = config.seed;

  const NoiseBatch monitor =
      NoiseBatch::draw(config.n_monitor, model.arch.latent_dim, derive_seed(config.seed, "monitor"));
  rec.initial_forget_fraction = forget_fraction(out.model, classifier, monitor);

  StepSampler sampler(data, config, model.arch.latent_dim);
  const bool gen = uses_classifier(config.algorithm);
  double elapsed = 0;
  for (int k = 1; k <= config.K; ++k) {
    const StepInputs in = sampler.next(gen);
    Outcome o;
    double retain_loss = 0;
    try {
      const auto t0 = std::chrono::steady_clock::now();
      o = apply_rule(config.algorithm, k, out.model, in, classifier, config);
      elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      // rules that never touch the retain loss get it evaluated off the clock
      retain_loss = o.retain_loss ? *o.retain_loss : vae_loss(out.model, in.retain, in.eps_retain);
    } catch (const Error& e) {
      rec.failed = true;
      rec.failure = e.what();
      break;
    }
    out.model.params = std::move(o.theta);
    double ff;
    try {
      ff = forget_fraction(out.model, classifier, monitor);
    } catch (const Error& e) {
      rec.failed = true;
      rec.failure = e.what();
      break;
    }
    rec.steps.push_back(StepRecord{k, ff, elapsed, retain_loss, std::move(o.extra)});
    if (ff < config.threshold && !out.at_crossing) {
      out.at_crossing = out.model;
      if (config.stop_at_threshold) break;
    }
  }
  return out;
}

void write_csv_header(std::ostream& out) {
  out << "run_id,algorithm,step,forget_fraction,cum_update_time_s,retain_loss,extra_loss_terms\n";
}

void write_csv_rows(std::ostream& out, const RunRecord& record) {
  for (const StepRecord& s : record.steps)
    out << record.run_id << ',' << record.algorithm << ',' << s.step << ',' << fmt(s.forget_fraction) << ','
        << fmt(s.cum_update_time_s) << ',' << fmt(s.retain_loss) << ',' << s.extra_loss_terms << '\n';
}

}  // namespace uno
