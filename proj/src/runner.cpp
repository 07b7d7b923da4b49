#include "uno/runner.hpp"

#include "uno/checkpoint.hpp"
#include "uno/error.hpp"
#include "uno/metrics.hpp"
#include "uno/seed.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace uno {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Profile p) { return p == Profile::Desk ? "desk" : "paper"; }

Profile parse_profile(const std::string& s) {
  if (s == "desk") return Profile::Desk;
  if (s == "paper") return Profile::Paper;
  throw Error(ErrorCode::InvalidConfig, "unknown profile '" + s + "' (desk or paper)");
}

namespace {

const std::vector<std::string> kUnlearnKeys = {"eta",   "K",         "B",         "beta_o_times_B", "beta_h_times_B",
                                               "alpha", "n_generate", "threshold", "n_monitor",      "stop_at_threshold",
                                               "stop_gradient_forget"};

void reject_unknown(const json& patch, const json& base, const std::string& where) {
  if (!patch.is_object()) return;
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (!base.contains(it.key())) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + where + it.key() + "'");
    const json& b = base.at(it.key());
    // per_algorithm is an open map checked separately
    if (b.is_object() && it.key() != "per_algorithm") reject_unknown(it.value(), b, where + it.key() + ".");
  }
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
double number_or_nan(const json& j) { return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN(); }

json stat_json(const Stat& s) { return {{"mean", finite_or_null(s.mean)}, {"std", finite_or_null(s.std)}, {"n", s.n}}; }
Stat stat_from(const json& j) { return {number_or_nan(j.at("mean")), number_or_nan(j.at("std")), j.at("n").get<std::size_t>()}; }

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << text;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, p.string() + ": " + e.what());
  }
}

}  // namespace

json unlearn_to_json(const UnlearnConfig& c) {
  return {{"eta", c.eta},
          {"K", c.K},
          {"B", c.B},
          {"beta_o_times_B", c.loss.beta_o_times_B},
          {"beta_h_times_B", c.loss.beta_h_times_B},
          {"alpha", c.loss.alpha},
          {"n_generate", c.loss.n_generate},
          {"threshold", c.threshold},
          {"n_monitor", c.n_monitor},
          {"stop_at_threshold", c.stop_at_threshold},
          {"stop_gradient_forget", c.loss.stop_gradient_forget}};
}

UnlearnConfig unlearn_from_json(const json& j) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(kUnlearnKeys.begin(), kUnlearnKeys.end(), it.key()) == kUnlearnKeys.end())
      throw Error(ErrorCode::InvalidConfig, "unknown unlearn key '" + it.key() + "'");
  UnlearnConfig c;
  try {
    c.eta = j.value("eta", c.eta);
    c.K = j.value("K", c.K);
    c.B = j.value("B", c.B);
    c.loss.batch_size = c.B;
    c.loss.beta_o_times_B = j.value("beta_o_times_B", c.loss.beta_o_times_B);
    c.loss.beta_h_times_B = j.value("beta_h_times_B", c.loss.beta_h_times_B);
    c.loss.alpha = j.value("alpha", c.loss.alpha);
    c.loss.n_generate = j.value("n_generate", c.loss.n_generate);
    c.loss.stop_gradient_forget = j.value("stop_gradient_forget", c.loss.stop_gradient_forget);
    c.threshold = j.value("threshold", c.threshold);
    c.n_monitor = j.value("n_monitor", c.n_monitor);
    c.stop_at_threshold = j.value("stop_at_threshold", c.stop_at_threshold);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("unlearn settings: ") + e.what());
  }
  return c;
}

UnlearnConfig ExperimentConfig::for_algorithm(Algorithm a, int r) const {
  json u = unlearn;
  if (auto it = per_algorithm.find(to_string(a)); it != per_algorithm.end()) u.merge_patch(it->second);
  UnlearnConfig c = unlearn_from_json(u);
  c.algorithm = a;
  c.seed = derive_seed(derive_seed(seed, to_string(a)), static_cast<std::uint64_t>(r));
  return c;
}

void ExperimentConfig::validate() const {
  if (repeats < 1) throw Error(ErrorCode::InvalidConfig, "repeats must be >= 1");
  if (workers < 1) throw Error(ErrorCode::InvalidConfig, "workers must be >= 1");
  if (algorithms.empty()) throw Error(ErrorCode::InvalidConfig, "no algorithms configured");
  if (data.forget_labels.empty()) throw Error(ErrorCode::InvalidConfig, "forget_labels is empty");
  if (fid.reference != "retain" && fid.reference != "all")
    throw Error(ErrorCode::InvalidConfig, "fid.reference must be 'retain' or 'all'");
  if (fid.n_fid < 2) throw Error(ErrorCode::InvalidConfig, "fid.n_fid must be >= 2");
  for (const auto& [name, patch] : per_algorithm) {
    parse_algorithm(name);
    if (!patch.is_object()) throw Error(ErrorCode::InvalidConfig, "per_algorithm." + name + " must be an object");
  }
  for (Algorithm a : algorithms) for_algorithm(a, 0).validate();
}

ExperimentConfig default_config(Profile profile) {
  ExperimentConfig c;
  c.profile = profile;
  const fs::path dir = UNO_DATA_DIR;
  c.data.train_images = dir / "train-images-idx3-ubyte";
  c.data.train_labels = dir / "train-labels-idx1-ubyte";
  c.data.heldout_images = dir / "heldout-images-idx3-ubyte";
  c.data.heldout_labels = dir / "heldout-labels-idx1-ubyte";
  c.algorithms.assign(std::begin(kAllAlgorithms), std::end(kAllAlgorithms));
  c.classifier_train.epochs = 10;
  UnlearnConfig u;
  if (profile == Profile::Desk) {
    // ReLU sits in a basin that plain SGD at the unlearning step size does not leave
    c.vae.encoder_hidden = {64, 32};
    c.vae.decoder_hidden = {32, 64};
    c.vae.activation = Activation::Relu;
    c.vae_train.epochs = 200;
    c.out = "runs/desk";
  } else {
    // one 400-wide layer each way, about 0.63M parameters at d_z = 2
    c.vae.encoder_hidden = {400};
    c.vae.decoder_hidden = {400};
    c.vae.activation = Activation::Relu;
    c.vae_train.epochs = 200;
    c.out = "runs/paper";
  }
  c.unlearn = unlearn_to_json(u);
  return c;
}

json to_json(const ExperimentConfig& c) {
  json per = json::object();
  for (const auto& [k, v] : c.per_algorithm) per[k] = v;
  json algs = json::array();
  for (Algorithm a : c.algorithms) algs.push_back(to_string(a));
  return {{"profile", to_string(c.profile)},
          {"data",
           {{"train_images", c.data.train_images.string()},
            {"train_labels", c.data.train_labels.string()},
            {"heldout_images", c.data.heldout_images.string()},
            {"heldout_labels", c.data.heldout_labels.string()},
            {"subset", c.data.subset},
            {"forget_labels", c.data.forget_labels}}},
          {"vae",
           {{"latent_dim", c.vae.latent_dim},
            {"encoder_hidden", c.vae.encoder_hidden},
            {"decoder_hidden", c.vae.decoder_hidden},
            {"activation", to_string(c.vae.activation)},
            {"head", to_string(c.vae.head)},
            {"epochs", c.vae_train.epochs},
            {"lr", c.vae_train.lr},
            {"batch_size", c.vae_train.batch_size}}},
          {"classifier",
           {{"hidden", c.classifier.hidden},
            {"activation", to_string(c.classifier.activation)},
            {"epochs", c.classifier_train.epochs},
            {"lr", c.classifier_train.lr},
            {"batch_size", c.classifier_train.batch_size}}},
          {"unlearn", c.unlearn},
          {"per_algorithm", per},
          {"algorithms", algs},
          {"repeats", c.repeats},
          {"seed", c.seed},
          {"out", c.out.string()},
          {"checkpoints", c.checkpoints.string()},
          {"workers", c.workers},
          {"fid", {{"n_fid", c.fid.n_fid}, {"reference", c.fid.reference}}}};
}

ExperimentConfig config_from_json(const json& patch, Profile profile) {
  if (!patch.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  if (patch.contains("profile")) profile = parse_profile(patch.at("profile").get<std::string>());
  json j = to_json(default_config(profile));
  reject_unknown(patch, j, "");
  j.merge_patch(patch);
  ExperimentConfig c;
  c.profile = profile;
  try {
    const json& d = j.at("data");
    c.data.train_images = d.at("train_images").get<std::string>();
    c.data.train_labels = d.at("train_labels").get<std::string>();
    c.data.heldout_images = d.at("heldout_images").get<std::string>();
    c.data.heldout_labels = d.at("heldout_labels").get<std::string>();
    c.data.subset = d.at("subset").get<std::size_t>();
    c.data.forget_labels = d.at("forget_labels").get<std::set<int>>();
    const json& v = j.at("vae");
    c.vae.latent_dim = v.at("latent_dim");
    c.vae.encoder_hidden = v.at("encoder_hidden").get<std::vector<int>>();
    c.vae.decoder_hidden = v.at("decoder_hidden").get<std::vector<int>>();
    c.vae.activation = parse_activation(v.at("activation"));
    c.vae.head = parse_output_head(v.at("head"));
    c.vae_train.epochs = v.at("epochs");
    c.vae_train.lr = v.at("lr");
    c.vae_train.batch_size = v.at("batch_size");
    const json& k = j.at("classifier");
    c.classifier.hidden = k.at("hidden").get<std::vector<int>>();
    c.classifier.activation = parse_activation(k.at("activation"));
    c.classifier_train.epochs = k.at("epochs");
    c.classifier_train.lr = k.at("lr");
    c.classifier_train.batch_size = k.at("batch_size");
    c.unlearn = j.at("unlearn");
    for (auto it = j.at("per_algorithm").begin(); it != j.at("per_algorithm").end(); ++it)
      if (!it.value().is_null()) c.per_algorithm[it.key()] = it.value();
    c.algorithms.clear();
    for (const auto& a : j.at("algorithms")) c.algorithms.push_back(parse_algorithm(a.get<std::string>()));
    c.repeats = j.at("repeats");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out = j.at("out").get<std::string>();
    c.checkpoints = j.at("checkpoints").get<std::string>();
    c.workers = j.at("workers");
    c.fid.n_fid = j.at("fid").at("n_fid");
    c.fid.reference = j.at("fid").at("reference").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::optional<fs::path>& path, Profile profile) {
  return config_from_json(path ? read_json(*path) : json::object(), profile);
}

Workspace load_workspace(const ExperimentConfig& config) {
  Workspace w;
  w.train = load_idx(config.data.train_images, config.data.train_labels);
  if (config.data.subset > 0) w.train = seeded_subset(w.train, config.data.subset, derive_seed(config.seed, "subset"));
  w.heldout = load_idx(config.data.heldout_images, config.data.heldout_labels);
  w.partition = partition_by_label(w.train, config.data.forget_labels);
  w.retain = select_rows(w.train.images, w.partition.retain);
  w.forget = select_rows(w.train.images, w.partition.forget);
  return w;
}

namespace {

VaeArch vae_arch_for(const ExperimentConfig& c, const Workspace& w) {
  VaeArch a = c.vae;
  a.input_dim = static_cast<int>(w.train.images.cols());
  return a;
}

ClassifierArch classifier_arch_for(const ExperimentConfig& c, const Workspace& w) {
  ClassifierArch a = c.classifier;
  a.input_dim = static_cast<int>(w.train.images.cols());
  a.num_classes = std::max(*std::max_element(w.train.labels.begin(), w.train.labels.end()),
                           *std::max_element(w.heldout.labels.begin(), w.heldout.labels.end())) +
                  1;
  return a;
}

}  // namespace

TrainSummary cmd_train(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  const Workspace w = load_workspace(config);
  const fs::path dir = config.checkpoint_dir();
  fs::create_directories(dir);

  TrainConfig vt = config.vae_train;
  vt.seed = derive_seed(config.seed, "vae-train");
  VaeModel vae = VaeModel::create(vae_arch_for(config, w), derive_seed(config.seed, "vae-init"));
  TrainSummary s;
  s.vae_loss = train_vae(vae, w.train.images, vt, [&](int ep, double loss) {
                 if (log && (ep % 10 == 0 || ep == vt.epochs)) *log << "vae epoch " << ep << " loss " << loss << '\n';
               }).final_loss;

  TrainConfig ct = config.classifier_train;
  ct.seed = derive_seed(config.seed, "classifier-train");
  ClassifierModel clf = ClassifierModel::create(classifier_arch_for(config, w), derive_seed(config.seed, "classifier-init"));
  s.classifier_loss = train_classifier(clf, w.train, config.data.forget_labels, ct, [&](int ep, double loss) {
                        if (log) *log << "classifier epoch " << ep << " loss " << loss << '\n';
                      }).final_loss;
  s.heldout = evaluate_classifier(clf, w.heldout, config.data.forget_labels);
  if (log)
    *log << "held-out accuracy: retain/forget " << s.heldout.binary << ", digits " << s.heldout.multiclass << '\n';

  save_checkpoint(dir / "vae.ckpt", vae);
  save_checkpoint(dir / "classifier.ckpt", clf);
  const json report = {{"vae_loss", s.vae_loss},
                       {"classifier_loss", s.classifier_loss},
                       {"heldout_binary_accuracy", s.heldout.binary},
                       {"heldout_multiclass_accuracy", s.heldout.multiclass},
                       {"train_images", w.train.size()},
                       {"config", to_json(config)}};
  write_text(dir / "train.json", report.dump(2) + "\n");
  return s;
}

Stat describe(const std::vector<double>& xs) {
  Stat s;
  s.n = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return s;
}

namespace {

// Ranks 1..n by key; NaN keys go last, ties keep input order.
std::vector<int> ranks_by(const std::vector<double>& key) {
  std::vector<std::size_t> order(key.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool na = std::isnan(key[a]), nb = std::isnan(key[b]);
    if (na != nb) return nb;
    return !na && key[a] < key[b];
  });
  std::vector<int> r(key.size());
  for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<int>(i) + 1;
  return r;
}

double time_per_step(const RunRecord& r) {
  if (r.steps.empty()) return std::numeric_limits<double>::quiet_NaN();
  return r.steps.back().cum_update_time_s / static_cast<double>(r.steps.size());
}

}  // namespace

AggregateReport aggregate(const std::vector<RunRecord>& runs, double threshold) {
  AggregateReport rep;
  rep.fid_before = runs.empty() ? std::numeric_limits<double>::quiet_NaN() : runs.front().fid_before;
  std::vector<std::string> names;
  for (const RunRecord& r : runs)
    if (std::find(names.begin(), names.end(), r.algorithm) == names.end()) names.push_back(r.algorithm);
  for (const std::string& name : names) {
    AlgorithmSummary s;
    s.algorithm = name;
    std::vector<double> steps, times, tps, fids, ratios, cross;
    for (const RunRecord& r : runs) {
      if (r.algorithm != name) continue;
      ++s.runs;
      s.failed += r.failed;
      if (auto k = steps_to_unlearn(r, threshold)) {
        ++s.reached;
        steps.push_back(*k);
        times.push_back(*time_to_unlearn(r, threshold));
      }
      if (double t = time_per_step(r); std::isfinite(t)) tps.push_back(t);
      if (std::isfinite(r.fid_after)) {
        fids.push_back(r.fid_after);
        ratios.push_back(r.fid_after / r.fid_before);
      }
      if (std::isfinite(r.fid_at_crossing)) cross.push_back(r.fid_at_crossing);
    }
    s.not_reached = s.reached < s.runs;
    s.steps_to_unlearn = describe(steps);
    s.time_to_unlearn = describe(times);
    s.time_per_step = describe(tps);
    s.fid_after = describe(fids);
    s.fid_ratio = describe(ratios);
    s.fid_at_crossing = describe(cross);
    rep.algorithms.push_back(std::move(s));
  }
  std::vector<double> tkey, fkey;
  for (const AlgorithmSummary& s : rep.algorithms) {
    tkey.push_back(s.reached == 0 ? std::numeric_limits<double>::quiet_NaN()
                                  : s.time_to_unlearn.mean + (s.not_reached ? 1e300 : 0.0));
    fkey.push_back(s.fid_ratio.mean);
  }
  const std::vector<int> rt = ranks_by(tkey), rf = ranks_by(fkey);
  for (std::size_t i = 0; i < rep.algorithms.size(); ++i) {
    rep.algorithms[i].rank_time = rt[i];
    rep.algorithms[i].rank_fid = rf[i];
  }
  return rep;
}

json to_json(const AggregateReport& report) {
  json algs = json::array();
  for (const AlgorithmSummary& s : report.algorithms)
    algs.push_back({{"algorithm", s.algorithm},
                    {"runs", s.runs},
                    {"reached", s.reached},
                    {"failed", s.failed},
                    {"not_reached", s.not_reached},
                    {"steps_to_unlearn", stat_json(s.steps_to_unlearn)},
                    {"time_to_unlearn_s", stat_json(s.time_to_unlearn)},
                    {"time_per_step_s", stat_json(s.time_per_step)},
                    {"fid_after", stat_json(s.fid_after)},
                    {"fid_ratio", stat_json(s.fid_ratio)},
                    {"fid_at_crossing", stat_json(s.fid_at_crossing)},
                    {"rank_time", s.rank_time},
                    {"rank_fid", s.rank_fid}});
  return {{"schema_version", kAggregateSchemaVersion}, {"fid_before", finite_or_null(report.fid_before)}, {"algorithms", algs}};
}

AggregateReport report_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kAggregateSchemaVersion)
      throw Error(ErrorCode::InvalidConfig, "unsupported aggregate schema version");
    AggregateReport r;
    r.fid_before = number_or_nan(j.at("fid_before"));
    for (const json& a : j.at("algorithms")) {
      AlgorithmSummary s;
      s.algorithm = a.at("algorithm");
      s.runs = a.at("runs");
      s.reached = a.at("reached");
      s.failed = a.at("failed");
      s.not_reached = a.at("not_reached");
      s.steps_to_unlearn = stat_from(a.at("steps_to_unlearn"));
      s.time_to_unlearn = stat_from(a.at("time_to_unlearn_s"));
      s.time_per_step = stat_from(a.at("time_per_step_s"));
      s.fid_after = stat_from(a.at("fid_after"));
      s.fid_ratio = stat_from(a.at("fid_ratio"));
      s.fid_at_crossing = stat_from(a.at("fid_at_crossing"));
      s.rank_time = a.at("rank_time");
      s.rank_fid = a.at("rank_fid");
      r.algorithms.push_back(std::move(s));
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed aggregate report: ") + e.what());
  }
}

json run_summary(const RunRecord& r, double threshold) {
  const auto k = steps_to_unlearn(r, threshold);
  const auto t = time_to_unlearn(r, threshold);
  return {{"run_id", r.run_id},
          {"algorithm", r.algorithm},
          {"seed", r.seed},
          {"initial_forget_fraction", r.initial_forget_fraction},
          {"final_forget_fraction", r.steps.empty() ? json(nullptr) : json(r.steps.back().forget_fraction)},
          {"steps_run", r.steps.size()},
          {"steps_to_unlearn", k ? json(*k) : json(nullptr)},
          {"time_to_unlearn_s", t ? json(*t) : json(nullptr)},
          {"time_per_step_s", finite_or_null(time_per_step(r))},
          {"fid_before", finite_or_null(r.fid_before)},
          {"fid_after", finite_or_null(r.fid_after)},
          {"fid_at_crossing", finite_or_null(r.fid_at_crossing)},
          {"failed", r.failed},
          {"failure", r.failure}};
}

SweepResult cmd_unlearn(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  const Workspace w = load_workspace(config);
  const VaeModel vae = load_vae(config.checkpoint_dir() / "vae.ckpt");
  const ClassifierModel clf = load_classifier(config.checkpoint_dir() / "classifier.ckpt");
  const GaussianStats real = feature_stats(clf, config.fid.reference == "all" ? w.train.images : w.retain);
  const std::uint64_t fid_seed = derive_seed(config.seed, "fid");
  const double fid_before = fid(vae, clf, real, config.fid.n_fid, fid_seed);

  const fs::path runs_dir = config.out / "runs";
  fs::create_directories(runs_dir);
  write_text(config.out / "config.json", to_json(config).dump(2) + "\n");

  struct Job {
    Algorithm a;
    int r;
  };
  std::vector<Job> jobs;
  for (Algorithm a : config.algorithms)
    for (int r = 0; r < config.repeats; ++r) jobs.push_back({a, r});

  std::vector<RunRecord> records(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const UnlearnConfig uc = config.for_algorithm(jobs[i].a, jobs[i].r);
        char id[64];
        std::snprintf(id, sizeof id, "%s-%02d", to_string(jobs[i].a).c_str(), jobs[i].r);
        RunResult res = run(uc, vae, clf, {&w.retain, &w.forget}, id);
        RunRecord& rec = res.record;
        rec.fid_before = fid_before;
        try {
          rec.fid_after = fid(res.model, clf, real, config.fid.n_fid, fid_seed);
          if (res.at_crossing) rec.fid_at_crossing = fid(*res.at_crossing, clf, real, config.fid.n_fid, fid_seed);
        } catch (const Error& e) {
          if (!rec.failed) rec.failure = e.what();
          rec.failed = true;
        }
        std::ostringstream csv;
        write_csv_header(csv);
        write_csv_rows(csv, rec);
        write_text(runs_dir / (std::string(id) + ".csv"), csv.str());
        write_text(runs_dir / (std::string(id) + ".json"), run_summary(rec, uc.threshold).dump(2) + "\n");
        if (log) {
          const auto k = steps_to_unlearn(rec, uc.threshold);
          std::lock_guard lock(log_mu);
          *log << id << ": " << (k ? "crossed at step " + std::to_string(*k) : std::string("not reached")) << ", ff "
               << (rec.steps.empty() ? rec.initial_forget_fraction : rec.steps.back().forget_fraction)
               << ", FID ratio " << rec.fid_after / fid_before << (rec.failed ? " [failed: " + rec.failure + "]" : "")
               << '\n';
        }
        records[i] = std::move(rec);
      } catch (...) {
        std::lock_guard lock(log_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(config.workers, static_cast<int>(jobs.size()));
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  SweepResult out{std::move(records), {}};
  out.report = aggregate(out.runs, unlearn_from_json(config.unlearn).threshold);
  out.report.fid_before = fid_before;
  json agg = to_json(out.report);
  agg["config"] = to_json(config);
  write_text(config.out / "aggregate.json", agg.dump(2) + "\n");
  return out;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& file) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw Error(ErrorCode::InvalidConfig, file.string() + ": bad number '" + s + "'");
  return v;
}

std::vector<fs::path> csv_files(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    const fs::path dir = fs::is_directory(path / "runs") ? path / "runs" : path;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.push_back(path);
  } else {
    throw Error(ErrorCode::Io, "no such file or directory: " + path.string());
  }
  return files;
}

}  // namespace

std::vector<RunRecord> read_run_csv(const fs::path& path) {
  std::vector<RunRecord> runs;
  for (const fs::path& file : csv_files(path)) {
    std::ifstream in(file);
    std::string line;
    if (!std::getline(in, line) ||
        line != "run_id,algorithm,step,forget_fraction,cum_update_time_s,retain_loss,extra_loss_terms")
      throw Error(ErrorCode::InvalidConfig, file.string() + ": not a run CSV");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> f = split(line, ',');
      if (f.size() != 7) throw Error(ErrorCode::InvalidConfig, file.string() + ": expected 7 columns");
      if (runs.empty() || runs.back().run_id != f[0]) {
        runs.emplace_back();
        runs.back().run_id = f[0];
        runs.back().algorithm = f[1];
      }
      runs.back().steps.push_back({std::stoi(f[2]), parse_double(f[3], file), parse_double(f[4], file),
                                   parse_double(f[5], file), f[6]});
    }
    // the sidecar summary carries what the trajectory does not
    const fs::path side = fs::path(file).replace_extension(".json");
    if (fs::exists(side) && !runs.empty()) {
      const json s = read_json(side);
      RunRecord& r = runs.back();
      r.seed = s.value("seed", std::uint64_t{0});
      r.initial_forget_fraction = number_or_nan(s.value("initial_forget_fraction", json()));
      r.fid_before = number_or_nan(s.value("fid_before", json()));
      r.fid_after = number_or_nan(s.value("fid_after", json()));
      r.fid_at_crossing = number_or_nan(s.value("fid_at_crossing", json()));
      r.failed = s.value("failed", false);
      r.failure = s.value("failure", "");
    }
  }
  return runs;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string svg_header(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) out += c == '<' ? "&lt;" : c == '>' ? "&gt;" : c == '&' ? "&amp;" : std::string(1, c);
  return out;
}

std::string curves_svg(const std::vector<RunRecord>& runs, double threshold) {
  const int W = 760, H = 440, L = 60, R = 150, T = 30, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  std::vector<std::string> names;
  int kmax = 1;
  double ymax = threshold * 1.5;
  for (const RunRecord& r : runs) {
    if (std::find(names.begin(), names.end(), r.algorithm) == names.end()) names.push_back(r.algorithm);
    if (!r.steps.empty()) kmax = std::max(kmax, r.steps.back().step);
    ymax = std::max(ymax, r.initial_forget_fraction);
    for (const StepRecord& s : r.steps) ymax = std::max(ymax, s.forget_fraction);
  }
  ymax = std::min(1.0, ymax * 1.05);
  auto X = [&](double k) { return L + pw * k / kmax; };
  auto Y = [&](double v) { return T + ph * (1 - v / ymax); };

  std::string svg = svg_header(W, H);
  svg += "<text x=\"" + num(L) + "\" y=\"18\">forget fraction vs step (mean, min/max band)</text>\n";
  svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(T + ph) + "\" x2=\"" + num(L + pw) + "\" y2=\"" + num(T + ph) +
         "\" stroke=\"black\"/>\n<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" +
         num(T + ph) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = ymax * i / 5, k = kmax * i / 5.0;
    svg += "<text x=\"" + num(L - 6) + "\" y=\"" + num(Y(v) + 4) + "\" text-anchor=\"end\">" + num(v) + "</text>\n";
    svg += "<text x=\"" + num(X(k)) + "\" y=\"" + num(T + ph + 16) + "\" text-anchor=\"middle\">" +
           std::to_string(static_cast<int>(k)) + "</text>\n";
  }
  svg += "<text x=\"" + num(L + pw / 2) + "\" y=\"" + num(H - 10) + "\" text-anchor=\"middle\">step</text>\n";
  svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(Y(threshold)) + "\" x2=\"" + num(L + pw) + "\" y2=\"" +
         num(Y(threshold)) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";

  for (std::size_t a = 0; a < names.size(); ++a) {
    std::vector<const RunRecord*> group;
    for (const RunRecord& r : runs)
      if (r.algorithm == names[a]) group.push_back(&r);
    int last = 0;
    for (const RunRecord* r : group)
      if (!r->steps.empty()) last = std::max(last, r->steps.back().step);
    // a run that stopped early holds its final value
    std::vector<double> mean(static_cast<std::size_t>(last) + 1), lo(mean.size(), 1), hi(mean.size(), 0);
    for (int k = 0; k <= last; ++k) {
      double sum = 0;
      for (const RunRecord* r : group) {
        double v = r->initial_forget_fraction;
        for (const StepRecord& s : r->steps) {
          if (s.step > k) break;
          v = s.forget_fraction;
        }
        if (std::isnan(v)) v = r->steps.empty() ? 0 : r->steps.front().forget_fraction;
        sum += v;
        lo[k] = std::min(lo[k], v);
        hi[k] = std::max(hi[k], v);
      }
      mean[k] = sum / static_cast<double>(group.size());
    }
    const std::string color = kPalette[a % 10];
    if (group.size() > 1) {
      std::string pts;
      for (int k = 0; k <= last; ++k) pts += num(X(k)) + "," + num(Y(hi[k])) + " ";
      for (int k = last; k >= 0; --k) pts += num(X(k)) + "," + num(Y(lo[k])) + " ";
      svg += "<polygon class=\"band\" points=\"" + pts + "\" fill=\"" + color + "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }
    std::string pts;
    for (int k = 0; k <= last; ++k) pts += num(X(k)) + "," + num(Y(mean[k])) + " ";
    svg += "<polyline class=\"curve\" points=\"" + pts + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    const double ly = T + 14.0 + 18.0 * static_cast<double>(a);
    svg += "<line x1=\"" + num(L + pw + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(L + pw + 32) + "\" y2=\"" + num(ly) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n<text x=\"" + num(L + pw + 38) + "\" y=\"" + num(ly + 4) +
           "\">" + escape(names[a]) + "</text>\n";
  }
  return svg + "</svg>\n";
}

std::string bars_svg(const std::string& title, const std::vector<std::string>& labels, const std::vector<Stat>& stats,
                     const std::vector<int>& ranks, const std::vector<bool>& starred) {
  const int W = 760, H = 400, L = 60, T = 30, B = 70;
  const double pw = W - L - 20, ph = H - T - B;
  double ymax = 0;
  for (const Stat& s : stats)
    if (std::isfinite(s.mean)) ymax = std::max(ymax, s.mean + (std::isfinite(s.std) ? s.std : 0));
  if (ymax <= 0) ymax = 1;
  ymax *= 1.1;
  auto Y = [&](double v) { return T + ph * (1 - v / ymax); };
  const double slot = pw / static_cast<double>(std::max<std::size_t>(1, labels.size()));

  std::string svg = svg_header(W, H);
  svg += "<text x=\"" + num(L) + "\" y=\"18\">" + escape(title) + "</text>\n";
  svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(T + ph) + "\" x2=\"" + num(L + pw) + "\" y2=\"" + num(T + ph) +
         "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i)
    svg += "<text x=\"" + num(L - 6) + "\" y=\"" + num(Y(ymax * i / 4) + 4) + "\" text-anchor=\"end\">" +
           num(ymax * i / 4) + "</text>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x = L + slot * static_cast<double>(i) + slot * 0.15, w = slot * 0.7;
    const double v = std::isfinite(stats[i].mean) ? stats[i].mean : 0;
    svg += "<rect class=\"bar\" x=\"" + num(x) + "\" y=\"" + num(Y(v)) + "\" width=\"" + num(w) + "\" height=\"" +
           num(T + ph - Y(v)) + "\" fill=\"" + kPalette[i % 10] + "\"/>\n";
    if (std::isfinite(stats[i].std) && stats[i].std > 0) {
      const double cx = x + w / 2;
      svg += "<line x1=\"" + num(cx) + "\" y1=\"" + num(Y(v)) + "\" x2=\"" + num(cx) + "\" y2=\"" + num(Y(v + stats[i].std)) +
             "\" stroke=\"black\"/>\n<line x1=\"" + num(cx - 5) + "\" y1=\"" + num(Y(v + stats[i].std)) + "\" x2=\"" +
             num(cx + 5) + "\" y2=\"" + num(Y(v + stats[i].std)) + "\" stroke=\"black\"/>\n";
    }
    svg += "<text class=\"label\" x=\"" + num(x + w / 2) + "\" y=\"" + num(T + ph + 16) + "\" text-anchor=\"middle\">" +
           escape(labels[i]) + (starred[i] ? "*" : "") + "</text>\n";
    svg += "<text class=\"rank\" x=\"" + num(x + w / 2) + "\" y=\"" + num(T + ph + 32) + "\" text-anchor=\"middle\">#" +
           std::to_string(ranks[i]) + "</text>\n";
  }
  svg += "<text x=\"" + num(L) + "\" y=\"" + num(H - 10) + "\">* threshold not reached in every run</text>\n";
  return svg + "</svg>\n";
}

}  // namespace

std::vector<fs::path> cmd_plot(const fs::path& runs_path, const fs::path& out) {
  const std::vector<RunRecord> runs = read_run_csv(runs_path);
  if (runs.empty()) throw Error(ErrorCode::InvalidConfig, "no run trajectories under " + runs_path.string());
  double threshold = 0.02;
  const fs::path cfg = fs::is_directory(runs_path) ? runs_path / "config.json" : fs::path();
  if (!cfg.empty() && fs::exists(cfg)) threshold = read_json(cfg).at("unlearn").value("threshold", threshold);
  const AggregateReport rep = aggregate(runs, threshold);

  fs::create_directories(out);
  std::vector<fs::path> files;
  files.push_back(out / "forget_fraction.svg");
  write_text(files.back(), curves_svg(runs, threshold));

  std::vector<std::string> labels;
  std::vector<Stat> times, fids;
  std::vector<int> rt, rf;
  std::vector<bool> star, nostar;
  for (const AlgorithmSummary& s : rep.algorithms) {
    labels.push_back(s.algorithm);
    times.push_back(s.time_to_unlearn);
    fids.push_back(s.fid_ratio);
    rt.push_back(s.rank_time);
    rf.push_back(s.rank_fid);
    star.push_back(s.not_reached);
    nostar.push_back(false);
  }
  files.push_back(out / "time_to_unlearn.svg");
  write_text(files.back(), bars_svg("time to unlearn [s] (mean + std)", labels, times, rt, star));
  bool any_fid = false;
  for (const Stat& s : fids) any_fid |= std::isfinite(s.mean);
  if (any_fid) {
    files.push_back(out / "fid_ratio.svg");
    write_text(files.back(), bars_svg("FID after / FID before (mean + std)", labels, fids, rf, nostar));
  }
  return files;
}

std::vector<CompareRow> cmd_compare(const AggregateReport& base, const AggregateReport& hat) {
  auto find = [](const AggregateReport& r, const std::string& name) -> const AlgorithmSummary* {
    for (const AlgorithmSummary& s : r.algorithms)
      if (s.algorithm == name) return &s;
    return nullptr;
  };
  auto time_of = [](const AlgorithmSummary* s) -> std::optional<double> {
    if (!s || s->reached == 0 || !std::isfinite(s->time_to_unlearn.mean)) return std::nullopt;
    return s->time_to_unlearn.mean;
  };
  const std::pair<Algorithm, Algorithm> pairs[] = {{Algorithm::S, Algorithm::SHat},
                                                   {Algorithm::UNO, Algorithm::UNOHat},
                                                   {Algorithm::UNOS, Algorithm::UNOSHat}};
  std::vector<CompareRow> rows;
  for (const auto& [b, h] : pairs) {
    const AlgorithmSummary* sb = find(base, to_string(b));
    if (!sb) continue;
    const AlgorithmSummary* sh = find(hat, to_string(h));
    if (!sh) throw Error(ErrorCode::MissingPair, "no " + to_string(h) + " results to pair with " + to_string(b));
    CompareRow row{to_string(b), to_string(h), time_of(sb), time_of(sh), std::nullopt};
    if (row.time_base && row.time_hat && *row.time_hat > 0) row.speed_up = speed_up(*row.time_base, *row.time_hat);
    rows.push_back(row);
  }
  if (rows.empty()) throw Error(ErrorCode::MissingPair, "base report holds none of S, UNO, UNO-S");
  if (const AlgorithmSummary* h = find(hat, "H")) rows.push_back({"", "H", std::nullopt, time_of(h), std::nullopt});
  return rows;
}

std::string format_compare(const std::vector<CompareRow>& rows) {
  auto cell = [](const std::optional<double>& v, const char* f) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, f, *v);
    return std::string(buf);
  };
  std::string out = "base       hat          time_base_s  time_hat_s   speed_up\n";
  for (const CompareRow& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %-12s %-12s %-12s %s\n", r.base.empty() ? "-" : r.base.c_str(), r.hat.c_str(),
                  cell(r.time_base, "%.4g").c_str(), cell(r.time_hat, "%.4g").c_str(), cell(r.speed_up, "%.1f").c_str());
    out += line;
  }
  return out;
}

}  // namespace uno
