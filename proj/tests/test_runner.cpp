#include "doctest.h"

#include "uno/error.hpp"
#include "uno/runner.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace uno;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "uno-runner-tests" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// 8x8 images of three classes with distinct bright regions.
void write_tiny_digits(const fs::path& dir, int n, std::uint64_t seed, const std::string& prefix) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(0, 0.2);
  LabeledDataset d;
  d.images.resize(n, 64);
  for (int i = 0; i < n; ++i) {
    const int label = i % 3;
    d.labels.push_back(label);
    for (int p = 0; p < 64; ++p) d.images(i, p) = std::round(255 * (noise(rng) + ((p / 8) % 3 == label ? 0.7 : 0))) / 255;
  }
  write_idx(d, 8, 8, dir / (prefix + "-images"), dir / (prefix + "-labels"));
}

ExperimentConfig tiny_config(const fs::path& dir) {
  write_tiny_digits(dir, 90, 1, "train");
  write_tiny_digits(dir, 30, 2, "heldout");
  const json patch = {
      {"data",
       {{"train_images", (dir / "train-images").string()},
        {"train_labels", (dir / "train-labels").string()},
        {"heldout_images", (dir / "heldout-images").string()},
        {"heldout_labels", (dir / "heldout-labels").string()}}},
      {"vae", {{"encoder_hidden", {6}}, {"decoder_hidden", {6}}, {"epochs", 2}, {"batch_size", 16}}},
      {"classifier", {{"hidden", {6, 4}}, {"epochs", 2}, {"batch_size", 16}}},
      {"unlearn", {{"K", 4}, {"B", 8}, {"n_generate", 8}, {"n_monitor", 40}, {"stop_at_threshold", false}}},
      {"algorithms", {"UNO"}},
      {"repeats", 2},
      {"fid", {{"n_fid", 40}}},
      {"out", dir.string()}};
  return config_from_json(patch, Profile::Desk);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

AlgorithmSummary summary(const std::string& name, double time, bool reached = true) {
  AlgorithmSummary s;
  s.algorithm = name;
  s.runs = 1;
  s.reached = reached ? 1 : 0;
  s.not_reached = !reached;
  s.time_to_unlearn = reached ? Stat{time, 0, 1} : Stat{};
  return s;
}

}  // namespace

TEST_CASE("config defaults round trip and reject unknown keys") {
  for (Profile p : {Profile::Desk, Profile::Paper}) {
    const ExperimentConfig c = default_config(p);
    CHECK(to_json(config_from_json(to_json(c), p)) == to_json(c));
  }
  const UnlearnConfig u = default_config(Profile::Desk).for_algorithm(Algorithm::UNO, 0);
  CHECK(u.eta == 1e-3);
  CHECK(u.K == 530);
  CHECK(u.B == 128);
  CHECK(u.loss.beta_o_times_B == 1e3);
  CHECK(u.loss.beta_h_times_B == 1e3);
  CHECK(u.loss.alpha == 1e-8);
  CHECK(default_config(Profile::Desk).repeats == 10);
  CHECK_THROWS_AS(config_from_json({{"colour", 1}}, Profile::Desk), Error);
  CHECK_THROWS_AS(config_from_json({{"unlearn", {{"etaa", 1}}}}, Profile::Desk), Error);
  CHECK_THROWS_AS(config_from_json({{"repeats", 0}}, Profile::Desk), Error);
  CHECK_THROWS_AS(config_from_json({{"algorithms", {"UNO", "GD"}}}, Profile::Desk), Error);
  CHECK_THROWS_AS(config_from_json({{"unlearn", {{"eta", -1}}}}, Profile::Desk), Error);
}

TEST_CASE("per-algorithm overrides and run seeds") {
  const ExperimentConfig c = config_from_json({{"per_algorithm", {{"S", {{"K", 7}}}}}}, Profile::Desk);
  CHECK(c.for_algorithm(Algorithm::S, 0).K == 7);
  CHECK(c.for_algorithm(Algorithm::UNO, 0).K == 530);
  CHECK(c.for_algorithm(Algorithm::S, 0).seed != c.for_algorithm(Algorithm::S, 1).seed);
  CHECK(c.for_algorithm(Algorithm::S, 0).seed != c.for_algorithm(Algorithm::UNO, 0).seed);
  CHECK(c.for_algorithm(Algorithm::S, 3).seed == c.for_algorithm(Algorithm::S, 3).seed);
}

TEST_CASE("describe") {
  const Stat s = describe({1, 2, 3});
  CHECK(s.mean == 2);
  CHECK(s.std == 1);
  CHECK(describe({5}).std == 0);
  CHECK(std::isnan(describe({}).mean));
}

TEST_CASE("aggregate ranks and not-reached marker") {
  auto rec = [](const std::string& alg, std::vector<double> ff, double fid) {
    RunRecord r;
    r.algorithm = alg;
    r.fid_before = 2;
    r.fid_after = fid;
    for (std::size_t i = 0; i < ff.size(); ++i) r.steps.push_back({static_cast<int>(i) + 1, ff[i], 0.5 * (i + 1), 0, ""});
    return r;
  };
  const AggregateReport rep = aggregate({rec("A", {0.5, 0.6}, 20), rec("A", {0.5, 0.7}, 30), rec("UNO", {0.1, 0.01}, 2.2),
                                         rec("UNO", {0.01, 0.0}, 2.4), rec("S", {0.3, 0.1}, 2.1), rec("S", {0.2, 0.01}, 2)},
                                        0.02);
  REQUIRE(rep.algorithms.size() == 3);
  const AlgorithmSummary &a = rep.algorithms[0], &uno = rep.algorithms[1], &s = rep.algorithms[2];
  CHECK(a.not_reached);
  CHECK(a.reached == 0);
  CHECK(s.not_reached);
  CHECK_FALSE(uno.not_reached);
  CHECK(uno.steps_to_unlearn.mean == 1.5);
  CHECK(uno.time_to_unlearn.mean == 0.75);
  CHECK(uno.fid_ratio.mean == doctest::Approx(1.15));
  CHECK(uno.rank_time == 1);
  CHECK(s.rank_time == 2);
  CHECK(a.rank_time == 3);
  CHECK(s.rank_fid == 1);
  CHECK(uno.rank_fid == 2);
  CHECK(a.rank_fid == 3);
  const AggregateReport back = report_from_json(to_json(rep));
  CHECK(to_json(back) == to_json(rep));
}

TEST_CASE("compare speed-up table") {
  AggregateReport base, hat;
  base.algorithms = {summary("S", 3.094), summary("UNO", 0.5)};
  hat.algorithms = {summary("S-hat", 0.014), summary("UNO-hat", 0.25), summary("H", 1.0)};
  const std::vector<CompareRow> rows = cmd_compare(base, hat);
  REQUIRE(rows.size() == 3);
  CHECK(*rows[0].speed_up == doctest::Approx(221.0).epsilon(1e-3));
  CHECK(*rows[1].speed_up == 2.0);
  CHECK(rows[2].hat == "H");
  CHECK_FALSE(rows[2].speed_up);
  const std::string table = format_compare(rows);
  CHECK(table.find("221.0") != std::string::npos);
  CHECK(table.find("H ") != std::string::npos);

  hat.algorithms.erase(hat.algorithms.begin());
  try {
    cmd_compare(base, hat);
    FAIL("expected MissingPair");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingPair);
  }
}

TEST_CASE("train, unlearn and plot on a tiny dataset") {
  const fs::path dir = fresh_dir("pipeline");
  const ExperimentConfig cfg = tiny_config(dir);
  const TrainSummary t = cmd_train(cfg);
  CHECK(std::isfinite(t.vae_loss));
  CHECK(t.heldout.binary > 0.5);
  const std::string vae1 = slurp(dir / "vae.ckpt"), clf1 = slurp(dir / "classifier.ckpt");
  cmd_train(cfg);
  CHECK(slurp(dir / "vae.ckpt") == vae1);
  CHECK(slurp(dir / "classifier.ckpt") == clf1);

  const SweepResult res = cmd_unlearn(cfg);
  std::size_t csv = 0, js = 0;
  for (const auto& e : fs::directory_iterator(dir / "runs")) {
    csv += e.path().extension() == ".csv";
    js += e.path().extension() == ".json";
  }
  CHECK(csv == 2);
  CHECK(js == 2);
  CHECK(fs::exists(dir / "aggregate.json"));
  const json agg = json::parse(slurp(dir / "aggregate.json"));
  CHECK(agg.at("schema_version") == kAggregateSchemaVersion);
  CHECK(agg.at("algorithms").size() == 1);

  const std::vector<RunRecord> back = read_run_csv(dir);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].run_id == res.runs[i].run_id);
    REQUIRE(back[i].steps.size() == res.runs[i].steps.size());
    for (std::size_t k = 0; k < back[i].steps.size(); ++k) {
      CHECK(back[i].steps[k].forget_fraction == res.runs[i].steps[k].forget_fraction);
      CHECK(back[i].steps[k].cum_update_time_s == res.runs[i].steps[k].cum_update_time_s);
      CHECK(back[i].steps[k].retain_loss == res.runs[i].steps[k].retain_loss);
    }
    CHECK(back[i].fid_after == res.runs[i].fid_after);
  }

  // same seed, same trajectories (timing aside)
  ExperimentConfig again = cfg;
  again.out = dir / "again";
  again.checkpoints = dir;
  const SweepResult res2 = cmd_unlearn(again);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < res.runs[i].steps.size(); ++k) {
      CHECK(res2.runs[i].steps[k].forget_fraction == res.runs[i].steps[k].forget_fraction);
      CHECK(res2.runs[i].steps[k].retain_loss == res.runs[i].steps[k].retain_loss);
    }

  const std::vector<fs::path> files = cmd_plot(dir, dir / "plots");
  REQUIRE(files.size() == 3);
  const std::string curves = slurp(files[0]);
  CHECK(curves.find("class=\"band\"") != std::string::npos);
  CHECK(curves.find("class=\"curve\"") != std::string::npos);
  CHECK(slurp(files[1]).find("#1") != std::string::npos);

  const std::vector<fs::path> single = cmd_plot(dir / "runs" / "UNO-00.csv", dir / "plots-single");
  CHECK(slurp(single[0]).find("class=\"band\"") == std::string::npos);
  CHECK(slurp(single[0]).find("class=\"curve\"") != std::string::npos);

  CHECK_THROWS_AS(cmd_plot(fresh_dir("empty"), dir / "nothing"), Error);
}

TEST_CASE("parallel workers give the same trajectories") {
  const fs::path dir = fresh_dir("workers");
  ExperimentConfig cfg = tiny_config(dir);
  cfg.repeats = 3;
  cmd_train(cfg);
  const SweepResult one = cmd_unlearn(cfg);
  cfg.workers = 3;
  cfg.out = dir / "par";
  cfg.checkpoints = dir;
  const SweepResult par = cmd_unlearn(cfg);
  for (std::size_t i = 0; i < one.runs.size(); ++i) {
    CHECK(par.runs[i].run_id == one.runs[i].run_id);
    for (std::size_t k = 0; k < one.runs[i].steps.size(); ++k)
      CHECK(par.runs[i].steps[k].forget_fraction == one.runs[i].steps[k].forget_fraction);
  }
}

TEST_CASE("missing label file") {
  const fs::path dir = fresh_dir("missing");
  ExperimentConfig cfg = tiny_config(dir);
  fs::remove(dir / "train-labels");
  CHECK_THROWS_AS(cmd_train(cfg), Error);
  std::ofstream(dir / "train-labels") << "junk";
  try {
    cmd_train(cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK((e.code() == ErrorCode::BadMagic || e.code() == ErrorCode::TruncatedFile));
  }
}
