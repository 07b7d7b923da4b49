#pragma once

#include "uno/training.hpp"
#include "uno/unlearn.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>

namespace uno {

enum class Profile { Desk, Paper };
std::string to_string(Profile p);
Profile parse_profile(const std::string& s);

inline constexpr int kAggregateSchemaVersion = 1;

struct DataConfig {
  std::filesystem::path train_images, train_labels;
  std::filesystem::path heldout_images, heldout_labels;
  std::size_t subset = 0;  // 0 keeps every training image
  std::set<int> forget_labels{1};
};

struct FidConfig {
  int n_fid = 2000;
  std::string reference = "retain";  // "retain" or "all" training images
};

struct ExperimentConfig {
  Profile profile = Profile::Desk;
  DataConfig data;
  VaeArch vae;
  TrainConfig vae_train;
  ClassifierArch classifier;
  TrainConfig classifier_train;
  nlohmann::json unlearn;  // shared UnlearnConfig keys
  std::map<std::string, nlohmann::json> per_algorithm;  // merge patches over `unlearn`
  std::vector<Algorithm> algorithms;
  int repeats = 10;
  std::uint64_t seed = 0;
  std::filesystem::path out = "runs";
  std::filesystem::path checkpoints;  // empty: same as out
  int workers = 1;
  FidConfig fid;

  // Settings for run r of algorithm a, seed derived from (seed, a, r).
  UnlearnConfig for_algorithm(Algorithm a, int r) const;
  std::filesystem::path checkpoint_dir() const { return checkpoints.empty() ? out : checkpoints; }
  void validate() const;  // throws InvalidConfig
};

ExperimentConfig default_config(Profile profile);
nlohmann::json to_json(const ExperimentConfig& config);
// Keys in `patch` override the profile defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& patch, Profile profile);
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path, Profile profile);

UnlearnConfig unlearn_from_json(const nlohmann::json& j);
nlohmann::json unlearn_to_json(const UnlearnConfig& c);

struct Workspace {
  LabeledDataset train;
  LabeledDataset heldout;
  Partition partition;
  Mat retain, forget;
};
Workspace load_workspace(const ExperimentConfig& config);

struct TrainSummary {
  double vae_loss = 0;
  double classifier_loss = 0;
  ClassifierAccuracy heldout;
};

// Writes vae.ckpt, classifier.ckpt and train.json under checkpoint_dir().
TrainSummary cmd_train(const ExperimentConfig& config, std::ostream* log = nullptr);

struct Stat {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
};
// Mean and sample standard deviation (n - 1); std is 0 for a single value.
Stat describe(const std::vector<double>& xs);

struct AlgorithmSummary {
  std::string algorithm;
  std::size_t runs = 0;
  std::size_t reached = 0;
  std::size_t failed = 0;
  bool not_reached = false;  // some run never crossed the threshold
  Stat steps_to_unlearn, time_to_unlearn;  // over the runs that crossed
  Stat time_per_step, fid_after, fid_ratio, fid_at_crossing;
  int rank_time = 0, rank_fid = 0;
};

struct AggregateReport {
  double fid_before = 0;
  std::vector<AlgorithmSummary> algorithms;
};

AggregateReport aggregate(const std::vector<RunRecord>& runs, double threshold);
nlohmann::json to_json(const AggregateReport& report);
AggregateReport report_from_json(const nlohmann::json& j);

nlohmann::json run_summary(const RunRecord& record, double threshold);

struct SweepResult {
  std::vector<RunRecord> runs;
  AggregateReport report;
};

// Runs every configured algorithm `repeats` times. Writes runs/<id>.csv and
// runs/<id>.json per run and aggregate.json last.
SweepResult cmd_unlearn(const ExperimentConfig& config, std::ostream* log = nullptr);

// Reads run CSVs (a directory or single files) back into records.
std::vector<RunRecord> read_run_csv(const std::filesystem::path& path);

// SVG files: forget fraction per step with a min/max band, and bar charts of
// time to unlearn and FID ratio with one-sided std bars and rank labels.
std::vector<std::filesystem::path> cmd_plot(const std::filesystem::path& runs, const std::filesystem::path& out);

struct CompareRow {
  std::string base, hat;
  std::optional<double> time_base, time_hat, speed_up;  // empty: not applicable
};
// Pairs S/S-hat, UNO/UNO-hat, UNO-S/UNO-S-hat and lists H without a speed-up.
// Throws MissingPair when a base algorithm has no hat counterpart.
std::vector<CompareRow> cmd_compare(const AggregateReport& base, const AggregateReport& hat);
std::string format_compare(const std::vector<CompareRow>& rows);

}  // namespace uno
