#include "uno/error.hpp"
#include "uno/runner.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> workers;
  std::string profile = "desk";
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--workers", c.workers, "parallel runs")->check(CLI::PositiveNumber);
  cmd->add_option("--profile", c.profile, "default set")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--set", c.sets, "override a key, e.g. --set unlearn.K=100 or --set repeats=3");
}

// "a.b.c=value" becomes {"a":{"b":{"c":value}}}; values parse as JSON when they can.
json set_patch(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw uno::Error(uno::ErrorCode::InvalidConfig, "--set expects key=value: " + s);
  json value;
  try {
    value = json::parse(s.substr(eq + 1));
  } catch (const json::exception&) {
    value = s.substr(eq + 1);
  }
  const json::json_pointer ptr("/" + [&] {
    std::string k = s.substr(0, eq);
    for (char& c : k)
      if (c == '.') c = '/';
    return k;
  }());
  json patch = json::object();
  patch[ptr] = value;
  return patch;
}

uno::ExperimentConfig resolve(const Common& c) {
  const uno::Profile profile = uno::parse_profile(c.profile);
  json patch = json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    try {
      patch = json::parse(in);
    } catch (const json::exception& e) {
      throw uno::Error(uno::ErrorCode::InvalidConfig, c.config + ": " + e.what());
    }
  }
  for (const std::string& s : c.sets) patch.merge_patch(set_patch(s));
  if (c.seed) patch["seed"] = *c.seed;
  if (!c.out.empty()) patch["out"] = c.out;
  if (c.workers) patch["workers"] = *c.workers;
  return uno::config_from_json(patch, profile);
}

uno::AggregateReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw uno::Error(uno::ErrorCode::Io, "cannot open " + path);
  try {
    return uno::report_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw uno::Error(uno::ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unlearning experiments for small VAEs"};
  app.require_subcommand(1);

  Common train_opts, unlearn_opts;
  CLI::App* train = app.add_subcommand("train", "train the baseline VAE and the retain/forget classifier");
  add_common(train, train_opts);

  CLI::App* unlearn = app.add_subcommand("unlearn", "run every configured algorithm with repeats");
  add_common(unlearn, unlearn_opts);
  bool dump_config = false;
  unlearn->add_flag("--print-config", dump_config, "print the resolved config and exit");

  CLI::App* plot = app.add_subcommand("plot", "draw SVG charts from run trajectories");
  std::string plot_in, plot_out;
  plot->add_option("runs", plot_in, "experiment directory, runs directory, or a CSV file")->required();
  plot->add_option("--out", plot_out, "directory for the SVG files (default: <runs>/plots)");

  CLI::App* compare = app.add_subcommand("compare", "speed-up of the classifier-guided variants");
  std::string base_path, hat_path, compare_out;
  compare->add_option("base", base_path, "aggregate.json with S, UNO, UNO-S")->required()->check(CLI::ExistingFile);
  compare->add_option("hat", hat_path, "aggregate.json with the hat variants (default: same file)");
  compare->add_option("--out", compare_out, "also write the table here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const uno::ExperimentConfig cfg = resolve(train_opts);
      uno::cmd_train(cfg, &std::cout);
      std::cout << "checkpoints in " << cfg.checkpoint_dir().string() << '\n';
    } else if (unlearn->parsed()) {
      const uno::ExperimentConfig cfg = resolve(unlearn_opts);
      if (dump_config) {
        std::cout << uno::to_json(cfg).dump(2) << '\n';
        return 0;
      }
      const uno::SweepResult res = uno::cmd_unlearn(cfg, &std::cout);
      std::cout << "\nalgorithm   reached  steps(mean)  time_s(mean)  FID ratio  rank(time) rank(FID)\n";
      for (const uno::AlgorithmSummary& s : res.report.algorithms) {
        char line[200];
        std::snprintf(line, sizeof line, "%-11s %2zu/%-2zu%s  %11.1f  %12.4g  %9.3f  %10d %9d\n", s.algorithm.c_str(),
                      s.reached, s.runs, s.not_reached ? "*" : " ", s.steps_to_unlearn.mean, s.time_to_unlearn.mean,
                      s.fid_ratio.mean, s.rank_time, s.rank_fid);
        std::cout << line;
      }
      std::cout << "aggregate written to " << (cfg.out / "aggregate.json").string() << '\n';
    } else if (plot->parsed()) {
      const std::filesystem::path out = plot_out.empty() ? std::filesystem::path(plot_in) / "plots" : std::filesystem::path(plot_out);
      for (const auto& f : uno::cmd_plot(plot_in, out)) std::cout << f.string() << '\n';
    } else if (compare->parsed()) {
      const uno::AggregateReport base = read_report(base_path);
      const uno::AggregateReport hat = hat_path.empty() ? base : read_report(hat_path);
      const std::string table = uno::format_compare(uno::cmd_compare(base, hat));
      std::cout << table;
      if (!compare_out.empty()) std::ofstream(compare_out) << table;
    }
  } catch (const uno::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
