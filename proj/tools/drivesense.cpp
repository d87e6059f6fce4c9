// drivesense command-line tool.
//
//   drivesense synth --spec cohort.json --out data/
//   drivesense extract data/ --out work/
//   drivesense report work/features.csv --out work/report/
//   drivesense train-eval work/features.csv --out work/results/
//
// Exit codes: 0 success, 1 pipeline error, 2 usage or configuration error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drivesense/pipeline.hpp"
#include "drivesense/synth.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPipeline = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> threads;

  std::string spec_file;
  std::string effect;
  std::optional<double> strength;
  std::string data_dir;
  std::string features;
  std::vector<int> groups;
  bool group_by_participant = false;
  std::optional<std::size_t> trees;
};

drivesense::PipelineConfig make_config(const Options& o) {
  drivesense::PipelineConfig cfg;
  try {
    if (!o.config_file.empty()) cfg = drivesense::load_config(o.config_file);
  } catch (const drivesense::Error& e) {
    throw UsageError(e.what());
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (cfg.output_dir.empty()) cfg.output_dir = ".";
  if (o.threads) cfg.forest.threads = *o.threads;
  if (!o.groups.empty()) cfg.groups = o.groups;
  if (o.group_by_participant) cfg.group_by_participant = true;
  if (o.trees) cfg.forest.n_trees = *o.trees;
  try {
    cfg.validate();
  } catch (const drivesense::Error& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

int cmd_synth(const Options& o) {
  drivesense::CohortSpec spec;
  try {
    const auto content = drivesense::read_file(o.spec_file);
    spec = drivesense::cohort_spec_from_json(nlohmann::json::parse(content));
    if (o.seed) spec.seed = *o.seed;
    if (!o.effect.empty() || o.strength) {
      const auto effect = o.effect.empty() ? drivesense::to_string(spec.effect) : o.effect;
      spec = drivesense::inject_planted_signal(spec, effect, o.strength.value_or(spec.effect_strength));
    }
    spec.validate();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(o.spec_file + ": " + e.what());
  } catch (const drivesense::Error& e) {
    throw UsageError(e.what());
  }
  const std::filesystem::path out = o.out.empty() ? std::filesystem::path("data") : std::filesystem::path(o.out);
  std::cout << drivesense::generate_cohort(spec, out).string() << '\n';
  return kExitOk;
}

int cmd_extract(const Options& o) {
  auto cfg = make_config(o);
  if (!o.data_dir.empty()) cfg.input_dir = o.data_dir;
  if (cfg.input_dir.empty()) throw UsageError("extract needs a data directory");
  const auto r = drivesense::run_extract(cfg);
  std::cout << r.features.string() << " (" << r.rows << " rows)\n";
  return kExitOk;
}

int cmd_report(const Options& o) {
  const auto cfg = make_config(o);
  const auto r = drivesense::run_report(o.features, cfg);
  std::cout << drivesense::time_of_day_csv(r.shares);
  std::cout << r.time_of_day.string() << '\n' << r.quarterly_non_mci.string() << '\n' << r.quarterly_mci.string() << '\n';
  return kExitOk;
}

int cmd_train_eval(const Options& o) {
  const auto cfg = make_config(o);
  const auto r = drivesense::run_train_eval(o.features, cfg);
  std::cout << drivesense::format_results_table(r.suite);
  std::cout << r.results_json.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-vehicle sensing pipeline: synthetic cohorts, driving indexes, random-forest evaluation"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_file, "key = value configuration file");
  app.add_option("--seed", o.seed, "seed for generation, splitting and training");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--threads", o.threads, "worker threads for forest training (0 = all cores)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  synth->add_option("--spec", o.spec_file, "cohort specification (JSON)")->required();
  synth->add_option("--effect", o.effect, "planted effect: none, night_trip_deficit, event_rate_shift");
  synth->add_option("--strength", o.strength, "planted effect strength in standard deviations");

  auto* extract = app.add_subcommand("extract", "parse streams into features.csv");
  extract->add_option("data_dir", o.data_dir, "cohort directory containing manifest.json");

  auto* report = app.add_subcommand("report", "time-of-day and quarterly tables");
  report->add_option("features", o.features, "features.csv written by extract")->required();

  auto* train = app.add_subcommand("train-eval", "train and evaluate the six input groups");
  train->add_option("features", o.features, "features.csv written by extract")->required();
  train->add_option("--group", o.groups, "run only these input groups (1-6)");
  train->add_flag("--group-by-participant", o.group_by_participant, "keep each participant on one side of the split");
  train->add_option("--trees", o.trees, "number of trees");

  // Global options are accepted after the subcommand name as well.
  for (auto* sub : {synth, extract, report, train}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*extract) return cmd_extract(o);
    if (*report) return cmd_report(o);
    if (*train) return cmd_train_eval(o);
  } catch (const UsageError& e) {
    std::cerr << "drivesense: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "drivesense: " << e.what() << '\n';
    return kExitPipeline;
  }
  return kExitUsage;
}
