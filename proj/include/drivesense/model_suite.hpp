#pragma once

// The six model-input groups, the stratified hold-out split, and the
// train/evaluate loop that produces the consolidated results table.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivesense/dbi.hpp"
#include "drivesense/error.hpp"
#include "drivesense/forest.hpp"
#include "drivesense/preprocess.hpp"
#include "drivesense/rng.hpp"

namespace drivesense {

inline constexpr int kNumModelGroups = 6;

inline std::string model_group_label(int group) {
  switch (group) {
    case 1: return "Only age";
    case 2: return "Number of trips (total, peak, night)";
    case 3: return "Driver variables";
    case 4: return "Driving variables";
    case 5: return "Age with driving variables";
    case 6: return "All the variables";
    default: throw Error(Errc::invalid_argument, "model group must be 1..6, got " + std::to_string(group));
  }
}

inline std::vector<std::string> select_model_inputs(int group) {
  const auto driver = driver_feature_names();
  const auto driving = driving_feature_names();
  switch (group) {
    case 1: return {"age"};
    case 2: return {"total_trips", "peak_trips", "night_trips"};
    case 3: return {driver.begin(), driver.end()};
    case 4: return {driving.begin(), driving.end()};
    case 5: {
      std::vector<std::string> out{"age"};
      out.insert(out.end(), driving.begin(), driving.end());
      return out;
    }
    case 6: return {kFeatureNames.begin(), kFeatureNames.end()};
    default: throw Error(Errc::invalid_argument, "model group must be 1..6, got " + std::to_string(group));
  }
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Stratified hold-out: each class is shuffled and split independently,
// round(n_class * test_fraction) rows going to the test side. With
// `groups`, whole groups (participants) are assigned instead of rows; a
// group's class is the label of its first row.
inline SplitIndices split_train_test(std::span<const int> labels, double test_fraction, std::uint64_t seed,
                                     std::span<const std::string> groups = {}) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(Errc::invalid_argument, "test_fraction must lie in (0,1)");
  }
  const bool grouped = !groups.empty();
  if (grouped && groups.size() != labels.size()) throw Error(Errc::invalid_argument, "group ids misaligned");

  // Units are rows, or distinct groups in order of first appearance.
  std::vector<std::vector<std::size_t>> units;
  std::vector<int> unit_label;
  if (grouped) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto [it, inserted] = index.try_emplace(groups[i], units.size());
      if (inserted) {
        units.emplace_back();
        unit_label.push_back(labels[i]);
      }
      units[it->second].push_back(i);
    }
  } else {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      units.push_back({i});
      unit_label.push_back(labels[i]);
    }
  }

  SplitIndices out;
  Rng rng(seed);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t u = 0; u < units.size(); ++u) {
      if (unit_label[u] == cls) members.push_back(u);
    }
    if (members.size() < 2) {
      throw Error(Errc::insufficient_class, "class " + std::to_string(cls) + " has fewer than 2 " +
                                                (grouped ? "participants" : "rows"));
    }
    rng.shuffle(std::span(members));
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(members.size()) * test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
    for (std::size_t k = 0; k < members.size(); ++k) {
      auto& side = k < n_test ? out.test : out.train;
      side.insert(side.end(), units[members[k]].begin(), units[members[k]].end());
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

struct SuiteConfig {
  ForestConfig forest{};
  double test_fraction = 0.33;
  std::uint64_t split_seed = 0;
  bool group_by_participant = false;
  bool preprocess = true;
  std::vector<int> groups{1, 2, 3, 4, 5, 6};
};

struct GroupResult {
  int group = 0;
  std::string label;
  std::vector<std::string> features;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  EvaluationReport report;
  ForestModel model;
};

struct SuiteResult {
  std::vector<GroupResult> groups;
  PreprocessReport preprocess;  // fitted on the training split, all continuous columns

  nlohmann::ordered_json to_json(const SuiteConfig& cfg) const {
    nlohmann::ordered_json j;
    j["config"] = {{"forest", forest_config_json(cfg.forest)},
                   {"test_fraction", cfg.test_fraction},
                   {"split_seed", cfg.split_seed},
                   {"group_by_participant", cfg.group_by_participant},
                   {"preprocess", cfg.preprocess}};
    auto models = nlohmann::ordered_json::array();
    for (const auto& g : groups) {
      nlohmann::ordered_json m;
      m["model"] = g.group;
      m["input"] = g.label;
      m["features"] = g.features;
      m["n_train"] = g.n_train;
      m["n_test"] = g.n_test;
      m.update(g.report.to_json());
      models.push_back(std::move(m));
    }
    j["models"] = std::move(models);
    j["preprocess"] = preprocess.to_json();
    return j;
  }
};

inline SuiteResult run_model_suite(const FeatureMatrix& all, const SuiteConfig& cfg) {
  const auto split = split_train_test(all.labels, cfg.test_fraction, cfg.split_seed,
                                      cfg.group_by_participant ? std::span<const std::string>(all.participant_ids)
                                                               : std::span<const std::string>{});
  FeatureMatrix train = all.select_rows(split.train);
  FeatureMatrix test = all.select_rows(split.test);
  const auto continuous = default_continuous_columns();

  SuiteResult result;
  if (cfg.preprocess) {
    const auto pre = Preprocessor::fit(train, continuous);
    train = pre.transform(train, &result.preprocess);
    test = pre.transform(test);
  }
  for (int group : cfg.groups) {
    GroupResult g;
    g.group = group;
    g.label = model_group_label(group);
    g.features = select_model_inputs(group);
    const auto xtr = train.select_columns(g.features);
    const auto xte = test.select_columns(g.features);
    g.n_train = xtr.rows;
    g.n_test = xte.rows;
    g.model = train_forest(xtr, cfg.forest);
    g.report = evaluate(g.model, xte);
    result.groups.push_back(std::move(g));
  }
  return result;
}

inline SuiteResult run_model_suite(std::span<const DbiRecord> records, const SuiteConfig& cfg) {
  return run_model_suite(build_matrix(records), cfg);
}

// Plain-text table laid out like the published results: two lines per
// model, one per class, with the confusion-matrix row for that observed class.
inline std::string format_results_table(const SuiteResult& r) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-5s  %-38s  %8s  %5s  %9s  %6s  %5s  %8s  %7s  %7s\n", "Model", "Input",
                "Accuracy", "AUC", "Precision", "Recall", "F1", "Observed", "Pred 0", "Pred 1");
  out << line;
  out << std::string(std::char_traits<char>::length(line) - 1, '-') << '\n';
  for (const auto& g : r.groups) {
    const auto& e = g.report;
    for (int k = 0; k < 2; ++k) {
      const std::string model = k == 0 ? std::to_string(g.group) : "";
      const std::string input = k == 0 ? g.label : "";
      char acc[16] = "", auc[16] = "";
      if (k == 0) {
        std::snprintf(acc, sizeof acc, "%.2f", e.accuracy);
        std::snprintf(auc, sizeof auc, "%.2f", e.auc);
      }
      std::snprintf(line, sizeof line, "%-5s  %-38s  %8s  %5s  %9.2f  %6.2f  %5.2f  %8d  %7lld  %7lld\n", model.c_str(),
                    input.c_str(), acc, auc, e.per_class[k].precision, e.per_class[k].recall, e.per_class[k].f1, k,
                    static_cast<long long>(e.confusion.counts[k][0]), static_cast<long long>(e.confusion.counts[k][1]));
      out << line;
    }
  }
  return out.str();
}

}  // namespace drivesense
