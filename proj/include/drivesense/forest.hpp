#pragma once

// Random forest classifier for binary labels: bootstrap resampling, Gini
// CART trees with per-node feature subsampling, and a majority vote.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivesense/dbi.hpp"
#include "drivesense/error.hpp"
#include "drivesense/metrics.hpp"
#include "drivesense/rng.hpp"

namespace drivesense {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::optional<std::size_t> max_depth;  // unlimited when empty
  std::size_t min_samples_leaf = 1;
  std::optional<std::size_t> mtry;  // floor(sqrt(n_features)) when empty
  std::uint64_t seed = 0;
  bool tie_to_positive = true;  // an even vote split predicts class 1
  unsigned threads = 0;         // 0 = hardware concurrency; never affects results

  std::size_t resolved_mtry(std::size_t n_features) const {
    const std::size_t m = mtry.value_or(static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n_features)))));
    return std::clamp<std::size_t>(m, 1, n_features);
  }
};

inline double gini(std::span<const std::int64_t> counts) {
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return 0.0;
  double sum_sq = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

inline double gini(std::int64_t c0, std::int64_t c1) {
  const std::int64_t counts[2] = {c0, c1};
  return gini(counts);
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::int64_t count0 = 0;
  std::int64_t count1 = 0;

  bool leaf() const { return feature < 0; }
};

class DecisionTree {
 public:
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(std::span<const double> x) const {
    const TreeNode* n = &nodes.front();
    while (!n->leaf()) n = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->left : n->right)];
    return *n;
  }

  int vote(std::span<const double> x, bool tie_to_positive) const {
    const auto& leaf = leaf_for(x);
    if (leaf.count1 == leaf.count0) return tie_to_positive ? 1 : 0;
    return leaf.count1 > leaf.count0 ? 1 : 0;
  }

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [id, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      const auto& n = nodes[static_cast<std::size_t>(id)];
      if (!n.leaf()) {
        stack.push_back({n.left, d + 1});
        stack.push_back({n.right, d + 1});
      }
    }
    return best;
  }
};

namespace detail {

struct TreeBuilder {
  std::span<const double> x;
  std::span<const int> y;
  std::size_t n_features;
  const ForestConfig& cfg;
  std::size_t mtry;
  Rng rng;

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;  // n_left * gini_left + n_right * gini_right
  };

  double value(std::uint32_t row, std::size_t f) const { return x[row * n_features + f]; }

  std::optional<Split> best_split(std::span<const std::uint32_t> rows, std::span<const std::size_t> features,
                                  std::int64_t c0, std::int64_t c1,
                                  std::vector<std::pair<double, int>>& scratch) const {
    std::optional<Split> best;
    const auto n = static_cast<std::int64_t>(rows.size());
    const auto min_leaf = static_cast<std::int64_t>(cfg.min_samples_leaf);
    for (const std::size_t f : features) {
      scratch.clear();
      for (auto r : rows) scratch.emplace_back(value(r, f), y[r]);
      std::sort(scratch.begin(), scratch.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      if (scratch.front().first == scratch.back().first) continue;
      std::int64_t l0 = 0, l1 = 0;
      for (std::int64_t i = 0; i + 1 < n; ++i) {
        (scratch[static_cast<std::size_t>(i)].second ? l1 : l0) += 1;
        const double a = scratch[static_cast<std::size_t>(i)].first;
        const double b = scratch[static_cast<std::size_t>(i + 1)].first;
        if (!(a < b)) continue;
        const std::int64_t nl = i + 1, nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const std::int64_t r0 = c0 - l0, r1 = c1 - l1;
        const double score = static_cast<double>(nl) - static_cast<double>(l0 * l0 + l1 * l1) / static_cast<double>(nl) +
                             static_cast<double>(nr) - static_cast<double>(r0 * r0 + r1 * r1) / static_cast<double>(nr);
        double threshold = a + (b - a) * 0.5;
        if (!(threshold < b)) threshold = a;
        const bool better = !best || score < best->score ||
                            (score == best->score && (static_cast<int>(f) < best->feature ||
                                                      (static_cast<int>(f) == best->feature && threshold < best->threshold)));
        if (better) best = Split{static_cast<int>(f), threshold, score};
      }
    }
    return best;
  }

  DecisionTree grow(std::vector<std::uint32_t> rows) {
    DecisionTree tree;
    struct Task {
      int node;
      std::size_t begin, end, depth;
    };
    std::vector<Task> stack;
    std::vector<std::size_t> all_features(n_features);
    for (std::size_t f = 0; f < n_features; ++f) all_features[f] = f;
    std::vector<std::size_t> sampled;
    std::vector<std::pair<double, int>> scratch;
    scratch.reserve(rows.size());

    tree.nodes.emplace_back();
    stack.push_back({0, 0, rows.size(), 0});
    while (!stack.empty()) {
      const Task t = stack.back();
      stack.pop_back();
      std::span<std::uint32_t> node_rows(rows.data() + t.begin, t.end - t.begin);
      std::int64_t c0 = 0, c1 = 0;
      for (auto r : node_rows) (y[r] ? c1 : c0) += 1;
      auto& node = tree.nodes[static_cast<std::size_t>(t.node)];
      node.count0 = c0;
      node.count1 = c1;
      const bool pure = c0 == 0 || c1 == 0;
      const bool depth_cap = cfg.max_depth && t.depth >= *cfg.max_depth;
      if (pure || depth_cap || node_rows.size() < 2 * cfg.min_samples_leaf) continue;

      // mtry features without replacement (partial Fisher-Yates).
      for (std::size_t i = 0; i < mtry; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(n_features - i));
        std::swap(all_features[i], all_features[j]);
      }
      sampled.assign(all_features.begin(), all_features.begin() + static_cast<std::ptrdiff_t>(mtry));
      std::sort(sampled.begin(), sampled.end());

      const auto split = best_split(node_rows, sampled, c0, c1, scratch);
      if (!split) continue;

      const auto f = static_cast<std::size_t>(split->feature);
      const double thr = split->threshold;
      auto mid = std::stable_partition(node_rows.begin(), node_rows.end(),
                                       [&](std::uint32_t r) { return value(r, f) <= thr; });
      const std::size_t left_end = t.begin + static_cast<std::size_t>(mid - node_rows.begin());

      const int left_id = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      const int right_id = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      auto& parent = tree.nodes[static_cast<std::size_t>(t.node)];
      parent.feature = split->feature;
      parent.threshold = thr;
      parent.left = left_id;
      parent.right = right_id;
      // Right pushed first so the left subtree is expanded first.
      stack.push_back({right_id, left_end, t.end, t.depth + 1});
      stack.push_back({left_id, t.begin, left_end, t.depth + 1});
    }
    return tree;
  }
};

}  // namespace detail

class ForestModel {
 public:
  std::vector<DecisionTree> trees;
  ForestConfig config;
  std::vector<std::string> feature_names;

  std::size_t n_features() const { return feature_names.size(); }

  double predict_score(std::span<const double> x) const {
    if (trees.empty()) return 0.0;
    std::size_t ones = 0;
    for (const auto& t : trees) ones += static_cast<std::size_t>(t.vote(x, config.tie_to_positive));
    return static_cast<double>(ones) / static_cast<double>(trees.size());
  }

  int predict(std::span<const double> x) const {
    std::size_t ones = 0;
    for (const auto& t : trees) ones += static_cast<std::size_t>(t.vote(x, config.tie_to_positive));
    const std::size_t zeros = trees.size() - ones;
    if (ones == zeros) return config.tie_to_positive ? 1 : 0;
    return ones > zeros ? 1 : 0;
  }

  nlohmann::ordered_json to_json() const;
  static ForestModel from_json(const nlohmann::json& j);
};

namespace detail {

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Tree i draws its bootstrap sample and feature subsets from seed + i, so the
// model does not depend on how trees are scheduled across threads.
inline ForestModel train_forest(std::span<const double> x, std::span<const int> y, std::size_t n_features,
                                std::vector<std::string> feature_names, const ForestConfig& config) {
  const std::size_t m = y.size();
  if (n_features == 0 || x.size() != m * n_features) throw Error(Errc::invalid_argument, "matrix shape mismatch");
  if (m < 2) throw Error(Errc::invalid_argument, "need at least 2 training rows");
  if (config.n_trees < 1) throw Error(Errc::invalid_argument, "n_trees must be >= 1");
  if (config.mtry && (*config.mtry < 1 || *config.mtry > n_features)) {
    throw Error(Errc::invalid_argument, "mtry must lie in [1, n_features]");
  }
  const auto positives = std::count(y.begin(), y.end(), 1);
  if (positives == 0 || static_cast<std::size_t>(positives) == m) {
    throw Error(Errc::degenerate_labels, "training labels contain a single class");
  }
  ForestModel model;
  model.config = config;
  model.feature_names = std::move(feature_names);
  model.trees.resize(config.n_trees);
  const std::size_t mtry = config.resolved_mtry(n_features);
  detail::parallel_for(config.n_trees, config.threads, [&](std::size_t i) {
    detail::TreeBuilder builder{x, y, n_features, config, mtry, Rng(config.seed + i)};
    std::vector<std::uint32_t> rows(m);
    for (auto& r : rows) r = static_cast<std::uint32_t>(builder.rng.below(m));
    model.trees[i] = builder.grow(std::move(rows));
  });
  return model;
}

inline ForestModel train_forest(const FeatureMatrix& train, const ForestConfig& config) {
  return train_forest(train.data, train.labels, train.cols, train.column_names, config);
}

// Mean decrease in Gini impurity, weighted by the node's share of its tree's
// bootstrap sample, summed over trees and normalised to 1.
inline std::vector<double> feature_importance(const ForestModel& model) {
  std::vector<double> imp(model.n_features(), 0.0);
  for (const auto& tree : model.trees) {
    const auto& root = tree.nodes.front();
    const double total = static_cast<double>(root.count0 + root.count1);
    for (const auto& n : tree.nodes) {
      if (n.leaf()) continue;
      const auto& l = tree.nodes[static_cast<std::size_t>(n.left)];
      const auto& r = tree.nodes[static_cast<std::size_t>(n.right)];
      const double nn = static_cast<double>(n.count0 + n.count1);
      const double nl = static_cast<double>(l.count0 + l.count1);
      const double nr = static_cast<double>(r.count0 + r.count1);
      const double decrease = gini(n.count0, n.count1) - nl / nn * gini(l.count0, l.count1) - nr / nn * gini(r.count0, r.count1);
      imp[static_cast<std::size_t>(n.feature)] += nn / total * std::max(0.0, decrease);
    }
  }
  double sum = 0.0;
  for (double v : imp) sum += v;
  if (sum <= 0.0) {
    std::fill(imp.begin(), imp.end(), imp.empty() ? 0.0 : 1.0 / static_cast<double>(imp.size()));
  } else {
    for (auto& v : imp) v /= sum;
  }
  return imp;
}

struct EvaluationReport {
  double accuracy = 0.0;
  double auc = 0.0;
  std::array<ClassMetrics, 2> per_class{};
  Confusion confusion;
  std::vector<std::pair<std::string, double>> importances;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["accuracy"] = accuracy;
    j["auc"] = auc;
    for (int k = 0; k < 2; ++k) {
      j["class_" + std::to_string(k)] = {{"precision", per_class[k].precision},
                                         {"recall", per_class[k].recall},
                                         {"f1", per_class[k].f1}};
    }
    j["confusion"] = {{"rows", "observed"},
                      {"columns", "predicted"},
                      {"matrix", {{confusion.counts[0][0], confusion.counts[0][1]},
                                  {confusion.counts[1][0], confusion.counts[1][1]}}}};
    nlohmann::ordered_json imp = nlohmann::ordered_json::object();
    for (const auto& [name, w] : importances) imp[name] = w;
    j["importances"] = imp;
    return j;
  }
};

inline EvaluationReport report_from_confusion(const Confusion& c) {
  const auto d = derive_metrics(c);
  EvaluationReport r;
  r.confusion = c;
  r.accuracy = d.accuracy;
  r.per_class = d.per_class;
  return r;
}

inline EvaluationReport evaluate(const ForestModel& model, const FeatureMatrix& test) {
  if (test.rows == 0) throw Error(Errc::empty_dataset, "empty test set");
  if (test.cols != model.n_features()) throw Error(Errc::invalid_argument, "test matrix has wrong column count");
  Confusion c;
  std::vector<double> scores(test.rows);
  for (std::size_t i = 0; i < test.rows; ++i) {
    const auto x = test.row(i);
    scores[i] = model.predict_score(x);
    c.add(test.labels[i], model.predict(x));
  }
  EvaluationReport r = report_from_confusion(c);
  r.auc = auc_mann_whitney(scores, test.labels);
  const auto imp = feature_importance(model);
  for (std::size_t f = 0; f < imp.size(); ++f) r.importances.emplace_back(model.feature_names[f], imp[f]);
  return r;
}

// ---- serialization ----

inline nlohmann::ordered_json forest_config_json(const ForestConfig& c) {
  nlohmann::ordered_json j;
  j["n_trees"] = c.n_trees;
  j["max_depth"] = c.max_depth ? nlohmann::ordered_json(*c.max_depth) : nlohmann::ordered_json();
  j["min_samples_leaf"] = c.min_samples_leaf;
  j["mtry"] = c.mtry ? nlohmann::ordered_json(*c.mtry) : nlohmann::ordered_json();
  j["seed"] = c.seed;
  j["tie_to_positive"] = c.tie_to_positive;
  return j;
}

inline ForestConfig forest_config_from_json(const nlohmann::json& j, ForestConfig c = {}) {
  if (j.contains("n_trees")) c.n_trees = j.at("n_trees").get<std::size_t>();
  if (j.contains("max_depth")) {
    c.max_depth = j.at("max_depth").is_null() ? std::nullopt : std::optional(j.at("max_depth").get<std::size_t>());
  }
  if (j.contains("min_samples_leaf")) c.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
  if (j.contains("mtry")) c.mtry = j.at("mtry").is_null() ? std::nullopt : std::optional(j.at("mtry").get<std::size_t>());
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("tie_to_positive")) c.tie_to_positive = j.at("tie_to_positive").get<bool>();
  if (j.contains("threads")) c.threads = j.at("threads").get<unsigned>();
  return c;
}

inline nlohmann::ordered_json ForestModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "drivesense-forest-v1";
  j["config"] = forest_config_json(config);
  j["feature_names"] = feature_names;
  auto trees_json = nlohmann::ordered_json::array();
  for (const auto& t : trees) {
    nlohmann::ordered_json tj;
    std::vector<int> feature, left, right;
    std::vector<double> threshold;
    std::vector<std::int64_t> c0, c1;
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      c0.push_back(n.count0);
      c1.push_back(n.count1);
    }
    tj["feature"] = feature;
    tj["threshold"] = threshold;
    tj["left"] = left;
    tj["right"] = right;
    tj["count0"] = c0;
    tj["count1"] = c1;
    trees_json.push_back(std::move(tj));
  }
  j["trees"] = std::move(trees_json);
  return j;
}

inline ForestModel ForestModel::from_json(const nlohmann::json& j) {
  ForestModel m;
  m.config = forest_config_from_json(j.at("config"));
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& tj : j.at("trees")) {
    DecisionTree t;
    const auto feature = tj.at("feature").get<std::vector<int>>();
    const auto threshold = tj.at("threshold").get<std::vector<double>>();
    const auto left = tj.at("left").get<std::vector<int>>();
    const auto right = tj.at("right").get<std::vector<int>>();
    const auto c0 = tj.at("count0").get<std::vector<std::int64_t>>();
    const auto c1 = tj.at("count1").get<std::vector<std::int64_t>>();
    for (std::size_t i = 0; i < feature.size(); ++i) {
      if (feature[i] >= static_cast<int>(m.feature_names.size())) {
        throw Error(Errc::format, "node feature index out of range");
      }
      t.nodes.push_back({feature[i], threshold[i], left[i], right[i], c0[i], c1[i]});
    }
    if (t.nodes.empty()) throw Error(Errc::format, "empty tree");
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace drivesense
