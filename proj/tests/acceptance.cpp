#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "drivesense/pipeline.hpp"
#include "drivesense/synth.hpp"

using namespace drivesense;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("drivesense_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(DRIVESENSE_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome ac1_metric_arithmetic() {
  const auto t0 = Clock::now();
  auto near = [](double a, double b) { return std::abs(a - b) <= 0.005; };
  const auto m1 = report_from_confusion(Confusion::from_rows({1242, 533}, {0, 797}));
  const bool ok1 = near(m1.accuracy, 0.79) && near(m1.per_class[0].precision, 1.00) &&
                   near(m1.per_class[1].precision, 0.60) && near(m1.per_class[0].recall, 0.70) &&
                   near(m1.per_class[1].recall, 1.00) && near(m1.per_class[0].f1, 0.82) &&
                   near(m1.per_class[1].f1, 0.75);
  const auto m2 = report_from_confusion(Confusion::from_rows({1775, 0}, {366, 431}));
  const bool ok2 = near(m2.accuracy, 0.86) && near(m2.per_class[0].precision, 0.83) &&
                   near(m2.per_class[1].recall, 0.54) && near(m2.per_class[1].f1, 0.70);
  const double t = seconds_since(t0);
  return {ok1 && ok2 && t < 1.0,
          fmt("model1 acc=%.4f f1=(%.4f,%.4f); model2 acc=%.4f p0=%.4f r1=%.4f f1_1=%.4f; %.3fs", m1.accuracy,
              m1.per_class[0].f1, m1.per_class[1].f1, m2.accuracy, m2.per_class[0].precision,
              m2.per_class[1].recall, m2.per_class[1].f1, t)};
}

Outcome ac2_shape() {
  const auto t0 = Clock::now();
  CohortSpec spec;
  spec.total_trips = 7794;
  const auto m = build_matrix(truth_records(plan_cohort(spec)));
  const auto split = split_train_test(m.labels, 0.33, 0);
  const double t = seconds_since(t0);
  const long test = static_cast<long>(split.test.size());
  return {m.rows == 7794 && m.cols == 19 && std::abs(test - 2572) <= 1 && t < 30.0,
          fmt("X=(%zu, %zu) test=%ld; %.2fs", m.rows, m.cols, test, t)};
}

Outcome ac3_dbi_oracle() {
  const auto t0 = Clock::now();
  const auto dir = scratch("ac3");
  CohortSpec spec;
  spec.seed = 3;
  spec.n_participants = 10;
  spec.total_trips = 1000;
  generate_cohort(spec, dir);
  PipelineConfig cfg;
  cfg.dbi.clock = spec.clock();
  const auto result = extract_cohort(dir, cfg);
  const auto ledger = nlohmann::json::parse(read_file((dir / "ledger.json").string()));

  std::map<std::string, nlohmann::json> truth;
  std::map<std::pair<std::string, std::string>, std::array<int, 5>> truth_agg;
  for (const auto& p : ledger["participants"]) {
    for (const auto& t : p["trips"]) {
      truth[t["trip_id"].get<std::string>()] = t;
      auto& a = truth_agg[{p["participant_id"].get<std::string>(), t["quarter"].get<std::string>()}];
      a[0] += 1;
      a[1] += t["night"].get<bool>();
      a[2] += t["peak"].get<bool>();
      a[3] += t["urban"].get<bool>();
      a[4] += !t["urban"].get<bool>();
    }
  }

  std::size_t mismatches = 0, matched = 0;
  double worst_rel = 0.0;
  for (const auto& trip : result.trips) {
    const auto it = truth.find(trip.trip_id);
    if (it == truth.end()) {
      ++mismatches;
      continue;
    }
    ++matched;
    const auto& t = it->second;
    const auto cls = classify_trip(trip, cfg.dbi);
    const double want_km = t["distance_km"].get<double>();
    const double rel = std::abs(trip.distance_km.value_or(0.0) - want_km) / want_km;
    worst_rel = std::max(worst_rel, rel);
    const bool ok = rel <= 1e-3 && trip.duration_s == t["duration_s"].get<double>() &&
                    cls.night == t["night"].get<bool>() && cls.peak == t["peak"].get<bool>() &&
                    (cls.distance == DistanceClass::urban) == t["urban"].get<bool>() &&
                    cls.quarter == t["quarter"].get<std::string>() &&
                    count_events(trip.events, EventKind::harsh_acceleration) == t["n_harsh_accel"].get<std::size_t>() &&
                    count_events(trip.events, EventKind::hard_braking) == t["n_hard_brake"].get<std::size_t>() &&
                    count_events(trip.events, EventKind::hard_turn) == t["n_hard_turn"].get<std::size_t>();
    mismatches += !ok;
  }
  std::size_t agg_mismatches = 0;
  for (const auto& r : result.records) {
    const auto it = truth_agg.find({r.participant_id, r.period_id});
    const std::array<int, 5> got{r.total_trips, r.night_trips, r.peak_trips, r.urban_trips, r.suburb_trips};
    agg_mismatches += it == truth_agg.end() || it->second != got;
  }
  fs::remove_all(dir);
  const double t = seconds_since(t0);
  return {matched == 1000 && result.trips.size() == 1000 && mismatches == 0 && agg_mismatches == 0 && t < 60.0,
          fmt("%zu/%zu trips matched, %zu trip mismatches, %zu aggregate mismatches, worst distance error %.2e; %.2fs",
              matched, truth.size(), mismatches, agg_mismatches, worst_rel, t)};
}

// Reference counter: a run starts wherever a sample crosses the threshold and
// its predecessor either does not or lies beyond the linking gap.
std::array<std::size_t, 3> naive_event_counts(const std::vector<AccelSample>& s, double rate_hz) {
  const auto max_gap = static_cast<std::int64_t>(std::ceil(2500.0 / rate_hz));
  std::array<std::size_t, 3> c{};
  const double thr = kHarshThreshold;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool linked = i > 0 && epoch_ms(s[i].timestamp) - epoch_ms(s[i - 1].timestamp) <= max_gap;
    const auto& a = s[i].accel;
    c[0] += a.x > thr && !(linked && s[i - 1].accel.x > thr);
    c[1] += a.x < -thr && !(linked && s[i - 1].accel.x < -thr);
    c[2] += std::abs(a.y) > thr && !(linked && std::abs(s[i - 1].accel.y) > thr);
  }
  return c;
}

Outcome ac4_event_oracle() {
  const auto t0 = Clock::now();
  Rng rng(44);
  std::size_t failures = 0, events = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const double rate = std::array{1.0, 5.0, 10.0}[rng.below(3)];
    const auto n = 1 + rng.below(120);
    std::vector<Vec3> accel(n);
    for (auto& a : accel) a = {rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0), 9.81};
    auto series = make_series(accel, rate);
    // occasional dropouts so the linking gap is exercised
    for (std::size_t i = 1; i < series.size(); ++i) {
      if (rng.uniform() < 0.05) {
        for (std::size_t k = i; k < series.size(); ++k) series[k].timestamp += std::chrono::seconds{5};
      }
    }
    const auto ev = detect_events(series, rate);
    const auto want = naive_event_counts(series, rate);
    const std::array got{count_events(ev, EventKind::harsh_acceleration), count_events(ev, EventKind::hard_braking),
                         count_events(ev, EventKind::hard_turn)};
    failures += got != want;
    events += ev.size();
  }
  return {failures == 0, fmt("10000 series, %zu events, %zu disagreements; %.2fs", events, failures, seconds_since(t0))};
}

Outcome ac5_skew() {
  const auto t0 = Clock::now();
  int ok = 0;
  double worst_after = 0.0, min_before = 1e9;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(500 + seed);
    FeatureMatrix m;
    m.rows = 7794;
    m.cols = 1;
    m.column_names = {"distance_km"};
    for (std::size_t r = 0; r < m.rows; ++r) {
      m.data.push_back(rng.lognormal(0.0, 1.5));
      m.labels.push_back(static_cast<int>(r % 2));
      m.participant_ids.push_back("p" + std::to_string(r % 30));
      m.period_ids.push_back("2024Q1");
      m.trip_ids.push_back("t" + std::to_string(r));
    }
    const auto report = preprocess_matrix(m, std::vector<std::string>{"distance_km"}).second;
    const double before = *report.columns[0].skewness_before;
    const double after = std::abs(*report.columns[0].skewness_after);
    min_before = std::min(min_before, before);
    worst_after = std::max(worst_after, after);
    ok += before > 5.0 && after < 1.0;
  }
  return {ok == 50, fmt("%d/50 seeds; min skew before %.2f, max |skew| after %.3f; %.2fs", ok, min_before,
                        worst_after, seconds_since(t0))};
}

struct PlantedRun {
  double auc = 0.0;
  double accuracy = 0.0;
  std::size_t night_rank = 0;
};

PlantedRun planted_run(PlantedEffect effect, std::uint64_t seed) {
  CohortSpec spec;
  spec.seed = 1000 + seed;
  spec.total_trips = 7794;
  spec = inject_planted_signal(spec, effect, 2.0);
  SuiteConfig cfg;
  cfg.groups = {6};
  cfg.split_seed = seed;
  cfg.forest.seed = seed;
  cfg.group_by_participant = true;
  const auto report = run_model_suite(truth_records(plan_cohort(spec)), cfg).groups[0].report;
  auto imp = report.importances;
  std::stable_sort(imp.begin(), imp.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  PlantedRun r{report.auc, report.accuracy, imp.size()};
  for (std::size_t i = 0; i < imp.size(); ++i) {
    if (imp[i].first == "night_trips") r.night_rank = i;
  }
  return r;
}

Outcome ac6_planted_signal() {
  const auto t0 = Clock::now();
  int both = 0, top3 = 0, auc_ok = 0;
  double auc_sum = 0.0, null_acc_sum = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto r = planted_run(PlantedEffect::night_trip_deficit, s);
    auc_sum += r.auc;
    auc_ok += r.auc >= 0.85;
    top3 += r.night_rank < 3;
    both += r.auc >= 0.85 && r.night_rank < 3;
    null_acc_sum += planted_run(PlantedEffect::none, s).accuracy;
  }
  const double null_acc = null_acc_sum / 20.0;
  const bool null_ok = null_acc >= 0.45 && null_acc <= 0.55;
  return {both >= 18 && null_ok,
          fmt("signal: AUC>=0.85 and night_trips top-3 in %d/20 seeds (AUC ok %d, top-3 %d, mean AUC %.3f); "
              "none: mean accuracy %.3f; %.1fs",
              both, auc_ok, top3, auc_sum / 20.0, null_acc, seconds_since(t0))};
}

std::map<std::string, double> time_of_day_percent(const fs::path& csv) {
  std::map<std::string, double> out;
  std::istringstream in(read_file(csv.string()));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    out[line.substr(0, a)] = std::stod(line.substr(b + 1));
  }
  return out;
}

struct EndToEnd {
  bool ok = false;
  double seconds = 0.0;
  fs::path work;
};

EndToEnd end_to_end(const fs::path& root, const std::string& tag, unsigned threads) {
  EndToEnd r;
  r.work = root / tag;
  const auto data = root / (tag + "_data");
  const auto t0 = Clock::now();
  const std::string th = " --threads " + std::to_string(threads);
  r.ok = run_cli("synth --spec " + (root / "spec.json").string() + " --out " + data.string(), root / (tag + "_synth.log")) == 0 &&
         run_cli("extract " + data.string() + th + " --out " + r.work.string(), root / (tag + "_extract.log")) == 0 &&
         run_cli("train-eval " + (r.work / "features.csv").string() + th + " --trees 100 --out " + (r.work / "model").string(),
                 root / (tag + "_train.log")) == 0;
  r.seconds = seconds_since(t0);
  fs::remove_all(data);
  return r;
}

}  // namespace

int main() {
  const auto root = scratch("e2e");
  write_text_file(root / "spec.json", R"({"n_participants": 30, "total_trips": 7794, "seed": 1})");
  std::optional<EndToEnd> first, second;
  auto ensure_runs = [&] {
    if (!first) first = end_to_end(root, "a", 1);
    if (!second) second = end_to_end(root, "b", 4);
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1", ac1_metric_arithmetic},
      {"AC2", ac2_shape},
      {"AC3", ac3_dbi_oracle},
      {"AC4", ac4_event_oracle},
      {"AC5", ac5_skew},
      {"AC6", ac6_planted_signal},
      {"AC7",
       [&]() -> Outcome {
         ensure_runs();
         if (!first->ok || run_cli("report " + (first->work / "features.csv").string() + " --out " +
                                       (root / "report").string(),
                                   root / "report.log") != 0) {
           return {false, "pipeline or report failed"};
         }
         const auto pct = time_of_day_percent(root / "report" / "time_of_day.csv");
         const double afternoon = pct.at("afternoon") / 100.0, morning = pct.at("morning") / 100.0;
         return {std::abs(afternoon - 0.50) <= 0.03 && std::abs(morning - 0.349) <= 0.03,
                 fmt("afternoon %.4f, morning %.4f", afternoon, morning)};
       }},
      {"AC8",
       [&]() -> Outcome {
         ensure_runs();
         if (!first->ok || !second->ok) return {false, "pipeline failed"};
         const bool features = read_file((first->work / "features.csv").string()) ==
                               read_file((second->work / "features.csv").string());
         const bool results = read_file((first->work / "model" / "results.json").string()) ==
                              read_file((second->work / "model" / "results.json").string());
         return {features && results, fmt("features.csv %s, results.json %s (threads 1 vs 4)",
                                          features ? "identical" : "differ", results ? "identical" : "differ")};
       }},
      {"AC9",
       [&]() -> Outcome {
         ensure_runs();
         return {first->ok && first->seconds < 60.0,
                 fmt("synth+extract+train-eval, 7794 rows, 100 trees: %.1fs", first->seconds)};
       }},
  };

  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(root);
  return failed == 0 ? 0 : 1;
}
