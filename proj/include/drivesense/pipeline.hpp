#pragma once

// End-to-end pipeline stages behind the command-line tool:
//   extract      manifest + streams -> features.csv, trips.jsonl, parse_quality.json
//   report       features.csv (+ trips.jsonl) -> time-of-day and quarterly tables
//   train_eval   features.csv -> results.json, results.txt, models/*.json

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivesense/dbi.hpp"
#include "drivesense/error.hpp"
#include "drivesense/forest.hpp"
#include "drivesense/model_suite.hpp"
#include "drivesense/sensor_parsers.hpp"
#include "drivesense/synth.hpp"
#include "drivesense/text.hpp"
#include "drivesense/trip_engine.hpp"

namespace drivesense {

struct PipelineConfig {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir;
  double gap_s = kDefaultTripGapS;
  DbiConfig dbi{};
  ForestConfig forest{};
  double test_fraction = 0.33;
  std::uint64_t seed = 0;
  bool group_by_participant = false;
  bool preprocess = true;
  std::vector<int> groups{1, 2, 3, 4, 5, 6};

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(Errc::invalid_argument, "config: " + what); };
    if (!(gap_s > 0.0)) bad("gap_s must be > 0");
    if (!(dbi.harsh_threshold > 0.0)) bad("harsh_threshold must be > 0");
    if (!(dbi.urban_limit_km > 0.0)) bad("urban_limit_km must be > 0");
    const auto& w = dbi.windows;
    if (!(0 <= w.morning_start && w.morning_start < w.afternoon_start && w.afternoon_start < w.evening_start &&
          w.evening_start < w.night_start && w.night_start <= 1440)) {
      bad("time windows must be increasing minutes within one day");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) bad("test_fraction must lie in (0,1)");
    if (forest.n_trees == 0) bad("n_trees must be >= 1");
    if (forest.min_samples_leaf == 0) bad("min_samples_leaf must be >= 1");
    for (int g : groups) {
      if (g < 1 || g > kNumModelGroups) bad("groups must be within 1..6");
    }
  }

  SuiteConfig suite() const {
    SuiteConfig s;
    s.forest = forest;
    s.forest.seed = seed;
    s.test_fraction = test_fraction;
    s.split_seed = seed;
    s.group_by_participant = group_by_participant;
    s.preprocess = preprocess;
    s.groups = groups;
    return s;
  }
};

namespace detail {

inline int parse_hhmm(std::string_view v) {
  const auto parts = text::split(v, ':');
  const auto h = parts.size() == 2 ? text::parse_int(parts[0]) : std::nullopt;
  const auto m = parts.size() == 2 ? text::parse_int(parts[1]) : std::nullopt;
  if (!h || !m || *h < 0 || *h > 24 || *m < 0 || *m > 59) {
    throw Error(Errc::invalid_argument, "config: expected HH:MM, got '" + std::string(v) + "'");
  }
  return static_cast<int>(*h * 60 + *m);
}

inline bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(Errc::invalid_argument, "config: expected boolean, got '" + std::string(v) + "'");
}

}  // namespace detail

// Applies one `key = value` setting. Unknown keys are errors.
inline void apply_config_key(PipelineConfig& c, std::string_view key, std::string_view value) {
  auto num = [&] {
    const auto v = text::parse_finite(value);
    if (!v) throw Error(Errc::invalid_argument, "config: " + std::string(key) + " expects a number");
    return *v;
  };
  auto uint = [&] {
    const auto v = text::parse_int(value);
    if (!v || *v < 0) throw Error(Errc::invalid_argument, "config: " + std::string(key) + " expects a non-negative integer");
    return static_cast<std::uint64_t>(*v);
  };
  auto& w = c.dbi.windows;
  if (key == "input_dir") c.input_dir = std::string(value);
  else if (key == "output_dir") c.output_dir = std::string(value);
  else if (key == "gap_s") c.gap_s = num();
  else if (key == "harsh_threshold") c.dbi.harsh_threshold = num();
  else if (key == "urban_limit_km") c.dbi.urban_limit_km = num();
  else if (key == "utc_offset_minutes") c.dbi.clock.utc_offset = std::chrono::minutes{static_cast<int>(std::lround(num()))};
  else if (key == "morning_start") w.morning_start = detail::parse_hhmm(value);
  else if (key == "afternoon_start") w.afternoon_start = detail::parse_hhmm(value);
  else if (key == "evening_start") w.evening_start = detail::parse_hhmm(value);
  else if (key == "night_start") w.night_start = detail::parse_hhmm(value);
  else if (key == "peak_am_start") w.peak[0].first = detail::parse_hhmm(value);
  else if (key == "peak_am_end") w.peak[0].second = detail::parse_hhmm(value);
  else if (key == "peak_pm_start") w.peak[1].first = detail::parse_hhmm(value);
  else if (key == "peak_pm_end") w.peak[1].second = detail::parse_hhmm(value);
  else if (key == "n_trees") c.forest.n_trees = uint();
  else if (key == "max_depth") {
    if (value == "none") c.forest.max_depth.reset();
    else c.forest.max_depth = uint();
  } else if (key == "min_samples_leaf") c.forest.min_samples_leaf = uint();
  else if (key == "mtry") {
    if (value == "auto") c.forest.mtry.reset();
    else c.forest.mtry = uint();
  } else if (key == "tie_to_positive") c.forest.tie_to_positive = detail::parse_bool(value);
  else if (key == "threads") c.forest.threads = static_cast<unsigned>(uint());
  else if (key == "test_fraction") c.test_fraction = num();
  else if (key == "seed") c.seed = uint();
  else if (key == "group_by_participant") c.group_by_participant = detail::parse_bool(value);
  else if (key == "preprocess") c.preprocess = detail::parse_bool(value);
  else if (key == "groups") {
    c.groups.clear();
    for (auto part : text::split(value, ',')) {
      const auto g = text::parse_int(text::trim(part));
      if (!g) throw Error(Errc::invalid_argument, "config: groups expects a comma-separated list");
      c.groups.push_back(static_cast<int>(*g));
    }
  } else {
    throw Error(Errc::invalid_argument, "config: unknown key '" + std::string(key) + "'");
  }
}

// `key = value` lines; '#' starts a comment.
inline PipelineConfig parse_config(std::string_view content, PipelineConfig c = {}) {
  std::size_t line_no = 0;
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::invalid_argument, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_config_key(c, text::trim(line.substr(0, eq)), text::trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig c = {}) {
  return parse_config(read_file(path.string()), std::move(c));
}

// ---- features.csv ----

inline std::string features_csv_header() {
  std::string h = "participant_id,period_id,trip_id";
  for (auto name : kFeatureNames) {
    h += ',';
    h += name;
  }
  h += ",mci";
  return h;
}

inline std::string write_features_csv(std::span<const DbiRecord> records) {
  std::string out = features_csv_header();
  out += '\n';
  for (const auto& r : records) {
    out += r.participant_id;
    out += ',';
    out += r.period_id;
    out += ',';
    out += r.trip_id;
    for (double v : r.features()) {
      out += ',';
      text::append_number(out, v);
    }
    out += ',';
    out += std::to_string(r.label());
    out += '\n';
  }
  return out;
}

inline FeatureMatrix read_features_csv(std::string_view content) {
  FeatureMatrix m;
  m.cols = kNumFeatures;
  m.column_names.assign(kFeatureNames.begin(), kFeatureNames.end());
  bool header = true;
  std::size_t line_no = 0;
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    line = text::trim(line);
    if (line.empty()) continue;
    if (header) {
      if (line != features_csv_header()) throw Error(Errc::format, "features.csv: unexpected header");
      header = false;
      continue;
    }
    const auto cols = text::split(line, ',');
    if (cols.size() != kNumFeatures + 4) {
      throw Error(Errc::format, "features.csv line " + std::to_string(line_no) + ": wrong column count");
    }
    m.participant_ids.emplace_back(cols[0]);
    m.period_ids.emplace_back(cols[1]);
    m.trip_ids.emplace_back(cols[2]);
    for (std::size_t c = 0; c < kNumFeatures; ++c) {
      const auto v = text::parse_finite(cols[3 + c]);
      if (!v) throw Error(Errc::format, "features.csv line " + std::to_string(line_no) + ": bad number");
      m.data.push_back(*v);
    }
    const auto label = text::parse_int(cols.back());
    if (!label || (*label != 0 && *label != 1)) {
      throw Error(Errc::format, "features.csv line " + std::to_string(line_no) + ": mci must be 0 or 1");
    }
    m.labels.push_back(static_cast<int>(*label));
    ++m.rows;
  }
  if (header) throw Error(Errc::format, "features.csv: missing header");
  if (m.rows == 0) throw Error(Errc::empty_dataset, "features.csv has no rows");
  return m;
}

// ---- extract ----

struct ParticipantQuality {
  std::string participant_id;
  ParseStats nmea, obd, imu, volts;
  std::size_t trips = 0;
  std::size_t dropped_singletons = 0;
  std::vector<std::string> diagnostics;
};

struct ExtractResult {
  std::vector<DbiRecord> records;
  std::vector<Trip> trips;  // kinematics and events only, samples released
  std::vector<ParticipantQuality> quality;

  nlohmann::ordered_json quality_json() const {
    auto stats = [](const ParseStats& s) {
      return nlohmann::ordered_json{{"lines", s.lines},
                                    {"records", s.records},
                                    {"checksum_errors", s.checksum_errors},
                                    {"unsupported", s.unsupported},
                                    {"field_errors", s.field_errors},
                                    {"frame_errors", s.frame_errors}};
    };
    ParseStats tn, to, ti, tv;
    std::size_t trips_total = 0, dropped = 0;
    auto parts = nlohmann::ordered_json::array();
    for (const auto& q : quality) {
      tn += q.nmea;
      to += q.obd;
      ti += q.imu;
      tv += q.volts;
      trips_total += q.trips;
      dropped += q.dropped_singletons;
      parts.push_back({{"participant_id", q.participant_id},
                       {"nmea", stats(q.nmea)},
                       {"obd", stats(q.obd)},
                       {"imu", stats(q.imu)},
                       {"volts", stats(q.volts)},
                       {"trips", q.trips},
                       {"dropped_singletons", q.dropped_singletons},
                       {"diagnostics", q.diagnostics}});
    }
    return {{"totals",
             {{"nmea", stats(tn)},
              {"obd", stats(to)},
              {"imu", stats(ti)},
              {"volts", stats(tv)},
              {"trips", trips_total},
              {"dropped_singletons", dropped}}},
            {"participants", std::move(parts)}};
  }
};

namespace detail {

inline std::vector<std::int64_t> read_sidecar(const std::string& content) {
  std::vector<std::int64_t> out;
  for (auto line : text::split(content, '\n')) {
    line = text::trim(line);
    if (line.empty()) continue;
    const auto v = text::parse_int(line);
    if (!v) throw Error(Errc::format, "bad logger timestamp '" + std::string(line) + "'");
    out.push_back(*v);
  }
  return out;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  const auto content = read_file(path.string());
  try {
    return nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format, path.string() + ": " + e.what());
  }
}

}  // namespace detail

// Runs parse -> align -> segment -> kinematics -> events -> records for every
// participant listed in <dir>/manifest.json. Unreadable stream files are
// reported per file and skipped.
inline ExtractResult extract_cohort(const std::filesystem::path& dir, const PipelineConfig& cfg) {
  ExtractResult result;
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) return result;
  const auto manifest = detail::read_json_file(manifest_path);
  for (const auto& p : manifest.at("participants")) {
    ParticipantQuality q;
    q.participant_id = p.at("participant_id").get<std::string>();
    const Demographics demo = demographics_from_json(p.at("demographics"));
    const auto& files = p.at("files");
    auto load = [&](const char* key) -> std::optional<std::string> {
      if (!files.contains(key)) return std::nullopt;
      const auto path = dir / files.at(key).get<std::string>();
      try {
        return read_file(path.string());
      } catch (const Error& e) {
        q.diagnostics.push_back(e.what());
        return std::nullopt;
      }
    };
    std::vector<GpsFix> gps;
    std::vector<ObdReading> obd;
    std::vector<ImuRecord> imu;
    std::vector<VoltageRecord> volts;
    if (auto content = load("nmea")) {
      std::optional<std::vector<std::int64_t>> sidecar;
      if (auto side = load("nmea_logger_ms")) sidecar = detail::read_sidecar(*side);
      auto r = read_nmea(*content, sidecar ? &*sidecar : nullptr);
      gps = std::move(r.records);
      q.nmea = r.stats;
    }
    if (auto content = load("obd")) {
      auto r = read_obd(*content);
      obd = std::move(r.records);
      q.obd = r.stats;
    }
    if (auto content = load("imu")) {
      auto r = read_imu(*content);
      imu = std::move(r.records);
      q.imu = r.stats;
    }
    if (auto content = load("volts")) {
      auto r = read_voltage(*content);
      volts = std::move(r.records);
      q.volts = r.stats;
    }
    auto seg = segment_trips(align_streams(gps, obd, imu, volts), cfg.gap_s, q.participant_id);
    q.trips = seg.trips.size();
    q.dropped_singletons = seg.dropped_singletons;
    for (auto& trip : seg.trips) {
      trip_kinematics(trip);
      detect_trip_events(trip, cfg.dbi.harsh_threshold);
      trip.samples.clear();
      trip.samples.shrink_to_fit();
    }
    auto recs = build_participant_records(seg.trips, demo, q.participant_id, cfg.dbi);
    result.records.insert(result.records.end(), std::make_move_iterator(recs.begin()),
                          std::make_move_iterator(recs.end()));
    result.trips.insert(result.trips.end(), std::make_move_iterator(seg.trips.begin()),
                        std::make_move_iterator(seg.trips.end()));
    result.quality.push_back(std::move(q));
  }
  return result;
}

// One JSON object per line. build_participant_records orders rows by quarter
// and so may differ from trip order; trips.jsonl stays in trip order.
inline std::string trips_jsonl(std::span<const Trip> trips, const DbiConfig& cfg) {
  std::string out;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  for (const auto& t : trips) {
    const auto c = classify_trip(t, cfg);
    nlohmann::ordered_json j{{"participant_id", t.participant_id},
                             {"trip_id", t.trip_id},
                             {"start_ms", epoch_ms(t.start)},
                             {"end_ms", epoch_ms(t.end)},
                             {"duration_s", t.duration_s},
                             {"distance_km", opt(t.distance_km)},
                             {"mean_speed_kmh", opt(t.mean_speed_kmh)},
                             {"mean_rpm", opt(t.mean_rpm)},
                             {"time_of_day", to_string(c.time_of_day)},
                             {"night", c.night},
                             {"peak", c.peak},
                             {"urban", c.distance == DistanceClass::urban},
                             {"quarter", c.quarter},
                             {"n_harsh_accel", count_events(t.events, EventKind::harsh_acceleration)},
                             {"n_hard_brake", count_events(t.events, EventKind::hard_braking)},
                             {"n_hard_turn", count_events(t.events, EventKind::hard_turn)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

struct ExtractOutputs {
  std::filesystem::path features;
  std::filesystem::path trips;
  std::filesystem::path quality;
  std::size_t rows = 0;
};

inline ExtractOutputs run_extract(const PipelineConfig& cfg) {
  const auto result = extract_cohort(cfg.input_dir, cfg);
  std::filesystem::create_directories(cfg.output_dir);
  ExtractOutputs out{cfg.output_dir / "features.csv", cfg.output_dir / "trips.jsonl",
                     cfg.output_dir / "parse_quality.json", result.records.size()};
  write_text_file(out.quality, result.quality_json().dump(2) + "\n");
  if (result.records.empty()) throw Error(Errc::empty_dataset, "no trips extracted");
  write_text_file(out.features, write_features_csv(result.records));
  write_text_file(out.trips, trips_jsonl(result.trips, cfg.dbi));
  return out;
}

// ---- report ----

struct TimeOfDayShares {
  std::array<std::size_t, 4> counts{};  // morning, afternoon, evening, night

  std::size_t total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
  double share(TimeOfDay t) const {
    const auto n = total();
    return n ? static_cast<double>(counts[static_cast<int>(t)]) / static_cast<double>(n) : 0.0;
  }
};

inline TimeOfDayShares time_of_day_shares(std::span<const Timestamp> starts, const DbiConfig& cfg = {}) {
  TimeOfDayShares s;
  for (auto t : starts) ++s.counts[static_cast<int>(time_of_day(cfg.clock.minute_of_day(t), cfg.windows))];
  return s;
}

inline std::string time_of_day_csv(const TimeOfDayShares& s) {
  std::string out = "time_of_day,trips,percent\n";
  for (int k = 0; k < 4; ++k) {
    const auto t = static_cast<TimeOfDay>(k);
    char line[96];
    std::snprintf(line, sizeof line, "%s,%zu,%.2f\n", to_string(t), s.counts[k], 100.0 * s.share(t));
    out += line;
  }
  return out;
}

struct QuarterRow {
  std::string participant_id;
  std::string period_id;
  int mci = 0;
  std::size_t rows = 0;
  std::vector<double> means;  // driving indexes, in feature order
};

// Mean of each driving index per (participant, quarter).
inline std::vector<QuarterRow> quarterly_table(const FeatureMatrix& m) {
  const auto driving = driving_feature_names();
  std::vector<std::size_t> cols;
  for (auto name : driving) cols.push_back(m.column_index(std::string(name)));
  std::map<std::pair<std::string, std::string>, QuarterRow> groups;
  for (std::size_t r = 0; r < m.rows; ++r) {
    auto& g = groups[{m.participant_ids[r], m.period_ids[r]}];
    if (g.rows == 0) {
      g.participant_id = m.participant_ids[r];
      g.period_id = m.period_ids[r];
      g.mci = m.labels[r];
      g.means.assign(cols.size(), 0.0);
    }
    ++g.rows;
    for (std::size_t k = 0; k < cols.size(); ++k) g.means[k] += m.at(r, cols[k]);
  }
  std::vector<QuarterRow> out;
  for (auto& [key, g] : groups) {
    for (auto& v : g.means) v /= static_cast<double>(g.rows);
    out.push_back(std::move(g));
  }
  return out;
}

inline std::string quarterly_csv(std::span<const QuarterRow> rows, int mci) {
  std::string out = "participant_id,period_id,rows";
  for (auto name : driving_feature_names()) {
    out += ',';
    out += name;
  }
  out += '\n';
  for (const auto& r : rows) {
    if (r.mci != mci) continue;
    out += r.participant_id + ',' + r.period_id + ',' + std::to_string(r.rows);
    for (double v : r.means) {
      out += ',';
      text::append_number(out, v);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<Timestamp> read_trip_starts(const std::filesystem::path& trips_path) {
  std::vector<Timestamp> starts;
  const auto content = read_file(trips_path.string());
  for (auto line : text::split(content, '\n')) {
    line = text::trim(line);
    if (line.empty()) continue;
    try {
      starts.push_back(from_epoch_ms(nlohmann::json::parse(line).at("start_ms").get<std::int64_t>()));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::format, trips_path.string() + ": " + e.what());
    }
  }
  return starts;
}

struct ReportOutputs {
  std::filesystem::path time_of_day;
  std::filesystem::path quarterly_non_mci;
  std::filesystem::path quarterly_mci;
  TimeOfDayShares shares;
  std::size_t quarter_rows = 0;
};

// Reads <features> and the trips.jsonl written next to it by extract.
inline ReportOutputs run_report(const std::filesystem::path& features_path, const PipelineConfig& cfg) {
  const auto matrix = read_features_csv(read_file(features_path.string()));
  const auto trips_path = features_path.parent_path() / "trips.jsonl";
  ReportOutputs out;
  out.shares = time_of_day_shares(read_trip_starts(trips_path), cfg.dbi);
  if (out.shares.total() == 0) throw Error(Errc::empty_dataset, "trips.jsonl has no trips");
  const auto quarters = quarterly_table(matrix);
  out.quarter_rows = quarters.size();
  std::filesystem::create_directories(cfg.output_dir);
  out.time_of_day = cfg.output_dir / "time_of_day.csv";
  out.quarterly_non_mci = cfg.output_dir / "quarterly_non_mci.csv";
  out.quarterly_mci = cfg.output_dir / "quarterly_mci.csv";
  write_text_file(out.time_of_day, time_of_day_csv(out.shares));
  write_text_file(out.quarterly_non_mci, quarterly_csv(quarters, 0));
  write_text_file(out.quarterly_mci, quarterly_csv(quarters, 1));
  return out;
}

// ---- train / evaluate ----

struct TrainEvalOutputs {
  std::filesystem::path results_json;
  std::filesystem::path results_txt;
  SuiteResult suite;
};

inline TrainEvalOutputs run_train_eval(const std::filesystem::path& features_path, const PipelineConfig& cfg) {
  const auto matrix = read_features_csv(read_file(features_path.string()));
  const auto suite_cfg = cfg.suite();
  TrainEvalOutputs out;
  out.suite = run_model_suite(matrix, suite_cfg);
  std::filesystem::create_directories(cfg.output_dir / "models");
  out.results_json = cfg.output_dir / "results.json";
  out.results_txt = cfg.output_dir / "results.txt";
  write_text_file(out.results_json, out.suite.to_json(suite_cfg).dump(2) + "\n");
  write_text_file(out.results_txt, format_results_table(out.suite));
  for (const auto& g : out.suite.groups) {
    write_text_file(cfg.output_dir / "models" / ("model_" + std::to_string(g.group) + ".json"),
                    g.model.to_json().dump() + "\n");
  }
  return out;
}

}  // namespace drivesense
