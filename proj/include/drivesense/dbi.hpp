#pragma once

// Driver Behavior Indexes: harsh-event detection, trip classification by
// start time and distance, and assembly of the 19-column feature matrix.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drivesense/error.hpp"
#include "drivesense/time.hpp"
#include "drivesense/trip_engine.hpp"

namespace drivesense {

inline constexpr double kHarshThreshold = 3.943;  // m/s^2
inline constexpr double kUrbanLimitKm = 32.0;

struct AccelSample {
  Timestamp timestamp{};
  Vec3 accel;
};

namespace detail {

// Appends one event per maximal run of samples for which `value(sample)`
// exceeds the threshold in the direction chosen by `beyond`.
template <class Value, class Beyond>
void scan_runs(std::span<const AccelSample> series, std::chrono::milliseconds max_step, EventKind kind,
               Value value, Beyond beyond, std::vector<DrivingEvent>& out) {
  bool in_run = false;
  DrivingEvent ev;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double v = value(series[i].accel);
    const bool hit = beyond(v);
    const bool contiguous = i > 0 && series[i].timestamp - series[i - 1].timestamp <= max_step;
    if (hit && in_run && contiguous) {
      if (std::abs(v) > std::abs(ev.peak)) ev.peak = v;
      continue;
    }
    if (in_run) out.push_back(ev);
    in_run = hit;
    if (hit) ev = DrivingEvent{kind, series[i].timestamp, v};
  }
  if (in_run) out.push_back(ev);
}

}  // namespace detail

// One event per maximal contiguous excursion:
//   harsh acceleration  x > +threshold
//   hard braking        x < -threshold
//   hard turn           |y| > threshold
// Consecutive samples more than 2.5 sample periods apart do not form a run.
inline std::vector<DrivingEvent> detect_events(std::span<const AccelSample> series, double rate_hz,
                                               double threshold = kHarshThreshold) {
  if (!(rate_hz > 0.0)) throw Error(Errc::invalid_argument, "rate_hz must be positive");
  const auto max_step = std::chrono::milliseconds{static_cast<std::int64_t>(std::ceil(2500.0 / rate_hz))};
  std::vector<DrivingEvent> events;
  detail::scan_runs(series, max_step, EventKind::harsh_acceleration, [](const Vec3& a) { return a.x; },
                    [threshold](double v) { return v > threshold; }, events);
  detail::scan_runs(series, max_step, EventKind::hard_braking, [](const Vec3& a) { return a.x; },
                    [threshold](double v) { return v < -threshold; }, events);
  detail::scan_runs(series, max_step, EventKind::hard_turn, [](const Vec3& a) { return a.y; },
                    [threshold](double v) { return std::abs(v) > threshold; }, events);
  std::stable_sort(events.begin(), events.end(),
                   [](const DrivingEvent& a, const DrivingEvent& b) { return a.timestamp < b.timestamp; });
  return events;
}

// Evenly spaced series starting at `start`.
inline std::vector<AccelSample> make_series(std::span<const Vec3> accel, double rate_hz, Timestamp start = {}) {
  std::vector<AccelSample> out;
  out.reserve(accel.size());
  for (std::size_t i = 0; i < accel.size(); ++i) {
    const auto offset = std::chrono::milliseconds{std::llround(static_cast<double>(i) * 1000.0 / rate_hz)};
    out.push_back({start + offset, accel[i]});
  }
  return out;
}

inline std::size_t count_events(std::span<const DrivingEvent> events, EventKind kind) {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [kind](const DrivingEvent& e) { return e.kind == kind; }));
}

// Sampling rate of the accelerometer within a trip, from the median interval.
inline double estimate_rate_hz(std::span<const AccelSample> series) {
  if (series.size() < 2) return 1.0;
  std::vector<std::int64_t> steps;
  steps.reserve(series.size() - 1);
  for (std::size_t i = 1; i < series.size(); ++i) steps.push_back((series[i].timestamp - series[i - 1].timestamp).count());
  auto mid = steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2);
  std::nth_element(steps.begin(), mid, steps.end());
  return *mid > 0 ? 1000.0 / static_cast<double>(*mid) : 1.0;
}

inline void detect_trip_events(Trip& trip, double threshold = kHarshThreshold) {
  std::vector<AccelSample> series;
  for (const auto& s : trip.samples) {
    if (s.accel) series.push_back({s.timestamp, *s.accel});
  }
  trip.events = series.empty() ? std::vector<DrivingEvent>{} : detect_events(series, estimate_rate_hz(series), threshold);
}

// ---- time-of-day and distance classes ----

enum class TimeOfDay { morning, afternoon, evening, night };

inline const char* to_string(TimeOfDay t) {
  switch (t) {
    case TimeOfDay::morning: return "morning";
    case TimeOfDay::afternoon: return "afternoon";
    case TimeOfDay::evening: return "evening";
    case TimeOfDay::night: return "night";
  }
  return "?";
}

// Half-open minute-of-day windows. Night wraps midnight.
struct DayWindows {
  int morning_start = 5 * 60;
  int afternoon_start = 12 * 60;
  int evening_start = 17 * 60;
  int night_start = 21 * 60;
  std::array<std::pair<int, int>, 2> peak{{{7 * 60, 9 * 60}, {16 * 60, 18 * 60}}};
};

inline TimeOfDay time_of_day(int minute_of_day, const DayWindows& w = {}) {
  const int m = ((minute_of_day % 1440) + 1440) % 1440;
  if (m >= w.morning_start && m < w.afternoon_start) return TimeOfDay::morning;
  if (m >= w.afternoon_start && m < w.evening_start) return TimeOfDay::afternoon;
  if (m >= w.evening_start && m < w.night_start) return TimeOfDay::evening;
  return TimeOfDay::night;
}

inline TimeOfDay time_of_day(int hour, int minute, const DayWindows& w = {}) {
  return time_of_day(hour * 60 + minute, w);
}

inline bool is_peak(int minute_of_day, const DayWindows& w = {}) {
  const int m = ((minute_of_day % 1440) + 1440) % 1440;
  return std::any_of(w.peak.begin(), w.peak.end(), [m](auto win) { return m >= win.first && m < win.second; });
}

inline bool is_peak(int hour, int minute, const DayWindows& w = {}) { return is_peak(hour * 60 + minute, w); }

enum class DistanceClass { urban, suburb };

inline DistanceClass distance_class(double distance_km, double urban_limit_km = kUrbanLimitKm) {
  return distance_km < urban_limit_km ? DistanceClass::urban : DistanceClass::suburb;
}

// ---- demographics and records ----

enum class Gender { male = 0, female = 1 };

struct Demographics {
  int age = 65;
  Gender gender = Gender::male;
  int race = 1;        // 1 Black, 2 White, 3 Asian, 4 Native American, 5 Multiracial, 6 Others
  int ethnicity = 1;   // 1 African-American ... 6 Others
  int education = 1;   // 1 grade school ... 10 doctoral degree
  int retired = 0;
  int bmi_obese = 0;   // 1 iff BMI > 30
  int mci = 0;

  void validate() const {
    auto in = [](int v, int lo, int hi) { return v >= lo && v <= hi; };
    if (age < 65 || !in(race, 1, 6) || !in(ethnicity, 1, 6) || !in(education, 1, 10) || !in(retired, 0, 1) ||
        !in(bmi_obese, 0, 1) || !in(mci, 0, 1)) {
      throw Error(Errc::invalid_argument, "demographics out of range");
    }
  }
};

inline constexpr std::size_t kNumFeatures = 19;
inline constexpr std::size_t kNumDriverFeatures = 7;

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "age",         "gender",      "race",        "ethnicity",     "education",    "retired",     "bmi_obese",
    "total_trips", "night_trips", "peak_trips",  "duration_s",    "distance_km",  "speed_kmh",   "rpm",
    "n_harsh_accel", "n_hard_brake", "n_hard_turn", "urban_trips", "suburb_trips"};

inline std::span<const std::string_view> driver_feature_names() {
  return std::span(kFeatureNames).first(kNumDriverFeatures);
}

inline std::span<const std::string_view> driving_feature_names() {
  return std::span(kFeatureNames).subspan(kNumDriverFeatures);
}

struct DbiRecord {
  std::string participant_id;
  std::string period_id;
  std::string trip_id;
  Demographics demo;
  // participant-period aggregates, repeated on every row
  int total_trips = 0;
  int night_trips = 0;
  int peak_trips = 0;
  int urban_trips = 0;
  int suburb_trips = 0;
  // per-trip
  double duration_s = 0.0;
  double distance_km = 0.0;
  double speed_kmh = 0.0;
  double rpm = 0.0;
  int n_harsh_accel = 0;
  int n_hard_brake = 0;
  int n_hard_turn = 0;

  int label() const { return demo.mci; }

  std::array<double, kNumFeatures> features() const {
    return {static_cast<double>(demo.age),
            static_cast<double>(demo.gender),
            static_cast<double>(demo.race),
            static_cast<double>(demo.ethnicity),
            static_cast<double>(demo.education),
            static_cast<double>(demo.retired),
            static_cast<double>(demo.bmi_obese),
            static_cast<double>(total_trips),
            static_cast<double>(night_trips),
            static_cast<double>(peak_trips),
            duration_s,
            distance_km,
            speed_kmh,
            rpm,
            static_cast<double>(n_harsh_accel),
            static_cast<double>(n_hard_brake),
            static_cast<double>(n_hard_turn),
            static_cast<double>(urban_trips),
            static_cast<double>(suburb_trips)};
  }
};

struct DbiConfig {
  double harsh_threshold = kHarshThreshold;
  double urban_limit_km = kUrbanLimitKm;
  LocalClock clock{};
  DayWindows windows{};
};

// Per-trip labels derived from start time and distance.
struct TripClass {
  TimeOfDay time_of_day = TimeOfDay::morning;
  bool night = false;
  bool peak = false;
  DistanceClass distance = DistanceClass::urban;
  std::string quarter;
};

inline TripClass classify_trip(const Trip& trip, const DbiConfig& cfg = {}) {
  TripClass c;
  const int minute = cfg.clock.minute_of_day(trip.start);
  c.time_of_day = time_of_day(minute, cfg.windows);
  c.night = c.time_of_day == TimeOfDay::night;
  c.peak = is_peak(minute, cfg.windows);
  // Trips without valid GPS count as 0 km, hence urban.
  c.distance = distance_class(trip.distance_km.value_or(0.0), cfg.urban_limit_km);
  c.quarter = cfg.clock.quarter(trip.start);
  return c;
}

// One record per trip of one participant within one period. `trips` must
// already carry kinematics and events.
inline std::vector<DbiRecord> build_records(std::span<const Trip> trips, const Demographics& demo,
                                            const std::string& participant_id, const std::string& period,
                                            const DbiConfig& cfg = {}) {
  std::vector<DbiRecord> out;
  if (trips.empty()) return out;
  demo.validate();
  int night = 0, peak = 0, urban = 0, suburb = 0;
  std::vector<TripClass> classes;
  classes.reserve(trips.size());
  for (const auto& t : trips) {
    if (!t.participant_id.empty() && t.participant_id != participant_id) {
      throw Error(Errc::invalid_argument, "trip " + t.trip_id + " belongs to another participant");
    }
    auto c = classify_trip(t, cfg);
    if (c.quarter != period) throw Error(Errc::invalid_argument, "trip " + t.trip_id + " outside period " + period);
    night += c.night;
    peak += c.peak;
    (c.distance == DistanceClass::urban ? urban : suburb) += 1;
    classes.push_back(std::move(c));
  }
  out.reserve(trips.size());
  for (const auto& t : trips) {
    DbiRecord r;
    r.participant_id = participant_id;
    r.period_id = period;
    r.trip_id = t.trip_id;
    r.demo = demo;
    r.total_trips = static_cast<int>(trips.size());
    r.night_trips = night;
    r.peak_trips = peak;
    r.urban_trips = urban;
    r.suburb_trips = suburb;
    r.duration_s = t.duration_s;
    r.distance_km = t.distance_km.value_or(0.0);
    r.speed_kmh = t.mean_speed_kmh.value_or(0.0);
    r.rpm = t.mean_rpm.value_or(0.0);
    r.n_harsh_accel = static_cast<int>(count_events(t.events, EventKind::harsh_acceleration));
    r.n_hard_brake = static_cast<int>(count_events(t.events, EventKind::hard_braking));
    r.n_hard_turn = static_cast<int>(count_events(t.events, EventKind::hard_turn));
    out.push_back(std::move(r));
  }
  return out;
}

// Groups a participant's trips by calendar quarter and builds every period.
inline std::vector<DbiRecord> build_participant_records(std::span<const Trip> trips, const Demographics& demo,
                                                        const std::string& participant_id,
                                                        const DbiConfig& cfg = {}) {
  std::map<std::string, std::vector<Trip>> by_quarter;
  for (const auto& t : trips) by_quarter[cfg.clock.quarter(t.start)].push_back(t);
  std::vector<DbiRecord> out;
  for (auto& [quarter, group] : by_quarter) {
    auto recs = build_records(group, demo, participant_id, quarter, cfg);
    out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  return out;
}

// ---- feature matrix ----

struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major
  std::vector<std::string> column_names;
  std::vector<int> labels;
  std::vector<std::string> participant_ids;
  std::vector<std::string> period_ids;
  std::vector<std::string> trip_ids;

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const double> row(std::size_t r) const { return std::span(data).subspan(r * cols, cols); }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
    return out;
  }

  void set_column(std::size_t c, std::span<const double> values) {
    for (std::size_t r = 0; r < rows; ++r) at(r, c) = values[r];
  }

  std::size_t column_index(std::string_view name) const {
    for (std::size_t c = 0; c < cols; ++c) {
      if (column_names[c] == name) return c;
    }
    throw Error(Errc::invalid_argument, "unknown column " + std::string(name));
  }

  FeatureMatrix select_columns(std::span<const std::string> names) const {
    std::vector<std::size_t> idx;
    for (const auto& n : names) idx.push_back(column_index(n));
    FeatureMatrix out = with_rows_meta_only(*this);
    out.cols = idx.size();
    out.column_names.assign(names.begin(), names.end());
    out.data.resize(rows * out.cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < idx.size(); ++j) out.data[r * out.cols + j] = at(r, idx[j]);
    }
    return out;
  }

  FeatureMatrix select_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out;
    out.rows = idx.size();
    out.cols = cols;
    out.column_names = column_names;
    out.data.reserve(idx.size() * cols);
    for (auto r : idx) {
      auto rv = row(r);
      out.data.insert(out.data.end(), rv.begin(), rv.end());
      out.labels.push_back(labels[r]);
      out.participant_ids.push_back(participant_ids[r]);
      out.period_ids.push_back(period_ids[r]);
      out.trip_ids.push_back(trip_ids[r]);
    }
    return out;
  }

 private:
  static FeatureMatrix with_rows_meta_only(const FeatureMatrix& m) {
    FeatureMatrix out;
    out.rows = m.rows;
    out.labels = m.labels;
    out.participant_ids = m.participant_ids;
    out.period_ids = m.period_ids;
    out.trip_ids = m.trip_ids;
    return out;
  }
};

inline FeatureMatrix build_matrix(std::span<const DbiRecord> records) {
  if (records.empty()) throw Error(Errc::empty_dataset, "no records");
  FeatureMatrix m;
  m.rows = records.size();
  m.cols = kNumFeatures;
  m.column_names.assign(kFeatureNames.begin(), kFeatureNames.end());
  m.data.reserve(m.rows * m.cols);
  for (const auto& r : records) {
    const auto f = r.features();
    m.data.insert(m.data.end(), f.begin(), f.end());
    m.labels.push_back(r.label());
    m.participant_ids.push_back(r.participant_id);
    m.period_ids.push_back(r.period_id);
    m.trip_ids.push_back(r.trip_id);
  }
  return m;
}

}  // namespace drivesense
