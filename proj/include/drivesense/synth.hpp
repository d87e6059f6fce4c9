#pragma once

// Synthetic cohort generator. Produces participant demographics and raw
// logger streams (*.nmea, *.obd, *.imu.csv) whose statistics follow the
// published cohort summary, plus a per-trip ground-truth ledger.
//
// Generation is split in three deterministic stages:
//   plan_cohort    demographics, trip start times, durations, event slots
//   render_trip    per-second kinematics (ground truth) and, optionally,
//                  the serialized stream lines
//   write_cohort   manifest.json, ledger.json and the stream files
// Every random draw comes from a seed derived from (cohort seed,
// participant, trip, stage), so any stage can be rerun in isolation.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivesense/dbi.hpp"
#include "drivesense/error.hpp"
#include "drivesense/rng.hpp"
#include "drivesense/sensor_parsers.hpp"
#include "drivesense/time.hpp"
#include "drivesense/trip_engine.hpp"

namespace drivesense {

struct BehaviorProfile {
  double trips_per_week = 20.5;  // ~266 trips per 13-week quarter
  double trips_per_week_sd = 4.0;
  double morning_share = 0.349;
  double afternoon_share = 0.50;
  double night_share = 0.022;  // evening takes the remainder
  double night_share_sd = 0.011;
  double harsh_accel_per_100km = 28.0;
  double hard_brake_per_100km = 34.0;
  double hard_turn_per_100km = 24.0;
  double event_rate_sd = 8.0;  // between-participant SD of each per-100-km rate
  double speed_mean_kmh = 26.75;
  double speed_sd_kmh = 11.0;
  double rpm_mean = 1118.675;
  double rpm_sd = 194.87;
  double duration_mean_s = 1280.95;
  double duration_sd_s = 2029.02;
};

struct SamplingSpec {
  int gps_period_s = 5;
  int obd_period_s = 5;
  int imu_rate_hz = 1;
};

enum class PlantedEffect { none, night_trip_deficit, event_rate_shift };

inline PlantedEffect parse_effect(const std::string& name) {
  if (name == "none") return PlantedEffect::none;
  if (name == "night_trip_deficit") return PlantedEffect::night_trip_deficit;
  if (name == "event_rate_shift") return PlantedEffect::event_rate_shift;
  throw Error(Errc::unknown_effect, "unknown planted effect '" + name + "'");
}

inline const char* to_string(PlantedEffect e) {
  switch (e) {
    case PlantedEffect::none: return "none";
    case PlantedEffect::night_trip_deficit: return "night_trip_deficit";
    case PlantedEffect::event_rate_shift: return "event_rate_shift";
  }
  return "?";
}

struct CohortSpec {
  std::size_t n_participants = 30;
  double mci_fraction = 0.5;
  int weeks = 13;
  std::uint64_t seed = 1;
  std::chrono::sys_days start_date = std::chrono::sys_days{std::chrono::year{2024} / 1 / 1};
  int utc_offset_minutes = -5 * 60;
  std::optional<std::size_t> total_trips;  // exact cohort trip count when set
  double min_trip_separation_s = 900.0;
  SamplingSpec sampling{};
  BehaviorProfile non_mci{};
  BehaviorProfile mci{};
  PlantedEffect effect = PlantedEffect::none;
  double effect_strength = 0.0;

  LocalClock clock() const { return LocalClock{std::chrono::minutes{utc_offset_minutes}}; }

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(Errc::invalid_argument, "cohort spec: " + what); };
    if (n_participants == 0) bad("n_participants must be >= 1");
    if (!(mci_fraction >= 0.0 && mci_fraction <= 1.0)) bad("mci_fraction must lie in [0,1]");
    if (weeks < 1) bad("weeks must be >= 1");
    if (sampling.gps_period_s < 1 || sampling.obd_period_s < 1 || sampling.imu_rate_hz < 1 ||
        sampling.imu_rate_hz > 100) {
      bad("sampling periods must be >= 1 s and imu_rate_hz in [1,100]");
    }
    if (sampling.gps_period_s * 1000 >= 300000 || sampling.obd_period_s * 1000 >= 300000) {
      bad("sampling periods must stay below the trip gap");
    }
    for (const auto* p : {&non_mci, &mci}) {
      for (double v : {p->trips_per_week, p->trips_per_week_sd, p->morning_share, p->afternoon_share, p->night_share,
                       p->night_share_sd, p->harsh_accel_per_100km, p->hard_brake_per_100km, p->hard_turn_per_100km,
                       p->event_rate_sd, p->speed_mean_kmh, p->speed_sd_kmh, p->rpm_mean, p->rpm_sd,
                       p->duration_mean_s, p->duration_sd_s}) {
        if (!(v >= 0.0) || !std::isfinite(v)) bad("profile rates must be finite and >= 0");
      }
      if (p->morning_share + p->afternoon_share > 1.0) bad("morning + afternoon share exceeds 1");
      if (p->duration_mean_s < 60.0) bad("duration_mean_s must be >= 60");
    }
  }
};

// MCI group = non-MCI group with one parameter moved by `strength` SDs.
inline CohortSpec inject_planted_signal(CohortSpec spec, PlantedEffect effect, double strength) {
  spec.mci = spec.non_mci;
  spec.effect = effect;
  spec.effect_strength = strength;
  auto& p = spec.mci;
  switch (effect) {
    case PlantedEffect::none: break;
    case PlantedEffect::night_trip_deficit:
      p.night_share = std::max(0.0, p.night_share - strength * p.night_share_sd);
      break;
    case PlantedEffect::event_rate_shift:
      p.harsh_accel_per_100km = std::max(0.0, p.harsh_accel_per_100km - strength * p.event_rate_sd);
      p.hard_brake_per_100km = std::max(0.0, p.hard_brake_per_100km - strength * p.event_rate_sd);
      p.hard_turn_per_100km = std::max(0.0, p.hard_turn_per_100km - strength * p.event_rate_sd);
      break;
  }
  return spec;
}

inline CohortSpec inject_planted_signal(CohortSpec spec, const std::string& effect, double strength) {
  return inject_planted_signal(std::move(spec), parse_effect(effect), strength);
}

// ---- JSON ----

inline nlohmann::ordered_json profile_to_json(const BehaviorProfile& p) {
  return {{"trips_per_week", p.trips_per_week},
          {"trips_per_week_sd", p.trips_per_week_sd},
          {"morning_share", p.morning_share},
          {"afternoon_share", p.afternoon_share},
          {"night_share", p.night_share},
          {"night_share_sd", p.night_share_sd},
          {"harsh_accel_per_100km", p.harsh_accel_per_100km},
          {"hard_brake_per_100km", p.hard_brake_per_100km},
          {"hard_turn_per_100km", p.hard_turn_per_100km},
          {"event_rate_sd", p.event_rate_sd},
          {"speed_mean_kmh", p.speed_mean_kmh},
          {"speed_sd_kmh", p.speed_sd_kmh},
          {"rpm_mean", p.rpm_mean},
          {"rpm_sd", p.rpm_sd},
          {"duration_mean_s", p.duration_mean_s},
          {"duration_sd_s", p.duration_sd_s}};
}

inline BehaviorProfile profile_from_json(const nlohmann::json& j, BehaviorProfile p) {
  auto get = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  get("trips_per_week", p.trips_per_week);
  get("trips_per_week_sd", p.trips_per_week_sd);
  get("morning_share", p.morning_share);
  get("afternoon_share", p.afternoon_share);
  get("night_share", p.night_share);
  get("night_share_sd", p.night_share_sd);
  get("harsh_accel_per_100km", p.harsh_accel_per_100km);
  get("hard_brake_per_100km", p.hard_brake_per_100km);
  get("hard_turn_per_100km", p.hard_turn_per_100km);
  get("event_rate_sd", p.event_rate_sd);
  get("speed_mean_kmh", p.speed_mean_kmh);
  get("speed_sd_kmh", p.speed_sd_kmh);
  get("rpm_mean", p.rpm_mean);
  get("rpm_sd", p.rpm_sd);
  get("duration_mean_s", p.duration_mean_s);
  get("duration_sd_s", p.duration_sd_s);
  return p;
}

inline std::string format_date(std::chrono::sys_days d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

inline nlohmann::ordered_json cohort_spec_to_json(const CohortSpec& s) {
  nlohmann::ordered_json j;
  j["n_participants"] = s.n_participants;
  j["mci_fraction"] = s.mci_fraction;
  j["weeks"] = s.weeks;
  j["seed"] = s.seed;
  j["start_date"] = format_date(s.start_date);
  j["utc_offset_minutes"] = s.utc_offset_minutes;
  j["total_trips"] = s.total_trips ? nlohmann::ordered_json(*s.total_trips) : nlohmann::ordered_json();
  j["min_trip_separation_s"] = s.min_trip_separation_s;
  j["sampling"] = {{"gps_period_s", s.sampling.gps_period_s},
                   {"obd_period_s", s.sampling.obd_period_s},
                   {"imu_rate_hz", s.sampling.imu_rate_hz}};
  j["profiles"] = {{"non_mci", profile_to_json(s.non_mci)}, {"mci", profile_to_json(s.mci)}};
  j["planted_effect"] = {{"effect", to_string(s.effect)}, {"strength", s.effect_strength}};
  return j;
}

// Missing keys keep their defaults. A "planted_effect" block is applied on
// top of the profiles through inject_planted_signal.
inline CohortSpec cohort_spec_from_json(const nlohmann::json& j) {
  CohortSpec s;
  try {
    if (j.contains("n_participants")) s.n_participants = j.at("n_participants").get<std::size_t>();
    if (j.contains("mci_fraction")) s.mci_fraction = j.at("mci_fraction").get<double>();
    if (j.contains("weeks")) s.weeks = j.at("weeks").get<int>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("start_date")) {
      const auto ts = parse_iso8601(j.at("start_date").get<std::string>() + "T00:00:00Z");
      if (!ts) throw Error(Errc::invalid_argument, "cohort spec: bad start_date");
      s.start_date = std::chrono::floor<std::chrono::days>(*ts);
    }
    if (j.contains("utc_offset_minutes")) s.utc_offset_minutes = j.at("utc_offset_minutes").get<int>();
    if (j.contains("utc_offset_hours")) {
      s.utc_offset_minutes = static_cast<int>(std::lround(j.at("utc_offset_hours").get<double>() * 60.0));
    }
    if (j.contains("total_trips") && !j.at("total_trips").is_null()) s.total_trips = j.at("total_trips").get<std::size_t>();
    if (j.contains("min_trip_separation_s")) s.min_trip_separation_s = j.at("min_trip_separation_s").get<double>();
    if (j.contains("sampling")) {
      const auto& sj = j.at("sampling");
      if (sj.contains("gps_period_s")) s.sampling.gps_period_s = sj.at("gps_period_s").get<int>();
      if (sj.contains("obd_period_s")) s.sampling.obd_period_s = sj.at("obd_period_s").get<int>();
      if (sj.contains("imu_rate_hz")) s.sampling.imu_rate_hz = sj.at("imu_rate_hz").get<int>();
    }
    if (j.contains("profiles")) {
      const auto& pj = j.at("profiles");
      if (pj.contains("non_mci")) s.non_mci = profile_from_json(pj.at("non_mci"), s.non_mci);
      s.mci = pj.contains("mci") ? profile_from_json(pj.at("mci"), s.non_mci) : s.non_mci;
    } else {
      s.mci = s.non_mci;
    }
    if (j.contains("planted_effect")) {
      const auto& ej = j.at("planted_effect");
      const auto effect = parse_effect(ej.value("effect", std::string("none")));
      const double strength = ej.value("strength", 0.0);
      if (effect != PlantedEffect::none || strength != 0.0) s = inject_planted_signal(s, effect, strength);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("cohort spec: ") + e.what());
  }
  s.validate();
  return s;
}

// ---- planning ----

struct PlannedEvent {
  EventKind kind{};
  std::size_t first_sample = 0;  // IMU sample index within the trip
  std::size_t length = 1;
};

struct TripPlan {
  std::string trip_id;
  Timestamp start{};
  int duration_s = 0;
  double speed_kmh = 0.0;  // trip-level mean of the per-second speed draw
  double rpm = 0.0;
  LatLon origin;
  double bearing_deg = 0.0;
  std::vector<PlannedEvent> events;
  std::uint64_t kinematics_seed = 0;
  std::uint64_t imu_seed = 0;
};

struct ParticipantPlan {
  std::string participant_id;
  Demographics demographics;
  BehaviorProfile profile;   // group profile the participant was drawn from
  double night_share = 0.0;  // participant-level parameters
  double event_rates[3] = {0.0, 0.0, 0.0};
  std::vector<TripPlan> trips;
};

struct CohortPlan {
  CohortSpec spec;
  std::vector<ParticipantPlan> participants;

  std::size_t trip_count() const {
    std::size_t n = 0;
    for (const auto& p : participants) n += p.trips.size();
    return n;
  }
};

namespace detail {

enum : std::uint64_t { kStreamParticipant = 1, kStreamTrips = 2, kStreamTrip = 3, kStreamKinematics = 4, kStreamImu = 5 };

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return derive_seed(derive_seed(derive_seed(seed, a), b), c);
}

inline Demographics draw_demographics(Rng& rng, int mci) {
  static constexpr double race_w[] = {0.14, 0.72, 0.05, 0.02, 0.04, 0.03};
  static constexpr double eth_w[] = {0.12, 0.60, 0.15, 0.04, 0.05, 0.04};
  static constexpr double edu_w[] = {0.02, 0.14, 0.16, 0.05, 0.08, 0.22, 0.06, 0.15, 0.05, 0.07};
  Demographics d;
  d.age = static_cast<int>(std::clamp(std::lround(rng.normal(75.67, 6.04)), 65L, 89L));
  d.gender = rng.bernoulli(0.5) ? Gender::female : Gender::male;
  d.race = static_cast<int>(rng.categorical(race_w)) + 1;
  d.ethnicity = static_cast<int>(rng.categorical(eth_w)) + 1;
  d.education = static_cast<int>(rng.categorical(edu_w)) + 1;
  d.retired = rng.bernoulli(0.8) ? 1 : 0;
  d.bmi_obese = rng.bernoulli(0.3) ? 1 : 0;
  d.mci = mci;
  return d;
}

// Minute-of-day windows for the four time-of-day buckets.
inline int draw_minute(Rng& rng, TimeOfDay bucket) {
  switch (bucket) {
    case TimeOfDay::morning: return 5 * 60 + static_cast<int>(rng.below(7 * 60));
    case TimeOfDay::afternoon: return 12 * 60 + static_cast<int>(rng.below(5 * 60));
    case TimeOfDay::evening: return 17 * 60 + static_cast<int>(rng.below(4 * 60));
    case TimeOfDay::night: return (21 * 60 + static_cast<int>(rng.below(8 * 60))) % 1440;
  }
  return 0;
}

inline int draw_duration(Rng& rng, const BehaviorProfile& p) {
  const double mean = p.duration_mean_s;
  const double var = p.duration_sd_s * p.duration_sd_s;
  const double sigma2 = std::log1p(var / (mean * mean));
  const double mu = std::log(mean) - sigma2 / 2.0;
  const double d = rng.lognormal(mu, std::sqrt(sigma2));
  return static_cast<int>(std::clamp(std::lround(d), 60L, 38658L));
}

// Largest-remainder apportionment of `total` by `weights`.
inline std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = sum > 0.0 ? static_cast<double>(total) * weights[i] / sum
                                   : static_cast<double>(total) / static_cast<double>(weights.size());
    out[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += out[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[rem[k % rem.size()].second];
  return out;
}

}  // namespace detail

inline CohortPlan plan_cohort(const CohortSpec& spec) {
  spec.validate();
  CohortPlan plan;
  plan.spec = spec;
  const auto clock = spec.clock();
  const std::size_t n = spec.n_participants;

  // MCI membership: a seeded shuffle, the first round(n * fraction) are MCI.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng cohort_rng(derive_seed(spec.seed, 0));
  cohort_rng.shuffle(std::span(order));
  const auto n_mci = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.mci_fraction));
  std::vector<int> is_mci(n, 0);
  for (std::size_t k = 0; k < n_mci; ++k) is_mci[order[k]] = 1;

  std::vector<double> weekly(n);
  plan.participants.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = plan.participants[i];
    Rng rng(detail::sub_seed(spec.seed, detail::kStreamParticipant, i));
    char id[32];
    std::snprintf(id, sizeof id, "p%03zu", i);
    p.participant_id = id;
    p.profile = is_mci[i] ? spec.mci : spec.non_mci;
    p.demographics = detail::draw_demographics(rng, is_mci[i]);
    const double max_night = std::max(0.0, 1.0 - p.profile.morning_share - p.profile.afternoon_share);
    p.night_share = std::clamp(rng.normal(p.profile.night_share, p.profile.night_share_sd), 0.0, max_night);
    const double means[3] = {p.profile.harsh_accel_per_100km, p.profile.hard_brake_per_100km,
                             p.profile.hard_turn_per_100km};
    for (int k = 0; k < 3; ++k) p.event_rates[k] = std::max(0.0, rng.normal(means[k], p.profile.event_rate_sd));
    weekly[i] = std::max(0.5, rng.normal(p.profile.trips_per_week, p.profile.trips_per_week_sd));
  }

  std::vector<std::size_t> counts(n);
  if (spec.total_trips) {
    counts = detail::apportion(*spec.total_trips, weekly);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(detail::sub_seed(spec.seed, detail::kStreamTrips, i));
      counts[i] = static_cast<std::size_t>(rng.poisson(weekly[i] * spec.weeks));
    }
  }

  const auto horizon_days = static_cast<std::uint64_t>(spec.weeks) * 7;
  const auto sep = std::chrono::milliseconds{std::llround(spec.min_trip_separation_s * 1000.0)};
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = plan.participants[i];
    Rng rng(detail::sub_seed(spec.seed, detail::kStreamTrips, i, 1));
    const LatLon home{26.37 + rng.uniform(-0.2, 0.2), -80.10 + rng.uniform(-0.2, 0.2)};
    const double evening = std::max(0.0, 1.0 - p.profile.morning_share - p.profile.afternoon_share - p.night_share);
    const double bucket_w[4] = {p.profile.morning_share, p.profile.afternoon_share, evening, p.night_share};
    std::map<Timestamp, Timestamp> occupied;  // start -> end
    std::vector<TripPlan> trips;
    trips.reserve(counts[i]);
    for (std::size_t k = 0; k < counts[i]; ++k) {
      TripPlan t;
      const auto bucket = static_cast<TimeOfDay>(rng.categorical(bucket_w));
      t.duration_s = detail::draw_duration(rng, p.profile);
      bool placed = false;
      for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
        const auto day = spec.start_date + std::chrono::days{static_cast<int>(rng.below(horizon_days))};
        const int minute = detail::draw_minute(rng, bucket);
        const auto second = static_cast<int>(rng.below(60));
        const Timestamp start = clock.to_utc(day, std::chrono::minutes{minute} + std::chrono::seconds{second});
        const Timestamp end = start + std::chrono::seconds{t.duration_s};
        auto next = occupied.lower_bound(start);
        if (next != occupied.end() && end + sep > next->first) continue;
        if (next != occupied.begin() && std::prev(next)->second + sep > start) continue;
        occupied.emplace(start, end);
        t.start = start;
        placed = true;
      }
      if (!placed) throw Error(Errc::invalid_argument, "cannot place trip; reduce trips_per_week or durations");
      const auto& prof = p.profile;
      t.speed_kmh = rng.truncated_normal(prof.speed_mean_kmh, prof.speed_sd_kmh,
                                         std::max(3.0, prof.speed_mean_kmh - 2.2 * prof.speed_sd_kmh),
                                         prof.speed_mean_kmh + 2.2 * prof.speed_sd_kmh);
      t.rpm = rng.truncated_normal(prof.rpm_mean, prof.rpm_sd, std::max(600.0, prof.rpm_mean - 2.5 * prof.rpm_sd),
                                   prof.rpm_mean + 2.5 * prof.rpm_sd);
      t.origin = {home.lat + rng.uniform(-0.02, 0.02), home.lon + rng.uniform(-0.02, 0.02)};
      t.bearing_deg = rng.uniform(0.0, 360.0);

      // Harsh events: Poisson counts at the participant's per-100-km rates on
      // the expected trip distance, placed in disjoint 5-sample slots.
      const double expected_km = t.speed_kmh * t.duration_s / 3600.0;
      const std::size_t n_imu = static_cast<std::size_t>(t.duration_s) * static_cast<std::size_t>(spec.sampling.imu_rate_hz) + 1;
      const std::size_t n_slots = (n_imu - 1) / 5;
      std::vector<EventKind> kinds;
      for (int kk = 0; kk < 3; ++kk) {
        const auto c = rng.poisson(p.event_rates[kk] * expected_km / 100.0);
        for (std::uint64_t e = 0; e < c; ++e) kinds.push_back(static_cast<EventKind>(kk));
      }
      if (kinds.size() > n_slots) kinds.resize(n_slots);
      std::vector<std::size_t> slots(n_slots);
      std::iota(slots.begin(), slots.end(), 0);
      for (std::size_t e = 0; e < kinds.size(); ++e) {
        const auto j = e + static_cast<std::size_t>(rng.below(n_slots - e));
        std::swap(slots[e], slots[j]);
        t.events.push_back({kinds[e], slots[e] * 5 + 1, 1 + static_cast<std::size_t>(rng.below(3))});
      }
      std::sort(t.events.begin(), t.events.end(),
                [](const PlannedEvent& a, const PlannedEvent& b) { return a.first_sample < b.first_sample; });
      trips.push_back(std::move(t));
    }
    std::sort(trips.begin(), trips.end(), [](const TripPlan& a, const TripPlan& b) { return a.start < b.start; });
    for (std::size_t k = 0; k < trips.size(); ++k) {
      char tid[32];
      std::snprintf(tid, sizeof tid, "t%04zu", k);
      trips[k].trip_id = p.participant_id + "-" + tid;
      trips[k].kinematics_seed = detail::sub_seed(spec.seed, detail::kStreamKinematics, i, k);
      trips[k].imu_seed = detail::sub_seed(spec.seed, detail::kStreamImu, i, k);
    }
    p.trips = std::move(trips);
  }
  return plan;
}

// ---- rendering ----

// Ground truth for one trip, computed from exactly the values written to the
// streams.
struct TripTruth {
  std::string trip_id;
  Timestamp start{};
  Timestamp end{};
  double duration_s = 0.0;
  double distance_km = 0.0;
  double mean_speed_kmh = 0.0;
  double mean_rpm = 0.0;
  std::size_t n_harsh_accel = 0;
  std::size_t n_hard_brake = 0;
  std::size_t n_hard_turn = 0;
  std::vector<DrivingEvent> events;
};

struct StreamBuffers {
  std::string nmea;
  std::string obd;
  std::string imu;
};

namespace detail {

inline double quantize(double v, double step) { return std::round(v / step) / std::round(1.0 / step); }

}  // namespace detail

// Per-second speeds follow a truncated normal around the trip mean; the car
// moves along one great circle, so consecutive GPS fixes are exactly the
// travelled arc apart. When `out` is given the stream lines are appended.
inline TripTruth render_trip(const TripPlan& plan, const SamplingSpec& sampling, StreamBuffers* out = nullptr) {
  TripTruth truth;
  truth.trip_id = plan.trip_id;
  truth.start = plan.start;
  truth.end = plan.start + std::chrono::seconds{plan.duration_s};
  truth.duration_s = plan.duration_s;

  Rng rng(plan.kinematics_seed);
  const int n = plan.duration_s;
  double travelled = 0.0;
  double speed_sum = 0.0, rpm_sum = 0.0;
  std::size_t speed_n = 0, rpm_n = 0;
  const double v_lo = 0.5 * plan.speed_kmh, v_hi = 1.5 * plan.speed_kmh;
  for (int k = 0; k <= n; ++k) {
    const double v = rng.truncated_normal(plan.speed_kmh, 0.1 * plan.speed_kmh, v_lo, v_hi);
    const Timestamp t = plan.start + std::chrono::seconds{k};
    const bool gps_due = k % sampling.gps_period_s == 0 || k == n;
    const bool obd_due = k % sampling.obd_period_s == 0 || k == n;
    if (gps_due) {
      const LatLon pos = destination(plan.origin, plan.bearing_deg, travelled);
      GpsFix fix{t, pos.lat, pos.lon, v, true, GpsSource::rmc};
      if (out) {
        append_rmc(out->nmea, fix);
        out->nmea += '\n';
      }
    }
    if (obd_due) {
      const double rpm = std::clamp(detail::quantize(rng.normal(plan.rpm, 60.0), 0.25), 0.0, 16383.75);
      const double speed = static_cast<double>(std::clamp(std::lround(v), 0L, 255L));
      if (out) {
        append_obd(out->obd, ObdReading{t, kPidRpm, rpm, std::nullopt});
        out->obd += '\n';
        append_obd(out->obd, ObdReading{t, kPidSpeed, std::nullopt, speed});
        out->obd += '\n';
      }
      rpm_sum += rpm;
      ++rpm_n;
      speed_sum += speed;
      ++speed_n;
    } else if (gps_due) {
      speed_sum += v;
      ++speed_n;
    }
    if (k < n) travelled += v / 3600.0;
  }
  truth.distance_km = travelled;
  truth.mean_speed_kmh = speed_n ? speed_sum / static_cast<double>(speed_n) : 0.0;
  truth.mean_rpm = rpm_n ? rpm_sum / static_cast<double>(rpm_n) : 0.0;

  const auto rate = static_cast<std::size_t>(sampling.imu_rate_hz);
  const std::size_t n_imu = static_cast<std::size_t>(n) * rate + 1;
  for (const auto& e : plan.events) {
    const auto onset = plan.start + std::chrono::milliseconds{static_cast<std::int64_t>(e.first_sample * 1000 / rate)};
    truth.events.push_back({e.kind, onset, 0.0});
    switch (e.kind) {
      case EventKind::harsh_acceleration: ++truth.n_harsh_accel; break;
      case EventKind::hard_braking: ++truth.n_hard_brake; break;
      case EventKind::hard_turn: ++truth.n_hard_turn; break;
    }
  }
  if (!out) return truth;

  Rng imu_rng(plan.imu_seed);
  std::size_t next_event = 0;
  double turn_sign = 1.0;
  for (std::size_t j = 0; j < n_imu; ++j) {
    ImuRecord r;
    r.timestamp = plan.start + std::chrono::milliseconds{static_cast<std::int64_t>(j * 1000 / rate)};
    r.accel.x = std::clamp(imu_rng.normal(0.0, 0.6), -3.0, 3.0);
    r.accel.y = std::clamp(imu_rng.normal(0.0, 0.6), -3.0, 3.0);
    r.accel.z = 9.81 + imu_rng.normal(0.0, 0.1);
    r.gyro = {imu_rng.normal(0.0, 0.5), imu_rng.normal(0.0, 0.5), imu_rng.normal(0.0, 2.0)};
    while (next_event < plan.events.size() &&
           plan.events[next_event].first_sample + plan.events[next_event].length <= j) {
      ++next_event;
    }
    if (next_event < plan.events.size()) {
      const auto& e = plan.events[next_event];
      if (j == e.first_sample) turn_sign = imu_rng.bernoulli(0.5) ? 1.0 : -1.0;
      if (j >= e.first_sample && j < e.first_sample + e.length) {
        const double mag = imu_rng.uniform(4.2, 6.5);
        switch (e.kind) {
          case EventKind::harsh_acceleration: r.accel.x = mag; break;
          case EventKind::hard_braking: r.accel.x = -mag; break;
          case EventKind::hard_turn: r.accel.y = turn_sign * mag; break;
        }
      }
    }
    r.accel = {detail::quantize(r.accel.x, 0.001), detail::quantize(r.accel.y, 0.001),
               detail::quantize(r.accel.z, 0.001)};
    r.gyro = {detail::quantize(r.gyro.x, 0.01), detail::quantize(r.gyro.y, 0.01), detail::quantize(r.gyro.z, 0.01)};
    append_imu_line(out->imu, r);
    out->imu += '\n';
  }
  return truth;
}

// Trips rebuilt from ground truth (no samples), ready for build_records.
inline std::vector<Trip> truth_trips(const ParticipantPlan& p, const SamplingSpec& sampling) {
  std::vector<Trip> trips;
  trips.reserve(p.trips.size());
  for (const auto& plan : p.trips) {
    auto truth = render_trip(plan, sampling);
    Trip t;
    t.trip_id = truth.trip_id;
    t.participant_id = p.participant_id;
    t.start = truth.start;
    t.end = truth.end;
    t.duration_s = truth.duration_s;
    t.distance_km = truth.distance_km;
    t.mean_speed_kmh = truth.mean_speed_kmh;
    t.mean_rpm = truth.mean_rpm;
    t.events = std::move(truth.events);
    trips.push_back(std::move(t));
  }
  return trips;
}

// DBI rows straight from the generator's ground truth, bypassing the
// streams. Used for fast statistical experiments.
inline std::vector<DbiRecord> truth_records(const CohortPlan& plan, DbiConfig cfg = {}) {
  cfg.clock = plan.spec.clock();
  std::vector<DbiRecord> out;
  for (const auto& p : plan.participants) {
    const auto trips = truth_trips(p, plan.spec.sampling);
    auto recs = build_participant_records(trips, p.demographics, p.participant_id, cfg);
    out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  return out;
}

// ---- files ----

struct CohortFiles {
  std::string nmea;
  std::string obd;
  std::string imu;
};

inline CohortFiles participant_files(const std::string& participant_id) {
  return {participant_id + ".nmea", participant_id + ".obd", participant_id + ".imu.csv"};
}

inline nlohmann::ordered_json demographics_to_json(const Demographics& d) {
  return {{"age", d.age},           {"gender", d.gender == Gender::female ? "female" : "male"},
          {"race", d.race},         {"ethnicity", d.ethnicity},
          {"education", d.education}, {"retired", d.retired},
          {"bmi_obese", d.bmi_obese}, {"mci", d.mci}};
}

inline Demographics demographics_from_json(const nlohmann::json& j) {
  Demographics d;
  d.age = j.at("age").get<int>();
  const auto g = j.at("gender").get<std::string>();
  if (g != "male" && g != "female") throw Error(Errc::format, "gender must be male or female");
  d.gender = g == "female" ? Gender::female : Gender::male;
  d.race = j.at("race").get<int>();
  d.ethnicity = j.at("ethnicity").get<int>();
  d.education = j.at("education").get<int>();
  d.retired = j.at("retired").get<int>();
  d.bmi_obese = j.at("bmi_obese").get<int>();
  d.mci = j.at("mci").get<int>();
  d.validate();
  return d;
}

inline nlohmann::ordered_json truth_to_json(const TripTruth& t, const LocalClock& clock, const DbiConfig& cfg) {
  Trip probe;
  probe.start = t.start;
  probe.distance_km = t.distance_km;
  const auto cls = classify_trip(probe, DbiConfig{cfg.harsh_threshold, cfg.urban_limit_km, clock, cfg.windows});
  return {{"trip_id", t.trip_id},
          {"start_ms", epoch_ms(t.start)},
          {"end_ms", epoch_ms(t.end)},
          {"start_utc", format_iso8601(t.start)},
          {"duration_s", t.duration_s},
          {"distance_km", t.distance_km},
          {"mean_speed_kmh", t.mean_speed_kmh},
          {"mean_rpm", t.mean_rpm},
          {"time_of_day", to_string(cls.time_of_day)},
          {"night", cls.night},
          {"peak", cls.peak},
          {"urban", cls.distance == DistanceClass::urban},
          {"quarter", cls.quarter},
          {"n_harsh_accel", t.n_harsh_accel},
          {"n_hard_brake", t.n_hard_brake},
          {"n_hard_turn", t.n_hard_turn}};
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

// Writes manifest.json, ledger.json and three stream files per participant.
// Returns the manifest path.
inline std::filesystem::path generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir) {
  const CohortPlan plan = plan_cohort(spec);
  std::filesystem::create_directories(out_dir);
  const auto clock = spec.clock();
  nlohmann::ordered_json manifest;
  manifest["format"] = "drivesense-cohort-v1";
  manifest["spec"] = cohort_spec_to_json(spec);
  manifest["ledger"] = "ledger.json";
  manifest["participants"] = nlohmann::ordered_json::array();
  nlohmann::ordered_json ledger;
  ledger["participants"] = nlohmann::ordered_json::array();

  for (const auto& p : plan.participants) {
    StreamBuffers buf;
    buf.imu.append(kImuHeader);
    buf.imu += '\n';
    auto trips = nlohmann::ordered_json::array();
    for (const auto& t : p.trips) trips.push_back(truth_to_json(render_trip(t, spec.sampling, &buf), clock, {}));
    const auto files = participant_files(p.participant_id);
    write_text_file(out_dir / files.nmea, buf.nmea);
    write_text_file(out_dir / files.obd, buf.obd);
    write_text_file(out_dir / files.imu, buf.imu);
    manifest["participants"].push_back({{"participant_id", p.participant_id},
                                        {"demographics", demographics_to_json(p.demographics)},
                                        {"files", {{"nmea", files.nmea}, {"obd", files.obd}, {"imu", files.imu}}}});
    ledger["participants"].push_back({{"participant_id", p.participant_id},
                                      {"mci", p.demographics.mci},
                                      {"night_share", p.night_share},
                                      {"trips", std::move(trips)}});
  }
  const auto manifest_path = out_dir / "manifest.json";
  write_text_file(out_dir / "ledger.json", ledger.dump(1) + "\n");
  write_text_file(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

}  // namespace drivesense
