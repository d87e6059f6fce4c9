#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drivesense/sensor_parsers.hpp"
#include "drivesense/time.hpp"

namespace drivesense {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr std::chrono::milliseconds kCoalesceWindow{100};
inline constexpr double kDefaultTripGapS = 300.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

struct TelemetrySample {
  Timestamp timestamp{};
  std::optional<GpsFix> gps;
  std::optional<double> obd_rpm;
  std::optional<double> obd_speed_kmh;
  std::optional<Vec3> accel;
  std::optional<double> volts;

  bool empty() const { return !gps && !obd_rpm && !obd_speed_kmh && !accel && !volts; }
};

enum class EventKind { harsh_acceleration, hard_braking, hard_turn };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::harsh_acceleration: return "harsh_acceleration";
    case EventKind::hard_braking: return "hard_braking";
    case EventKind::hard_turn: return "hard_turn";
  }
  return "?";
}

struct DrivingEvent {
  EventKind kind{};
  Timestamp timestamp{};  // excursion onset
  double peak = 0.0;      // signed value of largest magnitude within the excursion
};

struct Trip {
  std::string trip_id;
  std::string participant_id;
  Timestamp start{};
  Timestamp end{};
  std::vector<TelemetrySample> samples;
  double duration_s = 0.0;
  std::optional<double> distance_km;
  std::optional<double> mean_speed_kmh;
  std::optional<double> mean_rpm;
  std::vector<DrivingEvent> events;
};

// Great-circle distance on a sphere of radius 6371 km.
inline double haversine_km(LatLon a, LatLon b) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * rad;
  const double dlon = (b.lon - a.lon) * rad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double h = s1 * s1 + std::cos(a.lat * rad) * std::cos(b.lat * rad) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

// Point reached from `origin` after `distance_km` along the great circle with
// initial bearing `bearing_deg`.
inline LatLon destination(LatLon origin, double bearing_deg, double distance_km) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double delta = distance_km / kEarthRadiusKm;
  const double theta = bearing_deg * rad;
  const double phi1 = origin.lat * rad;
  const double lambda1 = origin.lon * rad;
  const double sin_phi2 = std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(theta);
  const double phi2 = std::asin(std::clamp(sin_phi2, -1.0, 1.0));
  const double lambda2 = lambda1 + std::atan2(std::sin(theta) * std::sin(delta) * std::cos(phi1),
                                              std::cos(delta) - std::sin(phi1) * sin_phi2);
  double lon = lambda2 / rad;
  lon = std::fmod(lon + 540.0, 360.0) - 180.0;
  return {phi2 / rad, lon};
}

// K-way merge of the individually time-sorted streams. Records whose
// timestamps fall within 100 ms of the first record of the current sample
// join it, unless that sample already carries the same kind of value.
// Ties between streams are broken GPS, OBD, IMU, voltage.
inline std::vector<TelemetrySample> align_streams(std::span<const GpsFix> gps, std::span<const ObdReading> obd,
                                                  std::span<const ImuRecord> imu,
                                                  std::span<const VoltageRecord> volts,
                                                  std::chrono::milliseconds window = kCoalesceWindow) {
  std::vector<TelemetrySample> out;
  out.reserve(std::max({gps.size(), obd.size(), imu.size(), volts.size()}));
  std::size_t ig = 0, io = 0, ii = 0, iv = 0;
  TelemetrySample current;
  bool open = false;

  auto flush = [&] {
    if (open) out.push_back(std::move(current));
    current = TelemetrySample{};
    open = false;
  };
  auto slot_for = [&](Timestamp t, auto occupied) -> TelemetrySample& {
    if (!open || t - current.timestamp >= window || occupied(current)) {
      flush();
      current.timestamp = t;
      open = true;
    }
    return current;
  };

  constexpr auto never = Timestamp::max();
  while (true) {
    const Timestamp tg = ig < gps.size() ? gps[ig].timestamp : never;
    const Timestamp to = io < obd.size() ? obd[io].timestamp : never;
    const Timestamp ti = ii < imu.size() ? imu[ii].timestamp : never;
    const Timestamp tv = iv < volts.size() ? volts[iv].timestamp : never;
    const Timestamp t = std::min({tg, to, ti, tv});
    if (t == never) break;
    if (tg == t) {
      slot_for(t, [](const TelemetrySample& s) { return s.gps.has_value(); }).gps = gps[ig++];
    } else if (to == t) {
      const ObdReading& r = obd[io++];
      if (r.rpm) {
        slot_for(t, [](const TelemetrySample& s) { return s.obd_rpm.has_value(); }).obd_rpm = r.rpm;
      } else if (r.speed_kmh) {
        slot_for(t, [](const TelemetrySample& s) { return s.obd_speed_kmh.has_value(); }).obd_speed_kmh =
            r.speed_kmh;
      }
    } else if (ti == t) {
      slot_for(t, [](const TelemetrySample& s) { return s.accel.has_value(); }).accel = imu[ii++].accel;
    } else {
      slot_for(t, [](const TelemetrySample& s) { return s.volts.has_value(); }).volts = volts[iv++].volts;
    }
  }
  flush();
  return out;
}

struct Segmentation {
  std::vector<Trip> trips;
  std::size_t dropped_singletons = 0;
};

// Splits a time-sorted sample sequence at every gap >= gap_s. Trips with a
// single sample are dropped and counted. Trip ids are "<participant>-tNNNN".
inline Segmentation segment_trips(std::vector<TelemetrySample> samples, double gap_s = kDefaultTripGapS,
                                  const std::string& participant_id = {}) {
  if (!(gap_s > 0.0)) throw Error(Errc::invalid_argument, "gap_s must be positive");
  Segmentation result;
  const auto gap = std::chrono::milliseconds{static_cast<std::int64_t>(std::llround(gap_s * 1000.0))};
  std::size_t begin = 0;
  auto close = [&](std::size_t end) {
    if (end - begin < 2) {
      result.dropped_singletons += end - begin;
      return;
    }
    Trip trip;
    trip.participant_id = participant_id;
    char id[16];
    std::snprintf(id, sizeof id, "t%04zu", result.trips.size());
    trip.trip_id = participant_id.empty() ? std::string(id) : participant_id + "-" + id;
    trip.samples.assign(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(begin)),
                        std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(end)));
    trip.start = trip.samples.front().timestamp;
    trip.end = trip.samples.back().timestamp;
    trip.duration_s = seconds_between(trip.start, trip.end);
    result.trips.push_back(std::move(trip));
  };
  for (std::size_t i = 1; i <= samples.size(); ++i) {
    if (i == samples.size() || samples[i].timestamp - samples[i - 1].timestamp >= gap) {
      close(i);
      begin = i;
    }
  }
  return result;
}

// Fills duration, distance (valid GPS fixes only) and mean speed/RPM. OBD
// speed takes precedence over GPS speed within a sample; GGA fixes carry no
// speed.
inline void trip_kinematics(Trip& trip) {
  if (trip.samples.empty()) return;
  trip.start = trip.samples.front().timestamp;
  trip.end = trip.samples.back().timestamp;
  trip.duration_s = seconds_between(trip.start, trip.end);

  std::optional<LatLon> last;
  double distance = 0.0;
  double speed_sum = 0.0, rpm_sum = 0.0;
  std::size_t speed_n = 0, rpm_n = 0;
  for (const auto& s : trip.samples) {
    if (s.gps && s.gps->valid) {
      const LatLon p{s.gps->latitude, s.gps->longitude};
      if (last) distance += haversine_km(*last, p);
      last = p;
    }
    if (s.obd_speed_kmh) {
      speed_sum += *s.obd_speed_kmh;
      ++speed_n;
    } else if (s.gps && s.gps->valid && s.gps->source == GpsSource::rmc) {
      speed_sum += s.gps->speed_kmh;
      ++speed_n;
    }
    if (s.obd_rpm) {
      rpm_sum += *s.obd_rpm;
      ++rpm_n;
    }
  }
  trip.distance_km = last ? std::optional<double>(distance) : std::nullopt;
  trip.mean_speed_kmh = speed_n ? std::optional<double>(speed_sum / static_cast<double>(speed_n)) : std::nullopt;
  trip.mean_rpm = rpm_n ? std::optional<double>(rpm_sum / static_cast<double>(rpm_n)) : std::nullopt;
}

}  // namespace drivesense
