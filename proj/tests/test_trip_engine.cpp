#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "drivesense/rng.hpp"
#include "drivesense/trip_engine.hpp"

using namespace drivesense;

namespace {

TelemetrySample at_s(double s) {
  TelemetrySample t;
  t.timestamp = from_epoch_ms(static_cast<std::int64_t>(std::llround(s * 1000.0)));
  t.obd_rpm = 900.0;
  return t;
}

GpsFix fix_at(std::int64_t ms, double lat, double lon, bool valid = true) {
  GpsFix f;
  f.timestamp = from_epoch_ms(ms);
  f.latitude = lat;
  f.longitude = lon;
  f.valid = valid;
  return f;
}

// Haversine written out independently of the library.
double haversine_oracle(double lat1, double lon1, double lat2, double lon2) {
  const double r = 6371.0, d2r = std::numbers::pi / 180.0;
  const double a = std::pow(std::sin((lat2 - lat1) * d2r / 2), 2) +
                   std::cos(lat1 * d2r) * std::cos(lat2 * d2r) * std::pow(std::sin((lon2 - lon1) * d2r / 2), 2);
  return 2 * r * std::asin(std::sqrt(a));
}

}  // namespace

TEST(Align, MergesWithinWindow) {
  std::vector<GpsFix> gps{fix_at(1000, 1, 1)};
  std::vector<ImuRecord> imu{{from_epoch_ms(1050), {0, 0, 9.8}, {}}};
  const auto s = align_streams(gps, {}, imu, {});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(epoch_ms(s[0].timestamp), 1000);
  EXPECT_TRUE(s[0].gps);
  EXPECT_TRUE(s[0].accel);
}

TEST(Align, SplitsOutsideWindow) {
  std::vector<GpsFix> gps{fix_at(1000, 1, 1)};
  std::vector<ImuRecord> imu{{from_epoch_ms(2000), {0, 0, 9.8}, {}}};
  EXPECT_EQ(align_streams(gps, {}, imu, {}).size(), 2u);
}

TEST(Align, EmptyInputs) { EXPECT_TRUE(align_streams({}, {}, {}, {}).empty()); }

TEST(Align, TenHertzImuStaysDistinct) {
  std::vector<ImuRecord> imu;
  for (int i = 0; i < 50; ++i) imu.push_back({from_epoch_ms(i * 100), {}, {}});
  std::vector<GpsFix> gps{fix_at(0, 0, 0), fix_at(1000, 0, 0)};
  const auto s = align_streams(gps, {}, imu, {});
  EXPECT_EQ(s.size(), 50u);
  EXPECT_TRUE(s[0].gps && s[10].gps);
}

TEST(Align, ObdPairsJoinOneSample) {
  std::vector<ObdReading> obd{{from_epoch_ms(5000), kPidRpm, 1000.0, std::nullopt},
                              {from_epoch_ms(5000), kPidSpeed, std::nullopt, 40.0},
                              {from_epoch_ms(5010), kPidRpm, 1100.0, std::nullopt}};
  const auto s = align_streams({}, obd, {}, {});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(*s[0].obd_rpm, 1000.0);
  EXPECT_EQ(*s[0].obd_speed_kmh, 40.0);
  EXPECT_EQ(*s[1].obd_rpm, 1100.0);
}

TEST(Segment, GapSplitsTrips) {
  std::vector<TelemetrySample> s;
  for (int t = 0; t <= 60; ++t) s.push_back(at_s(t));
  for (int t = 400; t <= 460; ++t) s.push_back(at_s(t));
  EXPECT_EQ(segment_trips(s, 300).trips.size(), 2u);
}

TEST(Segment, ShortGapKeepsOneTrip) {
  std::vector<TelemetrySample> s;
  for (int t = 0; t <= 60; ++t) s.push_back(at_s(t));
  for (int t = 200; t <= 260; ++t) s.push_back(at_s(t));
  const auto seg = segment_trips(s, 300, "p001");
  ASSERT_EQ(seg.trips.size(), 1u);
  EXPECT_EQ(seg.trips[0].trip_id, "p001-t0000");
  EXPECT_EQ(seg.trips[0].duration_s, 260.0);
}

TEST(Segment, GapExactlyAtLimitSplits) {
  std::vector<TelemetrySample> s{at_s(0), at_s(1), at_s(301), at_s(302)};
  EXPECT_EQ(segment_trips(s, 300).trips.size(), 2u);
}

TEST(Segment, SingletonsDropped) {
  std::vector<TelemetrySample> s{at_s(0), at_s(1000), at_s(1001), at_s(5000)};
  const auto seg = segment_trips(s, 300);
  EXPECT_EQ(seg.trips.size(), 1u);
  EXPECT_EQ(seg.dropped_singletons, 2u);
}

TEST(Segment, RejectsNonPositiveGap) { EXPECT_THROW(segment_trips({}, 0.0), Error); }

TEST(Segment, RandomPatternsMatchBruteForce) {
  Rng rng(1234);
  for (int pattern = 0; pattern < 1000; ++pattern) {
    std::vector<TelemetrySample> s;
    double t = 0.0;
    const auto n = 2 + rng.below(80);
    for (std::uint64_t i = 0; i < n; ++i) {
      t += rng.bernoulli(0.1) ? rng.uniform(250.0, 700.0) : rng.uniform(0.1, 20.0);
      s.push_back(at_s(std::round(t * 1000.0) / 1000.0));
    }
    // Oracle: runs between gaps >= 300 s, keeping runs of length >= 2.
    std::size_t expected = 0, run = 1, kept_samples = 0;
    for (std::size_t i = 1; i <= s.size(); ++i) {
      const bool boundary =
          i == s.size() || epoch_ms(s[i].timestamp) - epoch_ms(s[i - 1].timestamp) >= 300000;
      if (boundary) {
        if (run >= 2) {
          ++expected;
          kept_samples += run;
        }
        run = 1;
      } else {
        ++run;
      }
    }
    const auto seg = segment_trips(s, 300);
    ASSERT_EQ(seg.trips.size(), expected) << "pattern " << pattern;
    // Partition: concatenated trips reproduce the retained samples in order.
    std::vector<std::int64_t> concat;
    for (const auto& trip : seg.trips) {
      for (const auto& x : trip.samples) concat.push_back(epoch_ms(x.timestamp));
    }
    EXPECT_EQ(concat.size(), kept_samples);
    EXPECT_EQ(concat.size() + seg.dropped_singletons, s.size());
    EXPECT_TRUE(std::is_sorted(concat.begin(), concat.end()));
  }
}

TEST(Haversine, Identity) { EXPECT_EQ(haversine_km({0, 0}, {0, 0}), 0.0); }

TEST(Haversine, OneDegreeOfLongitudeAtEquator) {
  EXPECT_NEAR(haversine_km({0, 0}, {0, 1}), 111.195, 1e-3);
  EXPECT_NEAR(haversine_km({0, 0}, {0, 1}), 6371.0 * std::numbers::pi / 180.0, 1e-9);
}

TEST(Haversine, SymmetricAndMatchesOracle) {
  Rng rng(55);
  for (int i = 0; i < 1000; ++i) {
    const LatLon a{rng.uniform(-90, 90), rng.uniform(-180, 180)};
    const LatLon b{rng.uniform(-90, 90), rng.uniform(-180, 180)};
    EXPECT_EQ(haversine_km(a, b), haversine_km(b, a));
    EXPECT_NEAR(haversine_km(a, b), haversine_oracle(a.lat, a.lon, b.lat, b.lon), 1e-6);
  }
}

TEST(Destination, TravelsRequestedDistance) {
  Rng rng(56);
  for (int i = 0; i < 1000; ++i) {
    const LatLon a{rng.uniform(-70, 70), rng.uniform(-180, 180)};
    const double d = rng.uniform(0.001, 500.0);
    const LatLon b = destination(a, rng.uniform(0, 360), d);
    EXPECT_NEAR(haversine_km(a, b), d, 1e-6 * d);
  }
}

TEST(Kinematics, TwoFixesOneHour) {
  Trip t;
  TelemetrySample a, b;
  a.timestamp = from_epoch_ms(0);
  a.gps = fix_at(0, 0, 0);
  b.timestamp = from_epoch_ms(3600000);
  b.gps = fix_at(3600000, 0, 1);
  t.samples = {a, b};
  trip_kinematics(t);
  EXPECT_EQ(t.duration_s, 3600.0);
  ASSERT_TRUE(t.distance_km);
  EXPECT_NEAR(*t.distance_km, 111.195, 1e-3);
}

TEST(Kinematics, NoValidFixMeansNoDistance) {
  Trip t;
  for (int i = 0; i < 5; ++i) {
    TelemetrySample s;
    s.timestamp = from_epoch_ms(i * 1000);
    s.gps = fix_at(i * 1000, 0, i * 0.01, false);
    t.samples.push_back(s);
  }
  trip_kinematics(t);
  EXPECT_FALSE(t.distance_km);
}

TEST(Kinematics, ConstantObdSpeed) {
  Trip t;
  for (int i = 0; i < 10; ++i) {
    TelemetrySample s;
    s.timestamp = from_epoch_ms(i * 1000);
    s.obd_speed_kmh = 60.0;
    s.gps = fix_at(i * 1000, 0, 0);
    s.gps->speed_kmh = 10.0;
    t.samples.push_back(s);
  }
  trip_kinematics(t);
  EXPECT_EQ(*t.mean_speed_kmh, 60.0);
}

TEST(Kinematics, GpsSpeedFillsObdGaps) {
  Trip t;
  TelemetrySample a, b;
  a.timestamp = from_epoch_ms(0);
  a.obd_speed_kmh = 50.0;
  b.timestamp = from_epoch_ms(1000);
  b.gps = fix_at(1000, 0, 0);
  b.gps->speed_kmh = 30.0;
  t.samples = {a, b};
  trip_kinematics(t);
  EXPECT_EQ(*t.mean_speed_kmh, 40.0);
}

TEST(Kinematics, InvalidFixesDoNotChangeDistance) {
  Rng rng(77);
  Trip base;
  for (int i = 0; i < 50; ++i) {
    TelemetrySample s;
    s.timestamp = from_epoch_ms(i * 1000);
    s.gps = fix_at(i * 1000, 26.0 + i * 1e-4, -80.0 + i * 2e-4);
    base.samples.push_back(s);
  }
  Trip noisy = base;
  for (int k = 0; k < 20; ++k) {
    const auto pos = static_cast<std::ptrdiff_t>(rng.below(noisy.samples.size()));
    TelemetrySample s;
    s.timestamp = noisy.samples[static_cast<std::size_t>(pos)].timestamp;
    s.gps = fix_at(epoch_ms(s.timestamp), rng.uniform(-80, 80), rng.uniform(-170, 170), false);
    noisy.samples.insert(noisy.samples.begin() + pos, s);
  }
  trip_kinematics(base);
  trip_kinematics(noisy);
  EXPECT_EQ(*base.distance_km, *noisy.distance_km);
}

TEST(Kinematics, StraightConstantSpeedTrip) {
  const double speed = 54.0;
  const int seconds = 1800;
  Trip t;
  const LatLon origin{26.4, -80.1};
  for (int k = 0; k <= seconds; ++k) {
    TelemetrySample s;
    s.timestamp = from_epoch_ms(k * 1000);
    const auto p = destination(origin, 37.0, speed * k / 3600.0);
    s.gps = fix_at(k * 1000, p.lat, p.lon);
    t.samples.push_back(s);
  }
  trip_kinematics(t);
  const double expected = speed * seconds / 3600.0;
  EXPECT_LE(std::abs(*t.distance_km - expected) / expected, 1e-3);
}
