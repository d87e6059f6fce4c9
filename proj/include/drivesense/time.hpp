#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace drivesense {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

inline Timestamp from_epoch_ms(std::int64_t ms) { return Timestamp{std::chrono::milliseconds{ms}}; }

inline std::int64_t epoch_ms(Timestamp t) { return t.time_since_epoch().count(); }

inline double seconds_between(Timestamp a, Timestamp b) {
  return static_cast<double>((b - a).count()) / 1000.0;
}

// YYYY-MM-DDTHH:MM:SS.mmmZ
inline std::string format_iso8601(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()), static_cast<int>(hms.subseconds().count()));
  return buf;
}

namespace detail {

inline bool read_fixed_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
  return ec == std::errc{} && ptr == s.data() + pos + len;
}

}  // namespace detail

inline std::optional<Timestamp> make_timestamp(int year, int month, int day, int hour, int minute, int second,
                                               int millis) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour < 0 || hour > 23 || minute < 0 || minute > 59 || second < 0 || second > 60 ||
      millis < 0 || millis > 999) {
    return std::nullopt;
  }
  return Timestamp{sys_days{ymd}} + hours{hour} + minutes{minute} + std::chrono::seconds{second} +
         milliseconds{millis};
}

// Accepts YYYY-MM-DDTHH:MM:SS[.fraction][Z]; fractions beyond milliseconds are truncated.
inline std::optional<Timestamp> parse_iso8601(std::string_view s) {
  int y, mo, d, h, mi, sec;
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' ||
      s[16] != ':') {
    return std::nullopt;
  }
  if (!detail::read_fixed_int(s, 0, 4, y) || !detail::read_fixed_int(s, 5, 2, mo) ||
      !detail::read_fixed_int(s, 8, 2, d) || !detail::read_fixed_int(s, 11, 2, h) ||
      !detail::read_fixed_int(s, 14, 2, mi) || !detail::read_fixed_int(s, 17, 2, sec)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  int millis = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (digits < 3) millis = millis * 10 + (s[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) return std::nullopt;
    for (int k = digits; k < 3; ++k) millis *= 10;
  }
  if (pos < s.size() && s[pos] == 'Z') ++pos;
  if (pos != s.size()) return std::nullopt;
  return make_timestamp(y, mo, d, h, mi, sec, millis);
}

// Wall-clock view of a UTC instant under a fixed offset.
struct LocalClock {
  std::chrono::minutes utc_offset{-5 * 60};

  std::chrono::sys_time<std::chrono::milliseconds> shift(Timestamp t) const { return t + utc_offset; }

  int minute_of_day(Timestamp t) const {
    using namespace std::chrono;
    const auto local = shift(t);
    return static_cast<int>(floor<minutes>(local - floor<days>(local)).count());
  }

  std::chrono::year_month_day date(Timestamp t) const {
    return std::chrono::year_month_day{std::chrono::floor<std::chrono::days>(shift(t))};
  }

  // Calendar quarter label such as "2024Q1".
  std::string quarter(Timestamp t) const {
    const auto ymd = date(t);
    const unsigned q = (static_cast<unsigned>(ymd.month()) - 1) / 3 + 1;
    return std::to_string(static_cast<int>(ymd.year())) + "Q" + std::to_string(q);
  }

  // UTC instant of a local wall-clock time.
  Timestamp to_utc(std::chrono::sys_days local_day, std::chrono::milliseconds since_midnight) const {
    return Timestamp{local_day} + since_midnight - utc_offset;
  }
};

}  // namespace drivesense
