#pragma once

// Line decoders for the three TMU logger streams:
//   *.nmea     one NMEA-0183 sentence per line (RMC and GGA are decoded)
//   *.obd      "<ISO-8601 UTC> 41 <PID> <A> [B]" mode-01 responses
//   *.imu.csv  "timestamp_ms,ax,ay,az,gx,gy,gz"
// Every decoder is a pure function of its input line.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "drivesense/error.hpp"
#include "drivesense/text.hpp"
#include "drivesense/time.hpp"

namespace drivesense {

inline constexpr double kKnotsToKmh = 1.852;
inline constexpr std::uint8_t kPidRpm = 0x0C;
inline constexpr std::uint8_t kPidSpeed = 0x0D;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

enum class GpsSource { rmc, gga };

struct GpsFix {
  Timestamp timestamp{};
  double latitude = 0.0;
  double longitude = 0.0;
  double speed_kmh = 0.0;  // 0 for GGA, which carries no speed
  bool valid = false;
  GpsSource source = GpsSource::rmc;
};

struct ObdReading {
  Timestamp timestamp{};
  std::uint8_t pid = 0;
  std::optional<double> rpm;
  std::optional<double> speed_kmh;
};

struct ImuRecord {
  Timestamp timestamp{};
  Vec3 accel;  // m/s^2; x longitudinal, y lateral, z vertical
  Vec3 gyro;   // deg/s
};

struct VoltageRecord {
  Timestamp timestamp{};
  double volts = 0.0;
};

enum class ParseErrc { checksum, unsupported_sentence, unsupported_pid, field, frame };

struct ParseError {
  ParseErrc kind;
  int field = -1;  // 1-based field/column index, -1 when the whole record is at fault
  std::string message;
};

template <class T>
class Parsed {
 public:
  Parsed(T value) : v_(std::move(value)) {}
  Parsed(ParseError error) : v_(std::move(error)) {}

  bool ok() const { return v_.index() == 0; }
  explicit operator bool() const { return ok(); }

  const T& value() const { return std::get<0>(v_); }
  const T& operator*() const { return value(); }
  const T* operator->() const { return &value(); }
  const ParseError& error() const { return std::get<1>(v_); }

 private:
  std::variant<T, ParseError> v_;
};

namespace detail {

inline ParseError field_error(int field, std::string msg) { return {ParseErrc::field, field, std::move(msg)}; }

inline int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

inline std::optional<std::uint8_t> parse_hex_byte(std::string_view s) {
  if (s.size() != 2) return std::nullopt;
  const int hi = hex_digit(s[0]);
  const int lo = hex_digit(s[1]);
  if (hi < 0 || lo < 0) return std::nullopt;
  return static_cast<std::uint8_t>(hi * 16 + lo);
}

inline void append_hex_byte(std::string& out, std::uint8_t b) {
  constexpr char digits[] = "0123456789ABCDEF";
  out += digits[b >> 4];
  out += digits[b & 0x0F];
}

inline bool all_digits(std::string_view s) {
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

struct ClockTime {
  int hour = 0, minute = 0, second = 0, millis = 0;
};

inline std::optional<ClockTime> parse_hhmmss(std::string_view s) {
  ClockTime t;
  if (s.size() < 6 || !all_digits(s.substr(0, 6))) return std::nullopt;
  t.hour = (s[0] - '0') * 10 + (s[1] - '0');
  t.minute = (s[2] - '0') * 10 + (s[3] - '0');
  t.second = (s[4] - '0') * 10 + (s[5] - '0');
  if (s.size() > 6) {
    if (s[6] != '.') return std::nullopt;
    const auto frac = s.substr(7);
    if (frac.empty() || !all_digits(frac)) return std::nullopt;
    int ms = 0;
    for (std::size_t i = 0; i < 3; ++i) ms = ms * 10 + (i < frac.size() ? frac[i] - '0' : 0);
    t.millis = ms;
  }
  if (t.hour > 23 || t.minute > 59 || t.second > 59) return std::nullopt;
  return t;
}

// ddmm.mmmm (lat) / dddmm.mmmm (lon) plus hemisphere letter.
inline std::optional<double> parse_nmea_angle(std::string_view value, std::string_view hemi, bool is_lat) {
  const auto dot = value.find('.');
  const std::size_t int_len = dot == std::string_view::npos ? value.size() : dot;
  if (int_len < 3) return std::nullopt;
  const auto deg = text::parse_int(value.substr(0, int_len - 2));
  const auto minutes = text::parse_double(value.substr(int_len - 2));
  if (!deg || !minutes || *deg < 0 || *minutes < 0.0 || *minutes >= 60.0) return std::nullopt;
  double angle = static_cast<double>(*deg) + *minutes / 60.0;
  if (hemi == (is_lat ? "S" : "W")) {
    angle = -angle;
  } else if (hemi != (is_lat ? "N" : "E")) {
    return std::nullopt;
  }
  if (std::abs(angle) > (is_lat ? 90.0 : 180.0)) return std::nullopt;
  return angle;
}

inline void append_nmea_angle(std::string& out, double angle, bool is_lat) {
  double mag = std::abs(angle);
  auto deg = static_cast<int>(std::floor(mag));
  double minutes = (mag - deg) * 60.0;
  if (minutes >= 60.0) {
    ++deg;
    minutes -= 60.0;
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, is_lat ? "%02d" : "%03d", deg);
  out += buf;
  if (minutes < 10.0) out += '0';
  const std::size_t before = out.size();
  text::append_number(out, minutes);
  if (out.find('.', before) == std::string::npos) out += ".0";
  out += ',';
  out += is_lat ? (angle < 0 ? 'S' : 'N') : (angle < 0 ? 'W' : 'E');
}

}  // namespace detail

// XOR of every byte strictly between '$' and '*' (or end of line).
inline std::uint8_t nmea_checksum(std::string_view body) {
  std::uint8_t sum = 0;
  for (char c : body) sum ^= static_cast<std::uint8_t>(c);
  return sum;
}

// Decodes one RMC or GGA sentence. GGA carries no date, so `date_hint`
// supplies the UTC calendar day (the last RMC date in a stream).
inline Parsed<GpsFix> parse_nmea(std::string_view line,
                                 std::optional<std::chrono::year_month_day> date_hint = std::nullopt) {
  line = text::trim(line);
  if (line.empty() || line.front() != '$') return ParseError{ParseErrc::frame, -1, "sentence must start with '$'"};
  std::string_view body = line.substr(1);
  if (const auto star = body.find('*'); star != std::string_view::npos) {
    const auto given = detail::parse_hex_byte(body.substr(star + 1));
    if (!given) return ParseError{ParseErrc::checksum, -1, "malformed checksum"};
    body = body.substr(0, star);
    if (*given != nmea_checksum(body)) return ParseError{ParseErrc::checksum, -1, "checksum mismatch"};
  }
  const auto f = text::split(body, ',');
  const std::string_view id = f[0];
  if (id.size() != 5) return ParseError{ParseErrc::unsupported_sentence, 0, std::string(id)};
  const std::string_view type = id.substr(2);

  GpsFix fix;
  if (type == "RMC") {
    if (f.size() < 10) return detail::field_error(static_cast<int>(f.size()), "RMC needs at least 10 fields");
    const auto clock = detail::parse_hhmmss(f[1]);
    if (!clock) return detail::field_error(1, "bad UTC time");
    if (f[2] == "A") {
      fix.valid = true;
    } else if (f[2] != "V") {
      return detail::field_error(2, "status must be A or V");
    }
    if (f[3].empty() && f[5].empty() && !fix.valid) {
      fix.latitude = fix.longitude = 0.0;
    } else {
      const auto lat = detail::parse_nmea_angle(f[3], f[4], true);
      if (!lat) return detail::field_error(3, "bad latitude");
      const auto lon = detail::parse_nmea_angle(f[5], f[6], false);
      if (!lon) return detail::field_error(5, "bad longitude");
      fix.latitude = *lat;
      fix.longitude = *lon;
    }
    if (!f[7].empty()) {
      const auto knots = text::parse_finite(f[7]);
      if (!knots || *knots < 0.0) return detail::field_error(7, "bad speed");
      fix.speed_kmh = *knots * kKnotsToKmh;
    }
    int dd, mm, yy;
    if (f[9].size() != 6 || !detail::read_fixed_int(f[9], 0, 2, dd) || !detail::read_fixed_int(f[9], 2, 2, mm) ||
        !detail::read_fixed_int(f[9], 4, 2, yy)) {
      return detail::field_error(9, "bad date");
    }
    const int year = yy < 80 ? 2000 + yy : 1900 + yy;
    const auto ts = make_timestamp(year, mm, dd, clock->hour, clock->minute, clock->second, clock->millis);
    if (!ts) return detail::field_error(9, "bad date");
    fix.timestamp = *ts;
    fix.source = GpsSource::rmc;
    return fix;
  }
  if (type == "GGA") {
    if (f.size() < 7) return detail::field_error(static_cast<int>(f.size()), "GGA needs at least 7 fields");
    const auto clock = detail::parse_hhmmss(f[1]);
    if (!clock) return detail::field_error(1, "bad UTC time");
    const auto quality = text::parse_int(f[6]);
    if (!quality || *quality < 0) return detail::field_error(6, "bad fix quality");
    fix.valid = *quality > 0;
    if (!(f[2].empty() && f[4].empty() && !fix.valid)) {
      const auto lat = detail::parse_nmea_angle(f[2], f[3], true);
      if (!lat) return detail::field_error(2, "bad latitude");
      const auto lon = detail::parse_nmea_angle(f[4], f[5], false);
      if (!lon) return detail::field_error(4, "bad longitude");
      fix.latitude = *lat;
      fix.longitude = *lon;
    }
    if (!date_hint) return detail::field_error(1, "GGA time without a known date");
    const auto ts = make_timestamp(static_cast<int>(date_hint->year()), static_cast<int>(static_cast<unsigned>(date_hint->month())),
                                   static_cast<int>(static_cast<unsigned>(date_hint->day())), clock->hour,
                                   clock->minute, clock->second, clock->millis);
    if (!ts) return detail::field_error(1, "bad date hint");
    fix.timestamp = *ts;
    fix.source = GpsSource::gga;
    return fix;
  }
  return ParseError{ParseErrc::unsupported_sentence, 0, std::string(id)};
}

inline Parsed<ObdReading> parse_obd(std::string_view frame) {
  frame = text::trim(frame);
  const auto tokens = text::split(frame, ' ');
  if (tokens.size() < 3) return ParseError{ParseErrc::frame, -1, "expected timestamp and at least two bytes"};
  const auto ts = parse_iso8601(tokens[0]);
  if (!ts) return ParseError{ParseErrc::frame, 0, "bad timestamp"};
  std::array<std::uint8_t, 8> bytes{};
  const std::size_t n = tokens.size() - 1;
  if (n > bytes.size()) return ParseError{ParseErrc::frame, -1, "frame too long"};
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = detail::parse_hex_byte(tokens[i + 1]);
    if (!b) return ParseError{ParseErrc::frame, static_cast<int>(i + 1), "bad hex byte"};
    bytes[i] = *b;
  }
  if (bytes[0] != 0x41) return ParseError{ParseErrc::frame, 1, "not a mode-01 response"};
  ObdReading r;
  r.timestamp = *ts;
  r.pid = bytes[1];
  if (r.pid == kPidRpm) {
    if (n != 4) return ParseError{ParseErrc::frame, -1, "PID 0C needs two data bytes"};
    r.rpm = (256.0 * bytes[2] + bytes[3]) / 4.0;
    return r;
  }
  if (r.pid == kPidSpeed) {
    if (n != 3) return ParseError{ParseErrc::frame, -1, "PID 0D needs one data byte"};
    r.speed_kmh = static_cast<double>(bytes[2]);
    return r;
  }
  return ParseError{ParseErrc::unsupported_pid, 2, "unsupported PID"};
}

inline Parsed<ImuRecord> parse_imu_line(std::string_view line) {
  line = text::trim(line);
  const auto cols = text::split(line, ',');
  if (cols.size() != 7) {
    return detail::field_error(-1, "expected 7 columns, got " + std::to_string(cols.size()));
  }
  const auto ms = text::parse_int(cols[0]);
  if (!ms) return detail::field_error(1, "bad timestamp_ms");
  std::array<double, 6> v{};
  for (std::size_t i = 0; i < 6; ++i) {
    const auto x = text::parse_finite(cols[i + 1]);
    if (!x) return detail::field_error(static_cast<int>(i + 2), "non-numeric or non-finite value");
    v[i] = *x;
  }
  return ImuRecord{from_epoch_ms(*ms), {v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
}

// Optional fourth stream: "timestamp_ms,volts".
inline Parsed<VoltageRecord> parse_voltage_line(std::string_view line) {
  line = text::trim(line);
  const auto cols = text::split(line, ',');
  if (cols.size() != 2) return detail::field_error(-1, "expected 2 columns");
  const auto ms = text::parse_int(cols[0]);
  if (!ms) return detail::field_error(1, "bad timestamp_ms");
  const auto volts = text::parse_finite(cols[1]);
  if (!volts || *volts < 0.0) return detail::field_error(2, "bad volts");
  return VoltageRecord{from_epoch_ms(*ms), *volts};
}

// ---- serializers (the synthetic generator writes through these) ----

inline void append_rmc(std::string& out, const GpsFix& fix, std::string_view talker = "GP") {
  using namespace std::chrono;
  const auto day = floor<days>(fix.timestamp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{fix.timestamp - day};
  std::string body;
  body.reserve(96);
  body += talker;
  body += "RMC,";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d%02d%02d.%03d,", static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()),
                static_cast<int>(hms.subseconds().count()));
  body += buf;
  body += fix.valid ? "A," : "V,";
  detail::append_nmea_angle(body, fix.latitude, true);
  body += ',';
  detail::append_nmea_angle(body, fix.longitude, false);
  body += ',';
  text::append_number(body, fix.speed_kmh / kKnotsToKmh);
  std::snprintf(buf, sizeof buf, ",,%02u%02u%02d,,", static_cast<unsigned>(ymd.day()),
                static_cast<unsigned>(ymd.month()), static_cast<int>(ymd.year()) % 100);
  body += buf;
  out += '$';
  out += body;
  out += '*';
  detail::append_hex_byte(out, nmea_checksum(body));
}

inline std::string format_rmc(const GpsFix& fix, std::string_view talker = "GP") {
  std::string s;
  append_rmc(s, fix, talker);
  return s;
}

// Encodes the reading as its mode-01 response. RPM is quantised to 0.25 and
// speed to whole km/h by the wire format.
inline void append_obd(std::string& out, const ObdReading& r) {
  out += format_iso8601(r.timestamp);
  out += " 41 ";
  detail::append_hex_byte(out, r.pid);
  if (r.pid == kPidRpm) {
    const auto raw = static_cast<std::uint32_t>(std::clamp(std::lround(r.rpm.value_or(0.0) * 4.0), 0L, 65535L));
    out += ' ';
    detail::append_hex_byte(out, static_cast<std::uint8_t>(raw >> 8));
    out += ' ';
    detail::append_hex_byte(out, static_cast<std::uint8_t>(raw & 0xFF));
  } else {
    const auto raw = static_cast<std::uint8_t>(std::clamp(std::lround(r.speed_kmh.value_or(0.0)), 0L, 255L));
    out += ' ';
    detail::append_hex_byte(out, raw);
  }
}

inline std::string format_obd(const ObdReading& r) {
  std::string s;
  append_obd(s, r);
  return s;
}

inline constexpr std::string_view kImuHeader = "timestamp_ms,ax,ay,az,gx,gy,gz";

inline void append_imu_line(std::string& out, const ImuRecord& r) {
  text::append_number(out, epoch_ms(r.timestamp));
  for (double v : {r.accel.x, r.accel.y, r.accel.z, r.gyro.x, r.gyro.y, r.gyro.z}) {
    out += ',';
    text::append_number(out, v);
  }
}

inline std::string format_imu_line(const ImuRecord& r) {
  std::string s;
  append_imu_line(s, r);
  return s;
}

// ---- whole-stream readers ----

struct ParseStats {
  std::size_t lines = 0;
  std::size_t records = 0;
  std::size_t checksum_errors = 0;
  std::size_t unsupported = 0;
  std::size_t field_errors = 0;
  std::size_t frame_errors = 0;

  std::size_t errors() const { return checksum_errors + field_errors + frame_errors; }

  void count(const ParseError& e) {
    switch (e.kind) {
      case ParseErrc::checksum: ++checksum_errors; break;
      case ParseErrc::unsupported_sentence:
      case ParseErrc::unsupported_pid: ++unsupported; break;
      case ParseErrc::field: ++field_errors; break;
      case ParseErrc::frame: ++frame_errors; break;
    }
  }

  ParseStats& operator+=(const ParseStats& o) {
    lines += o.lines;
    records += o.records;
    checksum_errors += o.checksum_errors;
    unsupported += o.unsupported;
    field_errors += o.field_errors;
    frame_errors += o.frame_errors;
    return *this;
  }
};

template <class T>
struct StreamResult {
  std::vector<T> records;
  ParseStats stats;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

template <class Fn>
void for_each_line(std::string_view content, Fn&& fn) {
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    auto line = text::trim(content.substr(start, end - start));
    if (!line.empty()) fn(line);
    start = end + 1;
  }
}

// `logger_ms`, when given, holds one logger timestamp per non-empty line and
// overrides the receiver time.
inline StreamResult<GpsFix> read_nmea(std::string_view content,
                                      const std::vector<std::int64_t>* logger_ms = nullptr) {
  StreamResult<GpsFix> out;
  std::optional<std::chrono::year_month_day> last_date;
  std::size_t index = 0;
  for_each_line(content, [&](std::string_view line) {
    ++out.stats.lines;
    auto parsed = parse_nmea(line, last_date);
    const std::size_t this_index = index++;
    if (!parsed) {
      out.stats.count(parsed.error());
      return;
    }
    GpsFix fix = *parsed;
    if (fix.source == GpsSource::rmc) {
      last_date = std::chrono::year_month_day{std::chrono::floor<std::chrono::days>(fix.timestamp)};
    }
    if (logger_ms && this_index < logger_ms->size()) fix.timestamp = from_epoch_ms((*logger_ms)[this_index]);
    out.records.push_back(fix);
    ++out.stats.records;
  });
  return out;
}

inline StreamResult<ObdReading> read_obd(std::string_view content) {
  StreamResult<ObdReading> out;
  for_each_line(content, [&](std::string_view line) {
    ++out.stats.lines;
    auto parsed = parse_obd(line);
    if (!parsed) {
      out.stats.count(parsed.error());
      return;
    }
    out.records.push_back(*parsed);
    ++out.stats.records;
  });
  return out;
}

template <class T, class Parser>
StreamResult<T> read_csv_stream(std::string_view content, Parser parse) {
  StreamResult<T> out;
  bool first = true;
  for_each_line(content, [&](std::string_view line) {
    if (first) {
      first = false;
      if (!line.empty() && (line.front() < '0' || line.front() > '9') && line.front() != '-') return;  // header
    }
    ++out.stats.lines;
    auto parsed = parse(line);
    if (!parsed) {
      out.stats.count(parsed.error());
      return;
    }
    out.records.push_back(*parsed);
    ++out.stats.records;
  });
  return out;
}

inline StreamResult<ImuRecord> read_imu(std::string_view content) {
  return read_csv_stream<ImuRecord>(content, parse_imu_line);
}

inline StreamResult<VoltageRecord> read_voltage(std::string_view content) {
  return read_csv_stream<VoltageRecord>(content, parse_voltage_line);
}

}  // namespace drivesense
