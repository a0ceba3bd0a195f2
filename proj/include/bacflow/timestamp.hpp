#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bacflow {

using Timestamp = std::chrono::sys_time<std::chrono::nanoseconds>;
using Day = std::chrono::year_month_day;

inline double to_seconds(Timestamp ts) {
  return std::chrono::duration<double>(ts.time_since_epoch()).count();
}

inline double to_seconds(std::chrono::nanoseconds d) {
  return std::chrono::duration<double>(d).count();
}

inline Timestamp from_seconds(double seconds) {
  return Timestamp{std::chrono::nanoseconds{static_cast<std::int64_t>(std::llround(seconds * 1e9))}};
}

// Building-local time as a fixed offset from UTC.
class UtcOffset {
 public:
  UtcOffset() = default;
  explicit UtcOffset(std::chrono::minutes offset) : offset_(offset) {}

  // Accepts "UTC", "Z", "+HH:MM", "-HH:MM", "+HHMM".
  static UtcOffset parse(std::string_view text) {
    if (text == "UTC" || text == "Z" || text == "utc") return UtcOffset{};
    auto bad = [&] { return std::invalid_argument("bad UTC offset '" + std::string(text) + "'"); };
    if (text.size() < 5 || (text[0] != '+' && text[0] != '-')) throw bad();
    auto digit = [&](char c) {
      if (c < '0' || c > '9') throw bad();
      return c - '0';
    };
    int hh = digit(text[1]) * 10 + digit(text[2]);
    std::size_t mpos = text[3] == ':' ? 4 : 3;
    if (text.size() != mpos + 2) throw bad();
    int mm = digit(text[mpos]) * 10 + digit(text[mpos + 1]);
    if (hh > 23 || mm > 59) throw bad();
    int total = hh * 60 + mm;
    return UtcOffset{std::chrono::minutes{text[0] == '-' ? -total : total}};
  }

  std::chrono::minutes offset() const { return offset_; }

  std::string to_string() const {
    if (offset_.count() == 0) return "UTC";
    int m = static_cast<int>(offset_.count());
    char buf[16];
    std::snprintf(buf, sizeof buf, "%c%02d:%02d", m < 0 ? '-' : '+', std::abs(m) / 60, std::abs(m) % 60);
    return buf;
  }

  Timestamp day_start(Day day) const {
    return Timestamp{std::chrono::sys_days{day}.time_since_epoch()} - offset_;
  }

  Day day_of(Timestamp ts) const {
    auto local = ts + offset_;
    return Day{std::chrono::floor<std::chrono::days>(local)};
  }

  // Nanoseconds since local midnight.
  std::chrono::nanoseconds time_of_day(Timestamp ts) const {
    auto local = ts + offset_;
    return local - std::chrono::floor<std::chrono::days>(local);
  }

  friend bool operator==(const UtcOffset&, const UtcOffset&) = default;

 private:
  std::chrono::minutes offset_{0};
};

inline std::string format_day(Day day) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(day.year()),
                static_cast<unsigned>(day.month()), static_cast<unsigned>(day.day()));
  return buf;
}

inline std::optional<Day> parse_day(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int parts[3] = {0, 0, 0};
  std::size_t starts[3] = {0, 5, 8}, lens[3] = {4, 2, 2};
  for (int i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < lens[i]; ++k) {
      char c = text[starts[i] + k];
      if (c < '0' || c > '9') return std::nullopt;
      parts[i] = parts[i] * 10 + (c - '0');
    }
  }
  Day d{std::chrono::year{parts[0]}, std::chrono::month{static_cast<unsigned>(parts[1])},
        std::chrono::day{static_cast<unsigned>(parts[2])}};
  if (!d.ok()) return std::nullopt;
  return d;
}

// UTC, "YYYY-MM-DDTHH:MM:SS.fffffffffZ". Trailing zero groups are kept so the
// rendering is fixed-width and sorts lexically.
inline std::string format_iso8601(Timestamp ts) {
  auto day = std::chrono::floor<std::chrono::days>(ts);
  Day ymd{day};
  auto rest = ts - day;
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(rest);
  auto nanos = (rest - secs).count();
  long s = static_cast<long>(secs.count());
  char buf[48];
  std::snprintf(buf, sizeof buf, "%sT%02ld:%02ld:%02ld.%09lldZ", format_day(ymd).c_str(), s / 3600,
                (s / 60) % 60, s % 60, static_cast<long long>(nanos));
  return buf;
}

// ISO-8601 date-time with optional fractional seconds (up to 9 digits) and an
// optional "Z" or "+HH:MM" suffix. Values without a suffix are read in
// `local` time.
inline std::optional<Timestamp> parse_iso8601(std::string_view text, UtcOffset local = {}) {
  if (text.size() < 19) return std::nullopt;
  auto day = parse_day(text.substr(0, 10));
  if (!day || (text[10] != 'T' && text[10] != ' ')) return std::nullopt;
  auto two = [&](std::size_t at) -> int {
    char a = text[at], b = text[at + 1];
    if (a < '0' || a > '9' || b < '0' || b > '9') return -1;
    return (a - '0') * 10 + (b - '0');
  };
  if (text[13] != ':' || text[16] != ':') return std::nullopt;
  int hh = two(11), mm = two(14), ss = two(17);
  if (hh < 0 || mm < 0 || ss < 0 || hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  std::size_t pos = 19;
  std::int64_t frac_ns = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    std::int64_t scale = 100000000;
    std::size_t digits = 0;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      if (digits < 9) frac_ns += (text[pos] - '0') * scale;
      scale /= 10;
      ++digits;
      ++pos;
    }
    if (digits == 0) return std::nullopt;
  }
  UtcOffset offset = local;
  if (pos < text.size()) {
    try {
      offset = UtcOffset::parse(text.substr(pos));
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  }
  auto base = std::chrono::sys_days{*day} + std::chrono::hours{hh} + std::chrono::minutes{mm} +
              std::chrono::seconds{ss};
  return Timestamp{base.time_since_epoch()} + std::chrono::nanoseconds{frac_ns} - offset.offset();
}

}  // namespace bacflow
