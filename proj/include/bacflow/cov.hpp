#pragma once

// Change-of-Value sensor logs: per-sensor CSV files (`timestamp,value`),
// the sensor metadata sidecar, and extrapolation onto 15-minute slots.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bacflow/errors.hpp"
#include "bacflow/timestamp.hpp"

namespace bacflow {

using SensorValue = std::variant<bool, double>;

enum class ValueKind { Boolean, Float };

inline std::string_view to_string(ValueKind k) { return k == ValueKind::Boolean ? "boolean" : "float"; }

struct SensorInfo {
  std::string id;
  std::string cluster;  // sensor type: door, window, motion, temperature, ...
  ValueKind kind = ValueKind::Boolean;
  std::string file;  // CSV file name inside the CoV directory
};

namespace detail {
inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto at = s.find(sep, start);
    out.push_back(trim(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start)));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  auto t = lower(trim(s));
  if (t == "true" || t == "1" || t == "on" || t == "active") return true;
  if (t == "false" || t == "0" || t == "off" || t == "inactive") return false;
  return std::nullopt;
}
}  // namespace detail

// Sidecar mapping, one sensor per line:
//   <sensor-id> = <cluster>, <boolean|float>[, <file>]
// '#' starts a comment. The file defaults to "<sensor-id>.csv".
class SensorMeta {
 public:
  static SensorMeta parse(std::istream& in) {
    SensorMeta meta;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view v = line;
      if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
      v = detail::trim(v);
      if (v.empty()) continue;
      auto eq = v.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("sensor meta line " + std::to_string(lineno) + ": expected '='");
      SensorInfo info;
      info.id = std::string(detail::trim(v.substr(0, eq)));
      auto fields = detail::split(v.substr(eq + 1), ',');
      if (info.id.empty() || fields.size() < 2 || fields[0].empty())
        throw ConfigError("sensor meta line " + std::to_string(lineno) + ": expected cluster, kind");
      info.cluster = std::string(fields[0]);
      auto kind = detail::lower(fields[1]);
      if (kind == "boolean" || kind == "bool")
        info.kind = ValueKind::Boolean;
      else if (kind == "float" || kind == "number")
        info.kind = ValueKind::Float;
      else
        throw ConfigError("sensor meta line " + std::to_string(lineno) + ": unknown value kind '" +
                          kind + "'");
      info.file = fields.size() > 2 && !fields[2].empty() ? std::string(fields[2]) : info.id + ".csv";
      meta.add(std::move(info));
    }
    return meta;
  }

  static SensorMeta load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open sensor meta " + path.string());
    return parse(in);
  }

  void add(SensorInfo info) { sensors_[info.id] = std::move(info); }

  const SensorInfo* find(std::string_view id) const {
    auto it = sensors_.find(std::string(id));
    return it == sensors_.end() ? nullptr : &it->second;
  }

  const SensorInfo* for_file(std::string_view file_name) const {
    for (const auto& [id, info] : sensors_)
      if (info.file == file_name) return &info;
    return nullptr;
  }

  // Cluster names in sorted order, each listed once.
  std::vector<std::string> clusters() const {
    std::vector<std::string> out;
    for (const auto& [id, info] : sensors_) out.push_back(info.cluster);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  const std::map<std::string, SensorInfo>& sensors() const { return sensors_; }

 private:
  std::map<std::string, SensorInfo> sensors_;
};

struct CovEvent {
  std::string sensor_id;
  std::string sensor_type;
  Timestamp timestamp{};
  SensorValue value;

  bool operator==(const CovEvent&) const = default;
};

// Rows are parsed in file order. Timestamps without an explicit offset are
// building-local (`local`).
inline std::vector<CovEvent> read_cov_csv(std::istream& in, const SensorInfo& sensor,
                                          UtcOffset local = {}) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty CSV, expected header 'timestamp,value'");
  auto header = detail::split(line, ',');
  std::optional<std::size_t> ts_col, value_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    auto name = detail::lower(header[i]);
    if (name == "timestamp") ts_col = i;
    if (name == "value") value_col = i;
  }
  if (!ts_col || !value_col) throw SchemaError("CSV header must contain 'timestamp' and 'value'");

  std::vector<CovEvent> events;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto cells = detail::split(line, ',');
    if (cells.size() <= std::max(*ts_col, *value_col)) throw ValueError(row, line);
    auto ts = parse_iso8601(cells[*ts_col], local);
    if (!ts) throw ValueError(row, std::string(cells[*ts_col]));
    CovEvent ev{sensor.id, sensor.cluster, *ts, false};
    if (sensor.kind == ValueKind::Boolean) {
      auto b = detail::parse_bool(cells[*value_col]);
      if (!b) throw ValueError(row, std::string(cells[*value_col]));
      ev.value = *b;
    } else {
      auto d = detail::parse_double(cells[*value_col]);
      if (!d) throw ValueError(row, std::string(cells[*value_col]));
      ev.value = *d;
    }
    events.push_back(std::move(ev));
  }
  return events;
}

inline std::vector<CovEvent> read_cov_csv(const std::filesystem::path& path, const SensorMeta& meta,
                                          UtcOffset local = {}) {
  const SensorInfo* sensor = meta.for_file(path.filename().string());
  if (!sensor) sensor = meta.find(path.stem().string());
  if (!sensor) throw ConfigError("no sensor meta entry for " + path.filename().string());
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_cov_csv(in, *sensor, local);
}

inline constexpr int kSlotsPerDay = 96;
inline constexpr auto kSlotLength = std::chrono::minutes{15};

struct IntervalPoint {
  int slot = 0;  // 0..95
  Timestamp timestamp{};
  std::optional<SensorValue> value;  // nullopt: no value known yet
  bool repeated = false;             // carried forward, not a raw event

  bool operator==(const IntervalPoint&) const = default;
};

struct IntervalSeries {
  std::string sensor_id;
  Day day{};
  std::vector<IntervalPoint> points;  // ordered by slot, then timestamp
  bool no_prior_value = false;        // leading slots had no value and no seed

  // Latest value in the slot.
  std::optional<SensorValue> slot_value(int slot) const {
    std::optional<SensorValue> v;
    for (const auto& p : points)
      if (p.slot == slot) v = p.value;
    return v;
  }
};

// `events` must be sorted by timestamp; events outside `day` are ignored.
// `seed` is the last known value before the day starts.
inline IntervalSeries extrapolate_15min(std::span<const CovEvent> events, const std::string& sensor_id,
                                        Day day, UtcOffset tz, std::optional<SensorValue> seed) {
  IntervalSeries s;
  s.sensor_id = sensor_id;
  s.day = day;
  const Timestamp start = tz.day_start(day);
  const Timestamp end = start + std::chrono::days{1};
  auto it = std::lower_bound(events.begin(), events.end(), start,
                             [](const CovEvent& e, Timestamp t) { return e.timestamp < t; });
  std::optional<SensorValue> current = seed;
  for (int slot = 0; slot < kSlotsPerDay; ++slot) {
    const Timestamp slot_start = start + slot * kSlotLength;
    const Timestamp slot_end = slot + 1 == kSlotsPerDay ? end : slot_start + kSlotLength;
    bool any = false;
    for (; it != events.end() && it->timestamp < slot_end; ++it) {
      s.points.push_back({slot, it->timestamp, it->value, false});
      current = it->value;
      any = true;
    }
    if (!any) {
      s.points.push_back({slot, slot_start, current, true});
      if (!current) s.no_prior_value = true;
    }
  }
  return s;
}

}  // namespace bacflow
