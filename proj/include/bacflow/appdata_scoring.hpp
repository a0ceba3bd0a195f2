#pragma once

// Weighted day tree for sensor events: root -> one cluster per sensor type ->
// 24 hour nodes. An hour's weight is the larger of its information content
// I(h) and the deviation N(h) of its change count from past days; a cluster
// weighs the mean of its 24 hours.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bacflow/cov.hpp"
#include "bacflow/errors.hpp"
#include "bacflow/timestamp.hpp"

namespace bacflow {

struct ScoringConfig {
  int history_days = 7;
  std::chrono::minutes window{60};  // +/- around the same time of day
  double float_sd_floor = 0.1;
  UtcOffset tz;
};

struct HistoryPoint {
  Timestamp timestamp{};
  SensorValue value;
  bool repeated = false;
};

// Past extrapolated sensor values, queried by time-of-day window. Queries for
// a day only ever see points strictly before that day's local midnight.
class EventHistory {
 public:
  explicit EventHistory(ScoringConfig cfg = {}) : cfg_(cfg) {}

  const ScoringConfig& config() const { return cfg_; }

  void add_series(const SensorInfo& sensor, const IntervalSeries& series) {
    bool any = false;
    auto& pts = points_[sensor.id];
    for (const auto& p : series.points) {
      if (!p.value) continue;
      pts.push_back({p.timestamp, *p.value, p.repeated});
      any = true;
    }
    std::stable_sort(pts.begin(), pts.end(),
                     [](const HistoryPoint& a, const HistoryPoint& b) { return a.timestamp < b.timestamp; });
    if (any) mark_day(sensor, series.day);
  }

  // Low-level insertion; the point's local day is marked as covered.
  void add_point(const SensorInfo& sensor, HistoryPoint point) {
    auto& pts = points_[sensor.id];
    auto at = std::upper_bound(pts.begin(), pts.end(), point.timestamp,
                               [](Timestamp t, const HistoryPoint& p) { return t < p.timestamp; });
    pts.insert(at, point);
    mark_day(sensor, cfg_.tz.day_of(point.timestamp));
  }

  void mark_day(const SensorInfo& sensor, Day day) {
    days_[sensor.id].insert(day_number(day));
    clusters_[sensor.cluster].insert(sensor.id);
    kinds_[sensor.id] = sensor.kind;
  }

  // Values of `sensor` within +/- window of `time_of_day` on each of the
  // history_days days preceding `day`.
  std::vector<SensorValue> samples(const std::string& sensor, Day day,
                                   std::chrono::nanoseconds time_of_day) const {
    std::vector<SensorValue> out;
    auto it = points_.find(sensor);
    if (it == points_.end()) return out;
    const auto& pts = it->second;
    const Timestamp cutoff = cfg_.tz.day_start(day);
    for (int d = 1; d <= cfg_.history_days; ++d) {
      Timestamp center = cfg_.tz.day_start(shift(day, -d)) + time_of_day;
      Timestamp lo = center - cfg_.window, hi = center + cfg_.window;
      for (auto p = lower(pts, lo); p != pts.end() && p->timestamp <= hi && p->timestamp < cutoff; ++p)
        out.push_back(p->value);
    }
    return out;
  }

  // Change counts of `cluster` in `hour` for each prior day that has data
  // for at least one of its sensors.
  std::vector<double> historical_counts(const std::string& cluster, Day day, int hour) const {
    std::vector<double> out;
    auto cit = clusters_.find(cluster);
    if (cit == clusters_.end()) return out;
    for (int d = 1; d <= cfg_.history_days; ++d) {
      Day past = shift(day, -d);
      bool covered = false;
      std::size_t count = 0;
      Timestamp start = cfg_.tz.day_start(past) + std::chrono::hours{hour};
      for (const auto& sensor : cit->second) {
        auto dit = days_.find(sensor);
        if (dit == days_.end() || !dit->second.count(day_number(past))) continue;
        covered = true;
        count += changes(sensor, start, start + std::chrono::hours{1});
      }
      if (covered) out.push_back(static_cast<double>(count));
    }
    return out;
  }

  std::optional<SensorValue> last_value_before(const std::string& sensor, Timestamp t) const {
    auto it = points_.find(sensor);
    if (it == points_.end()) return std::nullopt;
    auto p = lower(it->second, t);
    if (p == it->second.begin()) return std::nullopt;
    return std::prev(p)->value;
  }

  // Number of value changes in [start, end): transitions for boolean
  // sensors, reported (non-repeated) events for float sensors.
  std::size_t changes(const std::string& sensor, Timestamp start, Timestamp end) const {
    auto it = points_.find(sensor);
    if (it == points_.end()) return 0;
    auto kind = kinds_.at(sensor);
    const auto& pts = it->second;
    auto p = lower(pts, start);
    std::optional<SensorValue> prev;
    if (p != pts.begin()) prev = std::prev(p)->value;
    std::vector<HistoryPoint> window;
    for (; p != pts.end() && p->timestamp < end; ++p) window.push_back(*p);
    return count_changes(window, kind, prev);
  }

  static std::size_t count_changes(std::span<const HistoryPoint> points, ValueKind kind,
                                   std::optional<SensorValue> prev) {
    std::size_t n = 0;
    for (const auto& p : points) {
      if (kind == ValueKind::Float) {
        if (!p.repeated) ++n;
      } else if (prev && *prev != p.value) {
        ++n;
      }
      prev = p.value;
    }
    return n;
  }

  static Day shift(Day day, int days) {
    return Day{std::chrono::sys_days{day} + std::chrono::days{days}};
  }

 private:
  static long day_number(Day d) { return std::chrono::sys_days{d}.time_since_epoch().count(); }

  static std::vector<HistoryPoint>::const_iterator lower(const std::vector<HistoryPoint>& pts, Timestamp t) {
    return std::lower_bound(pts.begin(), pts.end(), t,
                            [](const HistoryPoint& p, Timestamp v) { return p.timestamp < v; });
  }

  ScoringConfig cfg_;
  std::map<std::string, std::vector<HistoryPoint>> points_;
  std::map<std::string, std::set<long>> days_;
  std::map<std::string, std::set<std::string>> clusters_;
  std::map<std::string, ValueKind> kinds_;
};

namespace detail {
inline double mean(std::span<const double> xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

// Sample (n-1) standard deviation, 0 below two values.
inline double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean(xs), ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}
}  // namespace detail

struct Probability {
  double p = 0.5;
  std::size_t samples = 0;
  bool low_confidence = false;
};

// Laplace-smoothed frequency of `v` among past values at about the same time
// of day: (k + 1) / (n + 2).
inline Probability p_boolean(const EventHistory& history, const std::string& sensor, Day day,
                             std::chrono::nanoseconds time_of_day, bool v) {
  auto samples = history.samples(sensor, day, time_of_day);
  std::size_t n = 0, k = 0;
  for (const auto& s : samples) {
    if (auto b = std::get_if<bool>(&s)) {
      ++n;
      if (*b == v) ++k;
    }
  }
  if (n == 0) return {0.5, 0, true};
  return {(static_cast<double>(k) + 1.0) / (static_cast<double>(n) + 2.0), n, false};
}

// Surprisal in bits.
inline double info_content(double p) {
  if (!(p > 0.0) || p > 1.0) throw DomainError("information content needs p in (0, 1]");
  return p == 1.0 ? 0.0 : -std::log2(p);
}

struct Surprisal {
  double value = 0.0;  // z-units
  bool low_confidence = false;
};

inline Surprisal float_surprisal(const EventHistory& history, const std::string& sensor, Day day,
                                 std::chrono::nanoseconds time_of_day, double v) {
  std::vector<double> xs;
  for (const auto& s : history.samples(sensor, day, time_of_day))
    if (auto d = std::get_if<double>(&s)) xs.push_back(*d);
  if (xs.size() < 2) return {0.0, true};
  double sd = std::max(detail::sample_sd(xs), history.config().float_sd_floor);
  return {std::abs(v - detail::mean(xs)) / sd, false};
}

enum class InfoUnit { None, Bits, ZScore };

inline std::string_view to_string(InfoUnit u) {
  switch (u) {
    case InfoUnit::None: return "none";
    case InfoUnit::Bits: return "bits";
    case InfoUnit::ZScore: return "z";
  }
  return "?";
}

struct HourEvent {
  Timestamp timestamp{};
  std::string sensor_id;
  SensorValue value;
  bool repeated = false;
};

struct ScoredEvent {
  HourEvent event;
  double info = 0.0;  // I(e); 0 when the event had no history
  InfoUnit unit = InfoUnit::Bits;
  bool low_confidence = false;
};

struct HourNode {
  int hour = 0;
  double info = 0.0;        // I(h)
  double change_dev = 0.0;  // N(h)
  double weight = 0.0;      // W(h) = max(I(h), N(h))
  InfoUnit info_unit = InfoUnit::None;
  std::size_t changes = 0;
  bool low_confidence = false;
  std::vector<HourEvent> events;
};

// I(h) is the largest I(e) of the hour; N(h) = |changes - mean| / max(sd, 1)
// over the historical counts for the same hour.
inline HourNode hour_weight(int hour, std::span<const ScoredEvent> events,
                            std::span<const double> historical_counts, std::size_t changes) {
  HourNode h;
  h.hour = hour;
  h.changes = changes;
  for (const auto& e : events) {
    h.events.push_back(e.event);
    h.low_confidence = h.low_confidence || e.low_confidence;
    if (e.low_confidence) continue;
    if (h.info_unit == InfoUnit::None || e.info > h.info) {
      h.info = e.info;
      h.info_unit = e.unit;
    }
  }
  if (historical_counts.empty()) {
    h.low_confidence = true;
  } else {
    double sd = std::max(detail::sample_sd(historical_counts), 1.0);
    h.change_dev = std::abs(static_cast<double>(changes) - detail::mean(historical_counts)) / sd;
  }
  h.weight = std::max(h.info, h.change_dev);
  std::stable_sort(h.events.begin(), h.events.end(),
                   [](const HourEvent& a, const HourEvent& b) { return a.timestamp < b.timestamp; });
  return h;
}

inline ScoredEvent score_event(const EventHistory& history, Day day, const HourEvent& ev) {
  auto tod = history.config().tz.time_of_day(ev.timestamp);
  ScoredEvent s{ev};
  if (auto b = std::get_if<bool>(&ev.value)) {
    auto p = p_boolean(history, ev.sensor_id, day, tod, *b);
    s.unit = InfoUnit::Bits;
    s.low_confidence = p.low_confidence;
    s.info = p.low_confidence ? 0.0 : info_content(p.p);
  } else {
    auto z = float_surprisal(history, ev.sensor_id, day, tod, std::get<double>(ev.value));
    s.unit = InfoUnit::ZScore;
    s.low_confidence = z.low_confidence;
    s.info = z.value;
  }
  return s;
}

struct ClusterNode {
  std::string sensor_type;
  std::array<HourNode, 24> hours{};
  double weight = 0.0;  // mean of the 24 hour weights
};

struct WeightedDayTree {
  Day day{};
  std::vector<ClusterNode> clusters;
  double display_max = 0.0;  // largest W(h) of the day

  const ClusterNode* cluster(std::string_view type) const {
    for (const auto& c : clusters)
      if (c.sensor_type == type) return &c;
    return nullptr;
  }
};

// `day_series` holds the day's extrapolated series, one per sensor. Every
// cluster named in `meta` is present even when it has no events.
inline WeightedDayTree build_weighted_tree(Day day, std::span<const IntervalSeries> day_series,
                                           const EventHistory& history, const SensorMeta& meta) {
  const auto& tz = history.config().tz;
  const Timestamp day_start = tz.day_start(day);
  WeightedDayTree tree;
  tree.day = day;

  std::map<std::string, std::array<std::vector<ScoredEvent>, 24>> events;
  std::map<std::string, std::array<std::size_t, 24>> changes;
  for (const auto& c : meta.clusters()) {
    events[c];
    changes[c].fill(0);
  }

  for (const auto& series : day_series) {
    const SensorInfo* info = meta.find(series.sensor_id);
    if (!info) throw ConfigError("series for unknown sensor '" + series.sensor_id + "'");
    std::array<std::vector<HistoryPoint>, 24> by_hour;
    for (const auto& p : series.points) {
      if (!p.value) continue;
      auto hour = std::chrono::floor<std::chrono::hours>(p.timestamp - day_start).count();
      if (hour < 0 || hour > 23) continue;
      HourEvent ev{p.timestamp, series.sensor_id, *p.value, p.repeated};
      events[info->cluster][hour].push_back(score_event(history, day, ev));
      by_hour[hour].push_back({p.timestamp, *p.value, p.repeated});
    }
    std::optional<SensorValue> prev = history.last_value_before(series.sensor_id, day_start);
    for (int h = 0; h < 24; ++h) {
      changes[info->cluster][h] += EventHistory::count_changes(by_hour[h], info->kind, prev);
      if (!by_hour[h].empty()) prev = by_hour[h].back().value;
    }
  }

  for (auto& [cluster, hours] : events) {
    ClusterNode node;
    node.sensor_type = cluster;
    double sum = 0;
    for (int h = 0; h < 24; ++h) {
      auto counts = history.historical_counts(cluster, day, h);
      node.hours[h] = hour_weight(h, hours[h], counts, changes[cluster][h]);
      sum += node.hours[h].weight;
      tree.display_max = std::max(tree.display_max, node.hours[h].weight);
    }
    node.weight = sum / 24.0;
    tree.clusters.push_back(std::move(node));
  }
  return tree;
}

inline nlohmann::json sensor_value_json(const SensorValue& v) {
  if (auto b = std::get_if<bool>(&v)) return *b;
  return std::get<double>(v);
}

inline nlohmann::json to_json(const WeightedDayTree& tree) {
  using nlohmann::json;
  json clusters = json::array();
  for (const auto& c : tree.clusters) {
    json hours = json::array();
    for (const auto& h : c.hours) {
      json evs = json::array();
      for (const auto& e : h.events)
        evs.push_back({{"timestamp", format_iso8601(e.timestamp)},
                       {"sensor", e.sensor_id},
                       {"value", sensor_value_json(e.value)},
                       {"repeated", e.repeated}});
      hours.push_back({{"hour", h.hour},
                       {"I", h.info},
                       {"N", h.change_dev},
                       {"W", h.weight},
                       {"info_unit", std::string(to_string(h.info_unit))},
                       {"changes", h.changes},
                       {"low_confidence", h.low_confidence},
                       {"events", std::move(evs)}});
    }
    clusters.push_back({{"type", c.sensor_type}, {"weight", c.weight}, {"hours", std::move(hours)}});
  }
  return {{"day", format_day(tree.day)}, {"display_max", tree.display_max}, {"clusters", std::move(clusters)}};
}

}  // namespace bacflow
