#pragma once

// Brute-force recomputation of day-tree weights straight from the
// definitions, sharing nothing with the scoring code beyond the extrapolated
// input series. Plus a generator of random sensor logs to feed both.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "bacflow/cov.hpp"
#include "bacflow/timestamp.hpp"

namespace testsupport {

using namespace bacflow;

struct OracleCluster {
  std::array<double, 24> info{};
  std::array<double, 24> change_dev{};
  std::array<double, 24> weight{};
  double cluster_weight = 0.0;
};

struct OracleTree {
  std::map<std::string, OracleCluster> clusters;
  std::map<std::string, std::vector<double>> event_info;  // per sensor, valued points in order
};

struct OracleParams {
  int days = 7;
  std::chrono::nanoseconds window = std::chrono::minutes{60};
  double sd_floor = 0.1;
};

namespace detail_oracle {

struct Pt {
  Timestamp ts;
  SensorValue v;
  bool repeated;
};

inline double mean(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sd(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  double m = mean(x), s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

// Changes among `pts` (in order) with `prev` the value before the first.
inline std::size_t count(const std::vector<Pt>& pts, ValueKind kind, std::optional<SensorValue> prev) {
  std::size_t n = 0;
  for (const auto& p : pts) {
    if (kind == ValueKind::Float ? !p.repeated : (prev && *prev != p.v)) ++n;
    prev = p.v;
  }
  return n;
}

}  // namespace detail_oracle

// `history[sensor]` holds the extrapolated series of prior days (any order),
// `today[sensor]` the scored day's series. UTC days.
inline OracleTree oracle_tree(const SensorMeta& meta, Day day,
                                                        const std::map<std::string, std::vector<IntervalSeries>>& history,
                                                        const std::map<std::string, IntervalSeries>& today,
                                                        OracleParams prm = {}) {
  using detail_oracle::Pt;
  const Timestamp start{std::chrono::sys_days{day}};
  auto day_start = [&](int back) { return start - std::chrono::days{back}; };

  // Flatten the history of every sensor, keeping only known values.
  std::map<std::string, std::vector<Pt>> past;
  std::map<std::string, std::set<Timestamp>> covered;  // day starts with data
  for (const auto& [id, list] : history) {
    for (const auto& s : list) {
      bool any = false;
      for (const auto& p : s.points)
        if (p.value) {
          past[id].push_back({p.timestamp, *p.value, p.repeated});
          any = true;
        }
      if (any) covered[id].insert(Timestamp{std::chrono::sys_days{s.day}});
    }
    std::stable_sort(past[id].begin(), past[id].end(), [](const Pt& a, const Pt& b) { return a.ts < b.ts; });
  }

  OracleTree tree;
  auto& out = tree.clusters;
  for (const auto& c : meta.clusters()) out[c];

  auto last_before = [&](const std::string& id, Timestamp t) -> std::optional<SensorValue> {
    std::optional<SensorValue> v;
    for (const auto& p : past[id])
      if (p.ts < t) v = p.v;
    return v;
  };

  // I(h): the largest per-event score of the hour.
  std::map<std::string, std::array<std::vector<Pt>, 24>> today_by_hour;
  for (const auto& [id, series] : today) {
    const auto* info = meta.find(id);
    for (const auto& p : series.points) {
      if (!p.value) continue;
      int hour = static_cast<int>((p.timestamp - start) / std::chrono::hours{1});
      today_by_hour[id][hour].push_back({p.timestamp, *p.value, p.repeated});
      auto tod = p.timestamp - start;
      std::vector<SensorValue> samples;
      for (const auto& q : past[id]) {
        if (q.ts >= start) continue;
        for (int d = 1; d <= prm.days; ++d) {
          auto centre = day_start(d) + tod;
          if (q.ts >= centre - prm.window && q.ts <= centre + prm.window) {
            samples.push_back(q.v);
            break;
          }
        }
      }
      double score = 0.0;
      if (auto b = std::get_if<bool>(&*p.value)) {
        if (!samples.empty()) {
          double k = 0;
          for (const auto& s : samples) k += std::get<bool>(s) == *b;
          double prob = (k + 1) / (static_cast<double>(samples.size()) + 2);
          score = -std::log2(prob);
        }
      } else if (samples.size() >= 2) {
        std::vector<double> xs;
        for (const auto& s : samples) xs.push_back(std::get<double>(s));
        score = std::abs(std::get<double>(*p.value) - detail_oracle::mean(xs)) /
                std::max(detail_oracle::sd(xs), prm.sd_floor);
      }
      tree.event_info[id].push_back(score);
      auto& cl = out[info->cluster];
      cl.info[hour] = std::max(cl.info[hour], score);
    }
  }

  // N(h): today's change count against the covered prior days.
  for (auto& [cluster, cl] : out) {
    std::vector<std::string> sensors;
    for (const auto& [id, info] : meta.sensors())
      if (info.cluster == cluster) sensors.push_back(id);
    for (int h = 0; h < 24; ++h) {
      std::vector<double> counts;
      for (int d = 1; d <= prm.days; ++d) {
        Timestamp ds = day_start(d);
        bool any = false;
        std::size_t n = 0;
        for (const auto& id : sensors) {
          if (!covered[id].count(ds)) continue;
          any = true;
          Timestamp hs = ds + std::chrono::hours{h}, he = hs + std::chrono::hours{1};
          std::vector<Pt> in;
          for (const auto& p : past[id])
            if (p.ts >= hs && p.ts < he) in.push_back(p);
          n += detail_oracle::count(in, meta.find(id)->kind, last_before(id, hs));
        }
        if (any) counts.push_back(static_cast<double>(n));
      }
      std::size_t current = 0;
      for (const auto& id : sensors) {
        auto prev = last_before(id, start);
        // The previous value for hour h is the last known value before it.
        for (int g = 0; g < h; ++g)
          if (!today_by_hour[id][g].empty()) prev = today_by_hour[id][g].back().v;
        current += detail_oracle::count(today_by_hour[id][h], meta.find(id)->kind, prev);
      }
      if (!counts.empty())
        cl.change_dev[h] = std::abs(static_cast<double>(current) - detail_oracle::mean(counts)) /
                           std::max(detail_oracle::sd(counts), 1.0);
      cl.weight[h] = std::max(cl.info[h], cl.change_dev[h]);
    }
    double s = 0;
    for (double w : cl.weight) s += w;
    cl.cluster_weight = s / 24.0;
  }
  return tree;
}

// Random sensor logs over `days + 1` UTC days ending with `day`: a few
// clusters of boolean and float sensors, some days left without data.
struct RandomLogs {
  SensorMeta meta;
  std::map<std::string, std::vector<CovEvent>> events;
  Day day{};
};

inline RandomLogs random_logs(std::mt19937_64& rng, int days = 7) {
  RandomLogs r;
  r.day = Day{std::chrono::year{2015}, std::chrono::March, std::chrono::day{20}};
  std::uniform_int_distribution<int> n_clusters(1, 3), n_sensors(1, 3), n_events(0, 25);
  std::uniform_real_distribution<double> u(0, 1);
  int clusters = n_clusters(rng);
  for (int c = 0; c < clusters; ++c) {
    std::string cluster = "cluster-" + std::to_string(c);
    int sensors = n_sensors(rng);
    for (int s = 0; s < sensors; ++s) {
      std::string id = cluster + "-s" + std::to_string(s);
      auto kind = u(rng) < 0.5 ? ValueKind::Boolean : ValueKind::Float;
      r.meta.add({id, cluster, kind, id + ".csv"});
      double level = 15 + 10 * u(rng);
      double skip = u(rng) * 0.4;
      std::vector<CovEvent> evs;
      for (int d = -days; d <= 0; ++d) {
        if (d < 0 && u(rng) < skip) continue;
        Timestamp ds = Timestamp{std::chrono::sys_days{r.day}} + std::chrono::days{d};
        int n = n_events(rng);
        // Bias events towards a daily pattern so windows overlap.
        for (int i = 0; i < n; ++i) {
          double hour = u(rng) < 0.6 ? 8 + 4 * u(rng) : 24 * u(rng);
          auto ts = ds + std::chrono::nanoseconds{static_cast<std::int64_t>(hour * 3600e9)};
          SensorValue v;
          if (kind == ValueKind::Boolean) v = u(rng) < 0.5;
          else v = std::round((level + 3 * (u(rng) - 0.5)) * 10) / 10;
          evs.push_back({id, cluster, ts, v});
        }
      }
      std::stable_sort(evs.begin(), evs.end(), [](const CovEvent& a, const CovEvent& b) { return a.timestamp < b.timestamp; });
      r.events[id] = std::move(evs);
    }
  }
  return r;
}

}  // namespace testsupport
