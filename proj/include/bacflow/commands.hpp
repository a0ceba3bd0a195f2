#pragma once

// Subcommand bodies. Each returns the process exit code and writes results to
// `out` and diagnostics to `err`, so they run the same under the CLI and tests.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bacflow/appdata_scoring.hpp"
#include "bacflow/baseline.hpp"
#include "bacflow/config.hpp"
#include "bacflow/cov.hpp"
#include "bacflow/flow_map.hpp"
#include "bacflow/graph_export.hpp"
#include "bacflow/packet_codec.hpp"
#include "bacflow/pcap.hpp"

namespace bacflow {

struct IngestStats {
  std::size_t records = 0;
  std::size_t bacnet = 0;
  std::size_t malformed = 0;
  std::size_t truncated_files = 0;
};

// Streams the BACnet packets of one capture into `sink`. Malformed packets
// are counted and skipped; a truncated tail is reported and the complete
// records are kept. Unsupported formats propagate.
template <typename Sink>
void ingest_capture(const std::filesystem::path& path, Sink&& sink, IngestStats& stats, std::ostream& err) {
  PcapReader reader(path);
  try {
    while (auto rec = reader.next()) {
      ++stats.records;
      try {
        if (auto p = parse_frame(rec->frame, rec->timestamp)) {
          ++stats.bacnet;
          sink(*p);
        }
      } catch (const MalformedPacket& e) {
        ++stats.malformed;
      }
    }
  } catch (const TruncatedFile& e) {
    ++stats.truncated_files;
    err << "warning: " << path.string() << ": " << e.what() << "; kept " << e.complete_records()
        << " complete records\n";
  }
}

inline void write_flow_csv_file(const FlowTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_flow_csv(out, table);
}

// Builds (or with `update`, extends) the baseline from cfg.captures and
// writes the flow-table CSV and the baseline JSON.
inline int cmd_analyze(const AppConfig& cfg, bool update, std::ostream& err) {
  try {
    if (cfg.captures.empty()) throw EmptySample();
    FlowTableBuilder builder(cfg.flow.reorder_window);
    IngestStats stats;
    for (const auto& path : cfg.captures)
      ingest_capture(path, [&](const ParsedPacket& p) { builder.add(p); }, stats, err);
    FlowTable table = builder.finish(cfg.flow.classifier);
    if (table.total_packets() == 0) throw EmptySample();

    Baseline b;
    if (update && std::filesystem::exists(cfg.baseline)) {
      b = load_baseline(cfg.baseline);
      b.update(table, cfg.flow);
    } else {
      b = Baseline::create(table, cfg.flow);
    }
    save_baseline(b, cfg.baseline);
    write_flow_csv_file(b.map.table(), cfg.flow_csv);
    err << "analyze: " << stats.records << " records, " << stats.bacnet << " BACnet packets, "
        << stats.malformed << " malformed, " << builder.untypable() << " untypable, " << builder.late()
        << " late, " << b.map.flows.size() << " flows, generation " << b.generation << '\n';
    return 0;
  } catch (const EmptySample& e) {
    err << "error: EmptySample: no BACnet packets in the sample\n";
  } catch (const UnsupportedFormat& e) {
    err << "error: UnsupportedFormat: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return 1;
}

namespace detail {
// Highest id in an existing anomaly log, 0 when absent or empty.
inline std::uint64_t last_anomaly_id(const std::filesystem::path& log) {
  std::ifstream in(log);
  std::uint64_t last = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_object() && j.contains("id")) last = std::max(last, j["id"].get<std::uint64_t>());
  }
  return last;
}
}  // namespace detail

// Replays `capture` against the stored baseline, one NDJSON record per
// non-ok verdict. With `append_log`, records also go to cfg.anomaly_log and
// ids continue from it.
inline int cmd_check(const AppConfig& cfg, const std::filesystem::path& capture, bool append_log,
                     std::ostream& out, std::ostream& err) {
  Baseline b;
  try {
    b = load_baseline(cfg.baseline);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  std::ofstream log;
  std::uint64_t id = 0;
  if (append_log) {
    id = detail::last_anomaly_id(cfg.anomaly_log);
    log.open(cfg.anomaly_log, std::ios::app);
    if (!log) {
      err << "error: cannot append to " << cfg.anomaly_log.string() << '\n';
      return 1;
    }
  }
  FlowChecker checker(b.map);
  std::map<VerdictKind, std::size_t> counts;
  IngestStats stats;
  try {
    ingest_capture(
        capture,
        [&](const ParsedPacket& p) {
          Verdict v = checker.check(p);
          ++counts[v.kind];
          if (v.kind == VerdictKind::Ok) return;
          AnomalyRecord r;
          r.id = ++id;
          r.timestamp = p.timestamp;
          auto key = flow_key(p);
          r.has_key = key.has_value();
          if (key) r.key = *key;
          r.verdict = std::move(v);
          auto line = to_json(r).dump();
          out << line << '\n';
          if (log.is_open()) log << line << '\n';
        },
        stats, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << "check: " << stats.bacnet << " packets";
  for (auto kind : {VerdictKind::Ok, VerdictKind::AnomalousTiming, VerdictKind::AnomalousLength,
                    VerdictKind::UnknownFlow, VerdictKind::UnclassifiedFlow})
    err << ", " << to_string(kind) << ' ' << counts[kind];
  err << ", malformed " << stats.malformed << '\n';
  return 0;
}

// `source` is a baseline (.json) or a capture.
inline int cmd_export_gexf(const AppConfig& cfg, const std::filesystem::path& source, LayerFilter layer,
                           std::ostream& out, std::ostream& err) {
  try {
    FlowTable table;
    if (source.extension() == ".json") {
      table = load_baseline(source).map.table();
    } else {
      FlowTableBuilder builder(cfg.flow.reorder_window);
      IngestStats stats;
      ingest_capture(source, [&](const ParsedPacket& p) { builder.add(p); }, stats, err);
      table = builder.finish(cfg.flow.classifier);
    }
    out << export_gexf(build_graph(table, layer));
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

// All CoV events per sensor, sorted by time. Sensors without a file in the
// directory simply have no events.
inline std::map<std::string, std::vector<CovEvent>> load_cov_dir(const std::filesystem::path& dir,
                                                                 const SensorMeta& meta, UtcOffset tz) {
  std::map<std::string, std::vector<CovEvent>> out;
  for (const auto& [id, info] : meta.sensors()) {
    auto path = dir / info.file;
    auto& events = out[id];
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    events = read_cov_csv(in, info, tz);
    std::stable_sort(events.begin(), events.end(),
                     [](const CovEvent& a, const CovEvent& b) { return a.timestamp < b.timestamp; });
  }
  return out;
}

inline std::optional<SensorValue> last_value_before(const std::vector<CovEvent>& events, Timestamp t) {
  auto it = std::lower_bound(events.begin(), events.end(), t,
                             [](const CovEvent& e, Timestamp v) { return e.timestamp < v; });
  if (it == events.begin()) return std::nullopt;
  return std::prev(it)->value;
}

// Extrapolated history of the `history_days` days before `day`, each day
// seeded with the last value before it.
inline EventHistory build_history(const std::map<std::string, std::vector<CovEvent>>& events,
                                  const SensorMeta& meta, Day day, const ScoringConfig& cfg) {
  EventHistory history(cfg);
  for (const auto& [id, info] : meta.sensors()) {
    auto it = events.find(id);
    if (it == events.end()) continue;
    for (int d = cfg.history_days; d >= 1; --d) {
      Day past = EventHistory::shift(day, -d);
      auto seed = last_value_before(it->second, cfg.tz.day_start(past));
      history.add_series(info, extrapolate_15min(it->second, id, past, cfg.tz, seed));
    }
  }
  return history;
}

// The scored day's extrapolated series, one per sensor in `meta`.
inline std::vector<IntervalSeries> day_series(const std::map<std::string, std::vector<CovEvent>>& events,
                                              const SensorMeta& meta, Day day, UtcOffset tz) {
  static const std::vector<CovEvent> none;
  std::vector<IntervalSeries> out;
  for (const auto& [id, info] : meta.sensors()) {
    auto it = events.find(id);
    const auto& evs = it == events.end() ? none : it->second;
    out.push_back(extrapolate_15min(evs, id, day, tz, last_value_before(evs, tz.day_start(day))));
  }
  return out;
}

inline WeightedDayTree score_day(const std::map<std::string, std::vector<CovEvent>>& events,
                                 const SensorMeta& meta, Day day, const ScoringConfig& cfg) {
  return build_weighted_tree(day, day_series(events, meta, day, cfg.tz), build_history(events, meta, day, cfg), meta);
}

inline int cmd_score(const AppConfig& cfg, Day day, std::ostream& out, std::ostream& err) {
  try {
    auto meta = SensorMeta::load(cfg.sensor_meta);
    auto events = load_cov_dir(cfg.cov_dir, meta, cfg.scoring.tz);
    out << to_json(score_day(events, meta, day, cfg.scoring)).dump(2) << '\n';
    return 0;
  } catch (const ValueError& e) {
    err << "error: ValueError: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return 1;
}

}  // namespace bacflow
