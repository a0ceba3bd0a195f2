// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bacflow/bacflow.hpp"
#include "support/bvll_gen.hpp"
#include "support/files.hpp"
#include "support/scenarios.hpp"
#include "support/traffic.hpp"
#include "support/weight_oracle.hpp"

using namespace bacflow;
namespace ts = testsupport;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) { return detail::fmt_double(v, f); }

FlowTable ingest(const std::filesystem::path& pcap) {
  FlowTableBuilder builder;
  IngestStats stats;
  ingest_capture(pcap, [&](const ParsedPacket& p) { builder.add(p); }, stats, std::cerr);
  return builder.finish({});
}

// ---------------------------------------------------------------------------

Outcome table1(const ts::TempDir& dir) {
  auto pcap = dir / "table1.pcap";
  ts::write_capture(pcap, ts::table_traffic(24000, 4000, 2015));
  auto t0 = std::chrono::steady_clock::now();
  auto table = ingest(pcap);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  double worst_tau = 0, worst_sigma = 0;
  bool classes = true;
  for (const auto& r : ts::table_rows()) {
    FlowKey k{ts::table_device(r.src_mac).address(), ts::table_device(r.dst_mac).address(),
              FlowLayer::ApplicationData, r.pdu};
    const auto* e = table.find(k);
    if (!e || !e->stats.tau() || !e->stats.sigma()) return {false, "missing flow " + k.to_string()};
    worst_tau = std::max(worst_tau, std::abs(*e->stats.tau() - r.tau) / r.tau);
    worst_sigma = std::max(worst_sigma, std::abs(*e->stats.sigma() - r.sigma) / r.sigma);
    classes &= e->cls.verdict == (r.periodic ? FlowVerdict::Periodic : FlowVerdict::Sporadic);
  }
  bool pass = worst_tau <= 0.02 && worst_sigma <= 0.10 && classes && table.size() == 5 && secs < 10.0;
  return {pass, std::to_string(table.total_packets()) + " packets in " + fmt("%.2f", secs) +
                    " s; max tau err " + fmt("%.2e", worst_tau) + ", max sigma err " + fmt("%.2e", worst_sigma) +
                    "; classes " + (classes ? "4 sporadic + 1 periodic as in the table" : "MISMATCH")};
}

Outcome fuzz() {
  std::mt19937_64 rng(1000003);
  std::uniform_int_distribution<int> byte(0, 255), len(0, 160);
  auto a = ts::device(1, 1), b = ts::device(2, 2);
  auto valid = ts::frame(a, b, build_application_bvll(0, 12));
  std::size_t typed = 0, parsed = 0, other = 0;
  for (int i = 0; i < 1000000; ++i) {
    Octets f;
    switch (i % 3) {
      case 0:  // raw octets
        f.resize(static_cast<std::size_t>(len(rng)));
        for (auto& x : f) x = static_cast<std::uint8_t>(byte(rng));
        break;
      case 1: {  // random UDP payload on the BACnet port
        Octets payload(static_cast<std::size_t>(len(rng) % 64));
        for (auto& x : payload) x = static_cast<std::uint8_t>(byte(rng));
        if (!payload.empty() && i % 2) payload[0] = bvlc::kTypeBacnetIp;
        f = ts::frame(a, b, payload);
        break;
      }
      default:  // mutated valid frame
        f = valid;
        for (int k = 0; k < 1 + i % 4; ++k)
          f[42 + static_cast<std::size_t>(byte(rng)) % (f.size() - 42)] = static_cast<std::uint8_t>(byte(rng));
        f.resize(42 + static_cast<std::size_t>(len(rng)) % (f.size() - 41));
    }
    try {
      if (parse_frame(f, Timestamp{})) ++parsed;
    } catch (const MalformedPacket&) {
      ++typed;
    } catch (...) {
      ++other;
    }
  }
  std::size_t mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    auto fx = ts::random_bvll(rng);
    try {
      if (ts::reencode_bvll(fx.bvll) != fx.bvll) ++mismatches;
    } catch (...) {
      ++mismatches;
    }
  }
  return {other == 0 && mismatches == 0,
          "1000000 inputs: " + std::to_string(parsed) + " parsed, " + std::to_string(typed) +
              " MalformedPacket, " + std::to_string(other) + " other failures; 10000 BVLL round-trips, " +
              std::to_string(mismatches) + " mismatches"};
}

Outcome fp_calibration() {
  std::mt19937_64 rng(4242);
  const double lambda = 1.0 / ts::table_rows()[0].tau;
  auto a = ts::table_device(0x73c3), b = ts::table_device(0x5cce);
  auto gaps = ts::exponential_gaps(10000, lambda, rng);
  auto bvll = build_application_bvll(0, 8);
  std::vector<ParsedPacket> pkts;
  for (const auto& f : ts::stream(a, b, bvll, ts::epoch(), gaps)) pkts.push_back(*parse_frame(f.frame, f.ts));

  auto map = build_flow_map(pkts, FlowMapConfig{});
  const auto& model = map.flows.begin()->second;
  if (model.cls.verdict != FlowVerdict::Sporadic) return {false, "flow not classified sporadic"};
  FlowChecker checker(map);
  std::size_t scored = 0, flagged = 0;
  for (const auto& p : pkts) {
    auto v = checker.check(p);
    if (!v.likelihood) continue;
    ++scored;
    flagged += v.kind == VerdictKind::AnomalousTiming;
  }
  double rate = static_cast<double>(flagged) / static_cast<double>(scored);
  return {std::abs(rate - 0.02) <= 0.005,
          "q = 0.01, N = " + std::to_string(scored) + ": flagged " + fmt("%.4f", rate) + " (target 0.0200 +/- 0.0050)"};
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0}); }

Outcome weight_oracle() {
  std::mt19937_64 rng(77);
  double worst = 0;
  std::size_t events = 0, hours = 0;
  bool exact = true;
  for (int trial = 0; trial < 1000; ++trial) {
    auto logs = ts::random_logs(rng);
    ScoringConfig cfg;
    auto history = build_history(logs.events, logs.meta, logs.day, cfg);
    auto today = day_series(logs.events, logs.meta, logs.day, cfg.tz);
    auto tree = build_weighted_tree(logs.day, today, history, logs.meta);

    std::map<std::string, std::vector<IntervalSeries>> oh;
    std::map<std::string, IntervalSeries> ot;
    for (const auto& [id, evs] : logs.events) {
      for (int d = 1; d <= cfg.history_days; ++d) {
        Day past = EventHistory::shift(logs.day, -d);
        oh[id].push_back(extrapolate_15min(evs, id, past, cfg.tz, last_value_before(evs, cfg.tz.day_start(past))));
      }
      ot[id] = extrapolate_15min(evs, id, logs.day, cfg.tz, last_value_before(evs, cfg.tz.day_start(logs.day)));
    }
    auto oracle = ts::oracle_tree(logs.meta, logs.day, oh, ot);

    for (const auto& series : today) {
      std::size_t i = 0;
      for (const auto& p : series.points) {
        if (!p.value) continue;
        auto s = score_event(history, logs.day, {p.timestamp, series.sensor_id, *p.value, p.repeated});
        worst = std::max(worst, rel_err(s.info, oracle.event_info[series.sensor_id].at(i++)));
        ++events;
      }
    }
    for (const auto& c : tree.clusters) {
      const auto& o = oracle.clusters.at(c.sensor_type);
      double sum = 0;
      for (int h = 0; h < 24; ++h) {
        const auto& n = c.hours[h];
        worst = std::max({worst, rel_err(n.info, o.info[h]), rel_err(n.change_dev, o.change_dev[h]),
                          rel_err(n.weight, o.weight[h])});
        exact &= n.weight == std::max(n.info, n.change_dev);
        sum += n.weight;
        ++hours;
      }
      worst = std::max(worst, rel_err(c.weight, o.cluster_weight));
      exact &= c.weight == sum / 24.0;
    }
  }
  bool closed = info_content(0.5) == 1.0 && info_content(1.0) == 0.0;
  return {worst <= 1e-9 && exact && closed,
          "1000 histories, " + std::to_string(events) + " events, " + std::to_string(hours) +
              " hour nodes; max rel err " + fmt("%.2e", worst) + "; I(0.5) = " + fmt("%g", info_content(0.5)) +
              ", I(1) = " + fmt("%g", info_content(1.0))};
}

Outcome scenario_argmax() {
  int ok = 0, total = 0;
  std::string misses;
  auto run = [&](const ts::Scenario& s, const char* name, std::uint64_t seed) {
    ++total;
    auto tree = score_day(s.events, s.meta, s.day, {});
    const auto* c = tree.cluster(s.cluster);
    double fault = 0, normal = 0;
    int at = -1;
    for (const auto& h : c->hours) {
      if (h.hour >= s.fault_from_hour && h.weight > fault) fault = h.weight, at = h.hour;
      if (h.hour < s.fault_from_hour) normal = std::max(normal, h.weight);
    }
    if (fault > normal) ++ok;
    else misses += std::string(" ") + name + "#" + std::to_string(seed) + "(fault " + fmt("%.2f", fault) +
                   " vs " + fmt("%.2f", normal) + ")";
    (void)at;
  };
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    run(ts::stuck_light(seed), "light", seed);
    run(ts::stuck_thermometer(seed), "thermometer", seed);
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) +
                           " fixtures (stuck light, stuck thermometer; 10 seeds each) peak inside the fault hours" +
                           misses};
}

Outcome gexf(const ts::TempDir& dir) {
  std::vector<std::filesystem::path> files;
  std::mt19937_64 rng(99);
  bool sums = true, deterministic = true;

  auto emit = [&](const DirectedGraph& g, const std::string& name) {
    double s = 0;
    for (const auto& e : g.edges) s += e.weight;
    if (!g.edges.empty()) sums &= std::abs(s - 1.0) <= 1e-9;
    auto path = dir / name;
    ts::write_file(path, export_gexf(g));
    files.push_back(path);
  };

  auto pcap = dir / "gexf.pcap";
  ts::write_capture(pcap, ts::table_traffic(2000, 200, 5));
  auto first = export_gexf(build_graph(ingest(pcap)));
  deterministic &= first == export_gexf(build_graph(ingest(pcap)));
  emit(build_graph(ingest(pcap)), "table1.gexf");
  emit(DirectedGraph{}, "empty.gexf");

  // Random mixes of unicast, broadcast, remote-network and raw addresses.
  for (int i = 0; i < 30; ++i) {
    FlowTable t;
    int flows = 1 + static_cast<int>(rng() % 12);
    for (int f = 0; f < flows; ++f) {
      auto pick = [&]() -> BacnetAddress {
        switch (rng() % 5) {
          case 0: return broadcast_address();
          case 1: return BacnetAddress{MsTpAddress{static_cast<std::uint8_t>(rng() % 128)}, std::uint16_t{5}};
          case 2: return BacnetAddress{RawAddress{{0xde, static_cast<std::uint8_t>(rng() % 8)}}, std::uint16_t{9}};
          default: return ts::device(static_cast<std::uint16_t>(rng() % 50), static_cast<std::uint8_t>(1 + rng() % 20)).address();
        }
      };
      FlowStats st;
      int n = 1 + static_cast<int>(rng() % 40);
      for (int k = 0; k < n; ++k) st.add(ts::epoch() + std::chrono::seconds{k}, 10);
      t[{pick(), pick(), rng() % 2 ? FlowLayer::ApplicationData : FlowLayer::NetworkMessage,
         static_cast<std::uint8_t>(rng() % 16)}]
          .stats = st;
    }
    auto layer = std::array{LayerFilter::Both, LayerFilter::ApplicationData, LayerFilter::NetworkMessage}[i % 3];
    auto g = build_graph(t, layer);
    deterministic &= export_gexf(g) == export_gexf(build_graph(t, layer));
    emit(g, "random-" + std::to_string(i) + ".gexf");
  }

  std::string cmd = std::string(PYTHON3_EXECUTABLE) + " " + BACFLOW_SOURCE_DIR + "/tests/tools/validate_gexf.py --weights-sum-to-one";
  for (const auto& f : files) cmd += " '" + f.string() + "'";
  int rc = std::system(cmd.c_str());
  bool valid = rc == 0;
  return {valid && sums && deterministic,
          std::to_string(files.size()) + " documents " + (valid ? "valid" : "INVALID") +
              " against the GEXF 1.3 schema; weight sums " + (sums ? "1 +/- 1e-9" : "OFF") + "; output " +
              (deterministic ? "deterministic" : "NOT deterministic")};
}

Outcome baseline_workflow(const ts::TempDir& dir) {
  auto pcap = dir / "week.pcap";
  ts::write_capture(pcap, ts::table_traffic(500, 60, 11));
  auto b = Baseline::create(ingest(pcap), {});
  bool ok = b.delta().empty();

  // A new device talking to the controller and broadcasting.
  auto intruder = ts::device(0xbad, 77), host = ts::table_device(0x73c3);
  std::vector<ts::TimedFrame> frames;
  for (int i = 0; i < 15; ++i) {
    frames.push_back({ts::at_seconds(ts::epoch(), 100 + i), ts::frame(intruder, host, build_application_bvll(0))});
    frames.push_back({ts::at_seconds(ts::epoch(), 100.5 + i), ts::frame(intruder, host, build_network_bvll(0))});
  }
  auto extra = dir / "day.pcap";
  ts::write_capture(extra, frames);
  b.update(ingest(extra), {});
  auto d = b.delta();
  ok &= d.new_nodes.size() == 2 && d.new_edges.size() == 2;

  bool stale = false;
  try {
    b.confirm({b.generation - 1, d.new_nodes, d.new_edges}, "op", ts::epoch());
  } catch (const StaleDelta&) {
    stale = true;
  }
  auto before_stale = b.reference;
  ok &= stale;

  b.confirm({b.generation, d.new_nodes, d.new_edges}, "op", ts::epoch());
  bool empty_after = b.delta().empty();
  auto ref = b.reference;
  b.confirm({b.generation, d.new_nodes, d.new_edges}, "op2", ts::epoch());
  bool idempotent = b.reference == ref && b.delta().empty();

  save_baseline(b, dir / "baseline.json");
  auto loaded = load_baseline(dir / "baseline.json");
  bool persisted = loaded.reference == b.reference && loaded.delta().empty();
  ok &= empty_after && idempotent && persisted && before_stale.nodes.size() == 4;
  return {ok, std::string("delta of ") + std::to_string(d.new_nodes.size()) + " nodes / " +
                  std::to_string(d.new_edges.size()) + " edges; stale generation " +
                  (stale ? "rejected" : "ACCEPTED") + "; after confirm " + (empty_after ? "empty" : "NOT empty") +
                  "; repeat confirm " + (idempotent ? "no-op" : "CHANGED") + "; reload " +
                  (persisted ? "consistent" : "INCONSISTENT")};
}

}  // namespace

int main() {
  ts::TempDir dir;
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"table-1 reproduction", [&] { return table1(dir); }},
      {"parser fuzz + round-trip", fuzz},
      {"false-positive calibration", fp_calibration},
      {"weight-formula oracle", weight_oracle},
      {"scenario argmax", scenario_argmax},
      {"gexf validity", [&] { return gexf(dir); }},
      {"baseline workflow", [&] { return baseline_workflow(dir); }},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
