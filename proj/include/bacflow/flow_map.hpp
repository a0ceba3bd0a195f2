#pragma once

// Probabilistic flow map: per-flow timing and length models fitted on a
// sample period, per-packet likelihoods, and the operator-confirmed reference
// graph with its new-node / new-edge deltas.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "bacflow/flow_engine.hpp"
#include "bacflow/graph_export.hpp"

namespace bacflow {

struct ConnectionKey {
  BacnetAddress src;
  BacnetAddress dst;
  auto operator<=>(const ConnectionKey&) const = default;
};

struct AnomalyConfig {
  double default_threshold = 0.01;
  std::map<ConnectionKey, double> connection_thresholds;  // overrides per (src, dst)
  double length_sd_mult = 3.0;
  double sigma_floor_fraction = 0.01;  // periodic sigma floor, fraction of tau
};

struct FlowMapConfig {
  ClassifierConfig classifier;
  AnomalyConfig anomaly;
  std::chrono::nanoseconds reorder_window = std::chrono::seconds{1};
};

struct FlowModel {
  FlowStats stats;
  FlowClass cls;
  double threshold = 0.01;  // in (0, 1)
};

struct FlowMap {
  std::map<FlowKey, FlowModel> flows;
  ClassifierConfig classifier;
  double default_threshold = 0.01;
  double length_sd_mult = 3.0;
  double sigma_floor_fraction = 0.01;
  Timestamp built_at{};
  Timestamp sample_start{};
  Timestamp sample_end{};

  const FlowModel* find(const FlowKey& k) const {
    auto it = flows.find(k);
    return it == flows.end() ? nullptr : &it->second;
  }

  FlowTable table() const {
    FlowTable t;
    for (const auto& [k, m] : flows) t[k] = FlowEntry{m.stats, m.cls};
    return t;
  }
};

inline double connection_threshold(const AnomalyConfig& cfg, const FlowKey& k) {
  auto it = cfg.connection_thresholds.find({k.src, k.dst});
  return it == cfg.connection_thresholds.end() ? cfg.default_threshold : it->second;
}

// Deterministic: built_at is the end of the sample, not the wall clock.
inline FlowMap build_flow_map(const FlowTable& table, const FlowMapConfig& cfg) {
  if (table.total_packets() == 0) throw EmptySample();
  FlowMap map;
  map.classifier = cfg.classifier;
  map.default_threshold = cfg.anomaly.default_threshold;
  map.length_sd_mult = cfg.anomaly.length_sd_mult;
  map.sigma_floor_fraction = cfg.anomaly.sigma_floor_fraction;
  map.sample_start = Timestamp::max();
  map.sample_end = Timestamp::min();
  for (const auto& [k, e] : table.flows()) {
    if (e.stats.count() == 0) continue;
    map.flows[k] = FlowModel{e.stats, classify_or_mark(e.stats, cfg.classifier),
                             connection_threshold(cfg.anomaly, k)};
    map.sample_start = std::min(map.sample_start, e.stats.first_ts());
    map.sample_end = std::max(map.sample_end, e.stats.last_ts());
  }
  map.built_at = map.sample_end;
  return map;
}

template <typename PacketRange>
FlowMap build_flow_map(const PacketRange& packets, const FlowMapConfig& cfg) {
  FlowTableBuilder builder(cfg.reorder_window);
  for (const ParsedPacket& p : packets) builder.add(p);
  return build_flow_map(builder.finish(cfg.classifier), cfg);
}

inline double clamp_probability(double p) {
  if (!(p > std::numeric_limits<double>::min())) return std::numeric_limits<double>::min();
  return std::min(p, 1.0);
}

// Two-sided tail probability of observing `gap` seconds since the previous
// packet on the flow. Sporadic: exponential with rate lambda, so
// p = 2 min(F, 1 - F). Periodic: normal around tau with sigma floored at
// sigma_floor_fraction * tau, so p = erfc(|z| / sqrt 2).
inline double packet_likelihood(const FlowMap& map, const FlowKey& key, double gap) {
  const FlowModel* m = map.find(key);
  if (!m) throw UnknownFlow("flow not in map: " + key.to_string());
  gap = std::max(gap, 0.0);
  switch (m->cls.verdict) {
    case FlowVerdict::Sporadic: {
      double rate = *m->cls.lambda;
      double survival = std::exp(-rate * gap);
      double cdf = -std::expm1(-rate * gap);
      return clamp_probability(2.0 * std::min(cdf, survival));
    }
    case FlowVerdict::Periodic: {
      double tau = *m->stats.tau();
      double scale = std::max(*m->stats.sigma(), map.sigma_floor_fraction * tau);
      double z = (gap - tau) / scale;
      return clamp_probability(std::erfc(std::abs(z) / std::sqrt(2.0)));
    }
    case FlowVerdict::Unclassified: break;
  }
  throw UnclassifiedFlow("flow is unclassified: " + key.to_string());
}

enum class VerdictKind { Ok, AnomalousTiming, AnomalousLength, UnknownFlow, UnclassifiedFlow };

inline std::string_view to_string(VerdictKind k) {
  switch (k) {
    case VerdictKind::Ok: return "ok";
    case VerdictKind::AnomalousTiming: return "anomalous-timing";
    case VerdictKind::AnomalousLength: return "anomalous-length";
    case VerdictKind::UnknownFlow: return "unknown-flow";
    case VerdictKind::UnclassifiedFlow: return "unclassified-flow";
  }
  return "?";
}

struct Verdict {
  VerdictKind kind = VerdictKind::Ok;
  std::optional<double> likelihood;
  std::string detail;
};

// Timing is judged first, then length; a packet on an unclassified flow that
// passes the length check is reported as unclassified-flow, never ok.
inline Verdict check_packet(const FlowMap& map, const ParsedPacket& packet,
                            std::optional<Timestamp> prev_ts_on_flow) {
  auto key = flow_key(packet);
  if (!key) return {VerdictKind::UnknownFlow, std::nullopt, "packet carries no typed NPDU"};
  const FlowModel* m = map.find(*key);
  if (!m) return {VerdictKind::UnknownFlow, std::nullopt, "flow not in map: " + key->to_string()};

  Verdict v;
  bool classified = m->cls.verdict != FlowVerdict::Unclassified;
  if (classified && prev_ts_on_flow) {
    double gap = to_seconds(packet.timestamp - *prev_ts_on_flow);
    v.likelihood = packet_likelihood(map, *key, gap);
    if (*v.likelihood < m->threshold) {
      v.kind = VerdictKind::AnomalousTiming;
      v.detail = "gap " + detail::fmt_double(gap, "%.6g") + " s has likelihood " +
                 detail::fmt_double(*v.likelihood, "%.3g") + " below threshold " +
                 detail::fmt_double(m->threshold, "%.3g");
      return v;
    }
  }
  if (m->stats.count() >= map.classifier.min_samples) {
    double deviation = std::abs(static_cast<double>(packet.total_length) - m->stats.mean_length());
    if (deviation > map.length_sd_mult * m->stats.sd_length()) {
      v.kind = VerdictKind::AnomalousLength;
      v.detail = "length " + std::to_string(packet.total_length) + " deviates from mean " +
                 detail::fmt_double(m->stats.mean_length(), "%.2f") + " by more than " +
                 detail::fmt_double(map.length_sd_mult, "%g") + " sd";
      return v;
    }
  }
  if (!classified) {
    v.kind = VerdictKind::UnclassifiedFlow;
    v.detail = m->cls.insufficient_data ? "too few samples to classify" : "timing fits neither class";
  }
  return v;
}

// Live per-flow last-seen timestamps for real-time checking.
class FlowChecker {
 public:
  explicit FlowChecker(const FlowMap& map) : map_(&map) {}

  Verdict check(const ParsedPacket& packet) {
    auto key = flow_key(packet);
    std::optional<Timestamp> prev;
    if (key) {
      if (auto it = last_.find(*key); it != last_.end()) prev = it->second;
    }
    Verdict v = check_packet(*map_, packet, prev);
    if (key) last_[*key] = packet.timestamp;
    return v;
  }

 private:
  const FlowMap* map_;
  std::map<FlowKey, Timestamp> last_;
};

// ---------------------------------------------------------------------------
// Reference graph and deltas

struct EdgeId {
  BacnetAddress src;
  BacnetAddress dst;
  auto operator<=>(const EdgeId&) const = default;
};

struct Confirmation {
  Timestamp at{};
  std::string operator_id;
  bool operator==(const Confirmation&) const = default;
};

struct ReferenceGraph {
  std::map<BacnetAddress, Confirmation> nodes;
  std::map<EdgeId, Confirmation> edges;

  bool has_node(const BacnetAddress& a) const { return nodes.count(a) != 0; }
  bool has_edge(const EdgeId& e) const { return edges.count(e) != 0; }
  bool operator==(const ReferenceGraph&) const = default;
};

// Accepts the whole observed graph as the initial reference.
inline ReferenceGraph reference_from(const DirectedGraph& g, const std::string& operator_id, Timestamp at) {
  ReferenceGraph r;
  for (const auto& n : g.nodes) r.nodes[n] = {at, operator_id};
  for (const auto& e : g.edges) r.edges[{e.src, e.dst}] = {at, operator_id};
  return r;
}

struct GraphDelta {
  std::uint64_t generation = 0;
  std::set<BacnetAddress> new_nodes;
  std::set<EdgeId> new_edges;
  std::map<BacnetAddress, Timestamp> node_first_seen;
  std::map<EdgeId, Timestamp> edge_first_seen;

  bool empty() const { return new_nodes.empty() && new_edges.empty(); }
};

inline GraphDelta diff_graphs(const ReferenceGraph& reference, const DirectedGraph& current,
                              std::uint64_t generation = 0) {
  GraphDelta d;
  d.generation = generation;
  for (const auto& n : current.nodes) {
    if (reference.has_node(n)) continue;
    d.new_nodes.insert(n);
    if (auto it = current.node_first_seen.find(n.to_string()); it != current.node_first_seen.end())
      d.node_first_seen[n] = it->second;
  }
  for (const auto& e : current.edges) {
    EdgeId id{e.src, e.dst};
    if (reference.has_edge(id)) continue;
    d.new_edges.insert(id);
    d.edge_first_seen[id] = e.first_seen;
  }
  return d;
}

// Reference elements absent from the current graph. Informational only.
struct Disappearance {
  std::set<BacnetAddress> nodes;
  std::set<EdgeId> edges;
};

inline Disappearance disappeared(const ReferenceGraph& reference, const DirectedGraph& current) {
  std::set<BacnetAddress> nodes(current.nodes.begin(), current.nodes.end());
  std::set<EdgeId> edges;
  for (const auto& e : current.edges) edges.insert({e.src, e.dst});
  Disappearance out;
  for (const auto& [n, c] : reference.nodes)
    if (!nodes.count(n)) out.nodes.insert(n);
  for (const auto& [e, c] : reference.edges)
    if (!edges.count(e)) out.edges.insert(e);
  return out;
}

struct DeltaSelection {
  std::uint64_t generation = 0;
  std::set<BacnetAddress> nodes;
  std::set<EdgeId> edges;
};

// Confirming an edge confirms its endpoints. Items already in the reference
// are left untouched, so confirming twice is a no-op.
inline ReferenceGraph confirm_delta(ReferenceGraph reference, const GraphDelta& issued,
                                    const DeltaSelection& items, std::uint64_t current_generation,
                                    const std::string& operator_id, Timestamp at) {
  if (items.generation != current_generation || issued.generation != current_generation)
    throw StaleDelta("delta generation " + std::to_string(items.generation) + " superseded by " +
                     std::to_string(current_generation));
  auto add_node = [&](const BacnetAddress& n) {
    if (!reference.has_node(n)) reference.nodes[n] = {at, operator_id};
  };
  for (const auto& n : items.nodes) {
    if (reference.has_node(n)) continue;
    if (!issued.new_nodes.count(n)) throw InvalidSelection("node not in delta: " + n.to_string());
    add_node(n);
  }
  for (const auto& e : items.edges) {
    if (reference.has_edge(e)) continue;
    if (!issued.new_edges.count(e))
      throw InvalidSelection("edge not in delta: " + e.src.to_string() + " -> " + e.dst.to_string());
    add_node(e.src);
    add_node(e.dst);
    reference.edges[e] = {at, operator_id};
  }
  return reference;
}

}  // namespace bacflow
