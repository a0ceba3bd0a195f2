#pragma once

// Durable baseline: the flow map, the confirmed reference graph and the
// delta generation counter, as a versioned JSON document. The observed graph
// is always recomputed from the stored flows.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "bacflow/errors.hpp"
#include "bacflow/flow_map.hpp"

namespace bacflow {

struct Baseline {
  static constexpr int kSchemaVersion = 1;

  std::uint64_t generation = 0;
  FlowMap map;
  ReferenceGraph reference;

  DirectedGraph observed() const { return build_graph(map.table(), LayerFilter::Both); }
  GraphDelta delta() const { return diff_graphs(reference, observed(), generation); }

  // Sample-period baseline; the observed topology becomes the reference.
  static Baseline create(const FlowTable& table, const FlowMapConfig& cfg,
                         const std::string& operator_id = "baseline") {
    Baseline b;
    b.map = build_flow_map(table, cfg);
    b.reference = reference_from(b.observed(), operator_id, b.map.built_at);
    return b;
  }

  // Daily regeneration: fold in newly recorded traffic and start a new delta
  // generation. The reference graph only changes through confirm().
  void update(const FlowTable& recorded, const FlowMapConfig& cfg) {
    FlowTable merged = map.table();
    merged.merge(recorded, cfg.classifier);
    map = build_flow_map(merged, cfg);
    ++generation;
  }

  void confirm(const DeltaSelection& items, const std::string& operator_id, Timestamp at) {
    // Copy, so a rejected selection leaves the reference intact.
    reference = confirm_delta(reference, delta(), items, generation, operator_id, at);
  }
};

namespace detail {
inline BacnetAddress address_from_json(const nlohmann::json& j) {
  auto text = j.get<std::string>();
  auto a = BacnetAddress::parse(text);
  if (!a) throw BaselineError("bad address '" + text + "'");
  return *a;
}

inline Timestamp time_from_json(const nlohmann::json& j) {
  auto text = j.get<std::string>();
  auto t = parse_iso8601(text);
  if (!t) throw BaselineError("bad timestamp '" + text + "'");
  return *t;
}
}  // namespace detail

inline nlohmann::json flow_key_to_json(const FlowKey& k) {
  return {{"src", k.src.to_string()},
          {"dst", k.dst.to_string()},
          {"layer", std::string(to_string(k.layer))},
          {"type", k.type_code}};
}

inline FlowKey flow_key_from_json(const nlohmann::json& j) {
  FlowKey k;
  k.src = detail::address_from_json(j.at("src"));
  k.dst = detail::address_from_json(j.at("dst"));
  auto layer = parse_flow_layer(j.at("layer").get<std::string>());
  if (!layer) throw BaselineError("bad layer");
  k.layer = *layer;
  k.type_code = j.at("type").get<std::uint8_t>();
  return k;
}

inline nlohmann::json to_json(const Baseline& b) {
  using nlohmann::json;
  json flows = json::array();
  for (const auto& [k, m] : b.map.flows) {
    json f = flow_key_to_json(k);
    f["count"] = m.stats.count();
    f["first_ts"] = format_iso8601(m.stats.first_ts());
    f["last_ts"] = format_iso8601(m.stats.last_ts());
    f["gap_mean"] = m.stats.gap_mean();
    f["gap_m2"] = m.stats.gap_m2();
    f["length_mean"] = m.stats.mean_length();
    f["length_m2"] = m.stats.length_m2();
    f["tau"] = m.stats.tau() ? json(*m.stats.tau()) : json(nullptr);
    f["sigma"] = m.stats.sigma() ? json(*m.stats.sigma()) : json(nullptr);
    f["class"] = std::string(to_string(m.cls.verdict));
    f["lambda"] = m.cls.lambda ? json(*m.cls.lambda) : json(nullptr);
    f["insufficient_data"] = m.cls.insufficient_data;
    f["threshold"] = m.threshold;
    flows.push_back(std::move(f));
  }
  json nodes = json::array(), edges = json::array();
  for (const auto& [n, c] : b.reference.nodes)
    nodes.push_back({{"address", n.to_string()}, {"confirmed_at", format_iso8601(c.at)}, {"operator", c.operator_id}});
  for (const auto& [e, c] : b.reference.edges)
    edges.push_back({{"source", e.src.to_string()},
                     {"target", e.dst.to_string()},
                     {"confirmed_at", format_iso8601(c.at)},
                     {"operator", c.operator_id}});
  return {{"schema_version", Baseline::kSchemaVersion},
          {"generation", b.generation},
          {"built_at", format_iso8601(b.map.built_at)},
          {"sample_span", {{"start", format_iso8601(b.map.sample_start)}, {"end", format_iso8601(b.map.sample_end)}}},
          {"settings",
           {{"periodic_ratio", b.map.classifier.periodic_ratio},
            {"sporadic_low", b.map.classifier.sporadic_low},
            {"sporadic_high", b.map.classifier.sporadic_high},
            {"min_samples", b.map.classifier.min_samples},
            {"default_threshold", b.map.default_threshold},
            {"length_sd_mult", b.map.length_sd_mult},
            {"sigma_floor_fraction", b.map.sigma_floor_fraction}}},
          {"flows", std::move(flows)},
          {"reference", {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}}}};
}

inline Baseline baseline_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw BaselineError("baseline is not a JSON object");
    int version = j.at("schema_version").get<int>();
    if (version != Baseline::kSchemaVersion)
      throw BaselineError("unsupported baseline schema_version " + std::to_string(version));
    Baseline b;
    b.generation = j.at("generation").get<std::uint64_t>();
    b.map.built_at = detail::time_from_json(j.at("built_at"));
    b.map.sample_start = detail::time_from_json(j.at("sample_span").at("start"));
    b.map.sample_end = detail::time_from_json(j.at("sample_span").at("end"));
    const auto& s = j.at("settings");
    b.map.classifier.periodic_ratio = s.at("periodic_ratio").get<double>();
    b.map.classifier.sporadic_low = s.at("sporadic_low").get<double>();
    b.map.classifier.sporadic_high = s.at("sporadic_high").get<double>();
    b.map.classifier.min_samples = s.at("min_samples").get<std::size_t>();
    b.map.default_threshold = s.at("default_threshold").get<double>();
    b.map.length_sd_mult = s.at("length_sd_mult").get<double>();
    b.map.sigma_floor_fraction = s.at("sigma_floor_fraction").get<double>();
    for (const auto& f : j.at("flows")) {
      FlowModel m;
      m.stats = FlowStats::from_moments(
          f.at("count").get<std::size_t>(), detail::time_from_json(f.at("first_ts")),
          detail::time_from_json(f.at("last_ts")), f.at("gap_mean").get<double>(), f.at("gap_m2").get<double>(),
          f.at("length_mean").get<double>(), f.at("length_m2").get<double>());
      auto verdict = parse_flow_verdict(f.at("class").get<std::string>());
      if (!verdict) throw BaselineError("bad flow class");
      m.cls.verdict = *verdict;
      if (!f.at("lambda").is_null()) m.cls.lambda = f.at("lambda").get<double>();
      m.cls.insufficient_data = f.value("insufficient_data", false);
      if ((m.cls.verdict == FlowVerdict::Sporadic) != m.cls.lambda.has_value())
        throw BaselineError("lambda must be present exactly for sporadic flows");
      m.threshold = f.at("threshold").get<double>();
      if (!(m.threshold > 0.0 && m.threshold < 1.0)) throw BaselineError("threshold outside (0, 1)");
      b.map.flows[flow_key_from_json(f)] = m;
    }
    const auto& r = j.at("reference");
    for (const auto& n : r.at("nodes"))
      b.reference.nodes[detail::address_from_json(n.at("address"))] = {
          detail::time_from_json(n.at("confirmed_at")), n.at("operator").get<std::string>()};
    for (const auto& e : r.at("edges")) {
      EdgeId id{detail::address_from_json(e.at("source")), detail::address_from_json(e.at("target"))};
      if (!b.reference.has_node(id.src) || !b.reference.has_node(id.dst))
        throw BaselineError("reference edge endpoint is not a reference node");
      b.reference.edges[id] = {detail::time_from_json(e.at("confirmed_at")), e.at("operator").get<std::string>()};
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw BaselineError(std::string("corrupt baseline: ") + e.what());
  }
}

inline Baseline load_baseline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BaselineError("cannot open baseline " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw BaselineError("corrupt baseline " + path.string() + ": " + e.what());
  }
  return baseline_from_json(j);
}

// Written to a sibling temporary file and renamed into place.
inline void save_baseline(const Baseline& b, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw BaselineError("cannot write " + tmp.string());
    out << to_json(b).dump(2) << '\n';
    if (!out) throw BaselineError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// One anomaly feed line.
struct AnomalyRecord {
  std::uint64_t id = 0;
  Timestamp timestamp{};
  FlowKey key;
  bool has_key = true;  // false for untyped packets
  Verdict verdict;
};

inline nlohmann::json to_json(const AnomalyRecord& r) {
  return {{"id", r.id},
          {"timestamp", format_iso8601(r.timestamp)},
          {"flow", r.has_key ? flow_key_to_json(r.key) : nlohmann::json(nullptr)},
          {"verdict", std::string(to_string(r.verdict.kind))},
          {"likelihood", r.verdict.likelihood ? nlohmann::json(*r.verdict.likelihood) : nlohmann::json(nullptr)},
          {"detail", r.verdict.detail}};
}

}  // namespace bacflow
