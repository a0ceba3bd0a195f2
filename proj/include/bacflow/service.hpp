#pragma once

// Console JSON API, transport-independent. Reads run concurrently under a
// shared lock; reference-graph confirmation is the only writer. The baseline
// file is re-read whenever it changes on disk, so a regeneration done by
// `analyze --update` shows up without a restart.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>

#include <json.hpp>

#include "bacflow/baseline.hpp"
#include "bacflow/config.hpp"

namespace bacflow {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

inline ApiResponse api_error(int status, std::string_view code, std::string_view message) {
  return {status, {{"error", code}, {"message", message}}};
}

inline nlohmann::json flow_table_json(const FlowTable& table) {
  using nlohmann::json;
  json rows = json::array();
  for (const auto* kv : rows_by_count(table)) {
    const auto& [k, e] = *kv;
    auto tau = e.stats.tau();
    auto sigma = e.stats.sigma();
    rows.push_back({{"source", k.src.to_string()},
                    {"destination", k.dst.to_string()},
                    {"layer", std::string(to_string(k.layer))},
                    {"type", k.type_string()},
                    {"count", e.stats.count()},
                    {"tau", tau ? json(*tau) : json(nullptr)},
                    {"sigma", sigma ? json(*sigma) : json(nullptr)},
                    {"class", std::string(to_string(e.cls.verdict))}});
  }
  return {{"flows", std::move(rows)}};
}

inline nlohmann::json delta_json(const Baseline& b) {
  using nlohmann::json;
  auto observed = b.observed();
  auto d = diff_graphs(b.reference, observed, b.generation);
  auto gone = disappeared(b.reference, observed);
  json nodes = json::array(), edges = json::array(), gone_nodes = json::array(), gone_edges = json::array();
  for (const auto& n : d.new_nodes) {
    json node{{"address", n.to_string()}};
    if (auto it = d.node_first_seen.find(n); it != d.node_first_seen.end())
      node["first_seen"] = format_iso8601(it->second);
    nodes.push_back(std::move(node));
  }
  for (const auto& e : d.new_edges) {
    json edge{{"source", e.src.to_string()}, {"target", e.dst.to_string()}};
    if (auto it = d.edge_first_seen.find(e); it != d.edge_first_seen.end())
      edge["first_seen"] = format_iso8601(it->second);
    edges.push_back(std::move(edge));
  }
  for (const auto& n : gone.nodes) gone_nodes.push_back(n.to_string());
  for (const auto& e : gone.edges) gone_edges.push_back({{"source", e.src.to_string()}, {"target", e.dst.to_string()}});
  return {{"generation", d.generation},
          {"new_nodes", std::move(nodes)},
          {"new_edges", std::move(edges)},
          {"disappeared", {{"nodes", std::move(gone_nodes)}, {"edges", std::move(gone_edges)}}}};
}

// Body: {"generation": n, "nodes": ["addr", ...], "edges": [{"source", "target"}, ...]}.
inline std::optional<DeltaSelection> parse_delta_selection(const nlohmann::json& j, std::string& why) {
  try {
    if (!j.is_object() || !j.contains("generation") || !j["generation"].is_number_unsigned()) {
      why = "'generation' (non-negative integer) is required";
      return std::nullopt;
    }
    DeltaSelection s;
    s.generation = j["generation"].get<std::uint64_t>();
    for (const auto& n : j.value("nodes", nlohmann::json::array())) {
      auto a = BacnetAddress::parse(n.get<std::string>());
      if (!a) {
        why = "bad node address " + n.dump();
        return std::nullopt;
      }
      s.nodes.insert(*a);
    }
    for (const auto& e : j.value("edges", nlohmann::json::array())) {
      auto src = BacnetAddress::parse(e.at("source").get<std::string>());
      auto dst = BacnetAddress::parse(e.at("target").get<std::string>());
      if (!src || !dst) {
        why = "bad edge " + e.dump();
        return std::nullopt;
      }
      s.edges.insert({*src, *dst});
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    why = e.what();
    return std::nullopt;
  }
}

class ConsoleService {
 public:
  using Clock = std::function<Timestamp()>;

  explicit ConsoleService(AppConfig cfg, Clock clock = default_clock()) : cfg_(std::move(cfg)), clock_(std::move(clock)) {}

  static Clock default_clock() {
    return [] { return std::chrono::time_point_cast<std::chrono::nanoseconds>(std::chrono::system_clock::now()); };
  }

  const AppConfig& config() const { return cfg_; }

  ApiResponse tree(const std::string& date) const {
    auto day = parse_day(date);
    if (!day) return api_error(404, "UnknownDate", "'" + date + "' is not a YYYY-MM-DD date");
    auto path = cfg_.scores_dir / (format_day(*day) + ".json");
    std::ifstream in(path);
    if (!in) return api_error(404, "UnknownDate", "no scored tree for " + format_day(*day));
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) return api_error(500, "CorruptScores", "unreadable " + path.string());
    return {200, std::move(j)};
  }

  ApiResponse graph(const std::string& layer) {
    auto filter = parse_layer_filter(layer);
    if (!filter) return api_error(400, "BadLayer", "layer must be network-message, application-data or both");
    return read([&](const Baseline& b) { return ApiResponse{200, graph_to_json(build_graph(b.map.table(), *filter))}; });
  }

  ApiResponse flows() {
    return read([](const Baseline& b) { return ApiResponse{200, flow_table_json(b.map.table())}; });
  }

  ApiResponse delta() {
    return read([](const Baseline& b) { return ApiResponse{200, delta_json(b)}; });
  }

  ApiResponse confirm(const std::string& body, const std::string& operator_id) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) return api_error(422, "MalformedConfirmation", "body is not JSON");
    std::string why;
    auto items = parse_delta_selection(j, why);
    if (!items) return api_error(422, "MalformedConfirmation", why);
    if (operator_id.empty()) return api_error(422, "MalformedConfirmation", "X-Operator-Id header is required");

    std::unique_lock lock(mutex_);
    try {
      refresh_locked();
      if (!present_) return api_error(404, "NoBaseline", "no baseline at " + cfg_.baseline.string());
      Baseline next = baseline_;
      next.confirm(*items, operator_id, clock_());
      save_baseline(next, cfg_.baseline);
      baseline_ = std::move(next);
      stamp_ = file_stamp();
      return {200, delta_json(baseline_)};
    } catch (const StaleDelta& e) {
      return api_error(409, "StaleDelta", e.what());
    } catch (const InvalidSelection& e) {
      return api_error(422, "InvalidSelection", e.what());
    } catch (const std::exception& e) {
      return api_error(500, "BaselineError", e.what());
    }
  }

  // `since` is either an anomaly id (records with a larger id) or an
  // ISO-8601 time (records at or after it). Empty returns everything.
  ApiResponse anomalies(const std::string& since) const {
    std::optional<std::uint64_t> since_id;
    std::optional<Timestamp> since_ts;
    if (!since.empty()) {
      if (std::all_of(since.begin(), since.end(), [](char c) { return c >= '0' && c <= '9'; }))
        since_id = std::stoull(since);
      else if (auto t = parse_iso8601(since, cfg_.scoring.tz))
        since_ts = *t;
      else
        return api_error(400, "BadSince", "since must be an anomaly id or an ISO-8601 time");
    }
    std::shared_lock lock(log_mutex_);
    auto acks = read_acks();
    nlohmann::json out = nlohmann::json::array();
    std::ifstream in(cfg_.anomaly_log);
    std::string line;
    while (std::getline(in, line)) {
      auto r = nlohmann::json::parse(line, nullptr, false);
      if (!r.is_object()) continue;
      auto id = r.value("id", std::uint64_t{0});
      if (since_id && id <= *since_id) continue;
      if (since_ts) {
        auto t = parse_iso8601(r.value("timestamp", std::string()));
        if (!t || *t < *since_ts) continue;
      }
      auto a = acks.find(id);
      r["acknowledged"] = a != acks.end();
      if (a != acks.end()) r["ack"] = a->second;
      out.push_back(std::move(r));
    }
    return {200, {{"anomalies", std::move(out)}}};
  }

  // Acknowledgements live in `<anomaly_log>.ack`; the log itself is never
  // rewritten. Acknowledging twice keeps the first record.
  ApiResponse acknowledge(const std::string& id_text, const std::string& operator_id) {
    if (id_text.empty() || !std::all_of(id_text.begin(), id_text.end(), [](char c) { return c >= '0' && c <= '9'; }))
      return api_error(404, "UnknownAnomaly", "no anomaly " + id_text);
    std::uint64_t id = std::stoull(id_text);
    std::unique_lock lock(log_mutex_);
    if (!log_has(id)) return api_error(404, "UnknownAnomaly", "no anomaly " + id_text);
    auto acks = read_acks();
    if (auto a = acks.find(id); a != acks.end()) return {200, {{"id", id}, {"acknowledged", true}, {"ack", a->second}}};
    nlohmann::json ack{{"id", id}, {"operator", operator_id}, {"at", format_iso8601(clock_())}};
    std::ofstream out(ack_path(), std::ios::app);
    out << ack.dump() << '\n';
    if (!out) return api_error(500, "AckFailed", "cannot write " + ack_path().string());
    return {200, {{"id", id}, {"acknowledged", true}, {"ack", ack}}};
  }

 private:
  using Stamp = std::optional<std::filesystem::file_time_type>;

  Stamp file_stamp() const {
    std::error_code ec;
    auto t = std::filesystem::last_write_time(cfg_.baseline, ec);
    if (ec) return std::nullopt;
    return t;
  }

  void refresh_locked() {
    auto stamp = file_stamp();
    if (loaded_ && stamp == stamp_) return;
    if (!stamp) {
      baseline_ = Baseline{};
      present_ = false;
    } else {
      baseline_ = load_baseline(cfg_.baseline);
      present_ = true;
    }
    stamp_ = stamp;
    loaded_ = true;
  }

  template <typename F>
  ApiResponse read(F&& f) {
    try {
      {
        std::shared_lock lock(mutex_);
        if (loaded_ && file_stamp() == stamp_) return f(baseline_);
      }
      std::unique_lock lock(mutex_);
      refresh_locked();
      return f(baseline_);
    } catch (const std::exception& e) {
      return api_error(500, "BaselineError", e.what());
    }
  }

  std::filesystem::path ack_path() const {
    auto p = cfg_.anomaly_log;
    p += ".ack";
    return p;
  }

  std::map<std::uint64_t, nlohmann::json> read_acks() const {
    std::map<std::uint64_t, nlohmann::json> acks;
    std::ifstream in(ack_path());
    std::string line;
    while (std::getline(in, line)) {
      auto a = nlohmann::json::parse(line, nullptr, false);
      if (a.is_object() && a.contains("id")) acks.emplace(a["id"].get<std::uint64_t>(), a);
    }
    return acks;
  }

  bool log_has(std::uint64_t id) const {
    std::ifstream in(cfg_.anomaly_log);
    std::string line;
    while (std::getline(in, line)) {
      auto r = nlohmann::json::parse(line, nullptr, false);
      if (r.is_object() && r.value("id", std::uint64_t{0}) == id) return true;
    }
    return false;
  }

  AppConfig cfg_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  mutable std::shared_mutex log_mutex_;
  Baseline baseline_;
  Stamp stamp_;
  bool loaded_ = false;
  bool present_ = false;
};

}  // namespace bacflow
