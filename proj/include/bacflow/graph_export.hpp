#pragma once

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bacflow/flow_engine.hpp"

namespace bacflow {

enum class LayerFilter { NetworkMessage, ApplicationData, Both };

inline std::optional<LayerFilter> parse_layer_filter(std::string_view s) {
  if (s == "network-message" || s == "network") return LayerFilter::NetworkMessage;
  if (s == "application-data" || s == "application") return LayerFilter::ApplicationData;
  if (s == "both" || s.empty()) return LayerFilter::Both;
  return std::nullopt;
}

inline bool layer_included(LayerFilter f, FlowLayer l) {
  return f == LayerFilter::Both || (f == LayerFilter::NetworkMessage) == (l == FlowLayer::NetworkMessage);
}

struct GraphEdge {
  BacnetAddress src;
  BacnetAddress dst;
  double weight = 0.0;  // packet_count / total packets in the graph
  std::size_t packet_count = 0;
  Timestamp first_seen{};

  bool operator==(const GraphEdge&) const = default;
};

// Nodes and edges are kept sorted by canonical label.
struct DirectedGraph {
  std::vector<BacnetAddress> nodes;
  std::vector<GraphEdge> edges;
  std::map<std::string, Timestamp> node_first_seen;  // by label

  std::size_t total_packets() const {
    std::size_t n = 0;
    for (const auto& e : edges) n += e.packet_count;
    return n;
  }
};

// All broadcast variants share the single synthetic broadcast node.
inline BacnetAddress graph_node(const BacnetAddress& a) {
  return a.is_broadcast() ? broadcast_address() : a;
}

inline DirectedGraph build_graph(const FlowTable& table, LayerFilter filter = LayerFilter::Both) {
  struct Acc {
    BacnetAddress src, dst;
    std::size_t count = 0;
    Timestamp first{Timestamp::max()};
  };
  std::map<std::pair<std::string, std::string>, Acc> by_label;
  std::map<std::string, BacnetAddress> nodes;
  DirectedGraph g;
  std::size_t total = 0;
  for (const auto& [key, entry] : table.flows()) {
    if (!layer_included(filter, key.layer) || entry.stats.count() == 0) continue;
    auto src = graph_node(key.src), dst = graph_node(key.dst);
    auto sl = src.to_string(), dl = dst.to_string();
    auto& acc = by_label[{sl, dl}];
    acc.src = src;
    acc.dst = dst;
    acc.count += entry.stats.count();
    acc.first = std::min(acc.first, entry.stats.first_ts());
    total += entry.stats.count();
    nodes.emplace(sl, src);
    nodes.emplace(dl, dst);
    for (const auto& l : {sl, dl}) {
      auto [it, fresh] = g.node_first_seen.emplace(l, entry.stats.first_ts());
      if (!fresh) it->second = std::min(it->second, entry.stats.first_ts());
    }
  }
  for (auto& [label, addr] : nodes) g.nodes.push_back(addr);
  for (auto& [labels, acc] : by_label) {
    g.edges.push_back({acc.src, acc.dst, static_cast<double>(acc.count) / static_cast<double>(total),
                       acc.count, acc.first});
  }
  return g;
}

namespace detail {
inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}
}  // namespace detail

// GEXF 1.3, directed. Node id and label are the canonical address; the edge
// weight is the traffic fraction and the packet count is an edge attribute.
inline std::string export_gexf(const DirectedGraph& g) {
  std::ostringstream x;
  x << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<gexf xmlns=\"http://gexf.net/1.3\" "
       "xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" "
       "xsi:schemaLocation=\"http://gexf.net/1.3 http://gexf.net/1.3/gexf.xsd\" version=\"1.3\">\n"
    << "  <meta>\n"
    << "    <creator>bacflow</creator>\n"
    << "    <description>BACnet communication flows; edge weight is the fraction of total "
       "traffic</description>\n"
    << "  </meta>\n"
    << "  <graph mode=\"static\" defaultedgetype=\"directed\">\n"
    << "    <attributes class=\"edge\" mode=\"static\">\n"
    << "      <attribute id=\"packets\" title=\"packets\" type=\"long\"/>\n"
    << "    </attributes>\n";
  x << "    <nodes count=\"" << g.nodes.size() << "\">\n";
  for (const auto& n : g.nodes) {
    auto label = detail::xml_escape(n.to_string());
    x << "      <node id=\"" << label << "\" label=\"" << label << "\"/>\n";
  }
  x << "    </nodes>\n";
  x << "    <edges count=\"" << g.edges.size() << "\">\n";
  std::size_t id = 0;
  for (const auto& e : g.edges) {
    x << "      <edge id=\"" << id++ << "\" source=\"" << detail::xml_escape(e.src.to_string())
      << "\" target=\"" << detail::xml_escape(e.dst.to_string()) << "\" weight=\""
      << detail::fmt_double(e.weight, "%.17g") << "\">\n"
      << "        <attvalues>\n"
      << "          <attvalue for=\"packets\" value=\"" << e.packet_count << "\"/>\n"
      << "        </attvalues>\n"
      << "      </edge>\n";
  }
  x << "    </edges>\n"
    << "  </graph>\n"
    << "</gexf>\n";
  return x.str();
}

inline nlohmann::json graph_to_json(const DirectedGraph& g) {
  nlohmann::json nodes = nlohmann::json::array(), edges = nlohmann::json::array();
  for (const auto& n : g.nodes) {
    auto label = n.to_string();
    nlohmann::json node{{"id", label}, {"label", label}};
    if (auto it = g.node_first_seen.find(label); it != g.node_first_seen.end())
      node["first_seen"] = format_iso8601(it->second);
    nodes.push_back(std::move(node));
  }
  for (const auto& e : g.edges) {
    edges.push_back({{"source", e.src.to_string()},
                     {"target", e.dst.to_string()},
                     {"weight", e.weight},
                     {"packets", e.packet_count},
                     {"first_seen", format_iso8601(e.first_seen)}});
  }
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}, {"total_packets", g.total_packets()}};
}

}  // namespace bacflow
