#pragma once

// Connections and typed flows: (source, destination, layer, type code) keys,
// running inter-arrival statistics and the periodic / sporadic verdict.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "bacflow/errors.hpp"
#include "bacflow/packet_codec.hpp"
#include "bacflow/timestamp.hpp"

namespace bacflow {

enum class FlowLayer { NetworkMessage, ApplicationData };

inline std::string_view to_string(FlowLayer l) {
  return l == FlowLayer::NetworkMessage ? "network-message" : "application-data";
}

inline std::optional<FlowLayer> parse_flow_layer(std::string_view s) {
  if (s == "network-message") return FlowLayer::NetworkMessage;
  if (s == "application-data") return FlowLayer::ApplicationData;
  return std::nullopt;
}

struct FlowKey {
  BacnetAddress src;
  BacnetAddress dst;
  FlowLayer layer = FlowLayer::ApplicationData;
  std::uint8_t type_code = 0;  // message type, or PDU type nibble

  auto operator<=>(const FlowKey&) const = default;

  std::string type_string() const {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%02x", type_code);
    return buf;
  }

  std::string to_string() const {
    return src.to_string() + " -> " + dst.to_string() + " " + std::string(bacflow::to_string(layer)) +
           " " + type_string();
  }
};

// std::nullopt means Untypable: no NPDU to take a type from.
inline std::optional<FlowKey> flow_key(const ParsedPacket& p) {
  if (!p.npdu) return std::nullopt;
  if (p.npdu->is_network_message() && p.npdu->message_type)
    return FlowKey{p.src, p.dst, FlowLayer::NetworkMessage, *p.npdu->message_type};
  if (p.apdu) return FlowKey{p.src, p.dst, FlowLayer::ApplicationData, p.apdu->pdu_type};
  return std::nullopt;
}

// Running moments of the inter-arrival gaps and packet lengths of one flow.
// Gaps use Welford's update; merging uses the pairwise combination, so
// sharded tables merge exactly.
class FlowStats {
 public:
  FlowStats() = default;

  // `ts` must not precede last_ts().
  void add(Timestamp ts, std::size_t length) {
    if (count_ == 0) {
      first_ = ts;
    } else {
      double gap = to_seconds(ts - last_);
      std::size_t n = count_;  // gaps after this one
      double delta = gap - gap_mean_;
      gap_mean_ += delta / static_cast<double>(n);
      gap_m2_ += delta * (gap - gap_mean_);
    }
    last_ = ts;
    ++count_;
    double len = static_cast<double>(length);
    double d = len - len_mean_;
    len_mean_ += d / static_cast<double>(count_);
    len_m2_ += d * (len - len_mean_);
  }

  std::size_t count() const { return count_; }
  std::size_t gap_count() const { return count_ == 0 ? 0 : count_ - 1; }
  Timestamp first_ts() const { return first_; }
  Timestamp last_ts() const { return last_; }

  // Mean inter-arrival time in seconds; undefined below two packets or when
  // every gap is zero.
  std::optional<double> tau() const {
    if (count_ < 2 || !(gap_mean_ > 0.0)) return std::nullopt;
    return gap_mean_;
  }

  // Sample (n-1) standard deviation of the gaps; 0 for a single gap.
  std::optional<double> sigma() const {
    if (count_ < 2) return std::nullopt;
    if (count_ == 2) return 0.0;
    return std::sqrt(std::max(0.0, gap_m2_ / static_cast<double>(count_ - 2)));
  }

  double mean_length() const { return len_mean_; }
  double sd_length() const {
    return count_ < 2 ? 0.0 : std::sqrt(std::max(0.0, len_m2_ / static_cast<double>(count_ - 1)));
  }

  double gap_mean() const { return gap_mean_; }
  double gap_m2() const { return gap_m2_; }
  double length_m2() const { return len_m2_; }

  static FlowStats from_moments(std::size_t count, Timestamp first, Timestamp last, double gap_mean,
                                double gap_m2, double len_mean, double len_m2) {
    FlowStats s;
    s.count_ = count;
    s.first_ = first;
    s.last_ = last;
    s.gap_mean_ = gap_mean;
    s.gap_m2_ = gap_m2;
    s.len_mean_ = len_mean;
    s.len_m2_ = len_m2;
    return s;
  }

  // Statistics of the union of two packet sets. When one set ends before the
  // other begins the bridging gap is included, which makes the result equal
  // to accumulating the concatenated stream.
  static FlowStats merge(FlowStats a, FlowStats b) {
    if (a.count_ == 0) return b;
    if (b.count_ == 0) return a;
    if (b.first_ < a.first_) std::swap(a, b);
    FlowStats out;
    out.count_ = a.count_ + b.count_;
    out.first_ = a.first_;
    out.last_ = std::max(a.last_, b.last_);

    struct Moments {
      double n, mean, m2;
    };
    auto combine = [](Moments x, Moments y) -> Moments {
      if (x.n == 0) return y;
      if (y.n == 0) return x;
      double n = x.n + y.n;
      double delta = y.mean - x.mean;
      return {n, x.mean + delta * y.n / n, x.m2 + y.m2 + delta * delta * x.n * y.n / n};
    };
    Moments gaps{static_cast<double>(a.gap_count()), a.gap_mean_, a.gap_m2_};
    if (a.last_ <= b.first_) gaps = combine(gaps, {1.0, to_seconds(b.first_ - a.last_), 0.0});
    gaps = combine(gaps, {static_cast<double>(b.gap_count()), b.gap_mean_, b.gap_m2_});
    out.gap_mean_ = gaps.mean;
    out.gap_m2_ = gaps.m2;

    auto lens = combine({static_cast<double>(a.count_), a.len_mean_, a.len_m2_},
                        {static_cast<double>(b.count_), b.len_mean_, b.len_m2_});
    out.len_mean_ = lens.mean;
    out.len_m2_ = lens.m2;
    return out;
  }

  bool operator==(const FlowStats&) const = default;

 private:
  std::size_t count_ = 0;
  Timestamp first_{};
  Timestamp last_{};
  double gap_mean_ = 0.0;
  double gap_m2_ = 0.0;
  double len_mean_ = 0.0;
  double len_m2_ = 0.0;
};

inline FlowStats accumulate(FlowStats stats, Timestamp ts, std::size_t length) {
  stats.add(ts, length);
  return stats;
}

struct ClassifierConfig {
  double periodic_ratio = 0.2;
  double sporadic_low = 0.5;
  double sporadic_high = 2.0;
  std::size_t min_samples = 10;
};

enum class FlowVerdict { Periodic, Sporadic, Unclassified };

inline std::string_view to_string(FlowVerdict v) {
  switch (v) {
    case FlowVerdict::Periodic: return "periodic";
    case FlowVerdict::Sporadic: return "sporadic";
    case FlowVerdict::Unclassified: return "unclassified";
  }
  return "?";
}

inline std::optional<FlowVerdict> parse_flow_verdict(std::string_view s) {
  if (s == "periodic") return FlowVerdict::Periodic;
  if (s == "sporadic") return FlowVerdict::Sporadic;
  if (s == "unclassified") return FlowVerdict::Unclassified;
  return std::nullopt;
}

struct FlowClass {
  FlowVerdict verdict = FlowVerdict::Unclassified;
  std::optional<double> lambda;  // events per second, sporadic only
  bool insufficient_data = false;

  bool operator==(const FlowClass&) const = default;
};

inline FlowClass classify(const FlowStats& stats, const ClassifierConfig& cfg = {}) {
  if (stats.count() < cfg.min_samples || stats.count() < 2)
    throw InsufficientData("flow has " + std::to_string(stats.count()) + " packets, need " +
                           std::to_string(cfg.min_samples));
  auto tau = stats.tau();
  auto sigma = stats.sigma();
  if (!tau || !sigma) return {};
  if (*sigma < cfg.periodic_ratio * *tau) return {FlowVerdict::Periodic, std::nullopt};
  if (*sigma >= cfg.sporadic_low * *tau && *sigma <= cfg.sporadic_high * *tau)
    return {FlowVerdict::Sporadic, 1.0 / *tau};
  return {};
}

// Like classify(), but flows below the sample minimum come back unclassified
// with insufficient_data set instead of throwing.
inline FlowClass classify_or_mark(const FlowStats& stats, const ClassifierConfig& cfg) {
  if (stats.count() < std::max<std::size_t>(cfg.min_samples, 2)) {
    FlowClass c;
    c.insufficient_data = true;
    return c;
  }
  return classify(stats, cfg);
}

struct FlowEntry {
  FlowStats stats;
  FlowClass cls;
};

class FlowTable {
 public:
  using Map = std::map<FlowKey, FlowEntry>;

  FlowEntry& operator[](const FlowKey& k) { return flows_[k]; }
  const FlowEntry* find(const FlowKey& k) const {
    auto it = flows_.find(k);
    return it == flows_.end() ? nullptr : &it->second;
  }
  const Map& flows() const { return flows_; }
  std::size_t size() const { return flows_.size(); }
  bool empty() const { return flows_.empty(); }

  std::size_t total_packets() const {
    std::size_t n = 0;
    for (const auto& [k, e] : flows_) n += e.stats.count();
    return n;
  }

  void classify_all(const ClassifierConfig& cfg) {
    for (auto& [k, e] : flows_) e.cls = classify_or_mark(e.stats, cfg);
  }

  // Exact for counts and moments; classification is recomputed.
  void merge(const FlowTable& other, const ClassifierConfig& cfg) {
    for (const auto& [k, e] : other.flows_) {
      auto& mine = flows_[k];
      mine.stats = FlowStats::merge(mine.stats, e.stats);
    }
    classify_all(cfg);
  }

 private:
  Map flows_;
};

// Feeds parsed packets into a FlowTable. Timestamps are sorted through a
// reorder buffer; packets older than anything already released (an
// inversion larger than the window) are counted as late and not accumulated.
class FlowTableBuilder {
 public:
  explicit FlowTableBuilder(std::chrono::nanoseconds reorder_window = std::chrono::seconds{1})
      : window_(reorder_window) {}

  void add(const ParsedPacket& p) {
    ++seen_;
    auto key = flow_key(p);
    if (!key) {
      ++untypable_;
      return;
    }
    if (released_any_ && p.timestamp < watermark_) {
      ++late_;
      return;
    }
    pending_.push(Pending{p.timestamp, seq_++, std::move(*key), p.total_length});
    if (p.timestamp > newest_) newest_ = p.timestamp;
    while (!pending_.empty() && pending_.top().ts <= newest_ - window_) release();
  }

  FlowTable finish(const ClassifierConfig& cfg) {
    while (!pending_.empty()) release();
    table_.classify_all(cfg);
    return std::move(table_);
  }

  std::size_t packets_seen() const { return seen_; }
  std::size_t untypable() const { return untypable_; }
  std::size_t late() const { return late_; }

 private:
  struct Pending {
    Timestamp ts;
    std::uint64_t seq;
    FlowKey key;
    std::size_t length;
    bool operator>(const Pending& o) const { return ts != o.ts ? ts > o.ts : seq > o.seq; }
  };

  void release() {
    const Pending& top = pending_.top();
    table_[top.key].stats.add(top.ts, top.length);
    watermark_ = top.ts;
    released_any_ = true;
    pending_.pop();
  }

  std::chrono::nanoseconds window_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pending_;
  FlowTable table_;
  Timestamp newest_{Timestamp::min()};
  Timestamp watermark_{};
  bool released_any_ = false;
  std::uint64_t seq_ = 0;
  std::size_t seen_ = 0;
  std::size_t untypable_ = 0;
  std::size_t late_ = 0;
};

namespace detail {
inline std::string fmt_double(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}
}  // namespace detail

// Rows by descending packet count, ties in key order.
inline std::vector<const FlowTable::Map::value_type*> rows_by_count(const FlowTable& table) {
  std::vector<const FlowTable::Map::value_type*> rows;
  for (const auto& kv : table.flows()) rows.push_back(&kv);
  std::stable_sort(rows.begin(), rows.end(),
                   [](auto* a, auto* b) { return a->second.stats.count() > b->second.stats.count(); });
  return rows;
}

// Columns: source, destination, layer, type, count, tau, sigma, class.
inline void write_flow_csv(std::ostream& out, const FlowTable& table) {
  out << "source,destination,layer,type,count,tau,sigma,class\n";
  for (const auto* kv : rows_by_count(table)) {
    const auto& [k, e] = *kv;
    auto tau = e.stats.tau();
    auto sigma = e.stats.sigma();
    out << k.src.to_string() << ',' << k.dst.to_string() << ',' << to_string(k.layer) << ','
        << k.type_string() << ',' << e.stats.count() << ',' << (tau ? detail::fmt_double(*tau) : "")
        << ',' << (sigma ? detail::fmt_double(*sigma) : "") << ',' << to_string(e.cls.verdict) << '\n';
  }
}

}  // namespace bacflow
