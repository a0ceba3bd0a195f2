#pragma once

// BACnet/IP frame decoding: Ethernet -> IPv4 -> UDP -> BVLL (BVLC header,
// optional NPDU, optional APDU summary). Every function here is a pure
// function of its arguments.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bacflow/errors.hpp"
#include "bacflow/timestamp.hpp"

namespace bacflow {

using Octets = std::vector<std::uint8_t>;
using OctetSpan = std::span<const std::uint8_t>;

namespace bvlc {
inline constexpr std::uint8_t kTypeBacnetIp = 0x81;
inline constexpr std::uint8_t kForwardedNpdu = 0x04;
inline constexpr std::uint8_t kOriginalUnicastNpdu = 0x0A;
inline constexpr std::uint8_t kOriginalBroadcastNpdu = 0x0B;
inline constexpr std::size_t kHeaderSize = 4;

inline constexpr bool carries_npdu(std::uint8_t function) {
  return function == kForwardedNpdu || function == kOriginalUnicastNpdu ||
         function == kOriginalBroadcastNpdu;
}
}  // namespace bvlc

namespace npci {
inline constexpr std::uint8_t kNetworkMessage = 0x80;
inline constexpr std::uint8_t kDestinationSpecified = 0x20;
inline constexpr std::uint8_t kSourceSpecified = 0x08;
}  // namespace npci

inline constexpr std::uint16_t kDefaultBacnetPort = 0xBAC0;
inline constexpr std::uint16_t kGlobalBroadcastNetwork = 0xFFFF;

namespace detail {
inline std::uint16_t be16(OctetSpan s, std::size_t at) {
  return static_cast<std::uint16_t>((s[at] << 8) | s[at + 1]);
}

inline std::string hex(OctetSpan s) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(s.size() * 2);
  for (auto b : s) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xF]);
  }
  return out;
}

inline std::optional<Octets> unhex(std::string_view text) {
  if (text.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Octets out;
  for (std::size_t i = 0; i < text.size(); i += 2) {
    int hi = nibble(text[i]), lo = nibble(text[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
  }
  return out;
}
}  // namespace detail

struct MacAddress {
  std::array<std::uint8_t, 6> octets{};

  bool is_broadcast() const {
    for (auto b : octets)
      if (b != 0xFF) return false;
    return true;
  }

  std::string to_string() const {
    char buf[18];
    std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", octets[0], octets[1], octets[2],
                  octets[3], octets[4], octets[5]);
    return buf;
  }

  auto operator<=>(const MacAddress&) const = default;
};

// Annex J B/IP address: 4-octet IPv4 address + 2-octet UDP port.
struct BacnetIpAddress {
  std::array<std::uint8_t, 4> ip{};
  std::uint16_t port = kDefaultBacnetPort;

  std::string to_string() const {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u:%u", ip[0], ip[1], ip[2], ip[3], port);
    return buf;
  }

  auto operator<=>(const BacnetIpAddress&) const = default;
};

struct MsTpAddress {
  std::uint8_t mac = 0;
  auto operator<=>(const MsTpAddress&) const = default;
};

// Any other address length, kept verbatim.
struct RawAddress {
  Octets octets;
  auto operator<=>(const RawAddress&) const = default;
};

// Synthetic endpoint for broadcast destinations (all-FF MAC, original
// broadcast NPDU, DLEN = 0, or DNET = 0xFFFF).
struct BroadcastAddress {
  auto operator<=>(const BroadcastAddress&) const = default;
};

struct BacnetAddress {
  std::variant<BacnetIpAddress, MsTpAddress, RawAddress, BroadcastAddress> value;
  std::optional<std::uint16_t> network;

  bool is_broadcast() const { return std::holds_alternative<BroadcastAddress>(value); }

  // Canonical text: "a.b.c.d:port", "0xNN", "raw:<hex>", "broadcast",
  // optionally prefixed by "<network>/".
  std::string to_string() const {
    std::string prefix = network ? std::to_string(*network) + "/" : std::string{};
    return prefix + std::visit(
                        [](const auto& a) -> std::string {
                          using T = std::decay_t<decltype(a)>;
                          if constexpr (std::is_same_v<T, BacnetIpAddress>) {
                            return a.to_string();
                          } else if constexpr (std::is_same_v<T, MsTpAddress>) {
                            char buf[8];
                            std::snprintf(buf, sizeof buf, "0x%02x", a.mac);
                            return buf;
                          } else if constexpr (std::is_same_v<T, RawAddress>) {
                            return "raw:" + detail::hex(a.octets);
                          } else {
                            return "broadcast";
                          }
                        },
                        value);
  }

  static std::optional<BacnetAddress> parse(std::string_view text);

  auto operator<=>(const BacnetAddress&) const = default;
};

inline BacnetAddress broadcast_address() { return BacnetAddress{BroadcastAddress{}, std::nullopt}; }

inline std::optional<BacnetAddress> BacnetAddress::parse(std::string_view text) {
  BacnetAddress out;
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    unsigned net = 0;
    if (slash == 0 || slash > 5) return std::nullopt;
    for (char c : text.substr(0, slash)) {
      if (c < '0' || c > '9') return std::nullopt;
      net = net * 10 + static_cast<unsigned>(c - '0');
    }
    if (net > 0xFFFF) return std::nullopt;
    out.network = static_cast<std::uint16_t>(net);
    text.remove_prefix(slash + 1);
  }
  if (text == "broadcast") {
    out.value = BroadcastAddress{};
    return out;
  }
  if (text.starts_with("raw:")) {
    auto octets = detail::unhex(text.substr(4));
    if (!octets) return std::nullopt;
    out.value = RawAddress{std::move(*octets)};
    return out;
  }
  if (text.starts_with("0x")) {
    auto octets = detail::unhex(text.substr(2));
    if (!octets || octets->size() != 1) return std::nullopt;
    out.value = MsTpAddress{(*octets)[0]};
    return out;
  }
  BacnetIpAddress ip;
  unsigned parts[5] = {0, 0, 0, 0, 0};
  std::size_t idx = 0, digits = 0;
  for (char c : text) {
    if (c >= '0' && c <= '9') {
      parts[idx] = parts[idx] * 10 + static_cast<unsigned>(c - '0');
      if (++digits > 5) return std::nullopt;
    } else if ((c == '.' && idx < 3) || (c == ':' && idx == 3)) {
      if (digits == 0) return std::nullopt;
      ++idx;
      digits = 0;
    } else {
      return std::nullopt;
    }
  }
  if (idx != 4 || digits == 0) return std::nullopt;
  for (int i = 0; i < 4; ++i) {
    if (parts[i] > 255) return std::nullopt;
    ip.ip[i] = static_cast<std::uint8_t>(parts[i]);
  }
  if (parts[4] > 0xFFFF) return std::nullopt;
  ip.port = static_cast<std::uint16_t>(parts[4]);
  out.value = ip;
  return out;
}

inline BacnetIpAddress decode_bip_address(OctetSpan octets) {
  if (octets.size() != 6)
    throw MalformedPacket(Layer::Npdu, octets.size(), "B/IP address must be 6 octets");
  BacnetIpAddress a;
  for (int i = 0; i < 4; ++i) a.ip[i] = octets[i];
  a.port = detail::be16(octets, 4);
  return a;
}

inline std::array<std::uint8_t, 6> encode_bip_address(const BacnetIpAddress& a) {
  return {a.ip[0], a.ip[1], a.ip[2], a.ip[3], static_cast<std::uint8_t>(a.port >> 8),
          static_cast<std::uint8_t>(a.port & 0xFF)};
}

// Decodes a DADR/SADR by its length: 6 -> B/IP, 1 -> MS/TP, otherwise raw.
inline BacnetAddress decode_npdu_address(std::uint16_t network, OctetSpan octets) {
  BacnetAddress a;
  a.network = network;
  if (octets.size() == 6)
    a.value = decode_bip_address(octets);
  else if (octets.size() == 1)
    a.value = MsTpAddress{octets[0]};
  else
    a.value = RawAddress{Octets(octets.begin(), octets.end())};
  return a;
}

inline Octets address_octets(const BacnetAddress& a) {
  return std::visit(
      [](const auto& v) -> Octets {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, BacnetIpAddress>) {
          auto e = encode_bip_address(v);
          return Octets(e.begin(), e.end());
        } else if constexpr (std::is_same_v<T, MsTpAddress>) {
          return Octets{v.mac};
        } else if constexpr (std::is_same_v<T, RawAddress>) {
          return v.octets;
        } else {
          return Octets{};
        }
      },
      a.value);
}

struct BvlcHeader {
  std::uint8_t type = bvlc::kTypeBacnetIp;
  std::uint8_t function = 0;
  std::uint16_t length = bvlc::kHeaderSize;  // whole BVLL, header included

  auto operator<=>(const BvlcHeader&) const = default;
};

struct BvlcParse {
  BvlcHeader header;
  OctetSpan remainder;  // length - 4 octets following the header
};

inline BvlcParse parse_bvlc(OctetSpan payload) {
  if (payload.size() < bvlc::kHeaderSize)
    throw MalformedPacket(Layer::Bvlc, payload.size(), "BVLC header needs 4 octets");
  BvlcHeader h{payload[0], payload[1], detail::be16(payload, 2)};
  if (h.length < bvlc::kHeaderSize)
    throw MalformedPacket(Layer::Bvlc, 3, "BVLC length below header size");
  if (h.length > payload.size())
    throw MalformedPacket(Layer::Bvlc, 3, "BVLC length exceeds available octets");
  return {h, payload.subspan(bvlc::kHeaderSize, h.length - bvlc::kHeaderSize)};
}

// Header followed by `remainder`; the length field is taken from `header`.
inline Octets encode_bvll(const BvlcHeader& header, OctetSpan remainder) {
  Octets out{header.type, header.function, static_cast<std::uint8_t>(header.length >> 8),
             static_cast<std::uint8_t>(header.length & 0xFF)};
  out.insert(out.end(), remainder.begin(), remainder.end());
  return out;
}

struct Npdu {
  std::uint8_t version = 1;
  std::uint8_t control = 0;
  std::optional<BacnetAddress> destination;
  std::optional<std::uint8_t> hop_count;
  std::optional<BacnetAddress> source;
  std::optional<std::uint8_t> message_type;
  Octets payload;

  bool is_network_message() const { return (control & npci::kNetworkMessage) != 0; }

  bool operator==(const Npdu&) const = default;
};

inline Npdu parse_npdu(OctetSpan o) {
  if (o.empty()) throw MalformedPacket(Layer::Npdu, 0, "empty NPDU");
  if (o.size() < 2) throw MalformedPacket(Layer::Npdu, 1, "missing NPCI control octet");
  Npdu n;
  n.version = o[0];
  n.control = o[1];
  std::size_t pos = 2;

  auto read_address = [&](const char* which) {
    if (pos + 3 > o.size())
      throw MalformedPacket(Layer::Npdu, pos + 2, std::string(which) + " network/length truncated");
    std::uint16_t net = detail::be16(o, pos);
    std::size_t len = o[pos + 2];
    pos += 3;
    if (pos + len > o.size())
      throw MalformedPacket(Layer::Npdu, pos - 1, std::string(which) + " length exceeds NPDU");
    auto addr = decode_npdu_address(net, o.subspan(pos, len));
    pos += len;
    return addr;
  };

  if (n.control & npci::kDestinationSpecified) n.destination = read_address("DLEN");
  if (n.control & npci::kSourceSpecified) n.source = read_address("SLEN");
  if (n.destination) {
    if (pos >= o.size()) throw MalformedPacket(Layer::Npdu, pos, "hop count missing");
    n.hop_count = o[pos++];
  }
  if (n.is_network_message()) {
    if (pos >= o.size()) throw MalformedPacket(Layer::Npdu, pos, "message type missing");
    n.message_type = o[pos++];
  }
  n.payload.assign(o.begin() + static_cast<std::ptrdiff_t>(pos), o.end());
  return n;
}

inline Octets encode_npdu(const Npdu& n) {
  Octets out{n.version, n.control};
  auto put_address = [&](const BacnetAddress& a) {
    std::uint16_t net = a.network.value_or(0);
    auto octets = address_octets(a);
    out.push_back(static_cast<std::uint8_t>(net >> 8));
    out.push_back(static_cast<std::uint8_t>(net & 0xFF));
    out.push_back(static_cast<std::uint8_t>(octets.size()));
    out.insert(out.end(), octets.begin(), octets.end());
  };
  if (n.destination) put_address(*n.destination);
  if (n.source) put_address(*n.source);
  if (n.destination) out.push_back(n.hop_count.value_or(0xFF));
  if (n.message_type) out.push_back(*n.message_type);
  out.insert(out.end(), n.payload.begin(), n.payload.end());
  return out;
}

namespace pdu_type {
inline constexpr std::uint8_t kConfirmedRequest = 0x0;
inline constexpr std::uint8_t kUnconfirmedRequest = 0x1;
inline constexpr std::uint8_t kSimpleAck = 0x2;
inline constexpr std::uint8_t kComplexAck = 0x3;
}  // namespace pdu_type

struct ApduSummary {
  std::uint8_t pdu_type = 0;  // high nibble of the first APDU octet
  auto operator<=>(const ApduSummary&) const = default;
};

inline ApduSummary parse_apdu_type(OctetSpan octets) {
  if (octets.empty()) throw MalformedPacket(Layer::Apdu, 0, "empty APDU");
  return ApduSummary{static_cast<std::uint8_t>(octets[0] >> 4)};
}

struct ParsedPacket {
  Timestamp timestamp{};
  MacAddress src_mac;
  MacAddress dst_mac;
  BacnetIpAddress udp_src;  // IP:port from the IP/UDP headers
  BacnetIpAddress udp_dst;
  BacnetAddress src;  // effective endpoints used for flow analysis
  BacnetAddress dst;
  BvlcHeader bvlc;
  std::optional<BacnetIpAddress> forwarded_origin;  // BVLC 0x04 only
  std::optional<Npdu> npdu;
  std::optional<ApduSummary> apdu;
  std::size_t total_length = 0;  // octets in the BVLL
};

// NPDU SADR/DADR when present, otherwise the UDP endpoints. Broadcasts
// (DLEN 0, DNET 0xFFFF, original-broadcast BVLC, all-FF MAC) map to the
// broadcast endpoint; a remote broadcast keeps its network number.
inline void assign_effective_endpoints(ParsedPacket& p) {
  if (p.npdu && p.npdu->source)
    p.src = *p.npdu->source;
  else
    p.src = BacnetAddress{p.udp_src, std::nullopt};

  if (p.npdu && p.npdu->destination) {
    const auto& d = *p.npdu->destination;
    bool empty = address_octets(d).empty();
    if (d.network == kGlobalBroadcastNetwork)
      p.dst = broadcast_address();
    else if (empty)
      p.dst = BacnetAddress{BroadcastAddress{}, d.network};
    else
      p.dst = d;
  } else if (p.bvlc.function == bvlc::kOriginalBroadcastNpdu || p.dst_mac.is_broadcast()) {
    p.dst = broadcast_address();
  } else {
    p.dst = BacnetAddress{p.udp_dst, std::nullopt};
  }
}

// Returns std::nullopt for frames that are not UDP carrying a BVLL.
inline std::optional<ParsedPacket> parse_frame(OctetSpan frame, Timestamp timestamp) {
  if (frame.size() < 14) throw MalformedPacket(Layer::Ethernet, 13, "short Ethernet header");
  ParsedPacket p;
  p.timestamp = timestamp;
  std::copy_n(frame.begin(), 6, p.dst_mac.octets.begin());
  std::copy_n(frame.begin() + 6, 6, p.src_mac.octets.begin());
  std::uint16_t ethertype = detail::be16(frame, 12);
  std::size_t pos = 14;
  while (ethertype == 0x8100 || ethertype == 0x88A8) {
    if (pos + 4 > frame.size()) throw MalformedPacket(Layer::Ethernet, pos + 3, "truncated VLAN tag");
    ethertype = detail::be16(frame, pos + 2);
    pos += 4;
  }
  if (ethertype != 0x0800) return std::nullopt;

  auto ip = frame.subspan(pos);
  if (ip.size() < 20) throw MalformedPacket(Layer::Ip, ip.size(), "short IPv4 header");
  if ((ip[0] >> 4) != 4) throw MalformedPacket(Layer::Ip, 0, "IPv4 ethertype with other version");
  std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0F) * 4;
  if (ihl < 20 || ihl > ip.size()) throw MalformedPacket(Layer::Ip, 0, "bad IHL");
  std::size_t total = detail::be16(ip, 2);
  if (total < ihl || total > ip.size()) throw MalformedPacket(Layer::Ip, 3, "IP total length");
  if (ip[9] != 17) return std::nullopt;
  std::uint16_t frag = detail::be16(ip, 6);
  if ((frag & 0x1FFF) != 0 || (frag & 0x2000) != 0) return std::nullopt;
  std::copy_n(ip.begin() + 12, 4, p.udp_src.ip.begin());
  std::copy_n(ip.begin() + 16, 4, p.udp_dst.ip.begin());

  auto udp = ip.subspan(ihl, total - ihl);
  if (udp.size() < 8) throw MalformedPacket(Layer::Udp, udp.size(), "short UDP header");
  std::size_t udp_len = detail::be16(udp, 4);
  if (udp_len < 8 || udp_len > udp.size()) throw MalformedPacket(Layer::Udp, 5, "UDP length");
  p.udp_src.port = detail::be16(udp, 0);
  p.udp_dst.port = detail::be16(udp, 2);

  auto payload = udp.subspan(8, udp_len - 8);
  if (payload.empty() || payload[0] != bvlc::kTypeBacnetIp) return std::nullopt;

  auto [header, remainder] = parse_bvlc(payload);
  p.bvlc = header;
  p.total_length = header.length;

  if (bvlc::carries_npdu(header.function)) {
    auto npdu_octets = remainder;
    if (header.function == bvlc::kForwardedNpdu) {
      if (remainder.size() < 6)
        throw MalformedPacket(Layer::Bvlc, bvlc::kHeaderSize + 5, "forwarded-NPDU origin truncated");
      p.forwarded_origin = decode_bip_address(remainder.first(6));
      npdu_octets = remainder.subspan(6);
    }
    p.npdu = parse_npdu(npdu_octets);
    if (!p.npdu->is_network_message()) p.apdu = parse_apdu_type(p.npdu->payload);
  }
  assign_effective_endpoints(p);
  return p;
}

}  // namespace bacflow
