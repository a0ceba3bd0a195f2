#pragma once

// Builds Ethernet/IPv4/UDP frames around a BVLL. Used for synthetic captures
// and test fixtures.

#include <cstdint>
#include <optional>

#include "bacflow/packet_codec.hpp"

namespace bacflow {

struct FrameEndpoints {
  MacAddress src_mac;
  MacAddress dst_mac;
  BacnetIpAddress src;
  BacnetIpAddress dst;
  std::optional<std::uint16_t> vlan;
};

namespace detail {
inline void put16(Octets& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline std::uint16_t ipv4_checksum(OctetSpan header) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < header.size(); i += 2) sum += be16(header, i);
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}
}  // namespace detail

inline Octets build_udp_frame(const FrameEndpoints& ep, OctetSpan payload) {
  Octets f;
  f.insert(f.end(), ep.dst_mac.octets.begin(), ep.dst_mac.octets.end());
  f.insert(f.end(), ep.src_mac.octets.begin(), ep.src_mac.octets.end());
  if (ep.vlan) {
    detail::put16(f, 0x8100);
    detail::put16(f, *ep.vlan & 0x0FFF);
  }
  detail::put16(f, 0x0800);
  std::size_t ip_start = f.size();
  auto total = static_cast<std::uint16_t>(20 + 8 + payload.size());
  f.insert(f.end(), {0x45, 0x00});
  detail::put16(f, total);
  f.insert(f.end(), {0x00, 0x01, 0x00, 0x00, 0x40, 0x11, 0x00, 0x00});
  f.insert(f.end(), ep.src.ip.begin(), ep.src.ip.end());
  f.insert(f.end(), ep.dst.ip.begin(), ep.dst.ip.end());
  auto sum = detail::ipv4_checksum(OctetSpan(f).subspan(ip_start, 20));
  f[ip_start + 10] = static_cast<std::uint8_t>(sum >> 8);
  f[ip_start + 11] = static_cast<std::uint8_t>(sum & 0xFF);
  detail::put16(f, ep.src.port);
  detail::put16(f, ep.dst.port);
  detail::put16(f, static_cast<std::uint16_t>(8 + payload.size()));
  detail::put16(f, 0);  // UDP checksum optional over IPv4
  f.insert(f.end(), payload.begin(), payload.end());
  if (f.size() < 60) f.resize(60, 0);  // Ethernet minimum, padding
  return f;
}

// BVLL for an original-unicast NPDU carrying an APDU whose first octet
// encodes `pdu_type`. `apdu_size` >= 1 pads the APDU.
inline Octets build_application_bvll(std::uint8_t pdu_type, std::size_t apdu_size = 4,
                                     bool broadcast = false) {
  Npdu n;
  n.control = 0x04;  // expecting reply
  n.payload.assign(apdu_size == 0 ? 1 : apdu_size, 0x00);
  n.payload[0] = static_cast<std::uint8_t>(pdu_type << 4);
  auto npdu = encode_npdu(n);
  BvlcHeader h{bvlc::kTypeBacnetIp,
               broadcast ? bvlc::kOriginalBroadcastNpdu : bvlc::kOriginalUnicastNpdu,
               static_cast<std::uint16_t>(bvlc::kHeaderSize + npdu.size())};
  return encode_bvll(h, npdu);
}

inline Octets build_network_bvll(std::uint8_t message_type, bool broadcast = true) {
  Npdu n;
  n.control = npci::kNetworkMessage;
  n.message_type = message_type;
  auto npdu = encode_npdu(n);
  BvlcHeader h{bvlc::kTypeBacnetIp,
               broadcast ? bvlc::kOriginalBroadcastNpdu : bvlc::kOriginalUnicastNpdu,
               static_cast<std::uint16_t>(bvlc::kHeaderSize + npdu.size())};
  return encode_bvll(h, npdu);
}

}  // namespace bacflow
