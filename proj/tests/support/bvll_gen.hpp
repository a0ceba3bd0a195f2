#pragma once

// Random well-formed BVLLs (unicast, broadcast and forwarded) and a
// parse-then-encode pass for round-trip checks.

#include <random>

#include "bacflow/packet_codec.hpp"

namespace testsupport {

using namespace bacflow;

inline Npdu random_npdu(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> byte(0, 255), coin(0, 1), small(0, 6);
  Npdu n;
  n.control = static_cast<std::uint8_t>(coin(rng) ? 0x80 : 0x00);
  if (coin(rng)) n.control |= 0x04;  // expecting reply
  n.control |= static_cast<std::uint8_t>(byte(rng) & 0x03);  // priority
  if (coin(rng)) {
    n.control |= 0x20;
    Octets a(static_cast<std::size_t>(small(rng)));
    for (auto& b : a) b = static_cast<std::uint8_t>(byte(rng));
    n.destination = decode_npdu_address(static_cast<std::uint16_t>(byte(rng) * 256 + byte(rng)), a);
    n.hop_count = static_cast<std::uint8_t>(byte(rng));
  }
  if (coin(rng)) {
    n.control |= 0x08;
    Octets a(static_cast<std::size_t>(1 + small(rng)));
    for (auto& b : a) b = static_cast<std::uint8_t>(byte(rng));
    n.source = decode_npdu_address(static_cast<std::uint16_t>(1 + byte(rng)), a);
  }
  if (n.is_network_message()) n.message_type = static_cast<std::uint8_t>(byte(rng));
  n.payload.resize(static_cast<std::size_t>(n.is_network_message() ? small(rng) : 1 + small(rng)));
  for (auto& b : n.payload) b = static_cast<std::uint8_t>(byte(rng));
  return n;
}

struct BvllFixture {
  Octets bvll;
  Npdu npdu;
  std::optional<BacnetIpAddress> origin;  // forwarded only
};

inline BvllFixture random_bvll(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> byte(0, 255), kind(0, 2);
  BvllFixture f;
  f.npdu = random_npdu(rng);
  auto npdu = encode_npdu(f.npdu);
  Octets body;
  std::uint8_t fn = bvlc::kOriginalUnicastNpdu;
  switch (kind(rng)) {
    case 0: break;
    case 1: fn = bvlc::kOriginalBroadcastNpdu; break;
    default: {
      fn = bvlc::kForwardedNpdu;
      std::array<std::uint8_t, 6> o;
      for (auto& b : o) b = static_cast<std::uint8_t>(byte(rng));
      f.origin = decode_bip_address(o);
      body.assign(o.begin(), o.end());
    }
  }
  body.insert(body.end(), npdu.begin(), npdu.end());
  f.bvll = encode_bvll({bvlc::kTypeBacnetIp, fn, static_cast<std::uint16_t>(4 + body.size())}, body);
  return f;
}

// Decodes every layer of `bvll` and encodes the result again.
inline Octets reencode_bvll(OctetSpan bvll) {
  auto [h, rest] = parse_bvlc(bvll);
  Octets body;
  if (h.function == bvlc::kForwardedNpdu) {
    auto origin = encode_bip_address(decode_bip_address(rest.first(6)));
    body.assign(origin.begin(), origin.end());
    rest = rest.subspan(6);
  }
  auto npdu = encode_npdu(parse_npdu(rest));
  body.insert(body.end(), npdu.begin(), npdu.end());
  return encode_bvll(h, body);
}

}  // namespace testsupport
