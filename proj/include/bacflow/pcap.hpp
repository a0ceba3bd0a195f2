#pragma once

// Classic libpcap capture files: both byte orders, microsecond (0xA1B2C3D4)
// and nanosecond (0xA1B23C4D) timestamp variants. pcapng is rejected.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "bacflow/errors.hpp"
#include "bacflow/packet_codec.hpp"
#include "bacflow/timestamp.hpp"

namespace bacflow {

struct CaptureRecord {
  Timestamp timestamp{};
  Octets frame;
};

namespace pcap {
inline constexpr std::uint32_t kMagicMicros = 0xA1B2C3D4;
inline constexpr std::uint32_t kMagicNanos = 0xA1B23C4D;
inline constexpr std::uint32_t kMagicPcapng = 0x0A0D0D0A;
inline constexpr std::uint32_t kLinkEthernet = 1;
inline constexpr std::size_t kGlobalHeaderSize = 24;
inline constexpr std::size_t kRecordHeaderSize = 16;
}  // namespace pcap

class PcapReader {
 public:
  explicit PcapReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open " + path.string());
    std::error_code ec;
    remaining_ = std::filesystem::file_size(path, ec);
    if (ec) throw std::runtime_error("cannot stat " + path.string());

    unsigned char header[pcap::kGlobalHeaderSize];
    std::size_t got = read_some(header, sizeof header);
    if (got < 4) throw UnsupportedFormat(path.string() + ": too short for a pcap magic number");
    std::uint32_t le = load_le32(header);
    std::uint32_t be = load_be32(header);
    if (le == pcap::kMagicPcapng)
      throw UnsupportedFormat(path.string() + ": pcapng is not supported, convert to classic pcap",
                              true);
    if (le == pcap::kMagicMicros || le == pcap::kMagicNanos) {
      big_endian_ = false;
      nanos_ = le == pcap::kMagicNanos;
    } else if (be == pcap::kMagicMicros || be == pcap::kMagicNanos) {
      big_endian_ = true;
      nanos_ = be == pcap::kMagicNanos;
    } else {
      throw UnsupportedFormat(path.string() + ": unrecognized pcap magic number");
    }
    if (got < sizeof header) throw TruncatedFile(path.string() + ": truncated global header", 0);
    link_type_ = load32(header + 20);
    if (link_type_ != pcap::kLinkEthernet)
      throw UnsupportedFormat(path.string() + ": link type " + std::to_string(link_type_) +
                              " is not Ethernet");
  }

  // Next record in file order, std::nullopt at a clean end of file. A
  // partial trailing record throws TruncatedFile after every complete
  // record has been returned.
  std::optional<CaptureRecord> next() {
    unsigned char rh[pcap::kRecordHeaderSize];
    std::size_t got = read_some(rh, sizeof rh);
    if (got == 0) return std::nullopt;
    if (got < sizeof rh) throw truncated();
    std::uint32_t sec = load32(rh), frac = load32(rh + 4), incl = load32(rh + 8);
    if (incl > remaining_) throw truncated();
    CaptureRecord rec;
    rec.frame.resize(incl);
    if (read_some(rec.frame.data(), incl) < incl) throw truncated();
    std::int64_t ns = static_cast<std::int64_t>(sec) * 1'000'000'000 +
                      static_cast<std::int64_t>(frac) * (nanos_ ? 1 : 1000);
    rec.timestamp = Timestamp{std::chrono::nanoseconds{ns}};
    if (count_ > 0 && rec.timestamp < last_) ++out_of_order_;
    last_ = rec.timestamp;
    ++count_;
    return rec;
  }

  bool big_endian() const { return big_endian_; }
  bool nanosecond() const { return nanos_; }
  std::uint32_t link_type() const { return link_type_; }
  std::size_t records_read() const { return count_; }
  // Records whose timestamp precedes the previous record's.
  std::size_t out_of_order() const { return out_of_order_; }

 private:
  std::size_t read_some(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    auto got = static_cast<std::size_t>(in_.gcount());
    remaining_ -= std::min<std::uintmax_t>(remaining_, got);
    return got;
  }

  TruncatedFile truncated() const {
    return TruncatedFile(path_.string() + ": partial record after " + std::to_string(count_) +
                             " complete records",
                         count_);
  }

  static std::uint32_t load_le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  }
  static std::uint32_t load_be32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[3]) | static_cast<std::uint32_t>(p[2]) << 8 |
           static_cast<std::uint32_t>(p[1]) << 16 | static_cast<std::uint32_t>(p[0]) << 24;
  }
  std::uint32_t load32(const unsigned char* p) const { return big_endian_ ? load_be32(p) : load_le32(p); }

  std::filesystem::path path_;
  std::ifstream in_;
  std::uintmax_t remaining_ = 0;
  bool big_endian_ = false;
  bool nanos_ = false;
  std::uint32_t link_type_ = 0;
  std::size_t count_ = 0;
  std::size_t out_of_order_ = 0;
  Timestamp last_{};
};

struct PcapWriterOptions {
  bool nanosecond = false;
  bool big_endian = false;
  std::uint32_t snaplen = 65535;
};

class PcapWriter {
 public:
  explicit PcapWriter(const std::filesystem::path& path, PcapWriterOptions opts = {})
      : out_(path, std::ios::binary | std::ios::trunc), opts_(opts) {
    if (!out_) throw std::runtime_error("cannot create " + path.string());
    put32(opts_.nanosecond ? pcap::kMagicNanos : pcap::kMagicMicros);
    put16(2);
    put16(4);
    put32(0);  // thiszone
    put32(0);  // sigfigs
    put32(opts_.snaplen);
    put32(pcap::kLinkEthernet);
  }

  void write(const CaptureRecord& rec) { write(rec.timestamp, rec.frame); }

  void write(Timestamp ts, OctetSpan frame) {
    auto ns = ts.time_since_epoch().count();
    auto sec = ns / 1'000'000'000;
    auto rem = ns % 1'000'000'000;
    if (rem < 0) {
      rem += 1'000'000'000;
      --sec;
    }
    put32(static_cast<std::uint32_t>(sec));
    put32(static_cast<std::uint32_t>(opts_.nanosecond ? rem : rem / 1000));
    put32(static_cast<std::uint32_t>(frame.size()));
    put32(static_cast<std::uint32_t>(frame.size()));
    out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
  }

  void flush() { out_.flush(); }

 private:
  void put(std::uint32_t v, int bytes) {
    unsigned char b[4];
    for (int i = 0; i < bytes; ++i) {
      int shift = opts_.big_endian ? 8 * (bytes - 1 - i) : 8 * i;
      b[i] = static_cast<unsigned char>(v >> shift);
    }
    out_.write(reinterpret_cast<const char*>(b), bytes);
  }
  void put32(std::uint32_t v) { put(v, 4); }
  void put16(std::uint16_t v) { put(v, 2); }

  std::ofstream out_;
  PcapWriterOptions opts_;
};

}  // namespace bacflow
