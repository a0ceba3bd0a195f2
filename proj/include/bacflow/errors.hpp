#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bacflow {

enum class Layer { Ethernet, Ip, Udp, Bvlc, Npdu, Apdu };

inline std::string_view to_string(Layer layer) {
  switch (layer) {
    case Layer::Ethernet: return "Ethernet";
    case Layer::Ip: return "IP";
    case Layer::Udp: return "UDP";
    case Layer::Bvlc: return "BVLC";
    case Layer::Npdu: return "NPDU";
    case Layer::Apdu: return "APDU";
  }
  return "?";
}

// A length field contradicts the octets actually available. `offset` is the
// position, relative to the start of `layer`, of the last octet of the field
// that could not be honored.
class MalformedPacket : public std::runtime_error {
 public:
  MalformedPacket(Layer layer, std::size_t offset, const std::string& what)
      : std::runtime_error("malformed " + std::string(to_string(layer)) + " at offset " +
                           std::to_string(offset) + ": " + what),
        layer_(layer),
        offset_(offset) {}

  Layer layer() const noexcept { return layer_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  Layer layer_;
  std::size_t offset_;
};

class UnsupportedFormat : public std::runtime_error {
 public:
  UnsupportedFormat(const std::string& what, bool pcapng = false)
      : std::runtime_error(what), pcapng_(pcapng) {}
  bool is_pcapng() const noexcept { return pcapng_; }

 private:
  bool pcapng_;
};

class TruncatedFile : public std::runtime_error {
 public:
  TruncatedFile(const std::string& what, std::size_t complete_records)
      : std::runtime_error(what), complete_(complete_records) {}
  std::size_t complete_records() const noexcept { return complete_; }

 private:
  std::size_t complete_;
};

class SchemaError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ValueError : public std::runtime_error {
 public:
  ValueError(std::size_t row, std::string text)
      : std::runtime_error("row " + std::to_string(row) + ": cannot parse '" + text + "'"),
        row_(row),
        text_(std::move(text)) {}
  std::size_t row() const noexcept { return row_; }
  const std::string& text() const noexcept { return text_; }

 private:
  std::size_t row_;
  std::string text_;
};

class InsufficientData : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class EmptySample : public std::runtime_error {
 public:
  EmptySample() : std::runtime_error("sample contains no typable BACnet packets") {}
};

class UnknownFlow : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class UnclassifiedFlow : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class StaleDelta : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A confirmation names items that were never part of the issued delta.
class InvalidSelection : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class DomainError : public std::domain_error {
  using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class BaselineError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bacflow
