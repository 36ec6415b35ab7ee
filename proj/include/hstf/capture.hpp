/**
 * Classic pcap reading/writing and Ethernet/IPv4/TCP decoding.
 *
 * Only libpcap's original format is handled (both byte orders, microsecond
 * timestamps, link type 1). pcapng and live capture are out of scope.
 */

#ifndef HSTF_CAPTURE_HPP
#define HSTF_CAPTURE_HPP

#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace hstf::capture {

using Bytes = std::vector<std::uint8_t>;

constexpr std::uint32_t kPcapMagic = 0xa1b2c3d4;
constexpr std::uint32_t kPcapMagicSwapped = 0xd4c3b2a1;
constexpr std::uint32_t kLinkTypeEthernet = 1;
constexpr std::size_t kGlobalHeaderSize = 24;
constexpr std::size_t kRecordHeaderSize = 16;

/** Microseconds since the epoch; the single time representation used downstream. */
using TimestampUs = std::int64_t;

inline double to_seconds(TimestampUs ts) noexcept { return static_cast<double>(ts) / 1e6; }

struct RawPacket {
  std::uint32_t ts_sec = 0;
  std::uint32_t ts_usec = 0;
  Bytes captured;
  std::uint32_t original_length = 0;

  TimestampUs timestamp_us() const noexcept {
    return static_cast<TimestampUs>(ts_sec) * 1'000'000 + ts_usec;
  }

  bool operator==(const RawPacket&) const = default;
};

/**
 * Sequential reader over a pcap byte stream. Records come back in file order;
 * next() returns nullopt at a clean end of file.
 */
class PcapReader {
 public:
  explicit PcapReader(const std::string& path);
  explicit PcapReader(std::unique_ptr<std::istream> in);

  std::optional<RawPacket> next();

  std::uint32_t link_type() const noexcept { return link_type_; }
  std::uint32_t snaplen() const noexcept { return snaplen_; }
  bool byte_swapped() const noexcept { return swapped_; }

 private:
  void read_global_header();
  std::uint32_t load32(const std::uint8_t* p) const noexcept;

  std::unique_ptr<std::istream> in_;
  bool swapped_ = false;
  std::uint32_t link_type_ = 0;
  std::uint32_t snaplen_ = 0;
};

std::vector<RawPacket> read_capture(const std::string& path);

enum class ByteOrder { Little, Big };

class PcapWriter {
 public:
  explicit PcapWriter(const std::string& path, ByteOrder order = ByteOrder::Little,
                      std::uint32_t snaplen = 262144);

  void write(const RawPacket& packet);
  void close();

 private:
  void put32(std::uint32_t v);
  void put16(std::uint16_t v);

  std::ofstream out_;
  ByteOrder order_;
};

void write_capture(const std::string& path, std::span<const RawPacket> packets,
                   ByteOrder order = ByteOrder::Little);

struct FiveTuple {
  std::uint32_t src_ip = 0;  // host byte order
  std::uint32_t dst_ip = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = 6;

  bool operator==(const FiveTuple&) const = default;
};

struct TcpFlags {
  bool syn = false;
  bool fin = false;
  bool rst = false;
  bool ack = false;
  bool psh = false;

  bool operator==(const TcpFlags&) const = default;
};

struct TcpSegment {
  FiveTuple tuple;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  TcpFlags flags;
  std::uint8_t ip_ttl = 0;
  TimestampUs timestamp_us = 0;
  /// Position of the carrying record in its capture file.
  std::uint64_t capture_index = 0;
  Bytes payload;

  bool operator==(const TcpSegment&) const = default;
};

enum class SkipReason { NotIpv4, Ipv6, NotTcp, Fragment };

using DecodeResult = std::variant<TcpSegment, SkipReason>;

/**
 * Decodes Ethernet (optionally one 802.1Q tag) → IPv4 → TCP. Non-IPv4 and
 * non-TCP frames are skipped; inconsistent length fields throw MalformedHeader.
 */
DecodeResult decode_segment(const RawPacket& packet, std::uint64_t capture_index = 0);

/** Builds a checksummed Ethernet+IPv4+TCP frame carrying `segment`. */
Bytes build_frame(const TcpSegment& segment);

std::string format_ipv4(std::uint32_t ip);

}  // namespace hstf::capture

#endif  // HSTF_CAPTURE_HPP
