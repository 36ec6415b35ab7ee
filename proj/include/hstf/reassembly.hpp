/**
 * Per-connection TCP byte-stream reassembly.
 *
 * Segments are keyed by their unordered endpoint pair. Overlapping bytes are
 * resolved first-copy-wins (earliest arrival), duplicates disappear, and any
 * gap left in a direction marks it lossy.
 */

#ifndef HSTF_REASSEMBLY_HPP
#define HSTF_REASSEMBLY_HPP

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hstf/capture.hpp"

namespace hstf::capture {

/** One retained run of bytes inside an assembled direction. */
struct SegmentMeta {
  std::uint64_t offset = 0;  // position in StreamDirection::data
  std::uint32_t length = 0;
  std::uint8_t ttl = 0;
  TimestampUs timestamp_us = 0;
  std::uint64_t capture_index = 0;

  bool operator==(const SegmentMeta&) const = default;
};

struct StreamDirection {
  Bytes data;
  std::vector<SegmentMeta> segments;  // ascending offset, contiguous cover of data
  std::size_t payload_segments = 0;   // distinct TCP segments contributing bytes
  bool lossy = false;

  /** Metadata of the retained run containing byte `offset`; nullptr when out of range. */
  const SegmentMeta* meta_at(std::uint64_t offset) const;

  bool operator==(const StreamDirection&) const = default;
};

struct ConnectionKey {
  std::uint32_t client_ip = 0;
  std::uint16_t client_port = 0;
  std::uint32_t server_ip = 0;
  std::uint16_t server_port = 0;

  std::string to_string() const;
  bool operator==(const ConnectionKey&) const = default;
};

struct TcpStreamPair {
  ConnectionKey key;
  StreamDirection client_to_server;
  StreamDirection server_to_client;
  std::uint64_t first_capture_index = 0;  // smallest capture index among the connection's segments

  bool lossy() const noexcept { return client_to_server.lossy || server_to_client.lossy; }
  std::size_t payload_segments() const noexcept {
    return client_to_server.payload_segments + server_to_client.payload_segments;
  }

  bool operator==(const TcpStreamPair&) const = default;
};

struct ReassemblyOptions {
  /// Out-of-order bytes buffered per direction before the stream is flushed as lossy.
  std::size_t max_buffer_bytes = 4u << 20;
};

/**
 * Incremental reassembler. Connections close on RST, or once both sides sent
 * FIN and every byte up to each FIN is present; the rest close at finish().
 */
class Reassembler {
 public:
  explicit Reassembler(ReassemblyOptions options = {});

  void push(const TcpSegment& segment);

  /** Connections closed so far, in close order. */
  std::vector<TcpStreamPair> drain();

  /** Flushes every open connection (ordered by first appearance) plus anything not yet drained. */
  std::vector<TcpStreamPair> finish();

 private:
  struct Piece {
    std::int64_t end = 0;  // exclusive, relative sequence space
    Bytes bytes;
    std::uint8_t ttl = 0;
    TimestampUs timestamp_us = 0;
    std::uint64_t capture_index = 0;
    std::uint64_t segment_id = 0;
  };

  struct Direction {
    bool anchored = false;
    std::uint32_t anchor_seq = 0;
    std::optional<std::int64_t> syn_base;  // relative offset of the first data byte
    std::optional<std::int64_t> fin_end;
    bool base_fixed = false;
    std::int64_t committed_end = 0;
    std::map<std::int64_t, Piece> pending;  // non-overlapping, keyed by start
    std::size_t pending_bytes = 0;
    std::vector<std::uint64_t> contributing_ids;
    StreamDirection out;
  };

  struct Endpoint {
    std::uint32_t ip = 0;
    std::uint16_t port = 0;
    bool operator==(const Endpoint&) const = default;
    bool operator<(const Endpoint& o) const {
      return ip != o.ip ? ip < o.ip : port < o.port;
    }
  };

  struct Connection {
    Endpoint low;
    Endpoint high;
    Direction from_low;
    Direction from_high;
    std::optional<bool> client_is_low;  // decided by SYN / SYN-ACK
    bool first_sender_low = true;
    std::uint64_t first_capture_index = 0;
  };

  struct KeyHash {
    std::size_t operator()(const std::pair<Endpoint, Endpoint>& k) const noexcept;
  };

  std::int64_t relative(Direction& dir, std::uint32_t seq) const;
  void insert_piece(Direction& dir, std::int64_t start, Piece piece);
  void commit(Direction& dir, bool flush_all);
  bool complete(const Direction& dir) const;
  TcpStreamPair close(Connection& conn);

  ReassemblyOptions options_;
  std::unordered_map<std::pair<Endpoint, Endpoint>, Connection, KeyHash> open_;
  std::vector<TcpStreamPair> ready_;
  std::uint64_t next_segment_id_ = 0;
};

/** Reassembles every connection found in `segments`. */
std::vector<TcpStreamPair> reassemble(std::span<const TcpSegment> segments,
                                      ReassemblyOptions options = {});

}  // namespace hstf::capture

#endif  // HSTF_REASSEMBLY_HPP
