/**
 * HTTP/1.x message parsing over reassembled TCP streams, flow construction
 * and privacy masking.
 *
 * A Flow is one TCP connection's requests and responses merged into capture
 * order. Every length that later becomes a feature (URL, header values, body,
 * wire size) is preserved across masking so statistics computed on a masked
 * flow match the original.
 */

#ifndef HSTF_HTTP_HPP
#define HSTF_HTTP_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hstf/reassembly.hpp"

namespace hstf::http {

using Bytes = std::vector<std::uint8_t>;

enum class MessageKind { Request, Response };
enum class HttpVersion { V0_9, V1_0, V1_1 };
enum class Label { Benign, Malicious, Unlabeled };

double version_number(HttpVersion v) noexcept;
std::string_view to_string(Label label) noexcept;
Label parse_label(std::string_view text);

struct Header {
  std::string name;
  std::string value;
  /// Length of the value before masking; unset means value.size().
  std::optional<std::size_t> measured_value_length;

  std::size_t value_length() const noexcept { return measured_value_length.value_or(value.size()); }

  bool operator==(const Header&) const = default;
};

struct HttpMessage {
  MessageKind kind = MessageKind::Request;
  std::string method;  // requests only
  std::string url;     // requests only
  std::optional<std::size_t> measured_url_length;
  int status_code = 0;  // responses only
  std::string reason;
  HttpVersion version = HttpVersion::V1_1;
  std::vector<Header> headers;
  Bytes body;
  std::size_t body_length = 0;
  std::size_t wire_length = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t ttl = 0;
  double timestamp = 0.0;  // seconds
  std::uint64_t capture_index = 0;

  bool is_request() const noexcept { return kind == MessageKind::Request; }
  std::size_t url_length() const noexcept { return measured_url_length.value_or(url.size()); }
  /** Case-insensitive lookup; nullptr when absent. */
  const Header* find_header(std::string_view name) const noexcept;

  bool operator==(const HttpMessage&) const = default;
};

struct Flow {
  std::string flow_id;
  Label label = Label::Unlabeled;
  bool lossy = false;
  std::vector<HttpMessage> messages;
  /// TCP segments carrying payload in the connection; 0 when unknown.
  std::size_t payload_segments = 0;

  bool operator==(const Flow&) const = default;
};

/** Canonical wire form (CRLF line ends; chunked bodies re-framed as one chunk). */
Bytes serialize(const HttpMessage& msg);

std::string_view default_reason(int status) noexcept;

struct ParseLimits {
  std::size_t max_header_section = 64u << 10;
  std::size_t max_line = 16u << 10;
};

struct ParseOutcome {
  std::vector<HttpMessage> messages;  // ordered by (timestamp, capture index)
  std::size_t malformed = 0;          // messages skipped as MalformedMessage
  std::size_t abandoned_directions = 0;
};

/**
 * Scans client→server bytes for requests and server→client bytes for
 * responses. A direction that does not open with an HTTP start line yields
 * nothing; malformed messages are skipped up to the next start line.
 */
ParseOutcome parse_messages(const capture::TcpStreamPair& stream, const ParseLimits& limits = {});

/** Parses a single direction with no segment metadata (offsets only). */
ParseOutcome parse_direction(std::span<const std::uint8_t> bytes, MessageKind kind,
                             const ParseLimits& limits = {});

/** Throws Error(EmptyFlow) when no HTTP message is found. */
Flow build_flow(const capture::TcpStreamPair& stream, Label label);

struct MaskConfig {
  /// Header names compared case-insensitively.
  std::set<std::string> fields_to_mask{"host", "cookie", "authorization", "referer"};
  std::size_t hash_output_length = 16;
  /// Path of request URLs is masked too whenever fields_to_mask is non-empty.
  bool mask_url_path = true;
};

/**
 * SHA-256 over "<lowercased field>\0<value>", hex encoded and truncated to
 * `hex_chars` (at most 64).
 */
std::string mask_digest(std::string_view field, std::string_view value, std::size_t hex_chars);

Flow mask_flow(const Flow& flow, const MaskConfig& cfg);

}  // namespace hstf::http

#endif  // HSTF_HTTP_HPP
