/**
 * Flow encoders feeding the model: a 47x200 byte matrix per message, the
 * 100-slot packet-level statistics vector (PL) and the 170-slot flow-level
 * statistics vector (FL).
 *
 * PL layout (1-indexed): 1 request type (GET=1 POST=2 HEAD=3 other=4,
 * response=5), 2 source port, 3 destination port, 4 URL length, 5 HTTP
 * version, 6-52 header name lengths, 53-99 header value lengths, 100 body
 * length.
 *
 * FL layout (1-indexed): 1 message count, 2-3 request/response shares, 4-7
 * same/different shares among requests then responses, 8-57 TTL per message,
 * 58-106 inter-arrival seconds, 107 total wire bytes, 108-109 request/response
 * byte shares, 110-159 wire bytes per message, 160 several requests answered
 * by one response, 161 several responses to one request, 162-165
 * GET/POST/HEAD/other shares, 166-169 2XX/4XX/5XX/other shares, 170 HTTP
 * messages per payload-carrying TCP segment.
 */

#ifndef HSTF_FEATURES_HPP
#define HSTF_FEATURES_HPP

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "hstf/http.hpp"

namespace hstf::features {

constexpr std::size_t kRawRows = 47;
constexpr std::size_t kRawCols = 200;
constexpr std::size_t kPlSize = 100;
constexpr std::size_t kFlSize = 170;
constexpr std::size_t kMaxFlowPackets = 50;
constexpr std::size_t kIntervalSlots = kMaxFlowPackets - 1;
constexpr std::size_t kDefaultPacketSize = 400;
constexpr std::size_t kDefaultFlowSize = 4;

using PacketLevelVector = std::array<double, kPlSize>;
using FlowLevelVector = std::array<double, kFlSize>;

/** Each byte as byte/255; cut at 200 bytes, zero-filled below. */
std::array<double, kRawCols> encode_field_line(std::span<const std::uint8_t> line);

/**
 * 47x200 matrix of values in [0,1]. Stored as the underlying bytes, which the
 * byte/255 mapping makes lossless.
 */
class RawFeatureMatrix {
 public:
  static constexpr std::size_t rows = kRawRows;
  static constexpr std::size_t cols = kRawCols;

  double at(std::size_t row, std::size_t col) const noexcept { return bytes_[row * cols + col] / 255.0; }
  std::uint8_t byte_at(std::size_t row, std::size_t col) const noexcept { return bytes_[row * cols + col]; }
  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

  /** Writes one field line into `row` (truncated to 200 bytes). */
  void set_row(std::size_t row, std::span<const std::uint8_t> line);
  /** Rebuilds from per-cell bytes (row-major, rows*cols entries). */
  static RawFeatureMatrix from_bytes(std::span<const std::uint8_t> cells);

  std::size_t used_rows() const noexcept { return used_rows_; }
  bool is_zero() const noexcept;

  bool operator==(const RawFeatureMatrix&) const = default;

 private:
  std::array<std::uint8_t, rows * cols> bytes_{};
  std::size_t used_rows_ = 0;
};

/**
 * Splits a (possibly truncated) serialized message into field lines: start
 * line, header lines, then the body as one final line.
 */
std::vector<std::span<const std::uint8_t>> split_field_lines(std::span<const std::uint8_t> serialized);

RawFeatureMatrix encode_packet_raw(const http::HttpMessage& msg, std::size_t packet_size);

double request_type_code(const http::HttpMessage& msg) noexcept;

PacketLevelVector build_pl(const http::HttpMessage& msg);

/** Computed over the first 50 messages. Requires a non-empty flow. */
FlowLevelVector build_fl(const http::Flow& flow);

struct EncodedFlow {
  std::vector<RawFeatureMatrix> matrices;  // exactly flow_size entries
  std::vector<PacketLevelVector> pls;      // aligned with matrices
  FlowLevelVector fl{};
  http::Label label = http::Label::Unlabeled;
  std::size_t real_packets = 0;  // leading entries that hold messages; the rest are zero pads

  bool operator==(const EncodedFlow&) const = default;
};

EncodedFlow encode_flow(const http::Flow& flow, std::size_t packet_size, std::size_t flow_size);

/** Per-position min/max of PL and FL, fitted on training data only. */
struct NormalizationStats {
  PacketLevelVector pl_min{};
  PacketLevelVector pl_max{};
  FlowLevelVector fl_min{};
  FlowLevelVector fl_max{};
  std::size_t flows_observed = 0;
  std::size_t packets_observed = 0;

  /** Streaming update with one flow's real packets and FL. */
  void observe(const EncodedFlow& flow);
  static NormalizationStats fit(std::span<const EncodedFlow> flows);

  bool operator==(const NormalizationStats&) const = default;
};

/**
 * Min-max scales every PL/FL position into [0,1] (clamped for values outside
 * the fitted range). Degenerate positions (min == max) become 0, as do pad
 * slots. Raw matrices pass through unchanged.
 */
EncodedFlow normalize_features(const EncodedFlow& flow, const NormalizationStats& stats);

}  // namespace hstf::features

#endif  // HSTF_FEATURES_HPP
