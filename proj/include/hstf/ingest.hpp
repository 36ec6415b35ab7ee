/**
 * Capture-to-flows pipeline: pcap records → TCP segments → reassembled
 * connections → HTTP flows, with counts of everything dropped on the way.
 */

#ifndef HSTF_INGEST_HPP
#define HSTF_INGEST_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hstf/capture.hpp"
#include "hstf/http.hpp"
#include "hstf/reassembly.hpp"

namespace hstf::ingest {

struct IngestStats {
  std::size_t records = 0;
  std::size_t tcp_segments = 0;
  std::size_t skipped_frames = 0;    // non-IPv4, IPv6, non-TCP or fragments
  std::size_t malformed_frames = 0;  // inconsistent header lengths
  std::size_t streams = 0;
  std::size_t http_flows = 0;
  std::size_t non_http_streams = 0;
  std::size_t lossy_streams = 0;
  std::size_t malformed_messages = 0;
};

struct IngestOptions {
  http::Label label = http::Label::Unlabeled;
  capture::ReassemblyOptions reassembly;
  /// Applied to every flow before it is returned.
  std::optional<http::MaskConfig> mask;
};

struct IngestResult {
  std::vector<http::Flow> flows;  // ordered by first capture index
  IngestStats stats;
};

/** Throws Io, UnsupportedMagic, TruncatedHeader or UnsupportedLinkType from the reader. */
IngestResult ingest_capture(const std::string& path, const IngestOptions& options = {});
IngestResult ingest_packets(std::span<const capture::RawPacket> packets, const IngestOptions& options = {});

}  // namespace hstf::ingest

#endif  // HSTF_INGEST_HPP
