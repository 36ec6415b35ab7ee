/**
 * NDJSON flow format: one Flow per line.
 *
 *   {"flow_id", "label", "lossy", "payload_segments",
 *    "messages": [{"kind", "method"?, "url"?, "status"?, "reason"?, "version",
 *                  "headers": [[name, value], ...], "body_len", "wire_length",
 *                  "src_port", "dst_port", "ttl", "ts",
 *                  "url_len"?, "value_lens"?, "body_b64"?}]}
 *
 * "url_len" / "value_lens" carry pre-mask lengths and appear only on masked
 * flows. "body_b64" holds the body bytes; readers fall back to "body_len"
 * alone when it is missing.
 */

#ifndef HSTF_FLOW_IO_HPP
#define HSTF_FLOW_IO_HPP

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hstf/http.hpp"

namespace hstf::http {

struct NdjsonOptions {
  bool include_bodies = true;
};

std::string to_ndjson_line(const Flow& flow, const NdjsonOptions& options = {});
/** Throws Error(InvalidArgument) on schema violations. */
Flow parse_ndjson_line(std::string_view line);

void write_ndjson(std::ostream& out, std::span<const Flow> flows, const NdjsonOptions& options = {});
std::vector<Flow> read_ndjson(std::istream& in);

void write_ndjson_file(const std::string& path, std::span<const Flow> flows, const NdjsonOptions& options = {});
std::vector<Flow> read_ndjson_file(const std::string& path);

}  // namespace hstf::http

#endif  // HSTF_FLOW_IO_HPP
