#include "hstf/features.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "hstf/error.hpp"

namespace hstf::features {
namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Messages that share their key with at least one other message of the same direction.
template <typename Key>
std::size_t repeated_members(const std::map<Key, std::size_t>& counts) {
  std::size_t same = 0;
  for (const auto& [key, count] : counts) {
    if (count >= 2) same += count;
  }
  return same;
}

}  // namespace

std::array<double, kRawCols> encode_field_line(std::span<const std::uint8_t> line) {
  std::array<double, kRawCols> out{};
  const std::size_t n = std::min(line.size(), kRawCols);
  for (std::size_t i = 0; i < n; ++i) out[i] = line[i] / 255.0;
  return out;
}

void RawFeatureMatrix::set_row(std::size_t row, std::span<const std::uint8_t> line) {
  if (row >= rows) throw Error(Errc::ShapeMismatch, "row index beyond 47");
  const std::size_t n = std::min(line.size(), cols);
  std::copy_n(line.begin(), n, bytes_.begin() + static_cast<std::ptrdiff_t>(row * cols));
  std::fill(bytes_.begin() + static_cast<std::ptrdiff_t>(row * cols + n),
            bytes_.begin() + static_cast<std::ptrdiff_t>((row + 1) * cols), 0);
  used_rows_ = std::max(used_rows_, row + 1);
}

RawFeatureMatrix RawFeatureMatrix::from_bytes(std::span<const std::uint8_t> cells) {
  if (cells.size() != rows * cols) throw Error(Errc::ShapeMismatch, "raw matrix needs 47x200 cells");
  RawFeatureMatrix m;
  std::copy(cells.begin(), cells.end(), m.bytes_.begin());
  for (std::size_t r = rows; r > 0; --r) {
    const auto row = cells.subspan((r - 1) * cols, cols);
    if (std::any_of(row.begin(), row.end(), [](std::uint8_t b) { return b != 0; })) {
      m.used_rows_ = r;
      break;
    }
  }
  return m;
}

bool RawFeatureMatrix::is_zero() const noexcept {
  return std::all_of(bytes_.begin(), bytes_.end(), [](std::uint8_t b) { return b == 0; });
}

std::vector<std::span<const std::uint8_t>> split_field_lines(std::span<const std::uint8_t> serialized) {
  std::vector<std::span<const std::uint8_t>> lines;
  std::size_t pos = 0;
  const std::size_t n = serialized.size();
  while (pos < n) {
    std::size_t eol = pos;
    while (eol + 1 < n && !(serialized[eol] == '\r' && serialized[eol + 1] == '\n')) ++eol;
    if (eol + 1 >= n) {
      // Truncated inside the head: keep the partial line.
      lines.push_back(serialized.subspan(pos));
      return lines;
    }
    if (eol == pos) {
      pos += 2;  // blank line closes the head
      if (pos < n) lines.push_back(serialized.subspan(pos));
      return lines;
    }
    lines.push_back(serialized.subspan(pos, eol - pos));
    pos = eol + 2;
  }
  return lines;
}

RawFeatureMatrix encode_packet_raw(const http::HttpMessage& msg, std::size_t packet_size) {
  if (packet_size == 0) throw Error(Errc::InvalidArgument, "packet_size must be at least 1");
  const http::Bytes wire = http::serialize(msg);
  const std::span<const std::uint8_t> truncated(wire.data(), std::min(wire.size(), packet_size));
  RawFeatureMatrix m;
  const auto lines = split_field_lines(truncated);
  for (std::size_t i = 0; i < lines.size() && i < kRawRows; ++i) m.set_row(i, lines[i]);
  return m;
}

double request_type_code(const http::HttpMessage& msg) noexcept {
  if (!msg.is_request()) return 5.0;
  if (msg.method == "GET") return 1.0;
  if (msg.method == "POST") return 2.0;
  if (msg.method == "HEAD") return 3.0;
  return 4.0;
}

PacketLevelVector build_pl(const http::HttpMessage& msg) {
  PacketLevelVector pl{};
  pl[0] = request_type_code(msg);
  pl[1] = msg.src_port;
  pl[2] = msg.dst_port;
  pl[3] = msg.is_request() ? static_cast<double>(msg.url_length()) : 0.0;
  pl[4] = http::version_number(msg.version);
  const std::size_t headers = std::min(msg.headers.size(), kRawRows);
  for (std::size_t i = 0; i < headers; ++i) {
    pl[5 + i] = static_cast<double>(msg.headers[i].name.size());
    pl[52 + i] = static_cast<double>(msg.headers[i].value_length());
  }
  pl[99] = static_cast<double>(msg.body_length);
  return pl;
}

FlowLevelVector build_fl(const http::Flow& flow) {
  if (flow.messages.empty()) throw Error(Errc::EmptyFlow, "build_fl needs at least one message");
  FlowLevelVector fl{};
  const std::size_t n = std::min(flow.messages.size(), kMaxFlowPackets);
  const std::span<const http::HttpMessage> msgs(flow.messages.data(), n);

  std::size_t requests = 0;
  std::size_t responses = 0;
  std::map<std::pair<std::string, std::string>, std::size_t> request_keys;
  std::map<int, std::size_t> response_keys;
  std::size_t get = 0, post = 0, head = 0, other_method = 0;
  std::size_t s2xx = 0, s4xx = 0, s5xx = 0, other_status = 0;
  double total_bytes = 0.0, request_bytes = 0.0, response_bytes = 0.0;
  bool multi_request = false, multi_response = false;
  std::size_t pending_requests = 0, run_responses = 0;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = msgs[i];
    const auto wire = static_cast<double>(m.wire_length);
    total_bytes += wire;
    if (m.is_request()) {
      ++requests;
      request_bytes += wire;
      ++request_keys[{m.method, m.url}];
      if (m.method == "GET") {
        ++get;
      } else if (m.method == "POST") {
        ++post;
      } else if (m.method == "HEAD") {
        ++head;
      } else {
        ++other_method;
      }
      ++pending_requests;
      run_responses = 0;
    } else {
      ++responses;
      response_bytes += wire;
      ++response_keys[m.status_code];
      const int s = m.status_code;
      if (s >= 200 && s < 300) {
        ++s2xx;
      } else if (s >= 400 && s < 500) {
        ++s4xx;
      } else if (s >= 500 && s < 600) {
        ++s5xx;
      } else {
        ++other_status;
      }
      if (pending_requests >= 2) multi_request = true;
      pending_requests = 0;
      if (++run_responses >= 2) multi_response = true;
    }
    fl[7 + i] = m.ttl;
    fl[109 + i] = wire;
    if (i + 1 < n) fl[57 + i] = msgs[i + 1].timestamp - m.timestamp;
  }

  const std::size_t same_req = repeated_members(request_keys);
  const std::size_t same_resp = repeated_members(response_keys);
  fl[0] = static_cast<double>(n);
  fl[1] = ratio(requests, n);
  fl[2] = ratio(responses, n);
  fl[3] = ratio(same_req, requests);
  fl[4] = ratio(requests - same_req, requests);
  fl[5] = ratio(same_resp, responses);
  fl[6] = ratio(responses - same_resp, responses);
  fl[106] = total_bytes;
  fl[107] = total_bytes > 0 ? request_bytes / total_bytes : 0.0;
  fl[108] = total_bytes > 0 ? response_bytes / total_bytes : 0.0;
  fl[159] = multi_request ? 1.0 : 0.0;
  fl[160] = multi_response ? 1.0 : 0.0;
  fl[161] = ratio(get, requests);
  fl[162] = ratio(post, requests);
  fl[163] = ratio(head, requests);
  fl[164] = ratio(other_method, requests);
  fl[165] = ratio(s2xx, responses);
  fl[166] = ratio(s4xx, responses);
  fl[167] = ratio(s5xx, responses);
  fl[168] = ratio(other_status, responses);
  fl[169] = flow.payload_segments == 0
                ? 1.0
                : std::min(1.0, ratio(flow.messages.size(), flow.payload_segments));
  return fl;
}

EncodedFlow encode_flow(const http::Flow& flow, std::size_t packet_size, std::size_t flow_size) {
  if (packet_size == 0) throw Error(Errc::InvalidArgument, "packet_size must be at least 1");
  if (flow_size == 0 || flow_size > kMaxFlowPackets) {
    throw Error(Errc::InvalidArgument, "flow_size must be within 1..50");
  }
  EncodedFlow out;
  out.label = flow.label;
  out.matrices.resize(flow_size);
  out.pls.resize(flow_size, PacketLevelVector{});
  out.real_packets = std::min(flow_size, flow.messages.size());
  for (std::size_t i = 0; i < out.real_packets; ++i) {
    out.matrices[i] = encode_packet_raw(flow.messages[i], packet_size);
    out.pls[i] = build_pl(flow.messages[i]);
  }
  out.fl = build_fl(flow);
  return out;
}

void NormalizationStats::observe(const EncodedFlow& flow) {
  auto update = [](auto& lo, auto& hi, const auto& v, bool first) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      lo[i] = first ? v[i] : std::min(lo[i], v[i]);
      hi[i] = first ? v[i] : std::max(hi[i], v[i]);
    }
  };
  update(fl_min, fl_max, flow.fl, flows_observed == 0);
  ++flows_observed;
  for (std::size_t p = 0; p < flow.real_packets; ++p) {
    update(pl_min, pl_max, flow.pls[p], packets_observed == 0);
    ++packets_observed;
  }
}

NormalizationStats NormalizationStats::fit(std::span<const EncodedFlow> flows) {
  NormalizationStats stats;
  for (const auto& f : flows) stats.observe(f);
  return stats;
}

EncodedFlow normalize_features(const EncodedFlow& flow, const NormalizationStats& stats) {
  auto scale = [](double v, double lo, double hi) {
    if (!(hi > lo)) return 0.0;
    return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  };
  EncodedFlow out = flow;
  for (std::size_t p = 0; p < out.pls.size(); ++p) {
    for (std::size_t i = 0; i < kPlSize; ++i) {
      out.pls[p][i] = p < flow.real_packets ? scale(flow.pls[p][i], stats.pl_min[i], stats.pl_max[i]) : 0.0;
    }
  }
  for (std::size_t i = 0; i < kFlSize; ++i) out.fl[i] = scale(flow.fl[i], stats.fl_min[i], stats.fl_max[i]);
  return out;
}

}  // namespace hstf::features
