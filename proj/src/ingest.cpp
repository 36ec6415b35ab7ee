#include "hstf/ingest.hpp"

#include <algorithm>

#include "hstf/error.hpp"

namespace hstf::ingest {
namespace {

class Pipeline {
 public:
  explicit Pipeline(const IngestOptions& options) : options_(options), reassembler_(options.reassembly) {}

  void push(const capture::RawPacket& packet) {
    const std::uint64_t index = result_.stats.records++;
    capture::DecodeResult decoded;
    try {
      decoded = capture::decode_segment(packet, index);
    } catch (const Error& e) {
      if (e.code() != Errc::MalformedHeader) throw;
      ++result_.stats.malformed_frames;
      return;
    }
    if (const auto* seg = std::get_if<capture::TcpSegment>(&decoded)) {
      ++result_.stats.tcp_segments;
      reassembler_.push(*seg);
      collect(reassembler_.drain());
    } else {
      ++result_.stats.skipped_frames;
    }
  }

  IngestResult finish() {
    collect(reassembler_.finish());
    std::stable_sort(result_.flows.begin(), result_.flows.end(), [](const auto& a, const auto& b) {
      return a.second < b.second;
    });
    IngestResult out;
    out.stats = result_.stats;
    out.flows.reserve(result_.flows.size());
    for (auto& [flow, order] : result_.flows) out.flows.push_back(std::move(flow));
    return out;
  }

 private:
  void collect(std::vector<capture::TcpStreamPair> streams) {
    for (const auto& stream : streams) {
      ++result_.stats.streams;
      if (stream.lossy()) ++result_.stats.lossy_streams;
      const http::ParseOutcome parsed = http::parse_messages(stream);
      result_.stats.malformed_messages += parsed.malformed;
      if (parsed.messages.empty()) {
        ++result_.stats.non_http_streams;
        continue;
      }
      http::Flow flow;
      flow.flow_id = stream.key.to_string() + "#" + std::to_string(stream.first_capture_index);
      flow.label = options_.label;
      flow.lossy = stream.lossy();
      flow.messages = parsed.messages;
      flow.payload_segments = stream.payload_segments();
      if (options_.mask) flow = http::mask_flow(flow, *options_.mask);
      ++result_.stats.http_flows;
      result_.flows.emplace_back(std::move(flow), stream.first_capture_index);
    }
  }

  struct Pending {
    std::vector<std::pair<http::Flow, std::uint64_t>> flows;
    IngestStats stats;
  };

  const IngestOptions& options_;
  capture::Reassembler reassembler_;
  Pending result_;
};

}  // namespace

IngestResult ingest_capture(const std::string& path, const IngestOptions& options) {
  capture::PcapReader reader(path);
  Pipeline pipeline(options);
  while (auto packet = reader.next()) pipeline.push(*packet);
  return pipeline.finish();
}

IngestResult ingest_packets(std::span<const capture::RawPacket> packets, const IngestOptions& options) {
  Pipeline pipeline(options);
  for (const auto& packet : packets) pipeline.push(packet);
  return pipeline.finish();
}

}  // namespace hstf::ingest
