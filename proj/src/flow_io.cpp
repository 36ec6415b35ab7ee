#include "hstf/flow_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "hstf/digest.hpp"
#include "hstf/error.hpp"
#include "json.hpp"

namespace hstf::http {
namespace {

using nlohmann::json;

std::string version_string(HttpVersion v) {
  switch (v) {
    case HttpVersion::V0_9: return "0.9";
    case HttpVersion::V1_0: return "1.0";
    case HttpVersion::V1_1: return "1.1";
  }
  return "1.1";
}

HttpVersion version_from(const std::string& s) {
  if (s == "0.9") return HttpVersion::V0_9;
  if (s == "1.0") return HttpVersion::V1_0;
  if (s == "1.1") return HttpVersion::V1_1;
  throw Error(Errc::InvalidArgument, "unknown HTTP version '" + s + "'");
}

json message_to_json(const HttpMessage& m, const NdjsonOptions& options) {
  json j;
  j["kind"] = m.is_request() ? "request" : "response";
  if (m.is_request()) {
    j["method"] = m.method;
    j["url"] = m.url;
    if (m.measured_url_length) j["url_len"] = *m.measured_url_length;
  } else {
    j["status"] = m.status_code;
    j["reason"] = m.reason;
  }
  j["version"] = version_string(m.version);
  json headers = json::array();
  bool any_measured = false;
  for (const auto& h : m.headers) {
    headers.push_back(json::array({h.name, h.value}));
    any_measured = any_measured || h.measured_value_length.has_value();
  }
  j["headers"] = std::move(headers);
  if (any_measured) {
    json lens = json::array();
    for (const auto& h : m.headers) lens.push_back(h.value_length());
    j["value_lens"] = std::move(lens);
  }
  j["body_len"] = m.body_length;
  j["wire_length"] = m.wire_length;
  j["src_port"] = m.src_port;
  j["dst_port"] = m.dst_port;
  j["ttl"] = m.ttl;
  j["ts"] = m.timestamp;
  if (options.include_bodies && !m.body.empty()) j["body_b64"] = base64_encode(m.body);
  return j;
}

HttpMessage message_from_json(const json& j) {
  HttpMessage m;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "request") {
    m.kind = MessageKind::Request;
    m.method = j.at("method").get<std::string>();
    m.url = j.at("url").get<std::string>();
    if (j.contains("url_len")) m.measured_url_length = j["url_len"].get<std::size_t>();
  } else if (kind == "response") {
    m.kind = MessageKind::Response;
    m.status_code = j.at("status").get<int>();
    if (m.status_code < 100 || m.status_code > 599) {
      throw Error(Errc::InvalidArgument, "status code out of range");
    }
    m.reason = j.value("reason", std::string(default_reason(m.status_code)));
  } else {
    throw Error(Errc::InvalidArgument, "unknown message kind '" + kind + "'");
  }
  m.version = version_from(j.at("version").get<std::string>());
  for (const auto& h : j.at("headers")) {
    if (!h.is_array() || h.size() != 2) throw Error(Errc::InvalidArgument, "header must be [name, value]");
    m.headers.push_back(Header{h[0].get<std::string>(), h[1].get<std::string>(), std::nullopt});
  }
  if (j.contains("value_lens")) {
    const auto& lens = j["value_lens"];
    if (lens.size() != m.headers.size()) throw Error(Errc::InvalidArgument, "value_lens length mismatch");
    for (std::size_t i = 0; i < lens.size(); ++i) {
      const auto len = lens[i].get<std::size_t>();
      if (len != m.headers[i].value.size()) m.headers[i].measured_value_length = len;
    }
  }
  if (j.contains("body_b64")) m.body = base64_decode(j["body_b64"].get<std::string>());
  m.body_length = j.at("body_len").get<std::size_t>();
  if (!m.body.empty() && m.body.size() != m.body_length) {
    throw Error(Errc::InvalidArgument, "body_b64 disagrees with body_len");
  }
  m.wire_length = j.at("wire_length").get<std::size_t>();
  m.src_port = j.at("src_port").get<std::uint16_t>();
  m.dst_port = j.at("dst_port").get<std::uint16_t>();
  const int ttl = j.at("ttl").get<int>();
  if (ttl < 0 || ttl > 255) throw Error(Errc::InvalidArgument, "ttl out of range");
  m.ttl = static_cast<std::uint8_t>(ttl);
  m.timestamp = j.at("ts").get<double>();
  return m;
}

}  // namespace

std::string to_ndjson_line(const Flow& flow, const NdjsonOptions& options) {
  json j;
  j["flow_id"] = flow.flow_id;
  j["label"] = std::string(to_string(flow.label));
  j["lossy"] = flow.lossy;
  j["payload_segments"] = flow.payload_segments;
  json messages = json::array();
  for (const auto& m : flow.messages) messages.push_back(message_to_json(m, options));
  j["messages"] = std::move(messages);
  return j.dump();
}

Flow parse_ndjson_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    Flow flow;
    flow.flow_id = j.at("flow_id").get<std::string>();
    flow.label = parse_label(j.at("label").get<std::string>());
    flow.lossy = j.value("lossy", false);
    flow.payload_segments = j.value("payload_segments", std::size_t{0});
    for (const auto& m : j.at("messages")) flow.messages.push_back(message_from_json(m));
    return flow;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad flow record: ") + e.what());
  }
}

void write_ndjson(std::ostream& out, std::span<const Flow> flows, const NdjsonOptions& options) {
  for (const auto& f : flows) out << to_ndjson_line(f, options) << '\n';
}

std::vector<Flow> read_ndjson(std::istream& in) {
  std::vector<Flow> flows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    flows.push_back(parse_ndjson_line(line));
  }
  return flows;
}

void write_ndjson_file(const std::string& path, std::span<const Flow> flows, const NdjsonOptions& options) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot create '" + path + "'");
  write_ndjson(out, flows, options);
  out.flush();
  if (!out) throw Error(Errc::Io, "write to '" + path + "' failed");
}

std::vector<Flow> read_ndjson_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open '" + path + "'");
  return read_ndjson(in);
}

}  // namespace hstf::http
