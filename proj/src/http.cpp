#include "hstf/http.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <numeric>

#include "hstf/digest.hpp"
#include "hstf/error.hpp"

namespace hstf::http {
namespace {

constexpr std::size_t npos = static_cast<std::size_t>(-1);

char lower_char(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), lower_char);
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) { return lower_char(x) == lower_char(y); });
}

bool is_tchar(char c) {
  if (std::isalnum(static_cast<unsigned char>(c))) return true;
  static constexpr std::string_view kExtra = "!#$%&'*+-.^_`|~";
  return kExtra.find(c) != std::string_view::npos;
}

std::string_view trim_ows(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::string_view as_view(std::span<const std::uint8_t> data, std::size_t pos, std::size_t len) {
  return {reinterpret_cast<const char*>(data.data()) + pos, len};
}

// Index of the CR of the next CRLF at or after `pos`, looking at most `max_len` bytes.
std::size_t find_crlf(std::span<const std::uint8_t> data, std::size_t pos, std::size_t max_len) {
  const std::size_t stop = std::min(data.size(), pos + max_len + 2);
  for (std::size_t i = pos; i + 1 < stop; ++i) {
    if (data[i] == '\r' && data[i + 1] == '\n') return i;
  }
  return npos;
}

std::optional<HttpVersion> parse_version(std::string_view v) {
  if (v == "HTTP/1.1") return HttpVersion::V1_1;
  if (v == "HTTP/1.0") return HttpVersion::V1_0;
  if (v == "HTTP/0.9") return HttpVersion::V0_9;
  return std::nullopt;
}

std::string_view version_text(HttpVersion v) {
  switch (v) {
    case HttpVersion::V0_9: return "HTTP/0.9";
    case HttpVersion::V1_0: return "HTTP/1.0";
    case HttpVersion::V1_1: return "HTTP/1.1";
  }
  return "HTTP/1.1";
}

// Length of an uppercase method token followed by a space at `pos`, or 0.
std::size_t method_prefix(std::span<const std::uint8_t> data, std::size_t pos) {
  std::size_t i = pos;
  while (i < data.size() && i - pos < 24 && data[i] >= 'A' && data[i] <= 'Z') ++i;
  if (i == pos || i >= data.size() || data[i] != ' ') return 0;
  return i - pos;
}

bool response_prefix(std::span<const std::uint8_t> data, std::size_t pos) {
  static constexpr std::string_view kPrefix = "HTTP/";
  if (data.size() - pos < kPrefix.size()) {
    // A shorter tail still counts if it agrees with the prefix so far.
    return as_view(data, pos, data.size() - pos) == kPrefix.substr(0, data.size() - pos);
  }
  return as_view(data, pos, kPrefix.size()) == kPrefix;
}

bool start_line_at(std::span<const std::uint8_t> data, std::size_t pos, MessageKind kind) {
  if (kind == MessageKind::Response) {
    return data.size() - pos >= 7 && as_view(data, pos, 7) == "HTTP/1.";
  }
  const std::size_t m = method_prefix(data, pos);
  if (m == 0) return false;
  const std::size_t eol = find_crlf(data, pos, 16u << 10);
  if (eol == npos) return false;
  return as_view(data, pos, eol - pos).find(" HTTP/") != std::string_view::npos;
}

std::size_t resync(std::span<const std::uint8_t> data, std::size_t from, MessageKind kind) {
  for (std::size_t i = from; i + 2 < data.size(); ++i) {
    if (data[i] == '\r' && data[i + 1] == '\n' && start_line_at(data, i + 2, kind)) return i + 2;
  }
  return npos;
}

enum class Status { Ok, NotHttp, Malformed, Incomplete };

struct Parsed {
  Status status = Status::Ok;
  HttpMessage msg;
  std::size_t end = 0;
};

struct ParsedAt {
  HttpMessage msg;
  std::size_t offset = 0;
};

bool has_chunked(const HttpMessage& m) {
  for (const auto& h : m.headers) {
    if (iequals(h.name, "Transfer-Encoding") && to_lower(h.value).find("chunked") != std::string::npos) {
      return true;
    }
  }
  return false;
}

// Decodes a chunked body starting at `pos`. Returns the end offset, or npos when the data
// runs out or the framing is bad (`malformed` tells which).
std::size_t decode_chunked(std::span<const std::uint8_t> data, std::size_t pos, const ParseLimits& limits,
                           Bytes& body, bool& malformed) {
  while (true) {
    const std::size_t eol = find_crlf(data, pos, limits.max_line);
    if (eol == npos) {
      malformed = data.size() - pos > limits.max_line;
      return npos;
    }
    std::string_view line = as_view(data, pos, eol - pos);
    line = trim_ows(line.substr(0, line.find(';')));
    std::size_t size = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), size, 16);
    if (ec != std::errc() || ptr != line.data() + line.size() || line.empty()) {
      malformed = true;
      return npos;
    }
    pos = eol + 2;
    if (size == 0) {
      // Trailer section ends with an empty line.
      while (true) {
        const std::size_t t = find_crlf(data, pos, limits.max_line);
        if (t == npos) return npos;
        const bool empty_line = t == pos;
        pos = t + 2;
        if (empty_line) return pos;
      }
    }
    if (data.size() - pos < size + 2) {
      body.insert(body.end(), data.begin() + static_cast<std::ptrdiff_t>(pos),
                  data.begin() + static_cast<std::ptrdiff_t>(std::min(data.size(), pos + size)));
      return npos;
    }
    body.insert(body.end(), data.begin() + static_cast<std::ptrdiff_t>(pos),
                data.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
    if (data[pos] != '\r' || data[pos + 1] != '\n') {
      malformed = true;
      return npos;
    }
    pos += 2;
  }
}

Parsed parse_one(std::span<const std::uint8_t> data, std::size_t pos, MessageKind kind,
                 const ParseLimits& limits, std::string_view request_method) {
  Parsed out;
  HttpMessage& msg = out.msg;
  msg.kind = kind;
  const std::size_t start = pos;

  if (kind == MessageKind::Request ? method_prefix(data, pos) == 0 : !response_prefix(data, pos)) {
    out.status = Status::NotHttp;
    return out;
  }
  const std::size_t eol = find_crlf(data, pos, limits.max_line);
  if (eol == npos) {
    out.status = data.size() - pos > limits.max_line ? Status::Malformed : Status::Incomplete;
    return out;
  }
  const std::string_view line = as_view(data, pos, eol - pos);
  bool simple_request = false;
  if (kind == MessageKind::Request) {
    const std::size_t sp1 = line.find(' ');
    const std::size_t sp2 = line.find(' ', sp1 + 1);
    msg.method = std::string(line.substr(0, sp1));
    if (sp2 == std::string_view::npos) {
      msg.url = std::string(line.substr(sp1 + 1));
      msg.version = HttpVersion::V0_9;
      simple_request = true;
    } else {
      msg.url = std::string(line.substr(sp1 + 1, sp2 - sp1 - 1));
      auto v = parse_version(line.substr(sp2 + 1));
      if (!v) {
        out.status = Status::Malformed;
        return out;
      }
      msg.version = *v;
    }
    if (msg.url.empty() || msg.url.find(' ') != std::string::npos) {
      out.status = Status::Malformed;
      return out;
    }
  } else {
    const std::size_t sp1 = line.find(' ');
    auto v = parse_version(line.substr(0, sp1));
    if (!v || *v == HttpVersion::V0_9 || sp1 == std::string_view::npos) {
      out.status = Status::Malformed;
      return out;
    }
    msg.version = *v;
    const std::string_view rest = line.substr(sp1 + 1);
    const std::string_view code = rest.substr(0, rest.find(' '));
    int status = 0;
    auto [ptr, ec] = std::from_chars(code.data(), code.data() + code.size(), status);
    if (code.size() != 3 || ec != std::errc() || ptr != code.data() + code.size() || status < 100 ||
        status > 599) {
      out.status = Status::Malformed;
      return out;
    }
    msg.status_code = status;
    if (rest.size() > 3) msg.reason = std::string(rest.substr(4));
  }
  pos = eol + 2;

  if (!simple_request) {
    while (true) {
      if (pos - start > limits.max_header_section) {
        out.status = Status::Malformed;
        return out;
      }
      const std::size_t hend = find_crlf(data, pos, limits.max_line);
      if (hend == npos) {
        out.status = data.size() - pos > limits.max_line ? Status::Malformed : Status::Incomplete;
        return out;
      }
      if (hend == pos) {
        pos += 2;
        break;
      }
      const std::string_view hl = as_view(data, pos, hend - pos);
      if ((hl.front() == ' ' || hl.front() == '\t') && !msg.headers.empty()) {
        auto& prev = msg.headers.back().value;
        prev += ' ';
        prev += trim_ows(hl);
      } else {
        const std::size_t colon = hl.find(':');
        if (colon == std::string_view::npos || colon == 0 ||
            !std::all_of(hl.begin(), hl.begin() + static_cast<std::ptrdiff_t>(colon), is_tchar)) {
          out.status = Status::Malformed;
          return out;
        }
        msg.headers.push_back(
            Header{std::string(hl.substr(0, colon)), std::string(trim_ows(hl.substr(colon + 1))), std::nullopt});
      }
      pos = hend + 2;
    }
    if (pos - start > limits.max_header_section + 2) {
      out.status = Status::Malformed;
      return out;
    }
  }

  bool body_allowed = !simple_request;
  if (kind == MessageKind::Response) {
    const int s = msg.status_code;
    if ((s >= 100 && s < 200) || s == 204 || s == 304 || request_method == "HEAD") body_allowed = false;
  }
  if (body_allowed) {
    if (has_chunked(msg)) {
      bool bad = false;
      const std::size_t end = decode_chunked(data, pos, limits, msg.body, bad);
      if (bad) {
        out.status = Status::Malformed;
        return out;
      }
      pos = end == npos ? data.size() : end;
    } else if (const Header* cl = msg.find_header("Content-Length")) {
      std::size_t len = 0;
      const std::string_view v = cl->value;
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), len);
      if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
        out.status = Status::Malformed;
        return out;
      }
      const std::size_t take = std::min(len, data.size() - pos);
      msg.body.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                      data.begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;
    } else if (kind == MessageKind::Response) {
      msg.body.assign(data.begin() + static_cast<std::ptrdiff_t>(pos), data.end());
      pos = data.size();
    }
  }
  msg.body_length = msg.body.size();
  msg.wire_length = pos - start;
  out.end = pos;
  return out;
}

std::vector<ParsedAt> parse_impl(std::span<const std::uint8_t> data, MessageKind kind, const ParseLimits& limits,
                                 const std::vector<std::string>& request_methods, ParseOutcome& stats) {
  std::vector<ParsedAt> out;
  std::size_t pos = 0;
  std::size_t next_request = 0;
  while (pos < data.size()) {
    while (pos + 1 < data.size() && data[pos] == '\r' && data[pos + 1] == '\n') pos += 2;
    if (pos >= data.size() || (pos + 1 == data.size() && data[pos] == '\r')) break;

    std::string_view method;
    if (kind == MessageKind::Response && next_request < request_methods.size()) {
      method = request_methods[next_request];
    }
    Parsed p = parse_one(data, pos, kind, limits, method);
    if (p.status == Status::Ok) {
      if (kind == MessageKind::Response && p.msg.status_code >= 200) ++next_request;
      out.push_back(ParsedAt{std::move(p.msg), pos});
      pos = p.end;
      continue;
    }
    if (p.status == Status::NotHttp && out.empty() && stats.malformed == 0 && pos == 0) {
      return out;  // not an HTTP direction at all
    }
    ++stats.malformed;
    if (p.status == Status::Incomplete) break;
    const std::size_t next = resync(data, pos + 1, kind);
    if (next == npos) {
      ++stats.abandoned_directions;
      break;
    }
    pos = next;
  }
  return out;
}

}  // namespace

double version_number(HttpVersion v) noexcept {
  switch (v) {
    case HttpVersion::V0_9: return 0.9;
    case HttpVersion::V1_0: return 1.0;
    case HttpVersion::V1_1: return 1.1;
  }
  return 0.0;
}

std::string_view to_string(Label label) noexcept {
  switch (label) {
    case Label::Benign: return "benign";
    case Label::Malicious: return "malicious";
    case Label::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

Label parse_label(std::string_view text) {
  if (iequals(text, "benign")) return Label::Benign;
  if (iequals(text, "malicious")) return Label::Malicious;
  if (iequals(text, "unlabeled")) return Label::Unlabeled;
  throw Error(Errc::InvalidArgument, "unknown label '" + std::string(text) + "'");
}

const Header* HttpMessage::find_header(std::string_view name) const noexcept {
  for (const auto& h : headers) {
    if (iequals(h.name, name)) return &h;
  }
  return nullptr;
}

std::string_view default_reason(int status) noexcept {
  switch (status) {
    case 100: return "Continue";
    case 200: return "OK";
    case 201: return "Created";
    case 204: return "No Content";
    case 206: return "Partial Content";
    case 301: return "Moved Permanently";
    case 302: return "Found";
    case 304: return "Not Modified";
    case 400: return "Bad Request";
    case 401: return "Unauthorized";
    case 403: return "Forbidden";
    case 404: return "Not Found";
    case 500: return "Internal Server Error";
    case 502: return "Bad Gateway";
    case 503: return "Service Unavailable";
    default: return "Unknown";
  }
}

Bytes serialize(const HttpMessage& msg) {
  std::string head;
  if (msg.is_request()) {
    head = msg.method + " " + msg.url;
    if (msg.version == HttpVersion::V0_9 && msg.headers.empty()) {
      head += "\r\n";
      return Bytes(head.begin(), head.end());
    }
    head += " ";
    head += version_text(msg.version);
  } else {
    head = std::string(version_text(msg.version)) + " " + std::to_string(msg.status_code) + " " + msg.reason;
  }
  head += "\r\n";
  for (const auto& h : msg.headers) {
    head += h.name;
    head += ": ";
    head += h.value;
    head += "\r\n";
  }
  head += "\r\n";
  Bytes out(head.begin(), head.end());
  if (has_chunked(msg)) {
    if (!msg.body.empty()) {
      char buf[32];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, msg.body.size(), 16);
      (void)ec;
      out.insert(out.end(), buf, ptr);
      out.push_back('\r');
      out.push_back('\n');
      out.insert(out.end(), msg.body.begin(), msg.body.end());
      out.push_back('\r');
      out.push_back('\n');
    }
    static constexpr std::string_view kLast = "0\r\n\r\n";
    out.insert(out.end(), kLast.begin(), kLast.end());
  } else {
    out.insert(out.end(), msg.body.begin(), msg.body.end());
  }
  return out;
}

ParseOutcome parse_direction(std::span<const std::uint8_t> bytes, MessageKind kind, const ParseLimits& limits) {
  ParseOutcome outcome;
  for (auto& p : parse_impl(bytes, kind, limits, {}, outcome)) {
    p.msg.capture_index = p.offset;
    outcome.messages.push_back(std::move(p.msg));
  }
  return outcome;
}

ParseOutcome parse_messages(const capture::TcpStreamPair& stream, const ParseLimits& limits) {
  ParseOutcome outcome;
  auto requests = parse_impl(stream.client_to_server.data, MessageKind::Request, limits, {}, outcome);
  std::vector<std::string> methods;
  methods.reserve(requests.size());
  for (const auto& r : requests) methods.push_back(r.msg.method);
  auto responses = parse_impl(stream.server_to_client.data, MessageKind::Response, limits, methods, outcome);

  struct Keyed {
    HttpMessage msg;
    std::size_t order;
  };
  std::vector<Keyed> all;
  auto attach = [&](std::vector<ParsedAt>& parsed, const capture::StreamDirection& dir, std::uint16_t src,
                    std::uint16_t dst) {
    for (auto& p : parsed) {
      if (const auto* meta = dir.meta_at(p.offset)) {
        p.msg.ttl = meta->ttl;
        p.msg.timestamp = capture::to_seconds(meta->timestamp_us);
        p.msg.capture_index = meta->capture_index;
      }
      p.msg.src_port = src;
      p.msg.dst_port = dst;
      all.push_back(Keyed{std::move(p.msg), all.size()});
    }
  };
  attach(requests, stream.client_to_server, stream.key.client_port, stream.key.server_port);
  attach(responses, stream.server_to_client, stream.key.server_port, stream.key.client_port);
  std::stable_sort(all.begin(), all.end(), [](const Keyed& a, const Keyed& b) {
    if (a.msg.timestamp != b.msg.timestamp) return a.msg.timestamp < b.msg.timestamp;
    return a.msg.capture_index < b.msg.capture_index;
  });
  for (auto& k : all) outcome.messages.push_back(std::move(k.msg));
  return outcome;
}

Flow build_flow(const capture::TcpStreamPair& stream, Label label) {
  ParseOutcome outcome = parse_messages(stream);
  if (outcome.messages.empty()) {
    throw Error(Errc::EmptyFlow, "no HTTP messages in " + stream.key.to_string());
  }
  Flow flow;
  flow.flow_id = stream.key.to_string() + "#" + std::to_string(stream.first_capture_index);
  flow.label = label;
  flow.lossy = stream.lossy();
  flow.messages = std::move(outcome.messages);
  flow.payload_segments = stream.payload_segments();
  return flow;
}

std::string mask_digest(std::string_view field, std::string_view value, std::size_t hex_chars) {
  std::string input = to_lower(field);
  input.push_back('\0');
  input.append(value);
  const auto digest = sha256(input);
  return to_hex(digest).substr(0, std::min<std::size_t>(hex_chars, 64));
}

Flow mask_flow(const Flow& flow, const MaskConfig& cfg) {
  if (cfg.fields_to_mask.empty()) return flow;
  std::set<std::string> fields;
  for (const auto& f : cfg.fields_to_mask) fields.insert(to_lower(f));

  Flow out = flow;
  for (auto& msg : out.messages) {
    for (auto& h : msg.headers) {
      if (!fields.contains(to_lower(h.name))) continue;
      h.measured_value_length = h.value_length();
      h.value = mask_digest(h.name, h.value, cfg.hash_output_length);
    }
    if (cfg.mask_url_path && msg.is_request() && !msg.url.empty()) {
      msg.measured_url_length = msg.url_length();
      const std::size_t q = msg.url.find('?');
      const std::string path = msg.url.substr(0, q);
      const std::string rest = q == std::string::npos ? std::string() : msg.url.substr(q);
      msg.url = "/" + mask_digest(":path", path, cfg.hash_output_length) + rest;
    }
  }
  return out;
}

}  // namespace hstf::http
