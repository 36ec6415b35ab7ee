#include "hstf/generator.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hstf/digest.hpp"
#include "hstf/error.hpp"
#include "json.hpp"

namespace hstf::generator {
namespace {

using nlohmann::json;

constexpr std::int64_t kEpochUs = 1'600'000'000'000'000;  // 2020-09-13
constexpr std::int64_t kFlowSpacingUs = 20'000;
constexpr std::int64_t kSegmentGapUs = 20;
constexpr std::int64_t kMinGapUs = 1'000;
constexpr std::uint16_t kServerPort = 80;

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::InvalidArgument, "profile: " + what); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) bad(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) bad("unknown key '" + key + "' in " + where);
  }
}

std::vector<double> parse_weights(const json& j, std::size_t n, const std::string& where) {
  if (!j.is_array() || j.size() != n) bad(where + ": weights must match values");
  std::vector<double> w;
  double total = 0.0;
  for (const auto& x : j) {
    if (!x.is_number()) bad(where + ": weights must be numbers");
    const double v = x.get<double>();
    if (!(v >= 0.0) || !std::isfinite(v)) bad(where + ": weights must be non-negative");
    total += v;
    w.push_back(v);
  }
  if (!(total > 0.0)) bad(where + ": weights sum to zero");
  return w;
}

Distribution parse_distribution(const json& j, const std::string& where) {
  check_keys(j, {"kind", "a", "b", "values", "weights", "min", "max"}, where);
  if (!j.contains("kind") || !j["kind"].is_string()) bad(where + ": missing kind");
  const std::string kind = j["kind"].get<std::string>();
  auto number = [&](const char* key, bool required) {
    if (!j.contains(key)) {
      if (required) bad(where + ": missing '" + key + "'");
      return 0.0;
    }
    if (!j[key].is_number()) bad(where + ": '" + key + "' must be a number");
    return j[key].get<double>();
  };
  Distribution d;
  if (kind == "constant") {
    d.kind = Distribution::Kind::Constant;
    d.a = number("a", true);
  } else if (kind == "uniform_int" || kind == "uniform") {
    d.kind = kind == "uniform" ? Distribution::Kind::Uniform : Distribution::Kind::UniformInt;
    d.a = number("a", true);
    d.b = number("b", true);
    if (d.a > d.b) bad(where + ": a must not exceed b");
    if (d.kind == Distribution::Kind::UniformInt && (d.a != std::floor(d.a) || d.b != std::floor(d.b))) {
      bad(where + ": uniform_int bounds must be integers");
    }
  } else if (kind == "normal" || kind == "lognormal") {
    d.kind = kind == "normal" ? Distribution::Kind::Normal : Distribution::Kind::LogNormal;
    d.a = number("a", true);
    d.b = number("b", true);
    if (d.b < 0.0) bad(where + ": spread must be non-negative");
  } else if (kind == "exponential") {
    d.kind = Distribution::Kind::Exponential;
    d.a = number("a", true);
    if (!(d.a > 0.0)) bad(where + ": exponential mean must be positive");
  } else if (kind == "discrete") {
    d.kind = Distribution::Kind::Discrete;
    if (!j.contains("values") || !j["values"].is_array() || j["values"].empty()) bad(where + ": missing values");
    for (const auto& v : j["values"]) {
      if (!v.is_number()) bad(where + ": values must be numbers");
      d.values.push_back(v.get<double>());
    }
    d.weights = parse_weights(j.value("weights", json()), d.values.size(), where);
  } else {
    bad(where + ": unknown kind '" + kind + "'");
  }
  if (j.contains("min")) d.min = number("min", true);
  if (j.contains("max")) d.max = number("max", true);
  if (d.min && d.max && *d.min > *d.max) bad(where + ": min exceeds max");
  if (!std::isfinite(d.a) || !std::isfinite(d.b)) bad(where + ": parameters must be finite");
  return d;
}

template <typename T>
Choice<T> parse_choice(const json& j, const std::string& where) {
  check_keys(j, {"values", "weights"}, where);
  if (!j.contains("values") || !j["values"].is_array() || j["values"].empty()) bad(where + ": missing values");
  Choice<T> c;
  try {
    c.values = j["values"].get<std::vector<T>>();
  } catch (const json::exception&) {
    bad(where + ": values have the wrong type");
  }
  c.weights = parse_weights(j.value("weights", json()), c.values.size(), where);
  return c;
}

double parse_probability(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return 0.0;
  if (!j[key].is_number()) bad(where + ": '" + key + "' must be a number");
  const double p = j[key].get<double>();
  if (!(p >= 0.0 && p <= 1.0)) bad(where + ": '" + key + "' must lie in [0,1]");
  return p;
}

GeneratorProfile parse_profile(const json& j, std::size_t index) {
  const std::string where = "profiles[" + std::to_string(index) + "]";
  check_keys(j,
             {"name", "class", "weight", "transactions", "request_only_probability", "methods", "hosts",
              "path_segments", "segment_length", "extensions", "query_length", "request_headers", "response_headers",
              "header_values", "token_length", "request_body_bytes", "response_body_bytes",
              "binary_body_probability", "status_codes", "interval_seconds", "response_delay_seconds", "client_ttl",
              "server_ttl"},
             where);
  for (const char* key : {"name", "class", "transactions", "methods", "hosts", "path_segments", "segment_length",
                          "extensions", "query_length", "request_headers", "response_headers", "token_length",
                          "request_body_bytes", "response_body_bytes", "status_codes", "interval_seconds",
                          "response_delay_seconds", "client_ttl", "server_ttl"}) {
    if (!j.contains(key)) bad(where + ": missing '" + key + "'");
  }
  GeneratorProfile p;
  if (!j["name"].is_string()) bad(where + ": name must be a string");
  p.name = j["name"].get<std::string>();
  const std::string field = where + " (" + p.name + ")";
  const json& cls = j["class"];
  if (cls == "benign") {
    p.label = http::Label::Benign;
  } else if (cls == "trojan" || cls == "malicious") {
    p.label = http::Label::Malicious;
  } else {
    bad(field + ": class must be benign or trojan");
  }
  if (j.contains("weight")) {
    if (!j["weight"].is_number() || !(j["weight"].get<double>() > 0.0)) bad(field + ": weight must be positive");
    p.weight = j["weight"].get<double>();
  }
  auto dist = [&](const char* key) { return parse_distribution(j[key], field + "." + key); };
  p.transactions = dist("transactions");
  p.request_only_probability = parse_probability(j, "request_only_probability", field);
  p.methods = parse_choice<std::string>(j["methods"], field + ".methods");
  p.hosts = parse_choice<std::string>(j["hosts"], field + ".hosts");
  p.path_segments = dist("path_segments");
  p.segment_length = dist("segment_length");
  p.extensions = parse_choice<std::string>(j["extensions"], field + ".extensions");
  p.query_length = dist("query_length");
  p.request_headers = parse_choice<std::vector<std::string>>(j["request_headers"], field + ".request_headers");
  p.response_headers = parse_choice<std::vector<std::string>>(j["response_headers"], field + ".response_headers");
  if (j.contains("header_values")) {
    if (!j["header_values"].is_object()) bad(field + ".header_values must be an object");
    for (const auto& [name, choice] : j["header_values"].items()) {
      p.header_values.emplace(name, parse_choice<std::string>(choice, field + ".header_values." + name));
    }
  }
  p.token_length = dist("token_length");
  p.request_body_bytes = dist("request_body_bytes");
  p.response_body_bytes = dist("response_body_bytes");
  p.binary_body_probability = parse_probability(j, "binary_body_probability", field);
  p.status_codes = parse_choice<int>(j["status_codes"], field + ".status_codes");
  for (int s : p.status_codes.values) {
    if (s < 100 || s > 599) bad(field + ": status codes must lie in 100..599");
  }
  p.interval_seconds = dist("interval_seconds");
  p.response_delay_seconds = dist("response_delay_seconds");
  p.client_ttl = parse_choice<int>(j["client_ttl"], field + ".client_ttl");
  p.server_ttl = parse_choice<int>(j["server_ttl"], field + ".server_ttl");
  for (const auto* ttls : {&p.client_ttl, &p.server_ttl}) {
    for (int t : ttls->values) {
      if (t < 1 || t > 255) bad(field + ": TTL values must lie in 1..255");
    }
  }
  return p;
}

// ---- flow synthesis ----

std::string random_string(std::mt19937_64& rng, std::size_t n, std::string_view alphabet) {
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s(n, ' ');
  for (auto& c : s) c = alphabet[pick(rng)];
  return s;
}

constexpr std::string_view kAlnum = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
constexpr std::string_view kLower = "abcdefghijklmnopqrstuvwxyz0123456789";
constexpr std::string_view kText = "abcdefghijklmnopqrstuvwxyz ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789<>/=\".,;:-_\n";

std::size_t count(const Distribution& d, std::mt19937_64& rng) {
  return static_cast<std::size_t>(std::max(0.0, std::round(d.sample(rng))));
}

std::int64_t micros(const Distribution& d, std::mt19937_64& rng) {
  return std::max<std::int64_t>(kMinGapUs, std::llround(d.sample(rng) * 1e6));
}

std::string http_date(std::int64_t us) {
  const std::time_t t = static_cast<std::time_t>(us / 1'000'000);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "%a, %d %b %Y %H:%M:%S GMT", &tm);
  return buf;
}

std::string make_url(const GeneratorProfile& p, std::mt19937_64& rng) {
  std::string url;
  const std::size_t segments = std::max<std::size_t>(1, count(p.path_segments, rng));
  for (std::size_t i = 0; i < segments; ++i) {
    url += '/';
    url += random_string(rng, std::max<std::size_t>(1, count(p.segment_length, rng)), kLower);
  }
  url += p.extensions.sample(rng);
  const std::size_t qlen = count(p.query_length, rng);
  if (qlen > 0) {
    std::string q;
    std::uniform_int_distribution<std::size_t> key_len(1, 6), value_len(4, 32);
    while (q.size() < qlen) {
      if (!q.empty()) q += '&';
      q += random_string(rng, key_len(rng), "abcdefghijklmnopqrstuvwxyz");
      q += '=';
      q += random_string(rng, value_len(rng), kAlnum);
    }
    q.resize(qlen);
    url += '?';
    url += q;
  }
  return url;
}

http::Bytes make_body(const GeneratorProfile& p, std::size_t n, std::mt19937_64& rng) {
  http::Bytes body(n);
  if (std::bernoulli_distribution(p.binary_body_probability)(rng)) {
    std::uniform_int_distribution<int> byte(0, 255);
    for (auto& b : body) b = static_cast<std::uint8_t>(byte(rng));
  } else {
    const std::string text = random_string(rng, n, kText);
    std::copy(text.begin(), text.end(), body.begin());
  }
  return body;
}

std::string header_value(const GeneratorProfile& p, const std::string& name, const std::string& host,
                         std::int64_t ts_us, std::mt19937_64& rng) {
  if (auto it = p.header_values.find(name); it != p.header_values.end()) return it->second.sample(rng);
  const std::size_t n = std::max<std::size_t>(1, count(p.token_length, rng));
  if (name == "Host") return host;
  if (name == "Date") return http_date(ts_us);
  if (name == "Last-Modified") return http_date(ts_us - 86'400'000'000LL * (1 + static_cast<std::int64_t>(n)));
  if (name == "Referer") return "http://" + host + make_url(p, rng);
  if (name == "Cookie") return "sid=" + random_string(rng, n, kAlnum);
  if (name == "Set-Cookie") return "sid=" + random_string(rng, n, kAlnum) + "; Path=/; HttpOnly";
  if (name == "Authorization") return "Bearer " + random_string(rng, n, kAlnum);
  if (name == "ETag") return "\"" + random_string(rng, n, "0123456789abcdef") + "\"";
  if (name == "Content-Type") return "application/x-www-form-urlencoded";
  return random_string(rng, n, kAlnum);
}

void fill_headers(http::HttpMessage& m, const GeneratorProfile& p, const std::vector<std::string>& names,
                  const std::string& host, std::int64_t ts_us, std::size_t content_length, bool needs_length,
                  std::mt19937_64& rng) {
  bool has_length = false;
  for (const auto& name : names) {
    if (name == "Content-Length") {
      m.headers.push_back({name, std::to_string(content_length), std::nullopt});
      has_length = true;
    } else {
      m.headers.push_back({name, header_value(p, name, host, ts_us, rng), std::nullopt});
    }
  }
  if (needs_length && !has_length) {
    if (!m.find_header("Content-Type")) {
      m.headers.push_back({"Content-Type", header_value(p, "Content-Type", host, ts_us, rng), std::nullopt});
    }
    m.headers.push_back({"Content-Length", std::to_string(content_length), std::nullopt});
  }
}

std::int64_t segments_of(std::size_t wire, std::size_t mss) {
  return static_cast<std::int64_t>((wire + mss - 1) / mss);
}

http::Flow make_flow(const GeneratorProfile& p, std::size_t index, std::uint64_t seed, const CaptureLayout& layout) {
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(index + 1)));
  http::Flow flow;
  flow.flow_id = "gen-" + std::to_string(index);
  flow.label = p.label;
  const std::string host = p.hosts.sample(rng);
  const Endpoints ep = endpoints_for(index, host);
  const auto client_ttl = static_cast<std::uint8_t>(p.client_ttl.sample(rng));
  const auto server_ttl = static_cast<std::uint8_t>(p.server_ttl.sample(rng));
  const std::size_t transactions = std::max<std::size_t>(1, count(p.transactions, rng));

  std::int64_t t = kEpochUs + static_cast<std::int64_t>(index) * kFlowSpacingUs +
                   std::uniform_int_distribution<std::int64_t>(0, kFlowSpacingUs / 2)(rng);
  for (std::size_t k = 0; k < transactions; ++k) {
    http::HttpMessage req;
    req.kind = http::MessageKind::Request;
    req.method = p.methods.sample(rng);
    req.url = make_url(p, rng);
    req.src_port = ep.client_port;
    req.dst_port = ep.server_port;
    req.ttl = client_ttl;
    req.timestamp = capture::to_seconds(t);
    const bool has_body = req.method == "POST" || req.method == "PUT";
    if (has_body) req.body = make_body(p, std::max<std::size_t>(1, count(p.request_body_bytes, rng)), rng);
    fill_headers(req, p, p.request_headers.sample(rng), host, t, req.body.size(), has_body, rng);
    req.body_length = req.body.size();
    req.wire_length = http::serialize(req).size();
    t += segments_of(req.wire_length, layout.mss) * kSegmentGapUs;
    flow.messages.push_back(std::move(req));

    const bool last = k + 1 == transactions;
    if (last && std::bernoulli_distribution(p.request_only_probability)(rng)) break;

    t += micros(p.response_delay_seconds, rng);
    http::HttpMessage resp;
    resp.kind = http::MessageKind::Response;
    resp.status_code = p.status_codes.sample(rng);
    resp.reason = std::string(http::default_reason(resp.status_code));
    resp.src_port = ep.server_port;
    resp.dst_port = ep.client_port;
    resp.ttl = server_ttl;
    resp.timestamp = capture::to_seconds(t);
    const std::size_t declared = count(p.response_body_bytes, rng);
    const int s = resp.status_code;
    const bool bodyless = s == 204 || s == 304 || (s >= 100 && s < 200);
    const bool head = flow.messages.back().method == "HEAD";
    if (!bodyless && !head) resp.body = make_body(p, declared, rng);
    fill_headers(resp, p, p.response_headers.sample(rng), host, t, bodyless ? 0 : declared, !bodyless, rng);
    resp.body_length = resp.body.size();
    resp.wire_length = http::serialize(resp).size();
    t += segments_of(resp.wire_length, layout.mss) * kSegmentGapUs;
    flow.messages.push_back(std::move(resp));

    if (!last) t += micros(p.interval_seconds, rng);
  }
  flow.payload_segments = payload_segment_count(flow, layout.mss);
  return flow;
}

const GeneratorProfile& pick_profile(const std::vector<const GeneratorProfile*>& pool, std::mt19937_64& rng) {
  std::vector<double> w;
  for (const auto* p : pool) w.push_back(p->weight);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return *pool[pick(rng)];
}

}  // namespace

double Distribution::sample(std::mt19937_64& rng) const {
  double v = a;
  switch (kind) {
    case Kind::Constant:
      break;
    case Kind::UniformInt:
      v = static_cast<double>(std::uniform_int_distribution<long long>(std::llround(a), std::llround(b))(rng));
      break;
    case Kind::Uniform:
      v = std::uniform_real_distribution<double>(a, b)(rng);
      break;
    case Kind::Normal:
      v = b > 0.0 ? std::normal_distribution<double>(a, b)(rng) : a;
      break;
    case Kind::LogNormal:
      v = b > 0.0 ? std::lognormal_distribution<double>(a, b)(rng) : std::exp(a);
      break;
    case Kind::Exponential:
      v = std::exponential_distribution<double>(1.0 / a)(rng);
      break;
    case Kind::Discrete:
      v = values[std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng)];
      break;
  }
  if (min) v = std::max(v, *min);
  if (max) v = std::min(v, *max);
  return v;
}

double Distribution::nominal_mean() const {
  switch (kind) {
    case Kind::Constant:
    case Kind::Normal:
    case Kind::Exponential:
      return a;
    case Kind::UniformInt:
    case Kind::Uniform:
      return 0.5 * (a + b);
    case Kind::LogNormal:
      return std::exp(a + 0.5 * b * b);
    case Kind::Discrete: {
      const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
      double m = 0.0;
      for (std::size_t i = 0; i < values.size(); ++i) m += values[i] * weights[i] / total;
      return m;
    }
  }
  return a;
}

ProfileSet parse_profiles(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    bad(std::string("not valid JSON: ") + e.what());
  }
  check_keys(doc, {"profiles"}, "document");
  if (!doc.contains("profiles") || !doc["profiles"].is_array() || doc["profiles"].empty()) {
    bad("document needs a non-empty 'profiles' array");
  }
  ProfileSet set;
  for (std::size_t i = 0; i < doc["profiles"].size(); ++i) set.profiles.push_back(parse_profile(doc["profiles"][i], i));
  set.hash = to_hex(sha256(doc.dump()));
  return set;
}

ProfileSet load_profiles(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open profile file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_profiles(text.str());
}

ProfileSet default_profiles() { return parse_profiles(default_profiles_json()); }

Endpoints endpoints_for(std::size_t index, std::string_view host) {
  if (index >= (1u << 24) - 2) throw Error(Errc::InvalidArgument, "corpus index beyond the client address range");
  Endpoints ep;
  ep.client_ip = 0x0A000000u + static_cast<std::uint32_t>(index) + 1;
  ep.client_port = static_cast<std::uint16_t>(49152 + (index * 7919 + 13) % 16384);
  std::uint32_t h = 2166136261u;
  for (char c : host) h = (h ^ static_cast<std::uint8_t>(c)) * 16777619u;
  ep.server_ip = 0xC6120000u + h % 131070u + 1;  // 198.18.0.0/15
  ep.server_port = kServerPort;
  return ep;
}

std::size_t payload_segment_count(const http::Flow& flow, std::size_t mss) {
  if (mss == 0) throw Error(Errc::InvalidArgument, "mss must be positive");
  std::size_t n = 0;
  for (const auto& m : flow.messages) n += static_cast<std::size_t>(segments_of(m.wire_length, mss));
  return n;
}

std::vector<http::Flow> generate_corpus(const ProfileSet& profiles, std::size_t n_benign, std::size_t n_malicious,
                                        std::uint64_t seed, const CaptureLayout& layout) {
  std::vector<const GeneratorProfile*> benign, malicious;
  for (const auto& p : profiles.profiles) (p.label == http::Label::Benign ? benign : malicious).push_back(&p);
  if (n_benign > 0 && benign.empty()) throw Error(Errc::InvalidArgument, "no benign profile");
  if (n_malicious > 0 && malicious.empty()) throw Error(Errc::InvalidArgument, "no trojan profile");

  std::vector<http::Label> labels(n_benign, http::Label::Benign);
  labels.insert(labels.end(), n_malicious, http::Label::Malicious);
  std::mt19937_64 rng(splitmix64(seed));
  for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng() % i]);

  std::vector<http::Flow> flows;
  flows.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& pool = labels[i] == http::Label::Benign ? benign : malicious;
    flows.push_back(make_flow(pick_profile(pool, rng), i, seed, layout));
  }
  return flows;
}

std::vector<capture::RawPacket> render_capture(const std::vector<http::Flow>& flows, const CaptureLayout& layout) {
  if (layout.mss == 0) throw Error(Errc::InvalidArgument, "mss must be positive");
  struct Event {
    std::int64_t ts;
    capture::Bytes frame;
  };
  std::vector<Event> events;

  for (std::size_t index = 0; index < flows.size(); ++index) {
    const http::Flow& flow = flows[index];
    if (flow.messages.empty()) continue;
    const http::HttpMessage& first = flow.messages.front();
    const http::Header* host = first.find_header("Host");
    const Endpoints ep = endpoints_for(index, host ? std::string_view(host->value) : std::string_view());
    std::uint8_t ttl[2] = {64, 64};  // client, server; the first message of each side decides
    for (const auto& m : flow.messages) {
      if (m.is_request()) {
        ttl[0] = m.ttl;
        break;
      }
    }
    for (const auto& m : flow.messages) {
      if (!m.is_request()) {
        ttl[1] = m.ttl;
        break;
      }
    }
    std::uint32_t next_seq[2] = {static_cast<std::uint32_t>(splitmix64(index * 2 + 1)),
                                 static_cast<std::uint32_t>(splitmix64(index * 2 + 2))};

    auto emit = [&](int side, std::int64_t ts, capture::TcpFlags flags, std::span<const std::uint8_t> payload) {
      capture::TcpSegment seg;
      seg.tuple = side == 0 ? capture::FiveTuple{ep.client_ip, ep.server_ip, ep.client_port, ep.server_port, 6}
                            : capture::FiveTuple{ep.server_ip, ep.client_ip, ep.server_port, ep.client_port, 6};
      seg.seq = next_seq[side];
      seg.ack = next_seq[1 - side];
      seg.flags = flags;
      seg.ip_ttl = ttl[side];
      seg.capture_index = events.size();
      seg.payload.assign(payload.begin(), payload.end());
      next_seq[side] += static_cast<std::uint32_t>(payload.size()) + (flags.syn ? 1 : 0) + (flags.fin ? 1 : 0);
      events.push_back(Event{ts, capture::build_frame(seg)});
    };

    const std::int64_t t0 = std::llround(first.timestamp * 1e6);
    emit(0, t0 - 3 * kSegmentGapUs * 10, {.syn = true}, {});
    emit(1, t0 - 2 * kSegmentGapUs * 10, {.syn = true, .ack = true}, {});
    emit(0, t0 - kSegmentGapUs * 10, {.ack = true}, {});
    std::int64_t last = t0;
    for (const auto& m : flow.messages) {
      const int side = m.is_request() ? 0 : 1;
      const http::Bytes wire = http::serialize(m);
      std::int64_t ts = std::llround(m.timestamp * 1e6);
      for (std::size_t off = 0; off < wire.size(); off += layout.mss) {
        const std::size_t n = std::min(layout.mss, wire.size() - off);
        emit(side, ts, {.ack = true, .psh = off + n == wire.size()}, std::span(wire).subspan(off, n));
        ts += kSegmentGapUs;
      }
      emit(1 - side, ts, {.ack = true}, {});
      last = ts;
    }
    emit(0, last + kMinGapUs, {.fin = true, .ack = true}, {});
    emit(1, last + kMinGapUs + 100, {.fin = true, .ack = true}, {});
    emit(0, last + kMinGapUs + 200, {.ack = true}, {});
  }

  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return events[a].ts < events[b].ts; });
  std::vector<capture::RawPacket> packets;
  packets.reserve(events.size());
  for (std::size_t i : order) {
    capture::RawPacket p;
    p.ts_sec = static_cast<std::uint32_t>(events[i].ts / 1'000'000);
    p.ts_usec = static_cast<std::uint32_t>(events[i].ts % 1'000'000);
    p.original_length = static_cast<std::uint32_t>(events[i].frame.size());
    p.captured = std::move(events[i].frame);
    packets.push_back(std::move(p));
  }
  return packets;
}

CorpusSummary summarize(const std::vector<http::Flow>& flows) {
  CorpusSummary s;
  s.flows = flows.size();
  double bytes = 0.0;
  for (const auto& f : flows) {
    s.messages += f.messages.size();
    for (const auto& m : f.messages) bytes += static_cast<double>(m.wire_length);
  }
  if (s.messages > 0) s.mean_message_bytes = bytes / static_cast<double>(s.messages);
  if (s.flows > 0) s.mean_flow_messages = static_cast<double>(s.messages) / static_cast<double>(s.flows);
  return s;
}

}  // namespace hstf::generator
