#ifndef HSTF_TESTS_FLOW_FUZZ_HPP
#define HSTF_TESTS_FLOW_FUZZ_HPP

#include <random>
#include <string>

#include "hstf/http.hpp"

namespace hstf::testing {

inline std::string random_text(std::mt19937_64& rng, std::size_t n) {
  std::string s(n, ' ');
  for (auto& c : s) c = static_cast<char>('!' + rng() % 94);
  return s;
}

/**
 * Randomized flow covering the encoder edge cases: 1..70 messages, 0..60
 * headers, empty and long bodies, odd methods and status codes.
 */
inline http::Flow random_http_flow(std::mt19937_64& rng) {
  static const char* kMethods[] = {"GET", "POST", "HEAD", "PUT", "OPTIONS"};
  static const int kStatus[] = {100, 200, 204, 301, 304, 404, 500, 503, 302};
  http::Flow flow;
  const std::size_t shape = rng() % 10;
  const std::size_t n = shape == 0 ? 50 + rng() % 21 : 1 + rng() % 8;
  double t = static_cast<double>(rng() % 1000);
  for (std::size_t i = 0; i < n; ++i) {
    http::HttpMessage m;
    m.kind = rng() % 2 ? http::MessageKind::Request : http::MessageKind::Response;
    if (m.is_request()) {
      m.method = kMethods[rng() % 5];
      m.url = "/" + random_text(rng, rng() % 300);
    } else {
      m.status_code = kStatus[rng() % 9];
      m.reason = "R";
    }
    m.version = static_cast<http::HttpVersion>(rng() % 3);
    const std::size_t headers = rng() % 4 == 0 ? 45 + rng() % 16 : rng() % 6;
    for (std::size_t h = 0; h < headers; ++h) {
      m.headers.push_back({"X-" + random_text(rng, rng() % 12), random_text(rng, rng() % 80), std::nullopt});
    }
    const std::size_t body = rng() % 3 == 0 ? 0 : rng() % 2000;
    m.body.resize(body);
    for (auto& b : m.body) b = static_cast<std::uint8_t>(rng());
    m.body_length = body;
    m.wire_length = http::serialize(m).size();
    m.src_port = static_cast<std::uint16_t>(1 + rng() % 65535);
    m.dst_port = static_cast<std::uint16_t>(1 + rng() % 65535);
    m.ttl = static_cast<std::uint8_t>(rng());
    t += static_cast<double>(rng() % 5000) / 1000.0;
    m.timestamp = t;
    flow.messages.push_back(std::move(m));
  }
  flow.payload_segments = rng() % 2 ? n + rng() % 10 : 0;
  flow.label = rng() % 2 ? http::Label::Malicious : http::Label::Benign;
  return flow;
}

}  // namespace hstf::testing

#endif  // HSTF_TESTS_FLOW_FUZZ_HPP
