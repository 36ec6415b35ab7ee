/**
 * Seeded synthetic HTTP traffic: labeled flows drawn from class profiles, and
 * a renderer that lays them out as a pcap-ready packet sequence.
 *
 * Profiles come from a JSON document:
 *
 *   {"profiles": [{"name", "class": "benign"|"trojan", "weight", ...fields...}]}
 *
 * Every numeric field is a distribution object {"kind", "a", "b", "min"?,
 * "max"?}: constant (a), uniform_int and uniform (a..b inclusive), normal
 * (mean a, stddev b), lognormal (mu a, sigma b), exponential (mean a), or
 * discrete ("values"/"weights"). Samples are clamped to min/max when given.
 * Categorical fields are {"values": [...], "weights": [...]}. See
 * config/default_profiles.json.
 */

#ifndef HSTF_GENERATOR_HPP
#define HSTF_GENERATOR_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hstf/capture.hpp"
#include "hstf/http.hpp"

namespace hstf::generator {

struct Distribution {
  enum class Kind { Constant, UniformInt, Uniform, Normal, LogNormal, Exponential, Discrete };

  Kind kind = Kind::Constant;
  double a = 0.0;  // value | low | mean | mu | mean (exponential)
  double b = 0.0;  // high | stddev | sigma
  std::vector<double> values;   // discrete only
  std::vector<double> weights;  // discrete only
  std::optional<double> min;
  std::optional<double> max;

  double sample(std::mt19937_64& rng) const;
  /** Exact mean before clamping; used for documentation and sanity checks. */
  double nominal_mean() const;
};

template <typename T>
struct Choice {
  std::vector<T> values;
  std::vector<double> weights;

  const T& sample(std::mt19937_64& rng) const {
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    return values[pick(rng)];
  }
};

struct GeneratorProfile {
  std::string name;
  http::Label label = http::Label::Benign;
  double weight = 1.0;  // relative share within its class

  Distribution transactions;           // request/response pairs per connection
  double request_only_probability = 0;  // the last request gets no response
  Choice<std::string> methods;
  Choice<std::string> hosts;
  Distribution path_segments;
  Distribution segment_length;
  Choice<std::string> extensions;  // appended to the last path segment
  Distribution query_length;       // 0 means no query string
  Choice<std::vector<std::string>> request_headers;   // header-name sets, in order
  Choice<std::vector<std::string>> response_headers;
  std::map<std::string, Choice<std::string>> header_values;  // by header name; others get random tokens
  Distribution token_length;
  Distribution request_body_bytes;  // POST/PUT only
  Distribution response_body_bytes;
  double binary_body_probability = 0;  // otherwise bodies are printable text
  Choice<int> status_codes;
  Distribution interval_seconds;        // next request after the previous response
  Distribution response_delay_seconds;  // response after its request
  Choice<int> client_ttl;
  Choice<int> server_ttl;
};

struct ProfileSet {
  std::vector<GeneratorProfile> profiles;
  /// SHA-256 over the canonical JSON text, hex encoded.
  std::string hash;
};

/** Throws InvalidArgument for malformed documents or improper distributions. */
ProfileSet parse_profiles(std::string_view json_text);
ProfileSet load_profiles(const std::string& path);
/** The built-in profile document (same text as config/default_profiles.json). */
std::string_view default_profiles_json();
ProfileSet default_profiles();

struct CaptureLayout {
  std::size_t mss = 1460;
  capture::ByteOrder byte_order = capture::ByteOrder::Little;
};

/**
 * Labeled flows, shuffled deterministically, each with a unique client
 * address. flow_id is "gen-<n>" and payload_segments follows the layout's MSS.
 * Throws InvalidArgument when a requested class has no profile.
 */
std::vector<http::Flow> generate_corpus(const ProfileSet& profiles, std::size_t n_benign, std::size_t n_malicious,
                                        std::uint64_t seed, const CaptureLayout& layout = {});

/** Connection endpoints the renderer uses for flow `index` of a corpus. */
struct Endpoints {
  std::uint32_t client_ip = 0;
  std::uint16_t client_port = 0;
  std::uint32_t server_ip = 0;
  std::uint16_t server_port = 80;
};
Endpoints endpoints_for(std::size_t index, std::string_view host);

/** Segments each message at the MSS; one message never shares a segment with another. */
std::size_t payload_segment_count(const http::Flow& flow, std::size_t mss);

/**
 * Frames for every flow (handshake, data, acks, FIN exchange), merged across
 * flows by timestamp. Endpoints come from each flow's position and Host.
 */
std::vector<capture::RawPacket> render_capture(const std::vector<http::Flow>& flows, const CaptureLayout& layout = {});

/** Means over a corpus, comparable with the capture statistics the defaults target. */
struct CorpusSummary {
  std::size_t flows = 0;
  std::size_t messages = 0;
  double mean_message_bytes = 0.0;
  double mean_flow_messages = 0.0;
};
CorpusSummary summarize(const std::vector<http::Flow>& flows);

/** Target means the default profiles are calibrated against. */
constexpr double kTargetMeanMessageBytes = 845.894;
constexpr double kTargetMeanFlowMessages = 3.648;

}  // namespace hstf::generator

#endif  // HSTF_GENERATOR_HPP
