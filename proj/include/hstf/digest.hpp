#ifndef HSTF_DIGEST_HPP
#define HSTF_DIGEST_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hstf {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::span<const std::uint8_t> data);
Sha256 sha256(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> data);

std::string base64_encode(std::span<const std::uint8_t> data);
/** Throws Error(InvalidArgument) on malformed input. */
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace hstf

#endif  // HSTF_DIGEST_HPP
