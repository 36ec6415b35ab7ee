/**
 * Binary encoded-dataset file (little-endian):
 *
 *   u8  version (=1)
 *   8B  magic "HSTFENC\0"
 *   u32 flow_size, u32 packet_size, u64 record count
 *   per record:
 *     u8  label (0 benign, 1 malicious, 2 unlabeled)
 *     u32 real_packets
 *     f32 matrices[flow_size][47][200]
 *     f64 pls[flow_size][100]
 *     f64 fl[170]
 */

#ifndef HSTF_ENCODED_IO_HPP
#define HSTF_ENCODED_IO_HPP

#include <span>
#include <string>
#include <vector>

#include "hstf/features.hpp"

namespace hstf::features {

constexpr std::uint8_t kEncodedFormatVersion = 1;

struct EncodedDataset {
  std::size_t flow_size = kDefaultFlowSize;
  std::size_t packet_size = kDefaultPacketSize;
  std::vector<EncodedFlow> flows;
};

void write_encoded_dataset(const std::string& path, const EncodedDataset& dataset);
/** Throws VersionMismatch, CorruptFile or ShapeMismatch. */
EncodedDataset read_encoded_dataset(const std::string& path);

}  // namespace hstf::features

#endif  // HSTF_ENCODED_IO_HPP
