#include "hstf/encoded_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "hstf/error.hpp"

namespace hstf::features {
namespace {

constexpr char kMagic[8] = {'H', 'S', 'T', 'F', 'E', 'N', 'C', '\0'};

template <typename T>
void put(std::ofstream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error(Errc::CorruptFile, "encoded dataset ends early");
  return v;
}

std::uint8_t label_code(http::Label l) {
  switch (l) {
    case http::Label::Benign: return 0;
    case http::Label::Malicious: return 1;
    case http::Label::Unlabeled: return 2;
  }
  return 2;
}

}  // namespace

void write_encoded_dataset(const std::string& path, const EncodedDataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot create '" + path + "'");
  put<std::uint8_t>(out, kEncodedFormatVersion);
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.flow_size));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.packet_size));
  put<std::uint64_t>(out, dataset.flows.size());
  for (const auto& f : dataset.flows) {
    if (f.matrices.size() != dataset.flow_size || f.pls.size() != dataset.flow_size) {
      throw Error(Errc::ShapeMismatch, "record does not match dataset flow_size");
    }
    put<std::uint8_t>(out, label_code(f.label));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(f.real_packets));
    std::vector<float> values(kRawRows * kRawCols);
    for (const auto& m : f.matrices) {
      const auto bytes = m.bytes();
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(bytes[i] / 255.0);
      out.write(reinterpret_cast<const char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(float)));
    }
    for (const auto& pl : f.pls) {
      for (double v : pl) put<double>(out, v);
    }
    for (double v : f.fl) put<double>(out, v);
  }
  out.flush();
  if (!out) throw Error(Errc::Io, "write to '" + path + "' failed");
}

EncodedDataset read_encoded_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open '" + path + "'");
  const auto version = get<std::uint8_t>(in);
  if (version != kEncodedFormatVersion) {
    throw Error(Errc::VersionMismatch, "encoded dataset version " + std::to_string(version));
  }
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw Error(Errc::CorruptFile, "bad encoded dataset magic");
  }
  EncodedDataset ds;
  ds.flow_size = get<std::uint32_t>(in);
  ds.packet_size = get<std::uint32_t>(in);
  if (ds.flow_size == 0 || ds.flow_size > kMaxFlowPackets) throw Error(Errc::CorruptFile, "bad flow_size");
  const auto count = get<std::uint64_t>(in);
  std::vector<std::uint8_t> cells(kRawRows * kRawCols);
  std::vector<float> values(kRawRows * kRawCols);
  for (std::uint64_t r = 0; r < count; ++r) {
    EncodedFlow f;
    const auto label = get<std::uint8_t>(in);
    if (label > 2) throw Error(Errc::CorruptFile, "bad label code");
    f.label = label == 0 ? http::Label::Benign : label == 1 ? http::Label::Malicious : http::Label::Unlabeled;
    f.real_packets = get<std::uint32_t>(in);
    if (f.real_packets > ds.flow_size) throw Error(Errc::CorruptFile, "real_packets exceeds flow_size");
    for (std::size_t p = 0; p < ds.flow_size; ++p) {
      in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
      if (!in) throw Error(Errc::CorruptFile, "encoded dataset ends early");
      for (std::size_t i = 0; i < values.size(); ++i) {
        const float v = values[i];
        if (!(v >= 0.0f && v <= 1.0f)) throw Error(Errc::CorruptFile, "matrix value outside [0,1]");
        cells[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
      f.matrices.push_back(RawFeatureMatrix::from_bytes(cells));
    }
    f.pls.resize(ds.flow_size);
    for (auto& pl : f.pls) {
      for (double& v : pl) v = get<double>(in);
    }
    for (double& v : f.fl) v = get<double>(in);
    ds.flows.push_back(std::move(f));
  }
  return ds;
}

}  // namespace hstf::features
