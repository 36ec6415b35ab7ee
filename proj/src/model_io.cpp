#include <cstring>
#include <fstream>
#include <iterator>

#include "hstf/digest.hpp"
#include "hstf/error.hpp"
#include "hstf/model.hpp"

namespace hstf::model {
namespace {

constexpr char kMagic[8] = {'H', 'S', 'T', 'F', 'M', 'D', 'L', '\0'};
constexpr std::size_t kChecksumBytes = 32;

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    std::uint8_t b[sizeof(T)];
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<std::uint8_t>(bits >> (8 * i));
    raw(b, sizeof(T));
  }
  void f64(double v) { le(v); }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}
  const std::uint8_t* take(std::size_t n) {
    if (n > data_.size() - pos_) throw Error(Errc::CorruptFile, "model file ends early");
    const std::uint8_t* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename T>
  T le() {
    const std::uint8_t* b = take(sizeof(T));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    T v;
    std::memcpy(&v, &bits, sizeof(T));
    return v;
  }
  double f64() { return le<double>(); }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

template <typename Array>
void write_array(Writer& w, const Array& a) {
  for (double v : a) w.f64(v);
}

template <typename Array>
void read_array(Reader& r, Array& a) {
  for (double& v : a) v = r.f64();
}

}  // namespace

void save_model(const HstfModel& model, const std::string& path) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(kModelFormatVersion);
  const std::string cfg = config_to_json(model.config());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
  w.raw(cfg.data(), cfg.size());

  const auto& s = model.stats;
  w.le<std::uint64_t>(s.flows_observed);
  w.le<std::uint64_t>(s.packets_observed);
  write_array(w, s.pl_min);
  write_array(w, s.pl_max);
  write_array(w, s.fl_min);
  write_array(w, s.fl_max);

  const auto tensors = model.params.named_tensors();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t->rank()));
    for (std::size_t d : t->shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : t->values()) w.f64(v);
  }
  const auto digest = sha256(std::span<const std::uint8_t>(w.bytes()));
  w.raw(digest.data(), digest.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  out.close();
  if (!out) throw Error(Errc::Io, "failed writing '" + path + "'");
}

HstfModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open model file '" + path + "'");
  const std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof(kMagic) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(Errc::CorruptFile, "'" + path + "' is not a model file");
  }
  if (data.size() < sizeof(kMagic) + 4 + kChecksumBytes) throw Error(Errc::CorruptFile, "model file truncated");
  const std::span<const std::uint8_t> all(data);
  Reader head(all.subspan(sizeof(kMagic), 4));
  const auto version = head.le<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw Error(Errc::VersionMismatch, "model format version " + std::to_string(version) + ", expected " +
                                           std::to_string(kModelFormatVersion));
  }
  const auto body = all.first(all.size() - kChecksumBytes);
  const auto expected = sha256(body);
  if (std::memcmp(expected.data(), all.data() + body.size(), kChecksumBytes) != 0) {
    throw Error(Errc::CorruptFile, "model checksum mismatch (file truncated or modified)");
  }

  Reader r(body.subspan(sizeof(kMagic) + 4));
  const auto cfg_len = r.le<std::uint32_t>();
  const auto* cfg_bytes = r.take(cfg_len);
  HstfConfig cfg;
  try {
    cfg = config_from_json(std::string_view(reinterpret_cast<const char*>(cfg_bytes), cfg_len));
  } catch (const Error& e) {
    throw Error(Errc::CorruptFile, std::string("model config unreadable: ") + e.what());
  }
  HstfModel model(cfg);
  auto& s = model.stats;
  s.flows_observed = r.le<std::uint64_t>();
  s.packets_observed = r.le<std::uint64_t>();
  read_array(r, s.pl_min);
  read_array(r, s.pl_max);
  read_array(r, s.fl_min);
  read_array(r, s.fl_max);

  auto tensors = model.params.named_tensors();
  const auto count = r.le<std::uint32_t>();
  if (count != tensors.size()) throw Error(Errc::CorruptFile, "model tensor count does not match its config");
  for (auto& [name, t] : tensors) {
    const auto name_len = r.le<std::uint16_t>();
    const auto* nb = r.take(name_len);
    if (std::string_view(reinterpret_cast<const char*>(nb), name_len) != name) {
      throw Error(Errc::CorruptFile, "unexpected tensor in model file (wanted " + name + ")");
    }
    const auto rank = r.le<std::uint8_t>();
    nn::Shape shape(rank);
    for (auto& d : shape) d = r.le<std::uint32_t>();
    if (shape != t->shape()) throw Error(Errc::CorruptFile, "tensor " + name + " has shape " + nn::shape_string(shape));
    for (double& v : t->values()) v = r.f64();
  }
  if (!r.done()) throw Error(Errc::CorruptFile, "trailing bytes in model file");
  return model;
}

}  // namespace hstf::model
