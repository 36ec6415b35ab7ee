#ifndef HSTF_ERROR_HPP
#define HSTF_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace hstf {

/** Failure categories shared by every module. */
enum class Errc {
  Io,
  UnsupportedMagic,
  TruncatedHeader,
  UnsupportedLinkType,
  MalformedHeader,
  MalformedMessage,
  EmptyFlow,
  ShapeMismatch,
  ConfigMismatch,
  SingleClassDataset,
  VersionMismatch,
  CorruptFile,
  LengthMismatch,
  InsufficientData,
  InvalidArgument,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace hstf

#endif  // HSTF_ERROR_HPP
