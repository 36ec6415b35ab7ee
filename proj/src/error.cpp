#include "hstf/error.hpp"

namespace hstf {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::Io: return "Io";
    case Errc::UnsupportedMagic: return "UnsupportedMagic";
    case Errc::TruncatedHeader: return "TruncatedHeader";
    case Errc::UnsupportedLinkType: return "UnsupportedLinkType";
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::MalformedMessage: return "MalformedMessage";
    case Errc::EmptyFlow: return "EmptyFlow";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::ConfigMismatch: return "ConfigMismatch";
    case Errc::SingleClassDataset: return "SingleClassDataset";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace hstf
