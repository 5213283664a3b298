#include "protood/error.hpp"

namespace protood {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::BadHeader: return "BadHeader";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::BadLabel: return "BadLabel";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NotNormalized: return "NotNormalized";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::NoLabels: return "NoLabels";
    case ErrorKind::ClassCountMismatch: return "ClassCountMismatch";
    case ErrorKind::BadClass: return "BadClass";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::MissingInput: return "MissingInput";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace protood
