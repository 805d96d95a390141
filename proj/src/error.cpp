#include "turing/error.hpp"

namespace turing {

const char* to_string(TensorIoErrc code) {
  switch (code) {
    case TensorIoErrc::OpenFailed: return "open failed";
    case TensorIoErrc::WriteFailed: return "write failed";
    case TensorIoErrc::BadMagic: return "bad magic";
    case TensorIoErrc::UnsupportedVersion: return "unsupported version";
    case TensorIoErrc::Truncated: return "truncated";
    case TensorIoErrc::DimensionOverflow: return "dimension overflow";
    case TensorIoErrc::TrailingBytes: return "trailing bytes";
  }
  return "unknown";
}

const char* to_string(ClassifierErrc code) {
  switch (code) {
    case ClassifierErrc::Transport: return "transport failure";
    case ClassifierErrc::HttpStatus: return "unexpected HTTP status";
    case ClassifierErrc::MalformedBody: return "malformed response body";
    case ClassifierErrc::ShapeMismatch: return "input shape mismatch";
  }
  return "unknown";
}

}  // namespace turing
