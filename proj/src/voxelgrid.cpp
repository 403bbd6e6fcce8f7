#include "lnkit/voxelgrid.hpp"

namespace lnkit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::OutOfBounds: return "out-of-bounds";
    case ErrorCode::Format: return "format-error";
    case ErrorCode::UnsupportedFormat: return "unsupported-format";
    case ErrorCode::Consistency: return "consistency-error";
    case ErrorCode::Validation: return "validation-error";
    case ErrorCode::NoLungFound: return "no-lung-found";
    case ErrorCode::Manifest: return "manifest-error";
    case ErrorCode::Spec: return "spec-error";
    case ErrorCode::Io: return "io-error";
  }
  return "unknown";
}

std::string to_string(VoxelKind kind) {
  switch (kind) {
    case VoxelKind::CtHu: return "ct-hu";
    case VoxelKind::Probability: return "probability";
    case VoxelKind::Binary: return "binary";
    case VoxelKind::Label: return "label";
  }
  return "unknown";
}

std::string to_string(const Dims& dims) {
  return std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "x" + std::to_string(dims[2]);
}

}  // namespace lnkit
