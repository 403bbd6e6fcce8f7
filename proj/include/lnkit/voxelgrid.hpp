#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lnkit/error.hpp"

namespace lnkit {

using Dims = std::array<std::int64_t, 3>;
using Vec3 = std::array<double, 3>;

struct Index3 {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  friend bool operator==(const Index3&, const Index3&) = default;
};

enum class VoxelKind { CtHu, Probability, Binary, Label };

std::string to_string(VoxelKind kind);
std::string to_string(const Dims& dims);

inline std::int64_t voxel_count(const Dims& dims) {
  return dims[0] * dims[1] * dims[2];
}

/// Inclusive voxel-space box.
struct BoundingBox {
  Index3 lo;
  Index3 hi;

  Dims extent() const { return {hi.x - lo.x + 1, hi.y - lo.y + 1, hi.z - lo.z + 1}; }
  bool fits_in(const Dims& host) const {
    return lo.x >= 0 && lo.y >= 0 && lo.z >= 0 && lo.x <= hi.x && lo.y <= hi.y &&
           lo.z <= hi.z && hi.x < host[0] && hi.y < host[1] && hi.z < host[2];
  }
  static BoundingBox whole(const Dims& dims) {
    return {{0, 0, 0}, {dims[0] - 1, dims[1] - 1, dims[2] - 1}};
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// A 3D scalar lattice with physical geometry. Values are stored x-fastest.
/// `origin` is the physical position (mm) of the centre of voxel (0,0,0).
template <class T, VoxelKind K>
class Volume {
 public:
  using value_type = T;
  static constexpr VoxelKind kind = K;

  Volume() : Volume(Dims{1, 1, 1}, Vec3{1.0, 1.0, 1.0}) {}

  Volume(Dims dims, Vec3 spacing, Vec3 origin = {0.0, 0.0, 0.0}, T fill = T{})
      : dims_(dims), spacing_(spacing), origin_(origin) {
    for (int a = 0; a < 3; ++a) {
      require(dims[a] >= 1, ErrorCode::InvalidArgument,
              "grid dimensions must be positive, got " + to_string(dims));
      require(std::isfinite(spacing[a]) && spacing[a] > 0.0, ErrorCode::InvalidArgument,
              "grid spacing must be positive");
    }
    data_.assign(static_cast<std::size_t>(voxel_count(dims)), fill);
  }

  const Dims& dims() const noexcept { return dims_; }
  const Vec3& spacing() const noexcept { return spacing_; }
  const Vec3& origin() const noexcept { return origin_; }
  void set_origin(const Vec3& origin) noexcept { origin_ = origin; }
  void set_spacing(const Vec3& spacing) {
    for (double s : spacing) {
      require(std::isfinite(s) && s > 0.0, ErrorCode::InvalidArgument,
              "grid spacing must be positive");
    }
    spacing_ = spacing;
  }

  std::size_t size() const noexcept { return data_.size(); }

  std::size_t linear(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
    return static_cast<std::size_t>(x + dims_[0] * (y + dims_[1] * z));
  }
  Index3 coords(std::size_t linear_index) const noexcept {
    const auto i = static_cast<std::int64_t>(linear_index);
    return {i % dims_[0], (i / dims_[0]) % dims_[1], i / (dims_[0] * dims_[1])};
  }

  T& operator()(std::int64_t x, std::int64_t y, std::int64_t z) noexcept {
    return data_[linear(x, y, z)];
  }
  const T& operator()(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
    return data_[linear(x, y, z)];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  /// Physical extent of axis `a` in mm (dims * spacing).
  double extent_mm(int a) const noexcept { return static_cast<double>(dims_[a]) * spacing_[a]; }

  template <class Other>
  bool same_geometry(const Other& other, double tol = 1e-6) const noexcept {
    if (dims_ != other.dims()) return false;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(spacing_[a] - other.spacing()[a]) > tol) return false;
      if (std::abs(origin_[a] - other.origin()[a]) > tol) return false;
    }
    return true;
  }

  /// Copies dims/spacing/origin from another grid with fresh storage.
  template <class Other>
  static Volume like(const Other& other, T fill = T{}) {
    return Volume(other.dims(), other.spacing(), other.origin(), fill);
  }

  /// Throws Validation if the stored values break the invariant of this kind.
  void validate_values() const;

 private:
  Dims dims_;
  Vec3 spacing_;
  Vec3 origin_;
  std::vector<T> data_;
};

using CtGrid = Volume<std::int16_t, VoxelKind::CtHu>;
using ProbGrid = Volume<float, VoxelKind::Probability>;
using MaskGrid = Volume<std::uint8_t, VoxelKind::Binary>;
using LabelGrid = Volume<std::uint16_t, VoxelKind::Label>;

template <class T, VoxelKind K>
void Volume<T, K>::validate_values() const {
  if constexpr (K == VoxelKind::Probability) {
    for (float v : data_) {
      require(v >= 0.0f && v <= 1.0f, ErrorCode::Validation,
              "probability grid value outside [0,1]: " + std::to_string(v));
    }
  } else if constexpr (K == VoxelKind::Binary) {
    for (auto v : data_) {
      require(v <= 1, ErrorCode::Validation,
              "binary grid value outside {0,1}: " + std::to_string(int(v)));
    }
  }
}

template <class A, class B>
void require_same_geometry(const A& a, const B& b, const char* what) {
  require(a.same_geometry(b), ErrorCode::InvalidArgument,
          std::string(what) + ": geometry mismatch (" + to_string(a.dims()) + " vs " +
              to_string(b.dims()) + ")");
}

/// Number of nonzero voxels.
template <class G>
std::size_t count_foreground(const G& grid) {
  std::size_t n = 0;
  for (auto v : grid.values()) n += (v != 0);
  return n;
}

}  // namespace lnkit
