#pragma once

#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "lnkit/geometry.hpp"
#include "lnkit/voxelgrid.hpp"

namespace lnkit {

struct SlabSpec {
  std::int64_t slab_size = 32;
  std::int64_t stride = 8;
  std::array<std::int64_t, 2> axial_dims{256, 192};

  /// slab_size >= 1, 1 <= stride <= slab_size, axial dims >= 1.
  void validate() const;
};

enum class PreprocessMode { Slab, FullVolume };

struct PreprocessConfig {
  PreprocessMode mode = PreprocessMode::Slab;
  SlabSpec slab;
  Dims fullvol_dims{128, 128, 144};
  double target_spacing_mm = 1.0;
  double clip_lo_hu = -250.0;
  double clip_hi_hu = 500.0;
};

struct Preprocessed {
  ProbGrid volume;
  GeometryRecord record;
};

/// Fallback lung extraction parameters used when no mask is supplied.
inline constexpr double kLungThresholdHu = -320.0;

/// Tightest box around the lung mask. Without a mask: voxels below -320 HU,
/// 6-connected, the two largest components that avoid the x/y border frame.
BoundingBox lung_bbox(const CtGrid& ct, const MaskGrid* lung_mask = nullptr);

/// resample to isotropic spacing -> crop to lung box -> resize -> clip/normalise.
/// The lung mask, when given, shares the CT geometry.
Preprocessed preprocess(const CtGrid& ct, const PreprocessConfig& config,
                        const MaskGrid* lung_mask = nullptr);

/// Channel 0 is the normalised CT; channel 1, when present, is the voxelwise
/// OR of all prior masks.
struct MultiChannelSample {
  ProbGrid ct;
  std::optional<MaskGrid> priors;

  std::size_t channel_count() const noexcept { return priors ? 2 : 1; }
};

MultiChannelSample stack_priors(ProbGrid ct_norm, std::span<const MaskGrid> prior_masks);

struct Slab {
  std::int64_t z_start = 0;
  std::int64_t valid_depth = 0;  // slices backed by the parent; the rest is padding
  ProbGrid grid;
};

struct SlabSet {
  Dims parent_dims{1, 1, 1};
  Vec3 parent_spacing{1.0, 1.0, 1.0};
  Vec3 parent_origin{0.0, 0.0, 0.0};
  SlabSpec spec;
  std::vector<Slab> slabs;
};

/// Starts 0, stride, 2 stride, ... with the last clamped to depth - slab_size
/// so the final slab ends on the top slice. A single start when depth <= slab_size.
std::vector<std::int64_t> slab_starts(std::int64_t depth, const SlabSpec& spec);

/// Volumes shallower than a slab yield one zero-padded slab.
SlabSet extract_slabs(const ProbGrid& volume, const SlabSpec& spec);

/// Voxelwise mean over every slab covering the voxel; padding is ignored.
ProbGrid stitch_slabs(const SlabSet& predictions);

nlohmann::json slab_layout_json(const SlabSet& set);
/// Rebuilds the layout (without voxel data) from slab_layout_json output.
SlabSet slab_layout_from_json(const nlohmann::json& j);

ProbGrid ensemble_max(ProbGrid a, const ProbGrid& b);
/// Left fold of the pairwise operator; requires at least one map.
ProbGrid ensemble_max(std::span<const ProbGrid> maps);

/// Undoes resize, crop (zero outside the box) and resampling in reverse order.
ProbGrid restore_original_space(const ProbGrid& prob, const GeometryRecord& record);

}  // namespace lnkit
