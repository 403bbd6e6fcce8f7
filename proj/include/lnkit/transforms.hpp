#pragma once

#include <utility>

#include "lnkit/geometry.hpp"
#include "lnkit/voxelgrid.hpp"

namespace lnkit {

enum class Interpolation { Linear, Nearest };

/// Label and binary grids never interpolate; continuous kinds use trilinear.
template <class G>
constexpr Interpolation interpolation_for() {
  return (G::kind == VoxelKind::Binary || G::kind == VoxelKind::Label) ? Interpolation::Nearest
                                                                       : Interpolation::Linear;
}

/// Resamples `grid` onto `out_dims` where output voxel i along axis a samples
/// the source at continuous index (i + 0.5) * factor[a] - 0.5, i.e. the two
/// grids share their outer voxel boundaries when factor = in/out. Samples
/// beyond the source are clamped to the border voxel. Output spacing is
/// spacing * factor and the origin moves so voxel centres stay consistent.
template <class G>
G sample_scaled(const G& grid, const Dims& out_dims, const Vec3& factor);

/// Output dims are round-half-up(dims * spacing / target), at least 1.
template <class G>
std::pair<G, GeometryStep> resample_isotropic(const G& grid, double target_spacing_mm);

template <class G>
std::pair<G, GeometryStep> crop(const G& grid, const BoundingBox& box);

/// Inverse of crop: `part` is written into a zero grid of `host_dims` at `box.lo`.
template <class G>
G paste(const G& part, const BoundingBox& box, const Dims& host_dims, const Vec3& host_origin);

/// Spacing is rescaled so dims * spacing is unchanged.
template <class G>
std::pair<G, GeometryStep> resize(const G& grid, const Dims& target_dims);

/// Maps HU to [0,1]: (clamp(v, lo, hi) - lo) / (hi - lo).
ProbGrid clip_normalize(const CtGrid& grid, double lo_hu, double hi_hu);

/// Applies one recorded step to a grid whose dims equal the step's input dims.
template <class G>
G apply_step(const G& grid, const GeometryStep& step);

/// Undoes one recorded step; the grid's dims must equal the step's output dims.
template <class G>
G invert_step(const G& grid, const GeometryStep& step);

/// Pushes any grid sharing the original geometry through the whole record.
template <class G>
G apply_geometry(const G& grid, const GeometryRecord& record);

/// Inverts the record step by step in reverse order. The result carries the
/// record's original dims, spacing and origin exactly.
template <class G>
G invert_geometry(const G& grid, const GeometryRecord& record);

}  // namespace lnkit
