#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "json.hpp"
#include "lnkit/voxelgrid.hpp"

namespace lnkit {

struct ResampleStep {
  Dims from_dims;
  Vec3 from_spacing;
  Dims to_dims;
  Vec3 to_spacing;
};

struct CropStep {
  Dims from_dims;
  BoundingBox box;  // in the pre-crop grid
};

struct ResizeStep {
  Dims from_dims;
  Vec3 from_spacing;
  Dims to_dims;
};

using GeometryStep = std::variant<ResampleStep, CropStep, ResizeStep>;

Dims step_input_dims(const GeometryStep& step);
Dims step_output_dims(const GeometryStep& step);

/// Ordered log of the transforms that took an original volume to the
/// processed one. Each step is self-contained so the chain can be undone
/// without access to the original image.
struct GeometryRecord {
  Dims original_dims{1, 1, 1};
  Vec3 original_spacing{1.0, 1.0, 1.0};
  Vec3 original_origin{0.0, 0.0, 0.0};
  std::vector<GeometryStep> steps;
  /// HU window applied after the geometric steps, when the chain ends in
  /// intensity normalisation. Does not affect geometry.
  std::optional<std::array<double, 2>> intensity_window_hu;

  template <class G>
  static GeometryRecord starting_from(const G& grid) {
    return {grid.dims(), grid.spacing(), grid.origin(), {}, std::nullopt};
  }

  /// Replays the chain on dimensions only; throws InvalidArgument when a step
  /// does not accept the dims produced by the one before it.
  Dims forward_dims() const;
};

nlohmann::json to_json(const GeometryRecord& record);
GeometryRecord geometry_record_from_json(const nlohmann::json& j);

}  // namespace lnkit
