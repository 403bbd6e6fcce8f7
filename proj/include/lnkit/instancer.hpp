#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lnkit/stations.hpp"
#include "lnkit/voxelgrid.hpp"

namespace lnkit {

enum class Connectivity { Six = 6, Eighteen = 18, TwentySix = 26 };

Connectivity parse_connectivity(int n);

/// One connected set of foreground voxels. `voxels` holds ascending linear
/// indices into the source grid.
struct Instance {
  std::uint32_t id = 0;
  std::vector<std::size_t> voxels;
  double volume_ml = 0.0;
  double short_axis_mm = 0.0;
  StationSet stations;
  StationSet primaries;

  std::size_t voxel_count() const noexcept { return voxels.size(); }
};

struct InstanceSet {
  Dims dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Connectivity connectivity = Connectivity::TwentySix;
  std::vector<Instance> instances;

  std::size_t foreground_count() const;
};

/// Inclusive rule: foreground iff value >= pt, compared in float32 so a stored
/// 0.7f passes pt = 0.7.
MaskGrid threshold(const ProbGrid& prob, double pt);

/// Components are numbered 1..n in ascending order of their smallest
/// linear voxel index. Volume and short axis are filled in.
InstanceSet connected_components(const MaskGrid& mask, Connectivity connectivity);

/// Same as connected_components(threshold(prob, pt), c) without materialising the mask.
InstanceSet connected_components(const ProbGrid& prob, double pt, Connectivity connectivity);

/// Nonzero voxels of a label grid regardless of label value.
InstanceSet connected_components(const LabelGrid& labels, Connectivity connectivity);

struct ClusteredGroundTruth {
  Annotation annotation;  // relabelled 1..n by cluster
  InstanceSet clusters;   // stations/primaries are member unions
};

/// Merges touching annotated nodes into clusters. Each cluster carries the
/// union of its members' station sets and the set of their primary stations.
/// The relabelled annotation's single primary is the primary of the member
/// contributing the most voxels (lowest label id on ties).
ClusteredGroundTruth cluster_ground_truth(const Annotation& annotation, Connectivity connectivity);

/// Maximum over axial slices of the minor axis (4 sqrt(lambda_min)) of the
/// ellipse with the same second central moments as the slice's pixels, in mm.
/// Single-pixel slices contribute 0.
double short_axis_diameter(std::span<const std::size_t> voxels, const Dims& dims,
                           const Vec3& spacing);
double short_axis_diameter(const Instance& instance, const InstanceSet& owner);

double instance_volume_ml(std::size_t voxel_count, const Vec3& spacing);

enum class SizeCategory { Lt7, From7To10, Ge10 };

std::string_view to_string(SizeCategory category);
SizeCategory size_category(double short_axis_mm);

nlohmann::json to_json(const InstanceSet& set);

}  // namespace lnkit
