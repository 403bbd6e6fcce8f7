#pragma once

#include <optional>
#include <vector>

#include "json.hpp"
#include "lnkit/evalkit.hpp"
#include "lnkit/instancer.hpp"
#include "lnkit/stations.hpp"
#include "lnkit/voxelgrid.hpp"

namespace lnkit {

// Physical coordinates used by the phantom are millimetres from the centre
// of voxel (0,0,0).

struct EllipsoidSpec {
  Vec3 center_mm{};
  Vec3 semi_axes_mm{};
  double hu = -800.0;
};

struct NodeSpec {
  std::optional<std::uint16_t> label;  // defaults to position in the list + 1
  Vec3 center_mm{};
  Vec3 semi_axes_mm{};
  double hu = 40.0;
  StationSet stations;
  std::optional<Station> primary;  // defaults to the first station
  Laterality laterality = Laterality::Unspecified;
};

/// Air background, elliptic-cylinder body along z, lung ellipsoids, node
/// ellipsoids, then seeded Gaussian noise in HU.
struct PhantomSpec {
  Dims dims{96, 96, 64};
  Vec3 spacing{1.0, 1.0, 1.0};
  double air_hu = -1000.0;
  double body_hu = 30.0;
  std::array<double, 2> body_semi_axes_mm{0.0, 0.0};  // 0 -> 45% / 40% of the in-plane extent
  std::vector<EllipsoidSpec> lungs;
  std::vector<NodeSpec> nodes;
  std::uint64_t seed = 0;
  double noise_sigma_hu = 0.0;

  std::array<double, 2> body_axes() const;
  /// Throws Spec on invalid geometry or duplicate node labels.
  void validate() const;
};

nlohmann::json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

/// Reproducible chest-like spec: two lungs, `node_count` non-touching nodes
/// between them with radii in [radius_min_mm, radius_max_mm].
PhantomSpec random_phantom_spec(std::uint64_t seed, const Dims& dims, const Vec3& spacing,
                                std::size_t node_count, double radius_min_mm = 3.0,
                                double radius_max_mm = 7.0);

struct Phantom {
  CtGrid ct;
  Annotation annotation;
};

Phantom generate_phantom(const PhantomSpec& spec);

struct ProbabilityQuality {
  std::vector<std::uint16_t> drop_ids;
  int boundary_erosion_voxels = 0;
  int fp_blobs = 0;
  double fp_radius_mm = 3.0;
  double blur_sigma_voxels = 0.0;
  std::uint64_t seed = 1;
};

nlohmann::json to_json(const ProbabilityQuality& q);
ProbabilityQuality probability_quality_from_json(const nlohmann::json& j);

/// 1 inside kept (optionally eroded) nodes and inside injected false-positive
/// spheres, 0 elsewhere, then optional Gaussian blur; clamped to [0,1].
/// Blobs keep at least two voxels from any annotated node and each other.
ProbGrid synth_probability(const Annotation& annotation, const ProbabilityQuality& quality);

/// Reference implementation of every patient metric using deliberately naive
/// algorithms (queue flood fill, exhaustive pair search, direct set
/// arithmetic). Independent of the instancer and evalkit code paths.
PatientMetrics oracle_metrics(const ProbGrid& prob, const Annotation& annotation, double pt,
                              Connectivity connectivity, double min_pair_dice = 0.0,
                              std::string patient_id = {});

}  // namespace lnkit
