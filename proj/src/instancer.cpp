#include "lnkit/instancer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <numeric>

namespace lnkit {

namespace {

struct Run {
  std::int64_t x0;
  std::int64_t x1;  // inclusive
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  // The smaller index always becomes the root, so a root is the first run
  // of its component in scan order.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) parent_[b] = a;
    else parent_[a] = b;
  }

 private:
  std::vector<std::size_t> parent_;
};

struct RowOffset {
  int dy;
  int dz;
  int slack;  // 1 when diagonal contact along x is allowed
};

std::vector<RowOffset> row_offsets(Connectivity c) {
  switch (c) {
    case Connectivity::Six: return {{-1, 0, 0}, {0, -1, 0}};
    case Connectivity::Eighteen: return {{-1, 0, 1}, {0, -1, 1}, {-1, -1, 0}, {1, -1, 0}};
    case Connectivity::TwentySix: return {{-1, 0, 1}, {0, -1, 1}, {-1, -1, 1}, {1, -1, 1}};
  }
  return {};
}

// Run-length labelling: foreground runs along x are unioned with touching
// runs in previously scanned neighbour rows.
template <class Pred>
InstanceSet label_runs(const Dims& dims, const Vec3& spacing, Connectivity connectivity, Pred&& fg) {
  const std::int64_t nx = dims[0];
  const std::int64_t ny = dims[1];
  const std::int64_t nz = dims[2];
  const std::size_t rows = static_cast<std::size_t>(ny * nz);

  std::vector<Run> runs;
  std::vector<std::size_t> row_begin(rows + 1, 0);
  for (std::size_t row = 0; row < rows; ++row) {
    row_begin[row] = runs.size();
    const std::size_t base = row * static_cast<std::size_t>(nx);
    std::int64_t x = 0;
    while (x < nx) {
      while (x < nx && !fg(base + static_cast<std::size_t>(x))) ++x;
      if (x == nx) break;
      const std::int64_t start = x;
      while (x < nx && fg(base + static_cast<std::size_t>(x))) ++x;
      runs.push_back({start, x - 1});
    }
  }
  row_begin[rows] = runs.size();

  UnionFind uf(runs.size());
  const auto offsets = row_offsets(connectivity);
  for (std::int64_t z = 0; z < nz; ++z) {
    for (std::int64_t y = 0; y < ny; ++y) {
      const std::size_t row = static_cast<std::size_t>(y + ny * z);
      if (row_begin[row] == row_begin[row + 1]) continue;
      for (const auto& off : offsets) {
        const std::int64_t yy = y + off.dy;
        const std::int64_t zz = z + off.dz;
        if (yy < 0 || yy >= ny || zz < 0) continue;
        const std::size_t nrow = static_cast<std::size_t>(yy + ny * zz);
        std::size_t i = row_begin[row];
        std::size_t j = row_begin[nrow];
        const std::size_t i_end = row_begin[row + 1];
        const std::size_t j_end = row_begin[nrow + 1];
        while (i < i_end && j < j_end) {
          const Run& a = runs[i];
          const Run& b = runs[j];
          if (a.x0 <= b.x1 + off.slack && b.x0 <= a.x1 + off.slack) uf.unite(i, j);
          if (a.x1 < b.x1) ++i;
          else ++j;
        }
      }
    }
  }

  InstanceSet set;
  set.dims = dims;
  set.spacing = spacing;
  set.connectivity = connectivity;
  std::vector<std::uint32_t> component(runs.size(), 0);
  std::uint32_t next = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const std::size_t root = uf.find(r);
    if (root == r) component[r] = ++next;
    else component[r] = component[root];
  }
  set.instances.resize(next);
  for (std::uint32_t k = 0; k < next; ++k) set.instances[k].id = k + 1;
  for (std::size_t row = 0; row < rows; ++row) {
    const std::size_t base = row * static_cast<std::size_t>(nx);
    for (std::size_t r = row_begin[row]; r < row_begin[row + 1]; ++r) {
      auto& voxels = set.instances[component[r] - 1].voxels;
      for (std::int64_t x = runs[r].x0; x <= runs[r].x1; ++x) {
        voxels.push_back(base + static_cast<std::size_t>(x));
      }
    }
  }
  for (auto& inst : set.instances) {
    inst.volume_ml = instance_volume_ml(inst.voxel_count(), spacing);
    inst.short_axis_mm = short_axis_diameter(inst.voxels, dims, spacing);
  }
  return set;
}

}  // namespace

Connectivity parse_connectivity(int n) {
  switch (n) {
    case 6: return Connectivity::Six;
    case 18: return Connectivity::Eighteen;
    case 26: return Connectivity::TwentySix;
    default: fail(ErrorCode::InvalidArgument, "connectivity must be 6, 18 or 26");
  }
}

std::size_t InstanceSet::foreground_count() const {
  std::size_t n = 0;
  for (const auto& inst : instances) n += inst.voxel_count();
  return n;
}

MaskGrid threshold(const ProbGrid& prob, double pt) {
  require(pt >= 0.0 && pt <= 1.0, ErrorCode::InvalidArgument, "threshold must lie in [0,1]");
  MaskGrid out = MaskGrid::like(prob);
  const auto in = prob.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) dst[i] = in[i] >= static_cast<float>(pt) ? 1 : 0;
  return out;
}

InstanceSet connected_components(const MaskGrid& mask, Connectivity connectivity) {
  const auto v = mask.values();
  return label_runs(mask.dims(), mask.spacing(), connectivity,
                    [v](std::size_t i) { return v[i] != 0; });
}

InstanceSet connected_components(const ProbGrid& prob, double pt, Connectivity connectivity) {
  require(pt >= 0.0 && pt <= 1.0, ErrorCode::InvalidArgument, "threshold must lie in [0,1]");
  const auto v = prob.values();
  return label_runs(prob.dims(), prob.spacing(), connectivity,
                    [v, t = static_cast<float>(pt)](std::size_t i) { return v[i] >= t; });
}

InstanceSet connected_components(const LabelGrid& labels, Connectivity connectivity) {
  const auto v = labels.values();
  return label_runs(labels.dims(), labels.spacing(), connectivity,
                    [v](std::size_t i) { return v[i] != 0; });
}

ClusteredGroundTruth cluster_ground_truth(const Annotation& annotation, Connectivity connectivity) {
  annotation.validate();
  ClusteredGroundTruth out;
  out.clusters = connected_components(annotation.labels, connectivity);
  require(out.clusters.instances.size() <= std::numeric_limits<std::uint16_t>::max(),
          ErrorCode::InvalidArgument, "too many ground-truth clusters for a label grid");

  out.annotation.labels = LabelGrid::like(annotation.labels);
  const auto src = annotation.labels.values();
  auto dst = out.annotation.labels.values();
  for (auto& cluster : out.clusters.instances) {
    std::map<std::uint16_t, std::size_t> members;
    for (std::size_t v : cluster.voxels) {
      ++members[src[v]];
      dst[v] = static_cast<std::uint16_t>(cluster.id);
    }
    StationInfo info;
    info.label_id = static_cast<std::uint16_t>(cluster.id);
    std::size_t best = 0;
    bool first = true;
    std::optional<Laterality> lat;
    for (const auto& [label, count] : members) {
      const StationInfo& m = annotation.stations.at(label);
      cluster.stations.insert(m.stations.begin(), m.stations.end());
      cluster.primaries.insert(m.primary);
      if (first || count > best) {
        best = count;
        info.primary = m.primary;
      }
      if (first) lat = m.laterality;
      else if (lat != m.laterality) lat = Laterality::Unspecified;
      first = false;
    }
    info.stations = cluster.stations;
    info.laterality = lat.value_or(Laterality::Unspecified);
    out.annotation.stations.emplace(info.label_id, info);
  }
  return out;
}

double short_axis_diameter(std::span<const std::size_t> voxels, const Dims& dims,
                           const Vec3& spacing) {
  require(!voxels.empty(), ErrorCode::InvalidArgument, "short axis of an empty instance");
  const auto plane = static_cast<std::size_t>(dims[0] * dims[1]);
  const auto nx = static_cast<std::size_t>(dims[0]);
  double best = 0.0;
  std::size_t begin = 0;
  while (begin < voxels.size()) {
    const std::size_t z = voxels[begin] / plane;
    std::size_t end = begin;
    double sx = 0.0;
    double sy = 0.0;
    while (end < voxels.size() && voxels[end] / plane == z) {
      const std::size_t in_plane = voxels[end] % plane;
      sx += static_cast<double>(in_plane % nx);
      sy += static_cast<double>(in_plane / nx);
      ++end;
    }
    const double n = static_cast<double>(end - begin);
    const double mx = sx / n;
    const double my = sy / n;
    double cxx = 0.0;
    double cyy = 0.0;
    double cxy = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t in_plane = voxels[k] % plane;
      const double dx = (static_cast<double>(in_plane % nx) - mx) * spacing[0];
      const double dy = (static_cast<double>(in_plane / nx) - my) * spacing[1];
      cxx += dx * dx;
      cyy += dy * dy;
      cxy += dx * dy;
    }
    cxx /= n;
    cyy /= n;
    cxy /= n;
    const double half_diff = 0.5 * (cxx - cyy);
    const double lambda_min =
        0.5 * (cxx + cyy) - std::sqrt(half_diff * half_diff + cxy * cxy);
    best = std::max(best, 4.0 * std::sqrt(std::max(0.0, lambda_min)));
    begin = end;
  }
  return best;
}

double short_axis_diameter(const Instance& instance, const InstanceSet& owner) {
  return short_axis_diameter(instance.voxels, owner.dims, owner.spacing);
}

double instance_volume_ml(std::size_t voxel_count, const Vec3& spacing) {
  return static_cast<double>(voxel_count) * spacing[0] * spacing[1] * spacing[2] / 1000.0;
}

std::string_view to_string(SizeCategory category) {
  switch (category) {
    case SizeCategory::Lt7: return "lt7";
    case SizeCategory::From7To10: return "7to10";
    case SizeCategory::Ge10: return "ge10";
  }
  return "lt7";
}

SizeCategory size_category(double short_axis_mm) {
  require(short_axis_mm >= 0.0, ErrorCode::InvalidArgument, "short axis must be non-negative");
  if (short_axis_mm < 7.0) return SizeCategory::Lt7;
  if (short_axis_mm < 10.0) return SizeCategory::From7To10;
  return SizeCategory::Ge10;
}

nlohmann::json to_json(const InstanceSet& set) {
  nlohmann::json instances = nlohmann::json::array();
  for (const auto& inst : set.instances) {
    nlohmann::json stations = nlohmann::json::array();
    for (const auto& s : inst.stations) stations.push_back(std::string(s.code()));
    nlohmann::json primaries = nlohmann::json::array();
    for (const auto& s : inst.primaries) primaries.push_back(std::string(s.code()));
    instances.push_back({{"id", inst.id},
                         {"voxel_count", inst.voxel_count()},
                         {"volume_ml", inst.volume_ml},
                         {"short_axis_mm", inst.short_axis_mm},
                         {"size_category", std::string(to_string(size_category(inst.short_axis_mm)))},
                         {"stations", stations},
                         {"primaries", primaries}});
  }
  return {{"dims", {set.dims[0], set.dims[1], set.dims[2]}},
          {"spacing", {set.spacing[0], set.spacing[1], set.spacing[2]}},
          {"connectivity", static_cast<int>(set.connectivity)},
          {"instances", instances}};
}

}  // namespace lnkit
