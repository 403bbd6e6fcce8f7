#include "lnkit/pipeline.hpp"

#include <algorithm>

#include "lnkit/instancer.hpp"
#include "lnkit/transforms.hpp"

namespace lnkit {

namespace {

BoundingBox box_of(std::span<const std::size_t> voxels, const Dims& dims, BoundingBox box,
                   bool& empty) {
  const auto nx = static_cast<std::size_t>(dims[0]);
  const auto plane = static_cast<std::size_t>(dims[0] * dims[1]);
  for (std::size_t v : voxels) {
    const Index3 p{static_cast<std::int64_t>(v % nx), static_cast<std::int64_t>((v % plane) / nx),
                   static_cast<std::int64_t>(v / plane)};
    if (empty) {
      box = {p, p};
      empty = false;
      continue;
    }
    box.lo = {std::min(box.lo.x, p.x), std::min(box.lo.y, p.y), std::min(box.lo.z, p.z)};
    box.hi = {std::max(box.hi.x, p.x), std::max(box.hi.y, p.y), std::max(box.hi.z, p.z)};
  }
  return box;
}

bool touches_xy_frame(const Instance& inst, const Dims& dims) {
  const auto nx = static_cast<std::size_t>(dims[0]);
  const auto ny = static_cast<std::size_t>(dims[1]);
  for (std::size_t v : inst.voxels) {
    const std::size_t x = v % nx;
    const std::size_t y = (v / nx) % ny;
    if (x == 0 || y == 0 || x + 1 == nx || y + 1 == ny) return true;
  }
  return false;
}

}  // namespace

void SlabSpec::validate() const {
  require(slab_size >= 1, ErrorCode::InvalidArgument, "slab size must be at least 1");
  require(stride >= 1 && stride <= slab_size, ErrorCode::InvalidArgument,
          "stride must lie in [1, slab size]");
  require(axial_dims[0] >= 1 && axial_dims[1] >= 1, ErrorCode::InvalidArgument,
          "axial dims must be positive");
}

BoundingBox lung_bbox(const CtGrid& ct, const MaskGrid* lung_mask) {
  BoundingBox box{};
  bool empty = true;
  if (lung_mask != nullptr) {
    require(lung_mask->dims() == ct.dims(), ErrorCode::InvalidArgument,
            "lung mask dims " + to_string(lung_mask->dims()) + " differ from CT " +
                to_string(ct.dims()));
    const auto v = lung_mask->values();
    const auto nx = ct.dims()[0];
    const auto ny = ct.dims()[1];
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == 0) continue;
      const auto ii = static_cast<std::int64_t>(i);
      const Index3 p{ii % nx, (ii / nx) % ny, ii / (nx * ny)};
      if (empty) {
        box = {p, p};
        empty = false;
      } else {
        box.lo = {std::min(box.lo.x, p.x), std::min(box.lo.y, p.y), std::min(box.lo.z, p.z)};
        box.hi = {std::max(box.hi.x, p.x), std::max(box.hi.y, p.y), std::max(box.hi.z, p.z)};
      }
    }
    require(!empty, ErrorCode::NoLungFound, "lung mask is empty");
    return box;
  }

  MaskGrid air = MaskGrid::like(ct);
  {
    const auto in = ct.values();
    auto dst = air.values();
    for (std::size_t i = 0; i < in.size(); ++i) dst[i] = in[i] < kLungThresholdHu ? 1 : 0;
  }
  const InstanceSet comps = connected_components(air, Connectivity::Six);
  std::vector<const Instance*> inner;
  for (const auto& inst : comps.instances) {
    if (!touches_xy_frame(inst, ct.dims())) inner.push_back(&inst);
  }
  require(!inner.empty(), ErrorCode::NoLungFound,
          "no lung-like low-density component inside the body");
  std::stable_sort(inner.begin(), inner.end(), [](const Instance* a, const Instance* b) {
    return a->voxel_count() > b->voxel_count();
  });
  inner.resize(std::min<std::size_t>(2, inner.size()));
  for (const Instance* inst : inner) box = box_of(inst->voxels, ct.dims(), box, empty);
  return box;
}

Preprocessed preprocess(const CtGrid& ct, const PreprocessConfig& config,
                        const MaskGrid* lung_mask) {
  if (config.mode == PreprocessMode::Slab) config.slab.validate();
  for (auto d : config.fullvol_dims) {
    require(d >= 1, ErrorCode::InvalidArgument, "full-volume dims must be positive");
  }
  require(lung_mask == nullptr || lung_mask->dims() == ct.dims(), ErrorCode::InvalidArgument,
          "lung mask must share the CT geometry");

  Preprocessed out{ProbGrid{}, GeometryRecord::starting_from(ct)};
  auto [iso, resample_step] = resample_isotropic(ct, config.target_spacing_mm);
  out.record.steps.push_back(resample_step);

  std::optional<MaskGrid> iso_mask;
  if (lung_mask != nullptr) iso_mask = apply_step(*lung_mask, resample_step);
  const BoundingBox box = lung_bbox(iso, iso_mask ? &*iso_mask : nullptr);
  iso_mask.reset();

  auto [cropped, crop_step] = crop(iso, box);
  out.record.steps.push_back(crop_step);
  iso = CtGrid{};

  const Dims target = config.mode == PreprocessMode::Slab
                          ? Dims{config.slab.axial_dims[0], config.slab.axial_dims[1],
                                 cropped.dims()[2]}
                          : config.fullvol_dims;
  auto [resized, resize_step] = resize(cropped, target);
  out.record.steps.push_back(resize_step);

  out.volume = clip_normalize(resized, config.clip_lo_hu, config.clip_hi_hu);
  out.record.intensity_window_hu = std::array<double, 2>{config.clip_lo_hu, config.clip_hi_hu};
  return out;
}

MultiChannelSample stack_priors(ProbGrid ct_norm, std::span<const MaskGrid> prior_masks) {
  MultiChannelSample sample{std::move(ct_norm), std::nullopt};
  if (prior_masks.empty()) return sample;
  MaskGrid merged = MaskGrid::like(sample.ct);
  auto dst = merged.values();
  for (const auto& mask : prior_masks) {
    require_same_geometry(sample.ct, mask, "stack_priors");
    mask.validate_values();
    const auto src = mask.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] |= src[i];
  }
  sample.priors = std::move(merged);
  return sample;
}

std::vector<std::int64_t> slab_starts(std::int64_t depth, const SlabSpec& spec) {
  spec.validate();
  require(depth >= 1, ErrorCode::InvalidArgument, "volume depth must be at least 1");
  std::vector<std::int64_t> starts;
  if (depth <= spec.slab_size) return {0};
  for (std::int64_t s = 0; s + spec.slab_size < depth; s += spec.stride) starts.push_back(s);
  starts.push_back(depth - spec.slab_size);
  return starts;
}

SlabSet extract_slabs(const ProbGrid& volume, const SlabSpec& spec) {
  const Dims& d = volume.dims();
  SlabSet set{d, volume.spacing(), volume.origin(), spec, {}};
  const auto plane = static_cast<std::size_t>(d[0] * d[1]);
  for (std::int64_t start : slab_starts(d[2], spec)) {
    Vec3 origin = volume.origin();
    origin[2] += static_cast<double>(start) * volume.spacing()[2];
    Slab slab{start, std::min(spec.slab_size, d[2] - start),
              ProbGrid({d[0], d[1], spec.slab_size}, volume.spacing(), origin)};
    const auto src = volume.values().subspan(static_cast<std::size_t>(start) * plane,
                                             static_cast<std::size_t>(slab.valid_depth) * plane);
    std::copy(src.begin(), src.end(), slab.grid.values().begin());
    set.slabs.push_back(std::move(slab));
  }
  return set;
}

ProbGrid stitch_slabs(const SlabSet& predictions) {
  const Dims& d = predictions.parent_dims;
  const auto expected = slab_starts(d[2], predictions.spec);
  require(predictions.slabs.size() == expected.size(), ErrorCode::InvalidArgument,
          "expected " + std::to_string(expected.size()) + " slabs, got " +
              std::to_string(predictions.slabs.size()));
  const auto plane = static_cast<std::size_t>(d[0] * d[1]);
  std::vector<double> sum(static_cast<std::size_t>(voxel_count(d)), 0.0);
  std::vector<std::uint32_t> cover(static_cast<std::size_t>(d[2]), 0);

  for (std::size_t k = 0; k < expected.size(); ++k) {
    const Slab& slab = predictions.slabs[k];
    const std::int64_t valid = std::min(predictions.spec.slab_size, d[2] - expected[k]);
    require(slab.z_start == expected[k] && slab.valid_depth == valid, ErrorCode::InvalidArgument,
            "slab " + std::to_string(k) + " does not match the slab layout");
    require(slab.grid.dims() == Dims{d[0], d[1], predictions.spec.slab_size},
            ErrorCode::InvalidArgument,
            "slab " + std::to_string(k) + " has dims " + to_string(slab.grid.dims()));
    const auto src = slab.grid.values();
    const std::size_t base = static_cast<std::size_t>(slab.z_start) * plane;
    const std::size_t n = static_cast<std::size_t>(valid) * plane;
    for (std::size_t i = 0; i < n; ++i) sum[base + i] += static_cast<double>(src[i]);
    for (std::int64_t z = 0; z < valid; ++z) ++cover[static_cast<std::size_t>(slab.z_start + z)];
  }

  ProbGrid out(d, predictions.parent_spacing, predictions.parent_origin);
  auto dst = out.values();
  for (std::int64_t z = 0; z < d[2]; ++z) {
    const double n = cover[static_cast<std::size_t>(z)];
    require(n > 0, ErrorCode::InvalidArgument, "slice " + std::to_string(z) + " not covered");
    const std::size_t base = static_cast<std::size_t>(z) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      dst[base + i] = static_cast<float>(std::clamp(sum[base + i] / n, 0.0, 1.0));
    }
  }
  return out;
}

nlohmann::json slab_layout_json(const SlabSet& set) {
  nlohmann::json slabs = nlohmann::json::array();
  for (std::size_t k = 0; k < set.slabs.size(); ++k) {
    slabs.push_back({{"index", k},
                     {"z_start", set.slabs[k].z_start},
                     {"valid_depth", set.slabs[k].valid_depth}});
  }
  const auto& d = set.parent_dims;
  const auto& s = set.parent_spacing;
  const auto& o = set.parent_origin;
  return {{"parent_dims", {d[0], d[1], d[2]}},
          {"parent_spacing", {s[0], s[1], s[2]}},
          {"parent_origin", {o[0], o[1], o[2]}},
          {"slab_size", set.spec.slab_size},
          {"stride", set.spec.stride},
          {"axial_dims", {set.spec.axial_dims[0], set.spec.axial_dims[1]}},
          {"slabs", slabs}};
}

SlabSet slab_layout_from_json(const nlohmann::json& j) {
  try {
    SlabSet set;
    for (int a = 0; a < 3; ++a) {
      set.parent_dims[a] = j.at("parent_dims").at(a).get<std::int64_t>();
      set.parent_spacing[a] = j.at("parent_spacing").at(a).get<double>();
      set.parent_origin[a] = j.at("parent_origin").at(a).get<double>();
    }
    set.spec.slab_size = j.at("slab_size").get<std::int64_t>();
    set.spec.stride = j.at("stride").get<std::int64_t>();
    set.spec.axial_dims = {j.at("axial_dims").at(0).get<std::int64_t>(),
                           j.at("axial_dims").at(1).get<std::int64_t>()};
    set.spec.validate();
    for (const auto& s : j.at("slabs")) {
      Slab slab;
      slab.z_start = s.at("z_start").get<std::int64_t>();
      slab.valid_depth = s.at("valid_depth").get<std::int64_t>();
      set.slabs.push_back(std::move(slab));
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed slab layout: ") + e.what());
  }
}

ProbGrid ensemble_max(ProbGrid a, const ProbGrid& b) {
  require_same_geometry(a, b, "ensemble_max");
  auto dst = a.values();
  const auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
  return a;
}

ProbGrid ensemble_max(std::span<const ProbGrid> maps) {
  require(!maps.empty(), ErrorCode::InvalidArgument, "ensemble needs at least one map");
  ProbGrid out = maps.front();
  for (std::size_t i = 1; i < maps.size(); ++i) out = ensemble_max(std::move(out), maps[i]);
  return out;
}

ProbGrid restore_original_space(const ProbGrid& prob, const GeometryRecord& record) {
  return invert_geometry(prob, record);
}

}  // namespace lnkit
