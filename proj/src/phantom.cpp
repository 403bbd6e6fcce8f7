#include "lnkit/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "lnkit/rng.hpp"

namespace lnkit {

namespace {

struct VoxelRange {
  std::int64_t lo[3];
  std::int64_t hi[3];
};

VoxelRange ellipsoid_range(const Vec3& c, const Vec3& axes, const Dims& dims, const Vec3& sp) {
  VoxelRange r{};
  for (int a = 0; a < 3; ++a) {
    r.lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((c[a] - axes[a]) / sp[a])));
    r.hi[a] = std::min<std::int64_t>(dims[a] - 1,
                                     static_cast<std::int64_t>(std::ceil((c[a] + axes[a]) / sp[a])));
  }
  return r;
}

template <class F>
void for_each_in_ellipsoid(const Vec3& c, const Vec3& axes, const Dims& dims, const Vec3& sp, F&& f) {
  const VoxelRange r = ellipsoid_range(c, axes, dims, sp);
  for (std::int64_t z = r.lo[2]; z <= r.hi[2]; ++z) {
    const double dz = (static_cast<double>(z) * sp[2] - c[2]) / axes[2];
    for (std::int64_t y = r.lo[1]; y <= r.hi[1]; ++y) {
      const double dy = (static_cast<double>(y) * sp[1] - c[1]) / axes[1];
      for (std::int64_t x = r.lo[0]; x <= r.hi[0]; ++x) {
        const double dx = (static_cast<double>(x) * sp[0] - c[0]) / axes[0];
        if (dx * dx + dy * dy + dz * dz <= 1.0) f(x, y, z);
      }
    }
  }
}

std::int16_t hu_value(double hu) {
  return static_cast<std::int16_t>(std::clamp(std::round(hu), -32768.0, 32767.0));
}

Vec3 vec_from_json(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

nlohmann::json vec_json(const Vec3& v) { return {v[0], v[1], v[2]}; }

}  // namespace

std::array<double, 2> PhantomSpec::body_axes() const {
  std::array<double, 2> axes = body_semi_axes_mm;
  if (axes[0] <= 0.0) axes[0] = 0.45 * static_cast<double>(dims[0]) * spacing[0];
  if (axes[1] <= 0.0) axes[1] = 0.40 * static_cast<double>(dims[1]) * spacing[1];
  return axes;
}

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    require(dims[a] >= 1 && spacing[a] > 0.0, ErrorCode::Spec, "phantom dims/spacing must be positive");
  }
  const auto body = body_axes();
  const double cx = 0.5 * static_cast<double>(dims[0] - 1) * spacing[0];
  const double cy = 0.5 * static_cast<double>(dims[1] - 1) * spacing[1];
  const double zmax = static_cast<double>(dims[2] - 1) * spacing[2];
  for (const auto& l : lungs) {
    for (double a : l.semi_axes_mm) require(a > 0.0, ErrorCode::Spec, "lung semi-axes must be positive");
  }
  std::set<std::uint16_t> seen;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    const std::uint16_t label = n.label.value_or(static_cast<std::uint16_t>(i + 1));
    const std::string who = "node " + std::to_string(label);
    require(label > 0, ErrorCode::Spec, who + ": label must be positive");
    require(seen.insert(label).second, ErrorCode::Spec, who + ": duplicate node label");
    for (double a : n.semi_axes_mm) require(a > 0.0, ErrorCode::Spec, who + ": semi-axes must be positive");
    const double ex = (n.center_mm[0] - cx) / body[0];
    const double ey = (n.center_mm[1] - cy) / body[1];
    require(ex * ex + ey * ey <= 1.0 && n.center_mm[2] >= 0.0 && n.center_mm[2] <= zmax,
            ErrorCode::Spec, who + ": centre lies outside the body");
    require(!n.stations.empty(), ErrorCode::Spec, who + ": needs at least one station");
    require(!n.primary || n.stations.count(*n.primary), ErrorCode::Spec,
            who + ": primary station not among its stations");
  }
}

nlohmann::json to_json(const PhantomSpec& spec) {
  nlohmann::json lungs = nlohmann::json::array();
  for (const auto& l : spec.lungs) {
    lungs.push_back({{"center_mm", vec_json(l.center_mm)},
                     {"semi_axes_mm", vec_json(l.semi_axes_mm)},
                     {"hu", l.hu}});
  }
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const auto& n = spec.nodes[i];
    nlohmann::json stations = nlohmann::json::array();
    for (const auto& s : n.stations) stations.push_back(std::string(s.code()));
    nodes.push_back({{"label", n.label.value_or(static_cast<std::uint16_t>(i + 1))},
                     {"center_mm", vec_json(n.center_mm)},
                     {"semi_axes_mm", vec_json(n.semi_axes_mm)},
                     {"hu", n.hu},
                     {"stations", stations},
                     {"primary", std::string((n.primary ? *n.primary : *n.stations.begin()).code())},
                     {"laterality", std::string(to_string(n.laterality))}});
  }
  return {{"dims", {spec.dims[0], spec.dims[1], spec.dims[2]}},
          {"spacing", vec_json(spec.spacing)},
          {"air_hu", spec.air_hu},
          {"body_hu", spec.body_hu},
          {"body_semi_axes_mm", {spec.body_semi_axes_mm[0], spec.body_semi_axes_mm[1]}},
          {"lungs", lungs},
          {"nodes", nodes},
          {"seed", spec.seed},
          {"noise_sigma_hu", spec.noise_sigma_hu}};
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  try {
    PhantomSpec spec;
    for (int a = 0; a < 3; ++a) spec.dims[a] = j.at("dims").at(a).get<std::int64_t>();
    if (j.contains("spacing")) spec.spacing = vec_from_json(j.at("spacing"));
    spec.air_hu = j.value("air_hu", spec.air_hu);
    spec.body_hu = j.value("body_hu", spec.body_hu);
    if (j.contains("body_semi_axes_mm")) {
      spec.body_semi_axes_mm = {j["body_semi_axes_mm"].at(0).get<double>(),
                                j["body_semi_axes_mm"].at(1).get<double>()};
    }
    for (const auto& l : j.value("lungs", nlohmann::json::array())) {
      spec.lungs.push_back({vec_from_json(l.at("center_mm")), vec_from_json(l.at("semi_axes_mm")),
                            l.value("hu", -800.0)});
    }
    for (const auto& n : j.value("nodes", nlohmann::json::array())) {
      NodeSpec node;
      if (n.contains("label")) node.label = n.at("label").get<std::uint16_t>();
      node.center_mm = vec_from_json(n.at("center_mm"));
      node.semi_axes_mm = vec_from_json(n.at("semi_axes_mm"));
      node.hu = n.value("hu", 40.0);
      for (const auto& s : n.at("stations")) node.stations.insert(Station::parse(s.get<std::string>()));
      if (n.contains("primary")) node.primary = Station::parse(n.at("primary").get<std::string>());
      node.laterality = parse_laterality(n.value("laterality", std::string("unspecified")));
      spec.nodes.push_back(std::move(node));
    }
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.noise_sigma_hu = j.value("noise_sigma_hu", 0.0);
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Spec, std::string("malformed phantom spec: ") + e.what());
  }
}

PhantomSpec random_phantom_spec(std::uint64_t seed, const Dims& dims, const Vec3& spacing,
                                std::size_t node_count, double radius_min_mm, double radius_max_mm) {
  require(radius_min_mm > 0.0 && radius_min_mm <= radius_max_mm, ErrorCode::Spec,
          "invalid node radius range");
  SplitMix64 rng(seed);
  PhantomSpec spec;
  spec.dims = dims;
  spec.spacing = spacing;
  spec.seed = seed;
  spec.noise_sigma_hu = 10.0;
  const Vec3 ext{static_cast<double>(dims[0] - 1) * spacing[0],
                 static_cast<double>(dims[1] - 1) * spacing[1],
                 static_cast<double>(dims[2] - 1) * spacing[2]};
  const Vec3 c{0.5 * ext[0], 0.5 * ext[1], 0.5 * ext[2]};
  for (double side : {-1.0, 1.0}) {
    spec.lungs.push_back({{c[0] + side * 0.24 * ext[0], c[1], c[2]},
                          {0.13 * ext[0], 0.26 * ext[1], 0.40 * ext[2]},
                          -800.0});
  }

  const double margin = 3.0 * std::max({spacing[0], spacing[1], spacing[2]});
  struct Placed {
    Vec3 center;
    double reach;
  };
  std::vector<Placed> placed;
  for (std::size_t i = 0; i < node_count; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < 20000 && !ok; ++attempt) {
      NodeSpec n;
      for (int a = 0; a < 3; ++a) n.semi_axes_mm[a] = rng.uniform(radius_min_mm, radius_max_mm);
      const double reach = std::max({n.semi_axes_mm[0], n.semi_axes_mm[1], n.semi_axes_mm[2]});
      // Keep the whole node inside the lungs' bounding box so a lung crop never cuts it.
      const Vec3 half{0.30 * ext[0], 0.24 * ext[1], 0.38 * ext[2]};
      bool inside = true;
      for (int a = 0; a < 3; ++a) {
        const double room = half[a] - n.semi_axes_mm[a];
        inside = inside && room > 0.0;
        n.center_mm[a] = c[a] + rng.uniform(-1.0, 1.0) * std::max(room, 0.0);
      }
      for (int a = 0; a < 3; ++a) {
        inside = inside && n.center_mm[a] - n.semi_axes_mm[a] >= spacing[a] &&
                 n.center_mm[a] + n.semi_axes_mm[a] <= ext[a] - spacing[a];
      }
      if (!inside) continue;
      bool clear = true;
      for (const auto& p : placed) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) d2 += (p.center[a] - n.center_mm[a]) * (p.center[a] - n.center_mm[a]);
        if (std::sqrt(d2) <= p.reach + reach + margin) clear = false;
      }
      if (!clear) continue;
      const Station first = Station::parse(Station::kCodes[rng.below(Station::kCodes.size())]);
      n.stations.insert(first);
      if (rng.uniform() < 0.25) n.stations.insert(Station::parse(Station::kCodes[rng.below(15)]));
      n.primary = first;
      n.laterality = static_cast<Laterality>(rng.below(3));
      placed.push_back({n.center_mm, reach});
      spec.nodes.push_back(std::move(n));
      ok = true;
    }
    require(ok, ErrorCode::Spec, "could not place " + std::to_string(node_count) + " separated nodes");
  }
  spec.validate();
  return spec;
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Dims& d = spec.dims;
  const Vec3& sp = spec.spacing;
  Phantom ph{CtGrid(d, sp, {0.0, 0.0, 0.0}, hu_value(spec.air_hu)), Annotation{}};
  ph.annotation.labels = LabelGrid(d, sp);

  const auto body = spec.body_axes();
  const double cx = 0.5 * static_cast<double>(d[0] - 1) * sp[0];
  const double cy = 0.5 * static_cast<double>(d[1] - 1) * sp[1];
  const std::int16_t body_hu = hu_value(spec.body_hu);
  for (std::int64_t y = 0; y < d[1]; ++y) {
    const double ey = (static_cast<double>(y) * sp[1] - cy) / body[1];
    if (ey * ey > 1.0) continue;
    const double half = body[0] * std::sqrt(1.0 - ey * ey);
    const auto x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil((cx - half) / sp[0])));
    const auto x1 = std::min<std::int64_t>(d[0] - 1, static_cast<std::int64_t>(std::floor((cx + half) / sp[0])));
    for (std::int64_t z = 0; z < d[2]; ++z) {
      for (std::int64_t x = x0; x <= x1; ++x) ph.ct(x, y, z) = body_hu;
    }
  }
  for (const auto& lung : spec.lungs) {
    const std::int16_t hu = hu_value(lung.hu);
    for_each_in_ellipsoid(lung.center_mm, lung.semi_axes_mm, d, sp,
                          [&](auto x, auto y, auto z) { ph.ct(x, y, z) = hu; });
  }
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const auto& n = spec.nodes[i];
    const std::uint16_t label = n.label.value_or(static_cast<std::uint16_t>(i + 1));
    const std::int16_t hu = hu_value(n.hu);
    for_each_in_ellipsoid(n.center_mm, n.semi_axes_mm, d, sp, [&](auto x, auto y, auto z) {
      ph.ct(x, y, z) = hu;
      ph.annotation.labels(x, y, z) = label;
    });
    StationInfo info;
    info.label_id = label;
    info.stations = n.stations;
    info.primary = n.primary ? *n.primary : *n.stations.begin();
    info.laterality = n.laterality;
    ph.annotation.stations.emplace(label, info);
  }

  std::set<std::uint16_t> present;
  for (auto v : ph.annotation.labels.values()) {
    if (v != 0) present.insert(v);
  }
  for (const auto& [label, info] : ph.annotation.stations) {
    require(present.count(label) == 1, ErrorCode::Spec,
            "node " + std::to_string(label) + " rasterises to no voxel (too small or overwritten)");
  }

  if (spec.noise_sigma_hu > 0.0) {
    SplitMix64 rng(spec.seed);
    for (auto& v : ph.ct.values()) {
      v = hu_value(static_cast<double>(v) + spec.noise_sigma_hu * rng.normal());
    }
  }
  ph.annotation.validate();
  return ph;
}

nlohmann::json to_json(const ProbabilityQuality& q) {
  return {{"drop_ids", q.drop_ids},
          {"boundary_erosion_voxels", q.boundary_erosion_voxels},
          {"fp_blobs", q.fp_blobs},
          {"fp_radius_mm", q.fp_radius_mm},
          {"blur_sigma_voxels", q.blur_sigma_voxels},
          {"seed", q.seed}};
}

ProbabilityQuality probability_quality_from_json(const nlohmann::json& j) {
  try {
    ProbabilityQuality q;
    q.drop_ids = j.value("drop_ids", std::vector<std::uint16_t>{});
    q.boundary_erosion_voxels = j.value("boundary_erosion_voxels", 0);
    q.fp_blobs = j.value("fp_blobs", 0);
    q.fp_radius_mm = j.value("fp_radius_mm", 3.0);
    q.blur_sigma_voxels = j.value("blur_sigma_voxels", 0.0);
    q.seed = j.value("seed", std::uint64_t{1});
    return q;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Spec, std::string("malformed probability quality: ") + e.what());
  }
}

namespace {

void erode_labels(LabelGrid& labels, int iterations) {
  const Dims& d = labels.dims();
  for (int it = 0; it < iterations; ++it) {
    std::vector<std::size_t> remove;
    for (std::int64_t z = 0; z < d[2]; ++z) {
      for (std::int64_t y = 0; y < d[1]; ++y) {
        for (std::int64_t x = 0; x < d[0]; ++x) {
          const auto l = labels(x, y, z);
          if (l == 0) continue;
          const std::int64_t n[6][3] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z},
                                        {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
          for (const auto& p : n) {
            const bool inside = p[0] >= 0 && p[1] >= 0 && p[2] >= 0 && p[0] < d[0] &&
                                p[1] < d[1] && p[2] < d[2];
            if (!inside || labels(p[0], p[1], p[2]) != l) {
              remove.push_back(labels.linear(x, y, z));
              break;
            }
          }
        }
      }
    }
    for (std::size_t i : remove) labels[i] = 0;
  }
}

void blur_axis(std::vector<double>& v, const Dims& d, int axis, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto& w : k) w /= sum;
  const std::int64_t n = d[axis];
  const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? d[0] : d[0] * d[1]);
  std::vector<double> line(static_cast<std::size_t>(n));
  const std::int64_t total = voxel_count(d);
  for (std::int64_t start = 0; start < total; ++start) {
    // Visit each line once via its first element.
    if ((start / stride) % n != 0) continue;
    for (std::int64_t i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(start + i * stride)];
    for (std::int64_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        const std::int64_t j = std::clamp<std::int64_t>(i + t, 0, n - 1);
        acc += k[static_cast<std::size_t>(t + radius)] * line[static_cast<std::size_t>(j)];
      }
      v[static_cast<std::size_t>(start + i * stride)] = acc;
    }
  }
}

}  // namespace

ProbGrid synth_probability(const Annotation& annotation, const ProbabilityQuality& quality) {
  annotation.validate();
  const LabelGrid& labels = annotation.labels;
  const Dims& d = labels.dims();
  const Vec3& sp = labels.spacing();

  LabelGrid kept = labels;
  const std::set<std::uint16_t> drop(quality.drop_ids.begin(), quality.drop_ids.end());
  for (auto& v : kept.values()) {
    if (drop.count(v)) v = 0;
  }
  if (quality.boundary_erosion_voxels > 0) erode_labels(kept, quality.boundary_erosion_voxels);

  ProbGrid prob = ProbGrid::like(labels);
  for (std::size_t i = 0; i < kept.size(); ++i) prob[i] = kept[i] != 0 ? 1.0f : 0.0f;

  if (quality.fp_blobs > 0) {
    require(quality.fp_radius_mm > 0.0, ErrorCode::Spec, "fp blob radius must be positive");
    // Occupied = any annotated node (kept or dropped) or an earlier blob.
    std::vector<std::uint8_t> occupied(labels.size(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) occupied[i] = labels[i] != 0;
    SplitMix64 rng(quality.seed);
    const Vec3 axes{quality.fp_radius_mm, quality.fp_radius_mm, quality.fp_radius_mm};
    Vec3 guard{};
    for (int a = 0; a < 3; ++a) guard[a] = quality.fp_radius_mm + 2.0 * sp[a];
    for (int b = 0; b < quality.fp_blobs; ++b) {
      bool placed = false;
      for (int attempt = 0; attempt < 5000 && !placed; ++attempt) {
        Vec3 c{};
        bool fits = true;
        for (int a = 0; a < 3; ++a) {
          const double lo = guard[a];
          const double hi = static_cast<double>(d[a] - 1) * sp[a] - guard[a];
          if (hi <= lo) fits = false;
          c[a] = rng.uniform(lo, std::max(lo, hi));
        }
        if (!fits) break;
        bool clear = true;
        for_each_in_ellipsoid(c, guard, d, sp, [&](auto x, auto y, auto z) {
          if (occupied[labels.linear(x, y, z)]) clear = false;
        });
        if (!clear) continue;
        std::size_t voxels = 0;
        for_each_in_ellipsoid(c, axes, d, sp, [&](auto x, auto y, auto z) {
          prob(x, y, z) = 1.0f;
          ++voxels;
        });
        if (voxels == 0) continue;
        for_each_in_ellipsoid(c, axes, d, sp,
                              [&](auto x, auto y, auto z) { occupied[labels.linear(x, y, z)] = 1; });
        placed = true;
      }
      require(placed, ErrorCode::Spec, "could not place false-positive blob " + std::to_string(b + 1));
    }
  }

  if (quality.blur_sigma_voxels > 0.0) {
    std::vector<double> v(prob.values().begin(), prob.values().end());
    for (int axis = 0; axis < 3; ++axis) {
      if (d[axis] > 1) blur_axis(v, d, axis, quality.blur_sigma_voxels);
    }
    for (std::size_t i = 0; i < v.size(); ++i) prob[i] = static_cast<float>(std::clamp(v[i], 0.0, 1.0));
  }
  return prob;
}

}  // namespace lnkit
