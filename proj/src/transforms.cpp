#include "lnkit/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lnkit {

namespace {

struct LinearTap {
  std::int64_t i0;
  std::int64_t i1;
  double w;
};

std::vector<LinearTap> linear_taps(std::int64_t in_n, std::int64_t out_n, double factor) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out_n));
  const double max_index = static_cast<double>(in_n - 1);
  for (std::int64_t i = 0; i < out_n; ++i) {
    double s = (static_cast<double>(i) + 0.5) * factor - 0.5;
    s = std::clamp(s, 0.0, max_index);
    const auto i0 = static_cast<std::int64_t>(std::floor(s));
    const auto i1 = std::min(i0 + 1, in_n - 1);
    taps[static_cast<std::size_t>(i)] = {i0, i1, s - static_cast<double>(i0)};
  }
  return taps;
}

std::vector<std::int64_t> nearest_taps(std::int64_t in_n, std::int64_t out_n, double factor) {
  std::vector<std::int64_t> taps(static_cast<std::size_t>(out_n));
  for (std::int64_t i = 0; i < out_n; ++i) {
    const double s = (static_cast<double>(i) + 0.5) * factor - 0.5;
    const auto r = static_cast<std::int64_t>(std::floor(s + 0.5));
    taps[static_cast<std::size_t>(i)] = std::clamp<std::int64_t>(r, 0, in_n - 1);
  }
  return taps;
}

// Lerp written as a + w (b - a) so equal endpoints reproduce themselves exactly.
inline double lerp(double a, double b, double w) { return a + w * (b - a); }

template <class T>
T store(double v) {
  if constexpr (std::is_floating_point_v<T>) {
    return static_cast<T>(v);
  } else {
    const double r = std::round(v);
    return static_cast<T>(std::clamp(r, static_cast<double>(std::numeric_limits<T>::min()),
                                     static_cast<double>(std::numeric_limits<T>::max())));
  }
}

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

}  // namespace

template <class G>
G sample_scaled(const G& grid, const Dims& out_dims, const Vec3& factor) {
  using T = typename G::value_type;
  Vec3 spacing{};
  Vec3 origin{};
  for (int a = 0; a < 3; ++a) {
    require(out_dims[a] >= 1, ErrorCode::InvalidArgument, "target dims must be at least 1");
    require(std::isfinite(factor[a]) && factor[a] > 0.0, ErrorCode::InvalidArgument,
            "scale factor must be positive");
    spacing[a] = grid.spacing()[a] * factor[a];
    origin[a] = grid.origin()[a] + (0.5 * factor[a] - 0.5) * grid.spacing()[a];
  }
  G out(out_dims, spacing, origin);
  const Dims& in = grid.dims();

  if constexpr (interpolation_for<G>() == Interpolation::Nearest) {
    const auto tx = nearest_taps(in[0], out_dims[0], factor[0]);
    const auto ty = nearest_taps(in[1], out_dims[1], factor[1]);
    const auto tz = nearest_taps(in[2], out_dims[2], factor[2]);
    std::size_t o = 0;
    for (std::int64_t z = 0; z < out_dims[2]; ++z) {
      for (std::int64_t y = 0; y < out_dims[1]; ++y) {
        const std::size_t row = grid.linear(0, ty[y], tz[z]);
        for (std::int64_t x = 0; x < out_dims[0]; ++x) out[o++] = grid[row + tx[x]];
      }
    }
  } else {
    const auto tx = linear_taps(in[0], out_dims[0], factor[0]);
    const auto ty = linear_taps(in[1], out_dims[1], factor[1]);
    const auto tz = linear_taps(in[2], out_dims[2], factor[2]);
    std::size_t o = 0;
    for (std::int64_t z = 0; z < out_dims[2]; ++z) {
      const auto& cz = tz[static_cast<std::size_t>(z)];
      for (std::int64_t y = 0; y < out_dims[1]; ++y) {
        const auto& cy = ty[static_cast<std::size_t>(y)];
        const std::size_t r00 = grid.linear(0, cy.i0, cz.i0);
        const std::size_t r10 = grid.linear(0, cy.i1, cz.i0);
        const std::size_t r01 = grid.linear(0, cy.i0, cz.i1);
        const std::size_t r11 = grid.linear(0, cy.i1, cz.i1);
        for (std::int64_t x = 0; x < out_dims[0]; ++x) {
          const auto& cx = tx[static_cast<std::size_t>(x)];
          const double c00 = lerp(grid[r00 + cx.i0], grid[r00 + cx.i1], cx.w);
          const double c10 = lerp(grid[r10 + cx.i0], grid[r10 + cx.i1], cx.w);
          const double c01 = lerp(grid[r01 + cx.i0], grid[r01 + cx.i1], cx.w);
          const double c11 = lerp(grid[r11 + cx.i0], grid[r11 + cx.i1], cx.w);
          double v = lerp(lerp(c00, c10, cy.w), lerp(c01, c11, cy.w), cz.w);
          if constexpr (G::kind == VoxelKind::Probability) v = std::clamp(v, 0.0, 1.0);
          out[o++] = store<T>(v);
        }
      }
    }
  }
  return out;
}

template <class G>
std::pair<G, GeometryStep> resample_isotropic(const G& grid, double target_spacing_mm) {
  require(std::isfinite(target_spacing_mm) && target_spacing_mm > 0.0,
          ErrorCode::InvalidArgument, "target spacing must be positive");
  Dims out_dims{};
  Vec3 factor{};
  for (int a = 0; a < 3; ++a) {
    const double n = std::floor(grid.extent_mm(a) / target_spacing_mm + 0.5);
    out_dims[a] = std::max<std::int64_t>(1, static_cast<std::int64_t>(n));
    factor[a] = target_spacing_mm / grid.spacing()[a];
  }
  const Vec3 target{target_spacing_mm, target_spacing_mm, target_spacing_mm};
  G out = sample_scaled(grid, out_dims, factor);
  out.set_spacing(target);
  return {std::move(out), ResampleStep{grid.dims(), grid.spacing(), out_dims, target}};
}

template <class G>
std::pair<G, GeometryStep> crop(const G& grid, const BoundingBox& box) {
  require(box.fits_in(grid.dims()), ErrorCode::OutOfBounds,
          "crop box outside grid " + to_string(grid.dims()));
  const Dims ext = box.extent();
  Vec3 origin = grid.origin();
  origin[0] += static_cast<double>(box.lo.x) * grid.spacing()[0];
  origin[1] += static_cast<double>(box.lo.y) * grid.spacing()[1];
  origin[2] += static_cast<double>(box.lo.z) * grid.spacing()[2];
  G out(ext, grid.spacing(), origin);
  std::size_t o = 0;
  for (std::int64_t z = 0; z < ext[2]; ++z) {
    for (std::int64_t y = 0; y < ext[1]; ++y) {
      const auto src = grid.values().subspan(grid.linear(box.lo.x, box.lo.y + y, box.lo.z + z),
                                             static_cast<std::size_t>(ext[0]));
      std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(o));
      o += static_cast<std::size_t>(ext[0]);
    }
  }
  return {std::move(out), CropStep{grid.dims(), box}};
}

template <class G>
G paste(const G& part, const BoundingBox& box, const Dims& host_dims, const Vec3& host_origin) {
  require(box.fits_in(host_dims) && box.extent() == part.dims(), ErrorCode::InvalidArgument,
          "paste box does not match part dims " + to_string(part.dims()));
  G out(host_dims, part.spacing(), host_origin);
  const Dims ext = part.dims();
  for (std::int64_t z = 0; z < ext[2]; ++z) {
    for (std::int64_t y = 0; y < ext[1]; ++y) {
      const auto src = part.values().subspan(part.linear(0, y, z), static_cast<std::size_t>(ext[0]));
      std::copy(src.begin(), src.end(),
                out.values().begin() +
                    static_cast<std::ptrdiff_t>(out.linear(box.lo.x, box.lo.y + y, box.lo.z + z)));
    }
  }
  return out;
}

template <class G>
std::pair<G, GeometryStep> resize(const G& grid, const Dims& target_dims) {
  for (auto d : target_dims) {
    require(d >= 1, ErrorCode::InvalidArgument, "resize target dims must be at least 1");
  }
  Vec3 factor{};
  for (int a = 0; a < 3; ++a) {
    factor[a] = static_cast<double>(grid.dims()[a]) / static_cast<double>(target_dims[a]);
  }
  return {sample_scaled(grid, target_dims, factor),
          ResizeStep{grid.dims(), grid.spacing(), target_dims}};
}

ProbGrid clip_normalize(const CtGrid& grid, double lo_hu, double hi_hu) {
  require(lo_hu < hi_hu, ErrorCode::InvalidArgument, "clip range requires lo < hi");
  ProbGrid out = ProbGrid::like(grid);
  const double width = hi_hu - lo_hu;
  const auto in = grid.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    dst[i] = static_cast<float>((std::clamp<double>(in[i], lo_hu, hi_hu) - lo_hu) / width);
  }
  return out;
}

template <class G>
G apply_step(const G& grid, const GeometryStep& step) {
  require(grid.dims() == step_input_dims(step), ErrorCode::InvalidArgument,
          "grid dims " + to_string(grid.dims()) + " do not match geometry step input " +
              to_string(step_input_dims(step)));
  return std::visit(Overloaded{[&](const ResampleStep& s) {
                                 Vec3 f{};
                                 for (int a = 0; a < 3; ++a) f[a] = s.to_spacing[a] / s.from_spacing[a];
                                 G out = sample_scaled(grid, s.to_dims, f);
                                 out.set_spacing(s.to_spacing);
                                 return out;
                               },
                               [&](const CropStep& s) { return crop(grid, s.box).first; },
                               [&](const ResizeStep& s) { return resize(grid, s.to_dims).first; }},
                    step);
}

template <class G>
G invert_step(const G& grid, const GeometryStep& step) {
  require(grid.dims() == step_output_dims(step), ErrorCode::InvalidArgument,
          "grid dims " + to_string(grid.dims()) + " do not match geometry step output " +
              to_string(step_output_dims(step)));
  return std::visit(
      Overloaded{[&](const ResampleStep& s) {
                   Vec3 f{};
                   for (int a = 0; a < 3; ++a) f[a] = s.from_spacing[a] / s.to_spacing[a];
                   G out = sample_scaled(grid, s.from_dims, f);
                   out.set_spacing(s.from_spacing);
                   return out;
                 },
                 [&](const CropStep& s) {
                   Vec3 origin = grid.origin();
                   origin[0] -= static_cast<double>(s.box.lo.x) * grid.spacing()[0];
                   origin[1] -= static_cast<double>(s.box.lo.y) * grid.spacing()[1];
                   origin[2] -= static_cast<double>(s.box.lo.z) * grid.spacing()[2];
                   return paste(grid, s.box, s.from_dims, origin);
                 },
                 [&](const ResizeStep& s) {
                   G out = resize(grid, s.from_dims).first;
                   out.set_spacing(s.from_spacing);
                   return out;
                 }},
      step);
}

template <class G>
G apply_geometry(const G& grid, const GeometryRecord& record) {
  require(grid.dims() == record.original_dims, ErrorCode::InvalidArgument,
          "grid dims " + to_string(grid.dims()) + " differ from record original dims " +
              to_string(record.original_dims));
  G current = grid;
  for (const auto& step : record.steps) current = apply_step(current, step);
  return current;
}

template <class G>
G invert_geometry(const G& grid, const GeometryRecord& record) {
  const Dims final_dims = record.forward_dims();
  require(grid.dims() == final_dims, ErrorCode::InvalidArgument,
          "grid dims " + to_string(grid.dims()) + " differ from record output dims " +
              to_string(final_dims));
  G current = grid;
  for (auto it = record.steps.rbegin(); it != record.steps.rend(); ++it) {
    current = invert_step(current, *it);
  }
  current.set_spacing(record.original_spacing);
  current.set_origin(record.original_origin);
  return current;
}

#define LNKIT_INSTANTIATE_TRANSFORMS(G)                                                   \
  template G sample_scaled<G>(const G&, const Dims&, const Vec3&);                       \
  template std::pair<G, GeometryStep> resample_isotropic<G>(const G&, double);           \
  template std::pair<G, GeometryStep> crop<G>(const G&, const BoundingBox&);             \
  template G paste<G>(const G&, const BoundingBox&, const Dims&, const Vec3&);           \
  template std::pair<G, GeometryStep> resize<G>(const G&, const Dims&);                  \
  template G apply_step<G>(const G&, const GeometryStep&);                               \
  template G invert_step<G>(const G&, const GeometryStep&);                              \
  template G apply_geometry<G>(const G&, const GeometryRecord&);                         \
  template G invert_geometry<G>(const G&, const GeometryRecord&);

LNKIT_INSTANTIATE_TRANSFORMS(CtGrid)
LNKIT_INSTANTIATE_TRANSFORMS(ProbGrid)
LNKIT_INSTANTIATE_TRANSFORMS(MaskGrid)
LNKIT_INSTANTIATE_TRANSFORMS(LabelGrid)

#undef LNKIT_INSTANTIATE_TRANSFORMS

}  // namespace lnkit
