#pragma once

#include <deque>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lnkit/stations.hpp"
#include "lnkit/voxelgrid.hpp"

namespace testing {

using namespace lnkit;

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lnkit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline MaskGrid random_mask(std::mt19937_64& rng, const Dims& dims, double density) {
  MaskGrid m(dims, {1.0, 1.0, 1.0});
  std::bernoulli_distribution fg(density);
  for (auto& v : m.values()) v = fg(rng) ? 1 : 0;
  return m;
}

inline ProbGrid random_prob(std::mt19937_64& rng, const Dims& dims) {
  ProbGrid p(dims, {1.0, 1.0, 1.0});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : p.values()) v = u(rng);
  return p;
}

/// Recursive-free flood fill that returns a label per voxel (0 = background).
/// `max_l1` is 1, 2 or 3 for 6-, 18- and 26-neighbourhoods.
inline std::vector<int> flood_labels(const MaskGrid& m, int max_l1) {
  const Dims d = m.dims();
  std::vector<int> label(m.size(), 0);
  int next = 0;
  for (std::size_t s = 0; s < m.size(); ++s) {
    if (!m[s] || label[s]) continue;
    label[s] = ++next;
    std::deque<std::size_t> q{s};
    while (!q.empty()) {
      const Index3 p = m.coords(q.front());
      q.pop_front();
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int l1 = std::abs(dx) + std::abs(dy) + std::abs(dz);
            if (l1 == 0 || l1 > max_l1) continue;
            const std::int64_t x = p.x + dx, y = p.y + dy, z = p.z + dz;
            if (x < 0 || y < 0 || z < 0 || x >= d[0] || y >= d[1] || z >= d[2]) continue;
            const std::size_t n = m.linear(x, y, z);
            if (m[n] && !label[n]) {
              label[n] = next;
              q.push_back(n);
            }
          }
    }
  }
  return label;
}

/// Rasterised ball on voxel centres.
inline MaskGrid ball(const Dims& dims, const Vec3& spacing, const Vec3& centre_mm, double r_mm) {
  MaskGrid m(dims, spacing);
  for (std::int64_t z = 0; z < dims[2]; ++z)
    for (std::int64_t y = 0; y < dims[1]; ++y)
      for (std::int64_t x = 0; x < dims[0]; ++x) {
        const double dx = x * spacing[0] - centre_mm[0];
        const double dy = y * spacing[1] - centre_mm[1];
        const double dz = z * spacing[2] - centre_mm[2];
        if (dx * dx + dy * dy + dz * dz <= r_mm * r_mm) m(x, y, z) = 1;
      }
  return m;
}

inline void fill_box(LabelGrid& g, std::uint16_t id, Index3 lo, Index3 hi) {
  for (std::int64_t z = lo.z; z <= hi.z; ++z)
    for (std::int64_t y = lo.y; y <= hi.y; ++y)
      for (std::int64_t x = lo.x; x <= hi.x; ++x) g(x, y, z) = id;
}

inline StationInfo station_info(std::uint16_t id, std::initializer_list<const char*> codes,
                                const char* primary) {
  StationInfo s;
  s.label_id = id;
  for (const char* c : codes) s.stations.insert(Station::parse(c));
  s.primary = Station::parse(primary);
  return s;
}

/// Seven annotated nodes: 1-2-3 touch in a chain, 4-5-6 touch in a chain,
/// 7 stands alone. Label 3 only meets 2 along an edge, so it merges at 18/26
/// but not at 6 connectivity.
inline Annotation touching_scene() {
  Annotation a;
  a.labels = LabelGrid({32, 16, 8}, {1, 1, 1});
  fill_box(a.labels, 1, {2, 2, 2}, {5, 5, 4});
  fill_box(a.labels, 2, {6, 2, 2}, {9, 5, 4});
  fill_box(a.labels, 3, {10, 6, 2}, {12, 7, 4});
  fill_box(a.labels, 4, {2, 9, 2}, {5, 12, 4});
  fill_box(a.labels, 5, {6, 9, 2}, {8, 12, 4});
  fill_box(a.labels, 6, {9, 9, 2}, {11, 12, 4});
  fill_box(a.labels, 7, {20, 2, 2}, {24, 5, 4});
  a.stations = {{1, station_info(1, {"4"}, "4")},        {2, station_info(2, {"4", "7"}, "7")},
                {3, station_info(3, {"10"}, "10")},      {4, station_info(4, {"2"}, "2")},
                {5, station_info(5, {"2"}, "2")},        {6, station_info(6, {"3a"}, "3a")},
                {7, station_info(7, {"7"}, "7")}};
  return a;
}

}  // namespace testing
