#include <random>

#include "doctest.h"
#include "lnkit/instancer.hpp"
#include "support.hpp"

using namespace lnkit;

namespace {

std::vector<int> as_labels(const InstanceSet& set, std::size_t n) {
  std::vector<int> out(n, 0);
  for (const auto& inst : set.instances)
    for (auto v : inst.voxels) out[v] = static_cast<int>(inst.id);
  return out;
}

Instance single(const InstanceSet& set) {
  REQUIRE(set.instances.size() == 1);
  return set.instances.front();
}

}  // namespace

TEST_CASE("threshold is inclusive and monotone") {
  ProbGrid p({5, 1, 1}, {1, 1, 1});
  p[0] = 0.0f;
  p[1] = 0.3f;
  p[2] = 0.29999f;
  p[3] = 0.7f;
  p[4] = 1.0f;
  CHECK(count_foreground(threshold(p, 0.0)) == 5);
  const MaskGrid m = threshold(p, 0.3);
  CHECK(m[1] == 1);
  CHECK(m[2] == 0);
  CHECK(threshold(p, 0.7)[3] == 1);
  CHECK(count_foreground(threshold(p, 1.0)) == 1);
  CHECK_THROWS_AS(threshold(p, 1.5), Error);
  CHECK_THROWS_AS(threshold(p, -0.1), Error);

  std::mt19937_64 rng(2);
  const ProbGrid r = testing::random_prob(rng, {10, 10, 10});
  std::size_t last = r.size() + 1;
  for (int k = 0; k <= 100; ++k) {
    const std::size_t n = count_foreground(threshold(r, k / 100.0));
    REQUIRE(n <= last);
    last = n;
    REQUIRE(connected_components(r, k / 100.0, Connectivity::Six).foreground_count() == n);
  }
}

TEST_CASE("connectivity decides whether corner neighbours join") {
  MaskGrid m({3, 3, 3}, {1, 1, 1});
  m(0, 0, 0) = 1;
  m(1, 1, 1) = 1;
  CHECK(connected_components(m, Connectivity::Six).instances.size() == 2);
  CHECK(connected_components(m, Connectivity::Eighteen).instances.size() == 2);
  CHECK(connected_components(m, Connectivity::TwentySix).instances.size() == 1);
  MaskGrid e({3, 3, 3}, {1, 1, 1});
  e(0, 0, 0) = 1;
  e(1, 1, 0) = 1;
  CHECK(connected_components(e, Connectivity::Six).instances.size() == 2);
  CHECK(connected_components(e, Connectivity::Eighteen).instances.size() == 1);

  CHECK(connected_components(MaskGrid({4, 4, 4}, {1, 1, 1}), Connectivity::TwentySix).instances.empty());
  CHECK(parse_connectivity(18) == Connectivity::Eighteen);
  CHECK_THROWS_AS(parse_connectivity(8), Error);
}

TEST_CASE("labeling agrees with a flood fill") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 150; ++trial) {
    const double density = 0.1 + 0.6 * (trial % 7) / 6.0;
    const Dims d{1 + trial % 13, 1 + (trial * 7) % 11, 1 + (trial * 3) % 9};
    const MaskGrid m = testing::random_mask(rng, d, density);
    for (auto [c, l1] : {std::pair{Connectivity::Six, 1}, {Connectivity::Eighteen, 2},
                         {Connectivity::TwentySix, 3}}) {
      const InstanceSet set = connected_components(m, c);
      REQUIRE(as_labels(set, m.size()) == testing::flood_labels(m, l1));
      for (std::size_t k = 0; k < set.instances.size(); ++k) {
        REQUIRE(set.instances[k].id == k + 1);
        REQUIRE(std::is_sorted(set.instances[k].voxels.begin(), set.instances[k].voxels.end()));
      }
    }
  }
  // A spiral that only a union-find across rows gets right.
  MaskGrid u({5, 5, 1}, {1, 1, 1});
  for (int x = 0; x < 5; ++x) u(x, 0, 0) = u(x, 4, 0) = 1;
  for (int y = 0; y < 5; ++y) u(0, y, 0) = 1;
  for (int x = 2; x < 5; ++x) u(x, 2, 0) = 1;
  u(4, 3, 0) = 1;
  CHECK(connected_components(u, Connectivity::Six).instances.size() == 1);
}

TEST_CASE("touching annotations cluster with unioned stations") {
  const Annotation scene = testing::touching_scene();
  const ClusteredGroundTruth c = cluster_ground_truth(scene, Connectivity::TwentySix);
  REQUIRE(c.clusters.instances.size() == 3);
  const auto codes = [](const StationSet& s) { return to_string(s); };
  CHECK(codes(c.clusters.instances[0].stations) == to_string(StationSet{
                                                      Station::parse("4"), Station::parse("7"), Station::parse("10")}));
  CHECK(codes(c.clusters.instances[0].primaries) == codes(c.clusters.instances[0].stations));
  // The singleton starts on an earlier row than the second group.
  CHECK(c.clusters.instances[1].stations == StationSet{Station::parse("7")});
  CHECK(c.clusters.instances[2].stations == StationSet{Station::parse("2"), Station::parse("3a")});
  CHECK(c.clusters.instances[2].primaries == StationSet{Station::parse("2"), Station::parse("3a")});
  c.annotation.validate();
  CHECK(c.annotation.stations.size() == 3);
  CHECK(c.annotation.stations.at(1).primary.code() == "4");  // label 1 and 2 tie on 48 voxels
  CHECK(c.annotation.stations.at(2).primary.code() == "7");
  CHECK(c.annotation.stations.at(3).primary.code() == "2");  // label 4 is the largest member
  std::size_t members = 0;
  for (const auto& inst : c.clusters.instances) members += inst.voxel_count();
  CHECK(members == count_foreground(scene.labels));

  // Label 3 meets label 2 only along an edge.
  CHECK(cluster_ground_truth(scene, Connectivity::Six).clusters.instances.size() == 4);

  Annotation two;
  two.labels = LabelGrid({10, 10, 10}, {1, 1, 1});
  testing::fill_box(two.labels, 1, {0, 0, 0}, {2, 2, 2});
  testing::fill_box(two.labels, 2, {3, 0, 0}, {5, 2, 2});
  two.stations = {{1, testing::station_info(1, {"4"}, "4")}, {2, testing::station_info(2, {"7"}, "7")}};
  const auto merged = cluster_ground_truth(two, Connectivity::Six);
  REQUIRE(merged.clusters.instances.size() == 1);
  CHECK(merged.clusters.instances[0].stations == StationSet{Station::parse("4"), Station::parse("7")});

  Annotation apart = two;
  apart.labels = LabelGrid({10, 10, 10}, {1, 1, 1});
  testing::fill_box(apart.labels, 1, {0, 0, 0}, {2, 2, 2});
  testing::fill_box(apart.labels, 2, {6, 6, 6}, {8, 8, 8});
  const auto same = cluster_ground_truth(apart, Connectivity::TwentySix);
  CHECK(same.clusters.instances.size() == 2);
  CHECK(same.annotation.labels.values().size() == apart.labels.values().size());
  CHECK(std::equal(same.annotation.labels.values().begin(), same.annotation.labels.values().end(),
                   apart.labels.values().begin()));
}

TEST_CASE("short axis of rasterised shapes") {
  for (double r : {3.0, 5.0, 10.0}) {
    const Dims d{32, 32, 32};
    const MaskGrid b = testing::ball(d, {1, 1, 1}, {15.5, 15.2, 15.0}, r);
    const Instance inst = single(connected_components(b, Connectivity::TwentySix));
    INFO("r = " << r);
    CHECK(std::abs(inst.short_axis_mm - 2 * r) <= std::max(1.0, 0.1 * r));
  }

  MaskGrid e({48, 40, 30}, {1, 1, 1});
  for (std::int64_t z = 0; z < 30; ++z)
    for (std::int64_t y = 0; y < 40; ++y)
      for (std::int64_t x = 0; x < 48; ++x) {
        const double u = (x - 24) / 15.0, v = (y - 20) / 10.0, w = (z - 15) / 8.0;
        if (u * u + v * v + w * w <= 1.0) e(x, y, z) = 1;
      }
  CHECK(single(connected_components(e, Connectivity::TwentySix)).short_axis_mm == doctest::Approx(20.0).epsilon(0.05));

  MaskGrid one({3, 3, 3}, {1, 1, 1});
  one(1, 1, 1) = 1;
  CHECK(single(connected_components(one, Connectivity::Six)).short_axis_mm == 0.0);
  MaskGrid line({5, 3, 3}, {1, 1, 1});
  for (int x = 0; x < 5; ++x) line(x, 1, 1) = 1;
  CHECK(single(connected_components(line, Connectivity::Six)).short_axis_mm == doctest::Approx(0.0));

  // Anisotropic pixels are measured in mm.
  const MaskGrid aniso = testing::ball({40, 40, 12}, {0.5, 0.5, 2.0}, {10, 10, 11}, 6.0);
  CHECK(single(connected_components(aniso, Connectivity::TwentySix)).short_axis_mm ==
        doctest::Approx(12.0).epsilon(0.05));
}

TEST_CASE("volume and size category") {
  MaskGrid cube({10, 10, 10}, {1, 1, 1}, {}, 1);
  CHECK(single(connected_components(cube, Connectivity::Six)).volume_ml == 1.0);
  CHECK(instance_volume_ml(1000, {1, 1, 1}) == 1.0);
  CHECK(instance_volume_ml(10, {0.5, 0.5, 0.5}) == doctest::Approx(0.00125));
  CHECK(instance_volume_ml(10, {1, 1, 1}) == doctest::Approx(8 * instance_volume_ml(10, {0.5, 0.5, 0.5})));

  CHECK(size_category(0.0) == SizeCategory::Lt7);
  CHECK(size_category(6.999) == SizeCategory::Lt7);
  CHECK(size_category(7.0) == SizeCategory::From7To10);
  CHECK(size_category(9.999) == SizeCategory::From7To10);
  CHECK(size_category(10.0) == SizeCategory::Ge10);
  CHECK(size_category(42.0) == SizeCategory::Ge10);
  CHECK_THROWS_AS(size_category(-1.0), Error);
  CHECK_THROWS_AS(size_category(std::nan("")), Error);
  CHECK(to_string(SizeCategory::From7To10) == "7to10");
}

TEST_CASE("instance set serialises its measurements") {
  const auto c = cluster_ground_truth(testing::touching_scene(), Connectivity::TwentySix);
  const auto j = to_json(c.clusters);
  CHECK(j["connectivity"] == 26);
  REQUIRE(j["instances"].size() == 3);
  CHECK(j["instances"][1]["voxel_count"] == 60);
  CHECK(j["instances"][1]["stations"] == nlohmann::json::array({"7"}));
  CHECK(j["instances"][0].contains("size_category"));
}
