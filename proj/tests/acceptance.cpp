// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "lnkit/harness.hpp"
#include "lnkit/phantom.hpp"
#include "lnkit/pipeline.hpp"
#include "lnkit/rng.hpp"
#include "lnkit/transforms.hpp"
#include "lnkit/volio.hpp"
#include "support.hpp"

using namespace lnkit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
  void expect(bool ok, const std::string& why) {
    if (!ok) fail(why);
  }
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) out.push_back(line);
  return out;
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string c; std::getline(ss, c, ',');) out.push_back(c);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool bit_equal(const ProbGrid& a, const ProbGrid& b) {
  return a.dims() == b.dims() &&
         std::memcmp(a.values().data(), b.values().data(), a.values().size_bytes()) == 0;
}

// ---------------------------------------------------------------------------

Outcome labeling_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> dens(0.05, 0.75);
  std::size_t grids = 0;
  for (int trial = 0; trial < 1000 && o.pass; ++trial) {
    const MaskGrid m = testing::random_mask(rng, {16, 16, 16}, dens(rng));
    for (auto [c, l1] : {std::pair{Connectivity::Six, 1}, {Connectivity::TwentySix, 3}}) {
      const InstanceSet set = connected_components(m, c);
      std::vector<int> mine(m.size(), 0);
      for (const auto& inst : set.instances)
        for (auto v : inst.voxels) mine[v] = static_cast<int>(inst.id);
      const std::vector<int> ref = testing::flood_labels(m, l1);
      // Partition equality up to relabelling: a bijection between label ids.
      std::map<int, int> fwd, bwd;
      for (std::size_t i = 0; i < m.size(); ++i) {
        if ((mine[i] == 0) != (ref[i] == 0)) {
          o.fail("foreground mismatch, trial " + std::to_string(trial));
          break;
        }
        if (mine[i] == 0) continue;
        auto [f, fnew] = fwd.emplace(mine[i], ref[i]);
        auto [b, bnew] = bwd.emplace(ref[i], mine[i]);
        if (f->second != ref[i] || b->second != mine[i]) {
          o.fail("partition differs, trial " + std::to_string(trial));
          break;
        }
      }
      ++grids;
    }
  }
  const double s = since(t0);
  o.expect(s < 60.0, "took " + fmt("%.1f s", s));
  if (o.pass) o.detail = std::to_string(grids) + " labelings of 16^3 grids at 6/26, " + fmt("%.1f s", s);
  return o;
}

std::string first_difference(const PatientMetrics& a, const PatientMetrics& b) {
  const double tol = 1e-9;
  auto num = [&](double x, double y) { return std::abs(x - y) <= tol; };
  auto opt = [&](const std::optional<double>& x, const std::optional<double>& y) {
    return x.has_value() == y.has_value() && (!x || num(*x, *y));
  };
  if (a.patient_id != b.patient_id) return "patient_id";
  if (!num(a.pt, b.pt)) return "pt";
  if (!num(a.dice, b.dice)) return "dice";
  if (!opt(a.dice_tp, b.dice_tp)) return "dice_tp";
  if (!opt(a.gt_perc, b.gt_perc)) return "gt_perc";
  if (a.tp != b.tp || a.fn != b.fn || a.fp != b.fp) return "counts";
  if (a.gt.size() != b.gt.size()) return "gt size";
  for (std::size_t i = 0; i < a.gt.size(); ++i) {
    const auto &x = a.gt[i], &y = b.gt[i];
    const std::string at = " of gt " + std::to_string(i);
    if (x.id != y.id || x.voxel_count != y.voxel_count) return "id/voxels" + at;
    if (!num(x.volume_ml, y.volume_ml)) return "volume" + at;
    if (!num(x.short_axis_mm, y.short_axis_mm)) return "short axis" + at;
    if (x.stations != y.stations || x.primaries != y.primaries) return "stations" + at;
    if (x.det_id != y.det_id) return "det_id" + at;
    if (!num(x.pair_dice, y.pair_dice)) return "pair_dice" + at;
    if (!num(x.covered_pct, y.covered_pct)) return "covered_pct" + at;
  }
  return {};
}

Outcome metrics_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  SplitMix64 rng(77);
  std::size_t done = 0, tp = 0, fp = 0, clustered_nodes = 0;
  for (std::uint64_t seed = 0; done < 50 && seed < 500; ++seed) {
    const Dims d{static_cast<std::int64_t>(36 + rng.below(29)), static_cast<std::int64_t>(36 + rng.below(29)),
                 static_cast<std::int64_t>(30 + rng.below(35))};
    const Vec3 sp{rng.uniform(0.7, 1.3), 0.0, rng.uniform(0.8, 2.0)};
    const Vec3 spacing{sp[0], sp[0], sp[2]};
    PhantomSpec spec;
    try {
      spec = random_phantom_spec(seed, d, spacing, 1 + rng.below(5), 2.0, 5.0);
    } catch (const Error&) {
      continue;  // not enough room for that many separated nodes
    }
    if (rng.uniform() < 0.5) {
      // A satellite touching the first node so clustering matters.
      NodeSpec sat = spec.nodes.front();
      sat.label.reset();
      sat.center_mm[0] += sat.semi_axes_mm[0] + 1.5;
      sat.semi_axes_mm = {2.0, 2.0, 2.0};
      sat.stations = {Station::parse("7")};
      sat.primary = Station::parse("7");
      PhantomSpec with = spec;
      with.nodes.push_back(sat);
      try {
        with.validate();
        spec = with;
      } catch (const Error&) {
      }
    }
    Phantom ph;
    try {
      ph = generate_phantom(spec);
    } catch (const Error&) {
      continue;
    }
    ProbabilityQuality q;
    for (const auto& [id, info] : ph.annotation.stations)
      if (rng.uniform() < 0.3) q.drop_ids.push_back(id);
    q.boundary_erosion_voxels = static_cast<int>(rng.below(2));
    q.fp_blobs = static_cast<int>(rng.below(3));
    q.fp_radius_mm = 2.0;
    q.blur_sigma_voxels = rng.uniform() < 0.5 ? 0.0 : 0.8;
    q.seed = seed;
    ProbGrid prob;
    try {
      prob = synth_probability(ph.annotation, q);
    } catch (const Error&) {
      continue;
    }
    const Connectivity c = std::array{Connectivity::Six, Connectivity::Eighteen,
                                      Connectivity::TwentySix}[rng.below(3)];
    const double pt = threshold_lattice()[rng.below(10)];
    const double min_dice = rng.uniform() < 0.3 ? 0.2 : 0.0;
    const auto clustered = cluster_ground_truth(ph.annotation, c);
    clustered_nodes += ph.annotation.stations.size() - clustered.clusters.instances.size();
    const std::string id = "phantom" + std::to_string(seed);
    const PatientMetrics mine = evaluate_patient(id, prob, clustered.clusters, pt, c, min_dice);
    const PatientMetrics ref = oracle_metrics(prob, ph.annotation, pt, c, min_dice, id);
    const std::string diff = first_difference(mine, ref);
    if (!diff.empty()) o.fail("seed " + std::to_string(seed) + ": " + diff);
    tp += mine.tp;
    fp += mine.fp;
    ++done;
  }
  const double s = since(t0);
  o.expect(done == 50, "only " + std::to_string(done) + " phantoms generated");
  o.expect(s < 300.0, "took " + fmt("%.1f s", s));
  if (o.pass) {
    o.detail = std::to_string(done) + " patients (" + std::to_string(tp) + " TP, " + std::to_string(fp) +
               " FP, " + std::to_string(clustered_nodes) + " merged nodes), every field within 1e-9, " +
               fmt("%.1f s", s);
  }
  return o;
}

/// Ten patients written to disk, two map configurations each.
struct Cohort {
  fs::path manifest;
};

const Cohort& phantom_cohort() {
  static const Cohort cohort = [] {
    const fs::path dir = testing::scratch_dir("acceptance_cohort");
    nlohmann::json patients = nlohmann::json::object();
    for (std::size_t i = 0; i < 10; ++i) {
      char id[16];
      std::snprintf(id, sizeof id, "P%02zu", i + 1);
      const Phantom ph = generate_phantom(random_phantom_spec(500 + i, {72, 72, 56}, {0.9, 0.9, 1.2}, 5, 2.5, 6.0));
      ProbabilityQuality degraded;
      degraded.drop_ids = {2, 4};
      degraded.fp_blobs = 3;
      degraded.fp_radius_mm = 2.5;
      degraded.seed = i;
      const fs::path p = dir / id;
      fs::create_directories(p);
      write_volume(ph.ct, p / "ct.nii.gz");
      write_annotation(ph.annotation, p / "labels.nii.gz", p / "stations.json");
      write_volume(synth_probability(ph.annotation, {}), p / "perfect.nii.gz");
      write_volume(synth_probability(ph.annotation, degraded), p / "degraded.nii.gz");
      const std::string rel(id);
      patients[id] = {{"ct", rel + "/ct.nii.gz"},
                      {"gt_labels", rel + "/labels.nii.gz"},
                      {"gt_stations", rel + "/stations.json"},
                      {"prob_maps", {{"perfect", rel + "/perfect.nii.gz"}, {"degraded", rel + "/degraded.nii.gz"}}}};
    }
    write_json({{"patients", patients}}, dir / "manifest.json");
    return Cohort{dir / "manifest.json"};
  }();
  return cohort;
}

const ConfigResult* find_config(const CVReport& r, const std::string& name) {
  for (const auto& c : r.configs)
    if (c.config == name) return &c;
  return nullptr;
}

Outcome end_to_end() {
  Outcome o;
  const ManifestSource src(read_manifest(phantom_cohort().manifest));
  CVConfig cfg;
  cfg.seed = 5;
  cfg.pt_mode = PtMode::Fixed;
  cfg.fixed_pt = 0.5;
  const CVReport r = run_cross_validation(src, cfg);
  const ConfigResult* perfect = find_config(r, "perfect");
  const ConfigResult* degraded = find_config(r, "degraded");
  if (!perfect || !degraded) {
    o.fail("missing configuration rows");
    return o;
  }
  const CohortMetrics& p = perfect->total.metrics;
  o.expect(p.gt_instances == 50, "perfect: " + std::to_string(p.gt_instances) + " GT instances");
  o.expect(p.recall_global && *p.recall_global == 1.0, "perfect: recall != 1");
  o.expect(p.recall_pw.mean == 1.0, "perfect: recall_pw != 1");
  o.expect(p.fppp.mean == 0.0, "perfect: FPPP != 0");
  double worst = 1.0;
  for (const auto& pm : perfect->evaluation.patients) worst = std::min(worst, pm.dice);
  o.expect(worst >= 0.99, "perfect: patient Dice " + fmt("%.4f", worst));
  const CohortMetrics& d = degraded->total.metrics;
  o.expect(d.recall_global && *d.recall_global == 0.6, "degraded: recall " + fmt("%.6f", d.recall_global.value_or(-1)));
  o.expect(std::abs(d.recall_pw.mean - 0.6) < 1e-12, "degraded: recall_pw " + fmt("%.17g", d.recall_pw.mean));
  o.expect(d.fppp.mean == 3.0, "degraded: FPPP " + fmt("%.6f", d.fppp.mean));
  if (o.pass) {
    o.detail = "perfect: recall 1, recall_pw 1, FPPP 0, min patient Dice " + fmt("%.4f", worst) +
               "; degraded: recall 0.6, FPPP 3 (PT 0.5, 10 patients x 5 nodes)";
  }
  return o;
}

Outcome touching_clusters() {
  Outcome o;
  const Annotation scene = testing::touching_scene();
  const ClusteredGroundTruth c = cluster_ground_truth(scene, Connectivity::TwentySix);
  o.expect(scene.stations.size() == 7, "scene should hold 7 instances");
  o.expect(c.clusters.instances.size() == 3, std::to_string(c.clusters.instances.size()) + " clusters");
  // Member unions from the raw labels.
  for (const auto& cl : c.clusters.instances) {
    std::set<std::uint16_t> members;
    for (auto v : cl.voxels) members.insert(scene.labels[v]);
    StationSet want, prim;
    for (auto id : members) {
      const auto& info = scene.stations.at(id);
      want.insert(info.stations.begin(), info.stations.end());
      prim.insert(info.primary);
    }
    o.expect(cl.stations == want, "cluster " + std::to_string(cl.id) + " stations " + to_string(cl.stations));
    o.expect(cl.primaries == prim, "cluster " + std::to_string(cl.id) + " primaries " + to_string(cl.primaries));
  }
  if (o.pass) {
    std::string sets;
    for (const auto& cl : c.clusters.instances) sets += (sets.empty() ? "" : " ") + to_string(cl.stations);
    o.detail = "7 instances -> 3 clusters, station sets " + sets;
  }
  return o;
}

Outcome morphometrics() {
  Outcome o;
  std::string axes;
  for (double r : {3.0, 5.0, 10.0}) {
    const MaskGrid b = testing::ball({32, 32, 32}, {1, 1, 1}, {15.3, 15.6, 15.0}, r);
    const InstanceSet s = connected_components(b, Connectivity::TwentySix);
    if (s.instances.size() != 1) {
      o.fail("sphere split into pieces");
      continue;
    }
    const double sa = s.instances[0].short_axis_mm;
    o.expect(std::abs(sa - 2 * r) <= std::max(1.0, 0.05 * 2 * r), "r=" + fmt("%.0f", r) + " short axis " + fmt("%.3f", sa));
    axes += (axes.empty() ? "" : ", ") + fmt("%.2f", sa);
  }
  MaskGrid cube({10, 10, 10}, {1, 1, 1}, {}, 1);
  const double ml = connected_components(cube, Connectivity::Six).instances.at(0).volume_ml;
  o.expect(ml == 1.0, "1000-voxel volume " + fmt("%.17g", ml));
  o.expect(size_category(10.0) == SizeCategory::Ge10, "10 mm not ge10");
  o.expect(size_category(9.999) == SizeCategory::From7To10, "9.999 mm not 7to10");
  o.expect(size_category(7.0) == SizeCategory::From7To10, "7 mm not 7to10");
  o.expect(size_category(6.999) == SizeCategory::Lt7, "6.999 mm not lt7");
  if (o.pass) o.detail = "short axes " + axes + " for r = 3, 5, 10; 1000 voxels = 1 ml; boundaries [7,10[ and >= 10";
  return o;
}

Outcome geometry_round_trip() {
  Outcome o;
  PreprocessConfig cfg;
  cfg.mode = PreprocessMode::FullVolume;  // 128 x 128 x 144
  const std::vector<std::pair<Dims, Vec3>> shapes{
      {{160, 160, 96}, {0.7, 0.7, 1.25}}, {{140, 130, 60}, {0.8, 0.8, 2.0}},
      {{120, 120, 120}, {0.9, 0.9, 0.9}}, {{180, 170, 150}, {0.6, 0.6, 0.8}}};
  double worst = 1.0;
  std::size_t nodes = 0;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto& [dims, sp] = shapes[k];
    const Phantom ph = generate_phantom(random_phantom_spec(900 + k, dims, sp, 3, 5.5, 8.0));
    const Preprocessed pre = preprocess(ph.ct, cfg);
    o.expect(pre.volume.dims() == Dims{128, 128, 144}, "model grid " + to_string(pre.volume.dims()));
    for (const NodeRecord& rec : node_records(ph.annotation)) {
      if (rec.short_axis_mm < 10.0) continue;
      ProbGrid ind = ProbGrid::like(ph.ct);
      MaskGrid truth = MaskGrid::like(ph.ct);
      for (std::size_t i = 0; i < ind.size(); ++i) {
        const bool on = ph.annotation.labels[i] == rec.label_id;
        ind[i] = on ? 1.0f : 0.0f;
        truth[i] = on;
      }
      const ProbGrid back = restore_original_space(apply_geometry(ind, pre.record), pre.record);
      o.expect(back.dims() == ph.ct.dims(), "restored dims differ");
      const double d = dice(threshold(back, 0.5), truth);
      worst = std::min(worst, d);
      ++nodes;
    }
  }
  o.expect(nodes >= 8, "only " + std::to_string(nodes) + " nodes of at least 10 mm");
  o.expect(worst >= 0.95, "worst node Dice " + fmt("%.4f", worst));

  // Constant grids, with a crop that keeps the whole volume.
  const CtGrid ct({90, 80, 50}, {0.75, 0.75, 1.6}, {0, 0, 0}, 20);
  const MaskGrid everything = MaskGrid::like(ct, 1);
  const Preprocessed whole = preprocess(ct, cfg, &everything);
  const ProbGrid c_orig = ProbGrid::like(ct, 0.37f);
  const ProbGrid fwd = apply_geometry(c_orig, whole.record);
  const ProbGrid back = restore_original_space(fwd, whole.record);
  o.expect(std::all_of(fwd.values().begin(), fwd.values().end(), [](float v) { return v == 0.37f; }),
           "constant grid changed in model space");
  o.expect(bit_equal(back, c_orig), "constant grid changed after restore");
  const ProbGrid model_c = ProbGrid::like(whole.volume, 0.81f);
  const ProbGrid model_back = restore_original_space(model_c, whole.record);
  o.expect(std::all_of(model_back.values().begin(), model_back.values().end(), [](float v) { return v == 0.81f; }),
           "constant model-space grid changed after restore");

  // Restored dims always equal the originals.
  SplitMix64 rng(3);
  for (int t = 0; t < 12; ++t) {
    const Dims d{static_cast<std::int64_t>(60 + rng.below(80)), static_cast<std::int64_t>(60 + rng.below(80)),
                 static_cast<std::int64_t>(20 + rng.below(80))};
    const Vec3 s{rng.uniform(0.5, 1.2), rng.uniform(0.5, 1.2), rng.uniform(0.6, 3.0)};
    const Phantom p = generate_phantom(random_phantom_spec(t, d, s, 0));
    const Preprocessed pr = preprocess(p.ct, t % 2 ? cfg : PreprocessConfig{});
    const ProbGrid r = restore_original_space(pr.volume, pr.record);
    o.expect(r.dims() == d && r.same_geometry(p.ct), "restored dims " + to_string(r.dims()) + " vs " + to_string(d));
  }
  if (o.pass) {
    o.detail = std::to_string(nodes) + " nodes >= 10 mm, worst Dice " + fmt("%.4f", worst) +
               "; constant grids exact; 12 random shapes restore to their own dims";
  }
  return o;
}

Outcome slab_algebra() {
  Outcome o;
  std::mt19937_64 rng(8);
  std::size_t checked = 0;
  for (std::int64_t size : {32, 64}) {
    SlabSpec spec;
    spec.slab_size = size;
    spec.stride = 8;
    spec.axial_dims = {4, 3};
    for (std::int64_t depth = 1; depth <= 200 && o.pass; ++depth) {
      const auto starts = slab_starts(depth, spec);
      std::vector<int> cover(static_cast<std::size_t>(depth), 0);
      for (auto s : starts)
        for (std::int64_t z = s; z < std::min(depth, s + size); ++z) ++cover[static_cast<std::size_t>(z)];
      const std::string at = " (depth " + std::to_string(depth) + ", size " + std::to_string(size) + ")";
      o.expect(std::all_of(cover.begin(), cover.end(), [](int c) { return c > 0; }), "gap in coverage" + at);
      for (std::size_t k = 1; k < starts.size(); ++k) {
        const std::int64_t overlap = size - (starts[k] - starts[k - 1]);
        if (k + 1 < starts.size()) o.expect(overlap == size - 8, "overlap " + std::to_string(overlap) + at);
        else o.expect(overlap >= size - 8 && overlap < size, "last overlap " + std::to_string(overlap) + at);
      }
      const ProbGrid vol = testing::random_prob(rng, {4, 3, depth});
      o.expect(bit_equal(stitch_slabs(extract_slabs(vol, spec)), vol), "stitch not bit-exact" + at);
      ++checked;
    }
  }
  SlabSpec s32, s64;
  s64.slab_size = 64;
  const auto a = slab_starts(144, s32), b = slab_starts(144, s64);
  o.expect(32 - (a[1] - a[0]) == 24 && 64 - (b[1] - b[0]) == 56, "shared slices differ from 24 / 56");
  if (o.pass) o.detail = std::to_string(checked) + " depth/size cases: full coverage, overlaps 24 and 56, bit-exact stitch";
  return o;
}

Outcome ensemble_algebra() {
  Outcome o;
  std::mt19937_64 rng(13);
  for (int t = 0; t < 200 && o.pass; ++t) {
    const Dims d{1 + t % 9, 1 + (t * 5) % 7, 1 + (t * 3) % 8};
    const ProbGrid a = testing::random_prob(rng, d), b = testing::random_prob(rng, d), c = testing::random_prob(rng, d);
    o.expect(bit_equal(ensemble_max(a, b), ensemble_max(b, a)), "not commutative");
    o.expect(bit_equal(ensemble_max(ensemble_max(a, b), c), ensemble_max(a, ensemble_max(b, c))), "not associative");
    o.expect(bit_equal(ensemble_max(a, a), a), "not idempotent");
    const ProbGrid ab = ensemble_max(a, b);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (ab[i] < a[i] || ab[i] < b[i] || (ab[i] != a[i] && ab[i] != b[i])) {
        o.fail("not the pointwise maximum");
        break;
      }
    }
  }
  if (o.pass) o.detail = "200 random triples: commutative, associative, idempotent, pointwise max";
  return o;
}

Outcome sweep_lattice() {
  Outcome o;
  const auto lattice = threshold_lattice();
  o.expect(lattice.size() == 10, "lattice size " + std::to_string(lattice.size()));
  for (std::size_t k = 0; k < lattice.size(); ++k) {
    o.expect(std::abs(lattice[k] - static_cast<double>(k + 1) / 10.0) < 1e-12, "lattice value " + fmt("%.3f", lattice[k]));
  }
  std::mt19937_64 rng(21);
  std::vector<ProbGrid> maps;
  for (int i = 0; i < 20; ++i) maps.push_back(testing::random_prob(rng, {12, 12, 12}));
  for (std::size_t i = 0; i < 5; ++i) {
    const Phantom ph = generate_phantom(random_phantom_spec(40 + i, {48, 48, 32}, {1, 1, 1}, 3));
    ProbabilityQuality q;
    q.blur_sigma_voxels = 1.2;
    q.fp_blobs = 2;
    q.seed = i;
    maps.push_back(synth_probability(ph.annotation, q));
  }
  for (const auto& m : maps) {
    std::size_t last = m.size() + 1;
    for (double pt : lattice) {
      const std::size_t fg = count_foreground(threshold(m, pt));
      const std::size_t fg_cc = connected_components(m, pt, Connectivity::TwentySix).foreground_count();
      o.expect(fg <= last && fg == fg_cc, "foreground grows at PT " + fmt("%.1f", pt));
      last = fg;
    }
    const SweepResult s = sweep_thresholds(m, threshold(m, 0.5));
    o.expect(s.points.size() == 10, "sweep returned " + std::to_string(s.points.size()) + " points");
    for (std::size_t k = 0; k < s.points.size(); ++k) o.expect(s.points[k].pt == lattice[k], "sweep off the lattice");
    o.expect(std::find(lattice.begin(), lattice.end(), s.best_pt) != lattice.end(), "best PT off the lattice");
  }
  if (o.pass) o.detail = std::to_string(maps.size()) + " maps: foreground non-increasing over PT 0.1..1.0, ten thresholds";
  return o;
}

Outcome report_structure() {
  Outcome o;
  const ManifestSource src(read_manifest(phantom_cohort().manifest));
  CVConfig cfg;
  cfg.seed = 9;
  cfg.ensembles = {parse_ensemble("both=perfect+degraded")};
  const CVReport r = run_cross_validation(src, cfg);
  o.expect(r.configs.size() == 3, std::to_string(r.configs.size()) + " configuration rows");

  // Per-fold rows plus a Total row; pooled counts equal fold sums.
  const auto folds = lines_of(fold_table_csv(r));
  o.expect(!folds.empty() && folds[0] == "config,fold,PT,LN,dice,dice_std,recall,recall_pw,recall_pw_std,fppp,"
                                         "fppp_std,gt_perc,gt_perc_std,dice_tp,dice_tp_std",
           "fold table header");
  o.expect(folds.size() == 1 + 3 * 6, std::to_string(folds.size()) + " fold-table lines");
  for (const auto& c : r.configs) {
    std::size_t ln = 0, tp = 0, fp = 0, pts = 0;
    for (const auto& f : c.folds) {
      ln += f.gt_instances;
      tp += f.metrics.tp;
      fp += f.metrics.fp;
      pts += f.patients;
      o.expect(f.pt.has_value(), "fold without a PT");
    }
    o.expect(c.folds.size() == 5, c.config + ": " + std::to_string(c.folds.size()) + " folds");
    o.expect(ln == c.total.gt_instances && tp == c.total.metrics.tp && fp == c.total.metrics.fp && pts == 10,
             c.config + ": Total differs from the fold sums");
    std::size_t csv_ln = 0, csv_total = 0;
    for (std::size_t i = 1; i < folds.size(); ++i) {
      const auto cl = cells(folds[i]);
      if (cl.size() != 15 || cl[0] != c.config) continue;
      if (cl[1] == "Total") csv_total = std::stoul(cl[3]);
      else csv_ln += std::stoul(cl[3]);
    }
    o.expect(csv_ln == csv_total && csv_total == c.total.gt_instances, c.config + ": CSV LN column does not add up");
  }

  // {all, ge7, ge10} x {all, relevant} x 4 measurements.
  const auto strata = lines_of(strata_table_csv(r));
  o.expect(!strata.empty() && strata[0] == "config,stratum,LN,dice_tp,dice_tp_std,gt_perc,gt_perc_std,recall,"
                                           "recall_pw,recall_pw_std",
           "strata table header");
  const std::vector<std::string> keys{"all|all", "all|relevant", "ge7|all", "ge7|relevant", "ge10|all", "ge10|relevant"};
  for (const auto& c : r.configs) {
    std::vector<std::string> seen;
    for (std::size_t i = 1; i < strata.size(); ++i) {
      const auto cl = cells(strata[i]);
      if (cl.size() != 10 || cl[0] != c.config) continue;
      seen.push_back(cl[1]);
      if (std::stoul(cl[2]) == 0) continue;
      for (std::size_t col : {3u, 5u, 7u, 8u}) o.expect(!cl[col].empty(), c.config + " " + cl[1] + ": empty measurement");
    }
    std::sort(seen.begin(), seen.end());
    auto want = keys;
    std::sort(want.begin(), want.end());
    o.expect(seen == want, c.config + ": strata rows differ");
  }

  // Metadata-only counting against hand counts.
  struct Row {
    double sa;
    const char* primary;
  };
  const std::vector<Row> meta{{2.5, "4"},  {6.9, "7"},  {7.0, "1"},   {8.2, "NA"}, {9.99, "10"}, {10.0, "2"},
                              {12.0, "4"}, {15.5, "1"}, {31.0, "3a"}, {4.0, "NA"}, {7.5, "4"},   {11.0, "7"}};
  // Hand counts: lt7 {2.5, 6.9, 4.0} = 3; 7to10 {7.0, 8.2, 9.99, 7.5} = 4; ge10 {10, 12, 15.5, 31, 11} = 5;
  // relevant (primary not 1/NA) = 12 - 2 (1) - 2 (NA) = 8; station 4 x3, 7 x2.
  std::vector<NodeRecord> nodes;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    NodeRecord n;
    n.label_id = static_cast<std::uint16_t>(i + 1);
    n.short_axis_mm = meta[i].sa;
    n.primary = Station::parse(meta[i].primary);
    n.stations = {n.primary};
    nodes.push_back(n);
  }
  const StrataCounts sc = count_strata(nodes);
  o.expect(sc.total == 12 && sc.lt7 == 3 && sc.from7to10 == 4 && sc.ge10 == 5 && sc.relevant == 8,
           "stratum counts " + std::to_string(sc.lt7) + "/" + std::to_string(sc.from7to10) + "/" +
               std::to_string(sc.ge10) + " relevant " + std::to_string(sc.relevant));
  o.expect(sc.by_primary.at(Station::parse("4")) == 3 && sc.by_primary.at(Station::parse("7")) == 2,
           "per-station counts");
  if (o.pass) {
    o.detail = "3 configs x (5 folds + Total), pooled counts = fold sums; 6 strata x 4 measurements; "
               "metadata counts 3/4/5, relevant 8";
  }
  return o;
}

Outcome performance() {
  Outcome o;
  PhantomSpec spec = random_phantom_spec(1, {512, 512, 767}, {0.68, 0.68, 0.5}, 8, 4.0, 9.0);
  for (auto& n : spec.nodes) n.hu = 150.0;  // above 0.5 after normalisation, so the stand-in predictor finds them
  CtGrid ct = generate_phantom(spec).ct;
  BenchConfig cfg;
  cfg.repeats = 1;
  const TimingReport t = benchmark_timing([&] { return ct; }, cfg);
  double work = 0.0;
  std::string parts;
  for (const auto& s : t.stages) {
    if (s.stage == "load") continue;
    work += s.summary.mean;
    parts += (parts.empty() ? "" : ", ") + s.stage + " " + fmt("%.1f", s.summary.mean);
  }
  o.expect(work < 60.0, "pipeline took " + fmt("%.1f s", work));
  o.detail = "512x512x767: " + fmt("%.1f s", work) + " excluding load (" + parts + ")";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"labeling oracle equivalence", labeling_oracle},
      {"metrics oracle equivalence", metrics_oracle},
      {"end-to-end phantom cohort", end_to_end},
      {"touching-node clustering scene", touching_clusters},
      {"morphometrics", morphometrics},
      {"geometry round trip", geometry_round_trip},
      {"slab algebra", slab_algebra},
      {"ensemble algebra", ensemble_algebra},
      {"threshold sweep lattice", sweep_lattice},
      {"report structure", report_structure},
      {"performance smoke", performance},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::printf("%s [%zu] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str(), since(t0));
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed ? 1 : 0;
}
