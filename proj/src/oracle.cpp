// Brute-force reference metrics. Nothing here calls into the instancer or
// evalkit so that the two paths can be compared against each other.

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <vector>

#include "lnkit/phantom.hpp"

namespace lnkit {

namespace {

struct Labelled {
  std::vector<std::uint32_t> label;  // 0 = background
  std::uint32_t count = 0;
};

Labelled flood_fill(const Dims& d, const std::vector<bool>& fg, Connectivity c) {
  const int reach = c == Connectivity::Six ? 1 : (c == Connectivity::Eighteen ? 2 : 3);
  std::vector<std::array<int, 3>> offsets;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int n = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (n > 0 && n <= reach) offsets.push_back({dx, dy, dz});
      }
    }
  }
  Labelled out;
  out.label.assign(fg.size(), 0);
  for (std::int64_t z = 0; z < d[2]; ++z) {
    for (std::int64_t y = 0; y < d[1]; ++y) {
      for (std::int64_t x = 0; x < d[0]; ++x) {
        const auto seed = static_cast<std::size_t>((z * d[1] + y) * d[0] + x);
        if (!fg[seed] || out.label[seed] != 0) continue;
        const std::uint32_t id = ++out.count;
        std::deque<std::array<std::int64_t, 3>> queue{{x, y, z}};
        out.label[seed] = id;
        while (!queue.empty()) {
          const auto p = queue.front();
          queue.pop_front();
          for (const auto& o : offsets) {
            const std::int64_t qx = p[0] + o[0];
            const std::int64_t qy = p[1] + o[1];
            const std::int64_t qz = p[2] + o[2];
            if (qx < 0 || qy < 0 || qz < 0 || qx >= d[0] || qy >= d[1] || qz >= d[2]) continue;
            const auto q = static_cast<std::size_t>((qz * d[1] + qy) * d[0] + qx);
            if (fg[q] && out.label[q] == 0) {
              out.label[q] = id;
              queue.push_back({qx, qy, qz});
            }
          }
        }
      }
    }
  }
  return out;
}

double naive_short_axis(const std::vector<std::size_t>& voxels, const Dims& d, const Vec3& sp) {
  std::map<std::int64_t, std::vector<std::array<double, 2>>> slices;
  for (std::size_t v : voxels) {
    const auto i = static_cast<std::int64_t>(v);
    const std::int64_t z = i / (d[0] * d[1]);
    const std::int64_t rem = i % (d[0] * d[1]);
    slices[z].push_back({static_cast<double>(rem % d[0]) * sp[0],
                         static_cast<double>(rem / d[0]) * sp[1]});
  }
  double best = 0.0;
  for (const auto& [z, pts] : slices) {
    double mx = 0.0;
    double my = 0.0;
    for (const auto& p : pts) {
      mx += p[0];
      my += p[1];
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    for (const auto& p : pts) {
      a += (p[0] - mx) * (p[0] - mx);
      b += (p[0] - mx) * (p[1] - my);
      c += (p[1] - my) * (p[1] - my);
    }
    const double n = static_cast<double>(pts.size());
    a /= n;
    b /= n;
    c /= n;
    const double lambda = 0.5 * (a + c) - std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    best = std::max(best, 4.0 * std::sqrt(std::max(0.0, lambda)));
  }
  return best;
}

}  // namespace

PatientMetrics oracle_metrics(const ProbGrid& prob, const Annotation& annotation, double pt,
                              Connectivity connectivity, double min_pair_dice,
                              std::string patient_id) {
  const Dims d = prob.dims();
  require(d == annotation.labels.dims(), ErrorCode::InvalidArgument,
          "oracle: probability map and annotation on different grids");
  const Vec3 sp = annotation.labels.spacing();
  const std::size_t n = prob.size();

  std::vector<bool> pred(n);
  std::vector<bool> truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    pred[i] = prob[i] >= static_cast<float>(pt);
    truth[i] = annotation.labels[i] != 0;
  }
  const Labelled det = flood_fill(d, pred, connectivity);
  const Labelled gt = flood_fill(d, truth, connectivity);

  std::vector<std::vector<std::size_t>> gt_voxels(gt.count + 1);
  std::vector<std::size_t> det_size(det.count + 1, 0);
  // inter[g][k]: voxels shared by gt cluster g and detection k
  std::vector<std::vector<std::size_t>> inter(gt.count + 1, std::vector<std::size_t>(det.count + 1, 0));
  for (std::size_t i = 0; i < n; ++i) {
    if (gt.label[i]) gt_voxels[gt.label[i]].push_back(i);
    if (det.label[i]) ++det_size[det.label[i]];
    if (gt.label[i] && det.label[i]) ++inter[gt.label[i]][det.label[i]];
  }

  auto pair_dice = [&](std::uint32_t g, std::uint32_t k) {
    return 2.0 * static_cast<double>(inter[g][k]) /
           static_cast<double>(gt_voxels[g].size() + det_size[k]);
  };

  std::vector<std::uint32_t> gt_match(gt.count + 1, 0);
  std::vector<bool> det_taken(det.count + 1, false);
  std::vector<double> gt_pair_dice(gt.count + 1, 0.0);
  std::vector<double> accepted;
  while (true) {
    double best = -1.0;
    std::uint32_t bg = 0;
    std::uint32_t bk = 0;
    for (std::uint32_t g = 1; g <= gt.count; ++g) {
      if (gt_match[g]) continue;
      for (std::uint32_t k = 1; k <= det.count; ++k) {
        if (det_taken[k] || inter[g][k] == 0) continue;
        const double v = pair_dice(g, k);
        if (v > best) {  // scan order already prefers lower gt, then lower det
          best = v;
          bg = g;
          bk = k;
        }
      }
    }
    if (bg == 0 || best <= min_pair_dice) break;
    gt_match[bg] = bk;
    det_taken[bk] = true;
    gt_pair_dice[bg] = best;
    accepted.push_back(best);
  }

  PatientMetrics m;
  m.patient_id = std::move(patient_id);
  m.pt = pt;
  std::size_t pred_count = 0;
  std::size_t truth_count = 0;
  std::size_t both = 0;
  for (std::size_t i = 0; i < n; ++i) {
    pred_count += pred[i];
    truth_count += truth[i];
    both += pred[i] && truth[i];
  }
  m.dice = pred_count + truth_count == 0
               ? 1.0
               : 2.0 * static_cast<double>(both) / static_cast<double>(pred_count + truth_count);

  double perc_sum = 0.0;
  for (std::uint32_t g = 1; g <= gt.count; ++g) {
    GtOutcome o;
    o.id = g;
    o.voxel_count = gt_voxels[g].size();
    o.volume_ml = static_cast<double>(o.voxel_count) * sp[0] * sp[1] * sp[2] / 1000.0;
    o.short_axis_mm = naive_short_axis(gt_voxels[g], d, sp);
    std::set<std::uint16_t> members;
    for (std::size_t v : gt_voxels[g]) members.insert(annotation.labels[v]);
    for (auto label : members) {
      const StationInfo& info = annotation.stations.at(label);
      o.stations.insert(info.stations.begin(), info.stations.end());
      o.primaries.insert(info.primary);
    }
    std::size_t covered = 0;
    for (std::size_t v : gt_voxels[g]) covered += pred[v];
    o.covered_pct = 100.0 * static_cast<double>(covered) / static_cast<double>(o.voxel_count);
    perc_sum += o.covered_pct;
    if (gt_match[g]) {
      o.det_id = gt_match[g];
      o.pair_dice = gt_pair_dice[g];
      ++m.tp;
    } else {
      ++m.fn;
    }
    m.gt.push_back(std::move(o));
  }
  if (gt.count > 0) m.gt_perc = perc_sum / static_cast<double>(gt.count);
  if (!accepted.empty()) {
    double s = 0.0;
    for (double v : accepted) s += v;
    m.dice_tp = s / static_cast<double>(accepted.size());
  }
  m.fp = det.count - m.tp;
  return m;
}

}  // namespace lnkit
