#include "lnkit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace lnkit {

namespace {

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string_view size_token(SizeStratum s) {
  switch (s) {
    case SizeStratum::All: return "all";
    case SizeStratum::Lt7: return "lt7";
    case SizeStratum::From7To10: return "7to10";
    case SizeStratum::Ge10: return "ge10";
    case SizeStratum::Ge7: return "ge7";
  }
  return "all";
}

}  // namespace

std::array<double, 10> threshold_lattice() {
  std::array<double, 10> pts{};
  for (int k = 1; k <= 10; ++k) pts[static_cast<std::size_t>(k - 1)] = k / 10.0;
  return pts;
}

double dice_from_counts(std::size_t intersection, std::size_t size_a, std::size_t size_b) {
  if (size_a + size_b == 0) return 1.0;
  return 2.0 * static_cast<double>(intersection) / static_cast<double>(size_a + size_b);
}

double dice(const MaskGrid& a, const MaskGrid& b) {
  require_same_geometry(a, b, "dice");
  const auto va = a.values();
  const auto vb = b.values();
  std::size_t na = 0;
  std::size_t nb = 0;
  std::size_t both = 0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const bool x = va[i] != 0;
    const bool y = vb[i] != 0;
    na += x;
    nb += y;
    both += (x && y);
  }
  return dice_from_counts(both, na, nb);
}

double dice(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::size_t both = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) ++i;
    else if (b[j] < a[i]) ++j;
    else {
      ++both;
      ++i;
      ++j;
    }
  }
  return dice_from_counts(both, a.size(), b.size());
}

SweepResult sweep_thresholds(const ProbGrid& prob, const MaskGrid& gt) {
  require_same_geometry(prob, gt, "sweep_thresholds");
  const auto p = prob.values();
  const auto g = gt.values();
  SweepResult result;
  std::size_t ng = 0;
  for (auto v : g) ng += (v != 0);
  for (double pt : threshold_lattice()) {
    std::size_t np = 0;
    std::size_t both = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool fg = p[i] >= static_cast<float>(pt);
      np += fg;
      both += (fg && g[i] != 0);
    }
    result.points.push_back({pt, dice_from_counts(both, np, ng)});
  }
  std::vector<std::vector<SweepPoint>> one{result.points};
  result.best_pt = best_threshold(one);
  return result;
}

double best_threshold(std::span<const std::vector<SweepPoint>> per_patient) {
  require(!per_patient.empty() && !per_patient.front().empty(), ErrorCode::InvalidArgument,
          "threshold selection needs at least one sweep");
  const std::size_t n = per_patient.front().size();
  double best_pt = per_patient.front().front().pt;
  double best = -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    double sum = 0.0;
    for (const auto& curve : per_patient) {
      require(curve.size() == n && curve[k].pt == per_patient.front()[k].pt,
              ErrorCode::InvalidArgument, "sweeps sampled on different thresholds");
      sum += curve[k].dice;
    }
    const double mean = sum / static_cast<double>(per_patient.size());
    if (mean > best) {
      best = mean;
      best_pt = per_patient.front()[k].pt;
    }
  }
  return best_pt;
}

PairingResult pair_instances(const InstanceSet& dets, const InstanceSet& gts, double min_pair_dice) {
  require(dets.dims == gts.dims, ErrorCode::InvalidArgument,
          "pairing requires detections and ground truth on the same grid");
  // gt voxel -> gt index, sorted by voxel for lookup
  std::vector<std::pair<std::size_t, std::uint32_t>> owner;
  owner.reserve(gts.foreground_count());
  for (std::uint32_t g = 0; g < gts.instances.size(); ++g) {
    for (std::size_t v : gts.instances[g].voxels) owner.emplace_back(v, g);
  }
  std::sort(owner.begin(), owner.end());

  struct Candidate {
    double dice;
    std::uint32_t gt_id;
    std::uint32_t det_id;
  };
  std::vector<Candidate> candidates;
  std::map<std::uint32_t, std::size_t> overlap;
  for (const auto& det : dets.instances) {
    overlap.clear();
    auto it = owner.begin();
    for (std::size_t v : det.voxels) {
      it = std::lower_bound(it, owner.end(), std::pair<std::size_t, std::uint32_t>{v, 0});
      if (it == owner.end()) break;
      if (it->first == v) ++overlap[it->second];
    }
    for (const auto& [g, inter] : overlap) {
      const auto& gt = gts.instances[g];
      candidates.push_back(
          {dice_from_counts(inter, gt.voxel_count(), det.voxel_count()), gt.id, det.id});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.dice != b.dice) return a.dice > b.dice;
    if (a.gt_id != b.gt_id) return a.gt_id < b.gt_id;
    return a.det_id < b.det_id;
  });

  std::map<std::uint32_t, bool> gt_used;
  std::map<std::uint32_t, bool> det_used;
  PairingResult result;
  for (const auto& c : candidates) {
    if (c.dice <= min_pair_dice) break;
    if (gt_used[c.gt_id] || det_used[c.det_id]) continue;
    gt_used[c.gt_id] = true;
    det_used[c.det_id] = true;
    result.pairs.push_back({c.gt_id, c.det_id, c.dice});
  }
  for (const auto& g : gts.instances) {
    if (!gt_used[g.id]) result.unmatched_gt.push_back(g.id);
  }
  for (const auto& d : dets.instances) {
    if (!det_used[d.id]) result.unmatched_det.push_back(d.id);
  }
  return result;
}

PatientMetrics patient_metrics(std::string patient_id, const PairingResult& pairing,
                               const InstanceSet& dets, const InstanceSet& gts,
                               const ProbGrid& prob, double pt) {
  require(prob.dims() == gts.dims && prob.dims() == dets.dims, ErrorCode::InvalidArgument,
          "patient_metrics: probability map and instances on different grids");
  PatientMetrics m;
  m.patient_id = std::move(patient_id);
  m.pt = pt;
  const auto p = prob.values();
  auto fg = [&](std::size_t v) { return p[v] >= static_cast<float>(pt); };

  std::size_t pred = 0;
  for (auto v : p) pred += v >= static_cast<float>(pt);

  std::map<std::uint32_t, const InstancePair*> by_gt;
  for (const auto& pr : pairing.pairs) by_gt[pr.gt_id] = &pr;

  std::size_t gt_total = 0;
  std::size_t covered_total = 0;
  std::vector<double> covered_pcts;
  for (const auto& g : gts.instances) {
    std::size_t covered = 0;
    for (std::size_t v : g.voxels) covered += fg(v);
    gt_total += g.voxel_count();
    covered_total += covered;

    GtOutcome o;
    o.id = g.id;
    o.voxel_count = g.voxel_count();
    o.volume_ml = g.volume_ml;
    o.short_axis_mm = g.short_axis_mm;
    o.stations = g.stations;
    o.primaries = g.primaries;
    o.covered_pct = 100.0 * static_cast<double>(covered) / static_cast<double>(g.voxel_count());
    if (auto it = by_gt.find(g.id); it != by_gt.end()) {
      o.det_id = it->second->det_id;
      o.pair_dice = it->second->dice;
    }
    covered_pcts.push_back(o.covered_pct);
    m.gt.push_back(std::move(o));
  }

  std::vector<double> pair_dices;
  for (const auto& pr : pairing.pairs) pair_dices.push_back(pr.dice);

  m.dice = dice_from_counts(covered_total, pred, gt_total);
  m.dice_tp = mean_of(pair_dices);
  m.gt_perc = mean_of(covered_pcts);
  m.tp = pairing.pairs.size();
  m.fn = pairing.unmatched_gt.size();
  m.fp = pairing.unmatched_det.size();
  return m;
}

PatientMetrics evaluate_patient(std::string patient_id, const ProbGrid& prob,
                                const InstanceSet& gt_clusters, double pt,
                                Connectivity connectivity, double min_pair_dice) {
  const InstanceSet dets = connected_components(prob, pt, connectivity);
  const PairingResult pairing = pair_instances(dets, gt_clusters, min_pair_dice);
  return patient_metrics(std::move(patient_id), pairing, dets, gt_clusters, prob, pt);
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.n = values.size();
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(r.n);
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(r.n));
  return r;
}

CohortMetrics aggregate(std::span<const PatientMetrics> patients) {
  require(!patients.empty(), ErrorCode::InvalidArgument, "aggregate needs at least one patient");
  CohortMetrics c;
  c.patients = patients.size();
  std::vector<double> recall_pw;
  std::vector<double> fppp;
  std::vector<double> dices;
  std::vector<double> dice_tp;
  std::vector<double> gt_perc;
  for (const auto& p : patients) {
    c.gt_instances += p.gt_count();
    c.tp += p.tp;
    c.fp += p.fp;
    if (auto r = p.recall()) recall_pw.push_back(*r);
    fppp.push_back(static_cast<double>(p.fp));
    dices.push_back(p.dice);
    if (p.dice_tp) dice_tp.push_back(*p.dice_tp);
    if (p.gt_perc) gt_perc.push_back(*p.gt_perc);
  }
  if (c.gt_instances > 0) {
    c.recall_global = static_cast<double>(c.tp) / static_cast<double>(c.gt_instances);
  }
  c.recall_pw = mean_std(recall_pw);
  c.fppp = mean_std(fppp);
  c.dice = mean_std(dices);
  c.dice_tp = mean_std(dice_tp);
  c.gt_perc = mean_std(gt_perc);
  return c;
}

std::string Stratum::key() const {
  std::string k = std::string(size_token(size)) + "|" +
                  (group == StationGroup::All ? "all" : "relevant");
  if (primary) k += "|" + std::string(primary->code());
  return k;
}

Stratum Stratum::parse(std::string_view key) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto bar = key.find('|', start);
    parts.push_back(key.substr(start, bar == std::string_view::npos ? bar : bar - start));
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  const auto bad = [&] {
    fail(ErrorCode::InvalidArgument, "unknown stratum key '" + std::string(key) + "'");
  };
  if (parts.empty() || parts.size() > 3) bad();
  Stratum s;
  const std::string_view size = parts[0];
  if (size == "all") s.size = SizeStratum::All;
  else if (size == "lt7") s.size = SizeStratum::Lt7;
  else if (size == "7to10") s.size = SizeStratum::From7To10;
  else if (size == "ge10") s.size = SizeStratum::Ge10;
  else if (size == "ge7") s.size = SizeStratum::Ge7;
  else bad();
  if (parts.size() >= 2) {
    if (parts[1] == "all") s.group = StationGroup::All;
    else if (parts[1] == "relevant") s.group = StationGroup::Relevant;
    else bad();
  }
  if (parts.size() == 3) {
    try {
      s.primary = Station::parse(parts[2]);
    } catch (const Error&) {
      bad();
    }
  }
  return s;
}

bool in_relevant_group(const StationSet& primaries) {
  return std::any_of(primaries.begin(), primaries.end(),
                     [](const Station& s) { return s.is_relevant(); });
}

bool Stratum::contains(const GtOutcome& gt) const {
  bool size_ok = true;
  switch (size) {
    case SizeStratum::All: break;
    case SizeStratum::Lt7: size_ok = size_category(gt.short_axis_mm) == SizeCategory::Lt7; break;
    case SizeStratum::From7To10:
      size_ok = size_category(gt.short_axis_mm) == SizeCategory::From7To10;
      break;
    case SizeStratum::Ge10: size_ok = size_category(gt.short_axis_mm) == SizeCategory::Ge10; break;
    case SizeStratum::Ge7: size_ok = size_category(gt.short_axis_mm) != SizeCategory::Lt7; break;
  }
  if (!size_ok) return false;
  if (group == StationGroup::Relevant && !in_relevant_group(gt.primaries)) return false;
  if (primary && gt.primaries.count(*primary) == 0) return false;
  return true;
}

PatientStratum patient_stratum(const PatientMetrics& patient, const Stratum& stratum) {
  PatientStratum r;
  r.fp = patient.fp;
  if (stratum.is_everything()) r.dice = patient.dice;
  std::vector<double> pair_dices;
  std::vector<double> covered;
  for (const auto& g : patient.gt) {
    if (!stratum.contains(g)) continue;
    ++r.recall_den;
    covered.push_back(g.covered_pct);
    if (g.det_id) {
      ++r.recall_num;
      pair_dices.push_back(g.pair_dice);
    }
  }
  r.dice_tp = mean_of(pair_dices);
  r.gt_perc = mean_of(covered);
  return r;
}

StratumMetrics stratify(std::span<const PatientMetrics> patients, const Stratum& stratum) {
  StratumMetrics m;
  m.stratum = stratum;
  std::vector<double> recall_pw;
  std::vector<double> dice_tp;
  std::vector<double> gt_perc;
  for (const auto& p : patients) {
    const PatientStratum ps = patient_stratum(p, stratum);
    m.gt_instances += ps.recall_den;
    m.tp += ps.recall_num;
    if (ps.recall_den > 0) {
      ++m.patients;
      recall_pw.push_back(static_cast<double>(ps.recall_num) / static_cast<double>(ps.recall_den));
    }
    if (ps.dice_tp) dice_tp.push_back(*ps.dice_tp);
    if (ps.gt_perc) gt_perc.push_back(*ps.gt_perc);
  }
  if (m.gt_instances > 0) {
    m.recall = static_cast<double>(m.tp) / static_cast<double>(m.gt_instances);
  }
  m.recall_pw = mean_std(recall_pw);
  m.dice_tp = mean_std(dice_tp);
  m.gt_perc = mean_std(gt_perc);
  return m;
}

StratumMetrics stratify(std::span<const PatientMetrics> patients, std::string_view key) {
  return stratify(patients, Stratum::parse(key));
}

std::vector<Stratum> size_station_table_strata() {
  std::vector<Stratum> out;
  for (auto size : {SizeStratum::All, SizeStratum::Ge7, SizeStratum::Ge10}) {
    for (auto group : {StationGroup::All, StationGroup::Relevant}) {
      out.push_back({size, group, std::nullopt});
    }
  }
  return out;
}

std::vector<StationRecall> per_station_recall(std::span<const PatientMetrics> patients,
                                              SizeStratum size, StationGroup group) {
  const Stratum filter{size, group, std::nullopt};
  std::map<Station, StationRecall> acc;
  std::map<Station, std::vector<double>> dices;
  std::map<Station, std::vector<double>> covered;
  for (const auto& p : patients) {
    for (const auto& g : p.gt) {
      if (!filter.contains(g)) continue;
      for (const auto& s : g.primaries) {
        auto& row = acc.try_emplace(s, StationRecall{s, 0, 0, std::nullopt, std::nullopt}).first->second;
        ++row.total;
        covered[s].push_back(g.covered_pct);
        if (g.det_id) {
          ++row.detected;
          dices[s].push_back(g.pair_dice);
        }
      }
    }
  }
  std::vector<StationRecall> out;
  for (auto& [s, row] : acc) {
    row.dice_tp = mean_of(dices[s]);
    row.gt_perc = mean_of(covered[s]);
    out.push_back(row);
  }
  return out;
}

std::vector<NodeRecord> node_records(const Annotation& annotation) {
  annotation.validate();
  std::map<std::uint16_t, std::vector<std::size_t>> voxels;
  const auto v = annotation.labels.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0) voxels[v[i]].push_back(i);
  }
  std::vector<NodeRecord> out;
  for (const auto& [id, info] : annotation.stations) {
    const auto& vox = voxels.at(id);
    NodeRecord r;
    r.label_id = id;
    r.short_axis_mm =
        short_axis_diameter(vox, annotation.labels.dims(), annotation.labels.spacing());
    r.volume_ml = instance_volume_ml(vox.size(), annotation.labels.spacing());
    r.stations = info.stations;
    r.primary = info.primary;
    out.push_back(std::move(r));
  }
  return out;
}

StrataCounts count_strata(std::span<const NodeRecord> nodes) {
  StrataCounts c;
  for (const auto& n : nodes) {
    ++c.total;
    switch (size_category(n.short_axis_mm)) {
      case SizeCategory::Lt7: ++c.lt7; break;
      case SizeCategory::From7To10: ++c.from7to10; break;
      case SizeCategory::Ge10: ++c.ge10; break;
    }
    if (n.primary.is_relevant()) ++c.relevant;
    ++c.by_primary[n.primary];
  }
  return c;
}

std::string_view to_string(AgreementGrade grade) {
  switch (grade) {
    case AgreementGrade::Perfect: return "perfect";
    case AgreementGrade::Good: return "good";
    case AgreementGrade::Bad: return "bad";
  }
  return "bad";
}

AgreementGrade station_agreement_grade(const StationInfo& a, const StationInfo& b) {
  require(!a.stations.empty() && !b.stations.empty(), ErrorCode::InvalidArgument,
          "station agreement needs non-empty station sets");
  if (a.primary == b.primary) return AgreementGrade::Perfect;
  if (a.stations == b.stations) return AgreementGrade::Good;
  return AgreementGrade::Bad;
}

}  // namespace lnkit
