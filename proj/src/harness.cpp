#include "lnkit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <sstream>

#include "lnkit/rng.hpp"
#include "lnkit/volio.hpp"

namespace lnkit {

namespace {

std::string num(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

std::vector<std::vector<std::string>> FoldSplit::folds() const {
  std::vector<std::vector<std::string>> out(k);
  for (const auto& [id, f] : assignment) out[f].push_back(id);  // map order keeps ids sorted
  return out;
}

FoldSplit split_folds(std::vector<std::string> patient_ids, std::size_t k, std::uint64_t seed) {
  require(k >= 2, ErrorCode::InvalidArgument, "fold count must be at least 2");
  std::sort(patient_ids.begin(), patient_ids.end());
  require(std::adjacent_find(patient_ids.begin(), patient_ids.end()) == patient_ids.end(),
          ErrorCode::InvalidArgument, "duplicate patient id in fold split");
  require(patient_ids.size() >= k, ErrorCode::InvalidArgument,
          "cannot split " + std::to_string(patient_ids.size()) + " patients into " +
              std::to_string(k) + " folds");
  SplitMix64 rng(seed);
  for (std::size_t i = patient_ids.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next() % (i + 1));
    std::swap(patient_ids[i], patient_ids[j]);
  }
  FoldSplit split;
  split.k = k;
  split.seed = seed;
  for (std::size_t i = 0; i < patient_ids.size(); ++i) split.assignment[patient_ids[i]] = i % k;
  return split;
}

nlohmann::json to_json(const FoldSplit& split) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : split.folds()) folds.push_back(f);
  return {{"k", split.k}, {"seed", split.seed}, {"folds", folds}};
}

Manifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  auto parse_entry = [&](const std::string& id, const nlohmann::json& e) {
    require(e.is_object(), ErrorCode::Manifest, "manifest entry for patient " + id + " is not an object");
    PatientEntry p;
    p.id = id;
    auto role = [&](const char* key) -> std::string {
      require(e.contains(key) && e[key].is_string(), ErrorCode::Manifest,
              "patient " + id + ": manifest lacks '" + key + "'");
      return e[key].get<std::string>();
    };
    if (e.contains("ct")) p.ct = resolve(role("ct"));
    p.gt_labels = resolve(role("gt_labels"));
    p.gt_stations = resolve(role("gt_stations"));
    if (e.contains("lung_mask")) p.lung_mask = resolve(role("lung_mask"));
    if (e.contains("prob_maps")) {
      require(e["prob_maps"].is_object(), ErrorCode::Manifest,
              "patient " + id + ": prob_maps must map config names to paths");
      for (const auto& [name, path] : e["prob_maps"].items()) {
        require(path.is_string(), ErrorCode::Manifest,
                "patient " + id + ": prob_maps." + name + " is not a path");
        p.prob_maps[name] = resolve(path.get<std::string>());
      }
    }
    return p;
  };

  require(j.is_object() && j.contains("patients"), ErrorCode::Manifest, "manifest lacks 'patients'");
  Manifest m;
  const auto& patients = j["patients"];
  if (patients.is_object()) {
    for (const auto& [id, e] : patients.items()) m.patients.push_back(parse_entry(id, e));
  } else if (patients.is_array()) {
    for (const auto& e : patients) {
      require(e.is_object() && e.contains("id") && e["id"].is_string(), ErrorCode::Manifest,
              "manifest patient entries need a string 'id'");
      m.patients.push_back(parse_entry(e["id"].get<std::string>(), e));
    }
  } else {
    fail(ErrorCode::Manifest, "manifest 'patients' must be an object or a list");
  }
  std::sort(m.patients.begin(), m.patients.end(),
            [](const PatientEntry& a, const PatientEntry& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < m.patients.size(); ++i) {
    require(m.patients[i].id != m.patients[i - 1].id, ErrorCode::Manifest,
            "duplicate patient " + m.patients[i].id + " in manifest");
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = read_json(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Format) fail(ErrorCode::Manifest, e.what());
    throw;
  }
  return parse_manifest(j, path.parent_path());
}

ManifestSource::ManifestSource(Manifest manifest) {
  for (auto& p : manifest.patients) entries_.emplace(p.id, std::move(p));
}

const PatientEntry& ManifestSource::entry(const std::string& patient) const {
  auto it = entries_.find(patient);
  require(it != entries_.end(), ErrorCode::Manifest, "patient " + patient + " is not in the manifest");
  return it->second;
}

std::vector<std::string> ManifestSource::patient_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, e] : entries_) ids.push_back(id);
  return ids;
}

std::vector<std::string> ManifestSource::configs(const std::string& patient) const {
  std::vector<std::string> names;
  for (const auto& [name, path] : entry(patient).prob_maps) names.push_back(name);
  return names;
}

void ManifestSource::check(const std::string& patient, const std::vector<std::string>& configs) const {
  const PatientEntry& e = entry(patient);
  auto exists = [&](const std::filesystem::path& p, const std::string& role) {
    std::error_code ec;
    require(std::filesystem::is_regular_file(p, ec), ErrorCode::Manifest,
            "patient " + patient + ": missing " + role + " (" + p.string() + ")");
  };
  exists(e.gt_labels, "gt_labels");
  exists(e.gt_stations, "gt_stations");
  for (const auto& c : configs) {
    auto it = e.prob_maps.find(c);
    require(it != e.prob_maps.end(), ErrorCode::Manifest,
            "patient " + patient + ": no prob_maps entry for config '" + c + "'");
    exists(it->second, "prob_maps." + c);
  }
}

Annotation ManifestSource::annotation(const std::string& patient) const {
  const PatientEntry& e = entry(patient);
  return read_annotation(e.gt_labels, e.gt_stations);
}

ProbGrid ManifestSource::probability(const std::string& patient, const std::string& config) const {
  const PatientEntry& e = entry(patient);
  auto it = e.prob_maps.find(config);
  require(it != e.prob_maps.end(), ErrorCode::Manifest,
          "patient " + patient + ": no prob_maps entry for config '" + config + "'");
  return read_probability(it->second);
}

void MemorySource::add(const std::string& patient, Annotation annotation,
                       std::map<std::string, ProbGrid> maps) {
  items_[patient] = Item{std::move(annotation), std::move(maps)};
}

std::vector<std::string> MemorySource::patient_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, item] : items_) ids.push_back(id);
  return ids;
}

std::vector<std::string> MemorySource::configs(const std::string& patient) const {
  std::vector<std::string> names;
  auto it = items_.find(patient);
  if (it != items_.end()) {
    for (const auto& [name, grid] : it->second.maps) names.push_back(name);
  }
  return names;
}

void MemorySource::check(const std::string& patient, const std::vector<std::string>& configs) const {
  auto it = items_.find(patient);
  require(it != items_.end(), ErrorCode::Manifest, "patient " + patient + " is unknown");
  for (const auto& c : configs) {
    require(it->second.maps.count(c) == 1, ErrorCode::Manifest,
            "patient " + patient + ": missing prob_maps." + c);
  }
}

Annotation MemorySource::annotation(const std::string& patient) const {
  check(patient, {});
  return items_.at(patient).annotation;
}

ProbGrid MemorySource::probability(const std::string& patient, const std::string& config) const {
  check(patient, {config});
  reads.emplace_back(patient, config);
  return items_.at(patient).maps.at(config);
}

EnsembleSpec parse_ensemble(std::string_view text) {
  EnsembleSpec spec;
  std::string_view body = text;
  if (auto eq = text.find('='); eq != std::string_view::npos) {
    spec.name = std::string(text.substr(0, eq));
    body = text.substr(eq + 1);
  }
  std::size_t start = 0;
  while (start <= body.size()) {
    const std::size_t plus = body.find('+', start);
    const std::string_view part = body.substr(start, plus == std::string_view::npos ? body.npos : plus - start);
    require(!part.empty(), ErrorCode::InvalidArgument,
            "malformed ensemble '" + std::string(text) + "'");
    spec.members.emplace_back(part);
    if (plus == std::string_view::npos) break;
    start = plus + 1;
  }
  require(spec.members.size() >= 2, ErrorCode::InvalidArgument,
          "ensemble '" + std::string(text) + "' needs at least two members");
  if (spec.name.empty()) spec.name = std::string(body);
  return spec;
}

std::string_view to_string(PtMode mode) {
  switch (mode) {
    case PtMode::PerFold: return "per-fold";
    case PtMode::Global: return "global";
    case PtMode::Fixed: return "fixed";
  }
  return "per-fold";
}

CVReport run_cross_validation(const ArtifactSource& source, const CVConfig& config) {
  const std::vector<std::string> ids = source.patient_ids();
  CVReport report;
  report.pt_mode = config.pt_mode;
  report.split = split_folds(ids, config.folds, config.seed);

  std::vector<std::string> base = config.configs;
  if (base.empty()) base = source.configs(ids.front());
  require(!base.empty() || !config.ensembles.empty(), ErrorCode::InvalidArgument,
          "no probability-map configuration to evaluate");
  std::set<std::string> needed(base.begin(), base.end());
  for (const auto& e : config.ensembles) needed.insert(e.members.begin(), e.members.end());
  const std::vector<std::string> to_load(needed.begin(), needed.end());
  for (const auto& id : ids) source.check(id, to_load);

  std::vector<std::string> names = base;
  for (const auto& e : config.ensembles) {
    require(std::find(names.begin(), names.end(), e.name) == names.end(), ErrorCode::InvalidArgument,
            "configuration name '" + e.name + "' used twice");
    names.push_back(e.name);
  }

  std::vector<double> candidates;
  if (config.pt_mode == PtMode::Fixed) {
    require(config.fixed_pt >= 0.0 && config.fixed_pt <= 1.0, ErrorCode::InvalidArgument,
            "fixed threshold must lie in [0,1]");
    candidates = {config.fixed_pt};
  } else {
    const auto lattice = threshold_lattice();
    candidates.assign(lattice.begin(), lattice.end());
  }

  // metrics[config][patient][candidate]
  std::vector<std::map<std::string, std::vector<PatientMetrics>>> metrics(names.size());
  const auto folds = report.split.folds();
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (config.on_fold_start) config.on_fold_start(f, folds[f]);
    for (const auto& id : folds[f]) {
      const Annotation ann = source.annotation(id);
      const InstanceSet gt = cluster_ground_truth(ann, config.connectivity).clusters;
      std::map<std::string, ProbGrid> maps;
      for (const auto& c : to_load) {
        ProbGrid p = source.probability(id, c);
        require(p.same_geometry(ann.labels), ErrorCode::Consistency,
                "patient " + id + ": prob_maps." + c + " does not match the label grid geometry");
        maps.emplace(c, std::move(p));
      }
      for (std::size_t n = 0; n < names.size(); ++n) {
        const ProbGrid* prob = nullptr;
        ProbGrid fused;
        if (n < base.size()) {
          prob = &maps.at(names[n]);
        } else {
          const auto& e = config.ensembles[n - base.size()];
          fused = maps.at(e.members.front());
          for (std::size_t m = 1; m < e.members.size(); ++m) fused = ensemble_max(std::move(fused), maps.at(e.members[m]));
          prob = &fused;
        }
        auto& row = metrics[n][id];
        for (double pt : candidates) {
          row.push_back(evaluate_patient(id, *prob, gt, pt, config.connectivity, config.min_pair_dice));
        }
      }
    }
  }

  auto choose = [&](const std::map<std::string, std::vector<PatientMetrics>>& per_patient,
                    const std::vector<std::string>& patients) -> std::size_t {
    if (candidates.size() == 1) return 0;
    std::vector<std::vector<SweepPoint>> curves;
    for (const auto& id : patients) {
      std::vector<SweepPoint> curve;
      for (const auto& m : per_patient.at(id)) curve.push_back({m.pt, m.dice});
      curves.push_back(std::move(curve));
    }
    const double best = best_threshold(curves);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (candidates[i] == best) return i;
    }
    return 0;
  };

  for (std::size_t n = 0; n < names.size(); ++n) {
    ConfigResult result;
    result.config = names[n];
    std::optional<std::size_t> global;
    if (config.pt_mode == PtMode::Global) global = choose(metrics[n], ids);

    std::vector<PatientMetrics> selected;
    std::set<double> fold_pts;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const std::size_t c = global ? *global : choose(metrics[n], folds[f]);
      std::vector<PatientMetrics> rows;
      for (const auto& id : folds[f]) rows.push_back(metrics[n].at(id)[c]);
      FoldRow row;
      row.fold = f;
      row.pt = candidates[c];
      row.patients = rows.size();
      for (const auto& r : rows) row.gt_instances += r.gt_count();
      row.metrics = aggregate(rows);
      fold_pts.insert(candidates[c]);
      result.folds.push_back(row);
      selected.insert(selected.end(), rows.begin(), rows.end());
    }

    result.total.patients = selected.size();
    if (fold_pts.size() == 1) result.total.pt = *fold_pts.begin();
    for (const auto& p : selected) result.total.gt_instances += p.gt_count();
    result.total.metrics = aggregate(selected);

    std::size_t sum_gt = 0;
    std::size_t sum_tp = 0;
    std::size_t sum_fp = 0;
    std::size_t sum_patients = 0;
    for (const auto& r : result.folds) {
      sum_gt += r.gt_instances;
      sum_tp += r.metrics.tp;
      sum_fp += r.metrics.fp;
      sum_patients += r.patients;
    }
    require(sum_gt == result.total.metrics.gt_instances && sum_tp == result.total.metrics.tp &&
                sum_fp == result.total.metrics.fp && sum_patients == result.total.patients &&
                result.total.gt_instances == sum_gt,
            ErrorCode::Consistency, "pooled counts differ from the sum over folds for " + names[n]);

    result.evaluation.name = names[n];
    result.evaluation.seed = config.seed;
    result.evaluation.patients = std::move(selected);
    result.evaluation.finalize();
    result.station_recall_ge10_relevant =
        per_station_recall(result.evaluation.patients, SizeStratum::Ge10, StationGroup::Relevant);
    report.configs.push_back(std::move(result));
  }
  return report;
}

nlohmann::json to_json(const FoldRow& row) {
  return {{"fold", row.fold ? nlohmann::json(*row.fold + 1) : nlohmann::json("Total")},
          {"pt", opt(row.pt)},
          {"patients", row.patients},
          {"gt_instances", row.gt_instances},
          {"metrics", to_json(row.metrics)}};
}

nlohmann::json to_json(const CVReport& report) {
  nlohmann::json configs = nlohmann::json::array();
  for (const auto& c : report.configs) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& r : c.folds) folds.push_back(to_json(r));
    folds.push_back(to_json(c.total));
    nlohmann::json strata = nlohmann::json::array();
    for (const auto& s : c.evaluation.cohort_strata) strata.push_back(to_json(s));
    nlohmann::json stations = nlohmann::json::array();
    for (const auto& s : c.evaluation.station_recall) stations.push_back(to_json(s));
    nlohmann::json stations_rel = nlohmann::json::array();
    for (const auto& s : c.station_recall_ge10_relevant) stations_rel.push_back(to_json(s));
    configs.push_back({{"config", c.config},
                       {"folds", folds},
                       {"strata", strata},
                       {"station_recall", stations},
                       {"station_recall_ge10_relevant", stations_rel},
                       {"evaluation", report_json(c.evaluation)}});
  }
  return {{"split", to_json(report.split)}, {"pt_mode", std::string(to_string(report.pt_mode))},
          {"configs", configs}};
}

std::string fold_table_csv(const CVReport& report) {
  std::ostringstream out;
  out << "config,fold,PT,LN,dice,dice_std,recall,recall_pw,recall_pw_std,fppp,fppp_std,gt_perc,"
         "gt_perc_std,dice_tp,dice_tp_std\n";
  auto emit = [&](const std::string& config, const FoldRow& r) {
    const auto& m = r.metrics;
    out << config << ',' << (r.fold ? std::to_string(*r.fold + 1) : "Total") << ',' << num(r.pt) << ','
        << r.gt_instances << ',' << num(m.dice.mean) << ',' << num(m.dice.std) << ','
        << num(m.recall_global) << ',' << num(m.recall_pw.mean) << ',' << num(m.recall_pw.std) << ','
        << num(m.fppp.mean) << ',' << num(m.fppp.std) << ',' << num(m.gt_perc.mean) << ','
        << num(m.gt_perc.std) << ',' << num(m.dice_tp.mean) << ',' << num(m.dice_tp.std) << '\n';
  };
  for (const auto& c : report.configs) {
    for (const auto& r : c.folds) emit(c.config, r);
    emit(c.config, c.total);
  }
  return out.str();
}

std::string strata_table_csv(const CVReport& report) {
  std::ostringstream out;
  out << "config,stratum,LN,dice_tp,dice_tp_std,gt_perc,gt_perc_std,recall,recall_pw,recall_pw_std\n";
  for (const auto& c : report.configs) {
    for (const auto& s : c.evaluation.cohort_strata) {
      out << c.config << ',' << s.stratum.key() << ',' << s.gt_instances << ',' << num(s.dice_tp.mean)
          << ',' << num(s.dice_tp.std) << ',' << num(s.gt_perc.mean) << ',' << num(s.gt_perc.std) << ','
          << num(s.recall) << ',' << num(s.recall_pw.mean) << ',' << num(s.recall_pw.std) << '\n';
    }
  }
  return out.str();
}

TimingReport benchmark_timing(const std::function<CtGrid()>& load, const BenchConfig& config) {
  require(config.repeats >= 1, ErrorCode::InvalidArgument, "benchmark needs at least one repeat");
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };
  TimingReport report;
  report.repeats = config.repeats;
  for (const auto& s : timing_stages()) report.stages.push_back({s, {}, {}});

  for (std::size_t r = 0; r < config.repeats; ++r) {
    std::array<clock::time_point, 8> t;
    t[0] = clock::now();
    CtGrid ct = load();
    t[1] = clock::now();
    Preprocessed pre = preprocess(ct, config.preprocess);
    ct = CtGrid{};
    t[2] = clock::now();
    ProbGrid fused;
    if (config.preprocess.mode == PreprocessMode::Slab) {
      fused = stitch_slabs(extract_slabs(pre.volume, config.preprocess.slab));
    } else {
      fused = pre.volume;
    }
    pre.volume = ProbGrid{};
    t[3] = clock::now();
    {
      const ProbGrid second = fused;  // stand-in for a second model's map
      fused = ensemble_max(std::move(fused), second);
    }
    t[4] = clock::now();
    const ProbGrid restored = restore_original_space(fused, pre.record);
    fused = ProbGrid{};
    t[5] = clock::now();
    const InstanceSet dets = connected_components(restored, config.pt, config.connectivity);
    t[6] = clock::now();
    const PairingResult pairing = pair_instances(dets, dets);
    const PatientMetrics m = patient_metrics("bench", pairing, dets, dets, restored, config.pt);
    t[7] = clock::now();
    (void)m;
    for (std::size_t s = 0; s < report.stages.size(); ++s) {
      report.stages[s].seconds.push_back(seconds(t[s], t[s + 1]));
    }
    report.total_seconds.push_back(seconds(t[0], t[7]));
  }
  for (auto& s : report.stages) s.summary = mean_std(s.seconds);
  report.total = mean_std(report.total_seconds);
  return report;
}

TimingReport benchmark_timing(const std::filesystem::path& ct_path, const BenchConfig& config) {
  return benchmark_timing([&] { return read_ct(ct_path); }, config);
}

nlohmann::json to_json(const TimingReport& report) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : report.stages) {
    stages.push_back({{"stage", s.stage}, {"seconds", s.seconds}, {"summary", to_json(s.summary)}});
  }
  return {{"repeats", report.repeats},
          {"stages", stages},
          {"total_seconds", report.total_seconds},
          {"total", to_json(report.total)}};
}

}  // namespace lnkit
