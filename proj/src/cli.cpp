#include "lnkit/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "lnkit/harness.hpp"
#include "lnkit/phantom.hpp"
#include "lnkit/pipeline.hpp"
#include "lnkit/report.hpp"
#include "lnkit/transforms.hpp"
#include "lnkit/volio.hpp"

namespace lnkit {

namespace fs = std::filesystem;

namespace {

bool g_quiet = false;

void note(const std::string& msg) {
  if (!g_quiet) std::cerr << msg << '\n';
}

std::string slab_file(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "slab_%03zu.nii.gz", k);
  return buf;
}

/// "sweep" or a number in [0,1].
std::optional<double> parse_pt(const std::string& text) {
  if (text == "sweep") return std::nullopt;
  double v = 0.0;
  std::size_t used = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == text.size() && used > 0, ErrorCode::InvalidArgument,
          "--pt must be 'sweep' or a number, got '" + text + "'");
  require(v >= 0.0 && v <= 1.0, ErrorCode::InvalidArgument, "--pt must lie in [0,1]");
  return v;
}

ReportFormat format_for(const std::string& format, const std::string& out) {
  if (!format.empty()) return parse_report_format(format);
  return fs::path(out).extension() == ".csv" ? ReportFormat::Csv : ReportFormat::Json;
}

struct SlabFlags {
  std::int64_t slab_size = 32;
  std::int64_t stride = 8;
  std::vector<std::int64_t> axial{256, 192};

  SlabSpec spec() const {
    require(axial.size() == 2, ErrorCode::InvalidArgument, "--axial-dims takes two values");
    SlabSpec s{slab_size, stride, {axial[0], axial[1]}};
    s.validate();
    return s;
  }
};

void add_slab_flags(CLI::App* app, SlabFlags& f) {
  app->add_option("--slab-size", f.slab_size, "slices per slab")->capture_default_str();
  app->add_option("--stride", f.stride, "slab start spacing")->capture_default_str();
  app->add_option("--axial-dims", f.axial, "in-plane target dims")->expected(2)->capture_default_str();
}

struct PreprocessFlags {
  std::string mode = "slab";
  SlabFlags slab;
  std::vector<std::int64_t> fullvol{128, 128, 144};

  PreprocessConfig config() const {
    PreprocessConfig c;
    require(mode == "slab" || mode == "fullvol", ErrorCode::InvalidArgument,
            "--mode must be slab or fullvol");
    c.mode = mode == "slab" ? PreprocessMode::Slab : PreprocessMode::FullVolume;
    c.slab = slab.spec();
    require(fullvol.size() == 3, ErrorCode::InvalidArgument, "--fullvol-dims takes three values");
    c.fullvol_dims = {fullvol[0], fullvol[1], fullvol[2]};
    return c;
  }
};

void add_preprocess_flags(CLI::App* app, PreprocessFlags& f) {
  app->add_option("--mode", f.mode, "slab or fullvol")->capture_default_str();
  add_slab_flags(app, f.slab);
  app->add_option("--fullvol-dims", f.fullvol, "full-volume target dims")->expected(3)->capture_default_str();
}

Connectivity connectivity_flag(int n) { return parse_connectivity(n); }

void emit_json(const nlohmann::json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(j, out);
    note("wrote " + out);
  }
}

void emit_report(const EvalReport& report, const std::string& out, const std::string& format) {
  const ReportFormat f = format_for(format, out);
  if (out.empty() || out == "-") {
    std::cout << (f == ReportFormat::Csv ? report_csv(report) : report_json(report).dump(2) + "\n");
  } else {
    write_report(report, out, f);
    note("wrote " + out);
  }
}

// Loads a configuration's map, or the voxelwise max when the name is "a+b".
ProbGrid load_config_map(const ArtifactSource& source, const std::string& patient,
                         const std::string& config) {
  if (config.find('+') == std::string::npos) return source.probability(patient, config);
  const EnsembleSpec e = parse_ensemble(config);
  ProbGrid fused = source.probability(patient, e.members.front());
  for (std::size_t m = 1; m < e.members.size(); ++m) {
    fused = ensemble_max(std::move(fused), source.probability(patient, e.members[m]));
  }
  return fused;
}

void write_phantom_files(const Phantom& ph, const fs::path& dir, const ProbGrid& prob) {
  fs::create_directories(dir);
  write_volume(ph.ct, dir / "ct.nii.gz");
  write_annotation(ph.annotation, dir / "labels.nii.gz", dir / "stations.json");
  write_volume(prob, dir / "prob.nii.gz");
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Lymph-node CT pipeline and evaluation toolkit", "lnkit"};
  app.require_subcommand(1);
  std::string log_level = "info";
  int jobs = 0;
  app.set_version_flag("--version",
                       std::string("lnkit ") + kToolkitVersion + " (geometry schema " +
                           std::to_string(kGeometrySchemaVersion) + ", report schema " +
                           std::to_string(kReportSchemaVersion) + ")");
  app.add_option("--log-level", log_level, "info or quiet")->check(CLI::IsMember({"info", "quiet"}));
  app.add_option("--jobs", jobs, "patient-level workers (accepted; work runs sequentially)")
      ->check(CLI::NonNegativeNumber);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "resample, lung crop, resize and normalise a CT");
  std::string pre_in, pre_out, pre_record, pre_mask;
  PreprocessFlags pre_flags;
  pre->add_option("ct", pre_in, "input CT")->required();
  pre->add_option("-o,--out", pre_out, "normalised volume")->required();
  pre->add_option("--record", pre_record, "geometry record (default <out>.geometry.json)");
  pre->add_option("--lung-mask", pre_mask, "binary lung mask on the CT grid");
  add_preprocess_flags(pre, pre_flags);

  // slab
  auto* slab = app.add_subcommand("slab", "split a preprocessed volume into overlapping slabs");
  std::string slab_in, slab_dir;
  SlabFlags slab_flags;
  slab->add_option("volume", slab_in, "preprocessed volume")->required();
  slab->add_option("--out-dir", slab_dir, "directory for slabs and slabs.json")->required();
  add_slab_flags(slab, slab_flags);

  // stitch
  auto* stitch = app.add_subcommand("stitch", "average slab predictions back into one volume");
  std::string st_layout, st_pred_dir, st_out;
  stitch->add_option("--layout", st_layout, "slabs.json written by 'slab'")->required();
  stitch->add_option("--pred-dir", st_pred_dir, "directory holding the slab predictions (default: layout dir)");
  stitch->add_option("-o,--out", st_out, "stitched probability map")->required();

  // ensemble
  auto* ens = app.add_subcommand("ensemble", "voxelwise maximum of probability maps");
  std::vector<std::string> ens_in;
  std::string ens_out;
  ens->add_option("maps", ens_in, "probability maps")->required()->expected(2, -1);
  ens->add_option("-o,--out", ens_out, "output map")->required();

  // restore
  auto* restore = app.add_subcommand("restore", "map a probability volume back to original CT space");
  std::string rs_in, rs_record, rs_out;
  restore->add_option("prob", rs_in, "probability map in preprocessed space")->required();
  restore->add_option("--record", rs_record, "geometry record from 'preprocess'")->required();
  restore->add_option("-o,--out", rs_out, "restored map")->required();

  // instances
  auto* inst = app.add_subcommand("instances", "connected components with volume and short axis");
  std::string in_path, in_stations, in_out;
  std::string in_pt = "0.5";
  int in_conn = 26;
  inst->add_option("volume", in_path, "probability, mask or label volume")->required();
  inst->add_option("--pt", in_pt, "threshold for probability maps")->capture_default_str();
  inst->add_option("--connectivity", in_conn, "6, 18 or 26")->capture_default_str();
  inst->add_option("--stations", in_stations, "station sidecar: cluster the labels as ground truth");
  inst->add_option("-o,--out", in_out, "JSON output (default stdout)");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "per-patient and cohort metrics");
  std::string ev_manifest, ev_config, ev_prob, ev_labels, ev_stations, ev_out, ev_format, ev_id = "patient";
  std::string ev_pt = "sweep";
  int ev_conn = 26;
  double ev_min_dice = 0.0;
  std::vector<std::string> ev_strata;
  auto* ev_m = eval->add_option("--manifest", ev_manifest, "cohort manifest");
  eval->add_option("--config", ev_config, "probability-map configuration, 'a+b' for an ensemble");
  auto* ev_p = eval->add_option("--prob", ev_prob, "single probability map");
  eval->add_option("--labels", ev_labels, "single label volume");
  eval->add_option("--stations", ev_stations, "single station sidecar");
  eval->add_option("--patient-id", ev_id, "id for the single-patient form")->capture_default_str();
  eval->add_option("--pt", ev_pt, "'sweep' or a threshold")->capture_default_str();
  eval->add_option("--connectivity", ev_conn, "6, 18 or 26")->capture_default_str();
  eval->add_option("--min-pair-dice", ev_min_dice, "pairs need a Dice above this")->capture_default_str();
  eval->add_option("--stratum", ev_strata, "stratum key such as ge10|relevant (repeatable)");
  eval->add_option("--format", ev_format, "json or csv (default from extension)");
  eval->add_option("-o,--out", ev_out, "report path (default stdout)");
  ev_m->excludes(ev_p);
  ev_p->excludes(ev_m);

  // crossval
  auto* cv = app.add_subcommand("crossval", "k-fold evaluation with per-fold threshold selection");
  std::string cv_manifest, cv_out;
  std::string cv_pt = "sweep";
  std::size_t cv_folds = 5;
  std::uint64_t cv_seed = 0;
  int cv_conn = 26;
  double cv_min_dice = 0.0;
  std::vector<std::string> cv_configs, cv_ensembles;
  cv->add_option("--manifest", cv_manifest, "cohort manifest")->required();
  cv->add_option("--folds", cv_folds, "fold count")->capture_default_str();
  cv->add_option("--seed", cv_seed, "fold shuffle seed")->capture_default_str();
  cv->add_option("--pt", cv_pt, "'sweep' (per fold), 'global' or a threshold")->capture_default_str();
  cv->add_option("--connectivity", cv_conn, "6, 18 or 26")->capture_default_str();
  cv->add_option("--min-pair-dice", cv_min_dice, "pairs need a Dice above this")->capture_default_str();
  cv->add_option("--config", cv_configs, "configuration to evaluate (repeatable; default all)");
  cv->add_option("--ensemble", cv_ensembles, "name=a+b voxelwise-max ensemble (repeatable)");
  cv->add_option("--out-dir", cv_out, "writes crossval.json, folds.csv, strata.csv")->required();

  // phantom
  auto* ph = app.add_subcommand("phantom", "synthetic CT, annotation and probability map");
  std::string ph_spec, ph_out, ph_quality;
  std::optional<std::uint64_t> ph_seed;
  std::size_t ph_nodes = 5;
  std::size_t ph_cohort = 0;
  std::vector<std::int64_t> ph_dims{96, 96, 64};
  std::vector<double> ph_spacing{1.0, 1.0, 1.0};
  auto* ph_s = ph->add_option("--spec", ph_spec, "phantom spec JSON");
  auto* ph_r = ph->add_option("--random-seed", ph_seed, "generate a random spec");
  ph->add_option("--nodes", ph_nodes, "node count for random specs")->capture_default_str();
  ph->add_option("--dims", ph_dims, "grid dims for random specs")->expected(3)->capture_default_str();
  ph->add_option("--spacing", ph_spacing, "spacing for random specs")->expected(3)->capture_default_str();
  ph->add_option("--quality", ph_quality, "probability-map degradation JSON (default: a perfect map)");
  ph->add_option("--cohort", ph_cohort, "write this many random patients plus manifest.json");
  ph->add_option("--out", ph_out, "output directory")->required();
  ph_s->excludes(ph_r);
  ph_r->excludes(ph_s);

  // bench
  auto* bench = app.add_subcommand("bench", "per-stage wall-clock timing of one inference pass");
  std::string bn_ct, bn_out;
  std::size_t bn_repeats = 5;
  double bn_pt = 0.5;
  int bn_conn = 26;
  PreprocessFlags bn_flags;
  bench->add_option("ct", bn_ct, "CT volume")->required();
  bench->add_option("--repeats", bn_repeats, "timed repetitions")->capture_default_str();
  bench->add_option("--pt", bn_pt, "threshold for the instancer stage")->capture_default_str();
  bench->add_option("--connectivity", bn_conn, "6, 18 or 26")->capture_default_str();
  bench->add_option("-o,--out", bn_out, "JSON output (default stdout)");
  add_preprocess_flags(bench, bn_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cout, std::cerr);
    return code == 0 ? 0 : 1;
  }
  g_quiet = log_level == "quiet";

  try {
    if (pre->parsed()) {
      const PreprocessConfig cfg = pre_flags.config();
      const CtGrid ct = read_ct(pre_in);
      std::optional<MaskGrid> mask;
      if (!pre_mask.empty()) mask = read_mask(pre_mask);
      const Preprocessed out = preprocess(ct, cfg, mask ? &*mask : nullptr);
      write_volume(out.volume, pre_out);
      const std::string record = pre_record.empty() ? pre_out + ".geometry.json" : pre_record;
      write_json(to_json(out.record), record);
      note("wrote " + pre_out + " and " + record);
    } else if (slab->parsed()) {
      const SlabSpec spec = slab_flags.spec();
      const ProbGrid vol = read_probability(slab_in);
      const SlabSet set = extract_slabs(vol, spec);
      fs::create_directories(slab_dir);
      nlohmann::json layout = slab_layout_json(set);
      nlohmann::json files = nlohmann::json::array();
      for (std::size_t k = 0; k < set.slabs.size(); ++k) {
        write_volume(set.slabs[k].grid, fs::path(slab_dir) / slab_file(k));
        files.push_back(slab_file(k));
      }
      layout["files"] = files;
      write_json(layout, fs::path(slab_dir) / "slabs.json");
      note("wrote " + std::to_string(set.slabs.size()) + " slabs to " + slab_dir);
    } else if (stitch->parsed()) {
      const nlohmann::json layout = read_json(st_layout);
      SlabSet set = slab_layout_from_json(layout);
      const fs::path dir = st_pred_dir.empty() ? fs::path(st_layout).parent_path() : fs::path(st_pred_dir);
      require(layout.contains("files") && layout["files"].is_array() &&
                  layout["files"].size() == set.slabs.size(),
              ErrorCode::Format, "slab layout lists no file per slab");
      for (std::size_t k = 0; k < set.slabs.size(); ++k) {
        set.slabs[k].grid = read_probability(dir / layout["files"][k].get<std::string>());
      }
      write_volume(stitch_slabs(set), st_out);
      note("wrote " + st_out);
    } else if (ens->parsed()) {
      ProbGrid fused = read_probability(ens_in.front());
      for (std::size_t k = 1; k < ens_in.size(); ++k) fused = ensemble_max(std::move(fused), read_probability(ens_in[k]));
      write_volume(fused, ens_out);
      note("wrote " + ens_out);
    } else if (restore->parsed()) {
      const GeometryRecord record = geometry_record_from_json(read_json(rs_record));
      write_volume(restore_original_space(read_probability(rs_in), record), rs_out);
      note("wrote " + rs_out);
    } else if (inst->parsed()) {
      const Connectivity conn = connectivity_flag(in_conn);
      const std::optional<double> pt = parse_pt(in_pt);
      require(pt.has_value(), ErrorCode::InvalidArgument, "instances needs a numeric --pt");
      InstanceSet set;
      if (!in_stations.empty()) {
        set = cluster_ground_truth(read_annotation(in_path, in_stations), conn).clusters;
      } else {
        const AnyVolume vol = read_volume(in_path);
        if (const auto* p = std::get_if<ProbGrid>(&vol)) {
          p->validate_values();
          set = connected_components(*p, *pt, conn);
        } else if (const auto* m = std::get_if<MaskGrid>(&vol)) {
          set = connected_components(*m, conn);
        } else if (const auto* l = std::get_if<LabelGrid>(&vol)) {
          set = connected_components(*l, conn);
        } else {
          fail(ErrorCode::Validation, "instances needs a probability, mask or label volume, not CT");
        }
      }
      emit_json(to_json(set), in_out);
    } else if (eval->parsed()) {
      const Connectivity conn = connectivity_flag(ev_conn);
      const std::optional<double> pt = parse_pt(ev_pt);
      std::vector<Stratum> strata;
      for (const auto& k : ev_strata) strata.push_back(Stratum::parse(k));
      format_for(ev_format, ev_out);

      std::unique_ptr<ArtifactSource> source;
      std::string config = ev_config;
      if (!ev_manifest.empty()) {
        source = std::make_unique<ManifestSource>(read_manifest(ev_manifest));
        require(!source->patient_ids().empty(), ErrorCode::Manifest, "manifest lists no patient");
        if (config.empty()) {
          const auto names = source->configs(source->patient_ids().front());
          require(names.size() == 1, ErrorCode::InvalidArgument,
                  "--config is required when patients have several probability maps");
          config = names.front();
        }
      } else {
        require(!ev_prob.empty() && !ev_labels.empty() && !ev_stations.empty(), ErrorCode::InvalidArgument,
                "evaluate needs --manifest, or --prob with --labels and --stations");
        Manifest m;
        m.patients.push_back({ev_id, std::nullopt, ev_labels, ev_stations, std::nullopt, {{"prob", ev_prob}}});
        source = std::make_unique<ManifestSource>(std::move(m));
        config = "prob";
      }
      std::vector<std::string> members{config};
      if (config.find('+') != std::string::npos) members = parse_ensemble(config).members;
      for (const auto& id : source->patient_ids()) source->check(id, members);

      std::vector<double> candidates;
      if (pt) {
        candidates = {*pt};
      } else {
        const auto lattice = threshold_lattice();
        candidates.assign(lattice.begin(), lattice.end());
      }
      std::vector<std::vector<PatientMetrics>> per_patient;
      for (const auto& id : source->patient_ids()) {
        const InstanceSet gt = cluster_ground_truth(source->annotation(id), conn).clusters;
        const ProbGrid prob = load_config_map(*source, id, config);
        std::vector<PatientMetrics> row;
        for (double c : candidates) row.push_back(evaluate_patient(id, prob, gt, c, conn, ev_min_dice));
        per_patient.push_back(std::move(row));
      }
      std::size_t pick = 0;
      if (candidates.size() > 1) {
        std::vector<std::vector<SweepPoint>> curves;
        for (const auto& row : per_patient) {
          std::vector<SweepPoint> curve;
          for (const auto& m : row) curve.push_back({m.pt, m.dice});
          curves.push_back(std::move(curve));
        }
        const double best = best_threshold(curves);
        while (candidates[pick] != best) ++pick;
      }
      EvalReport report;
      report.name = config;
      report.strata = strata;
      for (auto& row : per_patient) report.patients.push_back(std::move(row[pick]));
      report.finalize();
      char chosen[32];
      std::snprintf(chosen, sizeof chosen, "threshold %.2f", candidates[pick]);
      note(chosen);
      emit_report(report, ev_out, ev_format);
    } else if (cv->parsed()) {
      CVConfig cfg;
      cfg.folds = cv_folds;
      cfg.seed = cv_seed;
      cfg.connectivity = connectivity_flag(cv_conn);
      cfg.min_pair_dice = cv_min_dice;
      cfg.configs = cv_configs;
      for (const auto& e : cv_ensembles) cfg.ensembles.push_back(parse_ensemble(e));
      if (cv_pt == "global") {
        cfg.pt_mode = PtMode::Global;
      } else if (const auto pt = parse_pt(cv_pt)) {
        cfg.pt_mode = PtMode::Fixed;
        cfg.fixed_pt = *pt;
      }
      cfg.on_fold_start = [](std::size_t f, const std::vector<std::string>& p) {
        note("fold " + std::to_string(f + 1) + ": " + std::to_string(p.size()) + " patients");
      };
      const ManifestSource source(read_manifest(cv_manifest));
      const CVReport report = run_cross_validation(source, cfg);
      const fs::path dir(cv_out);
      fs::create_directories(dir);
      write_json(to_json(report), dir / "crossval.json");
      write_text(fold_table_csv(report), dir / "folds.csv");
      write_text(strata_table_csv(report), dir / "strata.csv");
      note("wrote crossval.json, folds.csv and strata.csv to " + cv_out);
    } else if (ph->parsed()) {
      require(ph_dims.size() == 3 && ph_spacing.size() == 3, ErrorCode::InvalidArgument,
              "--dims and --spacing take three values");
      const Dims dims{ph_dims[0], ph_dims[1], ph_dims[2]};
      const Vec3 spacing{ph_spacing[0], ph_spacing[1], ph_spacing[2]};
      std::optional<ProbabilityQuality> quality;
      if (!ph_quality.empty()) quality = probability_quality_from_json(read_json(ph_quality));
      const fs::path out(ph_out);
      if (ph_cohort > 0) {
        require(ph_spec.empty(), ErrorCode::InvalidArgument, "--cohort builds random specs; drop --spec");
        nlohmann::json patients = nlohmann::json::object();
        for (std::size_t i = 0; i < ph_cohort; ++i) {
          char id[32];
          std::snprintf(id, sizeof id, "P%03zu", i + 1);
          const std::uint64_t seed = ph_seed.value_or(1) * 1000 + i;
          const Phantom phantom = generate_phantom(random_phantom_spec(seed, dims, spacing, ph_nodes));
          ProbabilityQuality q = quality.value_or(ProbabilityQuality{});
          q.seed = q.seed * 7919 + i;
          write_phantom_files(phantom, out / id, synth_probability(phantom.annotation, q));
          patients[id] = {{"ct", std::string(id) + "/ct.nii.gz"},
                          {"gt_labels", std::string(id) + "/labels.nii.gz"},
                          {"gt_stations", std::string(id) + "/stations.json"},
                          {"prob_maps", {{"synthetic", std::string(id) + "/prob.nii.gz"}}}};
        }
        write_json({{"patients", patients}}, out / "manifest.json");
        note("wrote " + std::to_string(ph_cohort) + " patients and manifest.json to " + ph_out);
      } else {
        require(!ph_spec.empty() || ph_seed, ErrorCode::InvalidArgument,
                "phantom needs --spec or --random-seed");
        const PhantomSpec spec = !ph_spec.empty()
                                     ? phantom_spec_from_json(read_json(ph_spec))
                                     : random_phantom_spec(*ph_seed, dims, spacing, ph_nodes);
        const Phantom phantom = generate_phantom(spec);
        write_phantom_files(phantom, out,
                            synth_probability(phantom.annotation, quality.value_or(ProbabilityQuality{})));
        write_json(to_json(spec), out / "spec.json");
        note("wrote phantom to " + ph_out);
      }
    } else if (bench->parsed()) {
      BenchConfig cfg;
      cfg.preprocess = bn_flags.config();
      cfg.repeats = bn_repeats;
      require(bn_pt >= 0.0 && bn_pt <= 1.0, ErrorCode::InvalidArgument, "--pt must lie in [0,1]");
      cfg.pt = bn_pt;
      cfg.connectivity = connectivity_flag(bn_conn);
      emit_json(to_json(benchmark_timing(fs::path(bn_ct), cfg)), bn_out);
    }
  } catch (const Error& e) {
    std::cerr << "lnkit: " << to_string(e.code()) << ": " << e.what() << '\n';
    return e.is_io() ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "lnkit: io: " << e.what() << '\n';
    return 2;
  } catch (const std::bad_alloc&) {
    std::cerr << "lnkit: out of memory\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "lnkit: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace lnkit
