#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lnkit/evalkit.hpp"
#include "lnkit/instancer.hpp"
#include "lnkit/pipeline.hpp"
#include "lnkit/report.hpp"
#include "lnkit/stations.hpp"

namespace lnkit {

struct FoldSplit {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> assignment;  // patient id -> fold (0-based)

  /// Patient ids of each fold, sorted.
  std::vector<std::vector<std::string>> folds() const;
};

/// Ids are sorted, shuffled with SplitMix64(seed) (Fisher-Yates, j = next() % (i + 1))
/// and dealt round-robin. Needs k >= 2 and at least k distinct ids.
FoldSplit split_folds(std::vector<std::string> patient_ids, std::size_t k, std::uint64_t seed);

nlohmann::json to_json(const FoldSplit& split);

struct PatientEntry {
  std::string id;
  std::optional<std::filesystem::path> ct;
  std::filesystem::path gt_labels;
  std::filesystem::path gt_stations;
  std::optional<std::filesystem::path> lung_mask;
  std::map<std::string, std::filesystem::path> prob_maps;
};

/// {"patients": {"<id>": {"ct", "gt_labels", "gt_stations", "lung_mask"?,
/// "prob_maps": {"<config>": "<path>"}}}}. Relative paths resolve against
/// the manifest's directory. A list of objects carrying "id" is also accepted.
struct Manifest {
  std::vector<PatientEntry> patients;  // sorted by id
};

Manifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir);
Manifest read_manifest(const std::filesystem::path& path);

/// Where the cross-validation gets its per-patient inputs from.
class ArtifactSource {
 public:
  virtual ~ArtifactSource() = default;
  virtual std::vector<std::string> patient_ids() const = 0;
  /// Names of the probability maps available for a patient, sorted.
  virtual std::vector<std::string> configs(const std::string& patient) const = 0;
  /// Throws Manifest naming the patient and the missing role.
  virtual void check(const std::string& patient, const std::vector<std::string>& configs) const = 0;
  virtual Annotation annotation(const std::string& patient) const = 0;
  virtual ProbGrid probability(const std::string& patient, const std::string& config) const = 0;
};

class ManifestSource : public ArtifactSource {
 public:
  explicit ManifestSource(Manifest manifest);
  std::vector<std::string> patient_ids() const override;
  std::vector<std::string> configs(const std::string& patient) const override;
  void check(const std::string& patient, const std::vector<std::string>& configs) const override;
  Annotation annotation(const std::string& patient) const override;
  ProbGrid probability(const std::string& patient, const std::string& config) const override;

 private:
  const PatientEntry& entry(const std::string& patient) const;
  std::map<std::string, PatientEntry> entries_;
};

/// Holds everything in memory; used by tests and the phantom cohort.
class MemorySource : public ArtifactSource {
 public:
  void add(const std::string& patient, Annotation annotation, std::map<std::string, ProbGrid> maps);
  std::vector<std::string> patient_ids() const override;
  std::vector<std::string> configs(const std::string& patient) const override;
  void check(const std::string& patient, const std::vector<std::string>& configs) const override;
  Annotation annotation(const std::string& patient) const override;
  ProbGrid probability(const std::string& patient, const std::string& config) const override;

  /// Every (patient, config) probability request, in order.
  mutable std::vector<std::pair<std::string, std::string>> reads;

 private:
  struct Item {
    Annotation annotation;
    std::map<std::string, ProbGrid> maps;
  };
  std::map<std::string, Item> items_;
};

enum class PtMode { PerFold, Global, Fixed };

/// A named voxelwise-max ensemble of existing configurations.
struct EnsembleSpec {
  std::string name;
  std::vector<std::string> members;
};

/// "name=a+b" or "a+b" (named after the members).
EnsembleSpec parse_ensemble(std::string_view text);

struct CVConfig {
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  PtMode pt_mode = PtMode::PerFold;
  double fixed_pt = 0.5;
  Connectivity connectivity = Connectivity::TwentySix;
  double min_pair_dice = 0.0;
  std::vector<std::string> configs;  // empty: every map of the first patient
  std::vector<EnsembleSpec> ensembles;
  /// Called before a fold starts loading data.
  std::function<void(std::size_t fold, const std::vector<std::string>& patients)> on_fold_start;
};

/// One row of the per-fold table; the pooled row has fold = nullopt.
struct FoldRow {
  std::optional<std::size_t> fold;
  std::optional<double> pt;  // absent on the pooled row when folds disagree
  std::size_t patients = 0;
  std::size_t gt_instances = 0;
  CohortMetrics metrics;
};

struct ConfigResult {
  std::string config;
  std::vector<FoldRow> folds;
  FoldRow total;
  /// Every patient at the threshold chosen for its fold, with the size x
  /// station-group strata computed on the cohort.
  EvalReport evaluation;
  std::vector<StationRecall> station_recall_ge10_relevant;
};

struct CVReport {
  FoldSplit split;
  PtMode pt_mode = PtMode::PerFold;
  std::vector<ConfigResult> configs;
};

CVReport run_cross_validation(const ArtifactSource& source, const CVConfig& config);

std::string_view to_string(PtMode mode);
nlohmann::json to_json(const FoldRow& row);
nlohmann::json to_json(const CVReport& report);
/// Header: config,fold,PT,LN,dice,dice_std,recall,recall_pw,recall_pw_std,fppp,fppp_std,
/// gt_perc,gt_perc_std,dice_tp,dice_tp_std. One row per fold, then fold=Total.
std::string fold_table_csv(const CVReport& report);
/// Header: config,stratum,LN,dice_tp,dice_tp_std,gt_perc,gt_perc_std,recall,recall_pw,
/// recall_pw_std. Six strata rows per config.
std::string strata_table_csv(const CVReport& report);

struct StageTiming {
  std::string stage;
  std::vector<double> seconds;
  MeanStd summary;
};

struct TimingReport {
  std::size_t repeats = 0;
  std::vector<StageTiming> stages;
  std::vector<double> total_seconds;
  MeanStd total;
};

struct BenchConfig {
  PreprocessConfig preprocess;
  std::size_t repeats = 5;
  double pt = 0.5;
  Connectivity connectivity = Connectivity::TwentySix;
};

inline const std::vector<std::string>& timing_stages() {
  static const std::vector<std::string> stages{"load",    "preprocess", "slab_stitch", "ensemble",
                                                "restore", "instancer",  "metrics"};
  return stages;
}

/// Times every stage of one inference pass. The network is replaced by the
/// normalised CT itself, so only the toolkit's own work is measured.
TimingReport benchmark_timing(const std::function<CtGrid()>& load, const BenchConfig& config);
TimingReport benchmark_timing(const std::filesystem::path& ct_path, const BenchConfig& config);

nlohmann::json to_json(const TimingReport& report);

}  // namespace lnkit
