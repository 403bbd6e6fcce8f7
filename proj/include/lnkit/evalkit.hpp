#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lnkit/instancer.hpp"
#include "lnkit/stations.hpp"
#include "lnkit/voxelgrid.hpp"

namespace lnkit {

/// The ten probability thresholds 0.1, 0.2, ..., 1.0.
std::array<double, 10> threshold_lattice();

/// 2|A n B| / (|A| + |B|); 1 when both sets are empty.
double dice_from_counts(std::size_t intersection, std::size_t size_a, std::size_t size_b);
double dice(const MaskGrid& a, const MaskGrid& b);
/// Both spans hold ascending linear indices.
double dice(std::span<const std::size_t> a, std::span<const std::size_t> b);

struct SweepPoint {
  double pt = 0.0;
  double dice = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  double best_pt = 0.1;
};

SweepResult sweep_thresholds(const ProbGrid& prob, const MaskGrid& gt);

/// Threshold maximising the cohort-mean patient Dice; ties go to the lower
/// threshold. Every curve must be sampled on the same thresholds.
double best_threshold(std::span<const std::vector<SweepPoint>> per_patient);

struct InstancePair {
  std::uint32_t gt_id = 0;
  std::uint32_t det_id = 0;
  double dice = 0.0;
};

struct PairingResult {
  std::vector<InstancePair> pairs;
  std::vector<std::uint32_t> unmatched_gt;
  std::vector<std::uint32_t> unmatched_det;
};

/// Greedy one-to-one matching: overlapping (gt, det) pairs are accepted in
/// descending Dice order (ties: lower gt id, then lower det id) while both
/// sides are free and Dice > min_pair_dice.
PairingResult pair_instances(const InstanceSet& dets, const InstanceSet& gts,
                             double min_pair_dice = 0.0);

/// Per ground-truth instance outcome, kept for stratified reporting.
struct GtOutcome {
  std::uint32_t id = 0;
  std::size_t voxel_count = 0;
  double volume_ml = 0.0;
  double short_axis_mm = 0.0;
  StationSet stations;
  StationSet primaries;
  std::optional<std::uint32_t> det_id;
  double pair_dice = 0.0;    // 0 when unmatched
  double covered_pct = 0.0;  // 100 |gt n pred| / |gt|
};

struct PatientMetrics {
  std::string patient_id;
  double pt = 0.0;
  double dice = 0.0;               // whole thresholded map vs whole GT
  std::optional<double> dice_tp;   // mean pair Dice, absent without pairs
  std::optional<double> gt_perc;   // mean covered_pct, absent without GT
  std::size_t tp = 0;
  std::size_t fn = 0;
  std::size_t fp = 0;
  std::vector<GtOutcome> gt;

  std::size_t gt_count() const noexcept { return tp + fn; }
  std::optional<double> recall() const {
    if (gt_count() == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(gt_count());
  }
};

/// `dets` must be the components of prob >= pt.
PatientMetrics patient_metrics(std::string patient_id, const PairingResult& pairing,
                               const InstanceSet& dets, const InstanceSet& gts,
                               const ProbGrid& prob, double pt);

/// Threshold, label, pair and measure in one call.
PatientMetrics evaluate_patient(std::string patient_id, const ProbGrid& prob,
                                const InstanceSet& gt_clusters, double pt,
                                Connectivity connectivity, double min_pair_dice = 0.0);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t n = 0;
};

MeanStd mean_std(std::span<const double> values);

struct CohortMetrics {
  std::size_t patients = 0;
  std::size_t gt_instances = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::optional<double> recall_global;  // pooled tp / pooled GT
  MeanStd recall_pw;                    // patients with GT only
  MeanStd fppp;
  MeanStd dice;
  MeanStd dice_tp;
  MeanStd gt_perc;
};

CohortMetrics aggregate(std::span<const PatientMetrics> patients);

enum class SizeStratum { All, Lt7, From7To10, Ge10, Ge7 };
enum class StationGroup { All, Relevant };

/// A subset of ground-truth instances. Keys read "<size>|<group>[|<station>]"
/// with size in {all, lt7, 7to10, ge10, ge7} and group in {all, relevant},
/// e.g. "ge10|relevant" or "all|all|4".
struct Stratum {
  SizeStratum size = SizeStratum::All;
  StationGroup group = StationGroup::All;
  std::optional<Station> primary;

  std::string key() const;
  static Stratum parse(std::string_view key);
  bool contains(const GtOutcome& gt) const;
  bool is_everything() const noexcept {
    return size == SizeStratum::All && group == StationGroup::All && !primary;
  }
};

/// Relevant group: at least one primary station other than 1 and NA.
bool in_relevant_group(const StationSet& primaries);

struct StratumMetrics {
  Stratum stratum;
  std::size_t patients = 0;  // patients with at least one GT instance in the stratum
  std::size_t gt_instances = 0;
  std::size_t tp = 0;
  std::optional<double> recall;
  MeanStd recall_pw;
  MeanStd dice_tp;
  MeanStd gt_perc;
};

StratumMetrics stratify(std::span<const PatientMetrics> patients, const Stratum& stratum);
/// Throws InvalidArgument for keys that do not parse.
StratumMetrics stratify(std::span<const PatientMetrics> patients, std::string_view key);

/// Rows of the size x station-group table: {all, ge7, ge10} x {all, relevant}.
std::vector<Stratum> size_station_table_strata();

struct PatientStratum {
  std::optional<double> dice;  // only for the unrestricted stratum
  std::optional<double> dice_tp;
  std::optional<double> gt_perc;
  std::size_t recall_num = 0;
  std::size_t recall_den = 0;
  std::size_t fp = 0;
};

PatientStratum patient_stratum(const PatientMetrics& patient, const Stratum& stratum);

/// Detected/total counts per primary station (an instance counts once for
/// each of its primaries), with mean Dice-TP and GT-Perc of those instances.
struct StationRecall {
  Station station = Station::parse("NA");
  std::size_t detected = 0;
  std::size_t total = 0;
  std::optional<double> dice_tp;
  std::optional<double> gt_perc;
};

std::vector<StationRecall> per_station_recall(std::span<const PatientMetrics> patients,
                                              SizeStratum size = SizeStratum::All,
                                              StationGroup group = StationGroup::All);

/// Metadata-only view of an annotated node.
struct NodeRecord {
  std::uint16_t label_id = 0;
  double short_axis_mm = 0.0;
  double volume_ml = 0.0;
  StationSet stations;
  Station primary = Station::parse("NA");
};

/// One record per original label, measured in the annotation's own space.
std::vector<NodeRecord> node_records(const Annotation& annotation);

struct StrataCounts {
  std::size_t total = 0;
  std::size_t lt7 = 0;
  std::size_t from7to10 = 0;
  std::size_t ge10 = 0;
  std::size_t relevant = 0;
  std::map<Station, std::size_t> by_primary;
};

StrataCounts count_strata(std::span<const NodeRecord> nodes);

enum class AgreementGrade { Perfect, Good, Bad };

std::string_view to_string(AgreementGrade grade);

/// perfect: same primary; good: same station set but different primary; bad otherwise.
AgreementGrade station_agreement_grade(const StationInfo& a, const StationInfo& b);

}  // namespace lnkit
