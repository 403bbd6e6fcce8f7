#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lnkit/evalkit.hpp"

namespace lnkit {

/// Per-patient and cohort metrics for one model configuration.
struct EvalReport {
  std::string name;
  std::optional<std::uint64_t> seed;
  std::vector<Stratum> strata;  // reported for every patient and for the cohort
  std::vector<PatientMetrics> patients;

  // Filled by finalize().
  bool finalized = false;
  std::optional<CohortMetrics> cohort;
  std::vector<StratumMetrics> cohort_strata;
  std::vector<StationRecall> station_recall;

  /// Sorts patients by id and computes the cohort rows. With no strata the
  /// unrestricted stratum followed by the size x station-group rows is used.
  void finalize();
};

enum class ReportFormat { Json, Csv };

ReportFormat parse_report_format(std::string_view text);

nlohmann::json to_json(const MeanStd& m);
nlohmann::json to_json(const CohortMetrics& c);
nlohmann::json to_json(const StratumMetrics& s);
nlohmann::json to_json(const StationRecall& s);
nlohmann::json to_json(const PatientMetrics& p);

nlohmann::json report_json(const EvalReport& report);
/// One row per patient x stratum:
/// patient_id,stratum,PT,dice,dice_tp,gt_perc,recall_num,recall_den,fppp
std::string report_csv(const EvalReport& report);

void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);

}  // namespace lnkit
