#include "lnkit/report.hpp"

#include <algorithm>
#include <cstdio>

#include "lnkit/volio.hpp"

namespace lnkit {

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

nlohmann::json station_list(const StationSet& set) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : set) out.push_back(std::string(s.code()));
  return out;
}

}  // namespace

void EvalReport::finalize() {
  std::sort(patients.begin(), patients.end(),
            [](const PatientMetrics& a, const PatientMetrics& b) { return a.patient_id < b.patient_id; });
  if (strata.empty()) {
    strata.push_back(Stratum{});
    for (const auto& s : size_station_table_strata()) {
      if (!s.is_everything()) strata.push_back(s);
    }
  }
  cohort.reset();
  cohort_strata.clear();
  station_recall.clear();
  if (!patients.empty()) {
    cohort = aggregate(patients);
    for (const auto& s : strata) cohort_strata.push_back(stratify(patients, s));
    station_recall = per_station_recall(patients);
  }
  finalized = true;
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "json") return ReportFormat::Json;
  if (text == "csv") return ReportFormat::Csv;
  fail(ErrorCode::InvalidArgument, "report format must be json or csv");
}

nlohmann::json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; }

nlohmann::json to_json(const CohortMetrics& c) {
  return {{"patients", c.patients},       {"gt_instances", c.gt_instances},
          {"tp", c.tp},                   {"fp", c.fp},
          {"recall", optional_number(c.recall_global)},
          {"recall_pw", to_json(c.recall_pw)}, {"fppp", to_json(c.fppp)},
          {"dice", to_json(c.dice)},      {"dice_tp", to_json(c.dice_tp)},
          {"gt_perc", to_json(c.gt_perc)}};
}

nlohmann::json to_json(const StratumMetrics& s) {
  return {{"stratum", s.stratum.key()},
          {"patients", s.patients},
          {"gt_instances", s.gt_instances},
          {"tp", s.tp},
          {"recall", optional_number(s.recall)},
          {"recall_pw", to_json(s.recall_pw)},
          {"dice_tp", to_json(s.dice_tp)},
          {"gt_perc", to_json(s.gt_perc)}};
}

nlohmann::json to_json(const StationRecall& s) {
  return {{"station", std::string(s.station.code())},
          {"detected", s.detected},
          {"total", s.total},
          {"dice_tp", optional_number(s.dice_tp)},
          {"gt_perc", optional_number(s.gt_perc)}};
}

nlohmann::json to_json(const PatientMetrics& p) {
  nlohmann::json gt = nlohmann::json::array();
  for (const auto& g : p.gt) {
    gt.push_back({{"id", g.id},
                  {"voxel_count", g.voxel_count},
                  {"volume_ml", g.volume_ml},
                  {"short_axis_mm", g.short_axis_mm},
                  {"stations", station_list(g.stations)},
                  {"primaries", station_list(g.primaries)},
                  {"det_id", g.det_id ? nlohmann::json(*g.det_id) : nlohmann::json(nullptr)},
                  {"pair_dice", g.pair_dice},
                  {"covered_pct", g.covered_pct}});
  }
  return {{"patient_id", p.patient_id},
          {"pt", p.pt},
          {"dice", p.dice},
          {"dice_tp", optional_number(p.dice_tp)},
          {"gt_perc", optional_number(p.gt_perc)},
          {"tp", p.tp},
          {"fn", p.fn},
          {"fp", p.fp},
          {"gt_instances", gt}};
}

nlohmann::json report_json(const EvalReport& report) {
  require(report.finalized, ErrorCode::InvalidArgument, "report must be finalized before writing");
  nlohmann::json patients = nlohmann::json::array();
  for (const auto& p : report.patients) {
    nlohmann::json j = to_json(p);
    nlohmann::json strata = nlohmann::json::object();
    for (const auto& s : report.strata) {
      const PatientStratum ps = patient_stratum(p, s);
      strata[s.key()] = {{"dice", optional_number(ps.dice)},
                         {"dice_tp", optional_number(ps.dice_tp)},
                         {"gt_perc", optional_number(ps.gt_perc)},
                         {"recall_num", ps.recall_num},
                         {"recall_den", ps.recall_den},
                         {"fp", ps.fp}};
    }
    j["strata"] = strata;
    patients.push_back(std::move(j));
  }
  nlohmann::json cohort = nullptr;
  if (report.cohort) {
    cohort = to_json(*report.cohort);
    nlohmann::json strata = nlohmann::json::object();
    for (const auto& s : report.cohort_strata) strata[s.stratum.key()] = to_json(s);
    cohort["strata"] = strata;
    nlohmann::json stations = nlohmann::json::array();
    for (const auto& s : report.station_recall) stations.push_back(to_json(s));
    cohort["station_recall"] = stations;
  }
  nlohmann::json keys = nlohmann::json::array();
  for (const auto& s : report.strata) keys.push_back(s.key());
  return {{"name", report.name},
          {"seed", report.seed ? nlohmann::json(*report.seed) : nlohmann::json(nullptr)},
          {"strata", keys},
          {"cohort", cohort},
          {"patients", patients}};
}

std::string report_csv(const EvalReport& report) {
  require(report.finalized, ErrorCode::InvalidArgument, "report must be finalized before writing");
  std::string out = "patient_id,stratum,PT,dice,dice_tp,gt_perc,recall_num,recall_den,fppp\n";
  for (const auto& p : report.patients) {
    for (const auto& s : report.strata) {
      const PatientStratum ps = patient_stratum(p, s);
      out += p.patient_id + "," + s.key() + "," + csv_number(p.pt) + "," + csv_number(ps.dice) +
             "," + csv_number(ps.dice_tp) + "," + csv_number(ps.gt_perc) + "," +
             std::to_string(ps.recall_num) + "," + std::to_string(ps.recall_den) + "," +
             std::to_string(ps.fp) + "\n";
    }
  }
  return out;
}

void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
  if (format == ReportFormat::Json) write_json(report_json(report), path);
  else write_text(report_csv(report), path);
}

}  // namespace lnkit
