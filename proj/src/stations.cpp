#include "lnkit/stations.hpp"

#include <sstream>
#include <vector>

namespace lnkit {

Station Station::parse(std::string_view code) {
  for (std::size_t i = 0; i < kCodes.size(); ++i) {
    if (kCodes[i] == code) return Station(static_cast<std::uint8_t>(i));
  }
  fail(ErrorCode::Validation, "unknown station code '" + std::string(code) + "'");
}

std::string to_string(const StationSet& stations) {
  std::string out = "{";
  bool first = true;
  for (const auto& s : stations) {
    if (!first) out += ",";
    out += s.code();
    first = false;
  }
  return out + "}";
}

std::string_view to_string(Laterality laterality) {
  switch (laterality) {
    case Laterality::Left: return "left";
    case Laterality::Right: return "right";
    case Laterality::Unspecified: return "unspecified";
  }
  return "unspecified";
}

Laterality parse_laterality(std::string_view text) {
  if (text == "left") return Laterality::Left;
  if (text == "right") return Laterality::Right;
  if (text == "unspecified" || text.empty()) return Laterality::Unspecified;
  fail(ErrorCode::Validation, "unknown laterality '" + std::string(text) + "'");
}

void StationInfo::validate() const {
  const std::string who = "label " + std::to_string(label_id);
  require(label_id > 0, ErrorCode::Validation, "station entry ids must be positive");
  require(!stations.empty(), ErrorCode::Validation, who + ": empty station set");
  require(stations.count(primary) == 1, ErrorCode::Validation,
          who + ": primary station " + std::string(primary.code()) + " not in " +
              to_string(stations));
}

void Annotation::validate() const {
  std::vector<bool> present(65536, false);
  for (auto v : labels.values()) present[v] = true;

  std::vector<std::uint16_t> missing_meta;
  std::vector<std::uint16_t> missing_grid;
  for (std::size_t v = 1; v < present.size(); ++v) {
    if (present[v] && !stations.count(static_cast<std::uint16_t>(v))) {
      missing_meta.push_back(static_cast<std::uint16_t>(v));
    }
  }
  for (const auto& [id, info] : stations) {
    require(info.label_id == id, ErrorCode::Consistency,
            "station table key " + std::to_string(id) + " holds entry for label " +
                std::to_string(info.label_id));
    info.validate();
    if (id == 0 || !present[id]) missing_grid.push_back(id);
  }
  if (missing_meta.empty() && missing_grid.empty()) return;

  std::ostringstream msg;
  msg << "annotation inconsistent:";
  if (!missing_meta.empty()) {
    msg << " labels without station entry [";
    for (std::size_t i = 0; i < missing_meta.size(); ++i) msg << (i ? "," : "") << missing_meta[i];
    msg << "]";
  }
  if (!missing_grid.empty()) {
    msg << " station entries absent from grid [";
    for (std::size_t i = 0; i < missing_grid.size(); ++i) msg << (i ? "," : "") << missing_grid[i];
    msg << "]";
  }
  fail(ErrorCode::Consistency, msg.str());
}

}  // namespace lnkit
