#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "lnkit/voxelgrid.hpp"

namespace lnkit {

/// IASLC lymph-node station code. Sub-stations 3a and 3p are distinct;
/// "NA" marks nodes outside every station.
class Station {
 public:
  static constexpr std::array<std::string_view, 16> kCodes = {
      "1", "2", "3a", "3p", "4", "5", "6", "7", "8", "9", "10", "11", "12", "13", "14", "NA"};

  /// Throws Validation for codes outside the list above.
  static Station parse(std::string_view code);

  std::string_view code() const noexcept { return kCodes[index_]; }
  std::size_t index() const noexcept { return index_; }

  /// Station 1 and NA are left out of the "relevant stations" group.
  bool is_relevant() const noexcept { return code() != "1" && code() != "NA"; }

  friend auto operator<=>(const Station&, const Station&) = default;

 private:
  explicit Station(std::uint8_t index) : index_(index) {}
  std::uint8_t index_ = 0;
};

using StationSet = std::set<Station>;

std::string to_string(const StationSet& stations);

enum class Laterality { Left, Right, Unspecified };

std::string_view to_string(Laterality laterality);
Laterality parse_laterality(std::string_view text);

struct StationInfo {
  std::uint16_t label_id = 0;
  StationSet stations;
  Station primary = Station::parse("NA");
  Laterality laterality = Laterality::Unspecified;

  /// primary must belong to a non-empty station set; label ids are positive.
  void validate() const;
};

/// Label grid plus per-label station metadata.
struct Annotation {
  LabelGrid labels;
  std::map<std::uint16_t, StationInfo> stations;

  /// Enforces the bijection between nonzero grid labels and table entries;
  /// throws Consistency naming every offender.
  void validate() const;
};

}  // namespace lnkit
