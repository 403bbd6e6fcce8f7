#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "json.hpp"
#include "lnkit/stations.hpp"
#include "lnkit/voxelgrid.hpp"

namespace lnkit {

/// A volume as stored on disk; the alternative follows the file's dtype
/// (int16, uint8, uint16, float32).
using AnyVolume = std::variant<CtGrid, MaskGrid, LabelGrid, ProbGrid>;

// NIfTI-1 single-file volumes (.nii, or .nii.gz when the path ends in .gz).
// Only diagonal orientations are accepted; the voxel order on disk is kept
// as x-fastest and axis signs of the affine are not retained.
AnyVolume read_volume(const std::filesystem::path& path);

CtGrid read_ct(const std::filesystem::path& path);
ProbGrid read_probability(const std::filesystem::path& path);
MaskGrid read_mask(const std::filesystem::path& path);
LabelGrid read_labels(const std::filesystem::path& path);

template <class G>
void write_volume(const G& grid, const std::filesystem::path& path);

void write_volume(const AnyVolume& volume, const std::filesystem::path& path);

/// Station sidecar: {"labels": [{"id", "stations", "primary", "laterality"}]}.
std::map<std::uint16_t, StationInfo> parse_station_table(const nlohmann::json& j);
nlohmann::json station_table_to_json(const std::map<std::uint16_t, StationInfo>& table);

Annotation read_annotation(const std::filesystem::path& label_path,
                           const std::filesystem::path& meta_path);
void write_annotation(const Annotation& annotation, const std::filesystem::path& label_path,
                      const std::filesystem::path& meta_path);

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline; identical input gives identical bytes.
void write_json(const nlohmann::json& j, const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace lnkit
