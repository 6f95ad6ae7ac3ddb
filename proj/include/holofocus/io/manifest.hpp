#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "holofocus/optics.hpp"

namespace holo::io {

// One dataset image. Paths are relative to the manifest's directory.
// intensity_min/max are the linear PNG mapping constants; source_raw points
// back at the raw hologram a scenario image was derived from.
struct ManifestEntry {
    std::string path;
    double z_true_um = 0.0;
    int class_label = -1;
    std::string scenario = "RAW";
    std::uint64_t seed = 0;
    double intensity_min = 0.0;
    double intensity_max = 1.0;
    std::string source_raw;
};

struct DatasetManifest {
    OpticalConfig optics;
    DatasetSpec dataset;
    std::string scenario = "RAW";
    std::string roi_anchor = "center";
    int image_size = 0;
    int roi_size = 0; // pre-downsample ROI, 0 for raw datasets
    std::vector<ManifestEntry> entries;

    // Directory holding the manifest; set on load/save, not serialized.
    std::string root_dir;

    std::string image_path(const ManifestEntry& e) const { return root_dir + "/" + e.path; }
};

nlohmann::json optics_to_json(const OpticalConfig& c);
OpticalConfig optics_from_json(const nlohmann::json& j);
nlohmann::json dataset_spec_to_json(const DatasetSpec& s);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// UTF-8, 2-space indent, trailing newline. nlohmann::json keeps keys
// sorted, so output bytes are deterministic.
void write_json_file(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json_file(const std::string& path);

} // namespace holo::io
