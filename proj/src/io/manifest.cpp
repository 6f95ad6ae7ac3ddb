#include "holofocus/io/manifest.hpp"

#include <filesystem>
#include <fstream>

#include "holofocus/common.hpp"

namespace holo::io {

using nlohmann::json;

json optics_to_json(const OpticalConfig& c) {
    return json{{"wavelength_um", c.wavelength_um},
                {"pixel_pitch_um", c.pixel_pitch_um},
                {"grid_size", c.grid_size},
                {"numerical_aperture", c.numerical_aperture}};
}

OpticalConfig optics_from_json(const json& j) {
    OpticalConfig c;
    c.wavelength_um = j.at("wavelength_um").get<double>();
    c.pixel_pitch_um = j.at("pixel_pitch_um").get<double>();
    c.grid_size = j.at("grid_size").get<int>();
    c.numerical_aperture = j.at("numerical_aperture").get<double>();
    c.validate();
    return c;
}

json dataset_spec_to_json(const DatasetSpec& s) {
    return json{{"z0_um", s.z0_um},         {"z_step_um", s.z_step_um},
                {"n_classes", s.n_classes}, {"per_class", s.per_class},
                {"noise_sigma", s.noise_sigma}, {"seed", s.seed}};
}

DatasetSpec dataset_spec_from_json(const json& j) {
    DatasetSpec s;
    s.z0_um = j.at("z0_um").get<double>();
    s.z_step_um = j.at("z_step_um").get<double>();
    s.n_classes = j.at("n_classes").get<int>();
    s.per_class = j.at("per_class").get<int>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.validate();
    return s;
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("short write on " + path);
}

json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IoError("bad JSON in " + path + ": " + e.what());
    }
    return j;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    json images = json::array();
    for (const auto& e : m.entries) {
        json row{{"path", e.path},
                 {"z_true_um", e.z_true_um},
                 {"class_label", e.class_label},
                 {"scenario", e.scenario},
                 {"seed", e.seed},
                 {"intensity_min", e.intensity_min},
                 {"intensity_max", e.intensity_max}};
        if (!e.source_raw.empty()) row["source_raw"] = e.source_raw;
        images.push_back(std::move(row));
    }
    json j{{"schema", "holofocus-dataset/1"},
           {"optics", optics_to_json(m.optics)},
           {"dataset", dataset_spec_to_json(m.dataset)},
           {"scenario", m.scenario},
           {"roi_anchor", m.roi_anchor},
           {"image_size", m.image_size},
           {"roi_size", m.roi_size},
           {"images", images}};
    write_json_file(j, path);
}

DatasetManifest load_manifest(const std::string& path) {
    json j = read_json_file(path);
    if (j.value("schema", "") != "holofocus-dataset/1")
        throw IoError("unexpected manifest schema in " + path);
    DatasetManifest m;
    m.optics = optics_from_json(j.at("optics"));
    m.dataset = dataset_spec_from_json(j.at("dataset"));
    m.scenario = j.at("scenario").get<std::string>();
    m.roi_anchor = j.at("roi_anchor").get<std::string>();
    m.image_size = j.at("image_size").get<int>();
    m.roi_size = j.value("roi_size", 0);
    for (const auto& row : j.at("images")) {
        ManifestEntry e;
        e.path = row.at("path").get<std::string>();
        e.z_true_um = row.at("z_true_um").get<double>();
        e.class_label = row.at("class_label").get<int>();
        e.scenario = row.at("scenario").get<std::string>();
        e.seed = row.at("seed").get<std::uint64_t>();
        e.intensity_min = row.at("intensity_min").get<double>();
        e.intensity_max = row.at("intensity_max").get<double>();
        e.source_raw = row.value("source_raw", "");
        m.entries.push_back(std::move(e));
    }
    m.root_dir = std::filesystem::path(path).parent_path().string();
    if (m.root_dir.empty()) m.root_dir = ".";
    return m;
}

} // namespace holo::io
