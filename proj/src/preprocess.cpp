#include "holofocus/preprocess.hpp"

#include <cstdio>
#include <filesystem>

#include "holofocus/common.hpp"
#include "holofocus/io/png_io.hpp"

namespace holo {

namespace fs = std::filesystem;

const char* to_string(ScenarioTag t) {
    switch (t) {
        case ScenarioTag::SFO: return "SFO";
        case ScenarioTag::NSO: return "NSO";
        case ScenarioTag::SFN: return "SFN";
        case ScenarioTag::NSN: return "NSN";
    }
    return "?";
}

ScenarioTag scenario_tag_from_string(const std::string& s) {
    if (s == "SFO") return ScenarioTag::SFO;
    if (s == "NSO") return ScenarioTag::NSO;
    if (s == "SFN") return ScenarioTag::SFN;
    if (s == "NSN") return ScenarioTag::NSN;
    throw ConfigError("unknown scenario tag '" + s + "' (expected SFO|NSO|SFN|NSN)");
}

bool scenario_uses_sobel(ScenarioTag t) { return t == ScenarioTag::SFO || t == ScenarioTag::SFN; }

bool scenario_uses_negative(ScenarioTag t) {
    return t == ScenarioTag::SFN || t == ScenarioTag::NSN;
}

std::string Scenario::name() const {
    return std::string(to_string(tag)) + "_" + to_string(roi_anchor) + std::to_string(roi_size);
}

Image apply_scenario(const Image& raw_intensity, const Scenario& scenario, int out_size,
                     RoiAnchor anchor_override) {
    Image img = minmax_normalize(raw_intensity);
    if (scenario_uses_negative(scenario.tag)) img = negate(img);
    if (scenario_uses_sobel(scenario.tag)) img = sobel_magnitude(img);
    img = crop_roi(img, anchor_override, scenario.roi_size);
    if (out_size > scenario.roi_size)
        throw InvalidResize("out_size exceeds roi_size");
    return area_downsample(img, out_size, out_size);
}

Image apply_scenario(const Image& raw_intensity, const Scenario& scenario, int out_size) {
    return apply_scenario(raw_intensity, scenario, out_size, scenario.roi_anchor);
}

io::DatasetManifest make_scenario_dataset(const io::DatasetManifest& raw, const Scenario& scenario,
                                          int out_size, const std::string& out_dir) {
    if (scenario.roi_size > raw.image_size)
        throw RoiTooLarge("scenario roi_size " + std::to_string(scenario.roi_size) +
                          " exceeds raw image size " + std::to_string(raw.image_size));
    fs::create_directories(fs::path(out_dir) / "images");

    io::DatasetManifest m;
    m.optics = raw.optics;
    m.dataset = raw.dataset;
    m.scenario = to_string(scenario.tag);
    m.roi_anchor = to_string(scenario.roi_anchor);
    m.image_size = out_size;
    m.roi_size = scenario.roi_size;
    m.root_dir = out_dir;
    m.entries.resize(raw.entries.size());

    const fs::path raw_root(raw.root_dir);
    parallel_for(
        static_cast<std::int64_t>(raw.entries.size()), [&](std::int64_t begin, std::int64_t end) {
            for (std::int64_t i = begin; i < end; ++i) {
                const io::ManifestEntry& src = raw.entries[static_cast<size_t>(i)];
                Image out;
                const std::string file_note = " [file " + raw.image_path(src) + "]";
                try {
                    Image rawimg = load_raw_intensity(raw, src);
                    out = apply_scenario(rawimg, scenario, out_size);
                } catch (const RoiTooLarge& e) {
                    throw RoiTooLarge(e.what() + file_note);
                } catch (const ImageTooSmall& e) {
                    throw ImageTooSmall(e.what() + file_note);
                } catch (const OutOfRange& e) {
                    throw OutOfRange(e.what() + file_note);
                } catch (const Error& e) {
                    throw Error(e.what() + file_note);
                }
                char name[64];
                std::snprintf(name, sizeof(name), "images/%s_%05d.png", to_string(scenario.tag),
                              static_cast<int>(i));
                io::save_unit_png((fs::path(out_dir) / name).string(), out);

                io::ManifestEntry& e = m.entries[static_cast<size_t>(i)];
                e = src;
                e.path = name;
                e.scenario = to_string(scenario.tag);
                e.intensity_min = 0.0;
                e.intensity_max = 1.0;
                e.source_raw = fs::relative(raw_root / src.path, out_dir).string();
            }
        });

    io::save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
    return m;
}

} // namespace holo
