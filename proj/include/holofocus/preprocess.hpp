#pragma once

#include <string>

#include "holofocus/dataset.hpp"
#include "holofocus/image.hpp"
#include "holofocus/io/manifest.hpp"

namespace holo {

enum class ScenarioTag { SFO, NSO, SFN, NSN };

const char* to_string(ScenarioTag t);
ScenarioTag scenario_tag_from_string(const std::string& s);

// S* applies the Sobel gradient magnitude, *N works on the negated image.
bool scenario_uses_sobel(ScenarioTag t);
bool scenario_uses_negative(ScenarioTag t);

struct Scenario {
    ScenarioTag tag = ScenarioTag::NSO;
    RoiAnchor roi_anchor = RoiAnchor::center;
    int roi_size = 64;

    std::string name() const; // e.g. "NSO_center64"
};

// Per-image pipeline: normalize to [0,1], negate?, sobel?, crop, area
// downsample to out_size. Negation runs before the Sobel filter.
Image apply_scenario(const Image& raw_intensity, const Scenario& scenario, int out_size,
                     RoiAnchor anchor_override);
Image apply_scenario(const Image& raw_intensity, const Scenario& scenario, int out_size);

// Builds a scenario dataset from a raw manifest. Output entries keep the
// labels and z values of their sources and record the raw path so a
// different ROI anchor can be re-derived later.
io::DatasetManifest make_scenario_dataset(const io::DatasetManifest& raw, const Scenario& scenario,
                                          int out_size, const std::string& out_dir);

} // namespace holo
