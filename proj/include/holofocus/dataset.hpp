#pragma once

#include <string>

#include "holofocus/io/manifest.hpp"
#include "holofocus/optics.hpp"

namespace holo {

// Records per_class holograms at each class distance into out_dir/images/
// as 16-bit PNGs and writes out_dir/manifest.json. Each image's noise
// stream is seeded independently from (spec.seed, class, index), so
// generation is deterministic and may be parallelized per hologram.
io::DatasetManifest build_raw_dataset(const TargetPattern& target, const OpticalConfig& optics,
                                      const DatasetSpec& spec, const std::string& out_dir);

// Loads one entry back as a physical-intensity image.
Image load_raw_intensity(const io::DatasetManifest& m, const io::ManifestEntry& e);

} // namespace holo
