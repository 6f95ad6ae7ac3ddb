#include "holofocus/dataset.hpp"

#include <cstdio>
#include <filesystem>

#include "holofocus/common.hpp"
#include "holofocus/io/png_io.hpp"

namespace holo {

namespace fs = std::filesystem;

io::DatasetManifest build_raw_dataset(const TargetPattern& target, const OpticalConfig& optics,
                                      const DatasetSpec& spec, const std::string& out_dir) {
    optics.validate();
    spec.validate();

    fs::create_directories(fs::path(out_dir) / "images");

    io::DatasetManifest m;
    m.optics = optics;
    m.dataset = spec;
    m.scenario = "RAW";
    m.roi_anchor = "none";
    m.image_size = optics.grid_size;
    m.root_dir = out_dir;
    m.entries.resize(static_cast<size_t>(spec.n_classes) * spec.per_class);

    parallel_for(static_cast<std::int64_t>(m.entries.size()),
                 [&](std::int64_t begin, std::int64_t end) {
                     for (std::int64_t i = begin; i < end; ++i) {
                         const int cls = static_cast<int>(i) / spec.per_class;
                         const int idx = static_cast<int>(i) % spec.per_class;
                         const double z = spec.z_for_class(cls);
                         const std::uint64_t noise_seed =
                             seed_stream(spec.seed, "holo", static_cast<std::uint64_t>(cls),
                                         static_cast<std::uint64_t>(idx));
                         Hologram h =
                             record_hologram(target, z, optics, noise_seed, spec.noise_sigma);

                         char name[64];
                         std::snprintf(name, sizeof(name), "images/c%02d_i%04d.png", cls, idx);
                         auto [lo, hi] =
                             io::save_intensity_png((fs::path(out_dir) / name).string(), h.intensity);

                         io::ManifestEntry& e = m.entries[static_cast<size_t>(i)];
                         e.path = name;
                         e.z_true_um = z;
                         e.class_label = cls;
                         e.scenario = "RAW";
                         e.seed = noise_seed;
                         e.intensity_min = lo;
                         e.intensity_max = hi;
                     }
                 });

    io::save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
    return m;
}

Image load_raw_intensity(const io::DatasetManifest& m, const io::ManifestEntry& e) {
    return io::load_intensity_png(m.image_path(e), e.intensity_min, e.intensity_max);
}

} // namespace holo
