#include "holofocus/optics.hpp"

#include <algorithm>
#include <cmath>

#include "holofocus/common.hpp"
#include "holofocus/fft.hpp"

namespace holo {

namespace {
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

// Code block layout, in cell units. Row 0 and column 0 form the frame;
// odd rows/columns around the strips are gaps so every strip run terminates.
constexpr int kPresenceRowX = 2; // solid run of length |bits_x|
constexpr int kValueRowX = 4;    // dark cell where bit == 1
constexpr int kPresenceColY = 2; // solid run of length |bits_y|, from row 6
constexpr int kValueColY = 4;
constexpr int kFirstRowY = 6;

int block_cols(int nx) { return std::max(nx + 3, 6); }
int block_rows(int ny) { return ny + 7; }
} // namespace

void OpticalConfig::validate() const {
    if (wavelength_um <= 0) throw InvalidConfig("wavelength must be positive");
    if (pixel_pitch_um <= 0) throw InvalidConfig("pixel pitch must be positive");
    if (numerical_aperture <= 0) throw InvalidConfig("numerical aperture must be positive");
    if (!fft::is_power_of_two(grid_size))
        throw InvalidConfig("grid_size must be a power of two, got " + std::to_string(grid_size));
}

double ComplexField::energy() const {
    double e = 0.0;
    for (const auto& v : values) e += std::norm(v);
    return e;
}

void DatasetSpec::validate() const {
    if (n_classes <= 0) throw InvalidConfig("n_classes must be positive");
    if (per_class <= 0) throw InvalidConfig("per_class must be positive");
    if (z_step_um <= 0) throw InvalidConfig("z_step must be positive");
    if (noise_sigma < 0) throw InvalidConfig("noise_sigma must be nonnegative");
}

int DatasetSpec::class_for_z(double z) const {
    return static_cast<int>(std::lround((z - z0_um) / z_step_um));
}

TargetPattern generate_target(const std::vector<std::uint8_t>& bits_x,
                              const std::vector<std::uint8_t>& bits_y, int cell_px, int grid,
                              double amp_low, double amp_high) {
    if (cell_px < 2) throw InvalidConfig("cell_px must be at least 2");
    if (!(amp_low < amp_high)) throw InvalidConfig("amp_low must be below amp_high");
    const int nx = static_cast<int>(bits_x.size());
    const int ny = static_cast<int>(bits_y.size());
    const int nc = block_cols(nx);
    const int nr = block_rows(ny);
    if (nc * cell_px > grid || nr * cell_px > grid)
        throw CodeTooLarge("code block " + std::to_string(nr) + "x" + std::to_string(nc) +
                           " cells at " + std::to_string(cell_px) + " px/cell exceeds grid " +
                           std::to_string(grid));

    TargetPattern t;
    t.bits_x = bits_x;
    t.bits_y = bits_y;
    t.cell_px = cell_px;
    t.amplitude = Image(grid, grid, amp_high);

    const int r0 = (grid - nr * cell_px) / 2;
    const int c0 = (grid - nc * cell_px) / 2;
    auto mark = [&](int cr, int cc) {
        for (int r = 0; r < cell_px; ++r)
            for (int c = 0; c < cell_px; ++c)
                t.amplitude.at(r0 + cr * cell_px + r, c0 + cc * cell_px + c) = amp_low;
    };

    for (int c = 0; c < nc; ++c) mark(0, c);
    for (int r = 0; r < nr; ++r) mark(r, 0);
    for (int j = 0; j < nx; ++j) {
        mark(kPresenceRowX, 2 + j);
        if (bits_x[static_cast<size_t>(j)]) mark(kValueRowX, 2 + j);
    }
    for (int j = 0; j < ny; ++j) {
        mark(kFirstRowY + j, kPresenceColY);
        if (bits_y[static_cast<size_t>(j)]) mark(kFirstRowY + j, kValueColY);
    }
    return t;
}

std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> decode_target(const Image& amp) {
    const double lo = image_min(amp), hi = image_max(amp);
    if (!(hi > lo)) throw OutOfRange("decode_target: constant image carries no code");
    const double mid = 0.5 * (lo + hi);
    auto dark = [&](int r, int c) { return amp.at(r, c) < mid; };

    int r0 = amp.height, c0 = amp.width;
    for (int r = 0; r < amp.height; ++r)
        for (int c = 0; c < amp.width; ++c)
            if (dark(r, c)) {
                r0 = std::min(r0, r);
                c0 = std::min(c0, c);
            }
    if (r0 == amp.height) throw OutOfRange("decode_target: no dark pixels found");

    // Cell size from the frame corner: the diagonal leaves cell (0,0) at the
    // first gap cell (1,1).
    int cell = 1;
    while (r0 + cell < amp.height && c0 + cell < amp.width && dark(r0 + cell, c0 + cell)) ++cell;

    auto cell_dark = [&](int cr, int cc) {
        int r = r0 + cr * cell + cell / 2;
        int c = c0 + cc * cell + cell / 2;
        if (r >= amp.height || c >= amp.width) return false;
        return dark(r, c);
    };

    std::vector<std::uint8_t> bx, by;
    for (int j = 0; cell_dark(kPresenceRowX, 2 + j); ++j)
        bx.push_back(cell_dark(kValueRowX, 2 + j) ? 1 : 0);
    for (int j = 0; cell_dark(kFirstRowY + j, kPresenceColY); ++j)
        by.push_back(cell_dark(kFirstRowY + j, kValueColY) ? 1 : 0);
    return {bx, by};
}

ComplexField field_from_amplitude(const Image& amplitude, const OpticalConfig& config) {
    config.validate();
    if (amplitude.height != config.grid_size || amplitude.width != config.grid_size)
        throw ShapeMismatch("amplitude shape does not match grid_size");
    ComplexField f;
    f.config = config;
    f.values.resize(amplitude.size());
    for (size_t i = 0; i < amplitude.size(); ++i) f.values[i] = amplitude.pix[i];
    return f;
}

ComplexField field_from_intensity(const Image& intensity, const OpticalConfig& config) {
    return field_from_amplitude(intensity, config);
}

ComplexField angular_spectrum_propagate(const ComplexField& field, double z_um) {
    if (!std::isfinite(z_um)) throw InvalidConfig("propagation distance must be finite");
    const int n = field.config.grid_size;
    if (static_cast<int>(field.values.size()) != n * n)
        throw ShapeMismatch("field size does not match grid");
    if (z_um == 0.0) return field;

    ComplexField out = field;
    fft::fft2_inplace(out.values, n, false);

    const double lambda = field.config.wavelength_um;
    const double df = 1.0 / (n * field.config.pixel_pitch_um); // cycles / um
    const double inv_l2 = 1.0 / (lambda * lambda);

    // FFT index k maps to frequency k*df for k < n/2 and (k-n)*df above.
    std::vector<double> freq(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) freq[static_cast<size_t>(k)] = (k < n - k ? k : k - n) * df;

    for (int r = 0; r < n; ++r) {
        const double fy2 = freq[static_cast<size_t>(r)] * freq[static_cast<size_t>(r)];
        for (int c = 0; c < n; ++c) {
            const double f2 = fy2 + freq[static_cast<size_t>(c)] * freq[static_cast<size_t>(c)];
            const double arg = inv_l2 - f2;
            std::complex<double>& v = out.values[static_cast<size_t>(r) * n + c];
            if (arg <= 0.0) {
                v = 0.0; // evanescent
            } else {
                const double phase = kTwoPi * z_um * std::sqrt(arg);
                v *= std::complex<double>(std::cos(phase), std::sin(phase));
            }
        }
    }
    fft::fft2_inplace(out.values, n, true);
    return out;
}

Hologram record_hologram(const TargetPattern& target, double z_um, const OpticalConfig& config,
                         std::uint64_t noise_seed, double noise_sigma) {
    if (!std::isfinite(z_um)) throw InvalidConfig("recording distance must be finite");
    ComplexField object = field_from_amplitude(target.amplitude, config);
    ComplexField at_sensor = angular_spectrum_propagate(object, z_um);

    Hologram h;
    h.config = config;
    h.z_true_um = z_um;
    h.intensity = Image(config.grid_size, config.grid_size);
    for (size_t i = 0; i < at_sensor.values.size(); ++i) {
        // unit on-axis reference wave
        h.intensity.pix[i] = std::norm(at_sensor.values[i] + std::complex<double>(1.0, 0.0));
    }

    if (noise_sigma > 0.0) {
        const double range = image_max(h.intensity) - image_min(h.intensity);
        Rng rng(noise_seed);
        const double sigma = noise_sigma * range;
        for (double& v : h.intensity.pix) v = std::max(0.0, v + sigma * rng.normal());
    }
    return h;
}

Image reconstruct_at(const Hologram& holo, double z_um) {
    ComplexField f = field_from_intensity(holo.intensity, holo.config);
    ComplexField back = angular_spectrum_propagate(f, -z_um);
    Image out(holo.config.grid_size, holo.config.grid_size);
    for (size_t i = 0; i < back.values.size(); ++i) out.pix[i] = std::norm(back.values[i]);
    return out;
}

} // namespace holo
