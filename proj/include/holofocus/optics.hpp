#pragma once

#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

#include "holofocus/image.hpp"

namespace holo {

// Wavelength and pitch are in micrometers; the grid is square.
struct OpticalConfig {
    double wavelength_um = 0.6;
    double pixel_pitch_um = 1.0;
    int grid_size = 128;
    double numerical_aperture = 0.3;

    // r = lambda / NA^2
    double optical_resolution_um() const {
        return wavelength_um / (numerical_aperture * numerical_aperture);
    }

    void validate() const;
};

// Sampled scalar wavefield on the config grid.
struct ComplexField {
    OpticalConfig config;
    std::vector<std::complex<double>> values; // row-major grid_size^2

    int size() const { return config.grid_size; }
    std::complex<double>& at(int r, int c) {
        return values[static_cast<size_t>(r) * config.grid_size + c];
    }
    std::complex<double> at(int r, int c) const {
        return values[static_cast<size_t>(r) * config.grid_size + c];
    }
    double energy() const;
};

// Binary-coded amplitude mask. The code block is a two-level pattern
// (amp_low marks on an amp_high background) carrying a frame marker plus
// length and value strips for the X and Y bit sequences.
struct TargetPattern {
    std::vector<std::uint8_t> bits_x;
    std::vector<std::uint8_t> bits_y;
    int cell_px = 0;
    Image amplitude;
};

struct Hologram {
    Image intensity;
    double z_true_um = 0.0;
    int class_label = -1;
    OpticalConfig config;
};

// Class c sits at distance z0 + c * z_step; per_class recordings per class
// differ only by their noise stream.
struct DatasetSpec {
    double z0_um = 50.0;
    double z_step_um = 1.0;
    int n_classes = 10;
    int per_class = 60;
    double noise_sigma = 0.01;
    std::uint64_t seed = 0;

    void validate() const;
    double z_for_class(int c) const { return z0_um + c * z_step_um; }
    int class_for_z(double z) const;
};

TargetPattern generate_target(const std::vector<std::uint8_t>& bits_x,
                              const std::vector<std::uint8_t>& bits_y, int cell_px, int grid,
                              double amp_low = 0.2, double amp_high = 1.0);

// Inverse of generate_target on the exact amplitude mask. Locates the code
// block and cell size itself; throws OutOfRange if no block is found.
std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> decode_target(const Image& amplitude);

// amplitude mask illuminated by a unit on-axis plane wave
ComplexField field_from_amplitude(const Image& amplitude, const OpticalConfig& config);

ComplexField field_from_intensity(const Image& intensity, const OpticalConfig& config);

// Band-limited angular spectrum propagation over distance z (micrometers,
// sign gives direction). Frequencies beyond 1/lambda are evanescent and
// receive zero transmission.
ComplexField angular_spectrum_propagate(const ComplexField& field, double z_um);

// Inline recording: I = |P_z(target) + R|^2 with a unit on-axis plane
// reference wave, then optional additive Gaussian noise (sigma is a fraction
// of the clean dynamic range), clamped at 0.
Hologram record_hologram(const TargetPattern& target, double z_um, const OpticalConfig& config,
                         std::uint64_t noise_seed, double noise_sigma = 0.01);

// Back-propagate the hologram intensity (taken as a real field) by -z and
// return the modulus-squared image.
Image reconstruct_at(const Hologram& holo, double z_um);

} // namespace holo
