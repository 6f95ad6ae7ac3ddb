#include <doctest.h>

#include <cmath>
#include <complex>

#include "holofocus/fft.hpp"
#include "holofocus/optics.hpp"

using namespace holo;

namespace {

constexpr double kPi = 3.14159265358979323846;

ComplexField random_field(const OpticalConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    ComplexField f;
    f.config = cfg;
    f.values.resize(static_cast<size_t>(cfg.grid_size) * cfg.grid_size);
    for (auto& v : f.values) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    return f;
}

double rel_l2_error(const ComplexField& a, const ComplexField& b) {
    double num = 0, den = 0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        num += std::norm(a.values[i] - b.values[i]);
        den += std::norm(b.values[i]);
    }
    return std::sqrt(num / den);
}

// quadratic-time DFT used as the FFT oracle
std::vector<std::complex<double>> dft_1d(const std::vector<std::complex<double>>& in,
                                         bool inverse) {
    const int n = static_cast<int>(in.size());
    std::vector<std::complex<double>> out(static_cast<size_t>(n));
    const double sign = inverse ? 1.0 : -1.0;
    for (int k = 0; k < n; ++k) {
        std::complex<double> acc = 0;
        for (int j = 0; j < n; ++j) {
            const double ang = sign * 2.0 * kPi * k * j / n;
            acc += in[static_cast<size_t>(j)] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[static_cast<size_t>(k)] = inverse ? acc / static_cast<double>(n) : acc;
    }
    return out;
}

} // namespace

TEST_CASE("optical config invariants") {
    OpticalConfig cfg;
    CHECK(cfg.optical_resolution_um() == doctest::Approx(6.6).epsilon(0.02));
    cfg.validate();

    OpticalConfig bad = cfg;
    bad.grid_size = 100;
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);
    bad = cfg;
    bad.wavelength_um = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);
}

TEST_CASE("fft matches the direct DFT") {
    Rng rng(7);
    std::vector<std::complex<double>> a(16);
    for (auto& v : a) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};

    auto expect = dft_1d(a, false);
    auto got = a;
    fft::fft_inplace(got.data(), 16, false);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(got[i].real() == doctest::Approx(expect[i].real()).epsilon(1e-12));
        CHECK(got[i].imag() == doctest::Approx(expect[i].imag()).epsilon(1e-12));
    }

    fft::fft_inplace(got.data(), 16, true);
    for (size_t i = 0; i < a.size(); ++i)
        CHECK(std::abs(got[i] - a[i]) < 1e-13);
}

TEST_CASE("target pattern: empty code is frame-only and decodes to empty") {
    TargetPattern t = generate_target({}, {}, 4, 64);
    auto [bx, by] = decode_target(t.amplitude);
    CHECK(bx.empty());
    CHECK(by.empty());
    // exactly two amplitude levels present
    for (double v : t.amplitude.pix) CHECK((v == 0.2 || v == 1.0));
}

TEST_CASE("target pattern: spec example round-trips") {
    TargetPattern t = generate_target({1, 0, 1}, {0, 1}, 4, 64);
    auto [bx, by] = decode_target(t.amplitude);
    CHECK(bx == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(by == std::vector<std::uint8_t>{0, 1});
}

TEST_CASE("target pattern: code too large") {
    std::vector<std::uint8_t> ones(8, 1);
    CHECK_THROWS_AS(generate_target(ones, {}, 9, 64), CodeTooLarge); // 8*9 > 64
}

TEST_CASE("target pattern: decode(encode(b)) == b over 100 random codes") {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::uint8_t> bx(static_cast<size_t>(rng.uniform_int(9)));
        std::vector<std::uint8_t> by(static_cast<size_t>(rng.uniform_int(9)));
        for (auto& b : bx) b = static_cast<std::uint8_t>(rng.uniform_int(2));
        for (auto& b : by) b = static_cast<std::uint8_t>(rng.uniform_int(2));
        const int cell = 2 + static_cast<int>(rng.uniform_int(5));
        TargetPattern t = generate_target(bx, by, cell, 128);
        auto [dx, dy] = decode_target(t.amplitude);
        REQUIRE(dx == bx);
        REQUIRE(dy == by);
    }
}

TEST_CASE("propagation: z = 0 returns the input") {
    OpticalConfig cfg;
    ComplexField f = random_field(cfg, 1);
    ComplexField g = angular_spectrum_propagate(f, 0.0);
    CHECK(rel_l2_error(g, f) < 1e-12);
}

TEST_CASE("propagation: conjugate kernels round-trip to 1e-10") {
    OpticalConfig cfg; // all grid frequencies propagate at this pitch/lambda
    for (double z : {1.0, 5.0, 10.0}) {
        ComplexField f = random_field(cfg, 17 + static_cast<std::uint64_t>(z));
        ComplexField fwd = angular_spectrum_propagate(f, z);
        ComplexField back = angular_spectrum_propagate(fwd, -z);
        CHECK(rel_l2_error(back, f) < 1e-10);
    }
}

TEST_CASE("propagation: plane wave needs only a global phase") {
    OpticalConfig cfg;
    ComplexField f;
    f.config = cfg;
    f.values.assign(static_cast<size_t>(cfg.grid_size) * cfg.grid_size, {1.0, 0.0});
    const double z = 10.0;
    ComplexField g = angular_spectrum_propagate(f, z);
    const std::complex<double> expect =
        std::exp(std::complex<double>(0.0, 2.0 * kPi * z / cfg.wavelength_um));
    for (const auto& v : g.values) CHECK(std::abs(v - expect) < 1e-10);
}

TEST_CASE("propagation: energy conserved without evanescent content") {
    OpticalConfig cfg;
    ComplexField f = random_field(cfg, 3);
    const double e0 = f.energy();
    const double e1 = angular_spectrum_propagate(f, 7.5).energy();
    CHECK(e1 / e0 == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("propagation: evanescent components are removed") {
    OpticalConfig cfg;
    cfg.wavelength_um = 3.0; // 1/lambda < grid Nyquist, so a cutoff exists
    ComplexField f = random_field(cfg, 4);
    const double e0 = f.energy();
    ComplexField g = angular_spectrum_propagate(f, 2.0);
    CHECK(g.energy() < e0); // white input always has out-of-band energy
    // band-limited content still round-trips
    ComplexField back = angular_spectrum_propagate(g, -2.0);
    ComplexField fwd2 = angular_spectrum_propagate(back, 2.0);
    CHECK(rel_l2_error(fwd2, g) < 1e-10);
}

TEST_CASE("record_hologram: deterministic and nonnegative") {
    OpticalConfig cfg;
    TargetPattern t = generate_target({1, 0, 1, 1}, {0, 1, 1}, 6, cfg.grid_size);

    Hologram a = record_hologram(t, 55.0, cfg, 12345, 0.0);
    Hologram b = record_hologram(t, 55.0, cfg, 12345, 0.0);
    CHECK(a.intensity.pix == b.intensity.pix); // bit-identical, noiseless

    Hologram c = record_hologram(t, 55.0, cfg, 999, 0.05);
    Hologram d = record_hologram(t, 55.0, cfg, 999, 0.05);
    CHECK(c.intensity.pix == d.intensity.pix); // bit-identical, same seed

    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const double z = 45.0 + rng.uniform(0.0, 20.0);
        Hologram h = record_hologram(t, z, cfg, rng.next_u64(), 0.05);
        CHECK(image_min(h.intensity) >= 0.0);
    }
}

TEST_CASE("record_hologram: one z_step apart means different fringes") {
    OpticalConfig cfg;
    TargetPattern t = generate_target({1, 0, 1, 1}, {0, 1, 1}, 6, cfg.grid_size);
    Hologram a = record_hologram(t, 55.0, cfg, 1, 0.0);
    Hologram b = record_hologram(t, 56.0, cfg, 1, 0.0);
    double mean_abs_diff = 0.0;
    for (size_t i = 0; i < a.intensity.size(); ++i)
        mean_abs_diff += std::abs(a.intensity.pix[i] - b.intensity.pix[i]);
    mean_abs_diff /= static_cast<double>(a.intensity.size());
    CHECK(mean_abs_diff > 0.0);
}

TEST_CASE("reconstruct_at: shape and zero-distance case") {
    OpticalConfig cfg;
    TargetPattern t = generate_target({1, 1, 0}, {1, 0}, 6, cfg.grid_size);
    Hologram h = record_hologram(t, 52.0, cfg, 3, 0.01);

    Image rec = reconstruct_at(h, 37.0);
    CHECK(rec.height == h.intensity.height);
    CHECK(rec.width == h.intensity.width);

    Image rec0 = reconstruct_at(h, 0.0);
    for (size_t i = 0; i < rec0.size(); ++i)
        CHECK(rec0.pix[i] ==
              doctest::Approx(h.intensity.pix[i] * h.intensity.pix[i]).epsilon(1e-9));
}

TEST_CASE("reconstruct_at: sharpest at the true distance") {
    OpticalConfig cfg;
    TargetPattern t = generate_target({1, 0, 1, 1, 0, 0, 1, 0}, {0, 1, 1, 0, 1, 0, 0, 1}, 6,
                                      cfg.grid_size);
    Hologram h = record_hologram(t, 55.0, cfg, 7, 0.0);
    auto sharpness = [&](double z) {
        Image rec = reconstruct_at(h, z);
        return image_variance(crop_roi(rec, RoiAnchor::center, cfg.grid_size / 2));
    };
    const double at_focus = sharpness(55.0);
    CHECK(at_focus > sharpness(52.0));
    CHECK(at_focus > sharpness(58.0));
}

TEST_CASE("dataset spec class mapping") {
    DatasetSpec spec;
    CHECK(spec.z_for_class(0) == doctest::Approx(50.0));
    CHECK(spec.z_for_class(9) == doctest::Approx(59.0));
    CHECK(spec.class_for_z(53.0) == 3);
    CHECK(spec.class_for_z(53.4) == 3);
    spec.validate();
}
