#include "holofocus/fft.hpp"

#include <cmath>

#include "holofocus/common.hpp"

namespace holo::fft {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::complex<double>* a, int n, bool inverse) {
    if (!is_power_of_two(n)) throw InvalidConfig("FFT length must be a power of two");
    // Bit-reversal permutation.
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * kPi / len * (inverse ? 1.0 : -1.0);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        double inv = 1.0 / n;
        for (int i = 0; i < n; ++i) a[i] *= inv;
    }
}

void fft2_inplace(std::vector<std::complex<double>>& a, int n, bool inverse) {
    if (static_cast<int>(a.size()) != n * n)
        throw ShapeMismatch("fft2 expects n*n values");
    for (int r = 0; r < n; ++r) fft_inplace(a.data() + static_cast<size_t>(r) * n, n, inverse);
    std::vector<std::complex<double>> col(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c) {
        for (int r = 0; r < n; ++r) col[static_cast<size_t>(r)] = a[static_cast<size_t>(r) * n + c];
        fft_inplace(col.data(), n, inverse);
        for (int r = 0; r < n; ++r) a[static_cast<size_t>(r) * n + c] = col[static_cast<size_t>(r)];
    }
}

} // namespace holo::fft
