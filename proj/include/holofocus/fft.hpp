#pragma once

#include <complex>
#include <vector>

namespace holo::fft {

bool is_power_of_two(int n);

// In-place radix-2 FFT of length n (power of two). Forward transform is
// unscaled; the inverse applies the 1/n factor.
void fft_inplace(std::complex<double>* a, int n, bool inverse);

// Row-column 2-D transform of an n x n row-major array.
void fft2_inplace(std::vector<std::complex<double>>& a, int n, bool inverse);

} // namespace holo::fft
