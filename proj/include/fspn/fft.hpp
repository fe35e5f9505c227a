#pragma once

#include <complex>
#include <vector>

namespace fspn {

// In-place iterative radix-2 FFT. Length must be a power of two.
// The inverse transform divides by n.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse = false);

bool is_power_of_two(size_t n);

}  // namespace fspn
