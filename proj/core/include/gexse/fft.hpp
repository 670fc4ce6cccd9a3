#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace gexse::fft {

using cplx = std::complex<double>;

/// In-place unnormalized DFT of any length >= 1.
///
/// Forward uses exp(-2*pi*i*k*t/n); inverse uses the conjugate kernel and
/// does not divide by n. Power-of-two lengths run iterative radix-2;
/// everything else goes through Bluestein's chirp-z on a padded radix-2 plan.
/// Plans (twiddles, chirps) are cached per thread.
void transform(std::span<cplx> data, bool inverse);

/// Half spectrum of a real signal: out.size() == x.size()/2 + 1.
void rfft(std::span<const double> x, std::span<cplx> out);

/// Real signal of length `out.size()` from its half spectrum, scaled by 1/n.
/// Imaginary parts of the DC bin (and the Nyquist bin for even n) are ignored.
void irfft(std::span<const cplx> spectrum, std::span<double> out);

/// Hermitian multiplicity of bin k in a length-n half spectrum (1 or 2).
inline double hermitian_weight(std::size_t k, std::size_t n) {
    if (k == 0) return 1.0;
    if (n % 2 == 0 && k == n / 2) return 1.0;
    return 2.0;
}

}  // namespace gexse::fft
