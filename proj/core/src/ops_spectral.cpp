#include <vector>

#include "gexse/error.hpp"
#include "gexse/fft.hpp"
#include "gexse/ops.hpp"

namespace gexse {

using detail::Node;
using fft::cplx;

// Forward: X_k = sum_t x_t e^{-2 pi i k t / n}, k = 0..n/2.
// For a cotangent G_k = gR_k + i gI_k on the half spectrum the input
// gradient is dx_t = Re sum_k G_k e^{+2 pi i k t / n}, i.e. an unnormalized
// inverse transform of G zero-padded to length n (no Hermitian completion).
ComplexSpectrum real_fft(const Tensor& x) {
    const Shape& s = x.shape();
    const std::size_t n = s.back();
    if (n < 2) throw_shape("real_fft: last dimension must be >= 2, got " + shape_str(s));
    const std::size_t bins = n / 2 + 1;
    const std::size_t rows = x.numel() / n;
    const auto xv = x.data();

    std::vector<double> re(rows * bins);
    std::vector<double> im(rows * bins);
    std::vector<cplx> spec(bins);
    for (std::size_t r = 0; r < rows; ++r) {
        fft::rfft(xv.subspan(r * n, n), spec);
        for (std::size_t k = 0; k < bins; ++k) {
            re[r * bins + k] = spec[k].real();
            im[r * bins + k] = spec[k].imag();
        }
    }

    Shape out_shape = s;
    out_shape.back() = bins;

    auto make_part = [&](std::vector<double> values, bool imaginary) {
        return detail::make_result(out_shape, std::move(values), {x.node()}, [n, bins, rows, imaginary](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            std::vector<cplx> buf(n);
            for (std::size_t r = 0; r < rows; ++r) {
                std::fill(buf.begin(), buf.end(), cplx{0.0, 0.0});
                for (std::size_t k = 0; k < bins; ++k) {
                    const double gk = self.grad[r * bins + k];
                    buf[k] = imaginary ? cplx{0.0, gk} : cplx{gk, 0.0};
                }
                fft::transform(buf, true);
                for (std::size_t t = 0; t < n; ++t) g[r * n + t] += buf[t].real();
            }
        });
    };

    ComplexSpectrum out;
    out.real = make_part(std::move(re), false);
    out.imag = make_part(std::move(im), true);
    out.original_length = n;
    return out;
}

// Forward: x_t = (1/n) sum_k w_k (R_k cos(2 pi k t/n) - I_k sin(2 pi k t/n)),
// w_k the Hermitian multiplicity. Its adjoint for cotangent g is
// dR_k = (w_k/n) Re FFT(g)_k and dI_k = (w_k/n) Im FFT(g)_k, except the
// imaginary parts of DC (and Nyquist for even n) which never reach the output.
Tensor inverse_real_fft(const ComplexSpectrum& s) {
    const std::size_t n = s.original_length;
    if (n < 2) throw_shape("inverse_real_fft: original length must be >= 2");
    if (s.real.shape() != s.imag.shape()) {
        throw_shape("inverse_real_fft: real " + shape_str(s.real.shape()) + " and imag " +
                    shape_str(s.imag.shape()) + " differ");
    }
    const std::size_t bins = n / 2 + 1;
    if (s.real.shape().back() != bins) {
        throw_shape("inverse_real_fft: spectrum " + shape_str(s.real.shape()) + " inconsistent with length " +
                    std::to_string(n));
    }
    const std::size_t rows = s.real.numel() / bins;
    const auto rv = s.real.data();
    const auto iv = s.imag.data();

    std::vector<double> out(rows * n);
    std::vector<cplx> spec(bins);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < bins; ++k) spec[k] = {rv[r * bins + k], iv[r * bins + k]};
        fft::irfft(spec, std::span<double>(out).subspan(r * n, n));
    }

    Shape out_shape = s.real.shape();
    out_shape.back() = n;
    return detail::make_result(std::move(out_shape), std::move(out), {s.real.node(), s.imag.node()},
                               [n, bins, rows](Node& self) {
                                   Node& pr = *self.parents[0];
                                   Node& pi = *self.parents[1];
                                   std::vector<cplx> spec(bins);
                                   const double inv_n = 1.0 / static_cast<double>(n);
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       fft::rfft(std::span<const double>(self.grad).subspan(r * n, n), spec);
                                       for (std::size_t k = 0; k < bins; ++k) {
                                           const double w = fft::hermitian_weight(k, n) * inv_n;
                                           if (pr.requires_grad) pr.ensure_grad()[r * bins + k] += w * spec[k].real();
                                           if (pi.requires_grad) {
                                               const bool dead = k == 0 || (n % 2 == 0 && k == n / 2);
                                               if (!dead) pi.ensure_grad()[r * bins + k] += w * spec[k].imag();
                                           }
                                       }
                                   }
                               });
}

}  // namespace gexse
