#include "gexse/fft.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <unordered_map>
#include <vector>

#include "gexse/error.hpp"

namespace gexse::fft {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

struct Radix2Plan {
    std::size_t n = 0;
    std::vector<std::size_t> bitrev;
    std::vector<cplx> twiddle;  // exp(-2 pi i k / n), k < n/2

    explicit Radix2Plan(std::size_t size) : n(size), bitrev(size), twiddle(size / 2) {
        std::size_t bits = 0;
        while ((std::size_t{1} << bits) < n) ++bits;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < bits; ++b) {
                if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
            }
            bitrev[i] = r;
        }
        for (std::size_t k = 0; k < n / 2; ++k) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
            twiddle[k] = {std::cos(ang), std::sin(ang)};
        }
    }

    void run(std::span<cplx> a, bool inverse) const {
        for (std::size_t i = 0; i < n; ++i) {
            if (i < bitrev[i]) std::swap(a[i], a[bitrev[i]]);
        }
        for (std::size_t len = 2; len <= n; len <<= 1) {
            const std::size_t half = len / 2;
            const std::size_t step = n / len;
            for (std::size_t start = 0; start < n; start += len) {
                for (std::size_t j = 0; j < half; ++j) {
                    cplx w = twiddle[j * step];
                    if (inverse) w = std::conj(w);
                    const cplx u = a[start + j];
                    const cplx v = a[start + j + half] * w;
                    a[start + j] = u + v;
                    a[start + j + half] = u - v;
                }
            }
        }
    }
};

struct BluesteinPlan {
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<cplx> chirp;        // exp(-i pi k^2 / n)
    std::vector<cplx> kernel_fft;          // FFT of conj(chirp), wrapped to length m
    std::vector<cplx> inverse_kernel_fft;  // FFT of chirp, wrapped to length m
    const Radix2Plan* inner = nullptr;

    void run(std::span<cplx> a, bool inverse) const {
        std::vector<cplx> buf(m, cplx{0.0, 0.0});
        for (std::size_t k = 0; k < n; ++k) {
            const cplx c = inverse ? std::conj(chirp[k]) : chirp[k];
            buf[k] = a[k] * c;
        }
        inner->run(buf, false);
        for (std::size_t k = 0; k < m; ++k) {
            buf[k] *= inverse ? inverse_kernel_fft[k] : kernel_fft[k];
        }
        inner->run(buf, true);
        const double scale = 1.0 / static_cast<double>(m);
        for (std::size_t k = 0; k < n; ++k) {
            const cplx c = inverse ? std::conj(chirp[k]) : chirp[k];
            a[k] = buf[k] * scale * c;
        }
    }
};

class PlanCache {
public:
    const Radix2Plan& radix2(std::size_t n) {
        auto it = radix2_.find(n);
        if (it == radix2_.end()) it = radix2_.emplace(n, std::make_unique<Radix2Plan>(n)).first;
        return *it->second;
    }

    const BluesteinPlan& bluestein(std::size_t n) {
        auto it = bluestein_.find(n);
        if (it != bluestein_.end()) return *it->second;
        auto plan = std::make_unique<BluesteinPlan>();
        plan->n = n;
        plan->m = next_pow2(2 * n - 1);
        plan->inner = &radix2(plan->m);
        plan->chirp.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            // k^2 mod 2n keeps the phase argument small and exact.
            const std::size_t k2 = (k * k) % (2 * n);
            const double ang = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
            plan->chirp[k] = {std::cos(ang), std::sin(ang)};
        }
        std::vector<cplx> b(plan->m, cplx{0.0, 0.0});
        b[0] = std::conj(plan->chirp[0]);
        for (std::size_t k = 1; k < n; ++k) {
            b[k] = std::conj(plan->chirp[k]);
            b[plan->m - k] = std::conj(plan->chirp[k]);
        }
        std::vector<cplx> bc(b.size());
        for (std::size_t k = 0; k < b.size(); ++k) bc[k] = std::conj(b[k]);
        plan->inner->run(b, false);
        plan->inner->run(bc, false);
        plan->kernel_fft = std::move(b);
        plan->inverse_kernel_fft = std::move(bc);
        return *bluestein_.emplace(n, std::move(plan)).first->second;
    }

private:
    std::unordered_map<std::size_t, std::unique_ptr<Radix2Plan>> radix2_;
    std::unordered_map<std::size_t, std::unique_ptr<BluesteinPlan>> bluestein_;
};

PlanCache& plans() {
    thread_local PlanCache cache;
    return cache;
}

}  // namespace

void transform(std::span<cplx> data, bool inverse) {
    const std::size_t n = data.size();
    if (n == 0) throw_shape("FFT of an empty sequence");
    if (n == 1) return;
    if (is_pow2(n)) {
        plans().radix2(n).run(data, inverse);
    } else {
        plans().bluestein(n).run(data, inverse);
    }
}

void rfft(std::span<const double> x, std::span<cplx> out) {
    const std::size_t n = x.size();
    if (out.size() != n / 2 + 1) throw_shape("rfft output must hold n/2+1 bins");
    std::vector<cplx> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = {x[i], 0.0};
    transform(buf, false);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = buf[k];
}

void irfft(std::span<const cplx> spectrum, std::span<double> out) {
    const std::size_t n = out.size();
    if (spectrum.size() != n / 2 + 1) throw_shape("irfft spectrum must hold n/2+1 bins");
    std::vector<cplx> buf(n);
    buf[0] = {spectrum[0].real(), 0.0};
    for (std::size_t k = 1; k < spectrum.size(); ++k) {
        if (n % 2 == 0 && k == n / 2) {
            buf[k] = {spectrum[k].real(), 0.0};
        } else {
            buf[k] = spectrum[k];
            buf[n - k] = std::conj(spectrum[k]);
        }
    }
    transform(buf, true);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real() * scale;
}

}  // namespace gexse::fft
