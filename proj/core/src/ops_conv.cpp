#include "gemm.hpp"

#include <cmath>

#include "gexse/error.hpp"
#include "gexse/ops.hpp"

namespace gexse {

using detail::Node;

namespace {

// cols[(c*K + j) * lout + t] = x[c, t + j - pad] (zero outside).
void im2col(const double* x, std::size_t cin, std::size_t len, std::size_t k, std::size_t pad, std::size_t lout,
            double* cols) {
    for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t j = 0; j < k; ++j) {
            double* row = cols + (c * k + j) * lout;
            for (std::size_t t = 0; t < lout; ++t) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
                row[t] = (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) ? x[c * len + src] : 0.0;
            }
        }
    }
}

void col2im_add(const double* cols, std::size_t cin, std::size_t len, std::size_t k, std::size_t pad,
                std::size_t lout, double* dx) {
    for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t j = 0; j < k; ++j) {
            const double* row = cols + (c * k + j) * lout;
            for (std::size_t t = 0; t < lout; ++t) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
                if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) dx[c * len + src] += row[t];
            }
        }
    }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t padding) {
    if (x.rank() != 3 || kernel.rank() != 3) {
        throw_shape("conv1d: expected x (B,C,L) and kernel (Cout,Cin,K), got " + shape_str(x.shape()) + " and " +
                    shape_str(kernel.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t cin = x.dim(1);
    const std::size_t len = x.dim(2);
    const std::size_t cout = kernel.dim(0);
    const std::size_t k = kernel.dim(2);
    if (kernel.dim(1) != cin) {
        throw_shape("conv1d: input has " + std::to_string(cin) + " channels, kernel expects " +
                    std::to_string(kernel.dim(1)));
    }
    if (bias.rank() != 1 || bias.dim(0) != cout) {
        throw_shape("conv1d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(cout) +
                    " output channels");
    }
    if (len + 2 * padding < k) throw_shape("conv1d: kernel longer than padded input");
    const std::size_t lout = len + 2 * padding - k + 1;
    const std::size_t ck = cin * k;

    const auto xv = x.data();
    const auto wv = kernel.data();
    const auto bv = bias.data();
    std::vector<double> out(batch * cout * lout);
    std::vector<double> cols(ck * lout);
    for (std::size_t b = 0; b < batch; ++b) {
        im2col(xv.data() + b * cin * len, cin, len, k, padding, lout, cols.data());
        double* y = out.data() + b * cout * lout;
        for (std::size_t o = 0; o < cout; ++o) std::fill_n(y + o * lout, lout, bv[o]);
        detail::gemm(false, false, static_cast<int>(cout), static_cast<int>(lout),
                    static_cast<int>(ck), 1.0, wv.data(), static_cast<int>(ck), cols.data(), static_cast<int>(lout),
                    1.0, y, static_cast<int>(lout));
    }

    return detail::make_result(
        Shape{batch, cout, lout}, std::move(out), {x.node(), kernel.node(), bias.node()},
        [batch, cin, len, cout, k, padding, lout, ck](Node& self) {
            Node& px = *self.parents[0];
            Node& pw = *self.parents[1];
            Node& pb = *self.parents[2];
            std::vector<double> cols(ck * lout);
            for (std::size_t b = 0; b < batch; ++b) {
                const double* dy = self.grad.data() + b * cout * lout;
                if (pw.requires_grad) {
                    im2col(px.value.data() + b * cin * len, cin, len, k, padding, lout, cols.data());
                    // dW += dY * cols^T
                    detail::gemm(false, true, static_cast<int>(cout),
                                static_cast<int>(ck), static_cast<int>(lout), 1.0, dy, static_cast<int>(lout),
                                cols.data(), static_cast<int>(lout), 1.0, pw.ensure_grad().data(),
                                static_cast<int>(ck));
                }
                if (px.requires_grad) {
                    // dcols = W^T * dY, scattered back onto x
                    detail::gemm(true, false, static_cast<int>(ck),
                                static_cast<int>(lout), static_cast<int>(cout), 1.0, pw.value.data(),
                                static_cast<int>(ck), dy, static_cast<int>(lout), 0.0, cols.data(),
                                static_cast<int>(lout));
                    col2im_add(cols.data(), cin, len, k, padding, lout, px.ensure_grad().data() + b * cin * len);
                }
                if (pb.requires_grad) {
                    auto& g = pb.ensure_grad();
                    for (std::size_t o = 0; o < cout; ++o) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < lout; ++t) acc += dy[o * lout + t];
                        g[o] += acc;
                    }
                }
            }
        });
}

Tensor batch_norm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, NormState& state, bool training) {
    if (x.rank() != 3) throw_shape("batch_norm1d: expected (B,C,L), got " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0);
    const std::size_t ch = x.dim(1);
    const std::size_t len = x.dim(2);
    if (gamma.shape() != Shape{ch} || beta.shape() != Shape{ch}) {
        throw_shape("batch_norm1d: affine parameters must have shape (" + std::to_string(ch) + ")");
    }
    if (state.running_mean.size() != ch || state.running_var.size() != ch) {
        throw_shape("batch_norm1d: running statistics sized for a different channel count");
    }
    const std::size_t count = batch * len;
    const auto xv = x.data();
    const auto gv = gamma.data();
    const auto bv = beta.data();

    std::vector<double> mean(ch);
    std::vector<double> inv_std(ch);
    if (training) {
        for (std::size_t c = 0; c < ch; ++c) {
            double m = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* row = xv.data() + (b * ch + c) * len;
                for (std::size_t t = 0; t < len; ++t) m += row[t];
            }
            m /= static_cast<double>(count);
            double v = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* row = xv.data() + (b * ch + c) * len;
                for (std::size_t t = 0; t < len; ++t) v += (row[t] - m) * (row[t] - m);
            }
            const double biased = v / static_cast<double>(count);
            const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : biased;
            mean[c] = m;
            inv_std[c] = 1.0 / std::sqrt(biased + kBatchNormEps);
            state.running_mean[c] = (1.0 - kBatchNormMomentum) * state.running_mean[c] + kBatchNormMomentum * m;
            state.running_var[c] = (1.0 - kBatchNormMomentum) * state.running_var[c] + kBatchNormMomentum * unbiased;
        }
    } else {
        for (std::size_t c = 0; c < ch; ++c) {
            mean[c] = state.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + kBatchNormEps);
        }
    }

    std::vector<double> xhat(x.numel());
    std::vector<double> out(x.numel());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (b * ch + c) * len;
            for (std::size_t t = 0; t < len; ++t) {
                const double h = (xv[base + t] - mean[c]) * inv_std[c];
                xhat[base + t] = h;
                out[base + t] = gv[c] * h + bv[c];
            }
        }
    }

    return detail::make_result(
        x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
        [batch, ch, len, count, training, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& self) {
            Node& px = *self.parents[0];
            Node& pg = *self.parents[1];
            Node& pb = *self.parents[2];
            const auto& dy = self.grad;
            for (std::size_t c = 0; c < ch; ++c) {
                double sum_dy = 0.0;
                double sum_dy_xhat = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t base = (b * ch + c) * len;
                    for (std::size_t t = 0; t < len; ++t) {
                        sum_dy += dy[base + t];
                        sum_dy_xhat += dy[base + t] * xhat[base + t];
                    }
                }
                if (pg.requires_grad) pg.ensure_grad()[c] += sum_dy_xhat;
                if (pb.requires_grad) pb.ensure_grad()[c] += sum_dy;
                if (!px.requires_grad) continue;
                auto& dx = px.ensure_grad();
                const double g = pg.value[c];
                if (training) {
                    const double n = static_cast<double>(count);
                    const double scale = g * inv_std[c] / n;
                    for (std::size_t b = 0; b < batch; ++b) {
                        const std::size_t base = (b * ch + c) * len;
                        for (std::size_t t = 0; t < len; ++t) {
                            dx[base + t] += scale * (n * dy[base + t] - sum_dy - xhat[base + t] * sum_dy_xhat);
                        }
                    }
                } else {
                    for (std::size_t b = 0; b < batch; ++b) {
                        const std::size_t base = (b * ch + c) * len;
                        for (std::size_t t = 0; t < len; ++t) dx[base + t] += dy[base + t] * g * inv_std[c];
                    }
                }
            }
        });
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 3) throw_shape("global_avg_pool: expected (B,C,L), got " + shape_str(x.shape()));
    const std::size_t rows = x.dim(0) * x.dim(1);
    const std::size_t len = x.dim(2);
    const auto xv = x.data();
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t t = 0; t < len; ++t) acc += xv[r * len + t];
        out[r] = acc / static_cast<double>(len);
    }
    return detail::make_result(Shape{x.dim(0), x.dim(1)}, std::move(out), {x.node()}, [rows, len](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        const double inv = 1.0 / static_cast<double>(len);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t t = 0; t < len; ++t) g[r * len + t] += self.grad[r] * inv;
        }
    });
}

}  // namespace gexse
