#include "gemm.hpp"

#include <cmath>
#include <numbers>

#include "gexse/error.hpp"
#include "gexse/ops.hpp"

namespace gexse {

using detail::Node;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw_shape(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return detail::make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return detail::make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    const auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
    return detail::make_result(a.shape(), std::move(out), {a.node()}, [s](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) total += v;
    return detail::make_result(Shape{1}, {total}, {a.node()}, [](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (double& v : g) v += self.grad[0];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw_shape("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return detail::make_result(std::move(shape), std::move(out), {a.node()}, [](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor relu(const Tensor& x) {
    const auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return detail::make_result(x.shape(), std::move(out), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        auto& g = p.ensure_grad();
        // Subgradient at exactly 0 is 0.
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (p.value[i] > 0.0) g[i] += self.grad[i];
        }
    });
}

Tensor gelu(const Tensor& x) {
    const auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * normal_cdf(xv[i]);
    return detail::make_result(x.shape(), std::move(out), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = p.value[i];
            g[i] += self.grad[i] * (normal_cdf(v) + v * normal_pdf(v));
        }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw_shape("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const auto m = static_cast<int>(a.dim(0));
    const auto k = static_cast<int>(a.dim(1));
    const auto n = static_cast<int>(b.dim(1));
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    detail::gemm(false, false, m, n, k, 1.0, a.data().data(), k, b.data().data(), n,
                0.0, out.data(), n);
    return detail::make_result(Shape{a.dim(0), b.dim(1)}, std::move(out), {a.node(), b.node()},
                               [m, k, n](Node& self) {
                                   Node& pa = *self.parents[0];
                                   Node& pb = *self.parents[1];
                                   if (pa.requires_grad) {
                                       // dA += dC * B^T
                                       detail::gemm(false, true, m, k, n, 1.0,
                                                   self.grad.data(), n, pb.value.data(), n, 1.0,
                                                   pa.ensure_grad().data(), k);
                                   }
                                   if (pb.requires_grad) {
                                       // dB += A^T * dC
                                       detail::gemm(true, false, k, n, m, 1.0,
                                                   pa.value.data(), k, self.grad.data(), n, 1.0,
                                                   pb.ensure_grad().data(), n);
                                   }
                               });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2 || x.shape().back() != w.dim(0)) {
        throw_shape("affine: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
    }
    if (b.rank() != 1 || b.dim(0) != w.dim(1)) {
        throw_shape("affine: bias " + shape_str(b.shape()) + " does not match weight " + shape_str(w.shape()));
    }
    const auto in = static_cast<int>(w.dim(0));
    const auto outw = static_cast<int>(w.dim(1));
    const auto rows = static_cast<int>(x.numel() / w.dim(0));
    std::vector<double> out(static_cast<std::size_t>(rows) * outw);
    const auto bv = b.data();
    for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < outw; ++j) out[static_cast<std::size_t>(r) * outw + j] = bv[j];
    }
    detail::gemm(false, false, rows, outw, in, 1.0, x.data().data(), in,
                w.data().data(), outw, 1.0, out.data(), outw);
    Shape shape = x.shape();
    shape.back() = w.dim(1);
    return detail::make_result(std::move(shape), std::move(out), {x.node(), w.node(), b.node()},
                               [rows, in, outw](Node& self) {
                                   Node& px = *self.parents[0];
                                   Node& pw = *self.parents[1];
                                   Node& pb = *self.parents[2];
                                   if (px.requires_grad) {
                                       detail::gemm(false, true, rows, in, outw, 1.0,
                                                   self.grad.data(), outw, pw.value.data(), outw, 1.0,
                                                   px.ensure_grad().data(), in);
                                   }
                                   if (pw.requires_grad) {
                                       detail::gemm(true, false, in, outw, rows, 1.0,
                                                   px.value.data(), in, self.grad.data(), outw, 1.0,
                                                   pw.ensure_grad().data(), outw);
                                   }
                                   if (pb.requires_grad) {
                                       auto& g = pb.ensure_grad();
                                       for (int r = 0; r < rows; ++r) {
                                           for (int j = 0; j < outw; ++j) {
                                               g[j] += self.grad[static_cast<std::size_t>(r) * outw + j];
                                           }
                                       }
                                   }
                               });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw_shape("concat_channels: no inputs");
    const Shape& first = parts.front().shape();
    if (first.size() < 2) throw_shape("concat_channels: inputs need rank >= 2");
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size() && s[0] == first[0];
        for (std::size_t d = 2; ok && d < s.size(); ++d) ok = s[d] == first[d];
        if (!ok) {
            throw_shape("concat_channels: " + shape_str(s) + " incompatible with " + shape_str(first));
        }
        total += s[1];
    }
    const std::size_t outer = first[0];
    std::size_t inner = 1;
    for (std::size_t d = 2; d < first.size(); ++d) inner *= first[d];

    std::vector<double> out(outer * total * inner);
    std::vector<std::size_t> widths;
    std::vector<std::shared_ptr<Node>> parents;
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t c = p.dim(1);
        const auto pv = p.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * c * inner), c * inner,
                        out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
        }
        offset += c;
        widths.push_back(c);
        parents.push_back(p.node());
    }
    Shape shape = first;
    shape[1] = total;
    return detail::make_result(std::move(shape), std::move(out), std::move(parents),
                               [outer, total, inner, widths](Node& self) {
                                   std::size_t off = 0;
                                   for (std::size_t i = 0; i < widths.size(); ++i) {
                                       Node& p = *self.parents[i];
                                       const std::size_t c = widths[i];
                                       if (p.requires_grad) {
                                           auto& g = p.ensure_grad();
                                           for (std::size_t o = 0; o < outer; ++o) {
                                               const double* src = self.grad.data() + (o * total + off) * inner;
                                               double* dst = g.data() + o * c * inner;
                                               for (std::size_t j = 0; j < c * inner; ++j) dst[j] += src[j];
                                           }
                                       }
                                       off += c;
                                   }
                               });
}

std::vector<Tensor> split_channels(const Tensor& x, const std::vector<std::size_t>& sizes) {
    const Shape& s = x.shape();
    if (s.size() < 2) throw_shape("split_channels: input needs rank >= 2");
    std::size_t total = 0;
    for (std::size_t c : sizes) {
        if (c == 0) throw_shape("split_channels: zero-width part");
        total += c;
    }
    if (total != s[1]) {
        throw_shape("split_channels: sizes sum to " + std::to_string(total) + " but channel dim is " +
                    std::to_string(s[1]));
    }
    const std::size_t outer = s[0];
    std::size_t inner = 1;
    for (std::size_t d = 2; d < s.size(); ++d) inner *= s[d];
    const auto xv = x.data();

    std::vector<Tensor> parts;
    std::size_t off = 0;
    for (std::size_t c : sizes) {
        std::vector<double> out(outer * c * inner);
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * total + off) * inner), c * inner,
                        out.begin() + static_cast<std::ptrdiff_t>(o * c * inner));
        }
        Shape shape = s;
        shape[1] = c;
        parts.push_back(detail::make_result(std::move(shape), std::move(out), {x.node()},
                                            [outer, total, inner, c, off](Node& self) {
                                                auto& g = self.parents[0]->ensure_grad();
                                                for (std::size_t o = 0; o < outer; ++o) {
                                                    const double* src = self.grad.data() + o * c * inner;
                                                    double* dst = g.data() + (o * total + off) * inner;
                                                    for (std::size_t j = 0; j < c * inner; ++j) dst[j] += src[j];
                                                }
                                            }));
        off += c;
    }
    return parts;
}

}  // namespace gexse
