#include <algorithm>
#include <cmath>

#include "gexse/error.hpp"
#include "gexse/ops.hpp"

namespace gexse {

using detail::Node;

std::vector<double> softmax_rows(std::span<const double> logits, std::size_t rows, std::size_t cols) {
    std::vector<double> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = logits.data() + r * cols;
        const double mx = *std::max_element(z, z + cols);
        double denom = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            out[r * cols + j] = std::exp(z[j] - mx);
            denom += out[r * cols + j];
        }
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] /= denom;
    }
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot) {
    if (logits.rank() != 2 || logits.shape() != one_hot.shape()) {
        throw_shape("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " and targets " +
                    shape_str(one_hot.shape()) + " must be matching (B,k)");
    }
    const std::size_t batch = logits.dim(0);
    const std::size_t k = logits.dim(1);
    if (k < 2) throw_shape("softmax_cross_entropy: need at least 2 classes");
    const auto z = logits.data();
    const auto y = one_hot.data();

    double loss = 0.0;
    std::vector<double> target_mass(batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* zr = z.data() + b * k;
        const double mx = *std::max_element(zr, zr + k);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(zr[j] - mx);
        const double log_denom = std::log(denom) + mx;
        for (std::size_t j = 0; j < k; ++j) {
            const double yj = y[b * k + j];
            if (yj != 0.0) loss -= yj * (zr[j] - log_denom);
            target_mass[b] += yj;
        }
    }
    loss /= static_cast<double>(batch);

    std::vector<double> probs = softmax_rows(z, batch, k);
    std::vector<double> targets(y.begin(), y.end());
    return detail::make_result(
        Shape{1}, {loss}, {logits.node()},
        [batch, k, probs = std::move(probs), targets = std::move(targets),
         target_mass = std::move(target_mass)](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            const double scale = self.grad[0] / static_cast<double>(batch);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t j = 0; j < k; ++j) {
                    const std::size_t i = b * k + j;
                    g[i] += scale * (probs[i] * target_mass[b] - targets[i]);
                }
            }
        });
}

Tensor mse(const Tensor& p, const Tensor& q) {
    if (p.shape() != q.shape()) {
        throw_shape("mse: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(q.shape()));
    }
    const auto pv = p.data();
    const auto qv = q.data();
    const std::size_t n = pv.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += (pv[i] - qv[i]) * (pv[i] - qv[i]);
    return detail::make_result(Shape{1}, {acc / static_cast<double>(n)}, {p.node(), q.node()}, [n](Node& self) {
        Node& pp = *self.parents[0];
        Node& pq = *self.parents[1];
        const double scale = 2.0 * self.grad[0] / static_cast<double>(n);
        if (pp.requires_grad) {
            auto& g = pp.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) g[i] += scale * (pp.value[i] - pq.value[i]);
        }
        if (pq.requires_grad) {
            auto& g = pq.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) g[i] -= scale * (pp.value[i] - pq.value[i]);
        }
    });
}

}  // namespace gexse
