#include <cmath>

#include "doctest.h"
#include "gexse/error.hpp"
#include "gexse/ops.hpp"
#include "oracles.hpp"

using namespace gexse;

TEST_CASE("tensor: construction contract") {
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, {1.0, 2.0, 3.0}), Error);
    CHECK_THROWS_AS(Tensor(Shape{0, 2}, {}), Error);
    Tensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.at({1, 2}) == 6.0);
    CHECK(t.grad().empty());
}

TEST_CASE("matmul") {
    Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
    Tensor m(Shape{2, 2}, {3, 4, 5, 6});
    auto r = matmul(eye, m);
    CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{3, 4, 5, 6});

    auto z = matmul(m, Tensor::zeros({2, 3}));
    for (double v : z.data()) CHECK(v == 0.0);

    Rng rng(11);
    auto a = oracle::random_tensor(rng, {3, 4});
    auto b = oracle::random_tensor(rng, {4, 2});
    auto c = matmul(a, b);
    auto ref = oracle::naive_matmul({a.data().begin(), a.data().end()}, {b.data().begin(), b.data().end()}, 3, 4, 2);
    CHECK(oracle::max_abs_diff(c.data(), ref) < 1e-12);

    CHECK_THROWS_AS(matmul(a, a), Error);
    try {
        matmul(a, a);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("(3,4)") != std::string::npos);
    }
}

TEST_CASE("affine") {
    Tensor x(Shape{1, 2}, {1, 2});
    auto y = affine(x, Tensor(Shape{2, 2}, {1, 0, 0, 1}), Tensor::zeros({2}));
    CHECK(y.data()[0] == 1.0);
    CHECK(y.data()[1] == 2.0);

    auto c = affine(x, Tensor::zeros({2, 1}), Tensor(Shape{1}, {3.5}));
    CHECK(c.item() == 3.5);

    Rng rng(12);
    auto xr = oracle::random_tensor(rng, {2, 3, 5});
    auto w = oracle::random_tensor(rng, {5, 4});
    auto b = oracle::random_tensor(rng, {4});
    auto out = affine(xr, w, b);
    CHECK(out.shape() == Shape{2, 3, 4});
    double worst = 0.0;
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t j = 0; j < 4; ++j) {
            double acc = b.data()[j];
            for (std::size_t i = 0; i < 5; ++i) acc += xr.data()[r * 5 + i] * w.data()[i * 4 + j];
            worst = std::max(worst, std::abs(acc - out.data()[r * 4 + j]));
        }
    CHECK(worst < 1e-12);
    CHECK_THROWS_AS(affine(xr, Tensor::zeros({4, 4}), Tensor::zeros({4})), Error);
    CHECK_THROWS_AS(affine(xr, w, Tensor::zeros({3})), Error);
}

TEST_CASE("gelu and relu") {
    CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
    CHECK(std::abs(gelu(Tensor::scalar(10.0)).item() - 10.0) < 1e-6);
    // 1 * Phi(1) evaluated to 40 digits with mpmath.
    CHECK(std::abs(gelu(Tensor::scalar(1.0)).item() - 0.8413447460685429485852) < 1e-15);

    CHECK(relu(Tensor::scalar(-1.0)).item() == 0.0);
    CHECK(relu(Tensor::scalar(2.0)).item() == 2.0);
    Tensor x = Tensor::scalar(0.0, true);
    backward(relu(x));
    CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("real_fft and inverse") {
    auto s = real_fft(Tensor(Shape{4}, {1, 0, 0, 0}));
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(s.real.data()[k] == doctest::Approx(1.0));
        CHECK(std::abs(s.imag.data()[k]) < 1e-15);
    }
    auto dc = real_fft(Tensor(Shape{4}, {1, 1, 1, 1}));
    CHECK(dc.real.data()[0] == doctest::Approx(4.0));
    CHECK(std::abs(dc.real.data()[1]) < 1e-15);
    CHECK(std::abs(dc.real.data()[2]) < 1e-15);

    auto back = inverse_real_fft(real_fft(Tensor(Shape{4}, {1, 2, 3, 4})));
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(back.data()[i] - double(i + 1)) < 1e-9);

    ComplexSpectrum zero{Tensor::zeros({2, 5}), Tensor::zeros({2, 5}), 8};
    const Tensor zero_signal = inverse_real_fft(zero);
    CHECK(zero_signal.shape() == Shape{2, 8});
    for (double v : zero_signal.data()) CHECK(v == 0.0);

    CHECK_THROWS_AS(real_fft(Tensor(Shape{1}, {1.0})), Error);
    ComplexSpectrum bad{Tensor::zeros({4}), Tensor::zeros({4}), 8};
    CHECK_THROWS_AS(inverse_real_fft(bad), Error);
}

TEST_CASE("real_fft matches naive DFT; Parseval; round trip") {
    Rng rng(7);
    for (std::size_t n : {4u, 16u, 90u, 128u, 256u, 5u, 7u, 30u}) {
        auto x = oracle::random_vector(rng, n);
        auto s = real_fft(Tensor(Shape{n}, x));
        auto ref = oracle::naive_dft(x);
        double worst = 0.0;
        double energy = 0.0;
        for (std::size_t k = 0; k < ref.size(); ++k) {
            worst = std::max(worst, std::abs(s.real.data()[k] - ref[k].real()));
            worst = std::max(worst, std::abs(s.imag.data()[k] - ref[k].imag()));
            const double w = (k == 0 || (n % 2 == 0 && k == n / 2)) ? 1.0 : 2.0;
            energy += w * std::norm(ref[k]);
        }
        CHECK_MESSAGE(worst < 1e-8, "n=" << n);
        double sq = 0.0;
        for (double v : x) sq += v * v;
        CHECK(std::abs(sq - energy / double(n)) < 1e-8);
        auto back = inverse_real_fft(s);
        CHECK(oracle::max_abs_diff(back.data(), x) < 1e-9);
    }
}

TEST_CASE("conv1d") {
    Rng rng(3);
    auto x = oracle::random_tensor(rng, {2, 3, 6}, false);
    std::vector<double> id(9, 0.0);
    for (std::size_t c = 0; c < 3; ++c) id[c * 3 + c] = 1.0;
    auto y = conv1d(x, Tensor(Shape{3, 3, 1}, id), Tensor::zeros({3}), 0);
    CHECK(oracle::max_abs_diff(y.data(), x.data()) == 0.0);

    auto c = conv1d(x, Tensor::zeros({4, 3, 3}), Tensor::full({4}, 2.5), 1);
    CHECK(c.shape() == Shape{2, 4, 6});
    for (double v : c.data()) CHECK(v == 2.5);

    for (std::size_t k : {1u, 3u, 5u}) {
        auto w = oracle::random_tensor(rng, {4, 3, k}, false);
        auto b = oracle::random_tensor(rng, {4}, false);
        auto out = conv1d(x, w, b, (k - 1) / 2);
        auto ref = oracle::naive_conv1d({x.data().begin(), x.data().end()}, {w.data().begin(), w.data().end()},
                                        {b.data().begin(), b.data().end()}, 2, 3, 6, 4, k, (k - 1) / 2);
        CHECK(out.dim(2) == 6);
        CHECK(oracle::max_abs_diff(out.data(), ref) < 1e-12);
    }
    CHECK_THROWS_AS(conv1d(x, Tensor::zeros({4, 2, 3}), Tensor::zeros({4}), 1), Error);
}

TEST_CASE("batch_norm1d") {
    NormState st(2);
    Tensor x(Shape{1, 2, 3}, {5, 5, 5, 1, 2, 3});
    auto y = batch_norm1d(x, Tensor::full({2}, 1.0), Tensor(Shape{2}, {0.25, -1.0}), st, true);
    for (std::size_t t = 0; t < 3; ++t) CHECK(y.data()[t] == doctest::Approx(0.25));
    for (double v : y.data()) CHECK(std::isfinite(v));

    Rng rng(5);
    auto xr = oracle::random_tensor(rng, {4, 3, 10}, false, 2.0);
    NormState s2(3);
    auto out = batch_norm1d(xr, Tensor::full({3}, 1.0), Tensor::zeros({3}), s2, true);
    double worst = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        double m = 0.0, v = 0.0;
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t t = 0; t < 10; ++t) m += xr.data()[(b * 3 + c) * 10 + t];
        m /= 40.0;
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t t = 0; t < 10; ++t) v += std::pow(xr.data()[(b * 3 + c) * 10 + t] - m, 2);
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t t = 0; t < 10; ++t) {
                const std::size_t i = (b * 3 + c) * 10 + t;
                worst = std::max(worst, std::abs(out.data()[i] - (xr.data()[i] - m) / std::sqrt(v / 40.0 + 1e-5)));
            }
        CHECK(s2.running_mean[c] == doctest::Approx(0.1 * m).epsilon(1e-12));
        CHECK(s2.running_var[c] == doctest::Approx(0.9 + 0.1 * v / 39.0).epsilon(1e-12));
    }
    CHECK(worst < 1e-12);

    // Standardized input passes through (up to the epsilon in the denominator).
    auto again = batch_norm1d(out, Tensor::full({3}, 1.0), Tensor::zeros({3}), s2, true);
    CHECK(oracle::max_abs_diff(again.data(), out.data()) < 1e-5);

    // Eval mode reads but never writes running statistics.
    const auto before = s2.running_mean;
    batch_norm1d(xr, Tensor::full({3}, 1.0), Tensor::zeros({3}), s2, false);
    CHECK(before == s2.running_mean);
}

TEST_CASE("global_avg_pool, concat and split") {
    auto p = global_avg_pool(Tensor(Shape{1, 2, 4}, {1, 2, 3, 4, 7, 7, 7, 7}));
    CHECK(p.shape() == Shape{1, 2});
    CHECK(p.data()[0] == 2.5);
    CHECK(p.data()[1] == 7.0);

    Rng rng(9);
    auto a = oracle::random_tensor(rng, {2, 3, 4}, false);
    auto b = oracle::random_tensor(rng, {2, 1, 4}, false);
    CHECK(oracle::max_abs_diff(concat_channels({a}).data(), a.data()) == 0.0);
    auto parts = split_channels(concat_channels({a, b}), {3, 1});
    CHECK(oracle::max_abs_diff(parts[0].data(), a.data()) == 0.0);
    CHECK(oracle::max_abs_diff(parts[1].data(), b.data()) == 0.0);
    CHECK_THROWS_AS(split_channels(a, {1, 1}), Error);
    CHECK_THROWS_AS(concat_channels({a, oracle::random_tensor(rng, {2, 1, 5})}), Error);
}

TEST_CASE("losses") {
    Tensor y(Shape{1, 4}, {0, 1, 0, 0});
    CHECK(softmax_cross_entropy(Tensor(Shape{1, 4}, {0, 50, 0, 0}), y).item() < 1e-20);
    CHECK(softmax_cross_entropy(Tensor::zeros({1, 4}), y).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor::zeros({1, 1}), Tensor::full({1, 1}, 1.0)), Error);

    Rng rng(21);
    auto z = oracle::random_tensor(rng, {3, 5}, false, 3.0);
    std::vector<double> oh(15, 0.0);
    oh[2] = oh[5 + 0] = oh[10 + 4] = 1.0;
    long double ref = 0.0L;
    for (int b = 0; b < 3; ++b) {
        long double denom = 0.0L;
        for (int j = 0; j < 5; ++j) denom += std::exp(static_cast<long double>(z.data()[b * 5 + j]));
        for (int j = 0; j < 5; ++j)
            if (oh[b * 5 + j] > 0) ref -= static_cast<long double>(z.data()[b * 5 + j]) - std::log(denom);
    }
    CHECK(std::abs(softmax_cross_entropy(z, Tensor(Shape{3, 5}, oh)).item() - double(ref / 3.0L)) < 1e-14);

    auto p = oracle::random_tensor(rng, {2, 3}, false);
    CHECK(mse(p, p).item() == 0.0);
    CHECK(mse(Tensor(Shape{2}, {1, 0}), Tensor::zeros({2})).item() == 0.5);
    auto q = oracle::random_tensor(rng, {2, 3}, false);
    double acc = 0.0;
    for (std::size_t i = 0; i < 6; ++i) acc += std::pow(p.data()[i] - q.data()[i], 2);
    CHECK(std::abs(mse(p, q).item() - acc / 6.0) < 1e-15);
    CHECK(mse(p, q).item() >= 0.0);
    CHECK_THROWS_AS(mse(p, Tensor::zeros({3, 2})), Error);
}

TEST_CASE("backward basics") {
    Tensor x = Tensor::full({3}, 2.0, true);
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);

    Tensor unused = Tensor::full({2}, 1.0, true);
    Tensor x2 = Tensor::full({2}, 1.0, true);
    backward(sum(x2));
    CHECK(unused.grad().empty());

    CHECK_THROWS_AS(backward(x), Error);

    // Leaf gradients accumulate across passes until zeroed.
    Tensor w = Tensor::full({2}, 1.0, true);
    backward(sum(scale(w, 3.0)));
    backward(sum(scale(w, 3.0)));
    CHECK(w.grad()[0] == 6.0);
    w.zero_grad();
    CHECK(w.grad().empty());

    // retain_graph allows a second pass over the same graph.
    Tensor v = Tensor::full({2}, 1.0, true);
    auto loss = sum(mul(v, v));
    backward(loss, true);
    backward(loss, true);
    CHECK(v.grad()[0] == 4.0);

    // Without retain_graph the graph is released.
    Tensor u = Tensor::full({2}, 1.0, true);
    auto l2 = sum(u);
    backward(l2);
    CHECK_FALSE(l2.requires_grad());
}

TEST_CASE("tape visits each node once in topological order") {
    Tensor x = Tensor::full({2}, 1.0, true);
    auto h = gelu(x);
    auto loss = sum(add(h, h));
    auto tape = Tape::record(loss);
    CHECK(tape.size() == 4);  // x, gelu, add, sum
    CHECK(tape.order().front() == x.node().get());
    CHECK(tape.order().back() == loss.node().get());
}

TEST_CASE("no-grad guard records nothing") {
    Tensor x = Tensor::full({2}, 1.0, true);
    NoGradGuard guard;
    auto y = gelu(x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("conv1d gradients at wide channel counts match a naive oracle") {
    // 64 channels x k=5 makes the kernel-gradient product 64x320x17, a size
    // at which some vendor GEMM kernels have returned wrong results.
    const std::size_t batch = 4, c = 64, len = 17, k = 5, pad = 2;
    Rng r(1);
    Tensor x = oracle::random_tensor(r, {batch, c, len});
    Tensor w = oracle::random_tensor(r, {c, c, k});
    Tensor b = oracle::random_tensor(r, {c});
    const Tensor g = oracle::random_tensor(r, {batch, c, len}, false);
    backward(sum(mul(conv1d(x, w, b, pad), g)));
    std::vector<double> dw(c * c * k, 0.0), dx(batch * c * len, 0.0);
    const auto xv = x.data();
    const auto wv = w.data();
    const auto gv = g.data();
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < c; ++o)
            for (std::size_t t = 0; t < len; ++t)
                for (std::size_t i = 0; i < c; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        const long s = static_cast<long>(t + j) - static_cast<long>(pad);
                        if (s < 0 || s >= static_cast<long>(len)) continue;
                        dw[(o * c + i) * k + j] += gv[(n * c + o) * len + t] * xv[(n * c + i) * len + s];
                        dx[(n * c + i) * len + s] += gv[(n * c + o) * len + t] * wv[(o * c + i) * k + j];
                    }
    CHECK(oracle::max_abs_diff(w.grad(), dw) < 1e-10);
    CHECK(oracle::max_abs_diff(x.grad(), dx) < 1e-10);
}

TEST_CASE("matmul gradients on a tall product match a naive oracle") {
    Rng r(2);
    const std::size_t m = 64, k = 17, n = 320;
    Tensor a = oracle::random_tensor(r, {m, k});
    Tensor bm = oracle::random_tensor(r, {k, n});
    const Tensor g = oracle::random_tensor(r, {m, n}, false);
    backward(sum(mul(matmul(a, bm), g)));
    std::vector<double> da(m * k, 0.0), db(k * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) {
                da[i * k + p] += g.data()[i * n + j] * bm.data()[p * n + j];
                db[p * n + j] += a.data()[i * k + p] * g.data()[i * n + j];
            }
    CHECK(oracle::max_abs_diff(a.grad(), da) < 1e-10);
    CHECK(oracle::max_abs_diff(bm.grad(), db) < 1e-10);
}
