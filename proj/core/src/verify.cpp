#include "gexse/verify.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "gexse/metrics.hpp"
#include "gexse/ops.hpp"
#include "gexse/rng.hpp"

namespace gexse::verify {

FiniteDifferenceResult finite_difference_check(const std::function<Tensor(std::vector<Tensor>&)>& loss_fn,
                                               std::vector<Tensor>& inputs, double h, std::size_t max_elements) {
    for (auto& t : inputs) t.zero_grad();
    backward(loss_fn(inputs));

    FiniteDifferenceResult result;
    NoGradGuard no_grad;
    for (auto& t : inputs) {
        if (!t.requires_grad()) continue;
        std::vector<double> analytic(t.numel(), 0.0);
        const auto g = t.grad();
        std::copy(g.begin(), g.end(), analytic.begin());
        const std::size_t stride = max_elements == 0 ? 1 : std::max<std::size_t>(1, t.numel() / max_elements);
        for (std::size_t i = 0; i < t.numel(); i += stride) {
            auto data = t.mutable_data();
            const double orig = data[i];
            data[i] = orig + h;
            const double fp = loss_fn(inputs).item();
            data[i] = orig - h;
            const double fm = loss_fn(inputs).item();
            data[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-4});
            result.max_rel_error = std::max(result.max_rel_error, std::abs(numeric - analytic[i]) / denom);
            ++result.checked;
        }
    }
    return result;
}

namespace {

constexpr double kGradTol = 1e-4;

Tensor rand_tensor(Rng& rng, Shape shape, bool requires_grad, double scale = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = scale * rng.normal();
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Scalar probe: sum(y * w) with fixed random weights so every output
// element carries a distinct cotangent.
Tensor probe(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

using CaseFn = std::function<FiniteDifferenceResult(Rng&)>;

struct OpCase {
    const char* name;
    CaseFn run;
};

std::vector<OpCase> op_cases() {
    std::vector<OpCase> cases;
    cases.push_back({"add", [](Rng& r) {
                         Shape s{pick(r, 1, 3), pick(r, 1, 4), pick(r, 1, 5)};
                         std::vector<Tensor> in{rand_tensor(r, s, true), rand_tensor(r, s, true)};
                         auto w = rand_tensor(r, s, false);
                         return finite_difference_check([&](auto& x) { return probe(add(x[0], x[1]), w); }, in);
                     }});
    cases.push_back({"mul", [](Rng& r) {
                         Shape s{pick(r, 1, 3), pick(r, 1, 4), pick(r, 1, 5)};
                         std::vector<Tensor> in{rand_tensor(r, s, true), rand_tensor(r, s, true)};
                         auto w = rand_tensor(r, s, false);
                         return finite_difference_check([&](auto& x) { return probe(mul(x[0], x[1]), w); }, in);
                     }});
    cases.push_back({"scale_sum_reshape", [](Rng& r) {
                         const std::size_t a = pick(r, 1, 4), b = pick(r, 1, 6);
                         std::vector<Tensor> in{rand_tensor(r, {a, b}, true)};
                         auto w = rand_tensor(r, {b, a}, false);
                         const double c = r.normal();
                         return finite_difference_check(
                             [&](auto& x) { return probe(reshape(scale(x[0], c), {b, a}), w); }, in);
                     }});
    cases.push_back({"relu", [](Rng& r) {
                         Shape s{pick(r, 1, 4), pick(r, 2, 8)};
                         auto t = rand_tensor(r, s, true);
                         // keep inputs away from the kink at 0
                         for (double& v : t.mutable_data()) v += v >= 0 ? 0.05 : -0.05;
                         std::vector<Tensor> in{t};
                         auto w = rand_tensor(r, s, false);
                         return finite_difference_check([&](auto& x) { return probe(relu(x[0]), w); }, in);
                     }});
    cases.push_back({"gelu", [](Rng& r) {
                         Shape s{pick(r, 1, 4), pick(r, 2, 8)};
                         std::vector<Tensor> in{rand_tensor(r, s, true, 2.0)};
                         auto w = rand_tensor(r, s, false);
                         return finite_difference_check([&](auto& x) { return probe(gelu(x[0]), w); }, in);
                     }});
    cases.push_back({"matmul", [](Rng& r) {
                         const std::size_t m = pick(r, 1, 5), k = pick(r, 1, 5), n = pick(r, 1, 5);
                         std::vector<Tensor> in{rand_tensor(r, {m, k}, true), rand_tensor(r, {k, n}, true)};
                         auto w = rand_tensor(r, {m, n}, false);
                         return finite_difference_check([&](auto& x) { return probe(matmul(x[0], x[1]), w); }, in);
                     }});
    cases.push_back({"affine", [](Rng& r) {
                         const std::size_t b = pick(r, 1, 3), t = pick(r, 1, 3), i = pick(r, 1, 5), o = pick(r, 1, 5);
                         std::vector<Tensor> in{rand_tensor(r, {b, t, i}, true), rand_tensor(r, {i, o}, true),
                                                rand_tensor(r, {o}, true)};
                         auto w = rand_tensor(r, {b, t, o}, false);
                         return finite_difference_check(
                             [&](auto& x) { return probe(affine(x[0], x[1], x[2]), w); }, in);
                     }});
    cases.push_back({"real_fft", [](Rng& r) {
                         const std::size_t b = pick(r, 1, 3), n = pick(r, 2, 17);
                         std::vector<Tensor> in{rand_tensor(r, {b, n}, true)};
                         auto wr = rand_tensor(r, {b, n / 2 + 1}, false);
                         auto wi = rand_tensor(r, {b, n / 2 + 1}, false);
                         return finite_difference_check(
                             [&](auto& x) {
                                 auto s = real_fft(x[0]);
                                 return add(probe(s.real, wr), probe(s.imag, wi));
                             },
                             in);
                     }});
    cases.push_back({"inverse_real_fft", [](Rng& r) {
                         const std::size_t b = pick(r, 1, 3), n = pick(r, 2, 17);
                         std::vector<Tensor> in{rand_tensor(r, {b, n / 2 + 1}, true),
                                                rand_tensor(r, {b, n / 2 + 1}, true)};
                         auto w = rand_tensor(r, {b, n}, false);
                         return finite_difference_check(
                             [&](auto& x) { return probe(inverse_real_fft({x[0], x[1], n}), w); }, in);
                     }});
    cases.push_back({"conv1d", [](Rng& r) {
                         const std::size_t b = pick(r, 1, 3), ci = pick(r, 1, 4), co = pick(r, 1, 4);
                         const std::size_t k = 2 * pick(r, 0, 2) + 1, len = pick(r, k, 9);
                         const std::size_t pad = pick(r, 0, (k - 1) / 2);
                         std::vector<Tensor> in{rand_tensor(r, {b, ci, len}, true), rand_tensor(r, {co, ci, k}, true),
                                                rand_tensor(r, {co}, true)};
                         auto w = rand_tensor(r, {b, co, len + 2 * pad - k + 1}, false);
                         return finite_difference_check(
                             [&](auto& x) { return probe(conv1d(x[0], x[1], x[2], pad), w); }, in);
                     }});
    cases.push_back({"batch_norm1d_train", [](Rng& r) {
                         const std::size_t b = pick(r, 1, 3), c = pick(r, 1, 4), len = pick(r, 2, 6);
                         std::vector<Tensor> in{rand_tensor(r, {b, c, len}, true), rand_tensor(r, {c}, true),
                                                rand_tensor(r, {c}, true)};
                         auto w = rand_tensor(r, {b, c, len}, false);
                         NormState st(c);
                         return finite_difference_check(
                             [&](auto& x) { return probe(batch_norm1d(x[0], x[1], x[2], st, true), w); }, in);
                     }});
    cases.push_back({"batch_norm1d_eval", [](Rng& r) {
                         const std::size_t b = pick(r, 1, 3), c = pick(r, 1, 4), len = pick(r, 1, 6);
                         std::vector<Tensor> in{rand_tensor(r, {b, c, len}, true), rand_tensor(r, {c}, true),
                                                rand_tensor(r, {c}, true)};
                         auto w = rand_tensor(r, {b, c, len}, false);
                         NormState st(c);
                         for (std::size_t i = 0; i < c; ++i) {
                             st.running_mean[i] = r.normal();
                             st.running_var[i] = 0.5 + r.uniform();
                         }
                         return finite_difference_check(
                             [&](auto& x) { return probe(batch_norm1d(x[0], x[1], x[2], st, false), w); }, in);
                     }});
    cases.push_back({"global_avg_pool", [](Rng& r) {
                         const std::size_t b = pick(r, 1, 3), c = pick(r, 1, 4), len = pick(r, 1, 7);
                         std::vector<Tensor> in{rand_tensor(r, {b, c, len}, true)};
                         auto w = rand_tensor(r, {b, c}, false);
                         return finite_difference_check([&](auto& x) { return probe(global_avg_pool(x[0]), w); },
                                                        in);
                     }});
    cases.push_back({"concat_split_channels", [](Rng& r) {
                         const std::size_t b = pick(r, 1, 3), c1 = pick(r, 1, 3), c2 = pick(r, 1, 3),
                                           len = pick(r, 1, 5);
                         std::vector<Tensor> in{rand_tensor(r, {b, c1, len}, true), rand_tensor(r, {b, c2, len}, true)};
                         auto w1 = rand_tensor(r, {b, c2, len}, false);
                         auto w2 = rand_tensor(r, {b, c1, len}, false);
                         return finite_difference_check(
                             [&](auto& x) {
                                 auto cat = concat_channels({x[0], x[1]});
                                 // Split at a different boundary so slices cross the inputs.
                                 auto parts = split_channels(cat, {c2, c1});
                                 return add(probe(parts[0], w1), probe(parts[1], w2));
                             },
                             in);
                     }});
    cases.push_back({"softmax_cross_entropy", [](Rng& r) {
                         const std::size_t b = pick(r, 1, 4), k = pick(r, 2, 6);
                         std::vector<double> y(b * k, 0.0);
                         for (std::size_t i = 0; i < b; ++i) y[i * k + r.below(k)] = 1.0;
                         Tensor target(Shape{b, k}, y);
                         std::vector<Tensor> in{rand_tensor(r, {b, k}, true, 2.0)};
                         return finite_difference_check(
                             [&](auto& x) { return softmax_cross_entropy(x[0], target); }, in);
                     }});
    cases.push_back({"mse", [](Rng& r) {
                         Shape s{pick(r, 1, 4), pick(r, 1, 6)};
                         std::vector<Tensor> in{rand_tensor(r, s, true), rand_tensor(r, s, true)};
                         return finite_difference_check([&](auto& x) { return mse(x[0], x[1]); }, in);
                     }});
    return cases;
}

std::vector<std::complex<long double>> naive_dft(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<long double>> out(n / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
        long double re = 0.0L, im = 0.0L;
        for (std::size_t t = 0; t < n; ++t) {
            const long double ang = -2.0L * std::numbers::pi_v<long double> *
                                    static_cast<long double>((k * t) % n) / static_cast<long double>(n);
            re += x[t] * std::cos(ang);
            im += x[t] * std::sin(ang);
        }
        out[k] = {re, im};
    }
    return out;
}

CheckResult make_check(std::string name, double value, double threshold, std::string detail = {}) {
    return CheckResult{std::move(name), value < threshold, value, threshold, std::move(detail)};
}

}  // namespace

std::vector<CheckResult> gradcheck_suite(std::uint64_t seed, std::size_t shapes_per_op) {
    std::vector<CheckResult> results;
    Rng root(seed);
    for (const auto& c : op_cases()) {
        Rng rng = root.split(c.name);
        double worst = 0.0;
        std::size_t checked = 0;
        for (std::size_t i = 0; i < shapes_per_op; ++i) {
            const auto r = c.run(rng);
            worst = std::max(worst, r.max_rel_error);
            checked += r.checked;
        }
        results.push_back(make_check(std::string("gradcheck/") + c.name, worst, kGradTol,
                                     std::to_string(shapes_per_op) + " shapes, " + std::to_string(checked) +
                                         " elements"));
    }
    return results;
}

std::vector<CheckResult> fft_suite(std::uint64_t seed) {
    std::vector<CheckResult> results;
    Rng rng = Rng(seed).split("fft_suite");
    for (std::size_t n : {4u, 16u, 90u, 128u, 256u}) {
        std::vector<double> x(n);
        for (double& v : x) v = rng.normal();
        const auto spec = real_fft(Tensor(Shape{n}, x));
        const auto ref = naive_dft(x);
        double worst = 0.0;
        long double energy = 0.0L;
        for (std::size_t k = 0; k < ref.size(); ++k) {
            worst = std::max(worst, std::abs(spec.real.data()[k] - static_cast<double>(ref[k].real())));
            worst = std::max(worst, std::abs(spec.imag.data()[k] - static_cast<double>(ref[k].imag())));
            const long double w = (k == 0 || (n % 2 == 0 && k == n / 2)) ? 1.0L : 2.0L;
            energy += w * (ref[k].real() * ref[k].real() + ref[k].imag() * ref[k].imag());
        }
        // Parseval on the library spectrum (not the oracle's) so both sides are checked.
        double lib_energy = 0.0;
        for (std::size_t k = 0; k < ref.size(); ++k) {
            const double w = (k == 0 || (n % 2 == 0 && k == n / 2)) ? 1.0 : 2.0;
            lib_energy += w * (spec.real.data()[k] * spec.real.data()[k] + spec.imag.data()[k] * spec.imag.data()[k]);
        }
        double sq = 0.0;
        for (double v : x) sq += v * v;
        const auto back = inverse_real_fft(spec);
        double rt = 0.0;
        for (std::size_t i = 0; i < n; ++i) rt = std::max(rt, std::abs(back.data()[i] - x[i]));

        const std::string tag = "n=" + std::to_string(n);
        results.push_back(make_check("fft/naive_dft/" + tag, worst, 1e-8));
        std::ostringstream oracle_residual;
        oracle_residual << "oracle energy residual "
                        << static_cast<double>(std::abs(static_cast<long double>(sq) - energy / n));
        results.push_back(make_check("fft/parseval/" + tag, std::abs(sq - lib_energy / static_cast<double>(n)), 1e-8,
                                     oracle_residual.str()));
        results.push_back(make_check("fft/round_trip/" + tag, rt, 1e-9));
    }
    return results;
}

std::vector<CheckResult> metrics_suite() {
    std::vector<CheckResult> results;
    {
        // [[1,1],[0,2]]: class0 P=1 R=1/2 F1=2/3, class1 P=2/3 R=1 F1=4/5, macro-F1 = 11/15.
        const std::vector<int> labels{0, 0, 1, 1};
        const std::vector<int> preds{0, 1, 1, 1};
        const auto m = metrics(confusion(preds, labels, 2));
        double err = 0.0;
        err = std::max(err, std::abs(m.per_class[0].precision - 1.0));
        err = std::max(err, std::abs(m.per_class[0].recall - 0.5));
        err = std::max(err, std::abs(m.per_class[0].f1 - 2.0 / 3.0));
        err = std::max(err, std::abs(m.per_class[1].precision - 2.0 / 3.0));
        err = std::max(err, std::abs(m.per_class[1].recall - 1.0));
        err = std::max(err, std::abs(m.per_class[1].f1 - 0.8));
        err = std::max(err, std::abs(m.macro_f1 - 11.0 / 15.0));
        results.push_back(make_check("metrics/two_class_hand_values", err, 1e-12));
    }
    {
        const std::vector<int> labels{0, 1, 2, 2, 1};
        const auto m = metrics(confusion(labels, labels, 3));
        const double err = std::abs(m.macro_f1 - 1.0) + std::abs(m.macro_precision - 1.0) +
                           std::abs(m.macro_recall - 1.0) + std::abs(m.accuracy - 1.0);
        results.push_back(make_check("metrics/perfect_predictions", err, 1e-12));
    }
    {
        const std::vector<int> labels{0, 0, 1};
        const std::vector<int> preds{0, 0, 1};
        const auto m = metrics(confusion(preds, labels, 3));
        const bool ok = m.per_class[2].undefined && m.per_class[2].f1 == 0.0 && m.per_class[2].support == 0;
        results.push_back(make_check("metrics/empty_class_convention", ok ? 0.0 : 1.0, 0.5));
    }
    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

std::string format_result(const CheckResult& r) {
    std::ostringstream os;
    os << (r.passed ? "PASS " : "FAIL ") << r.name << "  value=" << r.value << "  threshold=" << r.threshold;
    if (!r.detail.empty()) os << "  (" << r.detail << ")";
    return os.str();
}

}  // namespace gexse::verify
