#include "gexse/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "gexse/binio.hpp"
#include "gexse/error.hpp"
#include "gexse/ops.hpp"
#include "gexse/parallel.hpp"
#include "gexse/train.hpp"

namespace gexse::diffusion {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMomentBlock = 1000;
constexpr std::size_t kSampleBatch = 64;
constexpr char kBundleMagic[] = "GXDIFF01";
constexpr std::uint32_t kBundleVersion = 1;

void check_step(const Schedule& s, std::size_t t) {
    if (t < 1 || t > s.T) throw_usage("diffusion step " + std::to_string(t) + " outside 1.." + std::to_string(s.T));
}

Tensor constant(Shape shape, std::vector<double> v) { return Tensor(std::move(shape), std::move(v), false); }

Tensor one_hot(std::span<const int> labels, std::size_t k) {
    std::vector<double> v(labels.size() * k, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
            throw_usage("label " + std::to_string(labels[i]) + " out of range");
        v[i * k + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    return constant({labels.size(), k}, std::move(v));
}

struct NoisedBatch {
    Tensor x;                        // (B,2) x_t
    std::vector<double> eps;         // B x 2
    std::vector<std::size_t> steps;  // B
    std::vector<int> labels;         // B
};

NoisedBatch draw_noised(const Dataset& data, const Schedule& s, std::size_t n, Rng rng, std::optional<std::size_t> fixed_t = {}) {
    NoisedBatch b;
    std::vector<double> x(n * 2);
    b.eps.resize(n * 2);
    b.steps.resize(n);
    b.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = rng.below(data.size());
        const std::size_t t = fixed_t ? *fixed_t : 1 + rng.below(s.T);
        const double ra = std::sqrt(s.abar(t)), rn = std::sqrt(1.0 - s.abar(t));
        for (int d = 0; d < 2; ++d) {
            b.eps[i * 2 + d] = rng.normal();
            x[i * 2 + d] = ra * data.x[j * 2 + d] + rn * b.eps[i * 2 + d];
        }
        b.steps[i] = t;
        b.labels[i] = data.labels[j];
    }
    b.x = constant({n, 2}, std::move(x));
    return b;
}

void check_dataset(const Dataset& data) {
    if (data.size() == 0) throw_usage("empty diffusion dataset");
    if (data.x.size() != data.size() * 2) throw_shape("diffusion data must be n x 2");
    if (data.classes < 2) throw_usage("need at least two classes");
}

// Row-wise d/dx sum_b log f(y_b | x_b, t) with a classifier whose weights do not require grad.
std::vector<double> grad_log_prob(const NoisyClassifier& frozen, std::span<const double> x, std::span<const std::size_t> steps,
                                  std::span<const int> labels) {
    const std::size_t n = labels.size();
    Tensor xt({n, 2}, std::vector<double>(x.begin(), x.end()), true);
    const Tensor ce = softmax_cross_entropy(frozen.logits(xt, steps), one_hot(labels, frozen.classes));
    backward(scale(ce, -static_cast<double>(n)));
    const auto g = xt.grad();
    if (g.empty()) return std::vector<double>(n * 2, 0.0);
    return {g.begin(), g.end()};
}

NoisyClassifier freeze(const NoisyClassifier& c) {
    NoisyClassifier f = c;
    f.net = c.net.frozen();
    return f;
}

// Shared ancestral sampler for a batch of chains. `guide` is null for the unguided path.
void run_chains(std::vector<double>& x, std::span<const int> labels, std::vector<Rng>& rngs, const Schedule& s,
                const Denoiser& d, const NoisyClassifier* guide, double guidance) {
    const std::size_t n = labels.size();
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < 2; ++k) x[i * 2 + k] = rngs[i].normal();
    std::vector<std::size_t> steps(n);
    std::vector<double> mu(n * 2);
    for (std::size_t t = s.T; t >= 1; --t) {
        std::fill(steps.begin(), steps.end(), t);
        std::vector<double> eps;
        {
            NoGradGuard ng;
            const Tensor e = d.predict_noise(constant({n, 2}, x), steps, labels);
            eps.assign(e.data().begin(), e.data().end());
        }
        const double coef = s.b(t) / std::sqrt(1.0 - s.abar(t));
        const double inv_sqrt_a = 1.0 / std::sqrt(s.a(t));
        const double sigma = s.sigma(t);
        for (std::size_t j = 0; j < n * 2; ++j) mu[j] = (x[j] - coef * eps[j]) * inv_sqrt_a;
        if (guide) {
            const auto g = grad_log_prob(*guide, x, steps, labels);
            for (std::size_t j = 0; j < n * 2; ++j) mu[j] = mu[j] + guidance * sigma * g[j];
        }
        if (t > 1) {
            for (std::size_t i = 0; i < n; ++i)
                for (int k = 0; k < 2; ++k) x[i * 2 + k] = mu[i * 2 + k] + sigma * rngs[i].normal();
        } else {
            x = mu;
        }
    }
}

std::vector<double> run_many(std::span<const int> labels, const Schedule& s, const Denoiser& d,
                             const NoisyClassifier* guide, double guidance, std::uint64_t seed) {
    const std::size_t n = labels.size();
    std::vector<double> out(n * 2);
    const Rng root(seed);
    const std::size_t blocks = (n + kSampleBatch - 1) / kSampleBatch;
    parallel_for(blocks, [&](std::size_t b) {
        const std::size_t lo = b * kSampleBatch, hi = std::min(n, lo + kSampleBatch);
        std::vector<Rng> rngs;
        for (std::size_t i = lo; i < hi; ++i) rngs.push_back(root.split(static_cast<std::uint64_t>(i)));
        std::vector<double> x((hi - lo) * 2);
        run_chains(x, labels.subspan(lo, hi - lo), rngs, s, d, guide, guidance);
        std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(lo * 2));
    });
    return out;
}

void put_tensor(binio::Writer& w, const Tensor& t) {
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    w.f64s(t.data().data(), t.numel());
}

Tensor get_tensor(binio::Reader& r) {
    const std::size_t rank = r.u8();
    if (rank == 0 || rank > 2) throw_data(r.what() + ": bad tensor rank");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
        d = r.u64();
        if (d == 0 || d > (1u << 24)) throw_data(r.what() + ": bad tensor dimension");
        n *= d;
    }
    if (n > r.remaining() / 8) throw_data(r.what() + ": truncated");
    std::vector<double> v(n);
    r.f64s(v.data(), n);
    return Tensor(std::move(shape), std::move(v), true);
}

void put_mlp(binio::Writer& w, const Mlp& m) {
    w.u32(static_cast<std::uint32_t>(m.w.size()));
    for (std::size_t l = 0; l < m.w.size(); ++l) {
        put_tensor(w, m.w[l]);
        put_tensor(w, m.b[l]);
    }
}

Mlp get_mlp(binio::Reader& r) {
    Mlp m;
    const std::uint32_t layers = r.u32();
    if (layers == 0 || layers > 64) throw_data(r.what() + ": bad layer count");
    for (std::uint32_t l = 0; l < layers; ++l) {
        m.w.push_back(get_tensor(r));
        m.b.push_back(get_tensor(r));
        if (m.w.back().rank() != 2 || m.b.back().rank() != 1 || m.b.back().dim(0) != m.w.back().dim(1))
            throw_data(r.what() + ": inconsistent layer shapes");
        if (l > 0 && m.w[l].dim(0) != m.w[l - 1].dim(1)) throw_data(r.what() + ": inconsistent layer shapes");
    }
    return m;
}

}  // namespace

// ---- schedule and forward process -----------------------------------------

Schedule Schedule::from_betas(std::vector<double> betas) {
    if (betas.empty()) throw_usage("schedule needs at least one step");
    Schedule s;
    s.T = betas.size();
    double prod = 1.0;
    for (double b : betas) {
        if (!(b >= 0.0 && b < 1.0)) throw_usage("beta values must lie in [0, 1)");
        s.alpha.push_back(1.0 - b);
        prod *= 1.0 - b;
        s.alpha_bar.push_back(prod);
    }
    s.beta = std::move(betas);
    return s;
}

Schedule Schedule::linear(std::size_t T, double beta_start, double beta_end) {
    if (T == 0) throw_usage("T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || !(beta_end >= beta_start))
        throw_usage("need 0 < beta_start <= beta_end < 1");
    std::vector<double> b(T);
    for (std::size_t i = 0; i < T; ++i)
        b[i] = T == 1 ? beta_start
                      : beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(T - 1);
    return from_betas(std::move(b));
}

double Schedule::sigma(std::size_t t) const { return std::sqrt(b(t)); }

std::vector<std::vector<double>> forward_chain(std::span<const double> x0, const Schedule& s, Rng& rng) {
    std::vector<std::vector<double>> traj;
    traj.reserve(s.T);
    std::vector<double> x(x0.begin(), x0.end());
    for (std::size_t t = 1; t <= s.T; ++t) {
        const double keep = std::sqrt(1.0 - s.b(t)), noise = std::sqrt(s.b(t));
        for (double& v : x) v = keep * v + noise * rng.normal();
        traj.push_back(x);
    }
    return traj;
}

std::vector<double> marginal_sample(std::span<const double> x0, const Schedule& s, std::size_t t, Rng& rng) {
    check_step(s, t);
    const double ra = std::sqrt(s.abar(t)), rn = std::sqrt(1.0 - s.abar(t));
    std::vector<double> x(x0.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = ra * x0[i] + rn * rng.normal();
    return x;
}

ChainMoments chain_moments(std::span<const double> x0, const Schedule& s, std::size_t chains, std::uint64_t seed,
                           const std::vector<std::size_t>& steps, bool closed_form) {
    if (chains < 2) throw_usage("need at least two chains");
    for (std::size_t t : steps) check_step(s, t);
    const std::size_t dim = x0.size(), ns = steps.size();
    const std::size_t last = steps.empty() ? 0 : *std::max_element(steps.begin(), steps.end());
    const std::size_t blocks = (chains + kMomentBlock - 1) / kMomentBlock;
    // per block: sums of (x - x0) and (x - x0)^2, shifted for accuracy
    std::vector<std::vector<double>> s1(blocks, std::vector<double>(ns * dim, 0.0)), s2 = s1;
    const Rng root(seed);
    parallel_for(blocks, [&](std::size_t b) {
        Rng rng = root.split(static_cast<std::uint64_t>(b));
        const std::size_t count = std::min(kMomentBlock, chains - b * kMomentBlock);
        std::vector<double> x(dim);
        for (std::size_t c = 0; c < count; ++c) {
            auto record = [&](std::size_t k, std::span<const double> v) {
                for (std::size_t i = 0; i < dim; ++i) {
                    const double dlt = v[i] - x0[i];
                    s1[b][k * dim + i] += dlt;
                    s2[b][k * dim + i] += dlt * dlt;
                }
            };
            if (closed_form) {
                for (std::size_t k = 0; k < ns; ++k) record(k, marginal_sample(x0, s, steps[k], rng));
                continue;
            }
            std::copy(x0.begin(), x0.end(), x.begin());
            for (std::size_t t = 1; t <= last; ++t) {
                const double keep = std::sqrt(1.0 - s.b(t)), noise = std::sqrt(s.b(t));
                for (double& v : x) v = keep * v + noise * rng.normal();
                for (std::size_t k = 0; k < ns; ++k)
                    if (steps[k] == t) record(k, x);
            }
        }
    });
    ChainMoments m;
    m.steps = steps;
    const double n = static_cast<double>(chains);
    for (std::size_t k = 0; k < ns; ++k) {
        std::vector<double> mean(dim), var(dim);
        double pooled = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            double a = 0.0, q = 0.0;
            for (std::size_t b = 0; b < blocks; ++b) {
                a += s1[b][k * dim + i];
                q += s2[b][k * dim + i];
            }
            mean[i] = x0[i] + a / n;
            var[i] = (q - a * a / n) / (n - 1.0);
            pooled += var[i];
        }
        m.mean.push_back(mean);
        m.variance.push_back(var);
        m.pooled_variance.push_back(pooled / static_cast<double>(dim));
    }
    return m;
}

// ---- data and networks ------------------------------------------------------

std::array<double, 2> mode_center(int label) {
    if (label == 0) return {2.0, 2.0};
    if (label == 1) return {-2.0, -2.0};
    throw_usage("the two-mode mixture has labels 0 and 1");
}

Dataset make_two_mode_mixture(std::size_t n, std::uint64_t seed, double spread) {
    Dataset d;
    d.classes = 2;
    Rng rng = Rng(seed).split("mixture");
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        const auto c = mode_center(label);
        d.x.push_back(c[0] + spread * rng.normal());
        d.x.push_back(c[1] + spread * rng.normal());
        d.labels.push_back(label);
    }
    return d;
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t l = 0; l < w.size(); ++l) {
        h = affine(h, w[l], b[l]);
        if (l + 1 < w.size()) h = gelu(h);
    }
    return h;
}

std::vector<NamedTensor> Mlp::named(const std::string& prefix) {
    std::vector<NamedTensor> out;
    for (std::size_t l = 0; l < w.size(); ++l) {
        out.push_back({prefix + ".layer" + std::to_string(l) + ".weight", &w[l]});
        out.push_back({prefix + ".layer" + std::to_string(l) + ".bias", &b[l]});
    }
    return out;
}

Mlp Mlp::frozen() const {
    Mlp m;
    for (std::size_t l = 0; l < w.size(); ++l) {
        m.w.push_back(w[l].detach());
        m.b.push_back(b[l].detach());
    }
    return m;
}

Mlp make_mlp(const std::vector<std::size_t>& sizes, Rng rng) {
    if (sizes.size() < 2) throw_usage("an MLP needs at least two layer sizes");
    Mlp m;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::size_t in = sizes[l], out = sizes[l + 1];
        std::vector<double> wv(in * out, 0.0), bv(out, 0.0);
        // the output layer starts at zero, the rest ~ U(+-1/sqrt(fan_in))
        if (l + 2 < sizes.size()) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            Rng lw = rng.split("weight").split(l), lb = rng.split("bias").split(l);
            for (double& v : wv) v = (2.0 * lw.uniform() - 1.0) * bound;
            for (double& v : bv) v = (2.0 * lb.uniform() - 1.0) * bound;
        }
        m.w.emplace_back(Shape{in, out}, std::move(wv), true);
        m.b.emplace_back(Shape{out}, std::move(bv), true);
    }
    return m;
}

Tensor time_embedding(std::span<const std::size_t> steps, std::size_t dim) {
    if (dim < 2 || dim % 2) throw_usage("time embedding width must be even and >= 2");
    const std::size_t half = dim / 2;
    std::vector<double> v(steps.size() * dim);
    for (std::size_t b = 0; b < steps.size(); ++b)
        for (std::size_t i = 0; i < half; ++i) {
            const double f = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
            const double a = static_cast<double>(steps[b]) * f;
            v[b * dim + 2 * i] = std::sin(a);
            v[b * dim + 2 * i + 1] = std::cos(a);
        }
    return constant({steps.size(), dim}, std::move(v));
}

Tensor Denoiser::predict_noise(const Tensor& x, std::span<const std::size_t> steps, std::span<const int> labels) const {
    if (x.rank() != 2 || x.dim(1) != 2 || x.dim(0) != steps.size() || steps.size() != labels.size())
        throw_shape("denoiser input must be (B,2) with B steps and labels");
    return net.forward(concat_channels({x, time_embedding(steps, temb_dim), one_hot(labels, classes)}));
}

Tensor NoisyClassifier::logits(const Tensor& x, std::span<const std::size_t> steps) const {
    if (x.rank() != 2 || x.dim(1) != 2 || x.dim(0) != steps.size()) throw_shape("classifier input must be (B,2) with B steps");
    return net.forward(concat_channels({x, time_embedding(steps, temb_dim)}));
}

// ---- training ---------------------------------------------------------------

DenoiserResult train_denoiser(const Dataset& data, const Schedule& s, const TrainConfig& cfg) {
    check_dataset(data);
    DenoiserResult r;
    r.model.classes = data.classes;
    r.model.temb_dim = cfg.temb_dim;
    const Rng root = Rng(cfg.seed).split("denoiser");
    r.model.net = make_mlp({2 + cfg.temb_dim + data.classes, cfg.hidden, cfg.hidden, 2}, root.split("init"));
    auto named = r.model.net.named("denoiser");
    auto state = OptimizerState::for_parameters(named);
    const AdamWConfig opt{.learning_rate = cfg.learning_rate, .weight_decay = 0.0};
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const auto b = draw_noised(data, s, cfg.batch, root.split("batch").split(step));
        for (auto& p : named) p.tensor->zero_grad();
        const Tensor pred = r.model.predict_noise(b.x, b.steps, b.labels);
        const Tensor loss = scale(mse(pred, constant({cfg.batch, 2}, b.eps)), 2.0);
        const double v = loss.item();
        if (!std::isfinite(v)) throw_numeric("denoiser loss is not finite at step " + std::to_string(step + 1));
        backward(loss);
        adamw_step(named, state, opt);
        r.losses.push_back(v);
    }
    return r;
}

ClassifierResult train_noisy_classifier(const Dataset& data, const Schedule& s, const TrainConfig& cfg) {
    check_dataset(data);
    ClassifierResult r;
    r.model.classes = data.classes;
    r.model.temb_dim = cfg.temb_dim;
    const Rng root = Rng(cfg.seed).split("classifier");
    r.model.net = make_mlp({2 + cfg.temb_dim, cfg.hidden, cfg.hidden, data.classes}, root.split("init"));
    auto named = r.model.net.named("classifier");
    auto state = OptimizerState::for_parameters(named);
    const AdamWConfig opt{.learning_rate = cfg.learning_rate, .weight_decay = 0.0};
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const auto b = draw_noised(data, s, cfg.batch, root.split("batch").split(step));
        for (auto& p : named) p.tensor->zero_grad();
        const Tensor loss = softmax_cross_entropy(r.model.logits(b.x, b.steps), one_hot(b.labels, data.classes));
        const double v = loss.item();
        if (!std::isfinite(v)) throw_numeric("classifier loss is not finite at step " + std::to_string(step + 1));
        backward(loss);
        adamw_step(named, state, opt);
        r.losses.push_back(v);
    }
    return r;
}

double denoiser_loss(const Denoiser& d, const Dataset& data, const Schedule& s, std::size_t n, std::uint64_t seed) {
    check_dataset(data);
    NoGradGuard ng;
    const auto b = draw_noised(data, s, n, Rng(seed).split("eval"));
    return 2.0 * mse(d.predict_noise(b.x, b.steps, b.labels), constant({n, 2}, b.eps)).item();
}

double classifier_accuracy(const NoisyClassifier& c, const Dataset& data, const Schedule& s, std::size_t t,
                           std::size_t n, std::uint64_t seed) {
    check_dataset(data);
    check_step(s, t);
    NoGradGuard ng;
    const auto b = draw_noised(data, s, n, Rng(seed).split("accuracy"), t);
    const Tensor z = c.logits(b.x, b.steps);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = z.data().subspan(i * c.classes, c.classes);
        hits += static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == b.labels[i];
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

std::vector<double> log_prob(const NoisyClassifier& c, const Tensor& x, std::size_t t, std::span<const int> labels) {
    NoGradGuard ng;
    const std::vector<std::size_t> steps(labels.size(), t);
    const Tensor z = c.logits(x, steps);
    std::vector<double> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto row = z.data().subspan(i * c.classes, c.classes);
        const std::size_t y = static_cast<std::size_t>(labels[i]);
        const std::size_t arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        const double m = row[arg];
        double rest = 0.0;  // sum over j != arg
        for (std::size_t j = 0; j < c.classes; ++j)
            if (j != arg) rest += std::exp(row[j] - m);
        out[i] = (row[y] - m) - std::log1p(rest);
    }
    return out;
}

std::vector<double> guidance_gradient(const NoisyClassifier& c, std::span<const double> x, std::size_t t,
                                      std::span<const int> labels) {
    if (x.size() != labels.size() * 2) throw_shape("guidance gradient needs B x 2 points");
    const std::vector<std::size_t> steps(labels.size(), t);
    return grad_log_prob(freeze(c), x, steps, labels);
}

// ---- sampling ---------------------------------------------------------------

std::array<double, 2> sample(int label, const Schedule& s, const Denoiser& d, Rng& rng) {
    std::vector<Rng> rngs{rng};
    std::vector<double> x(2);
    const int labels[1] = {label};
    run_chains(x, labels, rngs, s, d, nullptr, 0.0);
    rng = rngs[0];
    return {x[0], x[1]};
}

std::array<double, 2> guided_sample(int label, const Schedule& s, const Denoiser& d, const NoisyClassifier& c,
                                    double scale, Rng& rng) {
    if (!(scale >= 0.0)) throw_usage("guidance scale must be >= 0");
    const NoisyClassifier frozen = freeze(c);
    std::vector<Rng> rngs{rng};
    std::vector<double> x(2);
    const int labels[1] = {label};
    run_chains(x, labels, rngs, s, d, &frozen, scale);
    rng = rngs[0];
    return {x[0], x[1]};
}

std::vector<double> sample_many(std::span<const int> labels, const Schedule& s, const Denoiser& d, std::uint64_t seed) {
    return run_many(labels, s, d, nullptr, 0.0, seed);
}

std::vector<double> guided_sample_many(std::span<const int> labels, const Schedule& s, const Denoiser& d,
                                       const NoisyClassifier& c, double scale, std::uint64_t seed) {
    if (!(scale >= 0.0)) throw_usage("guidance scale must be >= 0");
    const NoisyClassifier frozen = freeze(c);
    return run_many(labels, s, d, &frozen, scale, seed);
}

void write_samples_csv(const fs::path& path, std::span<const double> xy, std::span<const int> labels, double scale) {
    if (xy.size() != labels.size() * 2) throw_shape("samples must be n x 2");
    std::ofstream os(path);
    if (!os) throw_data("cannot write " + path.string());
    os << "x,y,label,guidance_scale\n";
    char buf[96];
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d,%.17g\n", xy[i * 2], xy[i * 2 + 1], labels[i], scale);
        os << buf;
    }
    if (!os) throw_data("failed writing " + path.string());
}

void save_bundle(const fs::path& path, Bundle& b) {
    binio::Writer w;
    w.bytes(kBundleMagic, 8);
    w.u32(kBundleVersion);
    w.u64(b.schedule.T);
    w.f64s(b.schedule.beta.data(), b.schedule.T);
    w.u64(b.denoiser.classes);
    w.u64(b.denoiser.temb_dim);
    put_mlp(w, b.denoiser.net);
    w.u64(b.classifier.classes);
    w.u64(b.classifier.temb_dim);
    put_mlp(w, b.classifier.net);
    w.finish();
    w.save(path);
}

Bundle load_bundle(const fs::path& path) {
    auto r = binio::Reader::open(path);
    r.verify_checksum();
    r.expect_magic(std::string_view(kBundleMagic, 8));
    if (const auto v = r.u32(); v != kBundleVersion) throw_data(path.string() + ": unsupported version " + std::to_string(v));
    Bundle b;
    const std::uint64_t T = r.u64();
    if (T == 0 || T > r.remaining() / 8) throw_data(path.string() + ": bad step count");
    std::vector<double> betas(T);
    r.f64s(betas.data(), T);
    b.schedule = Schedule::from_betas(std::move(betas));
    b.denoiser.classes = r.u64();
    b.denoiser.temb_dim = r.u64();
    b.denoiser.net = get_mlp(r);
    b.classifier.classes = r.u64();
    b.classifier.temb_dim = r.u64();
    b.classifier.net = get_mlp(r);
    if (!r.at_end()) throw_data(path.string() + ": trailing bytes");
    if (b.denoiser.net.w.front().dim(0) != 2 + b.denoiser.temb_dim + b.denoiser.classes ||
        b.classifier.net.w.front().dim(0) != 2 + b.classifier.temb_dim ||
        b.classifier.net.w.back().dim(1) != b.classifier.classes)
        throw_data(path.string() + ": network shapes do not match the stored sizes");
    return b;
}

}  // namespace gexse::diffusion
