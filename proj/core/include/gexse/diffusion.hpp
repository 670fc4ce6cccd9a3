#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gexse/encoder.hpp"
#include "gexse/rng.hpp"
#include "gexse/tensor.hpp"

namespace gexse::diffusion {

/// Steps are numbered 1..T; arrays are indexed t-1.
struct Schedule {
    std::size_t T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // running product of alpha

    /// Linear beta from `beta_start` to `beta_end` inclusive.
    static Schedule linear(std::size_t T = 500, double beta_start = 1e-4, double beta_end = 0.02);
    /// Any betas in [0, 1) (zero is allowed here for noiseless what-if chains).
    static Schedule from_betas(std::vector<double> betas);

    double b(std::size_t t) const { return beta[t - 1]; }
    double a(std::size_t t) const { return alpha[t - 1]; }
    double abar(std::size_t t) const { return alpha_bar[t - 1]; }
    double sigma(std::size_t t) const;  // sqrt(beta_t)
};

/// x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps for t = 1..T. Returns T rows.
std::vector<std::vector<double>> forward_chain(std::span<const double> x0, const Schedule& s, Rng& rng);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps in one step.
std::vector<double> marginal_sample(std::span<const double> x0, const Schedule& s, std::size_t t, Rng& rng);

/// Per-step moments over many independent chains started at x0.
struct ChainMoments {
    std::vector<std::size_t> steps;
    std::vector<std::vector<double>> mean;      // per step, per dim
    std::vector<std::vector<double>> variance;  // per step, per dim (about the sample mean)
    std::vector<double> pooled_variance;        // per step, averaged over dims
};

/// Chains run in fixed blocks of 1000, block b drawing from Rng(seed).split(b),
/// so results do not depend on the worker count. `closed_form` samples each
/// requested step directly from the marginal instead of stepping.
ChainMoments chain_moments(std::span<const double> x0, const Schedule& s, std::size_t chains, std::uint64_t seed,
                           const std::vector<std::size_t>& steps, bool closed_form = false);

/// Two-dimensional labelled points.
struct Dataset {
    std::vector<double> x;  // n x 2
    std::vector<int> labels;
    std::size_t classes = 0;
    std::size_t size() const { return labels.size(); }
};

/// Equal mixture: label 0 around (+2,+2), label 1 around (-2,-2), isotropic `spread`.
Dataset make_two_mode_mixture(std::size_t n, std::uint64_t seed, double spread = 0.5);
std::array<double, 2> mode_center(int label);

/// Stack of affine layers with GELU between them.
struct Mlp {
    std::vector<Tensor> w, b;
    Tensor forward(const Tensor& x) const;
    std::vector<NamedTensor> named(const std::string& prefix);
    /// Copy with requires_grad off, safe to share between sampling threads.
    Mlp frozen() const;
};

Mlp make_mlp(const std::vector<std::size_t>& sizes, Rng rng);

/// Sinusoidal embedding, (B, dim) with sin/cos pairs at geometric frequencies.
Tensor time_embedding(std::span<const std::size_t> steps, std::size_t dim);

struct Denoiser {
    Mlp net;  // [x, temb, one-hot] -> eps
    std::size_t classes = 2;
    std::size_t temb_dim = 16;

    Tensor predict_noise(const Tensor& x, std::span<const std::size_t> steps, std::span<const int> labels) const;
};

struct NoisyClassifier {
    Mlp net;  // [x, temb] -> logits
    std::size_t classes = 2;
    std::size_t temb_dim = 16;

    Tensor logits(const Tensor& x, std::span<const std::size_t> steps) const;
};

struct TrainConfig {
    std::size_t hidden = 128;
    std::size_t temb_dim = 16;
    std::size_t steps = 4000;
    std::size_t batch = 256;
    double learning_rate = 2e-3;
    std::uint64_t seed = 0;
};

struct DenoiserResult {
    Denoiser model;
    std::vector<double> losses;  // one per optimizer step
};

struct ClassifierResult {
    NoisyClassifier model;
    std::vector<double> losses;
};

/// Minimizes E || eps - eps_theta(x_t, t, y) ||^2 with t ~ U{1..T} and x_t
/// drawn from the closed-form marginal. Throws a numeric error on a NaN loss.
DenoiserResult train_denoiser(const Dataset& data, const Schedule& s, const TrainConfig& cfg);
ClassifierResult train_noisy_classifier(const Dataset& data, const Schedule& s, const TrainConfig& cfg);

/// Mean || eps - eps_theta ||^2 over `n` fresh draws (no update).
double denoiser_loss(const Denoiser& d, const Dataset& data, const Schedule& s, std::size_t n, std::uint64_t seed);
/// Accuracy of f_phi on `n` points of `data` noised to step t.
double classifier_accuracy(const NoisyClassifier& c, const Dataset& data, const Schedule& s, std::size_t t,
                           std::size_t n, std::uint64_t seed);

/// log f_phi(y | x, t) per row, computed without cancellation.
std::vector<double> log_prob(const NoisyClassifier& c, const Tensor& x, std::size_t t, std::span<const int> labels);
/// Row-wise gradient of log f_phi(y | x, t) with respect to x (B x 2).
std::vector<double> guidance_gradient(const NoisyClassifier& c, std::span<const double> x, std::size_t t,
                                      std::span<const int> labels);

/// Ancestral sampling from x_T ~ N(0, I). Unguided path.
std::array<double, 2> sample(int label, const Schedule& s, const Denoiser& d, Rng& rng);
/// Same, with the mean shifted by scale * sigma_t * grad log f_phi(y | x_t, t).
std::array<double, 2> guided_sample(int label, const Schedule& s, const Denoiser& d, const NoisyClassifier& c,
                                    double scale, Rng& rng);

/// Many chains; chain i uses Rng(seed).split(i). Chains are evaluated in
/// fixed-size batches on worker threads. Returns n x 2.
std::vector<double> sample_many(std::span<const int> labels, const Schedule& s, const Denoiser& d, std::uint64_t seed);
std::vector<double> guided_sample_many(std::span<const int> labels, const Schedule& s, const Denoiser& d,
                                       const NoisyClassifier& c, double scale, std::uint64_t seed);

/// x,y,label,guidance_scale
void write_samples_csv(const std::filesystem::path& path, std::span<const double> xy, std::span<const int> labels,
                       double scale);

/// "GXDIFF01": schedule, denoiser and classifier weights, FNV-1a trailer.
struct Bundle {
    Schedule schedule;
    Denoiser denoiser;
    NoisyClassifier classifier;
};
void save_bundle(const std::filesystem::path& path, Bundle& b);
Bundle load_bundle(const std::filesystem::path& path);

}  // namespace gexse::diffusion
