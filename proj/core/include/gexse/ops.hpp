#pragma once

#include <cstddef>
#include <vector>

#include "gexse/tensor.hpp"

namespace gexse {

// ---- elementwise / structural ---------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// Sum of all elements, shape (1).
Tensor sum(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor relu(const Tensor& x);
/// Exact GELU, x * Phi(x) with the Gaussian CDF via erfc.
Tensor gelu(const Tensor& x);

// ---- linear algebra -------------------------------------------------------

/// (m,k) x (k,n) -> (m,n).
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] * w[in, out] + b[out], broadcast over the leading dims of x.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- spectral -------------------------------------------------------------

/// Half spectrum of a real signal along the last axis.
struct ComplexSpectrum {
    Tensor real;
    Tensor imag;
    std::size_t original_length = 0;
};

/// Unnormalized forward transform; the last axis n >= 2 becomes n/2+1 bins.
ComplexSpectrum real_fft(const Tensor& x);
/// Inverse with 1/n scaling; recovers a real signal of `original_length`.
Tensor inverse_real_fft(const ComplexSpectrum& s);

// ---- 1-D convolutional stack ----------------------------------------------

/// Cross-correlation. x (B,Cin,L), kernel (Cout,Cin,K), bias (Cout).
/// Output length L + 2*padding - K + 1.
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t padding);

/// Running statistics owned by one batch-norm site.
struct NormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;

    NormState() = default;
    explicit NormState(std::size_t channels) : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel normalization over (batch, length) of x (B,C,L).
/// Training mode normalizes with batch statistics and updates `state`
/// (running variance uses the unbiased estimate); eval mode only reads it.
Tensor batch_norm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, NormState& state, bool training);

/// (B,C,L) -> (B,C), mean over L.
Tensor global_avg_pool(const Tensor& x);

/// Concatenate along axis 1; every other dim must match.
Tensor concat_channels(const std::vector<Tensor>& parts);
/// Inverse of concat_channels; sizes must sum to dim(1).
std::vector<Tensor> split_channels(const Tensor& x, const std::vector<std::size_t>& sizes);

// ---- losses ---------------------------------------------------------------

/// Mean over the batch of -sum_i y_i log softmax(z)_i. logits and targets (B,k), k >= 2.
/// Targets are treated as constants.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot);
/// Mean of elementwise squared differences.
Tensor mse(const Tensor& p, const Tensor& q);

/// Row-wise softmax of (B,k) values, no graph.
std::vector<double> softmax_rows(std::span<const double> logits, std::size_t rows, std::size_t cols);

}  // namespace gexse
