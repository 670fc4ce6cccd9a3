#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "gexse/ops.hpp"
#include "gexse/rng.hpp"
#include "gexse/tensor.hpp"

namespace gexse {

enum class DatasetId { ucihar, pamap2, opportunity, synthetic };

std::string dataset_name(DatasetId id);
DatasetId parse_dataset(const std::string& name);

/// Architecture hyperparameters of the multi-task encoder.
struct EncoderConfig {
    std::size_t in_channels = 9;
    std::size_t window_length = 128;
    std::size_t width = 64;  // D, divisible by 4
    std::size_t n_blocks = 2;
    std::size_t num_classes = 6;
    std::size_t embed_dim = 64;
    std::size_t stem_kernel = 9;
    std::size_t head_kernel = 3;
    std::array<std::size_t, 3> branch_kernels{1, 3, 5};

    /// Throws a usage error when any invariant is violated.
    void validate() const;

    /// Desk-scale defaults: UCI-HAR (9x128, D=64, 6 classes), PAMAP2
    /// (36x256, D=128, 12 classes), Opportunity (77x90, D=128, 17 classes).
    static EncoderConfig for_dataset(DatasetId id);

    bool operator==(const EncoderConfig&) const = default;
};

/// One Fourier convolution site: conv over stacked (real, imag) spectra,
/// batch-norm and ReLU. `channels` is the pre-stack channel count c; the
/// kernel is (2c, 2c, k).
struct FfcParams {
    std::size_t channels = 0;
    std::size_t kernel_size = 1;
    Tensor kernel;
    Tensor bias;
    Tensor gamma;
    Tensor beta;
    /// Updated by training-mode forwards only.
    mutable NormState norm;
};

struct PmbBranch {
    Tensor expand_w, expand_b;    // (2D, D, 1), (2D)
    FfcParams ffc;                // channels 2D
    Tensor squeeze_w, squeeze_b;  // (D/4, 2D, 1), (D/4)
};

struct PmbBlockParams {
    std::array<PmbBranch, 3> branches;
    Tensor mlp_w, mlp_b;  // (D/4, D, 1), (D/4)
};

struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

struct NamedNormState {
    std::string name;
    NormState* state;
};

struct EncoderParams {
    Tensor stem_w, stem_b;  // (D, C_in, 1) channel projection
    FfcParams stem_ffc;
    std::vector<PmbBlockParams> blocks;
    Tensor cls_w1, cls_b1;  // (D, D)
    FfcParams cls_ffc;      // 1 channel over the pooled vector
    Tensor cls_w2, cls_b2;  // (D, k)
    Tensor emb_w, emb_b;    // (D, N)

    std::vector<NamedTensor> named_parameters();
    std::vector<NamedNormState> named_norm_states();
    std::size_t parameter_count() const;
    /// Independent deep copy (fresh leaves, copied statistics).
    EncoderParams clone() const;
};

/// Deterministic init: every tensor draws from its own named split of `rng`.
/// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); gamma = 1, beta = 0.
EncoderParams init_encoder(const EncoderConfig& cfg, const Rng& rng);

/// Trainable parameter count implied by a config, without allocating.
std::size_t parameter_census(const EncoderConfig& cfg);

/// What the explanation stage needs from a forward pass.
struct ActivationTrace {
    Tensor input;      // (B, C_in, T) as fed in
    Tensor stem_proj;  // (B, D, T) after the channel projection
};

struct EncoderOutput {
    Tensor logits;     // (B, k)
    Tensor embedding;  // (B, N)
    Tensor pooled;     // (B, D)
    ActivationTrace trace;
};

/// x -> FFT -> stack(real, imag) -> conv -> BN -> ReLU -> split -> iFFT. (B,c,T) -> (B,c,T).
Tensor ffc_forward(const Tensor& x, const FfcParams& p, bool training);

/// Four parallel branches concatenated on channels, then GELU. (B,D,T) -> (B,D,T).
Tensor pmb_forward(const Tensor& x, const PmbBlockParams& p, bool training);

Tensor classification_head(const Tensor& pooled, const EncoderParams& p, bool training);
Tensor embedding_head(const Tensor& pooled, const EncoderParams& p);

EncoderOutput encoder_forward(const Tensor& x, const EncoderParams& p, const EncoderConfig& cfg, bool training);

}  // namespace gexse
