#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gexse/data.hpp"
#include "gexse/encoder.hpp"
#include "gexse/metrics.hpp"
#include "gexse/tensor.hpp"

namespace gexse {

enum class Objective {
    multitask,        // alpha * mse(embedding, teacher) + beta * cross-entropy
    classifier_only,  // beta * cross-entropy alone; the embedding head gets no gradient
};

struct TrainConfig {
    double alpha = 1.0;  // weight of the representation loss
    double beta = 1.0;   // weight of the classification loss
    double learning_rate = 1e-3;
    std::size_t epochs = 300;
    std::size_t batch_size = 128;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;  // 0: only best/last
    Objective objective = Objective::multitask;
    /// Stop after the first epoch whose test macro-F1 reaches this value.
    std::optional<double> stop_at_macro_f1;

    void validate() const;
};

struct LossParts {
    Tensor total;
    double l_class = 0.0;
    double l_repr = 0.0;
};

/// total = alpha * mse(embedding, teacher) + beta * CE(logits, one_hot).
LossParts multitask_loss(const Tensor& logits, const Tensor& embedding, const Tensor& one_hot,
                         const Tensor& teacher, const TrainConfig& cfg);

struct AdamWConfig {
    double learning_rate = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    std::uint64_t step = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static OptimizerState for_parameters(const std::vector<NamedTensor>& params);
    bool operator==(const OptimizerState&) const = default;
};

/// One decoupled-decay Adam step: p <- p * (1 - lr*wd), then the
/// bias-corrected adaptive update. Parameters with no accumulated gradient
/// are left untouched (decay included). A non-finite gradient throws a
/// numeric error naming the parameter, before anything is modified.
void adamw_step(const std::vector<NamedTensor>& params, OptimizerState& state, const AdamWConfig& cfg);

/// Sidecar "GEXSEOPT": u32 version, u64 step, per tensor name + m + v, FNV-1a trailer.
void save_optimizer_state(const std::filesystem::path& path, const OptimizerState& state);
OptimizerState load_optimizer_state(const std::filesystem::path& path);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double total = 0.0;
    double l_class = 0.0;
    double l_repr = 0.0;
    double test_macro_f1 = 0.0;
    bool operator==(const EpochRecord&) const = default;
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;
    /// Per mini-batch (total, l_class, l_repr), in step order.
    std::vector<std::array<double, 3>> steps;
    std::size_t best_epoch = 0;
    double best_macro_f1 = 0.0;

    /// epoch,total,l_class,l_repr,test_macro_f1 with a commented config header.
    void write_csv(const std::filesystem::path& path, const std::string& header_comment = {}) const;
    bool operator==(const TrainingLog&) const = default;
};

struct TrainOutputs {
    /// When set: best.gxck, last.gxck (+ .opt sidecar), epoch_NNNN.gxck every
    /// checkpoint_every epochs, and train_log.csv.
    std::optional<std::filesystem::path> dir;
    nlohmann::json metadata = nlohmann::json::object();
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    EncoderParams best;  // parameters at best_epoch
    EncoderParams last;
    OptimizerState optimizer;
    TrainingLog log;
};

TrainResult train(const WindowSet& train_ws, const WindowSet& test_ws, const TeacherTable& teacher,
                  const EncoderConfig& enc_cfg, const TrainConfig& cfg, const TrainOutputs& out = {});

struct Predictions {
    std::vector<int> predicted;
    std::vector<double> logits;      // W x k
    std::vector<double> embeddings;  // W x N
};

/// Eval-mode forward over every window, batched and spread over workers.
Predictions predict(const WindowSet& ws, const EncoderParams& params, const EncoderConfig& cfg,
                    std::size_t batch_size = 256);

/// Fraction of windows whose embedding is most cosine-similar to the teacher
/// vector of its own label.
double teacher_alignment(const Predictions& p, const WindowSet& ws, const TeacherTable& teacher);

/// Baseline: one affine map from the flattened window to k logits.
struct LinearProbe {
    std::size_t inputs = 0;
    std::size_t classes = 0;
    Tensor w;  // (C*T, k)
    Tensor b;  // (k)

    Tensor logits(const Tensor& x) const;  // (B,C,T) -> (B,k)
    std::vector<int> predict(const WindowSet& ws) const;
};

struct LinearProbeResult {
    LinearProbe best;
    TrainingLog log;  // l_repr stays 0
};

/// Cross-entropy + AdamW with the same batching, shuffling and best-epoch rule as train().
LinearProbeResult train_linear_probe(const WindowSet& train_ws, const WindowSet& test_ws, const TrainConfig& cfg);

double macro_f1_of(std::span<const int> predicted, const WindowSet& ws);

}  // namespace gexse
