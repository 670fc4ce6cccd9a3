#include "gexse/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "gexse/binio.hpp"
#include "gexse/checkpoint.hpp"
#include "gexse/error.hpp"
#include "gexse/ops.hpp"
#include "gexse/parallel.hpp"
#include "gexse/rng.hpp"

namespace gexse {

namespace fs = std::filesystem;

namespace {

constexpr char kOptMagic[] = "GEXSEOPT";
constexpr std::uint32_t kOptVersion = 1;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch)
        out.emplace_back(order.begin() + i, order.begin() + std::min(n, i + batch));
    return out;
}

struct StepLoss {
    double total, l_class, l_repr;
};

// Shared epoch driver for the encoder and the probe: shuffle, step every
// batch, score the test split, keep the best epoch.
template <typename Step, typename Score, typename OnBest, typename AfterEpoch>
TrainingLog run_epochs(const WindowSet& train_ws, const TrainConfig& cfg, Step&& step, Score&& score,
                       OnBest&& on_best, AfterEpoch&& after_epoch) {
    TrainingLog log;
    bool have_best = false;
    const Rng shuffle_root = Rng(cfg.seed).split("shuffle");
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        for (const auto& batch : make_batches(train_ws.size(), cfg.batch_size, shuffle_root.split(epoch))) {
            const StepLoss s = step(batch);
            if (!std::isfinite(s.total))
                throw_numeric("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(log.steps.size() + 1));
            log.steps.push_back({s.total, s.l_class, s.l_repr});
            const double w = static_cast<double>(batch.size());
            rec.total += w * s.total;
            rec.l_class += w * s.l_class;
            rec.l_repr += w * s.l_repr;
        }
        const double n = static_cast<double>(train_ws.size());
        rec.total /= n;
        rec.l_class /= n;
        rec.l_repr /= n;
        rec.test_macro_f1 = score();
        log.epochs.push_back(rec);
        if (!have_best || rec.test_macro_f1 > log.best_macro_f1) {
            have_best = true;
            log.best_epoch = epoch;
            log.best_macro_f1 = rec.test_macro_f1;
            on_best();
        }
        after_epoch(rec, log);
        if (cfg.stop_at_macro_f1 && rec.test_macro_f1 >= *cfg.stop_at_macro_f1) {
            spdlog::info("macro-F1 {:.4f} reached the stop threshold at epoch {}", rec.test_macro_f1, epoch);
            break;
        }
    }
    return log;
}

void check_training_inputs(const WindowSet& train_ws, const WindowSet& test_ws) {
    if (train_ws.size() == 0) throw_data("training split is empty");
    if (test_ws.size() == 0) throw_data("test split is empty");
    if (train_ws.channels != test_ws.channels || train_ws.length != test_ws.length)
        throw_shape("train and test windows differ in shape");
    if (train_ws.label_names != test_ws.label_names) throw_data("train and test label sets differ");
}

AdamWConfig adamw_from(const TrainConfig& cfg) {
    AdamWConfig a;
    a.learning_rate = cfg.learning_rate;
    a.weight_decay = cfg.weight_decay;
    return a;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw_usage("alpha and beta must be >= 0");
    if (!(alpha + beta > 0.0)) throw_usage("alpha + beta must be > 0");
    if (!(learning_rate > 0.0)) throw_usage("learning rate must be > 0");
    if (!(weight_decay >= 0.0)) throw_usage("weight decay must be >= 0");
    if (batch_size == 0) throw_usage("batch size must be >= 1");
    if (epochs == 0) throw_usage("epochs must be >= 1");
}

LossParts multitask_loss(const Tensor& logits, const Tensor& embedding, const Tensor& one_hot,
                         const Tensor& teacher, const TrainConfig& cfg) {
    if (embedding.shape() != teacher.shape())
        throw_shape("embedding " + shape_str(embedding.shape()) + " does not match teacher target " +
                    shape_str(teacher.shape()));
    const Tensor ce = softmax_cross_entropy(logits, one_hot);
    const Tensor rep = mse(embedding, teacher);
    LossParts out;
    out.l_class = ce.item();
    out.l_repr = rep.item();
    out.total = add(scale(rep, cfg.alpha), scale(ce, cfg.beta));
    return out;
}

OptimizerState OptimizerState::for_parameters(const std::vector<NamedTensor>& params) {
    OptimizerState s;
    for (const auto& p : params) {
        s.names.push_back(p.name);
        s.m.emplace_back(p.tensor->numel(), 0.0);
        s.v.emplace_back(p.tensor->numel(), 0.0);
    }
    return s;
}

void adamw_step(const std::vector<NamedTensor>& params, OptimizerState& state, const AdamWConfig& cfg) {
    if (state.names.size() != params.size()) throw_usage("optimizer state does not match the parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.names[i] != params[i].name || state.m[i].size() != params[i].tensor->numel())
            throw_usage("optimizer state entry " + state.names[i] + " does not match parameter " + params[i].name);
        const auto g = params[i].tensor->grad();
        for (std::size_t j = 0; j < g.size(); ++j)
            if (!std::isfinite(g[j]))
                throw_numeric("non-finite gradient in " + params[i].name + " at element " + std::to_string(j) +
                              " (value " + num(g[j]) + ")");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto g = params[i].tensor->grad();
        if (g.empty()) continue;
        auto p = params[i].tensor->mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            p[j] *= decay;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

void save_optimizer_state(const fs::path& path, const OptimizerState& state) {
    binio::Writer w;
    w.bytes(kOptMagic, 8);
    w.u32(kOptVersion);
    w.u64(state.step);
    w.u32(static_cast<std::uint32_t>(state.names.size()));
    for (std::size_t i = 0; i < state.names.size(); ++i) {
        w.str16(state.names[i]);
        w.u64(state.m[i].size());
        w.f64s(state.m[i].data(), state.m[i].size());
        w.f64s(state.v[i].data(), state.v[i].size());
    }
    w.finish();
    w.save(path);
}

OptimizerState load_optimizer_state(const fs::path& path) {
    auto r = binio::Reader::open(path);
    r.verify_checksum();
    r.expect_magic(std::string_view(kOptMagic, 8));
    if (const auto v = r.u32(); v != kOptVersion)
        throw_data(path.string() + ": unsupported optimizer state version " + std::to_string(v));
    OptimizerState s;
    s.step = r.u64();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        s.names.push_back(r.str16());
        const std::uint64_t n = r.u64();
        if (n > r.remaining() / 16) throw_data(path.string() + ": truncated optimizer state");
        s.m.emplace_back(n);
        s.v.emplace_back(n);
        r.f64s(s.m.back().data(), n);
        r.f64s(s.v.back().data(), n);
    }
    if (!r.at_end()) throw_data(path.string() + ": trailing bytes in optimizer state");
    return s;
}

void TrainingLog::write_csv(const fs::path& path, const std::string& header_comment) const {
    std::ostringstream os;
    std::istringstream lines(header_comment);
    for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
    os << "epoch,total,l_class,l_repr,test_macro_f1\n";
    for (const auto& e : epochs)
        os << e.epoch << ',' << num(e.total) << ',' << num(e.l_class) << ',' << num(e.l_repr) << ','
           << num(e.test_macro_f1) << '\n';
    std::ofstream f(path);
    if (!f) throw_data("cannot write " + path.string());
    f << os.str();
    if (!f) throw_data("failed writing " + path.string());
}

double macro_f1_of(std::span<const int> predicted, const WindowSet& ws) {
    return metrics(confusion(predicted, ws.labels, ws.num_classes())).macro_f1;
}

Predictions predict(const WindowSet& ws, const EncoderParams& params, const EncoderConfig& cfg,
                    std::size_t batch_size) {
    if (ws.channels != cfg.in_channels || ws.length != cfg.window_length)
        throw_shape("windows are " + std::to_string(ws.channels) + "x" + std::to_string(ws.length) +
                    " but the model expects " + std::to_string(cfg.in_channels) + "x" +
                    std::to_string(cfg.window_length));
    const std::size_t n = ws.size();
    const std::size_t k = cfg.num_classes, e = cfg.embed_dim;
    Predictions out;
    out.predicted.assign(n, 0);
    out.logits.assign(n * k, 0.0);
    out.embeddings.assign(n * e, 0.0);
    batch_size = std::max<std::size_t>(batch_size, 1);
    const std::size_t batches = (n + batch_size - 1) / batch_size;
    parallel_for(batches, [&](std::size_t b) {
        NoGradGuard guard;
        const std::size_t lo = b * batch_size, hi = std::min(n, lo + batch_size);
        std::vector<std::size_t> idx(hi - lo);
        std::iota(idx.begin(), idx.end(), lo);
        const auto o = encoder_forward(ws.batch(idx), params, cfg, false);
        std::copy(o.logits.data().begin(), o.logits.data().end(), out.logits.begin() + lo * k);
        std::copy(o.embedding.data().begin(), o.embedding.data().end(), out.embeddings.begin() + lo * e);
    });
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = out.logits.begin() + i * k;
        out.predicted[i] = static_cast<int>(std::max_element(row, row + k) - row);
    }
    return out;
}

double teacher_alignment(const Predictions& p, const WindowSet& ws, const TeacherTable& teacher) {
    const std::size_t n = ws.size(), d = teacher.dim, k = teacher.labels.size();
    if (n == 0) return 0.0;
    if (p.embeddings.size() != n * d) throw_shape("embedding width does not match the teacher table");
    std::vector<double> tnorm(k);
    for (std::size_t c = 0; c < k; ++c) {
        double s = 0.0;
        for (double v : teacher.embedding(c)) s += v * v;
        tnorm[c] = std::sqrt(s);
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = p.embeddings.data() + i * d;
        double best = -2.0;
        std::size_t arg = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const auto t = teacher.embedding(c);
            double dot = 0.0, zz = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dot += z[j] * t[j];
                zz += z[j] * z[j];
            }
            const double denom = std::sqrt(zz) * tnorm[c];
            const double cosine = denom > 0.0 ? dot / denom : 0.0;
            if (cosine > best) {
                best = cosine;
                arg = c;
            }
        }
        hits += static_cast<int>(arg) == ws.labels[i];
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

TrainResult train(const WindowSet& train_ws, const WindowSet& test_ws, const TeacherTable& teacher,
                  const EncoderConfig& enc_cfg, const TrainConfig& cfg, const TrainOutputs& out) {
    cfg.validate();
    enc_cfg.validate();
    check_training_inputs(train_ws, test_ws);
    if (train_ws.channels != enc_cfg.in_channels || train_ws.length != enc_cfg.window_length)
        throw_shape("windows are " + std::to_string(train_ws.channels) + "x" + std::to_string(train_ws.length) +
                    " but the encoder expects " + std::to_string(enc_cfg.in_channels) + "x" +
                    std::to_string(enc_cfg.window_length));
    if (train_ws.num_classes() != enc_cfg.num_classes) throw_shape("class count differs from the encoder config");
    if (teacher.dim != enc_cfg.embed_dim)
        throw_shape("teacher dimension " + std::to_string(teacher.dim) + " != embedding width " +
                    std::to_string(enc_cfg.embed_dim));
    if (teacher.labels.size() != train_ws.num_classes()) throw_data("teacher table does not cover every class");

    TrainResult result;
    result.last = init_encoder(enc_cfg, Rng(cfg.seed).split("init"));
    auto named = result.last.named_parameters();
    result.optimizer = OptimizerState::for_parameters(named);
    const AdamWConfig adamw = adamw_from(cfg);
    if (out.dir) fs::create_directories(*out.dir);

    auto meta_for = [&](std::size_t epoch, double f1) {
        nlohmann::json m = out.metadata;
        m["dataset"] = dataset_name(train_ws.dataset);
        m["label_names"] = train_ws.label_names;
        m["seed"] = cfg.seed;
        m["epoch"] = epoch;
        m["test_macro_f1"] = f1;
        m["alpha"] = cfg.alpha;
        m["beta"] = cfg.beta;
        m["teacher_source"] = teacher.source;
        if (train_ws.norm_stats) {
            m["norm_mean"] = train_ws.norm_stats->mean;
            m["norm_std"] = train_ws.norm_stats->std;
        }
        return m;
    };

    auto step = [&](const std::vector<std::size_t>& batch) {
        for (auto& p : named) p.tensor->zero_grad();
        const Tensor x = train_ws.batch(batch);
        const auto o = encoder_forward(x, result.last, enc_cfg, true);
        const Tensor y = train_ws.one_hot(batch);
        std::vector<int> labels(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = train_ws.labels[batch[i]];
        const Tensor target = teacher.targets(labels);
        Tensor total;
        double l_class = 0.0, l_repr = 0.0;
        if (cfg.objective == Objective::multitask) {
            auto parts = multitask_loss(o.logits, o.embedding, y, target, cfg);
            total = parts.total;
            l_class = parts.l_class;
            l_repr = parts.l_repr;
        } else {
            const Tensor ce = softmax_cross_entropy(o.logits, y);
            l_class = ce.item();
            l_repr = mse(o.embedding.detach(), target).item();
            total = scale(ce, cfg.beta);
        }
        const double value = total.item();
        if (std::isfinite(value)) {
            backward(total);
            adamw_step(named, result.optimizer, adamw);
        }
        return StepLoss{value, l_class, l_repr};
    };
    auto score = [&] { return macro_f1_of(predict(test_ws, result.last, enc_cfg).predicted, test_ws); };
    auto on_best = [&] { result.best = result.last.clone(); };
    auto after_epoch = [&](const EpochRecord& rec, const TrainingLog& log) {
        spdlog::info("epoch {:>4}  total {:.5f}  class {:.5f}  repr {:.5f}  test macro-F1 {:.4f}", rec.epoch,
                     rec.total, rec.l_class, rec.l_repr, rec.test_macro_f1);
        if (out.on_epoch) out.on_epoch(rec);
        if (!out.dir) return;
        const fs::path& dir = *out.dir;
        if (log.best_epoch == rec.epoch) save_checkpoint(dir / "best.gxck", enc_cfg, result.best, meta_for(rec.epoch, rec.test_macro_f1));
        if (cfg.checkpoint_every && rec.epoch % cfg.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%04zu.gxck", rec.epoch);
            save_checkpoint(dir / name, enc_cfg, result.last, meta_for(rec.epoch, rec.test_macro_f1));
        }
        save_checkpoint(dir / "last.gxck", enc_cfg, result.last, meta_for(rec.epoch, rec.test_macro_f1));
        save_optimizer_state(dir / "last.gxck.opt", result.optimizer);
        log.write_csv(dir / "train_log.csv", out.metadata.value("log_header", std::string{}));
    };

    result.log = run_epochs(train_ws, cfg, step, score, on_best, after_epoch);
    return result;
}

Tensor LinearProbe::logits(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(1) * x.dim(2) != inputs)
        throw_shape("linear probe expects windows with " + std::to_string(inputs) + " values, got " +
                    shape_str(x.shape()));
    return affine(reshape(x, {x.dim(0), inputs}), w, b);
}

std::vector<int> LinearProbe::predict(const WindowSet& ws) const {
    NoGradGuard guard;
    std::vector<int> out(ws.size());
    constexpr std::size_t kChunk = 512;
    for (std::size_t lo = 0; lo < ws.size(); lo += kChunk) {
        std::vector<std::size_t> idx(std::min(ws.size(), lo + kChunk) - lo);
        std::iota(idx.begin(), idx.end(), lo);
        const Tensor z = logits(ws.batch(idx));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto row = z.data().subspan(i * classes, classes);
            out[lo + i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        }
    }
    return out;
}

LinearProbeResult train_linear_probe(const WindowSet& train_ws, const WindowSet& test_ws, const TrainConfig& cfg) {
    cfg.validate();
    check_training_inputs(train_ws, test_ws);
    LinearProbe probe;
    probe.inputs = train_ws.channels * train_ws.length;
    probe.classes = train_ws.num_classes();
    const double bound = 1.0 / std::sqrt(static_cast<double>(probe.inputs));
    auto uniform = [&](Shape shape, const char* name) {
        Rng r = Rng(cfg.seed).split("probe").split(name);
        std::vector<double> v(shape_numel(shape));
        for (double& x : v) x = (2.0 * r.uniform() - 1.0) * bound;
        return Tensor(std::move(shape), std::move(v), true);
    };
    probe.w = uniform({probe.inputs, probe.classes}, "w");
    probe.b = uniform({probe.classes}, "b");
    const std::vector<NamedTensor> named{{"probe.w", &probe.w}, {"probe.b", &probe.b}};
    OptimizerState state = OptimizerState::for_parameters(named);
    const AdamWConfig adamw = adamw_from(cfg);

    LinearProbeResult result;
    auto step = [&](const std::vector<std::size_t>& batch) {
        for (const auto& p : named) p.tensor->zero_grad();
        const Tensor ce = softmax_cross_entropy(probe.logits(train_ws.batch(batch)), train_ws.one_hot(batch));
        const double value = ce.item();
        if (std::isfinite(value)) {
            backward(ce);
            adamw_step(named, state, adamw);
        }
        return StepLoss{value, value, 0.0};
    };
    auto score = [&] { return macro_f1_of(probe.predict(test_ws), test_ws); };
    auto on_best = [&] {
        result.best = probe;
        result.best.w = probe.w.clone_leaf();
        result.best.b = probe.b.clone_leaf();
    };
    auto after_epoch = [](const EpochRecord& rec, const TrainingLog&) {
        spdlog::debug("probe epoch {}  loss {:.5f}  test macro-F1 {:.4f}", rec.epoch, rec.total, rec.test_macro_f1);
    };
    result.log = run_epochs(train_ws, cfg, step, score, on_best, after_epoch);
    return result;
}

}  // namespace gexse
