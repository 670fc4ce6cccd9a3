#include <benchmark/benchmark.h>

#include <complex>
#include <vector>

#include "gexse/data.hpp"
#include "gexse/diffusion.hpp"
#include "gexse/encoder.hpp"
#include "gexse/explain.hpp"
#include "gexse/fft.hpp"
#include "gexse/ops.hpp"
#include "gexse/train.hpp"

using namespace gexse;

namespace {

Tensor random(Rng& rng, Shape shape, bool grad = false) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return Tensor(std::move(shape), std::move(v), grad);
}

void BM_rfft(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    Rng rng(1);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    std::vector<std::complex<double>> out(n / 2 + 1);
    for (auto _ : st) {
        fft::rfft(x, out);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_rfft)->Arg(90)->Arg(128)->Arg(256)->Arg(1024);

void BM_matmul(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    Rng rng(2);
    const Tensor a = random(rng, {n, n}), b = random(rng, {n, n});
    NoGradGuard ng;
    for (auto _ : st) benchmark::DoNotOptimize(matmul(a, b).data().data());
    st.SetItemsProcessed(st.iterations() * static_cast<long>(2 * n * n * n));
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(256);

void BM_conv1d_fwd_bwd(benchmark::State& st) {
    Rng rng(3);
    Tensor x = random(rng, {32, 64, 128}, true);
    Tensor k = random(rng, {64, 64, 3}, true);
    Tensor b = random(rng, {64}, true);
    for (auto _ : st) {
        x.zero_grad();
        k.zero_grad();
        b.zero_grad();
        backward(sum(conv1d(x, k, b, 1)));
    }
}
BENCHMARK(BM_conv1d_fwd_bwd)->Unit(benchmark::kMillisecond);

void BM_encoder_forward(benchmark::State& st) {
    const auto id = static_cast<DatasetId>(st.range(0));
    const auto cfg = EncoderConfig::for_dataset(id);
    const auto params = init_encoder(cfg, Rng(4));
    Rng rng(5);
    const Tensor x = random(rng, {32, cfg.in_channels, cfg.window_length});
    NoGradGuard ng;
    for (auto _ : st) benchmark::DoNotOptimize(encoder_forward(x, params, cfg, false).logits.data().data());
    st.SetLabel(dataset_name(id));
}
BENCHMARK(BM_encoder_forward)
    ->Arg(static_cast<int>(DatasetId::ucihar))
    ->Arg(static_cast<int>(DatasetId::pamap2))
    ->Arg(static_cast<int>(DatasetId::opportunity))
    ->Unit(benchmark::kMillisecond);

// One optimizer step of the multi-task objective on a UCI-HAR sized batch.
void BM_train_step(benchmark::State& st) {
    const auto cfg = EncoderConfig::for_dataset(DatasetId::ucihar);
    auto params = init_encoder(cfg, Rng(6));
    auto named = params.named_parameters();
    auto opt = OptimizerState::for_parameters(named);
    const auto teacher = load_teacher_table(std::nullopt, ucihar_label_names(), cfg.embed_dim, 0);
    Rng rng(7);
    const Tensor x = random(rng, {128, cfg.in_channels, cfg.window_length});
    std::vector<int> labels(128);
    std::vector<double> oh(128 * cfg.num_classes, 0.0);
    for (std::size_t i = 0; i < 128; ++i) {
        labels[i] = static_cast<int>(i % cfg.num_classes);
        oh[i * cfg.num_classes + i % cfg.num_classes] = 1.0;
    }
    const Tensor one_hot({128, cfg.num_classes}, oh);
    const Tensor target = teacher.targets(labels);
    const TrainConfig tc;
    for (auto _ : st) {
        for (auto& p : named) p.tensor->zero_grad();
        const auto out = encoder_forward(x, params, cfg, true);
        const auto loss = multitask_loss(out.logits, out.embedding, one_hot, target, tc);
        backward(loss.total);
        adamw_step(named, opt, {});
    }
    st.SetItemsProcessed(st.iterations() * 128);
}
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

void BM_explain_window(benchmark::State& st) {
    const auto ws = normalize(make_synthetic_windows(8, 1), make_synthetic_windows(8, 1));
    const auto cfg = EncoderConfig::for_dataset(DatasetId::synthetic);
    const auto params = init_encoder(cfg, Rng(8));
    for (auto _ : st) benchmark::DoNotOptimize(quantify_activations(ws, 0, params, cfg).groups.size());
}
BENCHMARK(BM_explain_window)->Unit(benchmark::kMillisecond);

void BM_diffusion_sample(benchmark::State& st) {
    namespace d = diffusion;
    const auto s = d::Schedule::linear();
    const auto data = d::make_two_mode_mixture(256, 1);
    d::TrainConfig tc;
    tc.hidden = 64;
    tc.steps = 1;
    const auto den = d::train_denoiser(data, s, tc).model;
    const auto cls = d::train_noisy_classifier(data, s, tc).model;
    const std::vector<int> labels(static_cast<std::size_t>(st.range(0)), 0);
    for (auto _ : st) benchmark::DoNotOptimize(d::guided_sample_many(labels, s, den, cls, 2.0, 1).data());
    st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_diffusion_sample)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
