#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli_support.hpp"
#include "gexse/checkpoint.hpp"
#include "gexse/data.hpp"
#include "gexse/diffusion.hpp"
#include "gexse/error.hpp"
#include "gexse/explain.hpp"
#include "gexse/metrics.hpp"
#include "gexse/train.hpp"
#include "gexse/verify.hpp"

namespace fs = std::filesystem;
using gexse::throw_data;
using gexse::throw_usage;
using nlohmann::json;

namespace {

constexpr const char* kTrainCache = "train.gxws";
constexpr const char* kTestCache = "test.gxws";

json class_histogram(const gexse::WindowSet& ws) {
    json h = json::object();
    for (std::size_t c = 0; c < ws.num_classes(); ++c) h[ws.label_names[c]] = 0;
    for (int l : ws.labels) h[ws.label_names[static_cast<std::size_t>(l)]] = h[ws.label_names[static_cast<std::size_t>(l)]].get<int>() + 1;
    return h;
}

json describe(const gexse::WindowSet& ws) {
    std::set<int> subjects(ws.subjects.begin(), ws.subjects.end());
    return {{"windows", ws.size()},
            {"channels", ws.channels},
            {"length", ws.length},
            {"classes", ws.num_classes()},
            {"subjects", subjects},
            {"histogram", class_histogram(ws)}};
}

gexse::WindowSet load_split(const fs::path& data_dir, const std::string& split) {
    if (split != "train" && split != "test") throw_usage("--split must be train or test, not '" + split + "'");
    const fs::path p = data_dir / (split == "train" ? kTrainCache : kTestCache);
    if (!fs::exists(p)) throw_data("missing cache " + p.string() + " (run 'gexse ingest' first)");
    return gexse::read_cache(p);
}

// "synthetic:<seed>" or "file:<path>", as recorded by training.
gexse::TeacherTable teacher_from_source(const std::string& source, const std::vector<std::string>& labels,
                                        std::size_t dim) {
    if (source.rfind("file:", 0) == 0) return gexse::load_teacher_table(fs::path(source.substr(5)), labels, dim, 0);
    if (source.rfind("synthetic:", 0) == 0)
        return gexse::load_teacher_table(std::nullopt, labels, dim, std::stoull(source.substr(10)));
    throw_data("unrecognized teacher source '" + source + "'");
}

void check_matches(const gexse::WindowSet& ws, const gexse::EncoderConfig& cfg, const std::string& what) {
    if (ws.channels != cfg.in_channels || ws.length != cfg.window_length || ws.num_classes() != cfg.num_classes)
        throw_data(what + " holds " + std::to_string(ws.channels) + "x" + std::to_string(ws.length) + " windows with " +
                   std::to_string(ws.num_classes()) + " classes, the checkpoint expects " +
                   std::to_string(cfg.in_channels) + "x" + std::to_string(cfg.window_length) + " with " +
                   std::to_string(cfg.num_classes));
}

// ---- ingest ------------------------------------------------------------------

struct IngestArgs {
    std::string dataset;
    std::string root;
    std::string out;
    std::string channel_map;
    std::uint64_t seed = 0;
    std::size_t windows = 600;
};

int run_ingest(const IngestArgs& a, cli::RunManifest& m) {
    const auto id = gexse::parse_dataset(a.dataset);
    if (id != gexse::DatasetId::synthetic && a.root.empty()) throw_usage("--root is required for " + a.dataset);
    if (!a.channel_map.empty() && id != gexse::DatasetId::opportunity)
        throw_usage("--channel-map only applies to opportunity");
    const fs::path out(a.out);

    gexse::TrainTest raw = m.timed("read", [&] {
        switch (id) {
            case gexse::DatasetId::ucihar: return gexse::ingest_ucihar(a.root);
            case gexse::DatasetId::pamap2: return gexse::ingest_pamap2(a.root, gexse::SplitSpec::pamap2_default());
            case gexse::DatasetId::opportunity: {
                const auto map = a.channel_map.empty() ? gexse::opportunity_default_channels()
                                                       : gexse::read_channel_map(a.channel_map);
                return gexse::ingest_opportunity(a.root, gexse::SplitSpec::opportunity_default(), map);
            }
            case gexse::DatasetId::synthetic: break;
        }
        gexse::TrainTest tt;
        tt.train = gexse::make_synthetic_windows(a.windows, a.seed);
        tt.test = gexse::make_synthetic_windows(a.windows / 4 + 1, a.seed + 1);
        return tt;
    });

    m.timed("write", [&] {
        const auto train = gexse::normalize(raw.train, raw.train);
        const auto test = gexse::normalize(raw.test, train);
        fs::create_directories(out);
        gexse::write_cache(train, out / kTrainCache);
        gexse::write_cache(test, out / kTestCache);
        m.output(out / kTrainCache);
        m.output(out / kTestCache);
        m.results()["train"] = describe(train);
        m.results()["test"] = describe(test);
        if (!train.norm_stats->floored.empty()) m.results()["floored_channels"] = train.norm_stats->floored;
    });
    spdlog::info("{}: {} train / {} test windows of {}x{} -> {}", a.dataset, raw.train.size(), raw.test.size(),
                 raw.train.channels, raw.train.length, out.string());
    return 0;
}

// ---- train ---------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    std::string teacher;
    std::string objective = "multitask";
    std::uint64_t seed = 0;
    std::size_t epochs = 300;
    double alpha = 1.0;
    double beta = 1.0;
    double lr = 1e-3;
    double weight_decay = 0.01;
    std::size_t batch_size = 128;
    std::size_t width = 0;
    std::size_t blocks = 0;
    std::size_t embed_dim = 64;
    std::size_t checkpoint_every = 0;
    double stop_at_f1 = 0.0;
};

int run_train(const TrainArgs& a, cli::RunManifest& m) {
    const fs::path data(a.data), out(a.out);
    const auto train_ws = m.timed("load", [&] { return load_split(data, "train"); });
    const auto test_ws = load_split(data, "test");
    if (train_ws.label_names != test_ws.label_names) throw_data("train and test caches disagree on labels");

    auto enc = gexse::EncoderConfig::for_dataset(train_ws.dataset);
    enc.in_channels = train_ws.channels;
    enc.window_length = train_ws.length;
    enc.num_classes = train_ws.num_classes();
    if (a.width) enc.width = a.width;
    if (a.blocks) enc.n_blocks = a.blocks;
    enc.embed_dim = a.embed_dim;
    enc.validate();

    gexse::TrainConfig cfg;
    cfg.alpha = a.alpha;
    cfg.beta = a.beta;
    cfg.learning_rate = a.lr;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.weight_decay = a.weight_decay;
    cfg.seed = a.seed;
    cfg.checkpoint_every = a.checkpoint_every;
    if (a.objective == "classifier") cfg.objective = gexse::Objective::classifier_only;
    else if (a.objective != "multitask") throw_usage("--objective must be multitask or classifier");
    if (a.stop_at_f1 > 0.0) cfg.stop_at_macro_f1 = a.stop_at_f1;
    cfg.validate();

    const auto teacher = a.teacher.empty()
                             ? gexse::load_teacher_table(std::nullopt, train_ws.label_names, enc.embed_dim, a.seed)
                             : gexse::load_teacher_table(fs::path(a.teacher), train_ws.label_names, enc.embed_dim, 0);

    gexse::TrainOutputs outputs;
    outputs.dir = out;
    char header[512];
    std::snprintf(header, sizeof header,
                  "dataset=%s epochs=%zu lr=%g alpha=%g beta=%g batch_size=%zu weight_decay=%g seed=%llu\n"
                  "width=%zu blocks=%zu embed_dim=%zu objective=%s teacher=%s",
                  gexse::dataset_name(train_ws.dataset).c_str(), cfg.epochs, cfg.learning_rate, cfg.alpha, cfg.beta,
                  cfg.batch_size, cfg.weight_decay, static_cast<unsigned long long>(cfg.seed), enc.width,
                  enc.n_blocks, enc.embed_dim, a.objective.c_str(), teacher.source.c_str());
    outputs.metadata["log_header"] = header;
    spdlog::info("training {} parameters for up to {} epochs", gexse::parameter_census(enc), cfg.epochs);

    const auto result = m.timed("train", [&] { return gexse::train(train_ws, test_ws, teacher, enc, cfg, outputs); });
    const auto pred = m.timed("evaluate", [&] { return gexse::predict(test_ws, result.best, enc); });

    for (const char* f : {"best.gxck", "last.gxck", "last.gxck.opt", "train_log.csv"}) m.output(out / f);
    m.results() = {{"parameters", gexse::parameter_census(enc)},
                   {"epochs_run", result.log.epochs.size()},
                   {"best_epoch", result.log.best_epoch},
                   {"best_test_macro_f1", result.log.best_macro_f1},
                   {"test_alignment", gexse::teacher_alignment(pred, test_ws, teacher)},
                   {"teacher_source", teacher.source}};
    spdlog::info("best epoch {} with test macro-F1 {:.4f}", result.log.best_epoch, result.log.best_macro_f1);
    return 0;
}

// ---- eval ----------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::string out;
    std::string teacher;
};

int run_eval(const EvalArgs& a, cli::RunManifest& m) {
    const auto ck = m.timed("load", [&] { return gexse::load_checkpoint(a.checkpoint); });
    const auto ws = load_split(a.data, a.split);
    check_matches(ws, ck.config, a.split + " cache");

    const auto pred = m.timed("predict", [&] { return gexse::predict(ws, ck.params, ck.config); });
    const auto cm = gexse::confusion(pred.predicted, ws.labels, ws.num_classes(), ws.label_names);
    const auto report = gexse::metrics(cm);
    const fs::path out(a.out);
    gexse::emit_report(report, cm, out);
    for (const char* f : {"per_class.csv", "summary.json", "confusion_counts.csv", "confusion_normalized.csv"})
        m.output(out / f);

    m.results() = {{"checkpoint", a.checkpoint},
                   {"split", a.split},
                   {"windows", ws.size()},
                   {"accuracy", report.accuracy},
                   {"macro_f1", report.macro_f1}};
    std::optional<gexse::TeacherTable> teacher;
    if (!a.teacher.empty())
        teacher = gexse::load_teacher_table(fs::path(a.teacher), ws.label_names, ck.config.embed_dim, 0);
    else if (ck.metadata.contains("teacher_source"))
        teacher = teacher_from_source(ck.metadata["teacher_source"].get<std::string>(), ws.label_names,
                                      ck.config.embed_dim);
    if (teacher) m.results()["alignment"] = gexse::teacher_alignment(pred, ws, *teacher);
    spdlog::info("{} windows: accuracy {:.4f}, macro-F1 {:.4f}", ws.size(), report.accuracy, report.macro_f1);
    return 0;
}

// ---- explain -------------------------------------------------------------------

struct ExplainArgs {
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::size_t window = 0;
    std::string frames;
    std::string out;
    std::string saliency = "gradient_x_input";
};

int run_explain(const ExplainArgs& a, cli::RunManifest& m) {
    const auto ck = gexse::load_checkpoint(a.checkpoint);
    const auto ws = load_split(a.data, a.split);
    check_matches(ws, ck.config, a.split + " cache");
    if (a.window >= ws.size())
        throw_usage("--window " + std::to_string(a.window) + " out of range (" + std::to_string(ws.size()) + " windows)");
    const auto method = gexse::parse_saliency(a.saliency);

    const auto act = m.timed("saliency", [&] {
        return gexse::quantify_activations(ws, a.window, ck.params, ck.config, method);
    });
    const auto manifest = gexse::map_cues(act);
    const fs::path out(a.out);
    m.timed("render", [&] {
        gexse::render_frames(manifest, a.frames.empty() ? std::nullopt : std::optional<fs::path>(a.frames), out);
    });
    m.output(out / "manifest.json");
    for (std::size_t i = 0; i < gexse::kCueFrames; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%02zu.ppm", i);
        m.output(out / name);
    }
    m.results() = {{"window", a.window},
                   {"label", act.label},
                   {"predicted", ws.label_names.at(static_cast<std::size_t>(act.predicted_class))},
                   {"degenerate", act.degenerate}};
    spdlog::info("window {} ({}) predicted as {}", a.window, act.label, m.results()["predicted"].get<std::string>());
    return 0;
}

// ---- diffuse -------------------------------------------------------------------

struct DiffuseTrainArgs {
    std::string out;
    std::uint64_t seed = 0;
    std::size_t steps = 500;
    std::size_t train_steps = 4000;
    std::size_t hidden = 128;
    std::size_t batch_size = 256;
    double lr = 2e-3;
    std::size_t points = 4000;
};

int run_diffuse_train(const DiffuseTrainArgs& a, cli::RunManifest& m) {
    namespace d = gexse::diffusion;
    const auto s = d::Schedule::linear(a.steps);
    const auto data = d::make_two_mode_mixture(a.points, a.seed);
    d::TrainConfig cfg;
    cfg.hidden = a.hidden;
    cfg.steps = a.train_steps;
    cfg.batch = a.batch_size;
    cfg.learning_rate = a.lr;
    cfg.seed = a.seed;
    if (cfg.batch == 0) throw_usage("--batch-size must be >= 1");

    auto den = m.timed("denoiser", [&] { return d::train_denoiser(data, s, cfg); });
    auto cls = m.timed("classifier", [&] { return d::train_noisy_classifier(data, s, cfg); });

    const fs::path out(a.out);
    fs::create_directories(out);
    d::Bundle bundle{s, den.model, cls.model};
    d::save_bundle(out / "model.gxdiff", bundle);
    {
        std::ofstream os(out / "losses.csv");
        if (!os) throw_data("cannot write " + (out / "losses.csv").string());
        os << "step,denoiser,classifier\n";
        os.precision(17);
        for (std::size_t i = 0; i < den.losses.size(); ++i)
            os << i + 1 << ',' << den.losses[i] << ',' << cls.losses[i] << '\n';
    }
    m.output(out / "model.gxdiff");
    m.output(out / "losses.csv");
    m.results() = {{"denoiser_loss", d::denoiser_loss(den.model, data, s, 4000, a.seed + 1)},
                   {"classifier_accuracy_t1", d::classifier_accuracy(cls.model, data, s, 1, 4000, a.seed + 1)},
                   {"classifier_accuracy_tT", d::classifier_accuracy(cls.model, data, s, s.T, 4000, a.seed + 1)}};
    spdlog::info("denoiser loss {:.4f}", m.results()["denoiser_loss"].get<double>());
    return 0;
}

struct DiffuseSampleArgs {
    std::string model;
    std::string out;
    std::uint64_t seed = 0;
    int label = 0;
    std::size_t count = 500;
    double guidance_scale = 0.0;
};

int run_diffuse_sample(const DiffuseSampleArgs& a, cli::RunManifest& m) {
    namespace d = gexse::diffusion;
    const auto b = d::load_bundle(a.model);
    if (a.label < 0 || static_cast<std::size_t>(a.label) >= b.denoiser.classes)
        throw_usage("--label must be in [0, " + std::to_string(b.denoiser.classes) + ")");
    const std::vector<int> labels(a.count, a.label);
    const auto xy = m.timed("sample", [&] {
        return d::guided_sample_many(labels, b.schedule, b.denoiser, b.classifier, a.guidance_scale, a.seed);
    });
    const fs::path out(a.out);
    fs::create_directories(out);
    d::write_samples_csv(out / "samples.csv", xy, labels, a.guidance_scale);
    m.output(out / "samples.csv");

    const auto lp = d::log_prob(b.classifier, gexse::Tensor({a.count, 2}, xy), 1, labels);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < a.count; ++i) {
        mx += xy[i * 2] / static_cast<double>(a.count);
        my += xy[i * 2 + 1] / static_cast<double>(a.count);
    }
    m.results() = {{"count", a.count},
                   {"mean", {mx, my}},
                   {"mean_target_log_prob", std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(a.count)}};
    spdlog::info("{} samples for label {} at scale {}: mean ({:.3f}, {:.3f})", a.count, a.label, a.guidance_scale, mx, my);
    return 0;
}

// ---- verify --------------------------------------------------------------------

struct VerifyArgs {
    std::string suite = "all";
    std::uint64_t seed = 0;
    std::size_t shapes = 10;
    std::string out;
};

int run_verify(const VerifyArgs& a, cli::RunManifest& m) {
    namespace v = gexse::verify;
    std::vector<v::CheckResult> results;
    const auto add = [&](const std::vector<v::CheckResult>& r) { results.insert(results.end(), r.begin(), r.end()); };
    const bool all = a.suite == "all";
    if (!all && a.suite != "gradcheck" && a.suite != "fft" && a.suite != "metrics")
        throw_usage("unknown suite '" + a.suite + "' (gradcheck, fft, metrics or all)");
    if (all || a.suite == "gradcheck") m.timed("gradcheck", [&] { add(v::gradcheck_suite(a.seed, a.shapes)); });
    if (all || a.suite == "fft") m.timed("fft", [&] { add(v::fft_suite(a.seed)); });
    if (all || a.suite == "metrics") m.timed("metrics", [&] { add(v::metrics_suite()); });

    json rows = json::array();
    for (const auto& r : results) {
        std::cout << v::format_result(r) << '\n';
        rows.push_back({{"name", r.name}, {"passed", r.passed}, {"value", r.value}, {"threshold", r.threshold},
                        {"detail", r.detail}});
    }
    const std::size_t failed = static_cast<std::size_t>(
        std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; }));
    std::cout << results.size() - failed << '/' << results.size() << " checks passed\n";
    m.results() = {{"checks", rows}, {"failed", failed}};
    return failed ? 3 : 0;
}

// ---- synth ---------------------------------------------------------------------

struct SynthArgs {
    std::string dataset;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t size = 0;
};

int run_synth(const SynthArgs& a, cli::RunManifest& m) {
    const fs::path out(a.out);
    switch (gexse::parse_dataset(a.dataset)) {
        case gexse::DatasetId::ucihar: gexse::write_synthetic_ucihar(out, a.seed, a.size ? a.size : 120); break;
        case gexse::DatasetId::pamap2: gexse::write_synthetic_pamap2(out, a.seed, a.size ? a.size : 700); break;
        case gexse::DatasetId::opportunity: gexse::write_synthetic_opportunity(out, a.seed, a.size ? a.size : 1100); break;
        case gexse::DatasetId::synthetic: throw_usage("synth writes raw layouts for ucihar, pamap2 or opportunity");
    }
    m.results()["root"] = out.string();
    spdlog::info("wrote a synthetic {} tree under {}", a.dataset, out.string());
    return 0;
}

// Wires one subcommand: flags, config resolution, run, manifest.
template <typename Args>
struct Command {
    using Run = std::function<int(const Args&, cli::RunManifest&)>;
    using SeedOf = std::function<std::uint64_t(const Args&)>;
    using OutOf = std::function<std::string(const Args&)>;
    Command(Run r, SeedOf s, OutOf o) : run(std::move(r)), seed_of(std::move(s)), out_of(std::move(o)) {}

    Args args;
    std::optional<cli::Options> opts;
    std::function<int(const Args&, cli::RunManifest&)> run;
    std::function<std::uint64_t(const Args&)> seed_of;
    std::function<std::string(const Args&)> out_of;
};

template <typename Args>
int execute(Command<Args>& c, const std::string& name) {
    c.opts->resolve();
    cli::RunManifest manifest(name, c.opts->effective(), c.seed_of(c.args));
    const int rc = c.run(c.args, manifest);
    if (const std::string out = c.out_of(c.args); !out.empty()) manifest.write(out);
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sensor-window multi-task encoder, explanation cues and a toy diffusion sampler"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", GEXSE_VERSION);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");
    app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

    const auto seed_field = [](const auto& a) { return a.seed; };
    const auto out_field = [](const auto& a) { return a.out; };

    Command<IngestArgs> ingest(run_ingest, seed_field, out_field);
    {
        auto* sub = app.add_subcommand("ingest", "Read a raw dataset tree into normalized train/test caches");
        auto& o = ingest.opts.emplace(sub);
        auto& a = ingest.args;
        o.add("dataset", a.dataset, "ucihar, pamap2, opportunity or synthetic")->required();
        o.add("root", a.root, "Raw dataset directory");
        o.add("out", a.out, "Output directory for train.gxws and test.gxws")->required();
        o.add("channel-map", a.channel_map, "Opportunity column map (default: the shipped 77-channel map)");
        o.add("seed", a.seed, "Seed (synthetic only)");
        o.add("windows", a.windows, "Training windows (synthetic only)");
    }

    Command<TrainArgs> train(run_train, seed_field, out_field);
    {
        auto* sub = app.add_subcommand("train", "Train the multi-task encoder on ingested caches");
        auto& o = train.opts.emplace(sub);
        auto& a = train.args;
        o.add("data", a.data, "Directory written by 'gexse ingest'")->required();
        o.add("out", a.out, "Checkpoint and log directory")->required();
        o.add("teacher", a.teacher, "Teacher embedding table (default: seeded synthetic vectors)");
        o.add("objective", a.objective, "multitask or classifier");
        o.add("seed", a.seed, "Seed for init, shuffling and the synthetic teacher");
        o.add("epochs", a.epochs, "Training epochs");
        o.add("alpha", a.alpha, "Weight of the representation loss");
        o.add("beta", a.beta, "Weight of the classification loss");
        o.add("lr", a.lr, "AdamW learning rate");
        o.add("weight-decay", a.weight_decay, "AdamW decoupled weight decay");
        o.add("batch-size", a.batch_size, "Mini-batch size");
        o.add("width", a.width, "Channel width D (0: dataset default)");
        o.add("blocks", a.blocks, "Number of PMB blocks (0: dataset default)");
        o.add("embed-dim", a.embed_dim, "Embedding width N");
        o.add("checkpoint-every", a.checkpoint_every, "Also save epoch_NNNN.gxck every n epochs (0: off)");
        o.add("stop-at-f1", a.stop_at_f1, "Stop once test macro-F1 reaches this value (0: off)");
    }

    Command<EvalArgs> eval(run_eval, [](const EvalArgs&) { return std::uint64_t{0}; }, out_field);
    {
        auto* sub = app.add_subcommand("eval", "Metrics report for a checkpoint on one cached split");
        auto& o = eval.opts.emplace(sub);
        auto& a = eval.args;
        o.add("checkpoint", a.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
        o.add("data", a.data, "Directory written by 'gexse ingest'")->required();
        o.add("split", a.split, "train or test");
        o.add("out", a.out, "Report directory")->required();
        o.add("teacher", a.teacher, "Teacher table for the alignment score (default: the one used in training)");
    }

    Command<ExplainArgs> explain(run_explain, [](const ExplainArgs&) { return std::uint64_t{0}; }, out_field);
    {
        auto* sub = app.add_subcommand("explain", "Activation cues and 24 overlay frames for one window");
        auto& o = explain.opts.emplace(sub);
        auto& a = explain.args;
        o.add("checkpoint", a.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
        o.add("data", a.data, "Directory written by 'gexse ingest'")->required();
        o.add("split", a.split, "train or test");
        o.add("window", a.window, "Window index within the split");
        o.add("frames", a.frames, "Directory of base PPM frames (default: placeholder backgrounds)");
        o.add("out", a.out, "Output directory")->required();
        o.add("saliency", a.saliency, "gradient_x_input or stem_energy");
    }

    auto* diffuse = app.add_subcommand("diffuse", "Toy conditional diffusion on a 2D two-mode mixture");
    diffuse->require_subcommand(1);
    Command<DiffuseTrainArgs> dtrain(run_diffuse_train, seed_field, out_field);
    {
        auto* sub = diffuse->add_subcommand("train", "Train the denoiser and the noisy classifier");
        auto& o = dtrain.opts.emplace(sub);
        auto& a = dtrain.args;
        o.add("out", a.out, "Output directory")->required();
        o.add("seed", a.seed, "Seed");
        o.add("steps", a.steps, "Diffusion steps T");
        o.add("train-steps", a.train_steps, "Optimizer steps per network");
        o.add("hidden", a.hidden, "Hidden width of both MLPs");
        o.add("batch-size", a.batch_size, "Mini-batch size");
        o.add("lr", a.lr, "Learning rate");
        o.add("points", a.points, "Size of the mixture training set");
    }
    Command<DiffuseSampleArgs> dsample(run_diffuse_sample, seed_field, out_field);
    {
        auto* sub = diffuse->add_subcommand("sample", "Draw (optionally guided) samples from a trained model");
        auto& o = dsample.opts.emplace(sub);
        auto& a = dsample.args;
        o.add("model", a.model, "model.gxdiff from 'diffuse train'")->required()->check(CLI::ExistingFile);
        o.add("out", a.out, "Output directory")->required();
        o.add("seed", a.seed, "Seed");
        o.add("label", a.label, "Target label");
        o.add("count", a.count, "Number of samples");
        o.add("guidance-scale", a.guidance_scale, "Classifier guidance scale s >= 0");
    }

    Command<VerifyArgs> verify(run_verify, seed_field, out_field);
    {
        auto* sub = app.add_subcommand("verify", "Numerical self-checks");
        auto& o = verify.opts.emplace(sub);
        auto& a = verify.args;
        sub->add_option("suite", a.suite, "gradcheck, fft, metrics or all")->capture_default_str();
        o.add("seed", a.seed, "Seed for random shapes and inputs");
        o.add("shapes", a.shapes, "Random shapes per op for gradcheck");
        o.add("out", a.out, "Directory for run_manifest.json");
    }

    Command<SynthArgs> synth(run_synth, seed_field, out_field);
    {
        auto* sub = app.add_subcommand("synth", "Write a fake raw dataset tree in a published layout");
        auto& o = synth.opts.emplace(sub);
        auto& a = synth.args;
        o.add("dataset", a.dataset, "ucihar, pamap2 or opportunity")->required();
        o.add("out", a.out, "Root directory to create")->required();
        o.add("seed", a.seed, "Seed");
        o.add("size", a.size, "Windows per split (ucihar), rows per activity (pamap2) or rows per file (opportunity)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    auto logger = spdlog::stderr_color_mt("gexse");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        for (auto* sub : app.get_subcommands()) {
            const std::string name = sub->get_name();
            if (name == "ingest") return execute(ingest, name);
            if (name == "train") return execute(train, name);
            if (name == "eval") return execute(eval, name);
            if (name == "explain") return execute(explain, name);
            if (name == "verify") return execute(verify, name);
            if (name == "synth") return execute(synth, name);
            if (name == "diffuse") {
                for (auto* leaf : sub->get_subcommands()) {
                    if (leaf->get_name() == "train") return execute(dtrain, "diffuse train");
                    if (leaf->get_name() == "sample") return execute(dsample, "diffuse sample");
                }
            }
        }
        return 1;
    } catch (const gexse::Error& e) {
        spdlog::error("{}", e.what());
        return gexse::exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return 3;
    }
}
