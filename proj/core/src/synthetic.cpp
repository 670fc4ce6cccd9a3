#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>

#include "gexse/data.hpp"
#include "gexse/error.hpp"
#include "gexse/rng.hpp"

namespace gexse {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File create(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    File f(std::fopen(p.c_str(), "w"));
    if (!f) throw_data("cannot write " + p.string());
    return f;
}

// A class-specific waveform: each (class, channel) pair gets its own
// frequency and amplitude so that a small model can separate classes.
double wave(int cls, std::size_t ch, double cycles_per_sample, std::size_t t, double phase) {
    const double f = cycles_per_sample * (1.0 + static_cast<double>(cls) + 0.25 * static_cast<double>(ch % 3));
    const double amp = 0.5 + 0.3 * static_cast<double>((cls * 7 + static_cast<int>(ch) * 3) % 5);
    return amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) + phase);
}

}  // namespace

WindowSet make_synthetic_windows(std::size_t count, std::uint64_t seed, std::size_t subjects) {
    if (subjects == 0) throw_usage("synthetic windows need at least one subject");
    const auto cfg = EncoderConfig::for_dataset(DatasetId::synthetic);
    WindowSet ws;
    ws.dataset = DatasetId::synthetic;
    ws.channels = cfg.in_channels;
    ws.length = cfg.window_length;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) ws.label_names.push_back("class_" + std::to_string(c));
    ws.channel_groups = {{"accelerometer", {0, 1, 2}, {}},
                         {"gyroscope", {3, 4, 5}, {}},
                         {"heart_rate", {}, {}},
                         {"temperature", {}, {}}};
    Rng rng = Rng(seed).split("synthetic-windows");
    const int k = static_cast<int>(cfg.num_classes);
    for (std::size_t i = 0; i < count; ++i) {
        const int cls = static_cast<int>(i % cfg.num_classes);
        for (std::size_t ch = 0; ch < ws.channels; ++ch) {
            const double phase = 2.0 * std::numbers::pi * rng.uniform();
            // the gyroscope group carries a mirrored class code
            const int code = ch < 3 ? cls : k - 1 - cls;
            for (std::size_t t = 0; t < ws.length; ++t) {
                ws.data.push_back(wave(code, ch, 1.0 / static_cast<double>(ws.length), t, phase) + 0.2 * rng.normal());
            }
        }
        ws.labels.push_back(cls);
        ws.subjects.push_back(static_cast<int>((i / cfg.num_classes) % subjects) + 1);
        ws.channel_groups[2].per_window.push_back(70.0 + 10.0 * cls + rng.normal());
        ws.channel_groups[3].per_window.push_back(32.0 + 0.5 * cls + 0.1 * rng.normal());
    }
    return ws;
}

void write_synthetic_ucihar(const fs::path& root, std::uint64_t seed, std::size_t windows_per_split) {
    static const char* const kSignals[9] = {"body_acc_x", "body_acc_y", "body_acc_z", "body_gyro_x", "body_gyro_y",
                                            "body_gyro_z", "total_acc_x", "total_acc_y", "total_acc_z"};
    const Rng base = Rng(seed).split("synthetic-ucihar");
    const fs::path dir = root / "UCI HAR Dataset";
    {
        auto f = create(dir / "activity_labels.txt");
        const auto names = ucihar_label_names();
        for (std::size_t i = 0; i < names.size(); ++i) {
            std::string upper = names[i];
            for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            std::fprintf(f.get(), "%zu %s\n", i + 1, upper.c_str());
        }
    }
    for (const std::string split : {"train", "test"}) {
        Rng rng = base.split(split);
        const std::vector<int> subj_pool = split == "train" ? std::vector<int>{1, 3, 5, 6, 7} : std::vector<int>{2, 4, 9};
        std::vector<int> labels(windows_per_split), subjects(windows_per_split);
        std::vector<std::vector<double>> sig(9, std::vector<double>(windows_per_split * 128));
        for (std::size_t w = 0; w < windows_per_split; ++w) {
            labels[w] = static_cast<int>(w % 6);
            subjects[w] = subj_pool[(w / 6) % subj_pool.size()];
            for (std::size_t c = 0; c < 9; ++c) {
                const double phase = 2.0 * std::numbers::pi * rng.uniform();
                const double gravity = (c == 6) ? 1.0 : 0.0;
                for (std::size_t t = 0; t < 128; ++t) {
                    sig[c][w * 128 + t] = gravity + 0.3 * wave(labels[w], c, 1.0 / 64.0, t, phase) + 0.05 * rng.normal();
                }
            }
        }
        const fs::path sdir = dir / split;
        {
            auto fy = create(sdir / ("y_" + split + ".txt"));
            auto fs_ = create(sdir / ("subject_" + split + ".txt"));
            for (std::size_t w = 0; w < windows_per_split; ++w) {
                std::fprintf(fy.get(), "%d\n", labels[w] + 1);
                std::fprintf(fs_.get(), "%d\n", subjects[w]);
            }
        }
        for (std::size_t c = 0; c < 9; ++c) {
            auto f = create(sdir / "Inertial Signals" / (std::string(kSignals[c]) + "_" + split + ".txt"));
            for (std::size_t w = 0; w < windows_per_split; ++w) {
                for (std::size_t t = 0; t < 128; ++t) std::fprintf(f.get(), " %.8e", sig[c][w * 128 + t]);
                std::fputc('\n', f.get());
            }
        }
    }
}

void write_synthetic_pamap2(const fs::path& root, std::uint64_t seed, std::size_t rows_per_activity,
                            const std::vector<int>& subjects) {
    const Rng base = Rng(seed).split("synthetic-pamap2");
    const auto& ids = pamap2_activity_ids();
    for (int subject : subjects) {
        Rng rng = base.split(static_cast<std::uint64_t>(subject));
        auto f = create(root / "Protocol" / ("subject" + std::to_string(subject) + ".dat"));
        double ts = 5.0;
        std::size_t row = 0;
        auto emit = [&](int id, int cls, std::size_t rows) {
            const double phase = 2.0 * std::numbers::pi * rng.uniform();
            for (std::size_t r = 0; r < rows; ++r, ++row) {
                std::fprintf(f.get(), "%.2f %d", ts, id);
                ts += 0.01;
                // heart rate is logged at roughly 9 Hz, NaN in between
                if (row % 11 == 0) {
                    std::fprintf(f.get(), " %.0f", 80.0 + 6.0 * std::max(cls, 0) + rng.normal());
                } else {
                    std::fputs(" NaN", f.get());
                }
                for (std::size_t imu = 0; imu < 3; ++imu) {
                    std::fprintf(f.get(), " %.4f", 31.0 + 0.2 * std::max(cls, 0) + 0.05 * rng.normal());
                    for (std::size_t k = 0; k < 12; ++k) {
                        const std::size_t ch = imu * 12 + k;
                        // sporadic dropped packets
                        if ((row + 7 * ch) % 997 == 0) {
                            std::fputs(" NaN", f.get());
                            continue;
                        }
                        const double v = cls < 0 ? 0.3 * rng.normal()
                                                 : wave(cls, ch, 1.0 / 200.0, r, phase) + 0.1 * rng.normal();
                        std::fprintf(f.get(), " %.6f", v);
                    }
                    std::fputs(" 1.0 0.0 0.0 0.0", f.get());
                }
                std::fputc('\n', f.get());
            }
        };
        for (std::size_t i = 0; i < ids.size(); ++i) {
            emit(0, -1, 60);
            emit(ids[i], static_cast<int>(i), rows_per_activity);
        }
        // an optional activity, which ingestion drops
        emit(9, -1, rows_per_activity / 2);
    }
}

void write_synthetic_opportunity(const fs::path& root, std::uint64_t seed, std::size_t rows_per_file) {
    const Rng base = Rng(seed).split("synthetic-opportunity");
    const auto map = opportunity_default_channels();
    std::vector<int> model_slot(251, -1);
    for (std::size_t i = 0; i < map.size(); ++i) model_slot[map[i].column] = static_cast<int>(i);
    const auto& codes = opportunity_gesture_codes();
    const char* const kRuns[3] = {"ADL1", "ADL2", "Drill"};
    for (int subject = 1; subject <= 4; ++subject) {
        for (std::size_t run = 0; run < 3; ++run) {
            Rng rng = base.split(static_cast<std::uint64_t>(subject * 10 + static_cast<int>(run)));
            auto f = create(root / "dataset" /
                            ("S" + std::to_string(subject) + "-" + std::string(kRuns[run]) + ".dat"));
            std::size_t gesture = run * 6;
            std::size_t left = 0;
            int cls = -1;
            bool in_gesture = false;
            double phase = 0.0;
            std::size_t t_in = 0;
            for (std::size_t r = 0; r < rows_per_file; ++r) {
                if (left == 0) {
                    in_gesture = !in_gesture;
                    if (in_gesture) {
                        cls = static_cast<int>(gesture % codes.size());
                        ++gesture;
                        left = 120;
                        phase = 2.0 * std::numbers::pi * rng.uniform();
                        t_in = 0;
                    } else {
                        cls = -1;
                        left = 40;
                    }
                }
                --left;
                std::fprintf(f.get(), "%zu", r * 33);
                for (std::size_t col = 2; col <= 243; ++col) {
                    const int slot = model_slot[col];
                    if (slot < 0) {
                        if (col < 38 && (r + col) % 50 == 0) {
                            std::fputs(" NaN", f.get());
                        } else {
                            std::fprintf(f.get(), " %.0f", 100.0 * rng.normal());
                        }
                    } else if ((r + static_cast<std::size_t>(slot)) % 613 == 0) {
                        std::fputs(" NaN", f.get());
                    } else {
                        const double v = cls < 0 ? 50.0 * rng.normal()
                                                 : 300.0 * wave(cls % 6, static_cast<std::size_t>(slot), 1.0 / 60.0, t_in, phase) +
                                                       40.0 * static_cast<double>(cls / 6) + 20.0 * rng.normal();
                        std::fprintf(f.get(), " %.0f", v);
                    }
                }
                // locomotion, high-level, and four low-level arm tracks stay null
                std::fputs(" 0 0 0 0 0 0", f.get());
                std::fprintf(f.get(), " %d\n", cls < 0 ? 0 : codes[static_cast<std::size_t>(cls)]);
                ++t_in;
            }
        }
    }
}

}  // namespace gexse
