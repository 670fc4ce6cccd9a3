#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "gexse/binio.hpp"
#include "gexse/data.hpp"
#include "gexse/error.hpp"
#include "gexse/rng.hpp"
#include "text_parse.hpp"

namespace gexse {

const ChannelGroup* WindowSet::group(const std::string& name) const {
    for (const auto& g : channel_groups)
        if (g.name == name) return &g;
    return nullptr;
}

void WindowSet::validate() const {
    const std::size_t w = labels.size();
    if (channels == 0 || length == 0) throw_data("window set: channels and length must be positive");
    if (data.size() != w * channels * length) {
        throw_data("window set: data holds " + std::to_string(data.size()) + " values, expected " +
                   std::to_string(w) + " x " + std::to_string(channels) + " x " + std::to_string(length));
    }
    if (subjects.size() != w) throw_data("window set: subject list length differs from label count");
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= label_names.size()) {
            throw_data("window set: label " + std::to_string(l) + " outside [0," +
                       std::to_string(label_names.size()) + ")");
        }
    }
    std::vector<int> owner(channels, 0);
    for (const auto& g : channel_groups) {
        if (g.is_aux()) {
            if (g.per_window.size() != w) throw_data("window set: aux group '" + g.name + "' has wrong length");
            continue;
        }
        if (!g.per_window.empty()) throw_data("window set: group '" + g.name + "' mixes channels and aux values");
        for (auto c : g.channels) {
            if (c >= channels) throw_data("window set: group '" + g.name + "' names channel " + std::to_string(c));
            ++owner[c];
        }
    }
    for (std::size_t c = 0; c < channels; ++c) {
        if (owner[c] != 1) {
            throw_data("window set: channel " + std::to_string(c) + " belongs to " + std::to_string(owner[c]) +
                       " groups (expected exactly one)");
        }
    }
    if (norm_stats && (norm_stats->mean.size() != channels || norm_stats->std.size() != channels)) {
        throw_data("window set: normalization statistics sized for a different channel count");
    }
}

Tensor WindowSet::batch(std::span<const std::size_t> indices) const {
    const std::size_t per = channels * length;
    std::vector<double> v(indices.size() * per);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= size()) throw_usage("window index " + std::to_string(indices[i]) + " out of range");
        std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per, v.begin() + i * per);
    }
    return Tensor({indices.size(), channels, length}, std::move(v));
}

Tensor WindowSet::one_hot(std::span<const std::size_t> indices) const {
    const std::size_t k = num_classes();
    std::vector<double> v(indices.size() * k, 0.0);
    for (std::size_t i = 0; i < indices.size(); ++i) v[i * k + static_cast<std::size_t>(labels[indices[i]])] = 1.0;
    return Tensor({indices.size(), k}, std::move(v));
}

WindowSet WindowSet::subset(std::span<const std::size_t> indices) const {
    WindowSet out;
    out.dataset = dataset;
    out.channels = channels;
    out.length = length;
    out.label_names = label_names;
    out.norm_stats = norm_stats;
    out.channel_groups = channel_groups;
    for (auto& g : out.channel_groups) g.per_window.clear();
    const std::size_t per = channels * length;
    out.data.reserve(indices.size() * per);
    for (auto i : indices) {
        const auto w = window(i);
        out.data.insert(out.data.end(), w.begin(), w.end());
        out.labels.push_back(labels[i]);
        out.subjects.push_back(subjects[i]);
        for (std::size_t g = 0; g < channel_groups.size(); ++g)
            if (channel_groups[g].is_aux()) out.channel_groups[g].per_window.push_back(channel_groups[g].per_window[i]);
    }
    return out;
}

void SplitSpec::validate() const {
    if (train_subjects.empty() || test_subjects.empty()) throw_usage("split: train and test subject sets must be non-empty");
    for (int s : test_subjects) {
        if (train_subjects.count(s)) {
            throw_usage("split: subject " + std::to_string(s) + " appears in both train and test");
        }
    }
}

SplitSpec SplitSpec::pamap2_default() { return {{101, 102, 103, 104, 107, 108, 109}, {105, 106}}; }
SplitSpec SplitSpec::opportunity_default() { return {{1, 2, 3}, {4}}; }

std::vector<std::size_t> window_starts(std::size_t n, std::size_t window, std::size_t stride) {
    if (window == 0 || stride == 0) throw_usage("window and stride must be positive");
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s + window <= n; s += stride) out.push_back(s);
    return out;
}

std::vector<LabelRun> label_runs(std::span<const int> labels) {
    std::vector<LabelRun> runs;
    std::size_t i = 0;
    while (i < labels.size()) {
        std::size_t j = i + 1;
        while (j < labels.size() && labels[j] == labels[i]) ++j;
        if (labels[i] >= 0) runs.push_back({i, j, labels[i]});
        i = j;
    }
    return runs;
}

bool interpolate_nan(std::span<double> s) {
    std::ptrdiff_t prev = -1;
    const auto n = static_cast<std::ptrdiff_t>(s.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        if (std::isnan(s[i])) continue;
        if (prev < 0) {
            for (std::ptrdiff_t j = 0; j < i; ++j) s[j] = s[i];
        } else if (i - prev > 1) {
            const double a = s[prev];
            const double b = s[i];
            const double span = static_cast<double>(i - prev);
            for (std::ptrdiff_t j = prev + 1; j < i; ++j) s[j] = a + (b - a) * static_cast<double>(j - prev) / span;
        }
        prev = i;
    }
    if (prev < 0) return s.empty();
    for (std::ptrdiff_t j = prev + 1; j < n; ++j) s[j] = s[prev];
    return true;
}

NormStats compute_norm_stats(const WindowSet& ws) {
    NormStats st;
    st.mean.assign(ws.channels, 0.0);
    st.std.assign(ws.channels, 0.0);
    const std::size_t per_channel = ws.size() * ws.length;
    if (per_channel == 0) throw_data("cannot compute normalization statistics of an empty window set");
    for (std::size_t c = 0; c < ws.channels; ++c) {
        // two passes for a stable variance
        double sum = 0.0;
        for (std::size_t w = 0; w < ws.size(); ++w) {
            const double* row = ws.data.data() + (w * ws.channels + c) * ws.length;
            for (std::size_t t = 0; t < ws.length; ++t) sum += row[t];
        }
        double mean = sum / static_cast<double>(per_channel);
        const double first = ws.data[c * ws.length];
        bool constant = true;
        for (std::size_t w = 0; w < ws.size() && constant; ++w) {
            const double* row = ws.data.data() + (w * ws.channels + c) * ws.length;
            for (std::size_t t = 0; t < ws.length; ++t)
                if (row[t] != first) {
                    constant = false;
                    break;
                }
        }
        // exact, so a constant channel normalizes to exact zeros
        if (constant) mean = first;
        double sq = 0.0;
        for (std::size_t w = 0; w < ws.size(); ++w) {
            const double* row = ws.data.data() + (w * ws.channels + c) * ws.length;
            for (std::size_t t = 0; t < ws.length; ++t) sq += (row[t] - mean) * (row[t] - mean);
        }
        double sd = std::sqrt(sq / static_cast<double>(per_channel));
        if (!(sd >= kStdFloor)) {
            st.floored.push_back(c);
            sd = kStdFloor;
        }
        st.mean[c] = mean;
        st.std[c] = sd;
    }
    return st;
}

WindowSet normalize(const WindowSet& ws, const WindowSet& stats_from) {
    if (ws.norm_stats) throw_usage("window set is already normalized");
    if (ws.channels != stats_from.channels) {
        throw_shape("normalize: " + std::to_string(ws.channels) + " channels vs statistics over " +
                    std::to_string(stats_from.channels));
    }
    const NormStats st = stats_from.norm_stats ? *stats_from.norm_stats : compute_norm_stats(stats_from);
    for (auto c : st.floored) {
        spdlog::warn("channel {} has (near) zero variance; std floored to {}", c, kStdFloor);
    }
    WindowSet out = ws;
    for (std::size_t w = 0; w < out.size(); ++w)
        for (std::size_t c = 0; c < out.channels; ++c) {
            double* row = out.data.data() + (w * out.channels + c) * out.length;
            for (std::size_t t = 0; t < out.length; ++t) row[t] = (row[t] - st.mean[c]) / st.std[c];
        }
    out.norm_stats = st;
    return out;
}

WindowSet denormalize(const WindowSet& ws) {
    if (!ws.norm_stats) throw_usage("window set is not normalized");
    WindowSet out = ws;
    const auto& st = *ws.norm_stats;
    for (std::size_t w = 0; w < out.size(); ++w)
        for (std::size_t c = 0; c < out.channels; ++c) {
            double* row = out.data.data() + (w * out.channels + c) * out.length;
            for (std::size_t t = 0; t < out.length; ++t) row[t] = row[t] * st.std[c] + st.mean[c];
        }
    out.norm_stats.reset();
    return out;
}

namespace {

constexpr char kCacheMagic[8] = {'G', 'X', 'W', 'S', '0', '1', '\0', '\0'};
constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

void write_cache(const WindowSet& ws, const std::filesystem::path& path) {
    ws.validate();
    binio::Writer w;
    w.bytes(kCacheMagic, sizeof kCacheMagic);
    w.u32(kCacheVersion);
    w.u8(static_cast<std::uint8_t>(ws.dataset));
    w.u64(ws.channels);
    w.u64(ws.length);
    w.u64(ws.size());
    w.u64(ws.num_classes());
    for (const auto& n : ws.label_names) w.str16(n);
    for (int l : ws.labels) w.u32(static_cast<std::uint32_t>(l));
    for (int s : ws.subjects) w.i64(s);
    w.u32(static_cast<std::uint32_t>(ws.channel_groups.size()));
    for (const auto& g : ws.channel_groups) {
        w.str16(g.name);
        w.u64(g.channels.size());
        for (auto c : g.channels) w.u64(c);
        w.u64(g.per_window.size());
        w.f64s(g.per_window.data(), g.per_window.size());
    }
    w.u8(ws.norm_stats ? 1 : 0);
    if (ws.norm_stats) {
        w.f64s(ws.norm_stats->mean.data(), ws.channels);
        w.f64s(ws.norm_stats->std.data(), ws.channels);
        w.u64(ws.norm_stats->floored.size());
        for (auto c : ws.norm_stats->floored) w.u64(c);
    }
    w.f64s(ws.data.data(), ws.data.size());
    w.finish();
    w.save(path);
}

WindowSet read_cache(const std::filesystem::path& path) {
    auto r = binio::Reader::open(path);
    r.expect_magic(std::string_view(kCacheMagic, sizeof kCacheMagic));
    const auto version = r.u32();
    if (version != kCacheVersion) {
        throw_data(path.string() + ": cache version " + std::to_string(version) + " is not supported (expected " +
                   std::to_string(kCacheVersion) + ")");
    }
    r.verify_checksum();
    WindowSet ws;
    const auto id = r.u8();
    if (id > static_cast<std::uint8_t>(DatasetId::synthetic)) throw_data(path.string() + ": unknown dataset id");
    ws.dataset = static_cast<DatasetId>(id);
    ws.channels = r.u64();
    ws.length = r.u64();
    const std::size_t count = r.u64();
    const std::size_t k = r.u64();
    // every count below is bounded by the bytes actually present
    const auto bounded = [&](std::size_t n, std::size_t bytes_each) {
        if (bytes_each != 0 && n > r.remaining() / bytes_each) throw_data(path.string() + ": truncated cache");
        return n;
    };
    for (std::size_t i = 0; i < bounded(k, 2); ++i) ws.label_names.push_back(r.str16());
    ws.labels.resize(bounded(count, 4));
    for (auto& l : ws.labels) l = static_cast<int>(r.u32());
    ws.subjects.resize(bounded(count, 8));
    for (auto& s : ws.subjects) s = static_cast<int>(r.i64());
    const std::size_t groups = r.u32();
    for (std::size_t i = 0; i < bounded(groups, 18); ++i) {
        ChannelGroup g;
        g.name = r.str16();
        g.channels.resize(bounded(r.u64(), 8));
        for (auto& c : g.channels) c = r.u64();
        g.per_window.resize(bounded(r.u64(), 8));
        r.f64s(g.per_window.data(), g.per_window.size());
        ws.channel_groups.push_back(std::move(g));
    }
    if (r.u8()) {
        NormStats st;
        st.mean.resize(bounded(ws.channels, 16));
        st.std.resize(ws.channels);
        r.f64s(st.mean.data(), ws.channels);
        r.f64s(st.std.data(), ws.channels);
        st.floored.resize(bounded(r.u64(), 8));
        for (auto& c : st.floored) c = r.u64();
        ws.norm_stats = std::move(st);
    }
    std::size_t values = 0;
    if (__builtin_mul_overflow(count, ws.channels, &values) ||
        __builtin_mul_overflow(values, ws.length, &values)) {
        throw_data(path.string() + ": corrupt cache header");
    }
    bounded(values, 8);
    ws.data.resize(values);
    r.f64s(ws.data.data(), ws.data.size());
    if (!r.at_end()) throw_data(path.string() + ": trailing bytes in cache");
    ws.validate();
    return ws;
}

Tensor TeacherTable::targets(std::span<const int> labels_of_batch) const {
    std::vector<double> v;
    v.reserve(labels_of_batch.size() * dim);
    for (int l : labels_of_batch) {
        if (l < 0 || static_cast<std::size_t>(l) >= labels.size()) throw_usage("teacher: label index out of range");
        const auto e = embedding(static_cast<std::size_t>(l));
        v.insert(v.end(), e.begin(), e.end());
    }
    return Tensor({labels_of_batch.size(), dim}, std::move(v));
}

double TeacherTable::max_abs_cosine() const {
    double worst = 0.0;
    for (std::size_t a = 0; a < labels.size(); ++a)
        for (std::size_t b = a + 1; b < labels.size(); ++b) {
            const auto x = embedding(a);
            const auto y = embedding(b);
            double dot = 0.0, nx = 0.0, ny = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                dot += x[i] * y[i];
                nx += x[i] * x[i];
                ny += y[i] * y[i];
            }
            worst = std::max(worst, std::abs(dot) / std::sqrt(nx * ny));
        }
    return worst;
}

TeacherTable load_teacher_table(const std::optional<std::filesystem::path>& path,
                                const std::vector<std::string>& labels, std::size_t dim, std::uint64_t seed) {
    if (labels.empty()) throw_usage("teacher: no labels");
    TeacherTable t;
    t.labels = labels;
    if (path) {
        std::ifstream is(*path);
        if (!is) throw_data("teacher: cannot open " + path->string());
        std::map<std::string, std::vector<double>> rows;
        std::string line;
        std::size_t lineno = 0;
        std::size_t file_dim = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto tokens = textparse::split_ws(line);
            if (tokens.empty() || tokens[0].front() == '#') continue;
            std::vector<double> v;
            for (std::size_t i = 1; i < tokens.size(); ++i) {
                v.push_back(textparse::to_double(tokens[i], path->string(), lineno));
            }
            if (v.empty()) throw_data(path->string() + ":" + std::to_string(lineno) + ": label without a vector");
            if (file_dim == 0) file_dim = v.size();
            if (v.size() != file_dim) {
                throw_data(path->string() + ":" + std::to_string(lineno) + ": vector has " + std::to_string(v.size()) +
                           " values, earlier lines have " + std::to_string(file_dim));
            }
            rows[std::string(tokens[0])] = std::move(v);
        }
        if (dim != 0 && file_dim != dim) {
            throw_data("teacher: " + path->string() + " holds " + std::to_string(file_dim) +
                       "-dimensional embeddings, expected " + std::to_string(dim));
        }
        t.dim = file_dim;
        for (const auto& l : labels) {
            auto it = rows.find(l);
            if (it == rows.end()) throw_data("teacher: " + path->string() + " has no embedding for label '" + l + "'");
            t.vectors.insert(t.vectors.end(), it->second.begin(), it->second.end());
        }
        t.source = "file:" + path->string();
        return t;
    }

    if (dim == 0) throw_usage("teacher: embedding dimension must be positive");
    t.dim = dim;
    const Rng base = Rng(seed).split("teacher");
    for (std::uint64_t attempt = 0; attempt < 10000; ++attempt) {
        Rng rng = base.split(attempt);
        t.vectors.assign(labels.size() * dim, 0.0);
        for (std::size_t l = 0; l < labels.size(); ++l) {
            double norm = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                const double g = rng.normal();
                t.vectors[l * dim + i] = g;
                norm += g * g;
            }
            norm = std::sqrt(norm);
            for (std::size_t i = 0; i < dim; ++i) t.vectors[l * dim + i] /= norm;
        }
        if (labels.size() < 2 || t.max_abs_cosine() < kTeacherMaxCosine) {
            t.source = "synthetic:" + std::to_string(seed);
            return t;
        }
    }
    throw_numeric("teacher: could not draw " + std::to_string(labels.size()) + " vectors of dimension " +
                  std::to_string(dim) + " with pairwise |cos| < " + std::to_string(kTeacherMaxCosine) +
                  "; use a larger dimension");
}

void write_teacher_table(const TeacherTable& table, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw_data("cannot write " + path.string());
    os.precision(17);
    for (std::size_t l = 0; l < table.labels.size(); ++l) {
        os << table.labels[l];
        for (double v : table.embedding(l)) os << ' ' << v;
        os << '\n';
    }
}

}  // namespace gexse
