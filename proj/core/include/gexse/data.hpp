#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gexse/encoder.hpp"
#include "gexse/tensor.hpp"

namespace gexse {

/// A named set of sensor channels. Model groups list channel indices of the
/// window tensor; auxiliary groups (heart rate, temperature) are not model
/// inputs and instead carry one summary value per window in `per_window`.
struct ChannelGroup {
    std::string name;
    std::vector<std::size_t> channels;
    std::vector<double> per_window;

    bool is_aux() const { return channels.empty(); }
    bool operator==(const ChannelGroup&) const = default;
};

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
    /// Channels whose variance was below the floor.
    std::vector<std::size_t> floored;
    bool operator==(const NormStats&) const = default;
};

inline constexpr double kStdFloor = 1e-8;

/// Windows (W x C x T, row-major) with labels and provenance.
struct WindowSet {
    DatasetId dataset = DatasetId::synthetic;
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<double> data;
    std::vector<int> labels;
    std::vector<int> subjects;
    std::vector<std::string> label_names;
    std::vector<ChannelGroup> channel_groups;
    /// Empty until normalize() has been applied.
    std::optional<NormStats> norm_stats;

    std::size_t size() const { return labels.size(); }
    std::size_t num_classes() const { return label_names.size(); }
    std::span<const double> window(std::size_t i) const {
        return {data.data() + i * channels * length, channels * length};
    }
    const ChannelGroup* group(const std::string& name) const;

    /// Throws a data error when any structural invariant is broken.
    void validate() const;

    /// Stacks the selected windows into a (B, C, T) tensor.
    Tensor batch(std::span<const std::size_t> indices) const;
    Tensor one_hot(std::span<const std::size_t> indices) const;
    /// The subset at `indices`, aux values included.
    WindowSet subset(std::span<const std::size_t> indices) const;

    bool operator==(const WindowSet&) const = default;
};

struct SplitSpec {
    std::set<int> train_subjects;
    std::set<int> test_subjects;

    /// Throws a usage error when the sets intersect or either is empty.
    void validate() const;
    static SplitSpec pamap2_default();
    static SplitSpec opportunity_default();
};

struct TrainTest {
    WindowSet train;
    WindowSet test;
};

/// Start offsets of every full window of `window` samples, stride `stride`,
/// that lies inside [0, n). Count is max(0, floor((n - window) / stride) + 1).
std::vector<std::size_t> window_starts(std::size_t n, std::size_t window, std::size_t stride);

/// Maximal runs [begin, end) of equal labels; negative labels (dropped
/// rows) never form a run.
struct LabelRun {
    std::size_t begin;
    std::size_t end;
    int label;
};
std::vector<LabelRun> label_runs(std::span<const int> labels);

/// In-place linear interpolation over NaNs with constant fill at the edges.
/// Returns false when every value is NaN.
bool interpolate_nan(std::span<double> series);

/// PAMAP2 Protocol files: 36 channels x 256 samples, stride 128, 12 classes.
TrainTest ingest_pamap2(const std::filesystem::path& root, const SplitSpec& split);

/// UCI-HAR "Inertial Signals" layout: 9 x 128, 6 classes, published split.
TrainTest ingest_ucihar(const std::filesystem::path& root);

/// One selected Opportunity column (1-based, as in the column_names file).
struct OpportunityChannel {
    std::size_t column;
    std::string group;
};

/// The shipped default: every IMU column with quaternions left out (77).
std::vector<OpportunityChannel> opportunity_default_channels();
/// Reads "<column> <group>" lines; '#' starts a comment.
std::vector<OpportunityChannel> read_channel_map(const std::filesystem::path& path);
void write_channel_map(const std::filesystem::path& path, const std::vector<OpportunityChannel>& map);

/// Opportunity S1-S4 ADL/Drill files: 77 x 90, stride 45, 17 gestures.
TrainTest ingest_opportunity(const std::filesystem::path& root, const SplitSpec& split,
                             const std::vector<OpportunityChannel>& channel_map);

/// Per-channel statistics over every sample of every window.
NormStats compute_norm_stats(const WindowSet& ws);
/// z-scores `ws` with `stats_from`'s statistics (computed if it has none).
WindowSet normalize(const WindowSet& ws, const WindowSet& stats_from);
WindowSet denormalize(const WindowSet& ws);

/// Binary cache ("GXWS01"), little-endian, FNV-1a checksummed.
void write_cache(const WindowSet& ws, const std::filesystem::path& path);
WindowSet read_cache(const std::filesystem::path& path);

struct TeacherTable {
    std::size_t dim = 0;
    std::string source;  // "file:<path>" or "synthetic:<seed>"
    std::vector<std::string> labels;
    std::vector<double> vectors;  // labels.size() x dim

    std::span<const double> embedding(std::size_t label) const { return {vectors.data() + label * dim, dim}; }
    /// (B, N) targets for the given class indices.
    Tensor targets(std::span<const int> labels_of_batch) const;
    double max_abs_cosine() const;
};

inline constexpr double kTeacherMaxCosine = 0.35;

/// File mode when `path` is set, otherwise seeded synthetic unit vectors.
TeacherTable load_teacher_table(const std::optional<std::filesystem::path>& path,
                                const std::vector<std::string>& labels, std::size_t dim, std::uint64_t seed);
void write_teacher_table(const TeacherTable& table, const std::filesystem::path& path);

/// In-memory toy data matching EncoderConfig::for_dataset(synthetic): each
/// class is a distinct mix of sinusoids plus noise, with `subjects` subjects.
WindowSet make_synthetic_windows(std::size_t count, std::uint64_t seed, std::size_t subjects = 4);

/// Fake raw datasets in the published directory layouts (for tests and demos).
void write_synthetic_ucihar(const std::filesystem::path& root, std::uint64_t seed, std::size_t windows_per_split);
void write_synthetic_pamap2(const std::filesystem::path& root, std::uint64_t seed, std::size_t rows_per_activity,
                            const std::vector<int>& subjects = {101, 102, 103, 104, 105, 106, 107, 108, 109});
void write_synthetic_opportunity(const std::filesystem::path& root, std::uint64_t seed, std::size_t rows_per_file);

std::vector<std::string> ucihar_label_names();
std::vector<std::string> pamap2_label_names();
std::vector<std::string> opportunity_label_names();
/// Raw activity / gesture codes in class-index order.
const std::vector<int>& pamap2_activity_ids();
const std::vector<int>& opportunity_gesture_codes();

}  // namespace gexse
