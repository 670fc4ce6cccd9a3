#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gexse/data.hpp"
#include "gexse/encoder.hpp"
#include "gexse/tensor.hpp"

namespace gexse {

enum class SaliencyMethod {
    gradient_x_input,  // mean_t |d logit_c / d x_ch * x_ch|
    stem_energy,       // mean_t sum_d (W_stem[d,ch] * x_ch)^2, class-agnostic
};

std::string saliency_name(SaliencyMethod m);
SaliencyMethod parse_saliency(const std::string& name);

struct GroupActivation {
    std::string name;
    double score = 0.0;       // unnormalized (saliency mean, or the raw aux value)
    double activation = 0.0;  // in [0, 1]
    bool aux = false;
    bool degenerate = false;  // min-max range was zero, activation set to 0.5

    bool operator==(const GroupActivation&) const = default;
};

struct ActivationVector {
    std::size_t window_index = 0;
    int predicted_class = 0;
    std::string label;
    std::vector<GroupActivation> groups;  // same order as WindowSet::channel_groups
    /// Model-channel groups had all-equal scores.
    bool degenerate = false;

    const GroupActivation* find(const std::string& name) const;
    bool operator==(const ActivationVector&) const = default;
};

using LogitsFn = std::function<Tensor(const Tensor&)>;

/// Per-channel gradient x input of logit `target_class` (argmax when unset,
/// written back) for one (1, C, T) window.
std::vector<double> gradient_x_input(const Tensor& window, const LogitsFn& logits, std::optional<int>& target_class);

/// Group scores from per-channel scores: model groups are min-max scaled
/// across groups, aux groups against their range over the whole set.
ActivationVector group_activations(const WindowSet& ws, std::size_t index, const std::vector<double>& channel_scores,
                                   int predicted_class);

/// Any differentiable model, gradient x input.
ActivationVector quantify_activations(const WindowSet& ws, std::size_t index, const LogitsFn& logits,
                                      std::optional<int> target_class = std::nullopt);

/// The encoder in eval mode. Parameters are not modified (gradients go to a copy).
ActivationVector quantify_activations(const WindowSet& ws, std::size_t index, const EncoderParams& params,
                                      const EncoderConfig& cfg, SaliencyMethod method = SaliencyMethod::gradient_x_input);

/// Element-wise mean of activation vectors over the same groups (a class baseline).
ActivationVector average_activations(const std::vector<ActivationVector>& vs);

inline constexpr std::size_t kCueFrames = 24;

/// Constants of the activation -> cue rules.
struct CueConfig {
    double base_fps = 24.0;
    double speed_min = 0.5;    // playback speed at a = 0
    double speed_span = 1.5;   // added at a = 1
    double pulse_span = 3.0;   // period = round(24 / (1 + pulse_span * a))
    double heart_min = 0.6;
    double heart_max = 1.0;
    std::string speed_group = "accelerometer";
    std::string pulse_group = "heart_rate";
    std::string fill_group = "temperature";

    void validate() const;
};

struct CueFrame {
    std::size_t index = 0;
    double display_duration_ms = 0.0;
    std::optional<double> heart_scale;
    std::optional<double> temp_fill;
    bool operator==(const CueFrame&) const = default;
};

struct CueManifest {
    std::string activity;
    std::size_t frame_count = kCueFrames;
    double base_fps = 24.0;
    std::optional<double> speed_activation;
    std::optional<std::size_t> pulse_period;
    std::optional<double> pulse_activation;
    std::optional<double> fill_activation;
    std::vector<CueFrame> frames;
    ActivationVector activations;

    nlohmann::json to_json() const;
    bool operator==(const CueManifest&) const = default;
};

inline constexpr int kManifestVersion = 1;

/// Pure mapping. Frame duration = (1000 / fps) / (speed_min + speed_span * a_acc);
/// heart_scale = mid + half * cos(2 pi i / P) with P = round(24 / (1 + pulse_span * a_hr));
/// temp_fill = a_temp. Groups that are absent drop their cue; without an
/// accelerometer group frames play at the base rate.
CueManifest map_cues(const ActivationVector& a, const CueConfig& cfg = {});

double display_duration_ms(double a_speed, const CueConfig& cfg);
std::size_t pulse_period_frames(double a_pulse, const CueConfig& cfg);

struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    bool operator==(const Image&) const = default;
};

/// Binary PPM (P6, maxval 255).
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& img, const std::filesystem::path& path);

/// Dark gradient with the activity label drawn in a 5x7 pixel font.
Image placeholder_background(const std::string& label, std::size_t width = 320, std::size_t height = 240);

/// Where the overlays go for a given frame size.
struct OverlayLayout {
    std::size_t heart_cx, heart_cy, heart_radius;               // full-size radius
    std::size_t bar_x0, bar_x1, bar_top, bar_bottom;            // [x0,x1) x [top,bottom)
};
OverlayLayout overlay_layout(std::size_t width, std::size_t height);

Image render_frame(const Image& background, const CueFrame& frame);

/// Writes frame_00.ppm .. frame_23.ppm and manifest.json into `out`. Base
/// frames, when given, are the first 24 *.ppm files of the directory in name
/// order and must all share one size.
void render_frames(const CueManifest& m, const std::optional<std::filesystem::path>& base_frames,
                   const std::filesystem::path& out);

}  // namespace gexse
