#include "gexse/explain.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>

#include "gexse/error.hpp"
#include "gexse/ops.hpp"
#include "gexse/parallel.hpp"

namespace gexse {

namespace fs = std::filesystem;

std::string saliency_name(SaliencyMethod m) {
    return m == SaliencyMethod::gradient_x_input ? "gradient_x_input" : "stem_energy";
}

SaliencyMethod parse_saliency(const std::string& name) {
    if (name == "gradient_x_input" || name == "grad-x-input" || name == "gradxinput") return SaliencyMethod::gradient_x_input;
    if (name == "stem_energy" || name == "stem-energy") return SaliencyMethod::stem_energy;
    throw_usage("unknown saliency method '" + name + "' (gradient_x_input, stem_energy)");
}

const GroupActivation* ActivationVector::find(const std::string& name) const {
    for (const auto& g : groups)
        if (g.name == name) return &g;
    return nullptr;
}

std::vector<double> gradient_x_input(const Tensor& window, const LogitsFn& logits, std::optional<int>& target_class) {
    if (window.rank() != 3 || window.dim(0) != 1) throw_shape("saliency expects one (1,C,T) window, got " + shape_str(window.shape()));
    const std::size_t C = window.dim(1), T = window.dim(2);
    Tensor x(window.shape(), std::vector<double>(window.data().begin(), window.data().end()), true);
    const Tensor z = logits(x);
    if (z.rank() != 2 || z.dim(0) != 1) throw_shape("model must return (1,k) logits, got " + shape_str(z.shape()));
    const std::size_t k = z.dim(1);
    if (!target_class) {
        const auto row = z.data();
        target_class = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    if (*target_class < 0 || static_cast<std::size_t>(*target_class) >= k)
        throw_usage("target class " + std::to_string(*target_class) + " out of range");
    std::vector<double> mask(k, 0.0);
    mask[static_cast<std::size_t>(*target_class)] = 1.0;
    backward(sum(mul(z, Tensor({1, k}, std::move(mask)))));

    std::vector<double> scores(C, 0.0);
    const auto g = x.grad();
    if (g.empty()) return scores;  // the logit does not depend on the input
    const auto v = x.data();
    for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t t = 0; t < T; ++t) s += std::abs(g[c * T + t] * v[c * T + t]);
        scores[c] = s / static_cast<double>(T);
    }
    return scores;
}

ActivationVector group_activations(const WindowSet& ws, std::size_t index, const std::vector<double>& channel_scores,
                                   int predicted_class) {
    if (index >= ws.size()) throw_usage("window index " + std::to_string(index) + " out of range (" + std::to_string(ws.size()) + " windows)");
    if (channel_scores.size() != ws.channels) throw_shape("one score per channel expected");
    if (ws.channel_groups.empty()) throw_data("window set defines no channel groups");
    ActivationVector av;
    av.window_index = index;
    av.predicted_class = predicted_class;
    if (predicted_class >= 0 && static_cast<std::size_t>(predicted_class) < ws.label_names.size())
        av.label = ws.label_names[static_cast<std::size_t>(predicted_class)];

    double lo = INFINITY, hi = -INFINITY;
    for (const auto& grp : ws.channel_groups) {
        GroupActivation g;
        g.name = grp.name;
        g.aux = grp.is_aux();
        if (g.aux) {
            g.score = grp.per_window.at(index);
            double a = INFINITY, b = -INFINITY;
            for (double v : grp.per_window)
                if (std::isfinite(v)) a = std::min(a, v), b = std::max(b, v);
            if (!(b > a)) {
                g.activation = 0.5;
                g.degenerate = true;
            } else {
                g.activation = std::clamp((g.score - a) / (b - a), 0.0, 1.0);
            }
        } else {
            for (std::size_t ch : grp.channels) g.score += channel_scores.at(ch);
            g.score /= static_cast<double>(grp.channels.size());
            lo = std::min(lo, g.score);
            hi = std::max(hi, g.score);
        }
        av.groups.push_back(std::move(g));
    }
    // min-max across model groups
    av.degenerate = !(hi > lo);
    for (auto& g : av.groups) {
        if (g.aux) continue;
        g.degenerate = av.degenerate;
        g.activation = av.degenerate ? 0.5 : (g.score - lo) / (hi - lo);
    }
    return av;
}

ActivationVector quantify_activations(const WindowSet& ws, std::size_t index, const LogitsFn& logits,
                                      std::optional<int> target_class) {
    if (index >= ws.size()) throw_usage("window index " + std::to_string(index) + " out of range (" + std::to_string(ws.size()) + " windows)");
    const std::vector<std::size_t> one{index};
    const auto scores = gradient_x_input(ws.batch(one), logits, target_class);
    return group_activations(ws, index, scores, *target_class);
}

ActivationVector quantify_activations(const WindowSet& ws, std::size_t index, const EncoderParams& params,
                                      const EncoderConfig& cfg, SaliencyMethod method) {
    if (ws.channels != cfg.in_channels || ws.length != cfg.window_length) throw_shape("windows do not match the model input shape");
    if (method == SaliencyMethod::gradient_x_input) {
        const EncoderParams copy = params.clone();
        return quantify_activations(ws, index, [&](const Tensor& x) { return encoder_forward(x, copy, cfg, false).logits; });
    }
    if (index >= ws.size()) throw_usage("window index " + std::to_string(index) + " out of range");
    NoGradGuard guard;
    const std::vector<std::size_t> one{index};
    const Tensor x = ws.batch(one);
    const Tensor logits = encoder_forward(x, params, cfg, false).logits;
    const auto z = logits.data();
    const int predicted = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    const std::size_t C = ws.channels, T = ws.length, D = cfg.width;
    const auto w = params.stem_w.data();  // (D, C, 1)
    std::vector<double> scores(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        double wsq = 0.0, xsq = 0.0;
        for (std::size_t d = 0; d < D; ++d) wsq += w[d * C + c] * w[d * C + c];
        for (std::size_t t = 0; t < T; ++t) xsq += x.data()[c * T + t] * x.data()[c * T + t];
        scores[c] = wsq * xsq / static_cast<double>(T);
    }
    return group_activations(ws, index, scores, predicted);
}

ActivationVector average_activations(const std::vector<ActivationVector>& vs) {
    if (vs.empty()) throw_usage("no activation vectors to average");
    ActivationVector out = vs.front();
    for (std::size_t i = 1; i < vs.size(); ++i) {
        if (vs[i].groups.size() != out.groups.size()) throw_usage("activation vectors have different groups");
        for (std::size_t g = 0; g < out.groups.size(); ++g) {
            if (vs[i].groups[g].name != out.groups[g].name) throw_usage("activation vectors have different groups");
            out.groups[g].score += vs[i].groups[g].score;
            out.groups[g].activation += vs[i].groups[g].activation;
        }
    }
    const double n = static_cast<double>(vs.size());
    for (auto& g : out.groups) {
        g.score /= n;
        g.activation /= n;
        g.degenerate = false;
    }
    out.degenerate = false;
    return out;
}

void CueConfig::validate() const {
    if (!(base_fps > 0.0)) throw_usage("base fps must be > 0");
    if (!(speed_min > 0.0) || !(speed_span > 0.0)) throw_usage("speed constants must be > 0");
    if (!(pulse_span > 0.0)) throw_usage("pulse span must be > 0");
    if (!(heart_min > 0.0) || !(heart_max >= heart_min)) throw_usage("heart scale range is invalid");
}

double display_duration_ms(double a_speed, const CueConfig& cfg) {
    return (1000.0 / cfg.base_fps) / (cfg.speed_min + cfg.speed_span * a_speed);
}

std::size_t pulse_period_frames(double a_pulse, const CueConfig& cfg) {
    const double p = std::round(static_cast<double>(kCueFrames) / (1.0 + cfg.pulse_span * a_pulse));
    return static_cast<std::size_t>(std::max(1.0, p));
}

CueManifest map_cues(const ActivationVector& a, const CueConfig& cfg) {
    cfg.validate();
    for (const auto& g : a.groups)
        if (!(g.activation >= 0.0 && g.activation <= 1.0))
            throw_usage("activation of " + g.name + " is outside [0,1]");
    CueManifest m;
    m.activity = a.label;
    m.base_fps = cfg.base_fps;
    m.activations = a;
    if (const auto* g = a.find(cfg.speed_group)) m.speed_activation = g->activation;
    if (const auto* g = a.find(cfg.pulse_group)) {
        m.pulse_activation = g->activation;
        m.pulse_period = pulse_period_frames(g->activation, cfg);
    }
    if (const auto* g = a.find(cfg.fill_group)) m.fill_activation = g->activation;

    const double duration = m.speed_activation ? display_duration_ms(*m.speed_activation, cfg) : 1000.0 / cfg.base_fps;
    const double mid = 0.5 * (cfg.heart_min + cfg.heart_max), half = 0.5 * (cfg.heart_max - cfg.heart_min);
    for (std::size_t i = 0; i < kCueFrames; ++i) {
        CueFrame f;
        f.index = i;
        f.display_duration_ms = duration;
        if (m.pulse_period) {
            const double phase = 2.0 * std::numbers::pi * static_cast<double>(i % *m.pulse_period) /
                                 static_cast<double>(*m.pulse_period);
            f.heart_scale = mid + half * std::cos(phase);
        }
        f.temp_fill = m.fill_activation;
        m.frames.push_back(f);
    }
    return m;
}

nlohmann::json CueManifest::to_json() const {
    nlohmann::json j;
    j["schema"] = "gexse.cue_manifest";
    j["version"] = kManifestVersion;
    j["activity"] = activity;
    j["predicted_class"] = activations.predicted_class;
    j["window_index"] = activations.window_index;
    j["frame_count"] = frame_count;
    j["base_fps"] = base_fps;
    nlohmann::json cues = nlohmann::json::object();
    if (speed_activation) cues["speed"] = {{"activation", *speed_activation}, {"display_duration_ms", frames.front().display_duration_ms}};
    if (pulse_period) cues["pulse"] = {{"activation", *pulse_activation}, {"period_frames", *pulse_period}};
    if (fill_activation) cues["fill"] = {{"activation", *fill_activation}};
    j["cues"] = cues;
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : activations.groups)
        groups.push_back({{"group", g.name}, {"score", g.score}, {"activation", g.activation}, {"aux", g.aux},
                          {"degenerate", g.degenerate}});
    j["activations"] = groups;
    j["degenerate"] = activations.degenerate;
    nlohmann::json fr = nlohmann::json::array();
    for (const auto& f : frames) {
        nlohmann::json e{{"index", f.index}, {"file", "frame_" + std::string(f.index < 10 ? "0" : "") + std::to_string(f.index) + ".ppm"},
                         {"display_duration_ms", f.display_duration_ms}};
        if (f.heart_scale) e["heart_scale"] = *f.heart_scale;
        if (f.temp_fill) e["temp_fill"] = *f.temp_fill;
        fr.push_back(e);
    }
    j["frames"] = fr;
    return j;
}

// ---- images ---------------------------------------------------------------

Image read_ppm(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_data("cannot read image " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto skip = [&] {
        while (pos < buf.size()) {
            if (buf[pos] == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else if (std::isspace(buf[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() -> std::size_t {
        skip();
        std::size_t v = 0, digits = 0;
        while (pos < buf.size() && std::isdigit(buf[pos]) && digits < 9) v = v * 10 + (buf[pos++] - '0'), ++digits;
        if (digits == 0) throw_data(path.string() + ": malformed PPM header");
        return v;
    };
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '6') throw_data(path.string() + ": not a binary PPM (P6)");
    pos = 2;
    Image img;
    img.width = number();
    img.height = number();
    const std::size_t maxval = number();
    if (maxval != 255) throw_data(path.string() + ": only 8-bit PPM is supported");
    if (pos >= buf.size() || !std::isspace(buf[pos])) throw_data(path.string() + ": malformed PPM header");
    ++pos;
    const std::size_t n = img.width * img.height * 3;
    if (img.width == 0 || img.height == 0 || buf.size() - pos < n) throw_data(path.string() + ": truncated PPM");
    img.rgb.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos), buf.begin() + static_cast<std::ptrdiff_t>(pos + n));
    return img;
}

void write_ppm(const Image& img, const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_data("cannot write " + path.string());
    os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!os) throw_data("failed writing " + path.string());
}

namespace {

// 5x7 glyphs, one byte per row, bit 4 = leftmost column.
const std::array<std::uint8_t, 7>& glyph(char c) {
    static const std::array<std::array<std::uint8_t, 7>, 26> letters{{
        {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
        {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E},
        {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
        {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
        {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
        {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
        {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},
        {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
        {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
        {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
        {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
        {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
        {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},
    }};
    static const std::array<std::array<std::uint8_t, 7>, 10> digits{{
        {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
        {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
        {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
        {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
        {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},
    }};
    static const std::array<std::uint8_t, 7> space{}, dash{0, 0, 0, 0x1F, 0, 0, 0}, under{0, 0, 0, 0, 0, 0, 0x1F},
        dot{0, 0, 0, 0, 0, 0x0C, 0x0C}, comma{0, 0, 0, 0, 0x0C, 0x04, 0x08},
        unknown{0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04};
    const unsigned char u = static_cast<unsigned char>(std::toupper(static_cast<unsigned char>(c)));
    if (u >= 'A' && u <= 'Z') return letters[u - 'A'];
    if (u >= '0' && u <= '9') return digits[u - '0'];
    switch (u) {
        case ' ': return space;
        case '-': return dash;
        case '_': return under;
        case '.': return dot;
        case ',': return comma;
        default: return unknown;
    }
}

void put(Image& img, std::size_t x, std::size_t y, std::array<std::uint8_t, 3> c) {
    if (x >= img.width || y >= img.height) return;
    std::uint8_t* p = &img.rgb[(y * img.width + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
}

constexpr std::array<std::uint8_t, 3> kHeart{228, 38, 64};
constexpr std::array<std::uint8_t, 3> kBar{214, 28, 28};

}  // namespace

Image placeholder_background(const std::string& label, std::size_t width, std::size_t height) {
    if (width < 32 || height < 32) throw_usage("frames must be at least 32x32");
    Image img{width, height, std::vector<std::uint8_t>(width * height * 3)};
    for (std::size_t y = 0; y < height; ++y) {
        const double t = static_cast<double>(y) / static_cast<double>(height - 1);
        const std::array<std::uint8_t, 3> c{static_cast<std::uint8_t>(48 - 24 * t), static_cast<std::uint8_t>(52 - 24 * t),
                                            static_cast<std::uint8_t>(64 - 28 * t)};
        for (std::size_t x = 0; x < width; ++x) put(img, x, y, c);
    }
    const std::size_t margin = std::max<std::size_t>(2, std::min(width, height) / 24);
    const std::size_t avail = width - 2 * margin;
    std::string text = label.empty() ? "?" : label;
    if (text.size() * 6 > avail) text.resize(avail / 6);
    const std::size_t scale = std::clamp<std::size_t>(avail / (6 * std::max<std::size_t>(text.size(), 1)), 1, 4);
    const std::size_t text_w = text.size() * 6 * scale - scale;
    const std::size_t x0 = (width - text_w) / 2, y0 = (height - 7 * scale) / 2;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto& g = glyph(text[i]);
        for (std::size_t r = 0; r < 7; ++r)
            for (std::size_t col = 0; col < 5; ++col)
                if (g[r] & (0x10 >> col))
                    for (std::size_t dy = 0; dy < scale; ++dy)
                        for (std::size_t dx = 0; dx < scale; ++dx)
                            put(img, x0 + (i * 6 + col) * scale + dx, y0 + r * scale + dy, {222, 222, 222});
    }
    return img;
}

OverlayLayout overlay_layout(std::size_t width, std::size_t height) {
    OverlayLayout l{};
    const std::size_t margin = std::max<std::size_t>(2, std::min(width, height) / 24);
    l.heart_radius = std::max<std::size_t>(3, height / 10);
    l.heart_cx = width - margin - (l.heart_radius * 6) / 5;
    l.heart_cy = margin + (l.heart_radius * 13) / 10;
    const std::size_t bar_w = std::max<std::size_t>(3, width / 24);
    l.bar_x0 = margin;
    l.bar_x1 = margin + bar_w;
    l.bar_bottom = height - margin;
    l.bar_top = l.bar_bottom - height / 3;
    return l;
}

Image render_frame(const Image& background, const CueFrame& frame) {
    if (background.width < 32 || background.height < 32) throw_data("frames must be at least 32x32");
    Image img = background;
    const auto l = overlay_layout(img.width, img.height);
    if (frame.temp_fill) {
        const double fill = std::clamp(*frame.temp_fill, 0.0, 1.0);
        const auto rows = static_cast<std::size_t>(std::lround(fill * static_cast<double>(l.bar_bottom - l.bar_top)));
        for (std::size_t y = l.bar_bottom - rows; y < l.bar_bottom; ++y)
            for (std::size_t x = l.bar_x0; x < l.bar_x1; ++x) put(img, x, y, kBar);
    }
    if (frame.heart_scale) {
        // (u^2 + v^2 - 1)^3 - u^2 v^3 <= 0, v pointing up
        const double r = *frame.heart_scale * static_cast<double>(l.heart_radius);
        const auto reach = static_cast<long>(std::ceil(1.3 * r));
        const long cx = static_cast<long>(l.heart_cx), cy = static_cast<long>(l.heart_cy);
        for (long y = cy - reach; y <= cy + reach; ++y)
            for (long x = cx - reach; x <= cx + reach; ++x) {
                const double u = (static_cast<double>(x - cx) + 0.5) / r;
                const double v = -(static_cast<double>(y - cy) + 0.5) / r + 0.15;
                const double q = u * u + v * v - 1.0;
                if (q * q * q - u * u * v * v * v <= 0.0 && x >= 0 && y >= 0)
                    put(img, static_cast<std::size_t>(x), static_cast<std::size_t>(y), kHeart);
            }
    }
    return img;
}

void render_frames(const CueManifest& m, const std::optional<fs::path>& base_frames, const fs::path& out) {
    if (m.frames.size() != kCueFrames) throw_usage("manifest must have exactly 24 frames");
    std::vector<Image> backgrounds;
    if (base_frames) {
        if (!fs::is_directory(*base_frames)) throw_data(base_frames->string() + " is not a directory");
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(*base_frames))
            if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.size() < kCueFrames)
            throw_data(base_frames->string() + ": need at least 24 .ppm frames, found " + std::to_string(files.size()));
        files.resize(kCueFrames);
        backgrounds.resize(kCueFrames);
        parallel_for(kCueFrames, [&](std::size_t i) { backgrounds[i] = read_ppm(files[i]); });
        for (std::size_t i = 1; i < kCueFrames; ++i)
            if (backgrounds[i].width != backgrounds[0].width || backgrounds[i].height != backgrounds[0].height)
                throw_data(files[i].string() + ": size " + std::to_string(backgrounds[i].width) + "x" +
                           std::to_string(backgrounds[i].height) + " differs from the first frame");
    } else {
        backgrounds.assign(1, placeholder_background(m.activity));
    }
    fs::create_directories(out);
    parallel_for(kCueFrames, [&](std::size_t i) {
        const Image& bg = backgrounds[backgrounds.size() == 1 ? 0 : i];
        const std::string name = std::string("frame_") + (i < 10 ? "0" : "") + std::to_string(i) + ".ppm";
        write_ppm(render_frame(bg, m.frames[i]), out / name);
    });
    std::ofstream os(out / "manifest.json");
    if (!os) throw_data("cannot write " + (out / "manifest.json").string());
    os << m.to_json().dump(2) << '\n';
}

}  // namespace gexse
