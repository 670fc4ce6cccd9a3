#include <cmath>
#include <fstream>

#include "doctest.h"
#include "gexse/error.hpp"
#include "gexse/explain.hpp"
#include "gexse/ops.hpp"
#include "gexse/rng.hpp"
#include "gexse/train.hpp"
#include "tempdir.hpp"

using namespace gexse;
namespace fs = std::filesystem;

namespace {

ActivationVector uniform_activation(double a_acc, double a_hr, double a_temp, double a_gyro = 0.3) {
    ActivationVector v;
    v.label = "walking";
    v.groups = {{"accelerometer", 1.0, a_acc}, {"gyroscope", 1.0, a_gyro}, {"heart_rate", 90.0, a_hr, true},
                {"temperature", 33.0, a_temp, true}};
    return v;
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::usage;
}

bool region_equals(const Image& a, const Image& b, std::size_t x0, std::size_t x1, std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x)
            for (int c = 0; c < 3; ++c)
                if (a.rgb[(y * a.width + x) * 3 + c] != b.rgb[(y * b.width + x) * 3 + c]) return false;
    return true;
}

}  // namespace

TEST_CASE("cue formulas at the bounds") {
    CueConfig cfg;
    cfg.base_fps = 30.0;
    const auto lo = map_cues(uniform_activation(0, 0, 0), cfg);
    CHECK(lo.frames.size() == 24);
    CHECK(lo.frame_count == 24);
    CHECK(lo.frames[5].display_duration_ms == doctest::Approx(2000.0 / 30.0).epsilon(1e-15));
    CHECK(*lo.pulse_period == 24);
    CHECK(*lo.frames[7].temp_fill == 0.0);

    const auto hi = map_cues(uniform_activation(1, 1, 1), cfg);
    CHECK(hi.frames[0].display_duration_ms == doctest::Approx(500.0 / 30.0).epsilon(1e-15));
    CHECK(*hi.pulse_period == 6);
    CHECK(*hi.frames[23].temp_fill == 1.0);

    const auto mid = map_cues(uniform_activation(0.5, 0, 0), cfg);
    CHECK(mid.frames[0].display_duration_ms == doctest::Approx((1000.0 / 30.0) / 1.25).epsilon(1e-15));

    // the heart follows a cosine between 0.6 and 1.0 with the pulse period
    for (const auto& f : hi.frames) {
        CHECK(*f.heart_scale >= 0.6 - 1e-15);
        CHECK(*f.heart_scale <= 1.0 + 1e-15);
        CHECK(*f.heart_scale == doctest::Approx(0.8 + 0.2 * std::cos(2 * M_PI * f.index / 6.0)).epsilon(1e-14));
    }
    CHECK(*hi.frames[0].heart_scale == 1.0);
    CHECK(*hi.frames[3].heart_scale == doctest::Approx(0.6));
}

TEST_CASE("each cue is monotone in its activation over a 101-point sweep") {
    double prev_duration = INFINITY, prev_fill = -INFINITY;
    std::size_t prev_period = 1000;
    for (int i = 0; i <= 100; ++i) {
        const double a = i / 100.0;
        const auto speed = map_cues(uniform_activation(a, 0.4, 0.4));
        const auto pulse = map_cues(uniform_activation(0.4, a, 0.4));
        const auto fill = map_cues(uniform_activation(0.4, 0.4, a));
        CHECK(speed.frames.size() == 24);
        CHECK(speed.frames[0].display_duration_ms < prev_duration);
        CHECK(*pulse.pulse_period <= prev_period);
        CHECK(*fill.frames[0].temp_fill > prev_fill);
        for (const auto& f : speed.frames) CHECK(f.display_duration_ms > 0.0);
        prev_duration = speed.frames[0].display_duration_ms;
        prev_period = *pulse.pulse_period;
        prev_fill = *fill.frames[0].temp_fill;
    }
}

TEST_CASE("map_cues is pure and reproduces a baseline exactly") {
    const auto a = uniform_activation(0.2, 0.7, 0.9);
    CHECK(map_cues(a) == map_cues(a));
    const auto baseline = average_activations({a, uniform_activation(0.4, 0.3, 0.1)});
    CHECK(baseline.groups[0].activation == doctest::Approx(0.3));
    auto copy = baseline;
    CHECK(map_cues(copy) == map_cues(baseline));
    CHECK(map_cues(copy).to_json() == map_cues(baseline).to_json());
}

TEST_CASE("absent groups drop their cue") {
    ActivationVector v;
    v.label = "sitting";
    v.groups = {{"accelerometer", 1.0, 0.25}, {"gyroscope", 2.0, 0.75}};
    const auto m = map_cues(v);
    CHECK(m.frames.size() == 24);
    CHECK_FALSE(m.pulse_period.has_value());
    CHECK_FALSE(m.frames[0].heart_scale.has_value());
    CHECK_FALSE(m.frames[0].temp_fill.has_value());
    const auto j = m.to_json();
    CHECK(j["cues"].contains("speed"));
    CHECK_FALSE(j["cues"].contains("pulse"));
    CHECK_FALSE(j["frames"][0].contains("temp_fill"));
    CHECK(j["frame_count"] == 24);
    CHECK(j["version"] == kManifestVersion);
    CHECK(j["frames"][23]["file"] == "frame_23.ppm");

    ActivationVector no_acc;
    no_acc.groups = {{"gyroscope", 1.0, 0.9}};
    CHECK(map_cues(no_acc).frames[0].display_duration_ms == doctest::Approx(1000.0 / 24.0));

    auto bad = v;
    bad.groups[0].activation = 1.5;
    CHECK(kind_of([&] { map_cues(bad); }) == ErrorKind::usage);
}

TEST_CASE("degenerate min-max rule") {
    auto ws = make_synthetic_windows(8, 3);
    SUBCASE("single model group") {
        ws.channel_groups = {{"all", {0, 1, 2, 3, 4, 5}, {}}};
        const auto a = group_activations(ws, 2, {1, 2, 3, 4, 5, 6}, 1);
        REQUIRE(a.groups.size() == 1);
        CHECK(a.groups[0].activation == 0.5);
        CHECK(a.degenerate);
    }
    SUBCASE("zero input window") {
        for (std::size_t i = 0; i < ws.channels * ws.length; ++i) ws.data[i] = 0.0;
        const std::size_t in = ws.channels * ws.length;
        Rng rng(4);
        std::vector<double> w(in * 4);
        for (double& x : w) x = rng.normal();
        const Tensor W({in, 4}, w), b({4}, {0.1, 0.2, 0.3, 0.4});
        const auto a = quantify_activations(ws, 0, [&](const Tensor& x) { return affine(reshape(x, {1, in}), W, b); });
        CHECK(a.degenerate);
        for (const auto& g : a.groups) {
            CHECK(g.activation >= 0.0);
            CHECK(g.activation <= 1.0);
            if (!g.aux) CHECK(g.activation == 0.5);
        }
        CHECK(a.predicted_class == 3);
    }
    SUBCASE("two distinct groups map to 0 and 1") {
        const auto a = group_activations(ws, 0, {1, 1, 1, 4, 4, 4}, 0);
        CHECK(a.find("accelerometer")->activation == 0.0);
        CHECK(a.find("gyroscope")->activation == 1.0);
        CHECK_FALSE(a.degenerate);
        // aux values are scaled against their range over the set
        const auto& hr = ws.group("heart_rate")->per_window;
        const double lo = *std::min_element(hr.begin(), hr.end()), hi = *std::max_element(hr.begin(), hr.end());
        CHECK(a.find("heart_rate")->activation == doctest::Approx((hr[0] - lo) / (hi - lo)));
    }
}

TEST_CASE("gradient x input on a linear model matches the analytic score; doubling a group doubles it") {
    auto ws = make_synthetic_windows(6, 9);
    const std::size_t C = ws.channels, T = ws.length, in = C * T, k = 4;
    Rng rng(8);
    std::vector<double> w(in * k);
    for (double& x : w) x = rng.normal();
    const Tensor W({in, k}, w), b({k}, std::vector<double>(k, 0.0));
    const LogitsFn probe = [&](const Tensor& x) { return affine(reshape(x, {x.dim(0), in}), W, b); };

    const int cls = 2;
    const auto base = quantify_activations(ws, 1, probe, cls);
    auto analytic = [&](const WindowSet& s, std::size_t ch) {
        double acc = 0.0;
        for (std::size_t t = 0; t < T; ++t) acc += std::abs(w[(ch * T + t) * k + cls] * s.window(1)[ch * T + t]);
        return acc / T;
    };
    double acc_score = 0.0;
    for (std::size_t ch : ws.group("accelerometer")->channels) acc_score += analytic(ws, ch);
    acc_score /= 3;
    CHECK(base.find("accelerometer")->score == doctest::Approx(acc_score).epsilon(1e-12));

    auto doubled = ws;
    for (std::size_t ch : ws.group("gyroscope")->channels)
        for (std::size_t t = 0; t < T; ++t) doubled.data[(1 * C + ch) * T + t] *= 2.0;
    const auto after = quantify_activations(doubled, 1, probe, cls);
    CHECK(after.find("gyroscope")->score > base.find("gyroscope")->score);
    CHECK(after.find("gyroscope")->score == doctest::Approx(2.0 * base.find("gyroscope")->score).epsilon(1e-12));
    CHECK(after.find("accelerometer")->score == base.find("accelerometer")->score);
}

TEST_CASE("encoder saliency: both methods, parameters left untouched") {
    const auto raw = make_synthetic_windows(16, 1);
    const auto ws = normalize(raw, raw);
    const auto cfg = EncoderConfig::for_dataset(DatasetId::synthetic);
    auto params = init_encoder(cfg, Rng(3));
    for (auto method : {SaliencyMethod::gradient_x_input, SaliencyMethod::stem_energy}) {
        const auto a = quantify_activations(ws, 4, params, cfg, method);
        REQUIRE(a.groups.size() == ws.channel_groups.size());
        for (std::size_t g = 0; g < a.groups.size(); ++g) {
            CHECK(a.groups[g].name == ws.channel_groups[g].name);
            CHECK(a.groups[g].activation >= 0.0);
            CHECK(a.groups[g].activation <= 1.0);
        }
        const auto p = predict(ws.subset(std::vector<std::size_t>{4}), params, cfg);
        CHECK(a.predicted_class == p.predicted[0]);
        CHECK(a.label == ws.label_names[static_cast<std::size_t>(p.predicted[0])]);
        CHECK(quantify_activations(ws, 4, params, cfg, method) == a);
    }
    for (auto& np : params.named_parameters()) CHECK(np.tensor->grad().empty());
    CHECK(parse_saliency("stem_energy") == SaliencyMethod::stem_energy);
    CHECK(kind_of([] { parse_saliency("lime"); }) == ErrorKind::usage);
    CHECK(kind_of([&] { quantify_activations(ws, 99, params, cfg); }) == ErrorKind::usage);
}

TEST_CASE("render: 24 named frames, deterministic bytes, overlays where expected") {
    TempDir dir;
    const auto m = map_cues(uniform_activation(0.6, 0.8, 0.0));
    render_frames(m, std::nullopt, dir / "a");
    render_frames(m, std::nullopt, dir / "b");
    for (std::size_t i = 0; i < 24; ++i) {
        const std::string name = std::string("frame_") + (i < 10 ? "0" : "") + std::to_string(i) + ".ppm";
        REQUIRE(fs::exists(dir / "a" / name));
        CHECK(read_bytes(dir / "a" / name) == read_bytes(dir / "b" / name));
    }
    std::size_t count = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) count += e.path().extension() == ".ppm";
    CHECK(count == 24);
    CHECK(read_bytes(dir / "a" / "manifest.json") == read_bytes(dir / "b" / "manifest.json"));

    const Image bg = placeholder_background(m.activity);
    const Image f0 = read_ppm(dir / "a" / "frame_00.ppm");
    const auto l = overlay_layout(bg.width, bg.height);
    // temp_fill = 0: the bar region is untouched background
    CHECK(region_equals(f0, bg, l.bar_x0, l.bar_x1, l.bar_top, l.bar_bottom));
    // the heart is drawn top right and nothing else changes
    CHECK_FALSE(region_equals(f0, bg, l.heart_cx - 2, l.heart_cx + 2, l.heart_cy - 2, l.heart_cy + 2));
    CHECK(region_equals(f0, bg, 0, bg.width / 2, 0, bg.height));

    CueFrame full;
    full.temp_fill = 1.0;
    const Image filled = render_frame(bg, full);
    for (std::size_t y = l.bar_top; y < l.bar_bottom; ++y)
        CHECK(filled.rgb[(y * bg.width + l.bar_x0) * 3] == 214);
    CueFrame half;
    half.temp_fill = 0.5;
    const Image h = render_frame(bg, half);
    CHECK(region_equals(h, bg, l.bar_x0, l.bar_x1, l.bar_top, (l.bar_top + l.bar_bottom) / 2));
    CHECK_FALSE(region_equals(h, bg, l.bar_x0, l.bar_x1, (l.bar_top + l.bar_bottom) / 2, l.bar_bottom));

    // a bigger heart covers more pixels
    auto covered = [&](double s) {
        CueFrame f;
        f.heart_scale = s;
        const Image img = render_frame(bg, f);
        std::size_t n = 0;
        for (std::size_t i = 0; i < img.rgb.size(); ++i) n += img.rgb[i] != bg.rgb[i];
        return n;
    };
    CHECK(covered(1.0) > covered(0.6));
}

TEST_CASE("render with base frames and their errors") {
    TempDir dir;
    fs::create_directories(dir / "base");
    for (int i = 0; i < 25; ++i) {
        Image img{64, 48, std::vector<std::uint8_t>(64 * 48 * 3, static_cast<std::uint8_t>(i * 7))};
        write_ppm(img, dir / "base" / ("b" + std::to_string(100 + i) + ".ppm"));
    }
    CHECK(read_ppm(dir / "base" / "b103.ppm").rgb[0] == 21);
    const auto m = map_cues(uniform_activation(0.1, 0.1, 0.1));
    render_frames(m, dir / "base", dir / "out");
    const Image f5 = read_ppm(dir / "out" / "frame_05.ppm");
    CHECK(f5.width == 64);
    CHECK(f5.rgb[(20 * 64 + 32) * 3] == 35);  // centre pixel of b105

    fs::remove(dir / "base" / "b124.ppm");
    fs::remove(dir / "base" / "b123.ppm");
    CHECK(kind_of([&] { render_frames(m, dir / "base", dir / "out2"); }) == ErrorKind::data);
    write_ppm(Image{40, 40, std::vector<std::uint8_t>(40 * 40 * 3, 0)}, dir / "base" / "b123.ppm");
    CHECK(kind_of([&] { render_frames(m, dir / "base", dir / "out2"); }) == ErrorKind::data);
    std::ofstream(dir / "base" / "b123.ppm") << "not an image";
    CHECK(kind_of([&] { render_frames(m, dir / "base", dir / "out2"); }) == ErrorKind::data);
    CHECK(kind_of([&] { render_frames(m, dir / "missing", dir / "out2"); }) == ErrorKind::data);
}
