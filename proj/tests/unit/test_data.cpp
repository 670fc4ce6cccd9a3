#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "doctest.h"
#include "gexse/data.hpp"
#include "gexse/error.hpp"
#include "tempdir.hpp"

using namespace gexse;
namespace fs = std::filesystem;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

ErrorKind kind_of(const std::function<void()>& fn, std::string* message = nullptr) {
    try {
        fn();
    } catch (const Error& e) {
        if (message) *message = e.what();
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::usage;
}

void expect_disjoint(const TrainTest& tt) {
    std::set<int> a(tt.train.subjects.begin(), tt.train.subjects.end());
    for (int s : tt.test.subjects) CHECK(a.count(s) == 0);
}

// A PAMAP2 row with every sensor value set to `v`.
std::string pamap_row(double ts, int activity, double v) {
    std::string row = std::to_string(ts) + " " + std::to_string(activity) + " 90";
    for (int imu = 0; imu < 3; ++imu) {
        row += " 31.5";
        for (int k = 0; k < 12; ++k) row += " " + std::to_string(v);
        row += " 1 0 0 0";
    }
    return row + "\n";
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream is(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(is, line)) n += !line.empty();
    return n;
}

}  // namespace

TEST_CASE("window count follows the overlap arithmetic on 100 random lengths") {
    Rng rng(2024);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = rng.below(5000);
        for (std::size_t window : {90u, 128u, 256u}) {
            const std::size_t stride = window / 2;
            const auto starts = window_starts(n, window, stride);
            const long expect = n < window ? 0 : static_cast<long>((n - window) / stride) + 1;
            CHECK(static_cast<long>(starts.size()) == std::max(0L, expect));
            for (std::size_t j = 0; j < starts.size(); ++j) {
                CHECK(starts[j] == j * stride);
                CHECK(starts[j] + window <= n);
            }
        }
    }
}

TEST_CASE("windows never cross a label boundary") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> labels;
        while (labels.size() < 3000) {
            const int l = static_cast<int>(rng.below(5)) - 1;  // -1 is a dropped row
            const std::size_t len = 1 + rng.below(400);
            labels.insert(labels.end(), len, l);
        }
        std::size_t covered = 0;
        for (const auto& run : label_runs(labels)) {
            CHECK(run.label >= 0);
            for (std::size_t i = run.begin; i < run.end; ++i) CHECK(labels[i] == run.label);
            CHECK((run.begin == 0 || labels[run.begin - 1] != run.label));
            CHECK((run.end == labels.size() || labels[run.end] != run.label));
            for (auto s : window_starts(run.end - run.begin, 128, 64)) {
                for (std::size_t t = run.begin + s; t < run.begin + s + 128; ++t) CHECK(labels[t] == run.label);
            }
            covered += run.end - run.begin;
        }
        std::size_t kept = 0;
        for (int l : labels) kept += l >= 0;
        CHECK(covered == kept);
    }
}

TEST_CASE("linear interpolation over NaN") {
    std::vector<double> a{1.0, kNaN, 3.0};
    CHECK(interpolate_nan(a));
    CHECK(a == std::vector<double>{1.0, 2.0, 3.0});
    std::vector<double> b{kNaN, kNaN, 2.0, kNaN, kNaN, 5.0, kNaN};
    CHECK(interpolate_nan(b));
    CHECK(b == std::vector<double>{2.0, 2.0, 2.0, 3.0, 4.0, 5.0, 5.0});
    std::vector<double> c{kNaN, kNaN};
    CHECK_FALSE(interpolate_nan(c));
}

TEST_CASE("PAMAP2: a 600-row single-activity file gives 3 windows") {
    TempDir dir;
    {
        std::ofstream os(dir / "subject101.dat");
        for (int r = 0; r < 600; ++r) os << pamap_row(r * 0.01, 4, r);
        std::ofstream os2(dir / "subject102.dat");
        for (int r = 0; r < 300; ++r) os2 << pamap_row(r * 0.01, 1, 1.0);
    }
    const auto tt = ingest_pamap2(dir.path(), {{101}, {102}});
    REQUIRE(tt.train.size() == 3);
    CHECK(tt.test.size() == 1);
    CHECK(tt.train.channels == 36);
    CHECK(tt.train.length == 256);
    CHECK(tt.train.num_classes() == 12);
    // consecutive windows start 128 rows apart; every channel holds the row index
    for (std::size_t w = 0; w < 3; ++w) CHECK(tt.train.window(w)[0] == static_cast<double>(128 * w));
    CHECK(tt.train.labels[0] == 3);  // activity 4 (walking)
}

TEST_CASE("PAMAP2 ingestion of the published layout") {
    TempDir dir;
    write_synthetic_pamap2(dir.path(), 5, 700, {101, 102, 103, 105});
    const auto tt = ingest_pamap2(dir.path(), {{101, 102, 103}, {105}});
    expect_disjoint(tt);
    CHECK(tt.train.channels == 36);
    CHECK(tt.train.length == 256);
    CHECK(tt.train.label_names == pamap2_label_names());
    // 700 rows per activity -> 4 windows each, 12 activities, 3 subjects; the optional activity is dropped
    CHECK(tt.train.size() == 3 * 12 * 4);
    CHECK(tt.test.size() == 12 * 4);
    std::map<int, int> hist;
    for (int l : tt.train.labels) ++hist[l];
    CHECK(hist.size() == 12);
    const auto* hr = tt.train.group("heart_rate");
    REQUIRE(hr != nullptr);
    CHECK(hr->is_aux());
    CHECK(hr->per_window.size() == tt.train.size());
    for (double v : hr->per_window) CHECK(std::isfinite(v));
    for (double v : tt.train.data) REQUIRE(std::isfinite(v));
    CHECK(tt.train.group("temperature") != nullptr);
    CHECK(tt.train.group("accelerometer")->channels.size() == 18);
}

TEST_CASE("PAMAP2 errors") {
    TempDir dir;
    write_synthetic_pamap2(dir.path(), 5, 300, {101, 102});
    std::string msg;
    CHECK(kind_of([&] { ingest_pamap2(dir.path(), {{101}, {103}}); }, &msg) == ErrorKind::data);
    CHECK(msg.find("subject103") != std::string::npos);

    SUBCASE("malformed column count") {
        std::ofstream os(dir / "Protocol" / "subject102.dat", std::ios::app);
        os << "1.0 4 80 1 2 3\n";
        os.close();
        CHECK(kind_of([&] { ingest_pamap2(dir.path(), {{101}, {102}}); }, &msg) == ErrorKind::data);
        CHECK(msg.find("columns") != std::string::npos);
    }
    SUBCASE("unknown activity") {
        std::ofstream os(dir / "Protocol" / "subject102.dat", std::ios::app);
        os << pamap_row(99.0, 42, 0.0);
        os.close();
        CHECK(kind_of([&] { ingest_pamap2(dir.path(), {{101}, {102}}); }, &msg) == ErrorKind::data);
        CHECK(msg.find("42") != std::string::npos);
    }
    SUBCASE("overlapping split") {
        CHECK(kind_of([&] { ingest_pamap2(dir.path(), {{101, 102}, {102}}); }) == ErrorKind::usage);
    }
}

TEST_CASE("UCI-HAR ingestion of the published layout") {
    TempDir dir;
    write_synthetic_ucihar(dir.path(), 3, 60);
    const auto tt = ingest_ucihar(dir.path());
    expect_disjoint(tt);
    CHECK(tt.train.channels == 9);
    CHECK(tt.train.length == 128);
    CHECK(tt.train.num_classes() == 6);
    CHECK(tt.train.size() == 60);
    // label histogram equals a direct count of the label file
    std::map<int, int> from_file;
    {
        std::ifstream is(dir / "UCI HAR Dataset" / "train" / "y_train.txt");
        int v;
        while (is >> v) ++from_file[v - 1];
    }
    std::map<int, int> hist;
    for (int l : tt.train.labels) ++hist[l];
    CHECK(hist == from_file);
    CHECK(count_lines(dir / "UCI HAR Dataset" / "test" / "y_test.txt") == tt.test.size());
    // the first reading of body_gyro_y for window 0
    std::ifstream sig(dir / "UCI HAR Dataset" / "train" / "Inertial Signals" / "body_gyro_y_train.txt");
    double first = 0.0;
    sig >> first;
    CHECK(tt.train.window(0)[4 * 128] == first);
    // it also accepts the inner directory directly
    CHECK(ingest_ucihar(dir / "UCI HAR Dataset").train == tt.train);
}

TEST_CASE("UCI-HAR row-count mismatch is an error") {
    TempDir dir;
    write_synthetic_ucihar(dir.path(), 3, 12);
    {
        std::ofstream os(dir / "UCI HAR Dataset" / "test" / "y_test.txt", std::ios::app);
        os << "1\n";
        std::ofstream os2(dir / "UCI HAR Dataset" / "test" / "subject_test.txt", std::ios::app);
        os2 << "2\n";
    }
    std::string msg;
    CHECK(kind_of([&] { ingest_ucihar(dir.path()); }, &msg) == ErrorKind::data);
    CHECK(msg.find("rows") != std::string::npos);
}

TEST_CASE("Opportunity ingestion of the published layout") {
    TempDir dir;
    write_synthetic_opportunity(dir.path(), 9, 1100);
    const auto map = opportunity_default_channels();
    CHECK(map.size() == 77);
    std::set<std::size_t> cols;
    for (const auto& c : map) cols.insert(c.column);
    CHECK(cols.size() == 77);
    for (std::size_t imu : {38, 51, 64, 77, 90})
        for (std::size_t q = imu + 9; q < imu + 13; ++q) CHECK(cols.count(q) == 0);

    const auto tt = ingest_opportunity(dir.path(), SplitSpec::opportunity_default(), map);
    expect_disjoint(tt);
    CHECK(tt.train.channels == 77);
    CHECK(tt.train.length == 90);
    CHECK(tt.train.num_classes() == 17);
    std::set<int> seen(tt.train.labels.begin(), tt.train.labels.end());
    CHECK(seen.size() == 17);
    for (int s : tt.test.subjects) CHECK(s == 4);
    CHECK(tt.train.size() > 0);
    std::size_t grouped = 0;
    for (const auto& g : tt.train.channel_groups) grouped += g.channels.size();
    CHECK(grouped == 77);

    const auto shipped = read_channel_map(fs::path(GEXSE_SOURCE_DIR) / "config" / "opportunity_channels.txt");
    REQUIRE(shipped.size() == map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        CHECK(shipped[i].column == map[i].column);
        CHECK(shipped[i].group == map[i].group);
    }

    // an edited channel map round-trips through its text form
    auto small = std::vector<OpportunityChannel>(map.begin(), map.begin() + 10);
    write_channel_map(dir / "map.txt", small);
    const auto back = read_channel_map(dir / "map.txt");
    REQUIRE(back.size() == 10);
    CHECK(back[3].column == small[3].column);
    CHECK(back[3].group == small[3].group);
    CHECK(ingest_opportunity(dir.path(), SplitSpec::opportunity_default(), back).train.channels == 10);
}

TEST_CASE("Opportunity errors") {
    TempDir dir;
    write_synthetic_opportunity(dir.path(), 9, 400);
    std::string msg;
    CHECK(kind_of([&] { ingest_opportunity(dir.path(), {{1}, {2}}, {{251, "x"}}); }, &msg) == ErrorKind::data);
    CHECK(msg.find("251") != std::string::npos);
    // column 2 is an accelerometer with sporadic NaN; make column 3 NaN everywhere in one file
    {
        const auto f = dir / "dataset" / "S1-ADL1.dat";
        std::string text = read_text(f);
        std::string out;
        std::size_t pos = 0;
        while (pos < text.size()) {
            const std::size_t end = text.find('\n', pos);
            std::string line = text.substr(pos, end - pos);
            const std::size_t a = line.find(' ', line.find(' ') + 1);
            const std::size_t b = line.find(' ', a + 1);
            out += line.substr(0, a + 1) + "NaN" + line.substr(b) + "\n";
            pos = end + 1;
        }
        std::ofstream(f) << out;
    }
    CHECK(kind_of([&] { ingest_opportunity(dir.path(), {{1}, {2}}, {{3, "acc"}}); }, &msg) == ErrorKind::data);
    CHECK(msg.find("NaN in every row") != std::string::npos);
    CHECK(kind_of([&] { ingest_opportunity(dir.path(), {{1}, {7}}, opportunity_default_channels()); }) ==
          ErrorKind::data);
}

TEST_CASE("normalization") {
    auto raw = make_synthetic_windows(40, 1);
    // make channel 5 constant
    for (std::size_t w = 0; w < raw.size(); ++w)
        for (std::size_t t = 0; t < raw.length; ++t) raw.data[(w * raw.channels + 5) * raw.length + t] = 0.1;
    const auto norm = normalize(raw, raw);
    REQUIRE(norm.norm_stats.has_value());
    CHECK(norm.norm_stats->floored == std::vector<std::size_t>{5});
    const auto st = compute_norm_stats(norm);
    for (std::size_t c = 0; c < 5; ++c) {
        CHECK(std::abs(st.mean[c]) < 1e-6);
        CHECK(std::abs(st.std[c] - 1.0) < 1e-3);
    }
    for (std::size_t w = 0; w < norm.size(); ++w)
        for (std::size_t t = 0; t < norm.length; ++t) CHECK(norm.data[(w * norm.channels + 5) * norm.length + t] == 0.0);

    const auto back = denormalize(norm);
    double worst = 0.0;
    for (std::size_t i = 0; i < raw.data.size(); ++i) worst = std::max(worst, std::abs(back.data[i] - raw.data[i]));
    CHECK(worst < 1e-9);

    // test data takes the training statistics
    const auto test_raw = make_synthetic_windows(8, 2);
    const auto test = normalize(test_raw, norm);
    CHECK(test.norm_stats == norm.norm_stats);
    CHECK(kind_of([&] { normalize(norm, norm); }) == ErrorKind::usage);
}

TEST_CASE("cache round trip is bit exact") {
    TempDir dir;
    const auto raw = make_synthetic_windows(24, 3);
    const auto ws = normalize(raw, raw);
    write_cache(ws, dir / "w.gxws");
    const auto back = read_cache(dir / "w.gxws");
    CHECK(back == ws);
    write_cache(raw, dir / "raw.gxws");
    CHECK(read_cache(dir / "raw.gxws") == raw);
    // rewriting gives identical bytes
    write_cache(back, dir / "w2.gxws");
    CHECK(read_bytes(dir / "w.gxws") == read_bytes(dir / "w2.gxws"));
    const auto bytes = read_bytes(dir / "w.gxws");
    CHECK(std::string(bytes.begin(), bytes.begin() + 6) == "GXWS01");

    SUBCASE("bad magic") {
        auto b = bytes;
        b[1] = 'Y';
        write_bytes(dir / "w.gxws", b);
        CHECK(kind_of([&] { read_cache(dir / "w.gxws"); }) == ErrorKind::data);
    }
    SUBCASE("version mismatch") {
        auto b = bytes;
        b[8] = 7;
        write_bytes(dir / "w.gxws", b);
        std::string msg;
        CHECK(kind_of([&] { read_cache(dir / "w.gxws"); }, &msg) == ErrorKind::data);
        CHECK(msg.find("version") != std::string::npos);
    }
    SUBCASE("flipped byte") {
        auto b = bytes;
        b[b.size() - 100] ^= 0x01;
        write_bytes(dir / "w.gxws", b);
        std::string msg;
        CHECK(kind_of([&] { read_cache(dir / "w.gxws"); }, &msg) == ErrorKind::data);
        CHECK(msg.find("checksum") != std::string::npos);
    }
    SUBCASE("truncated") {
        auto b = bytes;
        b.resize(b.size() / 2);
        write_bytes(dir / "w.gxws", b);
        CHECK(kind_of([&] { read_cache(dir / "w.gxws"); }) == ErrorKind::data);
    }
}

TEST_CASE("window set helpers and invariants") {
    const auto ws = make_synthetic_windows(10, 4);
    ws.validate();
    const std::vector<std::size_t> idx{7, 2};
    const auto x = ws.batch(idx);
    CHECK(x.shape() == Shape{2, ws.channels, ws.length});
    CHECK(x.data()[0] == ws.window(7)[0]);
    const auto y = ws.one_hot(idx);
    CHECK(y.at({0, static_cast<std::size_t>(ws.labels[7])}) == 1.0);
    const auto sub = ws.subset(idx);
    sub.validate();
    CHECK(sub.labels == std::vector<int>{ws.labels[7], ws.labels[2]});
    CHECK(sub.group("heart_rate")->per_window[0] == ws.group("heart_rate")->per_window[7]);

    auto broken = ws;
    broken.channel_groups[1].channels.push_back(0);
    CHECK(kind_of([&] { broken.validate(); }) == ErrorKind::data);
    broken = ws;
    broken.labels[0] = 9;
    CHECK(kind_of([&] { broken.validate(); }) == ErrorKind::data);
}

TEST_CASE("synthetic teacher table") {
    const auto labels = opportunity_label_names();
    const auto a = load_teacher_table(std::nullopt, labels, 64, 11);
    const auto b = load_teacher_table(std::nullopt, labels, 64, 11);
    CHECK(a.vectors == b.vectors);
    CHECK(a.dim == 64);
    CHECK(a.max_abs_cosine() < kTeacherMaxCosine);
    // direct pairwise computation
    double worst = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        double n = 0.0;
        for (double v : a.embedding(i)) n += v * v;
        CHECK(std::abs(n - 1.0) < 1e-12);
        for (std::size_t j = i + 1; j < labels.size(); ++j) {
            double d = 0.0;
            for (std::size_t t = 0; t < 64; ++t) d += a.embedding(i)[t] * a.embedding(j)[t];
            worst = std::max(worst, std::abs(d));
        }
    }
    CHECK(worst < 0.35);
    CHECK(load_teacher_table(std::nullopt, labels, 64, 12).vectors != a.vectors);
    const auto wide = load_teacher_table(std::nullopt, labels, 768, 11);
    CHECK(wide.max_abs_cosine() < kTeacherMaxCosine);
    const std::vector<int> batch{3, 0};
    const auto t = a.targets(batch);
    CHECK(t.shape() == Shape{2, 64});
    CHECK(t.data()[64] == a.embedding(0)[0]);
}

TEST_CASE("teacher table from a file") {
    TempDir dir;
    const auto labels = ucihar_label_names();
    const auto syn = load_teacher_table(std::nullopt, labels, 16, 5);
    write_teacher_table(syn, dir / "teacher.txt");
    const auto back = load_teacher_table(dir / "teacher.txt", labels, 16, 0);
    CHECK(back.vectors == syn.vectors);
    CHECK(back.source.rfind("file:", 0) == 0);

    std::string msg;
    auto missing = labels;
    missing.push_back("jumping_jacks");
    CHECK(kind_of([&] { load_teacher_table(dir / "teacher.txt", missing, 16, 0); }, &msg) == ErrorKind::data);
    CHECK(msg.find("jumping_jacks") != std::string::npos);
    CHECK(kind_of([&] { load_teacher_table(dir / "teacher.txt", labels, 32, 0); }) == ErrorKind::data);
    {
        std::ofstream os(dir / "ragged.txt");
        os << "walking 1 2 3\nsitting 1 2\n";
    }
    CHECK(kind_of([&] { load_teacher_table(dir / "ragged.txt", labels, 0, 0); }) == ErrorKind::data);
}
