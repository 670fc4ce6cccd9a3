#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "doctest.h"
#include "gexse/error.hpp"
#include "gexse/metrics.hpp"
#include "gexse/rng.hpp"
#include "gexse/verify.hpp"
#include "tempdir.hpp"

using namespace gexse;

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
    std::ifstream is(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

struct Sample {
    std::vector<int> preds, labels;
};

Sample random_sample(Rng& rng, std::size_t n, std::size_t k) {
    Sample s;
    for (std::size_t i = 0; i < n; ++i) {
        s.labels.push_back(static_cast<int>(rng.below(k)));
        // biased toward correct so the metrics are not all near chance
        s.preds.push_back(rng.uniform() < 0.6 ? s.labels.back() : static_cast<int>(rng.below(k)));
    }
    return s;
}

}  // namespace

TEST_CASE("suite of hand-evaluated matrices") {
    for (const auto& r : verify::metrics_suite()) {
        INFO(verify::format_result(r));
        CHECK(r.passed);
    }
}

TEST_CASE("two-class hand example") {
    const std::vector<int> labels{0, 0, 1, 1};
    const std::vector<int> preds{0, 1, 1, 1};
    const auto m = metrics(confusion(preds, labels, 2));
    CHECK(m.per_class[0].precision == doctest::Approx(1.0));
    CHECK(m.per_class[0].recall == doctest::Approx(0.5));
    CHECK(m.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(m.per_class[1].precision == doctest::Approx(2.0 / 3.0));
    CHECK(m.per_class[1].recall == doctest::Approx(1.0));
    CHECK(m.per_class[1].f1 == doctest::Approx(0.8));
    CHECK(m.macro_f1 == doctest::Approx(11.0 / 15.0).epsilon(1e-15));
}

TEST_CASE("perfect and single-column predictions") {
    const std::vector<int> labels{0, 1, 2, 2, 1, 0, 2};
    auto cm = confusion(labels, labels, 3);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t p = 0; p < 3; ++p)
            if (t != p) CHECK(cm.at(t, p) == 0);
    const auto m = metrics(cm);
    CHECK(m.macro_f1 == 1.0);
    CHECK(m.accuracy == 1.0);

    const std::vector<int> ones(labels.size(), 1);
    cm = confusion(ones, labels, 3);
    for (std::size_t t = 0; t < 3; ++t) CHECK(cm.at(t, 1) == cm.row_sum(t));
    const auto m2 = metrics(cm);
    CHECK(m2.per_class[0].undefined);
    CHECK(m2.per_class[0].precision == 0.0);
    CHECK(m2.per_class[0].f1 == 0.0);
}

TEST_CASE("zero-support class is zero and flagged") {
    const std::vector<int> labels{0, 0, 1};
    const std::vector<int> preds{0, 0, 1};
    const auto m = metrics(confusion(preds, labels, 3));
    CHECK(m.per_class[2].support == 0);
    CHECK(m.per_class[2].undefined);
    CHECK(m.per_class[2].precision == 0.0);
    CHECK(m.per_class[2].recall == 0.0);
    CHECK(m.per_class[2].f1 == 0.0);
    CHECK(m.macro_f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("confusion counts match a loop oracle on random data") {
    Rng rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 2 + rng.below(6);
        const auto s = random_sample(rng, 200, k);
        const auto cm = confusion(s.preds, s.labels, k);
        for (std::size_t t = 0; t < k; ++t)
            for (std::size_t p = 0; p < k; ++p) {
                std::uint64_t n = 0;
                for (std::size_t i = 0; i < s.labels.size(); ++i)
                    n += (s.labels[i] == static_cast<int>(t) && s.preds[i] == static_cast<int>(p));
                CHECK(cm.at(t, p) == n);
            }
        const auto m = metrics(cm);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < s.labels.size(); ++i) correct += s.labels[i] == s.preds[i];
        CHECK(m.accuracy == doctest::Approx(static_cast<double>(correct) / 200.0).epsilon(1e-15));
        CHECK(m.accuracy == doctest::Approx(static_cast<double>(cm.trace()) / cm.total()).epsilon(1e-15));
        for (const auto& c : m.per_class) {
            CHECK(c.precision >= 0.0);
            CHECK(c.precision <= 1.0);
            CHECK(c.recall <= 1.0);
            CHECK(c.f1 <= 1.0);
        }
        const auto norm = cm.row_normalized();
        for (std::size_t t = 0; t < k; ++t) {
            double rs = 0.0;
            for (std::size_t p = 0; p < k; ++p) rs += norm[t * k + p];
            CHECK((cm.row_sum(t) == 0 ? rs == 0.0 : std::abs(rs - 1.0) < 1e-12));
        }
    }
}

TEST_CASE("metrics are invariant under relabeling of classes") {
    Rng rng(505);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 2 + rng.below(6);
        const auto s = random_sample(rng, 150, k);
        std::vector<int> perm(k);
        for (std::size_t i = 0; i < k; ++i) perm[i] = static_cast<int>(i);
        rng.shuffle(perm);
        auto relabel = [&](std::vector<int> v) {
            for (int& x : v) x = perm[static_cast<std::size_t>(x)];
            return v;
        };
        const auto a = metrics(confusion(s.preds, s.labels, k));
        const auto b = metrics(confusion(relabel(s.preds), relabel(s.labels), k));
        CHECK(a.macro_f1 == doctest::Approx(b.macro_f1).epsilon(1e-14));
        CHECK(a.macro_precision == doctest::Approx(b.macro_precision).epsilon(1e-14));
        CHECK(a.macro_recall == doctest::Approx(b.macro_recall).epsilon(1e-14));
        for (std::size_t c = 0; c < k; ++c) {
            const auto& pc = b.per_class[static_cast<std::size_t>(perm[c])];
            CHECK(a.per_class[c].f1 == pc.f1);
            CHECK(a.per_class[c].support == pc.support);
        }
    }
}

TEST_CASE("out-of-range labels are a data error") {
    const std::vector<int> labels{0, 3};
    const std::vector<int> preds{0, 1};
    try {
        confusion(preds, labels, 3);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::data);
    }
}

TEST_CASE("report files agree with each other") {
    TempDir dir;
    Rng rng(606);
    const auto s = random_sample(rng, 300, 4);
    const std::vector<std::string> names{"walking", "sitting", "lying, flat", "running"};
    const auto cm = confusion(s.preds, s.labels, 4, names);
    const auto m = metrics(cm);
    emit_report(m, cm, dir.path());

    const auto per_class = read_csv(dir / "per_class.csv");
    REQUIRE(per_class.size() == 6);
    CHECK(per_class[0][0] == "label");
    CHECK(per_class[1][0] == "walking");
    CHECK(std::abs(std::stod(per_class[1][3]) - m.per_class[0].f1) < 1e-6);
    CHECK(per_class[5][0] == "macro");
    const double csv_macro = std::stod(per_class[5][3]);
    CHECK(std::abs(csv_macro - m.macro_f1) < 1e-6);

    const auto j = nlohmann::json::parse(read_text(dir / "summary.json"));
    CHECK(j["macro_f1"].get<double>() == csv_macro);
    CHECK(j["classes"].size() == 4);
    CHECK(j["classes"][2]["label"] == "lying, flat");

    const auto text = read_text(dir / "confusion_normalized.csv");
    CHECK(text.rfind("label,walking,sitting,\"lying, flat\",running\n", 0) == 0);
    const auto counts = read_csv(dir / "confusion_counts.csv");
    CHECK(counts.size() == 5);
}

TEST_CASE("unwritable report path is a data error") {
    TempDir dir;
    write_bytes(dir / "file", {1});
    const std::vector<int> v{0, 1};
    const auto cm = confusion(v, v, 2);
    CHECK_THROWS_AS(emit_report(metrics(cm), cm, dir / "file" / "sub"), Error);
}
