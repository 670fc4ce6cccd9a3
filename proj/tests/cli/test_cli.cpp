#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "gexse/checkpoint.hpp"
#include "gexse/data.hpp"
#include "tempdir.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GEXSE_CLI) + " -q " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// A small UCI-HAR-shaped tree ingested once per test.
struct Ingested {
    TempDir dir;
    fs::path raw = dir / "raw";
    fs::path cache = dir / "cache";
    Ingested() {
        REQUIRE(run_cli("synth --dataset ucihar --seed 3 --size 48 --out " + q(raw)) == 0);
        REQUIRE(run_cli("ingest --dataset ucihar --root " + q(raw) + " --out " + q(cache)) == 0);
    }
};

const char* kSmall = " --width 16 --blocks 1 --batch-size 32";

}  // namespace

TEST_CASE("ingest is idempotent") {
    Ingested d;
    const fs::path again = d.dir / "again";
    REQUIRE(run_cli("ingest --dataset ucihar --root " + q(d.raw) + " --out " + q(again)) == 0);
    for (const char* f : {"train.gxws", "test.gxws"}) CHECK(slurp(d.cache / f) == slurp(again / f));
    const auto ws = gexse::read_cache(d.cache / "train.gxws");
    CHECK(ws.channels == 9);
    CHECK(ws.length == 128);
    const auto m = read_json(d.cache / "run_manifest.json");
    CHECK(m["command"] == "ingest");
    CHECK(m["results"]["train"]["windows"] == 48);
    CHECK(m.contains("versions"));
    CHECK(m["timings_s"].contains("total"));

    CHECK(run_cli("ingest --dataset ucihar --root " + q(d.dir / "missing") + " --out " + q(d.dir / "x")) == 2);
    CHECK(run_cli("ingest --dataset nonsense --root " + q(d.raw) + " --out " + q(d.dir / "x")) == 1);
}

TEST_CASE("pamap2 and opportunity trees ingest with their window shapes") {
    TempDir dir;
    REQUIRE(run_cli("synth --dataset pamap2 --seed 1 --size 600 --out " + q(dir / "p")) == 0);
    REQUIRE(run_cli("ingest --dataset pamap2 --root " + q(dir / "p") + " --out " + q(dir / "pc")) == 0);
    const auto p = gexse::read_cache(dir / "pc" / "test.gxws");
    CHECK(p.channels == 36);
    CHECK(p.length == 256);

    REQUIRE(run_cli("synth --dataset opportunity --seed 1 --size 900 --out " + q(dir / "o")) == 0);
    REQUIRE(run_cli("ingest --dataset opportunity --root " + q(dir / "o") + " --out " + q(dir / "oc") +
                  " --channel-map " + q(fs::path(GEXSE_SOURCE_DIR) / "config" / "opportunity_channels.txt")) == 0);
    const auto o = gexse::read_cache(dir / "oc" / "train.gxws");
    CHECK(o.channels == 77);
    CHECK(o.length == 90);
}

TEST_CASE("train smoke run, log header and reproducibility") {
    Ingested d;
    const fs::path a = d.dir / "a", b = d.dir / "b";
    REQUIRE(run_cli("train --data " + q(d.cache) + " --out " + q(a) + " --epochs 2 --seed 5" + kSmall) == 0);
    REQUIRE(run_cli("train --data " + q(d.cache) + " --out " + q(b) + " --epochs 2 --seed 5" + kSmall) == 0);
    CHECK(slurp(a / "train_log.csv") == slurp(b / "train_log.csv"));
    for (const char* f : {"best.gxck", "last.gxck", "last.gxck.opt", "train_log.csv", "run_manifest.json"})
        CHECK(fs::exists(a / f));
    const std::string log = slurp(a / "train_log.csv");
    CHECK(log.find("epochs=2 lr=0.001 ") != std::string::npos);
    CHECK(read_json(a / "run_manifest.json")["seed"] == 5);

    SUBCASE("defaults are echoed") {
        // stops after the first epoch, the header still shows the configured defaults
        const fs::path c = d.dir / "c";
        REQUIRE(run_cli("train --data " + q(d.cache) + " --out " + q(c) + " --stop-at-f1 1e-12" + kSmall) == 0);
        CHECK(slurp(c / "train_log.csv").find("epochs=300 lr=0.001 ") != std::string::npos);
    }
    SUBCASE("flags override the config file") {
        std::ofstream(d.dir / "cfg.json") << R"({"epochs": 3, "lr": 0.004, "seed": 9})";
        const fs::path c = d.dir / "c";
        REQUIRE(run_cli("train --config " + q(d.dir / "cfg.json") + " --data " + q(d.cache) + " --out " + q(c) +
                      " --epochs 1" + kSmall) == 0);
        const auto m = read_json(c / "run_manifest.json");
        CHECK(m["config"]["epochs"] == 1);
        CHECK(m["config"]["lr"] == 0.004);
        CHECK(m["seed"] == 9);
        CHECK(m["results"]["epochs_run"] == 1);
    }
    SUBCASE("bad configuration") {
        std::ofstream(d.dir / "bad.json") << R"({"epoch": 3})";
        CHECK(run_cli("train --config " + q(d.dir / "bad.json") + " --data " + q(d.cache) + " --out " + q(d.dir / "z")) == 1);
        CHECK(run_cli("train --data " + q(d.cache) + " --out " + q(d.dir / "z") + " --lr -1") == 1);
        CHECK(run_cli("train --data " + q(d.cache) + " --out " + q(d.dir / "z") + " --width 6") == 1);
        CHECK(run_cli("train --data " + q(d.dir / "none") + " --out " + q(d.dir / "z")) == 2);
    }
}

TEST_CASE("eval report") {
    Ingested d;
    const fs::path ck = d.dir / "untrained.gxck";
    {
        const auto ws = gexse::read_cache(d.cache / "train.gxws");
        auto cfg = gexse::EncoderConfig::for_dataset(gexse::DatasetId::ucihar);
        cfg.width = 16;
        cfg.n_blocks = 1;
        auto params = gexse::init_encoder(cfg, gexse::Rng(1));
        gexse::save_checkpoint(ck, cfg, params, {{"teacher_source", "synthetic:0"}});
    }
    const fs::path out = d.dir / "eval";
    REQUIRE(run_cli("eval --checkpoint " + q(ck) + " --data " + q(d.cache) + " --out " + q(out)) == 0);
    const auto summary = read_json(out / "summary.json");
    CHECK(summary["k"] == 6);
    // an untrained model scores near chance
    CHECK(std::abs(summary["accuracy"].get<double>() - 1.0 / 6.0) <= 0.1);

    std::ifstream csv(out / "per_class.csv");
    std::string line, last;
    std::size_t rows = 0;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
        if (line.rfind("macro,", 0) == 0) last = line;
        else ++rows;
    }
    CHECK(rows == 6);
    REQUIRE(!last.empty());
    std::stringstream ss(last);
    std::string field;
    for (int i = 0; i < 4; ++i) std::getline(ss, field, ',');
    CHECK(std::stod(field) == summary["macro_f1"].get<double>());
    CHECK(read_json(out / "run_manifest.json")["results"].contains("alignment"));

    std::ofstream(d.dir / "junk.gxck") << "not a checkpoint";
    CHECK(run_cli("eval --checkpoint " + q(d.dir / "junk.gxck") + " --data " + q(d.cache) + " --out " + q(out)) == 2);
}

TEST_CASE("explain writes 24 frames and a manifest") {
    Ingested d;
    const fs::path run = d.dir / "run";
    REQUIRE(run_cli("train --data " + q(d.cache) + " --out " + q(run) + " --epochs 1" + kSmall) == 0);
    const fs::path a = d.dir / "ex_a", b = d.dir / "ex_b";
    for (const auto& out : {a, b})
        REQUIRE(run_cli("explain --checkpoint " + q(run / "best.gxck") + " --data " + q(d.cache) + " --window 2 --out " +
                      q(out)) == 0);
    const auto m = read_json(a / "manifest.json");
    CHECK(m["frames"].size() == 24);
    for (int i = 0; i < 24; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%02d.ppm", i);
        CHECK(slurp(a / name) == slurp(b / name));
    }
    CHECK(run_cli("explain --checkpoint " + q(run / "best.gxck") + " --data " + q(d.cache) + " --window 100000 --out " +
                q(a)) == 1);
    CHECK(run_cli("explain --checkpoint " + q(run / "best.gxck") + " --data " + q(d.cache) +
                " --saliency bogus --out " + q(a)) == 1);
}

TEST_CASE("diffuse train and sample") {
    TempDir dir;
    REQUIRE(run_cli("diffuse train --out " + q(dir / "m") + " --train-steps 300 --hidden 32 --steps 100") == 0);
    CHECK(fs::exists(dir / "m" / "model.gxdiff"));
    REQUIRE(run_cli("diffuse sample --model " + q(dir / "m" / "model.gxdiff") + " --out " + q(dir / "s") +
                  " --count 20 --guidance-scale 1.5 --label 1") == 0);
    std::ifstream in(dir / "s" / "samples.csv");
    std::string line;
    std::size_t n = 0;
    std::getline(in, line);
    CHECK(line == "x,y,label,guidance_scale");
    while (std::getline(in, line)) n += line.find(",1,1.5") != std::string::npos;
    CHECK(n == 20);
    CHECK(run_cli("diffuse sample --model " + q(dir / "m" / "model.gxdiff") + " --out " + q(dir / "s") +
                " --guidance-scale -1") == 1);
    CHECK(run_cli("diffuse sample --model " + q(dir / "m" / "model.gxdiff") + " --out " + q(dir / "s") + " --label 4") == 1);
}

TEST_CASE("verify suites and exit codes") {
    TempDir dir;
    CHECK(run_cli("verify fft --out " + q(dir.path())) == 0);
    CHECK(read_json(dir / "run_manifest.json")["results"]["failed"] == 0);
    CHECK(run_cli("verify metrics") == 0);
    CHECK(run_cli("verify gradcheck --shapes 2") == 0);
    CHECK(run_cli("verify nonsense") == 1);
    CHECK(run_cli("no-such-command") == 1);
    CHECK(run_cli("--help") == 0);
}
