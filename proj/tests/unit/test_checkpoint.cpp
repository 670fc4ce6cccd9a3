#include "doctest.h"
#include "gexse/checkpoint.hpp"
#include "gexse/error.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace gexse;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

EncoderParams trained_looking(const EncoderConfig& cfg) {
    auto p = init_encoder(cfg, Rng(17));
    // push some data through in training mode so running statistics move
    Rng d(18);
    encoder_forward(oracle::random_tensor(d, {3, cfg.in_channels, cfg.window_length}, false), p, cfg, true);
    return p;
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

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
    TempDir dir;
    auto cfg = EncoderConfig::for_dataset(DatasetId::synthetic);
    cfg.branch_kernels = {1, 3, 7};
    auto p = trained_looking(cfg);
    const nlohmann::json meta{{"dataset", "synthetic"}, {"label_names", {"a", "b", "c", "d"}}, {"seed", 17}};
    save_checkpoint(dir / "m.gexse", cfg, p, meta);
    auto ck = load_checkpoint(dir / "m.gexse");

    CHECK(ck.config == cfg);
    CHECK(ck.metadata == meta);
    auto a = p.named_parameters();
    auto b = ck.params.named_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(values(*a[i].tensor) == values(*b[i].tensor));
    }
    auto na = p.named_norm_states();
    auto nb = ck.params.named_norm_states();
    for (std::size_t i = 0; i < na.size(); ++i) {
        CHECK(na[i].state->running_mean == nb[i].state->running_mean);
        CHECK(na[i].state->running_var == nb[i].state->running_var);
    }
    Rng d(3);
    const Tensor x = oracle::random_tensor(d, {2, cfg.in_channels, cfg.window_length}, false);
    NoGradGuard ng;
    CHECK(values(encoder_forward(x, p, cfg, false).logits) ==
          values(encoder_forward(x, ck.params, cfg, false).logits));

    // saving the loaded model reproduces the file byte for byte
    save_checkpoint(dir / "m2.gexse", ck.config, ck.params, ck.metadata);
    CHECK(read_bytes(dir / "m.gexse") == read_bytes(dir / "m2.gexse"));
}

TEST_CASE("checkpoint corruption is detected") {
    TempDir dir;
    const auto cfg = EncoderConfig::for_dataset(DatasetId::synthetic);
    auto p = init_encoder(cfg, Rng(1));
    const auto file = dir / "m.gexse";
    save_checkpoint(file, cfg, p);
    const auto good = read_bytes(file);

    SUBCASE("bad magic") {
        auto b = good;
        b[0] = 'X';
        write_bytes(file, b);
        CHECK(kind_of([&] { load_checkpoint(file); }) == ErrorKind::data);
    }
    SUBCASE("unknown version") {
        auto b = good;
        b[8] = 99;
        write_bytes(file, b);
        CHECK(kind_of([&] { load_checkpoint(file); }) == ErrorKind::data);
    }
    SUBCASE("one flipped payload byte") {
        auto b = good;
        b[b.size() / 2] ^= 0x10;
        write_bytes(file, b);
        try {
            load_checkpoint(file);
            FAIL("expected checksum failure");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("checksum") != std::string::npos);
        }
    }
    SUBCASE("truncated") {
        auto b = good;
        b.resize(b.size() - 100);
        write_bytes(file, b);
        CHECK(kind_of([&] { load_checkpoint(file); }) == ErrorKind::data);
    }
    SUBCASE("missing file") { CHECK(kind_of([&] { load_checkpoint(dir / "nope"); }) == ErrorKind::data); }
}

TEST_CASE("checkpoint header layout is little-endian as documented") {
    TempDir dir;
    const auto cfg = EncoderConfig::for_dataset(DatasetId::synthetic);
    auto p = init_encoder(cfg, Rng(1));
    save_checkpoint(dir / "m.gexse", cfg, p);
    const auto b = read_bytes(dir / "m.gexse");
    CHECK(std::string(b.begin(), b.begin() + 7) == "GEXSE01");
    CHECK(b[7] == 0);
    CHECK(b[8] == 1);
    CHECK(b[9] == 0);
    // first config field: in_channels as u64
    std::uint64_t cin = 0;
    for (int i = 0; i < 8; ++i) cin |= static_cast<std::uint64_t>(b[12 + i]) << (8 * i);
    CHECK(cin == cfg.in_channels);
}
