#include "gexse/checkpoint.hpp"

#include <map>

#include "gexse/binio.hpp"
#include "gexse/error.hpp"

namespace gexse {

namespace {

constexpr char kMagic[8] = {'G', 'E', 'X', 'S', 'E', '0', '1', '\0'};

void put_tensor(binio::Writer& w, const std::string& name, const Shape& shape, const double* data) {
    w.str16(name);
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) w.u64(d);
    w.f64s(data, shape_numel(shape));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& cfg, EncoderParams& params,
                     const nlohmann::json& metadata) {
    cfg.validate();
    binio::Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    for (std::size_t v : {cfg.in_channels, cfg.window_length, cfg.width, cfg.n_blocks, cfg.num_classes,
                          cfg.embed_dim, cfg.stem_kernel, cfg.head_kernel, cfg.branch_kernels[0],
                          cfg.branch_kernels[1], cfg.branch_kernels[2]}) {
        w.u64(v);
    }
    w.str32(metadata.dump());
    const auto named = params.named_parameters();
    const auto norms = params.named_norm_states();
    w.u32(static_cast<std::uint32_t>(named.size() + 2 * norms.size()));
    for (const auto& np : named) put_tensor(w, np.name, np.tensor->shape(), np.tensor->data().data());
    for (const auto& ns : norms) {
        const Shape s{ns.state->running_mean.size()};
        put_tensor(w, ns.name + ".running_mean", s, ns.state->running_mean.data());
        put_tensor(w, ns.name + ".running_var", s, ns.state->running_var.data());
    }
    w.finish();
    w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto r = binio::Reader::open(path);
    r.expect_magic(std::string_view(kMagic, sizeof kMagic));
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw_data(path.string() + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                   std::to_string(kCheckpointVersion) + ")");
    }
    r.verify_checksum();

    Checkpoint ck;
    EncoderConfig& c = ck.config;
    for (std::size_t* f : {&c.in_channels, &c.window_length, &c.width, &c.n_blocks, &c.num_classes, &c.embed_dim,
                           &c.stem_kernel, &c.head_kernel, &c.branch_kernels[0], &c.branch_kernels[1],
                           &c.branch_kernels[2]}) {
        *f = r.u64();
    }
    try {
        c.validate();
    } catch (const Error& e) {
        throw_data(path.string() + ": stored config is invalid: " + e.what());
    }
    try {
        ck.metadata = nlohmann::json::parse(r.str32());
    } catch (const nlohmann::json::exception& e) {
        throw_data(path.string() + ": metadata is not valid JSON: " + e.what());
    }

    std::map<std::string, std::pair<Shape, std::vector<double>>> stored;
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str16();
        const std::size_t rank = r.u8();
        Shape shape(rank);
        for (auto& d : shape) d = r.u64();
        const std::size_t n = rank == 0 ? 0 : shape_numel(shape);
        std::vector<double> v(n);
        r.f64s(v.data(), n);
        if (!stored.emplace(std::move(name), std::make_pair(std::move(shape), std::move(v))).second) {
            throw_data(path.string() + ": duplicate tensor in checkpoint");
        }
    }
    if (!r.at_end()) throw_data(path.string() + ": trailing bytes after tensor table");

    ck.params = init_encoder(c, Rng(0));
    const auto take = [&](const std::string& name, const Shape& expect) -> std::vector<double>& {
        auto it = stored.find(name);
        if (it == stored.end()) throw_data(path.string() + ": missing tensor '" + name + "'");
        if (it->second.first != expect) {
            throw_data(path.string() + ": tensor '" + name + "' has shape " + shape_str(it->second.first) +
                       ", config implies " + shape_str(expect));
        }
        return it->second.second;
    };
    std::size_t used = 0;
    for (auto& np : ck.params.named_parameters()) {
        auto& v = take(np.name, np.tensor->shape());
        std::copy(v.begin(), v.end(), np.tensor->mutable_data().begin());
        ++used;
    }
    for (auto& ns : ck.params.named_norm_states()) {
        const Shape s{ns.state->running_mean.size()};
        ns.state->running_mean = take(ns.name + ".running_mean", s);
        ns.state->running_var = take(ns.name + ".running_var", s);
        used += 2;
    }
    if (used != stored.size()) throw_data(path.string() + ": checkpoint holds tensors the config does not use");
    return ck;
}

}  // namespace gexse
