#include "gexse/encoder.hpp"

#include <cmath>

#include "gexse/error.hpp"

namespace gexse {

std::string dataset_name(DatasetId id) {
    switch (id) {
        case DatasetId::ucihar: return "ucihar";
        case DatasetId::pamap2: return "pamap2";
        case DatasetId::opportunity: return "opportunity";
        case DatasetId::synthetic: return "synthetic";
    }
    return "unknown";
}

DatasetId parse_dataset(const std::string& name) {
    if (name == "ucihar" || name == "uci-har" || name == "uci_har") return DatasetId::ucihar;
    if (name == "pamap2") return DatasetId::pamap2;
    if (name == "opportunity") return DatasetId::opportunity;
    if (name == "synthetic") return DatasetId::synthetic;
    throw_usage("unknown dataset '" + name + "' (expected ucihar, pamap2, opportunity or synthetic)");
}

void EncoderConfig::validate() const {
    if (in_channels == 0) throw_usage("encoder: in_channels must be positive");
    if (window_length < 2) throw_usage("encoder: window_length must be >= 2");
    if (width == 0 || width % 4 != 0) {
        throw_usage("encoder: width " + std::to_string(width) + " must be a positive multiple of 4");
    }
    if (n_blocks < 1) throw_usage("encoder: n_blocks must be >= 1");
    if (num_classes < 2) throw_usage("encoder: num_classes must be >= 2");
    if (embed_dim == 0) throw_usage("encoder: embed_dim must be positive");
    auto odd = [](std::size_t k) { return k % 2 == 1; };
    if (!odd(stem_kernel) || !odd(head_kernel)) throw_usage("encoder: FFC kernel sizes must be odd");
    for (std::size_t k : branch_kernels) {
        if (!odd(k)) throw_usage("encoder: branch kernel sizes must be odd");
    }
}

EncoderConfig EncoderConfig::for_dataset(DatasetId id) {
    EncoderConfig c;
    switch (id) {
        case DatasetId::ucihar:
            c.in_channels = 9;
            c.window_length = 128;
            c.width = 64;
            c.num_classes = 6;
            break;
        case DatasetId::pamap2:
            c.in_channels = 36;
            c.window_length = 256;
            c.width = 128;
            c.num_classes = 12;
            break;
        case DatasetId::opportunity:
            c.in_channels = 77;
            c.window_length = 90;
            c.width = 128;
            c.num_classes = 17;
            break;
        case DatasetId::synthetic:
            c.in_channels = 6;
            c.window_length = 32;
            c.width = 16;
            c.num_classes = 4;
            c.embed_dim = 16;
            c.stem_kernel = 3;
            break;
    }
    return c;
}

namespace {

Tensor uniform_init(const Rng& parent, const std::string& name, Shape shape, std::size_t fan_in) {
    Rng rng = parent.split(name);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * bound;
    return Tensor(std::move(shape), std::move(v), true);
}

FfcParams init_ffc(const Rng& rng, const std::string& name, std::size_t channels, std::size_t k) {
    FfcParams p;
    p.channels = channels;
    p.kernel_size = k;
    const std::size_t c2 = 2 * channels;
    p.kernel = uniform_init(rng, name + ".kernel", {c2, c2, k}, c2 * k);
    p.bias = uniform_init(rng, name + ".bias", {c2}, c2 * k);
    p.gamma = Tensor::full({c2}, 1.0, true);
    p.beta = Tensor::zeros({c2}, true);
    p.norm = NormState(c2);
    return p;
}

std::size_t ffc_param_count(std::size_t channels, std::size_t k) {
    const std::size_t c2 = 2 * channels;
    return c2 * c2 * k + c2 + 2 * c2;
}

FfcParams clone_ffc(const FfcParams& p) {
    FfcParams c;
    c.channels = p.channels;
    c.kernel_size = p.kernel_size;
    c.kernel = p.kernel.clone_leaf();
    c.bias = p.bias.clone_leaf();
    c.gamma = p.gamma.clone_leaf();
    c.beta = p.beta.clone_leaf();
    c.norm = p.norm;
    return c;
}

void push_ffc(std::vector<NamedTensor>& out, const std::string& name, FfcParams& p) {
    out.push_back({name + ".kernel", &p.kernel});
    out.push_back({name + ".bias", &p.bias});
    out.push_back({name + ".gamma", &p.gamma});
    out.push_back({name + ".beta", &p.beta});
}

// Channel-wise MLP applied independently at every timestep.
Tensor pointwise(const Tensor& x, const Tensor& w, const Tensor& b) { return conv1d(x, w, b, 0); }

}  // namespace

std::vector<NamedTensor> EncoderParams::named_parameters() {
    std::vector<NamedTensor> out;
    out.push_back({"stem.proj.weight", &stem_w});
    out.push_back({"stem.proj.bias", &stem_b});
    push_ffc(out, "stem.ffc", stem_ffc);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string pre = "block" + std::to_string(i);
        for (std::size_t b = 0; b < 3; ++b) {
            auto& br = blocks[i].branches[b];
            const std::string bp = pre + ".branch" + std::to_string(b);
            out.push_back({bp + ".expand.weight", &br.expand_w});
            out.push_back({bp + ".expand.bias", &br.expand_b});
            push_ffc(out, bp + ".ffc", br.ffc);
            out.push_back({bp + ".squeeze.weight", &br.squeeze_w});
            out.push_back({bp + ".squeeze.bias", &br.squeeze_b});
        }
        out.push_back({pre + ".mlp.weight", &blocks[i].mlp_w});
        out.push_back({pre + ".mlp.bias", &blocks[i].mlp_b});
    }
    out.push_back({"cls.fc1.weight", &cls_w1});
    out.push_back({"cls.fc1.bias", &cls_b1});
    push_ffc(out, "cls.ffc", cls_ffc);
    out.push_back({"cls.fc2.weight", &cls_w2});
    out.push_back({"cls.fc2.bias", &cls_b2});
    out.push_back({"emb.weight", &emb_w});
    out.push_back({"emb.bias", &emb_b});
    return out;
}

std::vector<NamedNormState> EncoderParams::named_norm_states() {
    std::vector<NamedNormState> out;
    out.push_back({"stem.ffc", &stem_ffc.norm});
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        for (std::size_t b = 0; b < 3; ++b) {
            out.push_back({"block" + std::to_string(i) + ".branch" + std::to_string(b) + ".ffc",
                           &blocks[i].branches[b].ffc.norm});
        }
    }
    out.push_back({"cls.ffc", &cls_ffc.norm});
    return out;
}

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : const_cast<EncoderParams*>(this)->named_parameters()) n += p.tensor->numel();
    return n;
}

EncoderParams EncoderParams::clone() const {
    EncoderParams c;
    c.stem_w = stem_w.clone_leaf();
    c.stem_b = stem_b.clone_leaf();
    c.stem_ffc = clone_ffc(stem_ffc);
    for (const auto& blk : blocks) {
        PmbBlockParams nb;
        for (std::size_t b = 0; b < 3; ++b) {
            const auto& src = blk.branches[b];
            auto& dst = nb.branches[b];
            dst.expand_w = src.expand_w.clone_leaf();
            dst.expand_b = src.expand_b.clone_leaf();
            dst.ffc = clone_ffc(src.ffc);
            dst.squeeze_w = src.squeeze_w.clone_leaf();
            dst.squeeze_b = src.squeeze_b.clone_leaf();
        }
        nb.mlp_w = blk.mlp_w.clone_leaf();
        nb.mlp_b = blk.mlp_b.clone_leaf();
        c.blocks.push_back(std::move(nb));
    }
    c.cls_w1 = cls_w1.clone_leaf();
    c.cls_b1 = cls_b1.clone_leaf();
    c.cls_ffc = clone_ffc(cls_ffc);
    c.cls_w2 = cls_w2.clone_leaf();
    c.cls_b2 = cls_b2.clone_leaf();
    c.emb_w = emb_w.clone_leaf();
    c.emb_b = emb_b.clone_leaf();
    return c;
}

EncoderParams init_encoder(const EncoderConfig& cfg, const Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.width;
    const std::size_t q = d / 4;
    EncoderParams p;
    p.stem_w = uniform_init(rng, "stem.proj.weight", {d, cfg.in_channels, 1}, cfg.in_channels);
    p.stem_b = uniform_init(rng, "stem.proj.bias", {d}, cfg.in_channels);
    p.stem_ffc = init_ffc(rng, "stem.ffc", d, cfg.stem_kernel);
    for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
        const std::string pre = "block" + std::to_string(i);
        PmbBlockParams blk;
        for (std::size_t b = 0; b < 3; ++b) {
            const std::string bp = pre + ".branch" + std::to_string(b);
            auto& br = blk.branches[b];
            br.expand_w = uniform_init(rng, bp + ".expand.weight", {2 * d, d, 1}, d);
            br.expand_b = uniform_init(rng, bp + ".expand.bias", {2 * d}, d);
            br.ffc = init_ffc(rng, bp + ".ffc", 2 * d, cfg.branch_kernels[b]);
            br.squeeze_w = uniform_init(rng, bp + ".squeeze.weight", {q, 2 * d, 1}, 2 * d);
            br.squeeze_b = uniform_init(rng, bp + ".squeeze.bias", {q}, 2 * d);
        }
        blk.mlp_w = uniform_init(rng, pre + ".mlp.weight", {q, d, 1}, d);
        blk.mlp_b = uniform_init(rng, pre + ".mlp.bias", {q}, d);
        p.blocks.push_back(std::move(blk));
    }
    p.cls_w1 = uniform_init(rng, "cls.fc1.weight", {d, d}, d);
    p.cls_b1 = uniform_init(rng, "cls.fc1.bias", {d}, d);
    p.cls_ffc = init_ffc(rng, "cls.ffc", 1, cfg.head_kernel);
    p.cls_w2 = uniform_init(rng, "cls.fc2.weight", {d, cfg.num_classes}, d);
    p.cls_b2 = uniform_init(rng, "cls.fc2.bias", {cfg.num_classes}, d);
    p.emb_w = uniform_init(rng, "emb.weight", {d, cfg.embed_dim}, d);
    p.emb_b = uniform_init(rng, "emb.bias", {cfg.embed_dim}, d);
    return p;
}

std::size_t parameter_census(const EncoderConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.width;
    const std::size_t q = d / 4;
    std::size_t n = d * cfg.in_channels + d + ffc_param_count(d, cfg.stem_kernel);
    std::size_t block = q * d + q;
    for (std::size_t k : cfg.branch_kernels) {
        block += 2 * d * d + 2 * d + ffc_param_count(2 * d, k) + q * 2 * d + q;
    }
    n += cfg.n_blocks * block;
    n += d * d + d + ffc_param_count(1, cfg.head_kernel) + d * cfg.num_classes + cfg.num_classes;
    n += d * cfg.embed_dim + cfg.embed_dim;
    return n;
}

Tensor ffc_forward(const Tensor& x, const FfcParams& p, bool training) {
    if (x.rank() != 3 || x.dim(1) != p.channels) {
        throw_shape("ffc: expected (B," + std::to_string(p.channels) + ",T), got " + shape_str(x.shape()));
    }
    const std::size_t c = p.channels;
    const ComplexSpectrum spec = real_fft(x);
    Tensor stacked = concat_channels({spec.real, spec.imag});
    stacked = conv1d(stacked, p.kernel, p.bias, (p.kernel_size - 1) / 2);
    stacked = relu(batch_norm1d(stacked, p.gamma, p.beta, p.norm, training));
    auto parts = split_channels(stacked, {c, c});
    return inverse_real_fft({parts[0], parts[1], spec.original_length});
}

Tensor pmb_forward(const Tensor& x, const PmbBlockParams& p, bool training) {
    if (x.rank() != 3 || x.dim(1) % 4 != 0) {
        throw_usage("pmb: channel count of " + shape_str(x.shape()) + " must be divisible by 4");
    }
    std::vector<Tensor> outs;
    outs.reserve(4);
    for (const auto& br : p.branches) {
        Tensor h = gelu(pointwise(x, br.expand_w, br.expand_b));
        h = ffc_forward(h, br.ffc, training);
        outs.push_back(gelu(pointwise(h, br.squeeze_w, br.squeeze_b)));
    }
    outs.push_back(gelu(pointwise(x, p.mlp_w, p.mlp_b)));
    return gelu(concat_channels(outs));
}

Tensor classification_head(const Tensor& pooled, const EncoderParams& p, bool training) {
    const std::size_t b = pooled.dim(0);
    const std::size_t d = pooled.dim(1);
    Tensor h = gelu(affine(pooled, p.cls_w1, p.cls_b1));
    // The pooled vector is treated as a single-channel length-D sequence.
    h = reshape(ffc_forward(reshape(h, {b, 1, d}), p.cls_ffc, training), {b, d});
    return affine(h, p.cls_w2, p.cls_b2);
}

Tensor embedding_head(const Tensor& pooled, const EncoderParams& p) { return affine(pooled, p.emb_w, p.emb_b); }

EncoderOutput encoder_forward(const Tensor& x, const EncoderParams& p, const EncoderConfig& cfg, bool training) {
    if (x.rank() != 3 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.window_length) {
        throw_shape("encoder: input " + shape_str(x.shape()) + " does not match config (B," +
                    std::to_string(cfg.in_channels) + "," + std::to_string(cfg.window_length) + ")");
    }
    if (p.blocks.size() != cfg.n_blocks) throw_shape("encoder: parameter block count differs from config");

    EncoderOutput out;
    out.trace.input = x;
    Tensor h = pointwise(x, p.stem_w, p.stem_b);
    out.trace.stem_proj = h;
    h = ffc_forward(h, p.stem_ffc, training);

    Tensor prev = pmb_forward(h, p.blocks[0], training);
    for (std::size_t i = 1; i < p.blocks.size(); ++i) {
        prev = relu(add(pmb_forward(prev, p.blocks[i], training), prev));
    }
    out.pooled = global_avg_pool(prev);
    out.logits = classification_head(out.pooled, p, training);
    out.embedding = embedding_head(out.pooled, p);
    return out;
}

}  // namespace gexse
