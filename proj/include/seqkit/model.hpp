#pragma once

#include <filesystem>
#include <fstream>
#include <map>

#include "seqkit/model_config.hpp"
#include "seqkit/serialize.hpp"

namespace seqkit {

template <typename S>
struct LinearLayer {
    Var<S> w, b;  // y = x W^T + b
};

template <typename S>
struct LayerNormParams {
    Var<S> gamma, beta;
};

template <typename S>
struct PatchEmbedLayer {
    i64 stride = 1;
    i64 in_dim = 0, out_dim = 0;
    LinearLayer<S> proj;  // (stride*stride*in_dim) -> out_dim
};

template <typename S>
struct MlpLayer {
    LinearLayer<S> fc1, fc2;  // d -> ratio*d -> d, gelu between
};

template <typename S>
struct SequencerBlock {
    BlockKind kind = BlockKind::lstm2d;
    LayerNormParams<S> norm1, norm2;
    std::optional<BiLstm2dLayer<S>> mixer2d;
    std::optional<BiCellParams<S>> mixer1d;  // plain scan over flattened tokens
    MlpLayer<S> mlp;
    double drop_path_p = 0.0;
};

template <typename S>
struct ModelStage {
    StageSpec spec;
    std::optional<PatchEmbedLayer<S>> embed;
    std::optional<LinearLayer<S>> reduce;  // pointwise linear transition
    std::vector<SequencerBlock<S>> blocks;
};

template <typename S>
struct Model {
    ModelConfig cfg;
    std::vector<ModelStage<S>> stages;
    Var<S> pos_embed;  // [pe_rows, pe_cols, stage0 dim] when enabled
    LayerNormParams<S> head_norm;
    LinearLayer<S> head;  // zero-initialized classifier
};

namespace detail {

template <typename S, typename Rng>
LayerNormParams<S> make_norm(i64 dim, Rng&) {
    return {make_param(Tensor<S>::fill({dim}, S(1))), make_param(Tensor<S>::zeros({dim}))};
}

}  // namespace detail

// Deterministic: one rng pass in declaration order, so a seed pins every value.
template <typename S>
Model<S> make_model(const ModelConfig& cfg, unsigned long long seed) {
    validate_config(cfg);
    std::mt19937_64 rng(seed);
    Model<S> m;
    m.cfg = cfg;
    i64 in_dim = cfg.in_channels;
    for (const StageSpec& spec : cfg.stages) {
        ModelStage<S> st;
        st.spec = spec;
        if (spec.downsample == DownsampleKind::patch_embed) {
            PatchEmbedLayer<S> pe;
            pe.stride = spec.stride;
            pe.in_dim = in_dim;
            pe.out_dim = spec.dim;
            auto [w, b] = make_linear_params<S>(spec.dim, spec.stride * spec.stride * in_dim, rng);
            pe.proj = {w, b};
            st.embed = pe;
        } else {
            auto [w, b] = make_linear_params<S>(spec.dim, in_dim, rng);
            st.reduce = LinearLayer<S>{w, b};
        }
        for (i64 d = 0; d < spec.depth; ++d) {
            SequencerBlock<S> blk;
            blk.kind = spec.block;
            blk.drop_path_p = cfg.drop_path;
            blk.norm1 = detail::make_norm<S>(spec.dim, rng);
            if (spec.block == BlockKind::lstm2d) {
                blk.mixer2d = make_bilstm2d<S>(spec.dim, spec.hidden, cfg.mixer, rng);
            } else {
                blk.mixer1d = make_bicell<S>(cfg.mixer.cell, spec.dim, spec.hidden, rng);
            }
            blk.norm2 = detail::make_norm<S>(spec.dim, rng);
            i64 hidden = spec.mlp_ratio * spec.dim;
            auto [w1, b1] = make_linear_params<S>(hidden, spec.dim, rng);
            auto [w2, b2] = make_linear_params<S>(spec.dim, hidden, rng);
            blk.mlp = {{w1, b1}, {w2, b2}};
            st.blocks.push_back(std::move(blk));
        }
        m.stages.push_back(std::move(st));
        in_dim = spec.dim;
    }
    if (cfg.use_positional_embedding) {
        Tensor<S> t = Tensor<S>::randn({cfg.pe_rows, cfg.pe_cols, cfg.stages[0].dim}, rng);
        t.mutable_arr() *= S(0.02);
        m.pos_embed = make_param(t);
    }
    i64 last_dim = cfg.stages.back().dim;
    m.head_norm = detail::make_norm<S>(last_dim, rng);
    m.head = {make_param(Tensor<S>::zeros({cfg.num_classes, last_dim})),
              make_param(Tensor<S>::zeros({cfg.num_classes}))};
    return m;
}

template <typename S>
std::vector<std::pair<std::string, Var<S>>> collect_model_params(const Model<S>& m) {
    std::vector<std::pair<std::string, Var<S>>> out;
    for (std::size_t s = 0; s < m.stages.size(); ++s) {
        const ModelStage<S>& st = m.stages[s];
        std::string sp = "stage" + std::to_string(s) + ".";
        const LinearLayer<S>& down = st.embed ? st.embed->proj : *st.reduce;
        out.emplace_back(sp + "downsample.weight", down.w);
        out.emplace_back(sp + "downsample.bias", down.b);
        for (std::size_t b = 0; b < st.blocks.size(); ++b) {
            const SequencerBlock<S>& blk = st.blocks[b];
            std::string bp = sp + "block" + std::to_string(b) + ".";
            out.emplace_back(bp + "norm1.gamma", blk.norm1.gamma);
            out.emplace_back(bp + "norm1.beta", blk.norm1.beta);
            if (blk.mixer2d)
                collect_bilstm2d_params(*blk.mixer2d, bp + "mixer.", out);
            else
                collect_bicell_params(*blk.mixer1d, bp + "mixer.", out);
            out.emplace_back(bp + "norm2.gamma", blk.norm2.gamma);
            out.emplace_back(bp + "norm2.beta", blk.norm2.beta);
            out.emplace_back(bp + "mlp.fc1.weight", blk.mlp.fc1.w);
            out.emplace_back(bp + "mlp.fc1.bias", blk.mlp.fc1.b);
            out.emplace_back(bp + "mlp.fc2.weight", blk.mlp.fc2.w);
            out.emplace_back(bp + "mlp.fc2.bias", blk.mlp.fc2.b);
        }
    }
    if (m.pos_embed) out.emplace_back("pos_embed", m.pos_embed);
    out.emplace_back("head.norm.gamma", m.head_norm.gamma);
    out.emplace_back("head.norm.beta", m.head_norm.beta);
    out.emplace_back("head.weight", m.head.w);
    out.emplace_back("head.bias", m.head.b);
    return out;
}

// Applies a linear layer along the last axis of any-rank input.
template <typename S>
Var<S> rowwise_linear(const Var<S>& x, const LinearLayer<S>& lin) {
    Shape s = x->value.shape();
    i64 d = s.back();
    auto y = linear(reshape(x, Shape{x->value.numel() / d, d}), lin.w, lin.b);
    s.back() = lin.w->value.extent(0);
    return reshape(y, std::move(s));
}

// img [H,W,C] -> [H/k, W/k, d]: each k x k patch is flattened row-major and
// linearly projected.
template <typename S>
Var<S> patch_embed_forward(const PatchEmbedLayer<S>& pe, const Var<S>& x) {
    if (x->value.rank() != 3)
        throw ShapeError("patch_embed_forward expects [H,W,C], got " +
                         shape_str(x->value.shape()));
    i64 h = x->value.extent(0), w = x->value.extent(1), c = x->value.extent(2);
    if (c != pe.in_dim)
        throw ShapeError("patch embedding expects " + std::to_string(pe.in_dim) +
                         " input channels, got " + std::to_string(c));
    i64 k = pe.stride;
    if (h % k != 0 || w % k != 0)
        throw ResolutionError("input " + std::to_string(h) + "x" + std::to_string(w) +
                              " is not divisible by the patch stride " + std::to_string(k));
    i64 gh = h / k, gw = w / k;
    auto t = reshape(x, Shape{gh, k, gw, k, c});
    t = permute(t, {0, 2, 1, 3, 4});
    auto flat = reshape(t, Shape{gh * gw, k * k * c});
    return reshape(linear(flat, pe.proj.w, pe.proj.b), Shape{gh, gw, pe.out_dim});
}

namespace detail {

// Residual branches take scales from a training-time plan (two entries per
// block: mixer then mlp); without a plan every branch scale is 1. A zero
// scale skips the branch entirely, which is exact for values and gradients.
template <typename S>
struct BranchScales {
    const std::vector<double>* scales = nullptr;
    std::size_t next = 0;
    double take() {
        if (!scales) return 1.0;
        if (next >= scales->size())
            throw ValueError("branch scale plan is shorter than the model's branch count");
        return (*scales)[next++];
    }
};

template <typename S>
Var<S> block_forward(const SequencerBlock<S>& blk, Var<S> x, BranchScales<S>& bs) {
    double s1 = bs.take();
    if (s1 != 0.0) {
        auto n1 = layer_norm(x, blk.norm1.gamma, blk.norm1.beta);
        Var<S> mix;
        if (blk.mixer2d) {
            mix = bilstm2d_forward(*blk.mixer2d, n1);
        } else {
            i64 h = n1->value.extent(0), w = n1->value.extent(1), d = n1->value.extent(2);
            auto seq = bilstm(*blk.mixer1d, reshape(n1, Shape{h * w, d}));
            mix = reshape(seq, Shape{h, w, d});
        }
        x = add(x, s1 == 1.0 ? mix : scale(mix, s1));
    }
    double s2 = bs.take();
    if (s2 != 0.0) {
        auto n2 = layer_norm(x, blk.norm2.gamma, blk.norm2.beta);
        auto hmid = gelu(rowwise_linear(n2, blk.mlp.fc1));
        auto out = rowwise_linear(hmid, blk.mlp.fc2);
        x = add(x, s2 == 1.0 ? out : scale(out, s2));
    }
    return x;
}

}  // namespace detail

// Runs embedding stages and blocks over one image [H,W,C]. stop_after_block
// (1-based over the whole trunk) returns that block's token grid early;
// 0 runs everything.
template <typename S>
Var<S> trunk_forward(const Model<S>& m, const Var<S>& img, i64 stop_after_block = 0,
                     const std::vector<double>* branch_scales = nullptr) {
    if (img->value.rank() != 3)
        throw ShapeError("model input must be [H,W,C], got " + shape_str(img->value.shape()));
    i64 h = img->value.extent(0), w = img->value.extent(1);
    i64 factor = downsample_factor(m.cfg);
    if (h % factor != 0 || w % factor != 0)
        throw ResolutionError("input " + std::to_string(h) + "x" + std::to_string(w) +
                              " is not divisible by the model downsampling factor " +
                              std::to_string(factor));
    if (stop_after_block < 0 || stop_after_block > total_depth(m.cfg))
        throw ValueError("block index " + std::to_string(stop_after_block) +
                         " outside depth " + std::to_string(total_depth(m.cfg)));

    detail::BranchScales<S> bs{branch_scales, 0};
    Var<S> x = img;
    i64 done = 0;
    for (std::size_t s = 0; s < m.stages.size(); ++s) {
        const ModelStage<S>& st = m.stages[s];
        x = st.embed ? patch_embed_forward(*st.embed, x) : rowwise_linear(x, *st.reduce);
        if (s == 0 && m.pos_embed) {
            i64 gh = x->value.extent(0), gw = x->value.extent(1);
            if (gh != m.cfg.pe_rows || gw != m.cfg.pe_cols)
                throw ResolutionError(
                    "learned positional table covers a " + std::to_string(m.cfg.pe_rows) + "x" +
                    std::to_string(m.cfg.pe_cols) + " token grid but the input yields " +
                    std::to_string(gh) + "x" + std::to_string(gw) +
                    "; this variant does not adapt to new resolutions");
            x = add(x, m.pos_embed);
        }
        for (const SequencerBlock<S>& blk : st.blocks) {
            x = detail::block_forward(blk, x, bs);
            if (++done == stop_after_block) return x;
        }
    }
    return x;
}

// Classifier: layer norm, spatial mean, linear. Returns logits [num_classes].
template <typename S>
Var<S> model_forward_single(const Model<S>& m, const Var<S>& img,
                            const std::vector<double>* branch_scales = nullptr) {
    auto x = trunk_forward(m, img, 0, branch_scales);
    i64 h = x->value.extent(0), w = x->value.extent(1), d = x->value.extent(2);
    auto n = layer_norm(x, m.head_norm.gamma, m.head_norm.beta);
    auto pooled = mean_rows(reshape(n, Shape{h * w, d}));
    auto logits = linear(reshape(pooled, Shape{1, d}), m.head.w, m.head.b);
    return reshape(logits, Shape{m.cfg.num_classes});
}

// batch [B,H,W,C] -> logits [B,num_classes]; samples are independent.
template <typename S>
Var<S> model_forward(const Model<S>& m, const Var<S>& batch,
                     const std::vector<double>* branch_scales = nullptr) {
    if (batch->value.rank() != 4)
        throw ShapeError("model_forward expects [B,H,W,C], got " +
                         shape_str(batch->value.shape()));
    i64 b = batch->value.extent(0);
    if (b < 1) throw ValueError("empty batch");
    std::vector<Var<S>> rows;
    rows.reserve(static_cast<std::size_t>(b));
    for (i64 i = 0; i < b; ++i)
        rows.push_back(model_forward_single(m, slice_outer(batch, i), branch_scales));
    return stack_outer(rows);
}

template <typename S>
void save_checkpoint(const Model<S>& m, const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::pair<std::string, Tensor<S>>> named;
    for (const auto& [name, v] : collect_model_params(m)) named.emplace_back(name, v->value);
    save_named_tensors(dir, named);
    std::ofstream out(fs::path(dir) / "config.json");
    if (!out) throw IoError("cannot write config.json in " + dir);
    out << config_to_json(m.cfg).dump(2) << "\n";
}

template <typename S>
Model<S> load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "config.json");
    if (!in) throw IoError("cannot read config.json in " + dir);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(dir + "/config.json: " + e.what());
    }
    Model<S> m = make_model<S>(config_from_json(j), 0);
    std::map<std::string, Tensor<S>> stored = load_named_tensors<S>(dir);
    for (auto& [name, v] : collect_model_params(m)) {
        auto it = stored.find(name);
        if (it == stored.end()) throw IoError(dir + ": checkpoint is missing tensor " + name);
        if (it->second.shape() != v->value.shape())
            throw IoError(dir + ": tensor " + name + " has shape " +
                          shape_str(it->second.shape()) + ", model expects " +
                          shape_str(v->value.shape()));
        v->value = it->second;
        stored.erase(it);
    }
    if (!stored.empty())
        throw IoError(dir + ": checkpoint holds unknown tensor " + stored.begin()->first);
    return m;
}

}  // namespace seqkit
