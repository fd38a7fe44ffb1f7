#pragma once

#include "seqkit/model.hpp"
#include "seqkit/pgm.hpp"

namespace seqkit {

struct CostReport {
    long long total = 0;
    std::vector<std::pair<std::string, long long>> breakdown;  // entries sum to total
};

namespace detail {

inline std::string cost_group(const std::string& param_name) {
    auto dot = param_name.find('.');
    std::string head = dot == std::string::npos ? param_name : param_name.substr(0, dot);
    return head.rfind("head", 0) == 0 ? "head" : head;
}

}  // namespace detail

// Exact trainable-scalar count, grouped by stage.
template <typename S>
CostReport count_params(const Model<S>& m) {
    CostReport r;
    for (const auto& [name, v] : collect_model_params(m)) {
        std::string group = detail::cost_group(name);
        long long n = v->value.numel();
        if (r.breakdown.empty() || r.breakdown.back().first != group)
            r.breakdown.emplace_back(group, 0);
        r.breakdown.back().second += n;
        r.total += n;
    }
    return r;
}

// Operation-count conventions, with one multiply-accumulate counted as one
// FLOP: matmuls contribute in*out MACs per row plus out bias adds, gate
// activations one op per scalar, recurrent elementwise updates one op per
// scalar, MLP activations uncounted. Normalizations, residual adds, and
// pooling are left out; they are negligible against the matmul terms.
inline long long cell_step_flops(CellKind kind, i64 c, i64 d) {
    long long cd = static_cast<long long>(c) * d, dd = static_cast<long long>(d) * d;
    switch (kind) {
        case CellKind::lstm: return 4 * cd + 4 * dd + 13 * d;
        case CellKind::gru: return 3 * cd + 3 * dd + 11 * d;
        default: return cd + dd + 2 * d;
    }
}

inline long long mlp_token_flops(i64 d, i64 ratio) {
    return 2 * ratio * static_cast<long long>(d) * d + (ratio + 1) * d;
}

inline long long bilstm2d_token_flops(i64 dim, i64 hidden, const BiLstm2dOptions& o) {
    i64 d_eff = effective_hidden(hidden, o);
    long long axes = o.active == ActiveAxes::both ? 2 : 1;
    long long dirs = o.direction == Direction::bi ? 2 : 1;
    long long total = axes * dirs * cell_step_flops(o.cell, dim, d_eff);
    i64 width = merged_width(hidden, o);
    if (axes == 2 && o.merge == MergeMode::add) total += width;
    if (o.use_fusion) total += static_cast<long long>(width) * dim + dim;
    return total;
}

inline long long vanilla_token_flops(i64 dim, i64 hidden, CellKind cell) {
    return 2 * cell_step_flops(cell, dim, hidden);
}

template <typename S>
CostReport count_flops(const Model<S>& m, i64 h, i64 w) {
    const ModelConfig& cfg = m.cfg;
    i64 factor = downsample_factor(cfg);
    if (h < factor || w < factor || h % factor != 0 || w % factor != 0)
        throw ResolutionError("input " + std::to_string(h) + "x" + std::to_string(w) +
                              " is not divisible by the model downsampling factor " +
                              std::to_string(factor));
    if (cfg.use_positional_embedding &&
        (h / cfg.stages[0].stride != cfg.pe_rows || w / cfg.stages[0].stride != cfg.pe_cols))
        throw ResolutionError("learned positional table covers a " +
                              std::to_string(cfg.pe_rows) + "x" + std::to_string(cfg.pe_cols) +
                              " token grid; this variant does not adapt to new resolutions");

    CostReport r;
    i64 gh = h, gw = w, in_dim = cfg.in_channels;
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const StageSpec& s = cfg.stages[i];
        long long down;
        if (s.downsample == DownsampleKind::patch_embed) {
            gh /= s.stride;
            gw /= s.stride;
            long long patch = static_cast<long long>(s.stride) * s.stride * in_dim;
            down = static_cast<long long>(gh) * gw * (patch * s.dim + s.dim);
        } else {
            down = static_cast<long long>(gh) * gw *
                   (static_cast<long long>(in_dim) * s.dim + s.dim);
        }
        long long n = static_cast<long long>(gh) * gw;
        long long mixer = s.block == BlockKind::lstm2d
                              ? bilstm2d_token_flops(s.dim, s.hidden, cfg.mixer)
                              : vanilla_token_flops(s.dim, s.hidden, cfg.mixer.cell);
        long long blocks = s.depth * n * (mixer + mlp_token_flops(s.dim, s.mlp_ratio));
        r.breakdown.emplace_back("stage" + std::to_string(i), down + blocks);
        r.total += down + blocks;
        in_dim = s.dim;
    }
    long long head = static_cast<long long>(in_dim) * cfg.num_classes + cfg.num_classes;
    r.breakdown.emplace_back("head", head);
    r.total += head;
    return r;
}

struct ErfMap {
    Tensor<double> scores;  // [h,w] rescaled to [0,1]
    std::string model_name;
    i64 block = 0;
    i64 height = 0, width = 0, images = 0;
    double raw_max = 0.0;  // pre-rescale peak, for cross-map shared scaling
};

// Effective receptive field of the chosen block (1-based over the trunk):
// back-propagates the center token's channel sum to the input pixels per
// image, keeps positive contributions, sums them over images and channels,
// compresses with log10(x+1), and rescales. With shared_max > 0 the map is
// divided by that value instead of its own peak, so several maps share one
// scale.
template <typename S>
ErfMap erf_compute(const Model<S>& m, const Tensor<S>& images, i64 block,
                   double shared_max = 0.0) {
    if (images.rank() != 4)
        throw ShapeError("erf_compute expects images [N,H,W,C], got " +
                         shape_str(images.shape()));
    i64 n = images.extent(0), h = images.extent(1), w = images.extent(2), c = images.extent(3);
    i64 depth = total_depth(m.cfg);
    if (block < 1 || block > depth)
        throw ValueError("block index " + std::to_string(block) + " outside depth " +
                         std::to_string(depth));
    if (!images.all_finite()) throw ValueError("erf_compute needs finite images");

    Tensor<double> acc = Tensor<double>::zeros({h, w});
    double* a = acc.mutable_data();
    for (i64 i = 0; i < n; ++i) {
        Tensor<S> img = Tensor<S>::zeros({h, w, c});
        std::copy(images.data() + i * h * w * c, images.data() + (i + 1) * h * w * c,
                  img.mutable_data());
        Tape<S> tape;
        Var<S> vimg;
        {
            TapeScope<S> scope(tape);
            vimg = make_param(img);
            auto out = trunk_forward(m, vimg, block);
            auto center = slice_outer(slice_outer(out, out->value.extent(0) / 2),
                                      out->value.extent(1) / 2);
            tape.backward(sum_all(center));
        }
        const Tensor<S>& g = *vimg->grad;
        for (i64 p = 0; p < h * w; ++p)
            for (i64 k = 0; k < c; ++k) {
                double v = static_cast<double>(g[p * c + k]);
                if (v > 0) a[p] += v;
            }
    }

    ErfMap map;
    map.model_name = m.cfg.name;
    map.block = block;
    map.height = h;
    map.width = w;
    map.images = n;
    map.scores = Tensor<double>::zeros({h, w});
    double* s = map.scores.mutable_data();
    double mn = std::numeric_limits<double>::infinity(), mx = 0.0;
    for (i64 p = 0; p < h * w; ++p) {
        s[p] = std::log10(a[p] + 1.0);
        mn = std::min(mn, s[p]);
        mx = std::max(mx, s[p]);
    }
    map.raw_max = mx;
    double lo = shared_max > 0.0 ? 0.0 : mn;
    double span = shared_max > 0.0 ? shared_max : mx - mn;
    for (i64 p = 0; p < h * w; ++p) s[p] = span > 0.0 ? (s[p] - lo) / span : 0.0;
    return map;
}

inline void erf_render(const ErfMap& map, const std::string& path) {
    std::vector<double> values(map.scores.data(), map.scores.data() + map.scores.numel());
    write_pgm(path, values, static_cast<int>(map.width), static_cast<int>(map.height));
}

}  // namespace seqkit
