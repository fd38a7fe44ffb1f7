#pragma once

#include <optional>

#include "seqkit/cells.hpp"

namespace seqkit {

enum class MergeMode { concat, add };
enum class Direction { bi, uni };
enum class ActiveAxes { both, vertical_only, horizontal_only };

struct BiLstm2dOptions {
    CellKind cell = CellKind::lstm;
    MergeMode merge = MergeMode::concat;
    Direction direction = Direction::bi;
    ActiveAxes active = ActiveAxes::both;
    bool use_fusion = true;
};

// Dropping an axis or a scan direction doubles the per-cell hidden width so
// the merged feature width is unchanged.
inline i64 effective_hidden(i64 d_base, const BiLstm2dOptions& o) {
    i64 d = d_base;
    if (o.direction == Direction::uni) d *= 2;
    if (o.active != ActiveAxes::both) d *= 2;
    return d;
}

inline i64 merged_width(i64 d_base, const BiLstm2dOptions& o) {
    i64 axis_width = effective_hidden(d_base, o) * (o.direction == Direction::bi ? 2 : 1);
    if (o.active != ActiveAxes::both) return axis_width;
    return o.merge == MergeMode::concat ? 2 * axis_width : axis_width;
}

// One axis scanner: forward cell plus, when bidirectional, a backward cell.
template <typename S>
struct AxisRnn {
    CellParams<S> fwd;
    std::optional<CellParams<S>> bwd;
};

// Token mixer: shared-weight scans along grid columns and rows, merged on the
// feature axis, then an optional pointwise fusion back to the channel width.
template <typename S>
struct BiLstm2dLayer {
    BiLstm2dOptions opts;
    i64 channels = 0;  // C, in and (with fusion) out
    i64 hidden = 0;    // base D before the width-compensation rule
    i64 fc_in = 0;     // merged feature width
    std::optional<AxisRnn<S>> rnn_v, rnn_h;
    Var<S> fc_w, fc_b;
};

template <typename S>
void validate_bilstm2d(const BiLstm2dLayer<S>& layer) {
    const BiLstm2dOptions& o = layer.opts;
    i64 d_eff = effective_hidden(layer.hidden, o);
    bool want_v = o.active != ActiveAxes::horizontal_only;
    bool want_h = o.active != ActiveAxes::vertical_only;
    if (want_v != layer.rnn_v.has_value() || want_h != layer.rnn_h.has_value())
        throw ConfigError("bilstm2d axis scanners do not match the active-axes option");
    auto check_axis = [&](const AxisRnn<S>& a, const char* name) {
        if ((o.direction == Direction::bi) != a.bwd.has_value())
            throw ConfigError(std::string("bilstm2d ") + name +
                              " direction does not match the options");
        if (a.fwd.input_dim() != layer.channels || a.fwd.hidden_dim() != d_eff)
            throw ConfigError(std::string("bilstm2d ") + name + " cell is " +
                              std::to_string(a.fwd.hidden_dim()) + "x" +
                              std::to_string(a.fwd.input_dim()) + ", expected " +
                              std::to_string(d_eff) + "x" + std::to_string(layer.channels));
        if (a.bwd && (a.bwd->input_dim() != layer.channels || a.bwd->hidden_dim() != d_eff))
            throw ConfigError(std::string("bilstm2d ") + name + " backward cell mismatch");
    };
    if (layer.rnn_v) check_axis(*layer.rnn_v, "rnn_v");
    if (layer.rnn_h) check_axis(*layer.rnn_h, "rnn_h");

    i64 width = merged_width(layer.hidden, o);
    if (layer.fc_in != width)
        throw ConfigError("bilstm2d fusion input width " + std::to_string(layer.fc_in) +
                          ", expected " + std::to_string(width));
    if (o.use_fusion) {
        if (!layer.fc_w || !layer.fc_b)
            throw ConfigError("bilstm2d fusion enabled but fc parameters missing");
        if (layer.fc_w->value.shape() != Shape{layer.channels, width})
            throw ConfigError("bilstm2d fc weight is " + shape_str(layer.fc_w->value.shape()) +
                              ", expected [" + std::to_string(layer.channels) + "," +
                              std::to_string(width) + "]");
    } else if (width != layer.channels) {
        throw ConfigError("bilstm2d without fusion needs merged width " +
                          std::to_string(width) + " equal to channels " +
                          std::to_string(layer.channels));
    }
}

// Linear layers start uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <typename S, typename Rng>
std::pair<Var<S>, Var<S>> make_linear_params(i64 out_dim, i64 in_dim, Rng& rng) {
    const double k = 1.0 / std::sqrt(static_cast<double>(in_dim));
    auto w = make_param(Tensor<S>::uniform({out_dim, in_dim}, rng, -k, k));
    auto b = make_param(Tensor<S>::uniform({out_dim}, rng, -k, k));
    return {w, b};
}

template <typename S, typename Rng>
BiLstm2dLayer<S> make_bilstm2d(i64 channels, i64 hidden, const BiLstm2dOptions& opts,
                               Rng& rng) {
    BiLstm2dLayer<S> layer;
    layer.opts = opts;
    layer.channels = channels;
    layer.hidden = hidden;
    i64 d_eff = effective_hidden(hidden, opts);
    auto make_axis = [&]() {
        AxisRnn<S> a;
        a.fwd = make_cell<S>(opts.cell, channels, d_eff, rng);
        if (opts.direction == Direction::bi)
            a.bwd = make_cell<S>(opts.cell, channels, d_eff, rng);
        return a;
    };
    if (opts.active != ActiveAxes::horizontal_only) layer.rnn_v = make_axis();
    if (opts.active != ActiveAxes::vertical_only) layer.rnn_h = make_axis();
    layer.fc_in = merged_width(hidden, opts);
    if (opts.use_fusion) {
        auto [w, b] = make_linear_params<S>(channels, layer.fc_in, rng);
        layer.fc_w = w;
        layer.fc_b = b;
    }
    validate_bilstm2d(layer);
    return layer;
}

template <typename S>
void collect_bilstm2d_params(const BiLstm2dLayer<S>& layer, const std::string& prefix,
                             std::vector<std::pair<std::string, Var<S>>>& out) {
    auto axis = [&](const AxisRnn<S>& a, const char* name) {
        collect_cell_params(a.fwd, prefix + name + ".fwd.", out);
        if (a.bwd) collect_cell_params(*a.bwd, prefix + name + ".bwd.", out);
    };
    if (layer.rnn_v) axis(*layer.rnn_v, "rnn_v");
    if (layer.rnn_h) axis(*layer.rnn_h, "rnn_h");
    if (layer.opts.use_fusion) {
        out.emplace_back(prefix + "fc.weight", layer.fc_w);
        out.emplace_back(prefix + "fc.bias", layer.fc_b);
    }
}

namespace detail {

template <typename S>
Var<S> axis_scan(const AxisRnn<S>& a, const Var<S>& seqs) {
    if (a.bwd)
        return concat_last(rnn_scan_batched(a.fwd, seqs, false),
                           rnn_scan_batched(*a.bwd, seqs, true));
    return rnn_scan_batched(a.fwd, seqs, false);
}

}  // namespace detail

// x [H x W x C] -> [H x W x C] (or the merged width when fusion is off).
// Columns are scanned top-to-bottom, rows left-to-right, each axis over all
// of its sequences with the same cells.
template <typename S>
Var<S> bilstm2d_forward(const BiLstm2dLayer<S>& layer, const Var<S>& x) {
    if (x->value.rank() != 3)
        throw ShapeError("bilstm2d_forward expects [H,W,C], got " +
                         shape_str(x->value.shape()));
    i64 h = x->value.extent(0), w = x->value.extent(1), c = x->value.extent(2);
    if (c != layer.channels)
        throw ShapeError("bilstm2d_forward input channels " + std::to_string(c) +
                         ", layer expects " + std::to_string(layer.channels));

    std::optional<Var<S>> v_out, h_out;
    if (layer.rnn_v) {
        // x is already time-major for columns: [T=H, N=W, C]
        v_out = detail::axis_scan(*layer.rnn_v, x);
    }
    if (layer.rnn_h) {
        auto xt = permute(x, {1, 0, 2});  // [T=W, N=H, C]
        h_out = permute(detail::axis_scan(*layer.rnn_h, xt), {1, 0, 2});
    }

    Var<S> merged;
    if (v_out && h_out)
        merged = layer.opts.merge == MergeMode::concat ? concat_last(*v_out, *h_out)
                                                       : add(*v_out, *h_out);
    else
        merged = v_out ? *v_out : *h_out;

    if (!layer.opts.use_fusion) return merged;
    auto flat = reshape(merged, Shape{h * w, layer.fc_in});
    auto fused = linear(flat, layer.fc_w, layer.fc_b);
    return reshape(fused, Shape{h, w, layer.channels});
}

// True iff d(sum of center-token channels)/dX is exactly zero away from the
// center row and center column. Uses one random input; the zero pattern is
// structural, not numeric.
template <typename S>
bool cross_support_check(const BiLstm2dLayer<S>& layer, i64 h, i64 w, i64 c,
                         unsigned seed = 0) {
    if (c != layer.channels)
        throw ShapeError("cross_support_check channels " + std::to_string(c) +
                         " do not match layer channels " + std::to_string(layer.channels));
    std::mt19937_64 rng(seed);
    Tensor<S> x = Tensor<S>::randn({h, w, c}, rng);
    Tape<S> tape;
    Var<S> vx;
    {
        TapeScope<S> scope(tape);
        vx = make_param(x);
        auto out = bilstm2d_forward(layer, vx);
        auto center = slice_outer(slice_outer(out, h / 2), w / 2);
        tape.backward(sum_all(center));
    }
    const Tensor<S>& g = *vx->grad;
    i64 hc = h / 2, wc = w / 2;
    for (i64 i = 0; i < h; ++i) {
        if (i == hc) continue;
        for (i64 j = 0; j < w; ++j) {
            if (j == wc) continue;
            for (i64 k = 0; k < c; ++k)
                if (g[(i * w + j) * c + k] != S(0)) return false;
        }
    }
    return true;
}

}  // namespace seqkit
