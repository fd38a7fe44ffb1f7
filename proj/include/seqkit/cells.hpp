#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "seqkit/ops.hpp"

namespace seqkit {

enum class CellKind { lstm, gru, rnn };

inline const char* cell_kind_name(CellKind k) {
    switch (k) {
        case CellKind::lstm: return "lstm";
        case CellKind::gru: return "gru";
        default: return "rnn";
    }
}

// Gate weights follow the [hidden x input] / [hidden x hidden] convention.
// Each gate carries an input-side and a hidden-side bias; the cell math only
// ever sees their sum.
template <typename S>
struct LstmCellParams {
    Var<S> w_xi, w_xf, w_xc, w_xo;
    Var<S> w_hi, w_hf, w_hc, w_ho;
    Var<S> b_ih_i, b_ih_f, b_ih_c, b_ih_o;
    Var<S> b_hh_i, b_hh_f, b_hh_c, b_hh_o;
};

template <typename S>
struct GruCellParams {
    Var<S> w_xr, w_xz, w_xn;
    Var<S> w_hr, w_hz, w_hn;
    Var<S> b_ih_r, b_ih_z, b_ih_n;
    Var<S> b_hh_r, b_hh_z, b_hh_n;
};

template <typename S>
struct RnnCellParams {
    Var<S> w_x, w_h;
    Var<S> b_ih, b_hh;
};

template <typename S>
struct CellParams {
    std::variant<LstmCellParams<S>, GruCellParams<S>, RnnCellParams<S>> p;

    CellKind kind() const {
        if (std::holds_alternative<LstmCellParams<S>>(p)) return CellKind::lstm;
        if (std::holds_alternative<GruCellParams<S>>(p)) return CellKind::gru;
        return CellKind::rnn;
    }
    const LstmCellParams<S>& lstm() const { return std::get<LstmCellParams<S>>(p); }
    const GruCellParams<S>& gru() const { return std::get<GruCellParams<S>>(p); }
    const RnnCellParams<S>& rnn() const { return std::get<RnnCellParams<S>>(p); }

    i64 input_dim() const {
        switch (kind()) {
            case CellKind::lstm: return lstm().w_xi->value.extent(1);
            case CellKind::gru: return gru().w_xr->value.extent(1);
            default: return rnn().w_x->value.extent(1);
        }
    }
    i64 hidden_dim() const {
        switch (kind()) {
            case CellKind::lstm: return lstm().w_xi->value.extent(0);
            case CellKind::gru: return gru().w_xr->value.extent(0);
            default: return rnn().w_x->value.extent(0);
        }
    }
};

// All recurrent weights and biases start uniform in [-1/sqrt(D), 1/sqrt(D)].
template <typename S, typename Rng>
CellParams<S> make_cell(CellKind kind, i64 input_dim, i64 hidden_dim, Rng& rng) {
    if (input_dim < 1 || hidden_dim < 1)
        throw ConfigError("cell dims must be >= 1, got input " + std::to_string(input_dim) +
                          " hidden " + std::to_string(hidden_dim));
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    auto wx = [&] { return make_param(Tensor<S>::uniform({hidden_dim, input_dim}, rng, -k, k)); };
    auto wh = [&] { return make_param(Tensor<S>::uniform({hidden_dim, hidden_dim}, rng, -k, k)); };
    auto bias = [&] { return make_param(Tensor<S>::uniform({hidden_dim}, rng, -k, k)); };

    CellParams<S> out;
    switch (kind) {
        case CellKind::lstm: {
            LstmCellParams<S> c;
            c.w_xi = wx(); c.w_xf = wx(); c.w_xc = wx(); c.w_xo = wx();
            c.w_hi = wh(); c.w_hf = wh(); c.w_hc = wh(); c.w_ho = wh();
            c.b_ih_i = bias(); c.b_ih_f = bias(); c.b_ih_c = bias(); c.b_ih_o = bias();
            c.b_hh_i = bias(); c.b_hh_f = bias(); c.b_hh_c = bias(); c.b_hh_o = bias();
            out.p = std::move(c);
            break;
        }
        case CellKind::gru: {
            GruCellParams<S> c;
            c.w_xr = wx(); c.w_xz = wx(); c.w_xn = wx();
            c.w_hr = wh(); c.w_hz = wh(); c.w_hn = wh();
            c.b_ih_r = bias(); c.b_ih_z = bias(); c.b_ih_n = bias();
            c.b_hh_r = bias(); c.b_hh_z = bias(); c.b_hh_n = bias();
            out.p = std::move(c);
            break;
        }
        default: {
            RnnCellParams<S> c;
            c.w_x = wx(); c.w_h = wh();
            c.b_ih = bias(); c.b_hh = bias();
            out.p = std::move(c);
            break;
        }
    }
    return out;
}

template <typename S>
void collect_cell_params(const CellParams<S>& cell, const std::string& prefix,
                         std::vector<std::pair<std::string, Var<S>>>& out) {
    auto put = [&](const char* name, const Var<S>& v) { out.emplace_back(prefix + name, v); };
    switch (cell.kind()) {
        case CellKind::lstm: {
            const auto& c = cell.lstm();
            put("w_xi", c.w_xi); put("w_xf", c.w_xf); put("w_xc", c.w_xc); put("w_xo", c.w_xo);
            put("w_hi", c.w_hi); put("w_hf", c.w_hf); put("w_hc", c.w_hc); put("w_ho", c.w_ho);
            put("b_ih_i", c.b_ih_i); put("b_ih_f", c.b_ih_f);
            put("b_ih_c", c.b_ih_c); put("b_ih_o", c.b_ih_o);
            put("b_hh_i", c.b_hh_i); put("b_hh_f", c.b_hh_f);
            put("b_hh_c", c.b_hh_c); put("b_hh_o", c.b_hh_o);
            break;
        }
        case CellKind::gru: {
            const auto& c = cell.gru();
            put("w_xr", c.w_xr); put("w_xz", c.w_xz); put("w_xn", c.w_xn);
            put("w_hr", c.w_hr); put("w_hz", c.w_hz); put("w_hn", c.w_hn);
            put("b_ih_r", c.b_ih_r); put("b_ih_z", c.b_ih_z); put("b_ih_n", c.b_ih_n);
            put("b_hh_r", c.b_hh_r); put("b_hh_z", c.b_hh_z); put("b_hh_n", c.b_hh_n);
            break;
        }
        default: {
            const auto& c = cell.rnn();
            put("w_x", c.w_x); put("w_h", c.w_h);
            put("b_ih", c.b_ih); put("b_hh", c.b_hh);
            break;
        }
    }
}

namespace detail {

template <typename S>
Var<S> gate_pre(const Var<S>& x, const Var<S>& wx, const Var<S>& h, const Var<S>& wh,
                const Var<S>& bias_sum) {
    return add_rowvec(add(linear(x, wx), linear(h, wh)), bias_sum);
}

template <typename S>
struct LstmStep {
    const LstmCellParams<S>& p;
    Var<S> bi, bf, bc, bo;
    explicit LstmStep(const LstmCellParams<S>& params) : p(params) {
        bi = add(p.b_ih_i, p.b_hh_i);
        bf = add(p.b_ih_f, p.b_hh_f);
        bc = add(p.b_ih_c, p.b_hh_c);
        bo = add(p.b_ih_o, p.b_hh_o);
    }
    void operator()(const Var<S>& x, Var<S>& h, Var<S>& c) const {
        auto i = sigmoid(gate_pre(x, p.w_xi, h, p.w_hi, bi));
        auto f = sigmoid(gate_pre(x, p.w_xf, h, p.w_hf, bf));
        auto g = tanh_act(gate_pre(x, p.w_xc, h, p.w_hc, bc));
        auto o = sigmoid(gate_pre(x, p.w_xo, h, p.w_ho, bo));
        c = add(hadamard(f, c), hadamard(i, g));
        h = hadamard(o, tanh_act(c));
    }
};

template <typename S>
struct GruStep {
    const GruCellParams<S>& p;
    Var<S> br, bz, bn;
    explicit GruStep(const GruCellParams<S>& params) : p(params) {
        br = add(p.b_ih_r, p.b_hh_r);
        bz = add(p.b_ih_z, p.b_hh_z);
        bn = add(p.b_ih_n, p.b_hh_n);
    }
    void operator()(const Var<S>& x, Var<S>& h) const {
        auto r = sigmoid(gate_pre(x, p.w_xr, h, p.w_hr, br));
        auto z = sigmoid(gate_pre(x, p.w_xz, h, p.w_hz, bz));
        auto n = tanh_act(add_rowvec(
            add(linear(x, p.w_xn), linear(hadamard(r, h), p.w_hn)), bn));
        auto ones = make_leaf(Tensor<S>::fill(z->value.shape(), S(1)));
        h = add(hadamard(add(ones, scale(z, -1.0)), n), hadamard(z, h));
    }
};

template <typename S>
struct RnnStep {
    const RnnCellParams<S>& p;
    Var<S> b;
    explicit RnnStep(const RnnCellParams<S>& params) : p(params) {
        b = add(p.b_ih, p.b_hh);
    }
    void operator()(const Var<S>& x, Var<S>& h) const {
        h = tanh_act(gate_pre(x, p.w_x, h, p.w_h, b));
    }
};

template <typename S>
Var<S> as_row(const Var<S>& v, const char* op) {
    if (v->value.rank() != 1)
        throw ShapeError(std::string(op) + " expects rank-1 input, got " +
                         shape_str(v->value.shape()));
    return reshape(v, Shape{1, v->value.extent(0)});
}

}  // namespace detail

// One LSTM update on a single token; x [C], states [D].
template <typename S>
std::pair<Var<S>, Var<S>> lstm_cell(const LstmCellParams<S>& p, const Var<S>& x,
                                    const Var<S>& h, const Var<S>& c) {
    i64 d = p.w_xi->value.extent(0);
    auto hh = detail::as_row(h, "lstm_cell");
    auto cc = detail::as_row(c, "lstm_cell");
    detail::LstmStep<S> step(p);
    step(detail::as_row(x, "lstm_cell"), hh, cc);
    return {reshape(hh, Shape{d}), reshape(cc, Shape{d})};
}

template <typename S>
Var<S> gru_cell(const GruCellParams<S>& p, const Var<S>& x, const Var<S>& h) {
    i64 d = p.w_xr->value.extent(0);
    auto hh = detail::as_row(h, "gru_cell");
    detail::GruStep<S> step(p);
    step(detail::as_row(x, "gru_cell"), hh);
    return reshape(hh, Shape{d});
}

template <typename S>
Var<S> rnn_cell(const RnnCellParams<S>& p, const Var<S>& x, const Var<S>& h) {
    i64 d = p.w_x->value.extent(0);
    auto hh = detail::as_row(h, "rnn_cell");
    detail::RnnStep<S> step(p);
    step(detail::as_row(x, "rnn_cell"), hh);
    return reshape(hh, Shape{d});
}

// Scans a time-major batch of sequences, xs [T x N x C] -> [T x N x D].
// All sequences start from zero states. reverse scans the flipped sequence
// and restores the original order afterwards.
template <typename S>
Var<S> rnn_scan_batched(const CellParams<S>& cell, const Var<S>& xs, bool reverse = false) {
    if (xs->value.rank() != 3)
        throw ShapeError("rnn_scan_batched expects [T,N,C], got " +
                         shape_str(xs->value.shape()));
    i64 t_len = xs->value.extent(0);
    i64 n = xs->value.extent(1);
    i64 c = xs->value.extent(2);
    if (c != cell.input_dim())
        throw ShapeError("sequence feature width " + std::to_string(c) +
                         " does not match cell input dim " +
                         std::to_string(cell.input_dim()));
    if (t_len < 1) throw ValueError("rnn_scan over an empty sequence");

    Var<S> seq = reverse ? reverse_outer(xs) : xs;
    i64 d = cell.hidden_dim();
    Var<S> h = make_leaf(Tensor<S>::zeros({n, d}));
    std::vector<Var<S>> outs;
    outs.reserve(static_cast<std::size_t>(t_len));

    switch (cell.kind()) {
        case CellKind::lstm: {
            detail::LstmStep<S> step(cell.lstm());
            Var<S> cs = make_leaf(Tensor<S>::zeros({n, d}));
            for (i64 t = 0; t < t_len; ++t) {
                auto x_t = slice_outer(seq, t);
                step(x_t, h, cs);
                outs.push_back(h);
            }
            break;
        }
        case CellKind::gru: {
            detail::GruStep<S> step(cell.gru());
            for (i64 t = 0; t < t_len; ++t) {
                auto x_t = slice_outer(seq, t);
                step(x_t, h);
                outs.push_back(h);
            }
            break;
        }
        default: {
            detail::RnnStep<S> step(cell.rnn());
            for (i64 t = 0; t < t_len; ++t) {
                auto x_t = slice_outer(seq, t);
                step(x_t, h);
                outs.push_back(h);
            }
            break;
        }
    }
    auto stacked = stack_outer(outs);
    return reverse ? reverse_outer(stacked) : stacked;
}

// Single sequence, xs [T x C] -> [T x D].
template <typename S>
Var<S> rnn_scan(const CellParams<S>& cell, const Var<S>& xs, bool reverse = false) {
    if (xs->value.rank() != 2)
        throw ShapeError("rnn_scan expects [T,C], got " + shape_str(xs->value.shape()));
    i64 t_len = xs->value.extent(0), c = xs->value.extent(1);
    auto out = rnn_scan_batched(cell, reshape(xs, Shape{t_len, 1, c}), reverse);
    return reshape(out, Shape{t_len, cell.hidden_dim()});
}

// Independent forward and backward cells.
template <typename S>
struct BiCellParams {
    CellParams<S> fwd, bwd;
};

template <typename S, typename Rng>
BiCellParams<S> make_bicell(CellKind kind, i64 input_dim, i64 hidden_dim, Rng& rng) {
    BiCellParams<S> b;
    b.fwd = make_cell<S>(kind, input_dim, hidden_dim, rng);
    b.bwd = make_cell<S>(kind, input_dim, hidden_dim, rng);
    return b;
}

template <typename S>
void collect_bicell_params(const BiCellParams<S>& bi, const std::string& prefix,
                           std::vector<std::pair<std::string, Var<S>>>& out) {
    collect_cell_params(bi.fwd, prefix + "fwd.", out);
    collect_cell_params(bi.bwd, prefix + "bwd.", out);
}

// Forward and reverse scans concatenated on the feature axis,
// [T x N x C] -> [T x N x 2D].
template <typename S>
Var<S> bilstm_batched(const BiCellParams<S>& bi, const Var<S>& xs) {
    return concat_last(rnn_scan_batched(bi.fwd, xs, false),
                       rnn_scan_batched(bi.bwd, xs, true));
}

// [T x C] -> [T x 2D].
template <typename S>
Var<S> bilstm(const BiCellParams<S>& bi, const Var<S>& xs) {
    return concat_last(rnn_scan(bi.fwd, xs, false), rnn_scan(bi.bwd, xs, true));
}

}  // namespace seqkit
