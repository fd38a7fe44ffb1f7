#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "seqkit/tape.hpp"

namespace seqkit {

namespace detail {

template <typename S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

inline Shape permuted_shape(const Shape& s, const std::vector<i64>& axes) {
    Shape out(s.size());
    for (std::size_t i = 0; i < axes.size(); ++i)
        out[i] = s[static_cast<std::size_t>(axes[i])];
    return out;
}

inline void check_axes(const Shape& s, const std::vector<i64>& axes) {
    if (axes.size() != s.size())
        throw ValueError("permute axes count " + std::to_string(axes.size()) +
                         " does not match rank " + std::to_string(s.size()));
    std::vector<bool> seen(s.size(), false);
    for (i64 a : axes) {
        if (a < 0 || a >= static_cast<i64>(s.size()) || seen[static_cast<std::size_t>(a)])
            throw ValueError("invalid permute axes for shape " + shape_str(s));
        seen[static_cast<std::size_t>(a)] = true;
    }
}

}  // namespace detail

inline std::vector<i64> inverse_axes(const std::vector<i64>& axes) {
    std::vector<i64> inv(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i)
        inv[static_cast<std::size_t>(axes[i])] = static_cast<i64>(i);
    return inv;
}

// Raw (non-recorded) axis permutation.
template <typename S>
Tensor<S> permute_tensor(const Tensor<S>& x, const std::vector<i64>& axes) {
    detail::check_axes(x.shape(), axes);
    const Shape& in_shape = x.shape();
    Shape out_shape = detail::permuted_shape(in_shape, axes);
    i64 rank = x.rank();
    std::vector<i64> in_strides(static_cast<std::size_t>(rank), 1);
    for (i64 i = rank - 2; i >= 0; --i)
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    // stride in the input for each output axis
    std::vector<i64> strides(static_cast<std::size_t>(rank));
    for (i64 i = 0; i < rank; ++i) strides[i] = in_strides[static_cast<std::size_t>(axes[i])];

    Tensor<S> out = Tensor<S>::zeros(out_shape);
    S* dst = out.mutable_data();
    const S* src = x.data();
    std::vector<i64> idx(static_cast<std::size_t>(rank), 0);
    i64 n = x.numel();
    i64 src_off = 0;
    for (i64 p = 0; p < n; ++p) {
        dst[p] = src[src_off];
        for (i64 ax = rank - 1; ax >= 0; --ax) {
            idx[ax] += 1;
            src_off += strides[ax];
            if (idx[ax] < out_shape[ax]) break;
            src_off -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    return out;
}

template <typename S>
Tensor<S> relu_tensor(const Tensor<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    out.mutable_arr() = x.arr().max(S(0));
    return out;
}

// ---- elementwise ----

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
    detail::check_same_shape("add", a->value, b->value);
    Tensor<S> out = Tensor<S>::zeros(a->value.shape());
    out.mutable_arr() = a->value.arr() + b->value.arr();
    return emit<S>(std::move(out), {a, b}, [](VarNode<S>& self) {
        const Tensor<S>& g = *self.grad;
        for (auto& in : self.inputs)
            if (in->requires_grad) in->accumulate(g);
    });
}

template <typename S>
Var<S> operator+(const Var<S>& a, const Var<S>& b) {
    return add(a, b);
}

// x + v broadcast over all leading axes; v matches the last extent of x.
template <typename S>
Var<S> add_rowvec(const Var<S>& x, const Var<S>& v) {
    if (x->value.rank() < 1 || v->value.rank() != 1 ||
        x->value.extent(x->value.rank() - 1) != v->value.extent(0))
        throw ShapeError("add_rowvec: shapes " + shape_str(x->value.shape()) + " vs " +
                         shape_str(v->value.shape()));
    i64 c = v->value.extent(0);
    i64 rows = x->value.numel() / c;
    Tensor<S> out = Tensor<S>::zeros(x->value.shape());
    out.mutable_mat(rows, c) = x->value.mat(rows, c).rowwise() +
                               v->value.mat(1, c).row(0);
    return emit<S>(std::move(out), {x, v}, [rows, c](VarNode<S>& self) {
        const Tensor<S>& g = *self.grad;
        if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(g);
        if (self.inputs[1]->requires_grad)
            self.inputs[1]->grad_buffer().mutable_mat(1, c).row(0) +=
                g.mat(rows, c).colwise().sum();
    });
}

template <typename S>
Var<S> scale(const Var<S>& x, double c) {
    Tensor<S> out = Tensor<S>::zeros(x->value.shape());
    out.mutable_arr() = x->value.arr() * static_cast<S>(c);
    return emit<S>(std::move(out), {x}, [c](VarNode<S>& self) {
        if (!self.inputs[0]->requires_grad) return;
        Tensor<S> d = Tensor<S>::zeros(self.grad->shape());
        d.mutable_arr() = self.grad->arr() * static_cast<S>(c);
        self.inputs[0]->accumulate(d);
    });
}

template <typename S>
Var<S> hadamard(const Var<S>& a, const Var<S>& b) {
    detail::check_same_shape("hadamard", a->value, b->value);
    Tensor<S> out = Tensor<S>::zeros(a->value.shape());
    out.mutable_arr() = a->value.arr() * b->value.arr();
    return emit<S>(std::move(out), {a, b}, [](VarNode<S>& self) {
        const Tensor<S>& g = *self.grad;
        if (self.inputs[0]->requires_grad) {
            Tensor<S> d = Tensor<S>::zeros(g.shape());
            d.mutable_arr() = g.arr() * self.inputs[1]->value.arr();
            self.inputs[0]->accumulate(d);
        }
        if (self.inputs[1]->requires_grad) {
            Tensor<S> d = Tensor<S>::zeros(g.shape());
            d.mutable_arr() = g.arr() * self.inputs[0]->value.arr();
            self.inputs[1]->accumulate(d);
        }
    });
}

template <typename S>
Var<S> sigmoid(const Var<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x->value.shape());
    out.mutable_arr() = S(1) / (S(1) + (-x->value.arr()).exp());
    return emit<S>(std::move(out), {x}, [](VarNode<S>& self) {
        if (!self.inputs[0]->requires_grad) return;
        Tensor<S> d = Tensor<S>::zeros(self.grad->shape());
        auto s = self.value.arr();
        d.mutable_arr() = self.grad->arr() * s * (S(1) - s);
        self.inputs[0]->accumulate(d);
    });
}

template <typename S>
Var<S> tanh_act(const Var<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x->value.shape());
    out.mutable_arr() = x->value.arr().tanh();
    return emit<S>(std::move(out), {x}, [](VarNode<S>& self) {
        if (!self.inputs[0]->requires_grad) return;
        Tensor<S> d = Tensor<S>::zeros(self.grad->shape());
        auto t = self.value.arr();
        d.mutable_arr() = self.grad->arr() * (S(1) - t * t);
        self.inputs[0]->accumulate(d);
    });
}

template <typename S>
S gauss_cdf(S x) {
    const S inv_sqrt2 = static_cast<S>(0.70710678118654752440);
    return static_cast<S>(0.5) * std::erfc(-x * inv_sqrt2);
}

// Exact GELU, x * Phi(x) with the normal CDF.
template <typename S>
Var<S> gelu(const Var<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x->value.shape());
    {
        const S* in = x->value.data();
        S* o = out.mutable_data();
        for (i64 i = 0; i < out.numel(); ++i) o[i] = in[i] * gauss_cdf(in[i]);
    }
    return emit<S>(std::move(out), {x}, [](VarNode<S>& self) {
        if (!self.inputs[0]->requires_grad) return;
        const Tensor<S>& xin = self.inputs[0]->value;
        Tensor<S> d = Tensor<S>::zeros(self.grad->shape());
        const S inv_sqrt_2pi = static_cast<S>(0.3989422804014326779);
        const S* xv = xin.data();
        const S* gv = self.grad->data();
        S* dv = d.mutable_data();
        for (i64 i = 0; i < d.numel(); ++i) {
            S pdf = inv_sqrt_2pi * std::exp(static_cast<S>(-0.5) * xv[i] * xv[i]);
            dv[i] = gv[i] * (gauss_cdf(xv[i]) + xv[i] * pdf);
        }
        self.inputs[0]->accumulate(d);
    });
}

// ---- matrix products ----

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 ||
        a->value.extent(1) != b->value.extent(0))
        throw ShapeError("matmul: inner dimensions differ: " + shape_str(a->value.shape()) +
                         " x " + shape_str(b->value.shape()));
    i64 m = a->value.extent(0), k = a->value.extent(1), n = b->value.extent(1);
    Tensor<S> out = Tensor<S>::zeros({m, n});
    out.mutable_mat(m, n).noalias() = a->value.mat(m, k) * b->value.mat(k, n);
    return emit<S>(std::move(out), {a, b}, [m, k, n](VarNode<S>& self) {
        const Tensor<S>& g = *self.grad;
        const Tensor<S>& av = self.inputs[0]->value;
        const Tensor<S>& bv = self.inputs[1]->value;
        if (self.inputs[0]->requires_grad)
            self.inputs[0]->grad_buffer().mutable_mat(m, k).noalias() +=
                g.mat(m, n) * bv.mat(k, n).transpose();
        if (self.inputs[1]->requires_grad)
            self.inputs[1]->grad_buffer().mutable_mat(k, n).noalias() +=
                av.mat(m, k).transpose() * g.mat(m, n);
    });
}

// x [N x K] with weight [M x K]: out = x * W^T, optionally + b.
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w) {
    if (x->value.rank() != 2 || w->value.rank() != 2 ||
        x->value.extent(1) != w->value.extent(1))
        throw ShapeError("linear: input " + shape_str(x->value.shape()) +
                         " incompatible with weight " + shape_str(w->value.shape()));
    i64 n = x->value.extent(0), k = x->value.extent(1), m = w->value.extent(0);
    Tensor<S> out = Tensor<S>::zeros({n, m});
    out.mutable_mat(n, m).noalias() = x->value.mat(n, k) * w->value.mat(m, k).transpose();
    return emit<S>(std::move(out), {x, w}, [n, k, m](VarNode<S>& self) {
        const Tensor<S>& g = *self.grad;
        if (self.inputs[0]->requires_grad)
            self.inputs[0]->grad_buffer().mutable_mat(n, k).noalias() +=
                g.mat(n, m) * self.inputs[1]->value.mat(m, k);
        if (self.inputs[1]->requires_grad)
            self.inputs[1]->grad_buffer().mutable_mat(m, k).noalias() +=
                g.mat(n, m).transpose() * self.inputs[0]->value.mat(n, k);
    });
}

template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
    return add_rowvec(linear(x, w), b);
}

// ---- normalization ----

// Normalizes the last axis, then applies the affine pair (gamma, beta).
template <typename S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                  double eps = 1e-6) {
    i64 rank = x->value.rank();
    if (rank < 1) throw ShapeError("layer_norm needs rank >= 1");
    i64 c = x->value.extent(rank - 1);
    if (gamma->value.shape() != Shape{c} || beta->value.shape() != Shape{c})
        throw ShapeError("layer_norm affine shape " + shape_str(gamma->value.shape()) +
                         " does not match channel count " + std::to_string(c));
    i64 rows = x->value.numel() / c;

    Tensor<S> xhat = Tensor<S>::zeros({rows, c});
    Tensor<S> istd = Tensor<S>::zeros({rows});
    Tensor<S> out = Tensor<S>::zeros(x->value.shape());
    {
        auto xm = x->value.mat(rows, c);
        auto xh = xhat.mutable_mat(rows, c);
        S* istd_p = istd.mutable_data();
        auto om = out.mutable_mat(rows, c);
        auto gm = gamma->value.mat(1, c).row(0);
        auto bm = beta->value.mat(1, c).row(0);
        for (i64 r = 0; r < rows; ++r) {
            S mu = xm.row(r).mean();
            S var = (xm.row(r).array() - mu).square().mean();
            S is = S(1) / std::sqrt(var + static_cast<S>(eps));
            istd_p[r] = is;
            xh.row(r) = (xm.row(r).array() - mu) * is;
            om.row(r) = (xh.row(r).array() * gm.array() + bm.array());
        }
    }
    return emit<S>(std::move(out), {x, gamma, beta},
                   [rows, c, xhat, istd](VarNode<S>& self) {
        auto g = self.grad->mat(rows, c);
        auto xh = xhat.mat(rows, c);
        auto gm = self.inputs[1]->value.mat(1, c).row(0);
        if (self.inputs[0]->requires_grad) {
            auto dx = self.inputs[0]->grad_buffer().mutable_mat(rows, c);
            const S* istd_p = istd.data();
            for (i64 r = 0; r < rows; ++r) {
                Eigen::Array<S, Eigen::Dynamic, 1> dxh =
                    g.row(r).array().transpose() * gm.array().transpose();
                S m1 = dxh.mean();
                S m2 = (dxh * xh.row(r).array().transpose()).mean();
                dx.row(r).array() +=
                    istd_p[r] * (dxh - m1 - xh.row(r).array().transpose() * m2).transpose();
            }
        }
        if (self.inputs[1]->requires_grad)
            self.inputs[1]->grad_buffer().mutable_mat(1, c).row(0) +=
                (g.array() * xh.array()).colwise().sum().matrix();
        if (self.inputs[2]->requires_grad)
            self.inputs[2]->grad_buffer().mutable_mat(1, c).row(0) += g.colwise().sum();
    });
}

// ---- layout ----

template <typename S>
Var<S> concat_last(const Var<S>& a, const Var<S>& b) {
    const Shape& sa = a->value.shape();
    const Shape& sb = b->value.shape();
    if (sa.size() != sb.size() || sa.empty())
        throw ShapeError("concat_last: ranks differ: " + shape_str(sa) + " vs " + shape_str(sb));
    for (std::size_t i = 0; i + 1 < sa.size(); ++i)
        if (sa[i] != sb[i])
            throw ShapeError("concat_last: leading extents differ: " + shape_str(sa) +
                             " vs " + shape_str(sb));
    i64 ca = sa.back(), cb = sb.back();
    i64 rows = a->value.numel() / ca;
    Shape out_shape = sa;
    out_shape.back() = ca + cb;
    Tensor<S> out = Tensor<S>::zeros(out_shape);
    {
        auto om = out.mutable_mat(rows, ca + cb);
        om.leftCols(ca) = a->value.mat(rows, ca);
        om.rightCols(cb) = b->value.mat(rows, cb);
    }
    return emit<S>(std::move(out), {a, b}, [rows, ca, cb](VarNode<S>& self) {
        auto g = self.grad->mat(rows, ca + cb);
        if (self.inputs[0]->requires_grad)
            self.inputs[0]->grad_buffer().mutable_mat(rows, ca) += g.leftCols(ca);
        if (self.inputs[1]->requires_grad)
            self.inputs[1]->grad_buffer().mutable_mat(rows, cb) += g.rightCols(cb);
    });
}

template <typename S>
Var<S> permute(const Var<S>& x, std::vector<i64> axes) {
    Tensor<S> out = permute_tensor(x->value, axes);
    return emit<S>(std::move(out), {x}, [axes](VarNode<S>& self) {
        if (!self.inputs[0]->requires_grad) return;
        self.inputs[0]->accumulate(permute_tensor(*self.grad, inverse_axes(axes)));
    });
}

template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape) {
    Tensor<S> out = x->value.reshaped(shape);
    Shape in_shape = x->value.shape();
    return emit<S>(std::move(out), {x}, [in_shape](VarNode<S>& self) {
        if (!self.inputs[0]->requires_grad) return;
        self.inputs[0]->accumulate(self.grad->reshaped(in_shape));
    });
}

// x[i, ...] along axis 0.
template <typename S>
Var<S> slice_outer(const Var<S>& x, i64 i) {
    if (x->value.rank() < 1) throw ShapeError("slice_outer needs rank >= 1");
    i64 e0 = x->value.extent(0);
    if (i < 0 || i >= e0)
        throw ValueError("slice_outer index " + std::to_string(i) + " out of range [0," +
                         std::to_string(e0) + ")");
    Shape out_shape(x->value.shape().begin() + 1, x->value.shape().end());
    i64 block = x->value.numel() / e0;
    Tensor<S> out = Tensor<S>::zeros(out_shape);
    std::memcpy(out.mutable_data(), x->value.data() + i * block,
                static_cast<std::size_t>(block) * sizeof(S));
    return emit<S>(std::move(out), {x}, [i, block](VarNode<S>& self) {
        if (!self.inputs[0]->requires_grad) return;
        Tensor<S>& gb = self.inputs[0]->grad_buffer();
        typename Tensor<S>::MutArrMap dst(gb.mutable_data() + i * block, block);
        dst += self.grad->arr();
    });
}

// Stacks equally shaped parts along a new leading axis.
template <typename S>
Var<S> stack_outer(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw ValueError("stack_outer of zero parts");
    const Shape& part_shape = parts[0]->value.shape();
    for (const auto& p : parts)
        detail::check_same_shape("stack_outer", parts[0]->value, p->value);
    i64 block = parts[0]->value.numel();
    Shape out_shape;
    out_shape.push_back(static_cast<i64>(parts.size()));
    out_shape.insert(out_shape.end(), part_shape.begin(), part_shape.end());
    Tensor<S> out = Tensor<S>::zeros(out_shape);
    S* dst = out.mutable_data();
    for (std::size_t p = 0; p < parts.size(); ++p)
        std::memcpy(dst + static_cast<i64>(p) * block, parts[p]->value.data(),
                    static_cast<std::size_t>(block) * sizeof(S));
    return emit<S>(std::move(out), parts, [block](VarNode<S>& self) {
        const S* g = self.grad->data();
        for (std::size_t p = 0; p < self.inputs.size(); ++p) {
            if (!self.inputs[p]->requires_grad) continue;
            Tensor<S>& gb = self.inputs[p]->grad_buffer();
            typename Tensor<S>::MutArrMap dst_map(gb.mutable_data(), block);
            typename Tensor<S>::ArrMap src_map(g + static_cast<i64>(p) * block, block);
            dst_map += src_map;
        }
    });
}

// Reverses the order of axis-0 blocks.
template <typename S>
Var<S> reverse_outer(const Var<S>& x) {
    if (x->value.rank() < 1) throw ShapeError("reverse_outer needs rank >= 1");
    i64 e0 = x->value.extent(0);
    i64 block = x->value.numel() / e0;
    Tensor<S> out = Tensor<S>::zeros(x->value.shape());
    S* dst = out.mutable_data();
    const S* src = x->value.data();
    for (i64 t = 0; t < e0; ++t)
        std::memcpy(dst + t * block, src + (e0 - 1 - t) * block,
                    static_cast<std::size_t>(block) * sizeof(S));
    return emit<S>(std::move(out), {x}, [e0, block](VarNode<S>& self) {
        if (!self.inputs[0]->requires_grad) return;
        Tensor<S>& gb = self.inputs[0]->grad_buffer();
        const S* g = self.grad->data();
        for (i64 t = 0; t < e0; ++t) {
            typename Tensor<S>::MutArrMap dst_map(gb.mutable_data() + t * block, block);
            typename Tensor<S>::ArrMap src_map(g + (e0 - 1 - t) * block, block);
            dst_map += src_map;
        }
    });
}

// ---- reductions ----

template <typename S>
Var<S> sum_all(const Var<S>& x) {
    Tensor<S> out = Tensor<S>::scalar(x->value.arr().sum());
    Shape in_shape = x->value.shape();
    return emit<S>(std::move(out), {x}, [in_shape](VarNode<S>& self) {
        if (!self.inputs[0]->requires_grad) return;
        self.inputs[0]->accumulate(Tensor<S>::fill(in_shape, (*self.grad)[0]));
    });
}

// Column means of an [N x C] matrix.
template <typename S>
Var<S> mean_rows(const Var<S>& x) {
    if (x->value.rank() != 2) throw ShapeError("mean_rows needs rank 2, got " +
                                               shape_str(x->value.shape()));
    i64 n = x->value.extent(0), c = x->value.extent(1);
    Tensor<S> out = Tensor<S>::zeros({c});
    out.mutable_mat(1, c).row(0) = x->value.mat(n, c).colwise().mean();
    return emit<S>(std::move(out), {x}, [n, c](VarNode<S>& self) {
        if (!self.inputs[0]->requires_grad) return;
        auto dx = self.inputs[0]->grad_buffer().mutable_mat(n, c);
        auto g = self.grad->mat(1, c).row(0);
        dx.rowwise() += (g / static_cast<S>(n));
    });
}

}  // namespace seqkit
