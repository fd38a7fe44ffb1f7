#pragma once

#include <functional>

#include "seqkit/tensor.hpp"

namespace seqkit {

// Central-difference gradient of a scalar-valued function. Used as the
// independent reference for every analytic gradient in the library.
template <typename S>
Tensor<S> finite_diff_grad(const std::function<S(const Tensor<S>&)>& f,
                           const Tensor<S>& x, double eps = 1e-5) {
    Tensor<S> grad = Tensor<S>::zeros(x.shape());
    Tensor<S> probe = x.clone();
    S* p = probe.mutable_data();
    S* g = grad.mutable_data();
    const S h = static_cast<S>(eps);
    for (i64 i = 0; i < probe.numel(); ++i) {
        const S saved = p[i];
        p[i] = saved + h;
        const S fp = f(probe);
        p[i] = saved - h;
        const S fm = f(probe);
        p[i] = saved;
        g[i] = (fp - fm) / (S(2) * h);
    }
    return grad;
}

// Largest elementwise relative error, with a floor so near-zero entries
// compare absolutely.
template <typename S>
double max_rel_err(const Tensor<S>& a, const Tensor<S>& b, double floor = 1e-6) {
    if (!a.same_shape(b))
        throw ShapeError("max_rel_err over shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    double worst = 0;
    for (i64 i = 0; i < a.numel(); ++i) {
        double av = a[i], bv = b[i];
        double denom = std::max({std::abs(av), std::abs(bv), floor});
        worst = std::max(worst, std::abs(av - bv) / denom);
    }
    return worst;
}

}  // namespace seqkit
