#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "seqkit/finite_diff.hpp"
#include "seqkit/ops.hpp"
#include "seqkit/tape.hpp"
#include "seqkit/tensor.hpp"

using namespace seqkit;

namespace {

Tensor<double> rand_t(Shape shape, unsigned seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    return Tensor<double>::uniform(std::move(shape), rng, lo, hi);
}

}  // namespace

TEST_CASE("tensor construction enforces shape invariants") {
    CHECK_THROWS_AS(Tensor<double>::zeros({0, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    Tensor<double> s = Tensor<double>::scalar(4.0);
    CHECK(s.rank() == 0);
    CHECK(s.numel() == 1);
    CHECK(s[0] == 4.0);
}

TEST_CASE("reshape shares storage and is a bijection on values") {
    Tensor<double> t({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> flat = t.reshaped({6});
    CHECK(flat.data() == t.data());
    Tensor<double> back = flat.reshaped({2, 3});
    for (i64 i = 0; i < 6; ++i) CHECK(back[i] == t[i]);
    CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
    CHECK_THROWS_AS(t.reshaped({6, 0}), ShapeError);
}

TEST_CASE("clone detaches storage") {
    Tensor<double> t({3}, {1, 2, 3});
    Tensor<double> c = t.clone();
    c.mutable_data()[0] = 9;
    CHECK(t[0] == 1.0);
    CHECK(c[0] == 9.0);
}

TEST_CASE("matmul matches a triple-loop reference") {
    for (unsigned seed : {1u, 2u, 3u}) {
        Tensor<double> a = rand_t({5, 7}, seed);
        Tensor<double> b = rand_t({7, 3}, seed + 100);
        auto va = make_leaf(a);
        auto vb = make_leaf(b);
        auto out = matmul(va, vb);
        Tensor<double> ref = oracle::matmul_triple_loop(a, b);
        CHECK(max_abs_diff(out->value, ref) < 1e-12);
    }
}

TEST_CASE("matmul reports both shapes on mismatch") {
    auto a = make_leaf(Tensor<double>::zeros({2, 3}));
    auto b = make_leaf(Tensor<double>::zeros({4, 5}));
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,5]") != std::string::npos);
    }
}

TEST_CASE("activation fixed points") {
    auto z = make_leaf(Tensor<double>::scalar(0.0));
    CHECK(sigmoid(z)->value[0] == 0.5);
    CHECK(tanh_act(z)->value[0] == 0.0);
    CHECK(gelu(z)->value[0] == 0.0);
}

TEST_CASE("gelu(1) agrees with quadrature of the normal cdf") {
    auto one = make_leaf(Tensor<double>::scalar(1.0));
    double got = gelu(one)->value[0];
    double want = 1.0 * oracle::normal_cdf_quadrature(1.0);
    CHECK(std::abs(got - want) < 1e-7);
}

TEST_CASE("forward ops stay finite on finite inputs") {
    Tensor<double> x = rand_t({4, 6}, 7, -5.0, 5.0);
    auto v = make_leaf(x);
    CHECK(sigmoid(v)->value.all_finite());
    CHECK(tanh_act(v)->value.all_finite());
    CHECK(gelu(v)->value.all_finite());
    for (i64 i = 0; i < 24; ++i) {
        double s = sigmoid(v)->value[i];
        CHECK(s > 0.0);
        CHECK(s < 1.0);
    }
}

TEST_CASE("layer_norm normalizes each row before the affine pair") {
    Tensor<double> x = rand_t({4, 16}, 11, -3.0, 3.0);
    auto gamma = make_leaf(Tensor<double>::fill({16}, 1.0));
    auto beta = make_leaf(Tensor<double>::zeros({16}));
    auto y = layer_norm(make_leaf(x), gamma, beta, 1e-6);
    auto m = y->value.mat(4, 16);
    for (i64 r = 0; r < 4; ++r) {
        double mean = m.row(r).mean();
        double var = (m.row(r).array() - mean).square().mean();
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("concat_last layouts and errors") {
    Tensor<double> a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> b({2, 2}, {7, 8, 9, 10});
    auto out = concat_last(make_leaf(a), make_leaf(b));
    CHECK(out->value.shape() == Shape{2, 5});
    std::vector<double> want = {1, 2, 3, 7, 8, 4, 5, 6, 9, 10};
    for (i64 i = 0; i < 10; ++i) CHECK(out->value[i] == want[static_cast<std::size_t>(i)]);
    auto c = make_leaf(Tensor<double>::zeros({3, 2}));
    CHECK_THROWS_AS(concat_last(make_leaf(a), c), ShapeError);
}

TEST_CASE("permute round-trips bit-exactly and validates axes") {
    Tensor<double> x = rand_t({2, 3, 4}, 13);
    auto v = make_leaf(x);
    std::vector<i64> axes = {2, 0, 1};
    auto p = permute(v, axes);
    CHECK(p->value.shape() == Shape{4, 2, 3});
    auto back = permute(p, inverse_axes(axes));
    CHECK(max_abs_diff(back->value, x) == 0.0);
    CHECK_THROWS_AS(permute(v, {0, 1}), ValueError);
    CHECK_THROWS_AS(permute(v, {0, 1, 1}), ValueError);
}

TEST_CASE("slice, stack and reverse are mutually inverse") {
    Tensor<double> x = rand_t({3, 2, 2}, 17);
    auto v = make_leaf(x);
    std::vector<Var<double>> parts;
    for (i64 i = 0; i < 3; ++i) parts.push_back(slice_outer(v, i));
    auto re = stack_outer(parts);
    CHECK(max_abs_diff(re->value, x) == 0.0);
    auto twice = reverse_outer(reverse_outer(v));
    CHECK(max_abs_diff(twice->value, x) == 0.0);
    CHECK_THROWS_AS(slice_outer(v, 3), ValueError);
    CHECK_THROWS_AS(slice_outer(v, -1), ValueError);
}

TEST_CASE("tape records in forward order and reuses accumulate") {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto x = make_param(Tensor<double>({3}, {1.0, -2.0, 0.5}));
    auto y = sum_all(add(hadamard(x, x), x));
    CHECK(tape.size() == 3);
    CHECK(tape.nodes().back() == y);
    tape.backward(y);
    REQUIRE(x->grad != nullptr);
    CHECK(x->grad->shape() == x->value.shape());
    for (i64 i = 0; i < 3; ++i)
        CHECK(std::abs((*x->grad)[i] - (2.0 * x->value[i] + 1.0)) < 1e-12);
}

TEST_CASE("backward rejects non-scalar outputs") {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto x = make_param(rand_t({2, 2}, 3));
    auto y = hadamard(x, x);
    CHECK_THROWS_AS(tape.backward(y), ValueError);
}

TEST_CASE("ops are not recorded without a tape or with recording off") {
    auto x = make_param(Tensor<double>::scalar(2.0));
    auto y = sigmoid(x);
    CHECK_FALSE(y->requires_grad);

    Tape<double> tape;
    tape.set_recording(false);
    TapeScope<double> scope(tape);
    auto z = sigmoid(x);
    CHECK_FALSE(z->requires_grad);
    CHECK(tape.size() == 0);
}

TEST_CASE("finite_diff_grad on simple functionals") {
    Tensor<double> x = rand_t({5}, 23);
    auto f_sum = [](const Tensor<double>& t) {
        double acc = 0;
        for (i64 i = 0; i < t.numel(); ++i) acc += t[i];
        return acc;
    };
    Tensor<double> g = finite_diff_grad<double>(f_sum, x);
    for (i64 i = 0; i < 5; ++i) CHECK(std::abs(g[i] - 1.0) < 1e-9);

    Tensor<double> p = Tensor<double>::scalar(3.0);
    auto f_sq = [](const Tensor<double>& t) { return t[0] * t[0]; };
    Tensor<double> g2 = finite_diff_grad<double>(f_sq, p);
    CHECK(std::abs(g2[0] - 6.0) < 1e-8);
}

namespace {

// Gate-shaped composite touching most primitives; scalar loss.
double composite_value(const Tensor<double>& wx, const Tensor<double>& wh,
                       const Tensor<double>& b, const Tensor<double>& x,
                       const Tensor<double>& gamma, const Tensor<double>& beta) {
    auto vwx = make_leaf(wx);
    auto vwh = make_leaf(wh);
    auto vb = make_leaf(b);
    auto vx = make_leaf(x);
    auto vg = make_leaf(gamma);
    auto vbt = make_leaf(beta);
    auto h0 = make_leaf(Tensor<double>::zeros({1, 3}));
    auto pre = add_rowvec(add(linear(vx, vwx), linear(h0, vwh)), vb);
    auto gate = hadamard(sigmoid(pre), tanh_act(pre));
    auto normed = layer_norm(gate, vg, vbt, 1e-6);
    auto mixed = concat_last(normed, gelu(gate));
    return sum_all(mean_rows(mixed))->value[0];
}

}  // namespace

TEST_CASE("backward through a gate-shaped composite matches finite differences") {
    Tensor<double> wx = rand_t({3, 4}, 31);
    Tensor<double> wh = rand_t({3, 3}, 32);
    Tensor<double> b = rand_t({3}, 33);
    Tensor<double> x = rand_t({1, 4}, 34);
    Tensor<double> gamma = rand_t({3}, 35, 0.5, 1.5);
    Tensor<double> beta = rand_t({3}, 36);

    Tape<double> tape;
    std::vector<Var<double>> params;
    {
        TapeScope<double> scope(tape);
        auto vwx = make_param(wx);
        auto vwh = make_param(wh);
        auto vb = make_param(b);
        auto vx = make_param(x);
        auto vg = make_param(gamma);
        auto vbt = make_param(beta);
        params = {vwx, vwh, vb, vx, vg, vbt};
        auto h0 = make_leaf(Tensor<double>::zeros({1, 3}));
        auto pre = add_rowvec(add(linear(vx, vwx), linear(h0, vwh)), vb);
        auto gate = hadamard(sigmoid(pre), tanh_act(pre));
        auto normed = layer_norm(gate, vg, vbt, 1e-6);
        auto mixed = concat_last(normed, gelu(gate));
        tape.backward(sum_all(mean_rows(mixed)));
    }

    std::vector<Tensor<double>> values = {wx, wh, b, x, gamma, beta};
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto f = [&](const Tensor<double>& t) {
            std::vector<Tensor<double>> v = values;
            v[pi] = t;
            return composite_value(v[0], v[1], v[2], v[3], v[4], v[5]);
        };
        Tensor<double> fd = finite_diff_grad<double>(f, values[pi]);
        REQUIRE(params[pi]->grad != nullptr);
        CHECK(max_rel_err(*params[pi]->grad, fd) < 1e-4);
    }
}

TEST_CASE("backward through layout ops matches finite differences") {
    Tensor<double> x = rand_t({3, 2, 2}, 41);
    Tensor<double> w = rand_t({3, 2, 2}, 42);

    auto build = [](const Var<double>& vx, const Var<double>& vw) {
        std::vector<Var<double>> parts = {slice_outer(vx, 1), slice_outer(vx, 0),
                                          slice_outer(vx, 2)};
        auto shuffled = reverse_outer(stack_outer(parts));
        auto flat = reshape(permute(shuffled, {1, 0, 2}), Shape{3, 4});
        auto wflat = reshape(vw, Shape{3, 4});
        return sum_all(hadamard(flat, wflat));
    };

    Tape<double> tape;
    Var<double> vx, vw;
    {
        TapeScope<double> scope(tape);
        vx = make_param(x);
        vw = make_param(w);
        tape.backward(build(vx, vw));
    }
    auto f = [&](const Tensor<double>& t) {
        return build(make_leaf(t), make_leaf(w))->value[0];
    };
    Tensor<double> fd = finite_diff_grad<double>(f, x);
    CHECK(max_rel_err(*vx->grad, fd) < 1e-4);
}

TEST_CASE("parameter reused on two paths accumulates both contributions") {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto x = make_param(Tensor<double>::scalar(1.5));
    auto y = add(hadamard(x, x), scale(x, 3.0));
    tape.backward(sum_all(y));
    CHECK(std::abs((*x->grad)[0] - (2.0 * 1.5 + 3.0)) < 1e-12);
}
