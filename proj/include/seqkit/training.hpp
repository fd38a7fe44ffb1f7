#pragma once

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "seqkit/dataset.hpp"
#include "seqkit/model.hpp"

namespace seqkit {

// ---------------------------------------------------------------------------
// Smoothed cross-entropy.
//
// With smoothing eps the target distribution for label y over K classes is
// q_k = (1-eps)*[k==y] + eps/K, and the per-row loss -sum_k q_k log p_k
// rearranges to
//     l = -log p_y - eps * (mean_k log p_k - log p_y).
// The inner mean is computed from differences against log p_y, so equal
// logits make the correction term exactly zero and l exactly log(K). The
// batch mean uses the same difference trick against the first row, keeping a
// batch of identical rows exact as well. Gradient per row: (p - q) / B.
// ---------------------------------------------------------------------------

template <typename S>
Var<S> cross_entropy_smoothed(const Var<S>& logits, const std::vector<i64>& labels, double eps) {
    if (logits->value.rank() != 2)
        throw ValueError("cross_entropy_smoothed: logits must be [batch, classes]");
    const i64 B = logits->value.extent(0);
    const i64 K = logits->value.extent(1);
    if (static_cast<i64>(labels.size()) != B)
        throw ValueError("cross_entropy_smoothed: got " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(B));
    if (eps < 0.0 || eps >= 1.0)
        throw ValueError("cross_entropy_smoothed: smoothing must lie in [0, 1)");
    for (i64 b = 0; b < B; ++b)
        if (labels[b] < 0 || labels[b] >= K)
            throw ValueError("cross_entropy_smoothed: label " + std::to_string(labels[b]) +
                             " out of range for " + std::to_string(K) + " classes");

    const S* x = logits->value.data();
    Tensor<S> probs = Tensor<S>::zeros({B, K});
    S* p = probs.mutable_data();
    std::vector<S> row_loss(static_cast<std::size_t>(B));
    for (i64 b = 0; b < B; ++b) {
        const S* row = x + b * K;
        S mx = row[0];
        for (i64 k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        S sum = S(0);
        for (i64 k = 0; k < K; ++k) {
            S e = std::exp(row[k] - mx);
            p[b * K + k] = e;
            sum += e;
        }
        const S logsum = std::log(sum);
        for (i64 k = 0; k < K; ++k) p[b * K + k] /= sum;
        auto logp = [&](i64 k) { return row[k] - mx - logsum; };
        const S logp_y = logp(labels[b]);
        S diff = S(0);
        for (i64 k = 0; k < K; ++k) diff += logp(k) - logp_y;
        row_loss[static_cast<std::size_t>(b)] = -logp_y - static_cast<S>(eps) * (diff / static_cast<S>(K));
    }
    S drift = S(0);
    for (i64 b = 1; b < B; ++b) drift += row_loss[static_cast<std::size_t>(b)] - row_loss[0];
    Tensor<S> out = Tensor<S>::scalar(row_loss[0] + drift / static_cast<S>(B));

    return emit<S>(std::move(out), {logits},
                   [probs = std::move(probs), labels, eps, B, K](VarNode<S>& self) {
                       if (!self.inputs[0]->requires_grad) return;
                       const S g = (*self.grad)[0];
                       const S inv_b = S(1) / static_cast<S>(B);
                       const S off = static_cast<S>(eps) / static_cast<S>(K);
                       S* d = self.inputs[0]->grad_buffer().mutable_data();
                       const S* pr = probs.data();
                       for (i64 b = 0; b < B; ++b)
                           for (i64 k = 0; k < K; ++k) {
                               S q = off + (k == labels[static_cast<std::size_t>(b)]
                                                ? S(1) - static_cast<S>(eps)
                                                : S(0));
                               d[b * K + k] += g * (pr[b * K + k] - q) * inv_b;
                           }
                   });
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay:
//   m <- b1 m + (1-b1) g        v <- b2 v + (1-b2) g^2
//   theta <- theta - lr*wd*theta - lr * mhat / (sqrt(vhat) + eps)
// A parameter without an accumulated gradient is treated as having a zero
// one; with fresh moments and zero decay its values stay bit-identical.
// ---------------------------------------------------------------------------

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

template <typename S>
struct OptState {
    std::vector<Tensor<S>> m;
    std::vector<Tensor<S>> v;
    i64 step = 0;
};

template <typename S>
OptState<S> make_opt_state(const std::vector<std::pair<std::string, Var<S>>>& params) {
    OptState<S> st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& [name, p] : params) {
        st.m.push_back(Tensor<S>::zeros(p->value.shape()));
        st.v.push_back(Tensor<S>::zeros(p->value.shape()));
    }
    return st;
}

template <typename S>
void adamw_step(const std::vector<std::pair<std::string, Var<S>>>& params, OptState<S>& st,
                const AdamWConfig& cfg, double lr) {
    if (st.m.size() != params.size() || st.v.size() != params.size())
        throw ValueError("adamw_step: optimizer state tracks a different parameter list");
    st.step += 1;
    const S b1 = static_cast<S>(cfg.beta1);
    const S b2 = static_cast<S>(cfg.beta2);
    const S bc1 = static_cast<S>(1.0 - std::pow(cfg.beta1, static_cast<double>(st.step)));
    const S bc2 = static_cast<S>(1.0 - std::pow(cfg.beta2, static_cast<double>(st.step)));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Var<S>& p = params[i].second;
        if (!st.m[i].same_shape(p->value))
            throw ValueError("adamw_step: parameter " + params[i].first +
                             " changed shape since the state was created");
        if (p->grad && !p->grad->same_shape(p->value))
            throw ValueError("adamw_step: gradient shape mismatch on " + params[i].first);
        const S* g = p->grad ? p->grad->data() : nullptr;
        S* th = p->value.mutable_data();
        S* m = st.m[i].mutable_data();
        S* v = st.v[i].mutable_data();
        const i64 n = p->value.numel();
        for (i64 j = 0; j < n; ++j) {
            const S gj = g ? g[j] : S(0);
            m[j] = b1 * m[j] + (S(1) - b1) * gj;
            v[j] = b2 * v[j] + (S(1) - b2) * gj * gj;
            const S mhat = m[j] / bc1;
            const S vhat = v[j] / bc2;
            th[j] -= static_cast<S>(lr * cfg.weight_decay) * th[j];
            th[j] -= static_cast<S>(lr) * (mhat / (std::sqrt(vhat) + static_cast<S>(cfg.eps)));
        }
    }
}

// ---------------------------------------------------------------------------
// Learning-rate schedule: linear warmup from min_lr to base_lr over
// warmup_steps, then cosine decay back to min_lr at total_steps. Both
// endpoints are returned exactly.
// ---------------------------------------------------------------------------

inline double lr_at(i64 step, i64 total_steps, i64 warmup_steps, double base_lr, double min_lr) {
    if (total_steps < 1) throw ValueError("lr_at: total_steps must be >= 1");
    if (warmup_steps < 0 || warmup_steps > total_steps)
        throw ValueError("lr_at: warmup_steps must lie in [0, total_steps]");
    if (step < 0) step = 0;
    if (step < warmup_steps)
        return min_lr +
               (base_lr - min_lr) * (static_cast<double>(step) / static_cast<double>(warmup_steps));
    if (step >= total_steps) return min_lr;
    if (step == warmup_steps) return base_lr;
    double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

// Linear scaling rule: 5e-4 at a reference batch of 512.
inline double scaled_base_lr(i64 batch_size) {
    if (batch_size < 1) throw ValueError("scaled_base_lr: batch_size must be >= 1");
    return static_cast<double>(batch_size) / 512.0 * 5e-4;
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

struct TrainConfig {
    double base_lr = 1e-3;
    double min_lr = 1e-6;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    i64 batch_size = 16;
    i64 epochs = 5;
    i64 warmup_epochs = 0;
    double label_smoothing = 0.1;
    double drop_path = 0.0;
    unsigned long long seed = 0;
};

inline void validate_train_config(const TrainConfig& cfg) {
    if (!(cfg.base_lr > 0.0)) throw ValueError("train: base_lr must be positive");
    if (cfg.min_lr < 0.0 || cfg.min_lr > cfg.base_lr)
        throw ValueError("train: min_lr must lie in [0, base_lr]");
    if (cfg.weight_decay < 0.0) throw ValueError("train: weight_decay must be >= 0");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
        throw ValueError("train: betas must lie in [0, 1)");
    if (!(cfg.adam_eps > 0.0)) throw ValueError("train: adam_eps must be positive");
    if (cfg.batch_size < 1) throw ValueError("train: batch_size must be >= 1");
    if (cfg.epochs < 1) throw ValueError("train: epochs must be >= 1");
    if (cfg.warmup_epochs < 0 || cfg.warmup_epochs > cfg.epochs)
        throw ValueError("train: warmup_epochs must lie in [0, epochs]");
    if (cfg.label_smoothing < 0.0 || cfg.label_smoothing >= 1.0)
        throw ValueError("train: label_smoothing must lie in [0, 1)");
    if (cfg.drop_path < 0.0 || cfg.drop_path >= 1.0)
        throw ValueError("train: drop_path must lie in [0, 1)");
}

struct EpochMetrics {
    i64 epoch = 0;    // 1-based
    double lr = 0.0;  // rate used at the last step of the epoch
    double train_loss = 0.0;
    double train_acc = 0.0;
    double eval_acc = 0.0;
};

// Ties resolve to the lowest index.
template <typename S>
i64 argmax_lowest(const S* row, i64 k) {
    i64 best = 0;
    for (i64 j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

template <typename S>
double evaluate(const Model<S>& model, const Dataset<S>& data) {
    if (data.size() < 1) throw ValueError("evaluate: dataset is empty");
    i64 correct = 0;
    for (i64 i = 0; i < data.size(); ++i) {
        Var<S> img = make_leaf(data.images[static_cast<std::size_t>(i)]);
        Var<S> logits = model_forward_single(model, img);
        if (argmax_lowest(logits->value.data(), logits->value.extent(0)) ==
            data.labels[static_cast<std::size_t>(i)])
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace detail {

template <typename S>
Tensor<S> stack_batch(const Dataset<S>& data, const std::vector<i64>& order, i64 begin, i64 end) {
    const Tensor<S>& first = data.images[static_cast<std::size_t>(order[begin])];
    Shape shape{end - begin};
    shape.insert(shape.end(), first.shape().begin(), first.shape().end());
    Tensor<S> batch = Tensor<S>::zeros(shape);
    S* out = batch.mutable_data();
    const i64 per = first.numel();
    for (i64 i = begin; i < end; ++i) {
        const Tensor<S>& img = data.images[static_cast<std::size_t>(order[i])];
        if (!img.same_shape(first)) throw ValueError("train: images in a batch must share one shape");
        std::copy(img.data(), img.data() + per, out + (i - begin) * per);
    }
    return batch;
}

}  // namespace detail

// Runs AdamW with warmup + cosine decay and per-branch stochastic depth: each
// step draws one keep/drop decision per residual branch, shared across the
// batch, with kept branches scaled by 1/(1-p). eval_data, when given, is
// scored after every epoch; otherwise the training set itself is scored in
// evaluation mode (all branches on).
template <typename S>
std::vector<EpochMetrics> train(Model<S>& model, const Dataset<S>& data, const TrainConfig& cfg,
                                const Dataset<S>* eval_data = nullptr) {
    validate_train_config(cfg);
    if (data.size() < 1) throw ValueError("train: dataset is empty");
    if (data.images.size() != data.labels.size())
        throw ValueError("train: dataset images and labels differ in length");

    auto params = collect_model_params(model);
    OptState<S> st = make_opt_state(params);
    AdamWConfig opt{cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};

    const i64 n = data.size();
    const i64 steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const i64 total_steps = steps_per_epoch * cfg.epochs;
    const i64 warmup_steps = steps_per_epoch * cfg.warmup_epochs;
    const i64 branches = 2 * total_depth(model.cfg);

    std::mt19937_64 rng(cfg.seed);
    std::vector<i64> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), i64(0));

    std::vector<EpochMetrics> history;
    i64 global_step = 0;
    for (i64 epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        i64 correct = 0;
        double lr = cfg.base_lr;
        for (i64 begin = 0; begin < n; begin += cfg.batch_size) {
            const i64 end = std::min<i64>(n, begin + cfg.batch_size);
            Tensor<S> batch = detail::stack_batch(data, order, begin, end);
            std::vector<i64> labels;
            for (i64 i = begin; i < end; ++i)
                labels.push_back(data.labels[static_cast<std::size_t>(order[i])]);

            std::vector<double> scales;
            const std::vector<double>* plan = nullptr;
            if (cfg.drop_path > 0.0) {
                std::uniform_real_distribution<double> u(0.0, 1.0);
                const double keep_scale = 1.0 / (1.0 - cfg.drop_path);
                scales.resize(static_cast<std::size_t>(branches));
                for (double& s : scales) s = u(rng) < cfg.drop_path ? 0.0 : keep_scale;
                plan = &scales;
            }

            Tape<S> tape;
            {
                TapeScope<S> scope(tape);
                Var<S> input = make_leaf(std::move(batch));
                Var<S> logits = model_forward(model, input, plan);
                Var<S> loss = cross_entropy_smoothed(logits, labels, cfg.label_smoothing);
                tape.backward(loss);
                loss_sum += static_cast<double>(loss->value[0]) * static_cast<double>(end - begin);
                const S* lg = logits->value.data();
                const i64 k = logits->value.extent(1);
                for (i64 i = 0; i < end - begin; ++i)
                    if (argmax_lowest(lg + i * k, k) == labels[static_cast<std::size_t>(i)])
                        ++correct;
            }
            lr = lr_at(global_step, total_steps, warmup_steps, cfg.base_lr, cfg.min_lr);
            adamw_step(params, st, opt, lr);
            for (auto& [name, p] : params) p->clear_grad();
            ++global_step;
        }
        EpochMetrics em;
        em.epoch = epoch + 1;
        em.lr = lr;
        em.train_loss = loss_sum / static_cast<double>(n);
        em.train_acc = static_cast<double>(correct) / static_cast<double>(n);
        em.eval_acc = evaluate(model, eval_data ? *eval_data : data);
        history.push_back(em);
    }
    return history;
}

inline void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch,lr,train_loss,train_acc,eval_acc\n";
    out.precision(17);
    for (const EpochMetrics& em : history)
        out << em.epoch << "," << em.lr << "," << em.train_loss << "," << em.train_acc << ","
            << em.eval_acc << "\n";
}

}  // namespace seqkit
