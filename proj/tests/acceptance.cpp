// Acceptance checks for the library. Each check prints one line:
//   [PASS] <name> (<measured detail>)
//   [FAIL] <name> (<what went wrong>)
// The process exits nonzero if any check fails. Tolerances are pinned in
// each check body next to the quantities they guard.

#include <cmath>
#include <cstdio>
#include <cstring>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "naive_bilstm2d.hpp"
#include "seqkit/analysis.hpp"
#include "seqkit/dataset.hpp"
#include "seqkit/finite_diff.hpp"
#include "seqkit/training.hpp"

using namespace seqkit;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %s (%s)\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

template <typename F>
void guarded(const std::string& name, F&& body) {
    try {
        body();
    } catch (const std::exception& e) {
        report(name, false, std::string("unexpected exception: ") + e.what());
    }
}

std::string millions(long long v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << static_cast<double>(v) / 1e6 << "M";
    return s.str();
}

std::string billions(long long v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << static_cast<double>(v) / 1e9 << "G";
    return s.str();
}

std::string sci(double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << v;
    return s.str();
}

// Finite-difference comparison for every parameter of a recorded graph plus
// one designated input. `loss_value` must recompute the scalar loss from the
// current tensor values without touching the tape.
template <typename LossValue>
double fd_worst_rel_err(const std::vector<std::pair<std::string, Var<double>>>& params,
                        const Var<double>& input, LossValue loss_value) {
    auto against = [&](const Var<double>& v) {
        Tensor<double> fd = finite_diff_grad<double>(
            [&](const Tensor<double>& t) {
                Tensor<double> saved = v->value;
                v->value = t.clone();
                double l = loss_value();
                v->value = saved;
                return l;
            },
            v->value);
        Tensor<double> analytic =
            v->grad ? v->grad->clone() : Tensor<double>::zeros(v->value.shape());
        return max_rel_err(analytic, fd);
    };
    double worst = 0.0;
    for (const auto& [name, p] : params) worst = std::max(worst, against(p));
    return std::max(worst, against(input));
}

ModelConfig single_block_config() {
    ModelConfig cfg;
    cfg.name = "single";
    cfg.num_classes = 2;
    StageSpec s;
    s.downsample = DownsampleKind::patch_embed;
    s.stride = 1;
    s.dim = 4;
    s.hidden = 1;
    s.depth = 1;
    cfg.stages = {s};
    return cfg;
}

void check_parameter_totals() {
    const double tol = 0.02;  // +/- 2% of the published totals
    const char* names[3] = {"sequencer2d_s", "sequencer2d_m", "sequencer2d_l"};
    const double target[3] = {28e6, 38e6, 54e6};
    bool ok = true;
    std::ostringstream d;
    for (int i = 0; i < 3; ++i) {
        Model<float> m = make_model<float>(preset_config(names[i]), 1);
        long long got = count_params(m).total;
        ok = ok && std::abs(static_cast<double>(got) - target[i]) <= tol * target[i];
        d << names[i] << "=" << millions(got) << " vs " << millions((long long)target[i])
          << (i < 2 ? ", " : "");
    }
    ModelConfig concat_cfg = preset_config("sequencer2d_s");
    ModelConfig add_cfg = concat_cfg;
    add_cfg.mixer.merge = MergeMode::add;
    long long concat_total = count_params(make_model<float>(concat_cfg, 1)).total;
    long long add_total = count_params(make_model<float>(add_cfg, 1)).total;
    ok = ok && add_total < concat_total;
    d << "; add-merge " << millions(add_total) << " < concat " << millions(concat_total);
    report("parameter totals within 2% and add-merge below concat", ok, d.str());
}

void check_flop_totals() {
    const double tol = 0.10;  // +/- 10% of the published totals at 224x224
    const char* names[3] = {"sequencer2d_s", "sequencer2d_m", "sequencer2d_l"};
    const double target[3] = {8.4e9, 11.1e9, 16.6e9};
    bool ok = true;
    std::ostringstream d;
    for (int i = 0; i < 3; ++i) {
        Model<float> m = make_model<float>(preset_config(names[i]), 1);
        long long got = count_flops(m, 224, 224).total;
        ok = ok && std::abs(static_cast<double>(got) - target[i]) <= tol * target[i];
        d << names[i] << "=" << billions(got) << " vs " << billions((long long)target[i])
          << (i < 2 ? ", " : "");
    }
    report("flop totals at 224x224 within 10%", ok, d.str());
}

void check_gradients() {
    const double tol = 1e-4;  // max relative error, f64, central differences

    double worst_cells = 0.0;
    for (CellKind kind : {CellKind::lstm, CellKind::gru, CellKind::rnn}) {
        std::mt19937_64 rng(101 + static_cast<int>(kind));
        CellParams<double> cell = make_cell<double>(kind, 3, 2, rng);
        Tensor<double> xs = Tensor<double>::randn({5, 3}, rng);
        Tensor<double> wsum = Tensor<double>::randn({5, 2}, rng);
        std::vector<std::pair<std::string, Var<double>>> ps;
        collect_cell_params(cell, "", ps);
        Var<double> input;
        Tape<double> tape;
        {
            TapeScope<double> scope(tape);
            input = make_param(xs);
            tape.backward(sum_all(hadamard(rnn_scan(cell, input), make_leaf(wsum))));
        }
        auto loss_value = [&]() {
            auto in = make_leaf(input->value.clone());
            return sum_all(hadamard(rnn_scan(cell, in), make_leaf(wsum)))->value[0];
        };
        worst_cells = std::max(worst_cells, fd_worst_rel_err(ps, input, loss_value));
    }

    std::mt19937_64 rng(211);
    BiLstm2dLayer<double> layer = make_bilstm2d<double>(8, 2, BiLstm2dOptions{}, rng);
    Tensor<double> grid = Tensor<double>::randn({3, 3, 8}, rng);
    Tensor<double> gsum = Tensor<double>::randn({3, 3, 8}, rng);
    std::vector<std::pair<std::string, Var<double>>> lps;
    collect_bilstm2d_params(layer, "", lps);
    Var<double> ginput;
    Tape<double> ltape;
    {
        TapeScope<double> scope(ltape);
        ginput = make_param(grid);
        ltape.backward(sum_all(hadamard(bilstm2d_forward(layer, ginput), make_leaf(gsum))));
    }
    auto layer_loss = [&]() {
        auto in = make_leaf(ginput->value.clone());
        return sum_all(hadamard(bilstm2d_forward(layer, in), make_leaf(gsum)))->value[0];
    };
    double worst_layer = fd_worst_rel_err(lps, ginput, layer_loss);

    Model<double> m = make_model<double>(preset_config("mini"), 307);
    const i64 res = 2 * downsample_factor(m.cfg);
    const i64 batch = 2;
    std::mt19937_64 mrng(308);
    Tensor<double> images = Tensor<double>::randn({batch, res, res, m.cfg.in_channels}, mrng);
    std::vector<i64> labels = {1, 0};
    Var<double> minput;
    Tape<double> mtape;
    {
        TapeScope<double> scope(mtape);
        minput = make_param(images);
        mtape.backward(cross_entropy_smoothed(model_forward(m, minput), labels, 0.1));
    }
    auto model_loss = [&]() {
        auto in = make_leaf(minput->value.clone());
        return cross_entropy_smoothed(model_forward(m, in), labels, 0.1)->value[0];
    };
    double worst_model = fd_worst_rel_err(collect_model_params(m), minput, model_loss);

    bool ok = worst_cells < tol && worst_layer < tol && worst_model < tol;
    report("analytic gradients match finite differences below 1e-4", ok,
           "cells " + sci(worst_cells) + ", mixer 3x3x8 " + sci(worst_layer) +
               ", two-block model " + sci(worst_model));
}

void check_naive_equivalence() {
    const double tol = 1e-12;
    const int wanted = 50;
    const CellKind kinds[3] = {CellKind::lstm, CellKind::gru, CellKind::rnn};
    const MergeMode merges[2] = {MergeMode::concat, MergeMode::add};
    const Direction dirs[2] = {Direction::bi, Direction::uni};
    const ActiveAxes axes[3] = {ActiveAxes::both, ActiveAxes::vertical_only,
                                ActiveAxes::horizontal_only};
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    int instances = 0;
    for (int i = 0; i < 60; ++i) {
        BiLstm2dOptions o;
        o.cell = kinds[i % 3];
        o.merge = merges[(i / 3) % 2];
        o.direction = dirs[(i / 6) % 2];
        o.active = axes[(i / 12) % 3];
        o.use_fusion = (i % 5) != 0;
        i64 hidden = 1 + static_cast<i64>(rng() % 3);
        i64 h = 1 + static_cast<i64>(rng() % 4);
        i64 w = 1 + static_cast<i64>(rng() % 4);
        i64 channels = o.use_fusion ? 1 + static_cast<i64>(rng() % 4) : merged_width(hidden, o);
        BiLstm2dLayer<double> layer = make_bilstm2d<double>(channels, hidden, o, rng);
        Tensor<double> x = Tensor<double>::randn({h, w, channels}, rng);
        auto out = bilstm2d_forward(layer, make_leaf(x));
        worst = std::max(worst, max_abs_diff(out->value, oracle::naive_bilstm2d(layer, x)));
        ++instances;
    }
    report("mixer equals the naive per-axis composition within 1e-12",
           instances >= wanted && worst <= tol,
           std::to_string(instances) + " random instances, worst " + sci(worst));
}

void check_cruciform_erf() {
    bool ok = true;
    std::ostringstream d;

    Model<double> single = make_model<double>(single_block_config(), 23);
    std::mt19937_64 rng(29);
    Tensor<double> small = Tensor<double>::randn({2, 7, 7, 3}, rng);
    ErfMap map = erf_compute(single, small, 1);
    bool off_zero = true, on_positive = false;
    for (i64 y = 0; y < 7; ++y)
        for (i64 x = 0; x < 7; ++x) {
            double v = map.scores[y * 7 + x];
            if (y != 3 && x != 3)
                off_zero = off_zero && v == 0.0;
            else if (v > 0.0)
                on_positive = true;
        }
    ok = ok && off_zero && on_positive;
    d << "single block off-cross exactly zero: " << (off_zero ? "yes" : "no");

    Model<float> full = make_model<float>(preset_config("sequencer2d_s"), 3);
    std::mt19937_64 frng(5);
    Tensor<float> images = Tensor<float>::randn({2, 224, 224, 3}, frng);
    ErfMap big = erf_compute(full, images, 1);
    const i64 stride = full.cfg.stages[0].stride;
    const i64 grid = 224 / stride;
    const i64 lo = (grid / 2) * stride;          // first pixel of the center token band
    const i64 hi = lo + stride - 1;              // last pixel of the band
    bool band_off_zero = true, band_positive = false;
    for (i64 y = 0; y < 224; ++y)
        for (i64 x = 0; x < 224; ++x) {
            double v = big.scores[y * 224 + x];
            bool in_band = (y >= lo && y <= hi) || (x >= lo && x <= hi);
            if (!in_band)
                band_off_zero = band_off_zero && v == 0.0;
            else if (v > 0.0)
                band_positive = true;
        }
    ok = ok && band_off_zero && band_positive;
    d << "; sequencer2d_s block 1 support inside " << stride << "px bands ["
      << lo << "," << hi << "]: " << (band_off_zero && band_positive ? "yes" : "no");

    report("receptive field is an exact center cross", ok, d.str());
}

void check_resolution_sweep() {
    Model<float> m = make_model<float>(preset_config("sequencer2d_s"), 1);
    std::mt19937_64 rng(9);
    bool ok = true;
    i64 tried = 0;
    for (i64 r = 112; r <= 448; r += 28) {
        Tensor<float> batch = Tensor<float>::randn({1, r, r, 3}, rng);
        auto logits = model_forward(m, make_leaf(batch));
        ok = ok && logits->value.shape() == Shape{1, 1000} && logits->value.all_finite();
        ++tried;
    }
    bool rejected = false;
    std::string msg;
    try {
        model_forward(m, make_leaf(Tensor<float>::zeros({1, 225, 225, 3})));
    } catch (const ResolutionError& e) {
        rejected = true;
        msg = e.what();
    }
    ok = ok && rejected && msg.find("not divisible") != std::string::npos;
    report("one build serves resolutions 112..448 step 28; 225 names its divisor", ok,
           std::to_string(tried) + " resolutions gave finite [1,1000] logits; 225 rejected: " +
               (rejected ? "yes" : "no"));
}

void check_depth_and_widths() {
    bool ok = true;
    std::ostringstream d;

    const char* names[3] = {"sequencer2d_s", "sequencer2d_m", "sequencer2d_l"};
    const i64 depths[3] = {18, 24, 36};
    for (int i = 0; i < 3; ++i) {
        i64 got = total_depth(preset_config(names[i]));
        ok = ok && got == depths[i];
        d << names[i] << " depth " << got << (i < 2 ? ", " : "");
    }

    // Default options: bidirectional output is twice the hidden width and the
    // fusion layer reads the concat of both axes, four times the hidden width.
    std::mt19937_64 rng(33);
    const i64 hidden = 4;
    BiLstm2dLayer<double> def = make_bilstm2d<double>(6, hidden, BiLstm2dOptions{}, rng);
    Tensor<double> seq = Tensor<double>::randn({3, 6}, rng);
    i64 axis_width = oracle::axis_seq_out(*def.rnn_v, seq).extent(1);
    ok = ok && axis_width == 2 * hidden && def.fc_in == 4 * hidden &&
         def.fc_w->value.shape() == Shape{6, 4 * hidden};
    d << "; axis output " << axis_width << " = 2x" << hidden << ", fusion input " << def.fc_in
      << " = 4x" << hidden;

    // Every option combination constructs, self-validates, and produces the
    // declared output width.
    int combos = 0;
    for (CellKind cell : {CellKind::lstm, CellKind::gru, CellKind::rnn})
        for (MergeMode merge : {MergeMode::concat, MergeMode::add})
            for (Direction dir : {Direction::bi, Direction::uni})
                for (ActiveAxes act : {ActiveAxes::both, ActiveAxes::vertical_only,
                                       ActiveAxes::horizontal_only})
                    for (bool fusion : {true, false}) {
                        BiLstm2dOptions o{cell, merge, dir, act, fusion};
                        i64 mw = merged_width(3, o);
                        i64 channels = fusion ? 5 : mw;
                        BiLstm2dLayer<double> layer = make_bilstm2d<double>(channels, 3, o, rng);
                        Tensor<double> x = Tensor<double>::randn({2, 3, channels}, rng);
                        auto out = bilstm2d_forward(layer, make_leaf(x));
                        Shape want{2, 3, fusion ? channels : mw};
                        ok = ok && layer.fc_in == mw && out->value.shape() == want;
                        ++combos;
                    }
    ok = ok && combos == 72;
    d << "; " << combos << " option combinations constructed";

    bool bad_rejected = false;
    try {
        BiLstm2dLayer<double> bad = def;
        bad.fc_in = 15;
        validate_bilstm2d(bad);
    } catch (const ConfigError&) {
        bad_rejected = true;
    }
    ok = ok && bad_rejected;
    d << "; width mismatch rejected: " << (bad_rejected ? "yes" : "no");

    report("preset depths 18/24/36 and declared mixer widths hold", ok, d.str());
}

void check_learning() {
    const double acc_floor = 0.95;
    Dataset<float> data = make_bars_dataset<float>(200, 28, 28, 7);
    bool ok = true;
    std::ostringstream d;
    for (unsigned long long seed : {1ull, 2ull, 3ull}) {
        Model<float> m = make_model<float>(preset_config("mini"), seed);
        TrainConfig cfg;
        cfg.base_lr = 3e-3;
        cfg.min_lr = 1e-5;
        cfg.weight_decay = 0.01;
        cfg.batch_size = 16;
        cfg.epochs = 5;
        cfg.warmup_epochs = 1;
        cfg.label_smoothing = 0.1;
        cfg.seed = seed;
        auto history = train(m, data, cfg);
        double best = 0.0;
        bool monotone = history.size() == 5;
        for (std::size_t e = 0; e < history.size(); ++e) {
            best = std::max(best, history[e].train_acc);
            if (e > 0) monotone = monotone && history[e].train_loss <= history[e - 1].train_loss;
        }
        ok = ok && best > acc_floor && monotone;
        d << "seed " << seed << ": best acc " << std::fixed << std::setprecision(3) << best
          << (monotone ? ", loss monotone" : ", loss NOT monotone") << (seed < 3 ? "; " : "");
    }
    report("mini model passes 95% train accuracy in 5 epochs on 3 seeds", ok, d.str());
}

void check_optimizer_and_loss_laws() {
    bool ok = true;
    std::ostringstream d;

    bool uniform_exact = true;
    for (i64 k : {2, 10, 1000})
        for (i64 b : {1, 3, 16}) {
            std::vector<i64> labels(b);
            for (i64 i = 0; i < b; ++i) labels[i] = i % k;
            for (double fill : {0.0, 0.7}) {
                auto logits = make_leaf(Tensor<double>::fill({b, k}, fill));
                double loss = cross_entropy_smoothed(logits, labels, 0.1)->value[0];
                uniform_exact = uniform_exact && loss == std::log(static_cast<double>(k));
            }
        }
    ok = ok && uniform_exact;
    d << "uniform logits give ln K bit-exactly: " << (uniform_exact ? "yes" : "no");

    std::mt19937_64 rng(77);
    std::vector<std::pair<std::string, Var<double>>> ps = {
        {"w", make_param(Tensor<double>::uniform({4, 3}, rng, -1.0, 1.0))},
        {"z", make_param(Tensor<double>::zeros({5}))},
    };
    std::vector<Tensor<double>> before;
    for (auto& [name, p] : ps) before.push_back(p->value.clone());
    OptState<double> st = make_opt_state(ps);
    AdamWConfig oc;
    oc.weight_decay = 0.0;
    adamw_step(ps, st, oc, 1e-3);
    bool noop = true;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const Tensor<double>& now = ps[i].second->value;
        noop = noop && std::memcmp(now.data(), before[i].data(),
                                   sizeof(double) * static_cast<std::size_t>(now.numel())) == 0;
    }
    ok = ok && noop;
    d << "; zero-gradient zero-decay step is a bit-exact no-op: " << (noop ? "yes" : "no");

    const double base = 5.1e-4, min_lr = 1.7e-6;
    bool endpoints = lr_at(37, 1000, 37, base, min_lr) == base &&
                     lr_at(1000, 1000, 37, base, min_lr) == min_lr &&
                     lr_at(1500, 1000, 37, base, min_lr) == min_lr &&
                     lr_at(0, 1000, 37, base, min_lr) == min_lr;
    ok = ok && endpoints;
    d << "; schedule endpoints exact: " << (endpoints ? "yes" : "no");

    report("loss and optimizer identities hold exactly", ok, d.str());
}

}  // namespace

int main() {
    guarded("parameter totals within 2% and add-merge below concat", check_parameter_totals);
    guarded("flop totals at 224x224 within 10%", check_flop_totals);
    guarded("analytic gradients match finite differences below 1e-4", check_gradients);
    guarded("mixer equals the naive per-axis composition within 1e-12", check_naive_equivalence);
    guarded("receptive field is an exact center cross", check_cruciform_erf);
    guarded("one build serves resolutions 112..448 step 28; 225 names its divisor",
            check_resolution_sweep);
    guarded("preset depths 18/24/36 and declared mixer widths hold", check_depth_and_widths);
    guarded("mini model passes 95% train accuracy in 5 epochs on 3 seeds", check_learning);
    guarded("loss and optimizer identities hold exactly", check_optimizer_and_loss_laws);

    if (failures) std::printf("%d acceptance check(s) failed\n", failures);
    return failures ? 1 : 0;
}
