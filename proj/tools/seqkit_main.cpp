#include <CLI11.hpp>

#include <Eigen/Core>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "seqkit/analysis.hpp"
#include "seqkit/finite_diff.hpp"
#include "seqkit/training.hpp"

using namespace seqkit;
using nlohmann::json;

namespace {

struct ModelFlags {
    std::string preset;
    std::string config_path;
    std::string merge, direction, active, cell;
};

std::string preset_help() {
    std::string names;
    for (const std::string& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    return "named model preset: " + names;
}

void add_model_flags(CLI::App* sub, ModelFlags& f) {
    auto* preset = sub->add_option("--preset", f.preset, preset_help());
    auto* config = sub->add_option("--config", f.config_path, "model config json file");
    preset->excludes(config);
    config->excludes(preset);
    sub->add_option("--merge", f.merge, "token-mixer merge mode")
        ->check(CLI::IsMember({"concat", "add"}));
    sub->add_option("--direction", f.direction, "scan direction")
        ->check(CLI::IsMember({"bi", "uni"}));
    sub->add_option("--active", f.active, "active scan axes")
        ->check(CLI::IsMember({"both", "vertical", "horizontal"}));
    sub->add_option("--cell", f.cell, "recurrent cell kind")
        ->check(CLI::IsMember({"lstm", "gru", "rnn"}));
}

ModelConfig resolve_config(const ModelFlags& f) {
    ModelConfig cfg;
    if (!f.preset.empty()) {
        cfg = preset_config(f.preset);
    } else if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) throw IoError("cannot read " + f.config_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError(f.config_path + ": " + e.what());
        }
        cfg = config_from_json(j);
    } else {
        throw ValueError("need --preset or --config");
    }
    if (!f.merge.empty()) cfg.mixer.merge = parse_merge_mode(f.merge);
    if (!f.direction.empty()) cfg.mixer.direction = parse_direction(f.direction);
    if (!f.active.empty()) cfg.mixer.active = parse_active_axes(f.active);
    if (!f.cell.empty()) cfg.mixer.cell = parse_cell_kind(f.cell);
    validate_config(cfg);
    return cfg;
}

std::pair<i64, i64> parse_resolution(const std::string& s) {
    auto bad = [&] { throw ValueError("resolution must look like 224x224, got \"" + s + "\""); };
    auto sep = s.find_first_of("xX");
    if (sep == std::string::npos || sep == 0 || sep + 1 >= s.size()) bad();
    i64 h = 0, w = 0;
    try {
        std::size_t used = 0;
        h = std::stoll(s.substr(0, sep), &used);
        if (used != sep) bad();
        w = std::stoll(s.substr(sep + 1), &used);
        if (used != s.size() - sep - 1) bad();
    } catch (const std::logic_error&) {
        bad();
    }
    if (h < 1 || w < 1) bad();
    return {h, w};
}

i64 parse_count(const std::string& spec, std::size_t colon) {
    i64 n = 0;
    try {
        std::size_t used = 0;
        n = std::stoll(spec.substr(colon + 1), &used);
        if (used != spec.size() - colon - 1) n = 0;
    } catch (const std::logic_error&) {
        n = 0;
    }
    if (n < 1) throw ValueError("image count in \"" + spec + "\" must be a positive integer");
    return n;
}

// Image sources: "random:n" (standard-normal pixels, uniform labels),
// "bars:n" / "blobs:n" (synthetic two-class sets), anything else is a
// dataset directory with an index.txt.
template <typename S>
Dataset<S> resolve_images(const std::string& spec, i64 h, i64 w, i64 channels, i64 classes,
                          unsigned long long seed) {
    auto colon = spec.find(':');
    std::string kind = colon == std::string::npos ? "" : spec.substr(0, colon);
    if (kind == "random") {
        i64 n = parse_count(spec, colon);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_int_distribution<int> label(0, static_cast<int>(classes) - 1);
        Dataset<S> ds;
        for (i64 i = 0; i < n; ++i) {
            Tensor<S> img = Tensor<S>::zeros({h, w, channels});
            for (i64 p = 0; p < img.numel(); ++p)
                img.mutable_data()[p] = static_cast<S>(gauss(rng));
            ds.images.push_back(std::move(img));
            ds.labels.push_back(label(rng));
        }
        return ds;
    }
    if (kind == "bars") return make_bars_dataset<S>(parse_count(spec, colon), h, w, seed, channels);
    if (kind == "blobs") {
        if (channels != 3)
            throw ValueError("blobs images are 3-channel; model expects " +
                             std::to_string(channels));
        return make_blobs_dataset<S>(parse_count(spec, colon), h, w, seed);
    }
    return load_dataset_dir<S>(spec);
}

template <typename S>
Tensor<S> stack_images(const Dataset<S>& ds) {
    std::vector<i64> order(static_cast<std::size_t>(ds.size()));
    std::iota(order.begin(), order.end(), i64(0));
    return detail::stack_batch(ds, order, 0, ds.size());
}

json cost_json(const CostReport& r) {
    json breakdown = json::object();
    for (const auto& [group, n] : r.breakdown) breakdown[group] = n;
    return json{{"total", r.total}, {"breakdown", breakdown}};
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---- commands ----

int run_describe(const ModelFlags& mf) {
    print_json(describe_config(resolve_config(mf)));
    return 0;
}

int run_count_params(const ModelFlags& mf, unsigned long long seed) {
    ModelConfig cfg = resolve_config(mf);
    Model<float> m = make_model<float>(cfg, seed);
    json j = cost_json(count_params(m));
    j["name"] = cfg.name;
    print_json(j);
    return 0;
}

int run_count_flops(const ModelFlags& mf, unsigned long long seed, const std::string& res) {
    ModelConfig cfg = resolve_config(mf);
    Model<float> m = make_model<float>(cfg, seed);
    auto [h, w] = parse_resolution(res);
    json j = cost_json(count_flops(m, h, w));
    j["name"] = cfg.name;
    j["resolution"] = std::to_string(h) + "x" + std::to_string(w);
    print_json(j);
    return 0;
}

template <typename S>
Model<S> resolve_model(const ModelFlags& mf, const std::string& checkpoint,
                       unsigned long long seed) {
    if (!checkpoint.empty()) return load_checkpoint<S>(checkpoint);
    return make_model<S>(resolve_config(mf), seed);
}

int run_forward(const ModelFlags& mf, const std::string& checkpoint, unsigned long long seed,
                const std::string& res, const std::string& images, const std::string& out) {
    Model<float> m = resolve_model<float>(mf, checkpoint, seed);
    auto [h, w] = parse_resolution(res);
    Dataset<float> ds =
        resolve_images<float>(images, h, w, m.cfg.in_channels, m.cfg.num_classes, seed);
    Var<float> logits = model_forward(m, make_leaf(stack_images(ds)));
    const i64 b = logits->value.extent(0), k = logits->value.extent(1);

    json j{{"name", m.cfg.name}, {"shape", {b, k}}};
    json argmax = json::array();
    for (i64 i = 0; i < b; ++i)
        argmax.push_back(argmax_lowest(logits->value.data() + i * k, k));
    j["argmax"] = argmax;
    if (!out.empty()) {
        save_tensor(out, logits->value);
        j["out"] = out;
    } else {
        json rows = json::array();
        for (i64 i = 0; i < b; ++i) {
            json row = json::array();
            for (i64 c = 0; c < k; ++c) row.push_back(logits->value[i * k + c]);
            rows.push_back(std::move(row));
        }
        j["logits"] = rows;
    }
    print_json(j);
    return 0;
}

// Analytic gradients of a smoothed cross-entropy loss over one small batch,
// checked against central finite differences for every parameter tensor and
// the input. Sized for small configs; cost grows with parameter count.
int run_grad_check(const ModelFlags& mf, unsigned long long seed, const std::string& res) {
    Model<double> m = make_model<double>(resolve_config(mf), seed);
    i64 h, w;
    if (res.empty()) {
        h = w = 2 * downsample_factor(m.cfg);
    } else {
        std::tie(h, w) = parse_resolution(res);
    }
    const i64 batch = 2;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Tensor<double> batch_images = Tensor<double>::zeros({batch, h, w, m.cfg.in_channels});
    for (i64 p = 0; p < batch_images.numel(); ++p)
        batch_images.mutable_data()[p] = gauss(rng);
    std::vector<i64> labels;
    for (i64 i = 0; i < batch; ++i)
        labels.push_back(static_cast<i64>(rng() % static_cast<unsigned long long>(m.cfg.num_classes)));
    const double eps = 0.1;

    Var<double> input = make_param(batch_images.clone());
    Tape<double> tape;
    {
        TapeScope<double> scope(tape);
        tape.backward(cross_entropy_smoothed(model_forward(m, input), labels, eps));
    }

    auto loss_now = [&]() {
        Var<double> in = make_leaf(input->value.clone());
        return cross_entropy_smoothed(model_forward(m, in), labels, eps)->value[0];
    };
    auto fd_against = [&](const Var<double>& p) {
        Tensor<double> fd = finite_diff_grad<double>(
            [&](const Tensor<double>& t) {
                Tensor<double> saved = p->value;
                p->value = t.clone();
                double l = loss_now();
                p->value = saved;
                return l;
            },
            p->value);
        Tensor<double> analytic = p->grad ? p->grad->clone() : Tensor<double>::zeros(p->value.shape());
        return max_rel_err(analytic, fd);
    };

    double worst = 0.0;
    std::string worst_name = "input";
    i64 checked = 0;
    for (const auto& [name, p] : collect_model_params(m)) {
        double err = fd_against(p);
        ++checked;
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    }
    double input_err = fd_against(input);
    ++checked;
    if (input_err > worst) {
        worst = input_err;
        worst_name = "input";
    }

    const double threshold = 1e-4;
    bool pass = worst < threshold;
    print_json(json{{"max_rel_err", worst},
              {"worst_tensor", worst_name},
              {"tensors_checked", checked},
              {"threshold", threshold},
              {"pass", pass}});
    return pass ? 0 : 1;
}

int run_erf(const ModelFlags& mf, const std::string& checkpoint, unsigned long long seed,
            const std::string& res, const std::string& images, i64 block,
            const std::string& out) {
    Model<float> m = resolve_model<float>(mf, checkpoint, seed);
    auto [h, w] = parse_resolution(res);
    Dataset<float> ds =
        resolve_images<float>(images, h, w, m.cfg.in_channels, m.cfg.num_classes, seed);
    ErfMap map = erf_compute(m, stack_images(ds), block);

    namespace fs = std::filesystem;
    std::string ext = fs::path(out).extension().string();
    if (ext == ".pgm")
        erf_render(map, out);
    else if (ext == ".sqtn")
        save_tensor(out, map.scores);
    else
        throw ValueError("--out must end in .pgm or .sqtn, got \"" + out + "\"");
    print_json(json{{"name", map.model_name},
              {"block", map.block},
              {"height", map.height},
              {"width", map.width},
              {"images", map.images},
              {"raw_max", map.raw_max},
              {"out", out}});
    return 0;
}

struct TrainFlags {
    TrainConfig cfg;
    double drop_path = -1.0;  // -1: take the model config's rate
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
    sub->add_option("--lr", f.cfg.base_lr, "peak learning rate");
    sub->add_option("--min-lr", f.cfg.min_lr, "cosine floor");
    sub->add_option("--weight-decay", f.cfg.weight_decay, "decoupled weight decay");
    sub->add_option("--beta1", f.cfg.beta1, "first-moment decay");
    sub->add_option("--beta2", f.cfg.beta2, "second-moment decay");
    sub->add_option("--adam-eps", f.cfg.adam_eps, "optimizer epsilon");
    sub->add_option("--batch-size", f.cfg.batch_size, "samples per step");
    sub->add_option("--epochs", f.cfg.epochs, "training epochs");
    sub->add_option("--warmup-epochs", f.cfg.warmup_epochs, "linear warmup epochs");
    sub->add_option("--label-smoothing", f.cfg.label_smoothing, "target smoothing");
    sub->add_option("--drop-path", f.drop_path, "stochastic depth rate (default: model config)");
}

int run_train(const ModelFlags& mf, const TrainFlags& tf, unsigned long long seed,
              const std::string& res, const std::string& images, const std::string& out,
              const std::string& checkpoint) {
    ModelConfig cfg = resolve_config(mf);
    Model<float> m = make_model<float>(cfg, seed);
    auto [h, w] = parse_resolution(res);
    Dataset<float> ds = resolve_images<float>(images, h, w, cfg.in_channels, cfg.num_classes, seed);

    TrainConfig tc = tf.cfg;
    tc.seed = seed;
    tc.drop_path = tf.drop_path < 0.0 ? cfg.drop_path : tf.drop_path;
    std::vector<EpochMetrics> history = train(m, ds, tc);

    json rows = json::array();
    for (const EpochMetrics& em : history)
        rows.push_back(json{{"epoch", em.epoch},
                            {"lr", em.lr},
                            {"train_loss", em.train_loss},
                            {"train_acc", em.train_acc},
                            {"eval_acc", em.eval_acc}});
    json j{{"name", cfg.name},
           {"samples", ds.size()},
           {"epochs", tc.epochs},
           {"final_train_loss", history.back().train_loss},
           {"final_train_acc", history.back().train_acc},
           {"final_eval_acc", history.back().eval_acc},
           {"history", rows}};
    if (!out.empty()) {
        write_metrics_csv(out, history);
        j["out"] = out;
    }
    if (!checkpoint.empty()) {
        save_checkpoint(m, checkpoint);
        j["checkpoint"] = checkpoint;
    }
    print_json(j);
    return 0;
}

int run_eval(const ModelFlags& mf, const std::string& checkpoint, unsigned long long seed,
             const std::string& res, const std::string& images) {
    Model<float> m = resolve_model<float>(mf, checkpoint, seed);
    auto [h, w] = parse_resolution(res);
    Dataset<float> ds =
        resolve_images<float>(images, h, w, m.cfg.in_channels, m.cfg.num_classes, seed);
    double acc = evaluate(m, ds);
    print_json(json{{"name", m.cfg.name}, {"samples", ds.size()}, {"accuracy", acc}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"seqkit: build, inspect, verify, train, and analyze 2D-recurrent vision models"};
    app.require_subcommand(1);
    int threads = -1;
    app.add_option("--threads", threads, "worker thread cap (0 = library default; env SEQKIT_THREADS)")
        ->check(CLI::NonNegativeNumber);

    ModelFlags mf;
    unsigned long long seed = 0;
    std::string res = "224x224";
    std::string grad_res;  // grad-check defaults to the smallest valid grid
    std::string images_fwd = "random:1", images_erf = "random:8", images_data;
    std::string out, checkpoint;
    i64 block = 1;
    TrainFlags tf;

    CLI::App* describe = app.add_subcommand("describe", "print the resolved model configuration")->fallthrough();
    add_model_flags(describe, mf);

    CLI::App* cparams = app.add_subcommand("count-params", "parameter count with a per-stage breakdown")->fallthrough();
    add_model_flags(cparams, mf);
    cparams->add_option("--seed", seed, "parameter init seed");

    CLI::App* cflops = app.add_subcommand("count-flops", "forward FLOPs at a resolution (1 MAC = 1 FLOP)")->fallthrough();
    add_model_flags(cflops, mf);
    cflops->add_option("--seed", seed, "parameter init seed");
    cflops->add_option("--resolution", res, "input HxW");

    CLI::App* forward = app.add_subcommand("forward", "run inference and write or print logits")->fallthrough();
    add_model_flags(forward, mf);
    forward->add_option("--seed", seed, "init and image seed");
    forward->add_option("--resolution", res, "generated-image HxW");
    forward->add_option("--images", images_fwd, "image source: dir, random:n, bars:n, blobs:n");
    forward->add_option("--out", out, "write logits as a tensor file instead of printing them");
    forward->add_option("--checkpoint", checkpoint, "load weights (and config) from this directory")
        ->excludes("--preset")
        ->excludes("--config");

    CLI::App* gradcheck = app.add_subcommand(
        "grad-check", "compare analytic gradients with finite differences (small configs)")->fallthrough();
    add_model_flags(gradcheck, mf);
    gradcheck->add_option("--seed", seed, "init, image, and label seed");
    gradcheck->add_option("--resolution", grad_res, "input HxW (default: 2x the downsampling factor)");

    CLI::App* erf = app.add_subcommand("erf", "effective receptive field of a trunk block")->fallthrough();
    add_model_flags(erf, mf);
    erf->add_option("--seed", seed, "init and image seed");
    erf->add_option("--resolution", res, "generated-image HxW");
    erf->add_option("--images", images_erf, "image source: dir, random:n, bars:n, blobs:n");
    erf->add_option("--block", block, "1-based trunk block index");
    erf->add_option("--out", out, "output path, .pgm or .sqtn")->required();
    erf->add_option("--checkpoint", checkpoint, "load weights (and config) from this directory")
        ->excludes("--preset")
        ->excludes("--config");

    CLI::App* train_cmd = app.add_subcommand("train", "fit a model on a dataset")->fallthrough();
    add_model_flags(train_cmd, mf);
    add_train_flags(train_cmd, tf);
    train_cmd->add_option("--seed", seed, "init, shuffle, and image seed");
    train_cmd->add_option("--resolution", res, "generated-image HxW");
    train_cmd->add_option("--images", images_data, "image source: dir, random:n, bars:n, blobs:n")
        ->required();
    train_cmd->add_option("--out", out, "write per-epoch metrics csv here");
    train_cmd->add_option("--checkpoint", checkpoint, "save trained weights to this directory");

    CLI::App* eval_cmd = app.add_subcommand("eval", "top-1 accuracy on a dataset")->fallthrough();
    add_model_flags(eval_cmd, mf);
    eval_cmd->add_option("--seed", seed, "init and image seed");
    eval_cmd->add_option("--resolution", res, "generated-image HxW");
    eval_cmd->add_option("--images", images_data, "image source: dir, random:n, bars:n, blobs:n")
        ->required();
    eval_cmd->add_option("--checkpoint", checkpoint, "load weights (and config) from this directory")
        ->excludes("--preset")
        ->excludes("--config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // help/version keep 0; every parse failure is a usage error
    }

    try {
        if (threads < 0) {
            if (const char* env = std::getenv("SEQKIT_THREADS")) {
                std::string v(env);
                std::size_t used = 0;
                long n = -1;
                try {
                    n = std::stol(v, &used);
                } catch (const std::logic_error&) {
                }
                if (used != v.size() || n < 0)
                    throw ValueError("SEQKIT_THREADS must be a non-negative integer, got \"" + v +
                                     "\"");
                threads = static_cast<int>(n);
            }
        }
        if (threads > 0) Eigen::setNbThreads(threads);

        if (app.got_subcommand(describe)) return run_describe(mf);
        if (app.got_subcommand(cparams)) return run_count_params(mf, seed);
        if (app.got_subcommand(cflops)) return run_count_flops(mf, seed, res);
        if (app.got_subcommand(forward))
            return run_forward(mf, checkpoint, seed, res, images_fwd, out);
        if (app.got_subcommand(gradcheck)) return run_grad_check(mf, seed, grad_res);
        if (app.got_subcommand(erf))
            return run_erf(mf, checkpoint, seed, res, images_erf, block, out);
        if (app.got_subcommand(train_cmd))
            return run_train(mf, tf, seed, res, images_data, out, checkpoint);
        if (app.got_subcommand(eval_cmd)) return run_eval(mf, checkpoint, seed, res, images_data);
    } catch (const IoError& e) {
        std::cerr << "seqkit: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "seqkit: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
