#include "seqkit/model_config.hpp"

#include <cctype>

namespace seqkit {

const char* downsample_kind_name(DownsampleKind k) {
    return k == DownsampleKind::patch_embed ? "patch_embed" : "pointwise_linear";
}
const char* block_kind_name(BlockKind k) { return k == BlockKind::lstm2d ? "lstm2d" : "vanilla"; }
const char* merge_mode_name(MergeMode m) { return m == MergeMode::concat ? "concat" : "add"; }
const char* direction_name(Direction d) { return d == Direction::bi ? "bi" : "uni"; }
const char* active_axes_name(ActiveAxes a) {
    switch (a) {
        case ActiveAxes::both: return "both";
        case ActiveAxes::vertical_only: return "vertical";
        default: return "horizontal";
    }
}

namespace {

[[noreturn]] void bad_choice(const char* what, const std::string& got,
                             const std::string& allowed) {
    throw ConfigError(std::string("unknown ") + what + " \"" + got + "\"; expected one of " +
                      allowed);
}

}  // namespace

DownsampleKind parse_downsample_kind(const std::string& s) {
    if (s == "patch_embed") return DownsampleKind::patch_embed;
    if (s == "pointwise_linear") return DownsampleKind::pointwise_linear;
    bad_choice("downsample", s, "patch_embed, pointwise_linear");
}

BlockKind parse_block_kind(const std::string& s) {
    if (s == "lstm2d") return BlockKind::lstm2d;
    if (s == "vanilla") return BlockKind::vanilla;
    bad_choice("block kind", s, "lstm2d, vanilla");
}

MergeMode parse_merge_mode(const std::string& s) {
    if (s == "concat") return MergeMode::concat;
    if (s == "add") return MergeMode::add;
    bad_choice("merge mode", s, "concat, add");
}

Direction parse_direction(const std::string& s) {
    if (s == "bi") return Direction::bi;
    if (s == "uni") return Direction::uni;
    bad_choice("direction", s, "bi, uni");
}

ActiveAxes parse_active_axes(const std::string& s) {
    if (s == "both") return ActiveAxes::both;
    if (s == "vertical") return ActiveAxes::vertical_only;
    if (s == "horizontal") return ActiveAxes::horizontal_only;
    bad_choice("active axes", s, "both, vertical, horizontal");
}

CellKind parse_cell_kind(const std::string& s) {
    if (s == "lstm") return CellKind::lstm;
    if (s == "gru") return CellKind::gru;
    if (s == "rnn") return CellKind::rnn;
    bad_choice("cell kind", s, "lstm, gru, rnn");
}

std::string normalize_preset_name(const std::string& name) {
    std::string out;
    for (char raw : name) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (c == '-' || c == ' ' || c == '(') c = '_';
        if (c == ')') continue;
        if (c == '_' && (out.empty() || out.back() == '_')) continue;
        out.push_back(c);
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

namespace {

StageSpec stage(DownsampleKind ds, i64 stride, i64 dim, i64 hidden, i64 depth,
                BlockKind block = BlockKind::lstm2d) {
    StageSpec s;
    s.downsample = ds;
    s.stride = stride;
    s.dim = dim;
    s.hidden = hidden;
    s.mlp_ratio = 3;
    s.depth = depth;
    s.block = block;
    return s;
}

ModelConfig sequencer2d(const std::string& name, i64 d1, i64 d2, std::vector<i64> depths,
                        double drop_path) {
    ModelConfig cfg;
    cfg.name = name;
    cfg.drop_path = drop_path;
    cfg.stages = {
        stage(DownsampleKind::patch_embed, 7, d1, d1 / 4, depths[0]),
        stage(DownsampleKind::patch_embed, 2, d2, d2 / 4, depths[1]),
        stage(DownsampleKind::pointwise_linear, 1, d2, d2 / 4, depths[2]),
        stage(DownsampleKind::pointwise_linear, 1, d2, d2 / 4, depths[3]),
    };
    return cfg;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"sequencer2d_s", "sequencer2d_m",  "sequencer2d_l",   "sequencer2d_l_x1.3",
            "vsequencer_s",  "vsequencer_s_h", "vsequencer_s_pe", "mini"};
}

ModelConfig preset_config(const std::string& name) {
    const std::string key = normalize_preset_name(name);
    ModelConfig cfg;
    if (key == "sequencer2d_s") {
        cfg = sequencer2d(key, 192, 384, {4, 3, 8, 3}, 0.1);
    } else if (key == "sequencer2d_m") {
        cfg = sequencer2d(key, 192, 384, {4, 3, 14, 3}, 0.2);
    } else if (key == "sequencer2d_l") {
        cfg = sequencer2d(key, 192, 384, {8, 8, 16, 4}, 0.4);
    } else if (key == "sequencer2d_l_x1.3" || key == "sequencer2d_lx1.3") {
        cfg = sequencer2d("sequencer2d_l_x1.3", 256, 512, {8, 8, 16, 4}, 0.4);
    } else if (key == "vsequencer_s" || key == "vsequencer_s_pe") {
        cfg.name = key;
        cfg.drop_path = 0.1;
        cfg.stages = {
            stage(DownsampleKind::patch_embed, 14, 384, 192, 4, BlockKind::vanilla),
            stage(DownsampleKind::pointwise_linear, 1, 384, 192, 3, BlockKind::vanilla),
            stage(DownsampleKind::pointwise_linear, 1, 384, 192, 8, BlockKind::vanilla),
            stage(DownsampleKind::pointwise_linear, 1, 384, 192, 3, BlockKind::vanilla),
        };
        if (key == "vsequencer_s_pe") {
            cfg.use_positional_embedding = true;
            cfg.pe_rows = 16;  // 224 / 14
            cfg.pe_cols = 16;
        }
    } else if (key == "vsequencer_s_h") {
        cfg.name = key;
        cfg.drop_path = 0.1;
        cfg.stages = {
            stage(DownsampleKind::patch_embed, 7, 192, 96, 4, BlockKind::vanilla),
            stage(DownsampleKind::patch_embed, 2, 384, 192, 3, BlockKind::vanilla),
            stage(DownsampleKind::pointwise_linear, 1, 384, 192, 8, BlockKind::vanilla),
            stage(DownsampleKind::pointwise_linear, 1, 384, 192, 3, BlockKind::vanilla),
        };
    } else if (key == "mini") {
        cfg.name = key;
        cfg.num_classes = 2;
        cfg.stages = {stage(DownsampleKind::patch_embed, 7, 16, 4, 2)};
    } else {
        std::string allowed;
        for (const std::string& n : preset_names()) allowed += (allowed.empty() ? "" : ", ") + n;
        throw ConfigError("unknown preset \"" + name + "\"; expected one of " + allowed);
    }
    validate_config(cfg);
    return cfg;
}

void validate_config(const ModelConfig& cfg) {
    if (cfg.stages.empty()) throw ConfigError("model config needs at least one stage");
    if (cfg.num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (cfg.in_channels < 1) throw ConfigError("in_channels must be >= 1");
    if (cfg.drop_path < 0.0 || cfg.drop_path >= 1.0)
        throw ConfigError("drop_path must lie in [0,1)");
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const StageSpec& s = cfg.stages[i];
        std::string where = "stage " + std::to_string(i);
        if (s.dim < 1 || s.hidden < 1)
            throw ConfigError(where + ": dim and hidden must be >= 1");
        if (s.depth < 0) throw ConfigError(where + ": depth must be >= 0");
        if (s.mlp_ratio < 1) throw ConfigError(where + ": mlp_ratio must be >= 1");
        if (s.downsample == DownsampleKind::patch_embed && s.stride < 1)
            throw ConfigError(where + ": patch stride must be >= 1");
        if (s.block == BlockKind::vanilla && 2 * s.hidden != s.dim)
            throw ConfigError(where + ": vanilla blocks need hidden = dim/2, got hidden " +
                              std::to_string(s.hidden) + " for dim " + std::to_string(s.dim));
    }
    if (cfg.use_positional_embedding && (cfg.pe_rows < 1 || cfg.pe_cols < 1))
        throw ConfigError("positional embedding needs pe_rows and pe_cols >= 1");
}

i64 total_depth(const ModelConfig& cfg) {
    i64 n = 0;
    for (const StageSpec& s : cfg.stages) n += s.depth;
    return n;
}

i64 downsample_factor(const ModelConfig& cfg) {
    i64 f = 1;
    for (const StageSpec& s : cfg.stages)
        if (s.downsample == DownsampleKind::patch_embed) f *= s.stride;
    return f;
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageSpec& s : cfg.stages) {
        stages.push_back({{"downsample", downsample_kind_name(s.downsample)},
                          {"stride", s.stride},
                          {"dim", s.dim},
                          {"hidden", s.hidden},
                          {"mlp_ratio", s.mlp_ratio},
                          {"depth", s.depth},
                          {"block", block_kind_name(s.block)}});
    }
    nlohmann::json j;
    j["name"] = cfg.name;
    j["stages"] = stages;
    j["num_classes"] = cfg.num_classes;
    j["in_channels"] = cfg.in_channels;
    j["options"] = {{"merge", merge_mode_name(cfg.mixer.merge)},
                    {"direction", direction_name(cfg.mixer.direction)},
                    {"active", active_axes_name(cfg.mixer.active)},
                    {"cell", cell_kind_name(cfg.mixer.cell)},
                    {"use_fusion", cfg.mixer.use_fusion},
                    {"use_pe", cfg.use_positional_embedding},
                    {"drop_path", cfg.drop_path}};
    if (cfg.use_positional_embedding) {
        j["options"]["pe_rows"] = cfg.pe_rows;
        j["options"]["pe_cols"] = cfg.pe_cols;
    }
    return j;
}

namespace {

void apply_options(ModelConfig& cfg, const nlohmann::json& opt) {
    if (opt.contains("merge")) cfg.mixer.merge = parse_merge_mode(opt.at("merge"));
    if (opt.contains("direction")) cfg.mixer.direction = parse_direction(opt.at("direction"));
    if (opt.contains("active")) cfg.mixer.active = parse_active_axes(opt.at("active"));
    if (opt.contains("cell")) cfg.mixer.cell = parse_cell_kind(opt.at("cell"));
    if (opt.contains("use_fusion")) cfg.mixer.use_fusion = opt.at("use_fusion").get<bool>();
    if (opt.contains("use_pe")) cfg.use_positional_embedding = opt.at("use_pe").get<bool>();
    if (opt.contains("drop_path")) cfg.drop_path = opt.at("drop_path").get<double>();
    if (opt.contains("pe_rows")) cfg.pe_rows = opt.at("pe_rows").get<i64>();
    if (opt.contains("pe_cols")) cfg.pe_cols = opt.at("pe_cols").get<i64>();
}

}  // namespace

ModelConfig config_from_json(const nlohmann::json& j) {
    try {
        ModelConfig cfg;
        if (j.contains("preset")) {
            if (j.contains("stages"))
                throw ConfigError("config lists both \"preset\" and \"stages\"; pick one");
            cfg = preset_config(j.at("preset").get<std::string>());
        } else {
            if (!j.contains("stages")) throw ConfigError("config needs \"preset\" or \"stages\"");
            if (j.contains("name")) cfg.name = j.at("name").get<std::string>();
            for (const nlohmann::json& js : j.at("stages")) {
                StageSpec s;
                s.downsample = parse_downsample_kind(js.value("downsample", "patch_embed"));
                s.stride = js.value("stride", i64{1});
                s.dim = js.at("dim").get<i64>();
                s.hidden = js.at("hidden").get<i64>();
                s.mlp_ratio = js.value("mlp_ratio", i64{3});
                s.depth = js.at("depth").get<i64>();
                s.block = parse_block_kind(js.value("block", "lstm2d"));
                cfg.stages.push_back(s);
            }
        }
        if (j.contains("num_classes")) cfg.num_classes = j.at("num_classes").get<i64>();
        if (j.contains("in_channels")) cfg.in_channels = j.at("in_channels").get<i64>();
        if (j.contains("options")) apply_options(cfg, j.at("options"));
        validate_config(cfg);
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
}

nlohmann::json describe_config(const ModelConfig& cfg) {
    nlohmann::json j = config_to_json(cfg);
    j["total_depth"] = total_depth(cfg);
    j["downsample_factor"] = downsample_factor(cfg);
    return j;
}

}  // namespace seqkit
