#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "seqkit/bilstm2d.hpp"

namespace seqkit {

enum class DownsampleKind { patch_embed, pointwise_linear };
enum class BlockKind { lstm2d, vanilla };

struct StageSpec {
    DownsampleKind downsample = DownsampleKind::patch_embed;
    i64 stride = 1;  // patch size; unused for pointwise_linear
    i64 dim = 0;
    i64 hidden = 0;
    i64 mlp_ratio = 3;
    i64 depth = 0;
    BlockKind block = BlockKind::lstm2d;
};

struct ModelConfig {
    std::string name = "custom";
    std::vector<StageSpec> stages;
    i64 num_classes = 1000;
    i64 in_channels = 3;
    bool use_positional_embedding = false;
    i64 pe_rows = 0, pe_cols = 0;  // token grid the learned table is sized for
    double drop_path = 0.0;
    BiLstm2dOptions mixer;
};

const char* downsample_kind_name(DownsampleKind k);
const char* block_kind_name(BlockKind k);
const char* merge_mode_name(MergeMode m);
const char* direction_name(Direction d);
const char* active_axes_name(ActiveAxes a);

DownsampleKind parse_downsample_kind(const std::string& s);
BlockKind parse_block_kind(const std::string& s);
MergeMode parse_merge_mode(const std::string& s);
Direction parse_direction(const std::string& s);
ActiveAxes parse_active_axes(const std::string& s);
CellKind parse_cell_kind(const std::string& s);

// Lowercases and maps separators so e.g. "Sequencer2D-S" and "vsequencer_s(h)"
// resolve to canonical preset names.
std::string normalize_preset_name(const std::string& name);
std::vector<std::string> preset_names();
ModelConfig preset_config(const std::string& name);

void validate_config(const ModelConfig& cfg);
i64 total_depth(const ModelConfig& cfg);
i64 downsample_factor(const ModelConfig& cfg);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);
nlohmann::json describe_config(const ModelConfig& cfg);

}  // namespace seqkit
