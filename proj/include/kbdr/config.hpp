#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kbdr/encoder.hpp"
#include "kbdr/kbdata.hpp"
#include "kbdr/lexical.hpp"
#include "kbdr/matching.hpp"
#include "kbdr/pipeline.hpp"
#include "kbdr/sampling.hpp"
#include "kbdr/synthkit.hpp"

namespace kbdr {

/// Sub-stream seeds derived from one root seed.
struct SeedPlan {
    std::uint64_t root = 0;
    std::uint64_t synth = 0;
    std::uint64_t split = 0;
    std::uint64_t sampler = 0;
    std::uint64_t init = 0;
    std::uint64_t train = 0;
};

SeedPlan seed_plan(std::uint64_t root);

struct PathsConfig {
    std::filesystem::path work_dir = "work";
    std::optional<std::filesystem::path> kb;
    std::optional<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> synonyms;
};

/// Every tunable of the pipeline. Loaded from one JSON file; keys that are
/// absent keep their defaults and unknown keys are rejected.
struct PipelineConfig {
    std::uint64_t seed = 7;
    std::string dataset = "PO";
    std::map<std::string, RelationSchema> schemas;
    std::map<std::string, MarginClassTable> margin_tables;
    SplitRatios split_ratios = {0.7, 0.15, 0.15};
    SamplerConfig sampler;
    MarginMode margin_mode = MarginMode::multi;
    BinaryMargins binary_margins;
    EncoderConfig encoder;
    TrainConfig train;
    Bm25Params bm25;
    std::vector<std::size_t> eval_cutoffs = {10, 50};
    std::size_t search_k = 50;
    SynthSpec synth;
    PathsConfig paths;

    PipelineConfig();

    SeedPlan seeds() const { return seed_plan(seed); }
    SynthSpec synth_spec() const;
    SamplerConfig sampler_config() const;
    TrainConfig train_config() const;

    const RelationSchema& schema() const;
    /// The dataset's layered table, or its binary ablation per `margin_mode`.
    MarginClassTable margin_table() const;
    /// Checks cross-field consistency (schema/table slots, ratios, ranges).
    void validate() const;
};

PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);
/// KBDR_KB, KBDR_CORPUS, KBDR_SYNONYMS and KBDR_WORK_DIR replace the
/// corresponding paths when set.
void apply_env_overrides(PipelineConfig& config);

nlohmann::json margin_table_to_json(const MarginClassTable& table);
MarginClassTable margin_table_from_json(const nlohmann::json& j, const RelationSchema& schema);

}  // namespace kbdr
