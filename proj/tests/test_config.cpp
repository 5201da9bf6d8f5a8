#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "kbdr/config.hpp"
#include "kbdr/error.hpp"
#include "kbdr/random.hpp"

using namespace kbdr;
using nlohmann::json;

TEST(Config, DefaultsAreValid) {
    PipelineConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.schema().name, "PO");
    EXPECT_EQ(c.margin_table().rules().size(), po_margin_table().rules().size());
    c.dataset = "PTM";
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.schema().slot_count(), 4u);
}

TEST(Config, JsonRoundTrip) {
    PipelineConfig c;
    c.seed = 99;
    c.train.epochs = 3;
    c.encoder.output_dim = 64;
    c.eval_cutoffs = {5, 20};
    c.paths.kb = "data/kb.tsv";
    const auto j = config_to_json(c);
    const auto back = config_from_json(j);
    EXPECT_EQ(config_to_json(back), j);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.paths.kb, std::filesystem::path("data/kb.tsv"));
}

TEST(Config, EmptyObjectKeepsDefaults) {
    EXPECT_EQ(config_to_json(config_from_json(json::object())), config_to_json(PipelineConfig{}));
}

TEST(Config, UnknownKeysRejected) {
    EXPECT_THROW(config_from_json(json{{"sed", 1}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"train", {{"epoch", 1}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"sampler", {{"cap", 1}}}}), ConfigError);
}

TEST(Config, BadValuesRejected) {
    EXPECT_THROW(config_from_json(json{{"seed", "seven"}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"dataset", "XYZ"}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"split", {{"ratios", {0.5, 0.5, 0.5}}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"train", {{"optimizer", "adam"}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"distance_space", "euclid"}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"eval", {{"cutoffs", json::array()}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json::array()), ConfigError);
}

TEST(Config, MarginTableOverride) {
    auto j = config_to_json(PipelineConfig{});
    auto& rules = j["margin_tables"]["PO"]["rules"];
    for (auto& r : rules) {
        if (r["class"] == 2 && r["polarity"] == "negative") r["mu"] = 0.3;
    }
    const auto c = config_from_json(j);
    const auto table = c.margin_table();
    bool seen = false;
    for (const auto& r : table.rules()) {
        if (r.class_id == 2 && r.polarity == Polarity::negative) {
            EXPECT_DOUBLE_EQ(r.mu, 0.3);
            seen = true;
        }
    }
    EXPECT_TRUE(seen);

    // One pattern claimed by two classes of the same polarity.
    auto dup = config_to_json(PipelineConfig{});
    auto copy = dup["margin_tables"]["PO"]["rules"][0];
    copy["class"] = 9;
    copy["mu"] = 2.0;
    dup["margin_tables"]["PO"]["rules"].push_back(copy);
    EXPECT_THROW(config_from_json(dup), ConfigError);
}

TEST(Config, BinaryModeDropsClassTwo) {
    PipelineConfig c;
    c.margin_mode = MarginMode::binary;
    const auto table = c.margin_table();
    for (const auto& r : table.rules()) {
        if (r.polarity == Polarity::positive) {
            EXPECT_EQ(r.mu, 0.0);
        } else {
            EXPECT_NE(r.class_id, 2);
            EXPECT_EQ(r.mu, c.binary_margins.negative_mu);
        }
    }
}

TEST(Config, SeedPlanDerivesDistinctStreams) {
    const auto s = seed_plan(7);
    EXPECT_EQ(s.root, 7u);
    EXPECT_EQ(s.synth, 7u);
    EXPECT_EQ(s.split, derive_seed(7, "split"));
    EXPECT_EQ(s.train, derive_seed(7, "train"));
    EXPECT_NE(s.init, s.sampler);
    PipelineConfig c;
    c.seed = 11;
    EXPECT_EQ(c.synth_spec().seed, 11u);
    EXPECT_EQ(c.train_config().seed, derive_seed(11, "train"));
    EXPECT_EQ(c.sampler_config().seed, derive_seed(11, "sampler"));
}

TEST(Config, EnvironmentOverridesPaths) {
    PipelineConfig c;
    ::setenv("KBDR_KB", "/tmp/x/kb.tsv", 1);
    ::setenv("KBDR_WORK_DIR", "/tmp/x/work", 1);
    apply_env_overrides(c);
    ::unsetenv("KBDR_KB");
    ::unsetenv("KBDR_WORK_DIR");
    EXPECT_EQ(c.paths.kb, std::filesystem::path("/tmp/x/kb.tsv"));
    EXPECT_EQ(c.paths.work_dir, std::filesystem::path("/tmp/x/work"));
    EXPECT_FALSE(c.paths.corpus.has_value());
}

TEST(Config, LoadFromFile) {
    const auto path = std::filesystem::temp_directory_path() / "kbdr_config_test.json";
    {
        std::ofstream out(path);
        out << R"({"seed": 3, "train": {"epochs": 2}})";
    }
    const auto c = load_config(path);
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.train.epochs, 2u);
    {
        std::ofstream out(path);
        out << "{not json";
    }
    EXPECT_THROW(load_config(path), ConfigError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_config(path), ConfigError);
}

TEST(Config, ShippedDefaultMatchesBuiltIn) {
    const auto shipped = load_config(std::filesystem::path(KBDR_SOURCE_DIR) / "configs" / "default.json");
    EXPECT_EQ(config_to_json(shipped), config_to_json(PipelineConfig{}));
}
