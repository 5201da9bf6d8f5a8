#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kbdr/kbdata.hpp"
#include "kbdr/matching.hpp"

namespace kbdr {

/// Knobs of the synthetic precision-oncology generator.
struct SynthSpec {
    std::size_t genes = 50;
    std::size_t variants_per_gene = 3;
    std::size_t answers_per_query = 3;
    std::size_t corpus_size = 2000;
    std::size_t vocab_size = 300;
    /// Fraction of KB-referenced documents that omit at least one entity.
    double noise_rate = 0.8;
    std::uint64_t seed = 7;

    std::size_t treatment_pool = 40;
    /// Chance that a (gene, variant) pair also gets a record without treatment.
    double answerless_rate = 0.5;
    /// Chance that an unreferenced document mentions some gene in passing.
    double background_mention_rate = 0.15;
    /// Slots (Gene, Variant, Treatment) that noise may remove.
    std::array<bool, 3> noisy_slots = {true, true, true};

    void validate() const;
};

struct SynthBundle {
    RelationSchema schema;
    std::vector<KbRecord> records;  ///< KB file order; answerless records included
    Corpus corpus;
    SynonymTable synonyms;
    std::map<std::string, std::set<std::string>> qrels;  ///< query_id -> gold docs
    std::map<std::string, MatchPattern> planted;         ///< doc_id -> intended g-pattern
};

SynthBundle generate(const SynthSpec& spec);

/// Writes kb.tsv, corpus.jsonl, synonyms.tsv and qrels.tsv into `dir`.
void write_bundle(const SynthBundle& bundle, const std::filesystem::path& dir);

}  // namespace kbdr
