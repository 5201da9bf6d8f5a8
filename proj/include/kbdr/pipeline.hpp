#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kbdr/encoder.hpp"
#include "kbdr/eval.hpp"
#include "kbdr/kbdata.hpp"
#include "kbdr/lexical.hpp"
#include "kbdr/matching.hpp"
#include "kbdr/sampling.hpp"
#include "kbdr/synthkit.hpp"
#include "kbdr/vindex.hpp"

namespace kbdr {

/// Parsed KB and corpus with queries and their split.
struct Dataset {
    RelationSchema schema;
    SynonymTable synonyms;
    KbParseResult kb;
    Corpus corpus;
    std::vector<Query> queries;
    SplitAssignment split;

    std::vector<Query> queries_in(Split which) const;
};

Dataset make_dataset(RelationSchema schema, SynonymTable synonyms, KbParseResult kb, Corpus corpus,
                     const SplitRatios& ratios, std::uint64_t seed);
Dataset load_dataset(const RelationSchema& schema, const std::filesystem::path& kb,
                     const std::filesystem::path& corpus, const std::optional<std::filesystem::path>& synonyms,
                     const SplitRatios& ratios, std::uint64_t seed);
/// Re-parses the bundle's records through the KB reader's record filter.
Dataset dataset_from_bundle(const SynthBundle& bundle, const SplitRatios& ratios, std::uint64_t seed);

/// Rendered query text and `dense_text` for every document.
TextLookup make_text_lookup(const std::vector<Query>& queries, const Corpus& corpus);

Run dense_run(const EncoderModel& model, const VectorIndex& index, const std::vector<Query>& queries,
              std::size_t k);
Run bm25_run(const InvertedIndex& index, const std::vector<Query>& queries, std::size_t k);

/// Margin table for the configured mode: the layered table or its binary
/// ablation (positives `binary_positive_mu`, negatives `binary_negative_mu`).
enum class MarginMode { multi, binary };
const char* to_string(MarginMode mode);
MarginMode parse_margin_mode(std::string_view name);

struct BinaryMargins {
    double positive_mu = 0.0;
    double negative_mu = 0.8;
    std::vector<int> dropped_negative_classes = {2};
};

MarginClassTable select_margin_table(const MarginClassTable& layered, MarginMode mode,
                                     const BinaryMargins& binary);

}  // namespace kbdr
