#include "kbdr/pipeline.hpp"

#include <fstream>

#include "kbdr/error.hpp"

namespace kbdr {

std::vector<Query> Dataset::queries_in(Split which) const {
    std::vector<Query> out;
    for (const auto& q : queries) {
        if (split.of(q) == which) out.push_back(q);
    }
    return out;
}

Dataset make_dataset(RelationSchema schema, SynonymTable synonyms, KbParseResult kb, Corpus corpus,
                     const SplitRatios& ratios, std::uint64_t seed) {
    Dataset d;
    d.schema = std::move(schema);
    d.synonyms = std::move(synonyms);
    d.kb = std::move(kb);
    d.corpus = std::move(corpus);
    d.queries = build_queries(d.kb.records, d.schema, d.synonyms);
    if (d.queries.empty()) throw DataError("KB yields no queries");
    d.split = split_dataset(d.queries, ratios, seed);
    return d;
}

Dataset load_dataset(const RelationSchema& schema, const std::filesystem::path& kb,
                     const std::filesystem::path& corpus, const std::optional<std::filesystem::path>& synonyms,
                     const SplitRatios& ratios, std::uint64_t seed) {
    auto table = synonyms ? SynonymTable::load(*synonyms) : SynonymTable{};
    auto records = parse_kb(kb, schema, table);
    auto docs = parse_corpus(corpus);
    return make_dataset(schema, std::move(table), std::move(records), std::move(docs), ratios, seed);
}

Dataset dataset_from_bundle(const SynthBundle& bundle, const SplitRatios& ratios, std::uint64_t seed) {
    KbParseResult kb;
    for (const auto& r : bundle.records) {
        (r.has_answer() ? kb.records : kb.answerless).push_back(r);
    }
    return make_dataset(bundle.schema, bundle.synonyms, std::move(kb), bundle.corpus, ratios, seed);
}

TextLookup make_text_lookup(const std::vector<Query>& queries, const Corpus& corpus) {
    TextLookup texts;
    for (const auto& q : queries) texts.query_text.emplace(q.query_id, q.rendered_text);
    corpus.for_each([&](const Document& doc, const TokenizedText&) { texts.doc_text.emplace(doc.doc_id, dense_text(doc)); });
    return texts;
}

Run dense_run(const EncoderModel& model, const VectorIndex& index, const std::vector<Query>& queries,
              std::size_t k) {
    Run run;
    for (const auto& q : queries) {
        run[q.query_id] = index_search(index, model.encode(q.rendered_text), k);
    }
    return run;
}

Run bm25_run(const InvertedIndex& index, const std::vector<Query>& queries, std::size_t k) {
    Run run;
    for (const auto& q : queries) run[q.query_id] = bm25_search(index, q.rendered_text, k);
    return run;
}

const char* to_string(MarginMode mode) { return mode == MarginMode::multi ? "multi" : "binary"; }

MarginMode parse_margin_mode(std::string_view name) {
    if (name == "multi") return MarginMode::multi;
    if (name == "binary") return MarginMode::binary;
    throw ConfigError("unknown margin mode '" + std::string(name) + "'");
}

MarginClassTable select_margin_table(const MarginClassTable& layered, MarginMode mode,
                                     const BinaryMargins& binary) {
    if (mode == MarginMode::multi) return layered;
    return layered.binary(binary.positive_mu, binary.negative_mu, binary.dropped_negative_classes);
}

}  // namespace kbdr
