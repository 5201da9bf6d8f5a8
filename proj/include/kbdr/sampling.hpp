#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbdr/kbdata.hpp"
#include "kbdr/lexical.hpp"
#include "kbdr/matching.hpp"

namespace kbdr {

/// One (query, document) pair with its label and margin. `anchor_doc_id` is
/// the positive document a negative was mined for (a positive's own doc_id).
struct TrainingExample {
    std::string query_id;
    std::string doc_id;
    std::string anchor_doc_id;
    int label = 0;
    double mu = 0.0;
    int class_id = 0;
    SampleSource source = SampleSource::kb;

    bool operator==(const TrainingExample&) const = default;
};

struct SamplerConfig {
    std::size_t per_class_cap = 50;
    std::uint64_t seed = 7;
    std::size_t random_pool_size = 200;  ///< corpus draws offered to the random class
    std::size_t bm25_pool_size = 100;    ///< BM25 hits offered to the BM25 class

    void validate() const;
};

struct PositiveSet {
    std::vector<TrainingExample> examples;
    std::size_t skipped_unresolved = 0;  ///< records whose document is missing
};

/// One positive per (query, referenced document), margin from the g-pattern
/// of the query entities plus every answer recorded for that document.
PositiveSet build_positives(const RelationSchema& schema, const std::vector<KbRecord>& records,
                            const Corpus& corpus, const MarginClassTable& table);

/// Candidate negatives of one query, per class, before the per-positive draw.
struct CandidatePool {
    struct Candidate {
        std::string doc_id;
        SampleSource source = SampleSource::kb;
    };
    std::map<int, std::vector<Candidate>> by_class;
    std::set<std::string> random_excluded;  ///< docs of any record sharing e1, plus gold
};

/// Mines class-balanced negatives. Record g-patterns and an e1 -> record map
/// are computed once; KB and BM25 candidates are computed once per query.
class NegativeMiner {
public:
    NegativeMiner(const MarginClassTable& table, const std::vector<KbRecord>& records,
                  const std::vector<KbRecord>& answerless, const Corpus& corpus,
                  const InvertedIndex* bm25, SamplerConfig config);

    CandidatePool candidates(const Query& query) const;

    /// Draws min(m, |candidates|) per class without replacement using a
    /// generator seeded from (seed, query_id, anchor doc).
    std::vector<TrainingExample> mine(const TrainingExample& positive, const Query& query,
                                      const CandidatePool& pool) const;
    std::vector<TrainingExample> mine(const TrainingExample& positive, const Query& query) const;

private:
    struct RecordView {
        const KbRecord* record;
        MatchPattern own_g;
    };

    const MarginClassTable& table_;
    const Corpus& corpus_;
    const InvertedIndex* bm25_;
    SamplerConfig config_;
    std::vector<RecordView> records_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_head_;
    std::vector<std::string> corpus_ids_;
};

struct TrainingSet {
    std::vector<TrainingExample> examples;
    std::size_t skipped_unresolved = 0;
    std::map<int, std::size_t> positive_histogram;
    std::map<int, std::size_t> negative_histogram;
};

/// Positives of `queries` followed, per positive, by its mined negatives.
TrainingSet build_training_set(const RelationSchema& schema, const std::vector<Query>& queries,
                               const KbParseResult& kb, const Corpus& corpus,
                               const MarginClassTable& table, const InvertedIndex* bm25,
                               const SamplerConfig& config);

struct AuditReport {
    std::size_t negatives = 0;
    std::vector<std::string> slot_names;     ///< query slots
    std::vector<std::size_t> slot_mentions;  ///< negatives whose doc mentions that query entity

    double fraction(std::size_t slot) const;
};

/// How often a negative's document mentions the paired query's entities.
AuditReport audit_negatives(const std::vector<TrainingExample>& examples,
                            const std::vector<Query>& queries, const Corpus& corpus,
                            const RelationSchema& schema);

/// Groups each positive with its own negatives (round-robin across classes
/// after a per-class shuffle), orders groups by `seed`, and cuts each group
/// into batches of at most `batch_size`.
std::vector<std::vector<TrainingExample>> assemble_batches(
    const std::vector<TrainingExample>& examples, std::size_t batch_size, std::uint64_t seed);

void write_examples(std::ostream& out, const std::vector<TrainingExample>& examples);
std::vector<TrainingExample> read_examples(std::istream& in, const std::string& source = "<examples>");

}  // namespace kbdr
