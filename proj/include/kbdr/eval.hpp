#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kbdr/kbdata.hpp"
#include "kbdr/lexical.hpp"

namespace kbdr {

/// query_id -> ranked documents.
using Run = std::map<std::string, RankedList>;

/// Binary-gain NDCG: gain 1 per gold doc, discount 1/log2(rank + 1),
/// normalized by the ideal DCG at k. Throws DataError on an empty gold set.
double ndcg_at_k(std::span<const ScoredDoc> ranked, const std::set<std::string>& gold, std::size_t k);

/// Average precision over the top k, normalized by min(|gold|, k).
double map_at_k(std::span<const ScoredDoc> ranked, const std::set<std::string>& gold, std::size_t k);

/// Fraction of the query's answers found together with the query's first
/// entity (or synonyms) in a single top-k document.
double entity_recall_at_k(std::span<const ScoredDoc> ranked, const Query& query, const Corpus& corpus,
                          std::size_t k);

struct QueryEval {
    std::string query_id;
    bool missing_run = false;
    std::map<std::string, double> metrics;  ///< "ndcg@10" -> value in [0, 1]
};

struct EvalReport {
    std::vector<std::size_t> cutoffs;
    std::vector<QueryEval> per_query;
    std::map<std::string, double> means;    ///< percent
    std::vector<std::string> skipped;       ///< no gold document in the corpus
    std::vector<std::string> missing_runs;  ///< evaluated as all zeros

    double mean(const std::string& metric) const;
};

std::string metric_key(const std::string& metric, std::size_t k);

/// Scores every query in `queries`. Gold documents absent from the corpus
/// are dropped; a query left without gold is skipped and listed.
EvalReport evaluate_run(const Run& run, const std::vector<Query>& queries, const Corpus& corpus,
                        const std::vector<std::size_t>& cutoffs = {10, 50});

void write_report_json(std::ostream& out, const EvalReport& report);
void write_report_csv(std::ostream& out, const EvalReport& report);

/// TSV lines "query_id<TAB>doc_id<TAB>rank<TAB>score", rank 1-based.
void write_run(std::ostream& out, const Run& run);
Run read_run(std::istream& in, const std::string& source = "<run>");

}  // namespace kbdr
