#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbdr/kbdata.hpp"

namespace kbdr {

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const ScoredDoc&) const = default;
};

/// Ordered (doc_id, score) pairs, best first.
using RankedList = std::vector<ScoredDoc>;

/// Sorts by descending score, ties by ascending doc_id.
void sort_ranked(RankedList& list);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    void validate() const;
};

/// BM25 inverted index over `lexical_text` of each document.
class InvertedIndex {
public:
    struct Posting {
        std::uint32_t doc = 0;
        std::uint32_t tf = 0;
    };

    InvertedIndex() = default;
    static InvertedIndex build(const Corpus& corpus, Bm25Params params = {});

    const Bm25Params& params() const { return params_; }
    std::size_t doc_count() const { return doc_ids_.size(); }
    std::size_t term_count() const { return postings_.size(); }
    const std::string& doc_id(std::uint32_t doc) const { return doc_ids_[doc]; }
    std::uint32_t doc_length(std::uint32_t doc) const { return doc_lengths_[doc]; }
    double average_length() const { return avg_length_; }
    /// Number of documents containing `term` (its posting-list length).
    std::size_t document_frequency(const std::string& term) const;
    const std::vector<Posting>* postings(const std::string& term) const;

    /// ln((N - df + 0.5) / (df + 0.5) + 1)
    double idf(const std::string& term) const;

    /// Every document sharing a distinct query term, scored and sorted.
    RankedList score_all(const std::string& query_text) const;

    void save(std::ostream& out) const;
    static InvertedIndex load(std::istream& in, const std::string& source = "<bm25>");
    void save(const std::filesystem::path& path) const;
    static InvertedIndex load(const std::filesystem::path& path);

private:
    Bm25Params params_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_length_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

/// Top-k by BM25; an empty query yields an empty list.
RankedList bm25_search(const InvertedIndex& index, const std::string& query_text, std::size_t k);

/// Best BM25 hits for the query text that mention the query's first entity
/// and are not in `exclude`.
std::vector<std::string> bm25_negatives(const InvertedIndex& index, const Corpus& corpus,
                                        const Query& query, const std::set<std::string>& exclude,
                                        std::size_t limit);

}  // namespace kbdr
