#include "kbdr/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "kbdr/error.hpp"
#include "kbdr/matching.hpp"

namespace kbdr {

using nlohmann::json;

namespace {
constexpr const char* index_format = "kbdr-bm25";
constexpr int index_version = 1;
}  // namespace

void sort_ranked(RankedList& list) {
    std::sort(list.begin(), list.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
}

void Bm25Params::validate() const {
    if (!(k1 >= 0.0)) throw ConfigError("bm25 k1 must be >= 0");
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("bm25 b must lie in [0, 1]");
}

InvertedIndex InvertedIndex::build(const Corpus& corpus, Bm25Params params) {
    params.validate();
    InvertedIndex index;
    index.params_ = params;
    double total = 0.0;
    corpus.for_each([&](const Document& doc, const TokenizedText&) {
        const auto doc_no = static_cast<std::uint32_t>(index.doc_ids_.size());
        const auto tokens = tokenize(lexical_text(doc));
        std::map<std::string, std::uint32_t> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) index.postings_[term].push_back({doc_no, count});
        index.doc_ids_.push_back(doc.doc_id);
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += static_cast<double>(tokens.size());
    });
    index.avg_length_ = index.doc_ids_.empty() ? 0.0 : total / static_cast<double>(index.doc_ids_.size());
    return index;
}

std::size_t InvertedIndex::document_frequency(const std::string& term) const {
    const auto* list = postings(term);
    return list ? list->size() : 0;
}

const std::vector<InvertedIndex::Posting>* InvertedIndex::postings(const std::string& term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

double InvertedIndex::idf(const std::string& term) const {
    const double n = static_cast<double>(doc_count());
    const double df = static_cast<double>(document_frequency(term));
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

RankedList InvertedIndex::score_all(const std::string& query_text) const {
    auto terms = tokenize(query_text);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    std::vector<double> scores(doc_count(), 0.0);
    std::vector<bool> hit(doc_count(), false);
    const double k1 = params_.k1;
    const double b = params_.b;
    for (const auto& term : terms) {
        const auto* list = postings(term);
        if (!list) continue;
        const double w = idf(term);
        for (const auto& p : *list) {
            const double tf = p.tf;
            const double norm = avg_length_ > 0.0 ? doc_lengths_[p.doc] / avg_length_ : 0.0;
            scores[p.doc] += w * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
            hit[p.doc] = true;
        }
    }
    RankedList out;
    for (std::uint32_t d = 0; d < doc_count(); ++d) {
        if (hit[d]) out.push_back({doc_ids_[d], scores[d]});
    }
    sort_ranked(out);
    return out;
}

void InvertedIndex::save(std::ostream& out) const {
    json j;
    j["format"] = index_format;
    j["version"] = index_version;
    j["k1"] = params_.k1;
    j["b"] = params_.b;
    j["doc_ids"] = doc_ids_;
    j["doc_lengths"] = doc_lengths_;
    // Sorted keys keep the file byte-stable.
    std::map<std::string, const std::vector<Posting>*> sorted;
    for (const auto& [term, list] : postings_) sorted.emplace(term, &list);
    json terms = json::object();
    for (const auto& [term, list] : sorted) {
        json entries = json::array();
        for (const auto& p : *list) entries.push_back({p.doc, p.tf});
        terms[term] = std::move(entries);
    }
    j["postings"] = std::move(terms);
    out << j.dump() << '\n';
}

InvertedIndex InvertedIndex::load(std::istream& in, const std::string& source) {
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(source + ": invalid BM25 index: " + e.what());
    }
    if (j.value("format", "") != index_format) throw DataError(source + ": not a BM25 index file");
    if (j.value("version", 0) != index_version) {
        throw DataError(source + ": unsupported BM25 index version");
    }
    InvertedIndex index;
    try {
        index.params_ = {j.at("k1").get<double>(), j.at("b").get<double>()};
        index.doc_ids_ = j.at("doc_ids").get<std::vector<std::string>>();
        index.doc_lengths_ = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
        for (const auto& [term, entries] : j.at("postings").items()) {
            auto& list = index.postings_[term];
            for (const auto& e : entries) list.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>()});
        }
    } catch (const json::exception& e) {
        throw DataError(source + ": malformed BM25 index: " + e.what());
    }
    if (index.doc_ids_.size() != index.doc_lengths_.size()) {
        throw DataError(source + ": document table size mismatch");
    }
    double total = 0.0;
    for (auto len : index.doc_lengths_) total += len;
    index.avg_length_ = index.doc_ids_.empty() ? 0.0 : total / static_cast<double>(index.doc_ids_.size());
    return index;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    save(out);
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return load(in, path.string());
}

RankedList bm25_search(const InvertedIndex& index, const std::string& query_text, std::size_t k) {
    if (k == 0) throw ConfigError("bm25_search: k must be >= 1");
    auto ranked = index.score_all(query_text);
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

std::vector<std::string> bm25_negatives(const InvertedIndex& index, const Corpus& corpus,
                                        const Query& query, const std::set<std::string>& exclude,
                                        std::size_t limit) {
    std::vector<std::string> out;
    if (limit == 0 || query.query_entities.empty()) return out;
    const EntityRef& head = query.query_entities.front();
    for (const auto& hit : index.score_all(query.rendered_text)) {
        if (out.size() >= limit) break;
        if (exclude.count(hit.doc_id)) continue;
        const auto* tokens = corpus.tokens(hit.doc_id);
        if (tokens && text_match(head, *tokens)) out.push_back(hit.doc_id);
    }
    return out;
}

}  // namespace kbdr
