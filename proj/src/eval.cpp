#include "kbdr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

#include "kbdr/error.hpp"
#include "kbdr/matching.hpp"

namespace kbdr {

using nlohmann::json;

double ndcg_at_k(std::span<const ScoredDoc> ranked, const std::set<std::string>& gold, std::size_t k) {
    if (gold.empty()) throw DataError("ndcg: empty gold set");
    if (k == 0) throw ConfigError("ndcg: k must be >= 1");
    double dcg = 0.0;
    std::unordered_set<std::string> seen;
    std::size_t rank = 0;
    for (const auto& doc : ranked) {
        if (rank >= k) break;
        if (!seen.insert(doc.doc_id).second) continue;
        ++rank;
        if (gold.count(doc.doc_id)) dcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
    }
    double ideal = 0.0;
    for (std::size_t r = 1; r <= std::min(gold.size(), k); ++r) ideal += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    return dcg / ideal;
}

double map_at_k(std::span<const ScoredDoc> ranked, const std::set<std::string>& gold, std::size_t k) {
    if (gold.empty()) throw DataError("map: empty gold set");
    if (k == 0) throw ConfigError("map: k must be >= 1");
    double sum = 0.0;
    std::size_t hits = 0;
    std::unordered_set<std::string> seen;
    std::size_t rank = 0;
    for (const auto& doc : ranked) {
        if (rank >= k) break;
        if (!seen.insert(doc.doc_id).second) continue;
        ++rank;
        if (gold.count(doc.doc_id)) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(rank);
        }
    }
    return sum / static_cast<double>(std::min(gold.size(), k));
}

double entity_recall_at_k(std::span<const ScoredDoc> ranked, const Query& query, const Corpus& corpus,
                          std::size_t k) {
    if (query.answer_entities.empty()) throw DataError("entity recall: query " + query.query_id + " has no answers");
    if (query.query_entities.empty()) throw DataError("entity recall: query " + query.query_id + " has no entities");
    const EntityRef& head = query.query_entities.front();
    std::vector<bool> found(query.answer_entities.size(), false);
    std::unordered_set<std::string> seen;
    std::size_t rank = 0;
    for (const auto& doc : ranked) {
        if (rank >= k) break;
        if (!seen.insert(doc.doc_id).second) continue;
        ++rank;
        const auto* tokens = corpus.tokens(doc.doc_id);
        if (!tokens || !text_match(head, *tokens)) continue;
        for (std::size_t a = 0; a < found.size(); ++a) {
            if (!found[a] && text_match(query.answer_entities[a], *tokens)) found[a] = true;
        }
    }
    const auto hits = static_cast<double>(std::count(found.begin(), found.end(), true));
    return hits / static_cast<double>(found.size());
}

std::string metric_key(const std::string& metric, std::size_t k) { return metric + "@" + std::to_string(k); }

double EvalReport::mean(const std::string& metric) const {
    const auto it = means.find(metric);
    if (it == means.end()) throw DataError("report has no metric " + metric);
    return it->second;
}

EvalReport evaluate_run(const Run& run, const std::vector<Query>& queries, const Corpus& corpus,
                        const std::vector<std::size_t>& cutoffs) {
    EvalReport report;
    report.cutoffs = cutoffs;
    const std::vector<std::string> names = {"ndcg", "map", "entity_recall"};
    for (const auto& q : queries) {
        std::set<std::string> gold;
        for (const auto& d : q.gold_doc_ids) {
            if (corpus.contains(d)) gold.insert(d);
        }
        if (gold.empty()) {
            report.skipped.push_back(q.query_id);
            continue;
        }
        QueryEval qe;
        qe.query_id = q.query_id;
        const auto it = run.find(q.query_id);
        if (it == run.end()) {
            qe.missing_run = true;
            report.missing_runs.push_back(q.query_id);
        }
        const RankedList empty;
        const RankedList& ranked = it == run.end() ? empty : it->second;
        for (std::size_t k : cutoffs) {
            qe.metrics[metric_key("ndcg", k)] = ndcg_at_k(ranked, gold, k);
            qe.metrics[metric_key("map", k)] = map_at_k(ranked, gold, k);
            qe.metrics[metric_key("entity_recall", k)] =
                q.answer_entities.empty() ? 0.0 : entity_recall_at_k(ranked, q, corpus, k);
        }
        report.per_query.push_back(std::move(qe));
    }
    for (std::size_t k : cutoffs) {
        for (const auto& name : names) {
            const auto key = metric_key(name, k);
            double sum = 0.0;
            for (const auto& qe : report.per_query) sum += qe.metrics.at(key);
            report.means[key] =
                report.per_query.empty() ? 0.0 : 100.0 * sum / static_cast<double>(report.per_query.size());
        }
    }
    return report;
}

void write_report_json(std::ostream& out, const EvalReport& report) {
    json j;
    j["cutoffs"] = report.cutoffs;
    j["queries_evaluated"] = report.per_query.size();
    j["metrics_percent"] = report.means;
    j["skipped_no_gold"] = report.skipped;
    j["missing_runs"] = report.missing_runs;
    j["per_query"] = json::array();
    for (const auto& qe : report.per_query) {
        json row = qe.metrics;
        row["query_id"] = qe.query_id;
        if (qe.missing_run) row["missing_run"] = true;
        j["per_query"].push_back(std::move(row));
    }
    out << j.dump(2) << '\n';
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
    std::vector<std::string> keys;
    for (std::size_t k : report.cutoffs) {
        for (const char* name : {"ndcg", "map", "entity_recall"}) keys.push_back(metric_key(name, k));
    }
    out << "query_id";
    for (const auto& k : keys) out << ',' << k;
    out << '\n';
    char buf[64];
    for (const auto& qe : report.per_query) {
        out << qe.query_id;
        for (const auto& k : keys) {
            std::snprintf(buf, sizeof(buf), ",%.6f", 100.0 * qe.metrics.at(k));
            out << buf;
        }
        out << '\n';
    }
    out << "mean";
    for (const auto& k : keys) {
        std::snprintf(buf, sizeof(buf), ",%.6f", report.means.at(k));
        out << buf;
    }
    out << '\n';
}

void write_run(std::ostream& out, const Run& run) {
    char buf[64];
    for (const auto& [qid, ranked] : run) {
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.9g", ranked[i].score);
            out << qid << '\t' << ranked[i].doc_id << '\t' << (i + 1) << '\t' << buf << '\n';
        }
    }
}

Run read_run(std::istream& in, const std::string& source) {
    struct Row {
        std::size_t rank;
        ScoredDoc doc;
    };
    std::map<std::string, std::vector<Row>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
            cells.push_back(line.substr(start, tab - start));
        }
        cells.push_back(line.substr(start));
        if (cells.size() != 4) throw ParseError(source, line_no, "expected 4 columns");
        Row row;
        try {
            std::size_t used = 0;
            const long rank = std::stol(cells[2], &used);
            if (used != cells[2].size() || rank < 1) throw std::invalid_argument("rank");
            row.rank = static_cast<std::size_t>(rank);
            row.doc = {cells[1], std::stod(cells[3])};
        } catch (const std::exception&) {
            throw ParseError(source, line_no, "bad rank or score");
        }
        rows[cells[0]].push_back(std::move(row));
    }
    Run run;
    for (auto& [qid, list] : rows) {
        std::stable_sort(list.begin(), list.end(), [](const Row& a, const Row& b) { return a.rank < b.rank; });
        auto& ranked = run[qid];
        std::unordered_set<std::string> seen;
        for (auto& r : list) {
            if (seen.insert(r.doc.doc_id).second) ranked.push_back(std::move(r.doc));
        }
    }
    return run;
}

}  // namespace kbdr
