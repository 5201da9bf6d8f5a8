#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "kbdr/error.hpp"
#include "kbdr/eval.hpp"
#include "kbdr/random.hpp"

using namespace kbdr;

namespace {

RankedList ranked(std::vector<std::string> ids) {
    RankedList out;
    double s = static_cast<double>(ids.size());
    for (auto& id : ids) out.push_back({std::move(id), s--});
    return out;
}

// Definition-level scorers: walk the first k ranks, nothing shared with the library.
double brute_ndcg(const std::vector<std::string>& ids, const std::set<std::string>& gold, std::size_t k) {
    double dcg = 0.0, ideal = 0.0;
    for (std::size_t i = 0; i < ids.size() && i < k; ++i) {
        if (gold.count(ids[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    for (std::size_t i = 0; i < gold.size() && i < k; ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / ideal;
}

double brute_map(const std::vector<std::string>& ids, const std::set<std::string>& gold, std::size_t k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < ids.size() && i < k; ++i) {
        if (!gold.count(ids[i])) continue;
        std::size_t rel = 0;
        for (std::size_t j = 0; j <= i; ++j) rel += gold.count(ids[j]);
        sum += static_cast<double>(rel) / static_cast<double>(i + 1);
    }
    return sum / static_cast<double>(std::min(gold.size(), k));
}

Query smo_query() {
    const auto kb = fixtures::smo_kb();
    return build_queries(kb.records, precision_oncology_schema(), fixtures::smo_synonyms()).front();
}

}  // namespace

TEST(Ndcg, Examples) {
    EXPECT_DOUBLE_EQ(ndcg_at_k(ranked({"a", "b"}), {"a"}, 10), 1.0);
    EXPECT_NEAR(ndcg_at_k(ranked({"b", "a"}), {"a"}, 10), 1.0 / std::log2(3.0), 1e-12);
    EXPECT_NEAR(ndcg_at_k(ranked({"b", "a"}), {"a"}, 10), 0.6309, 1e-4);
    EXPECT_EQ(ndcg_at_k(ranked({"b", "c"}), {"a"}, 10), 0.0);
    EXPECT_EQ(ndcg_at_k(ranked({"b", "a"}), {"a"}, 1), 0.0);
    EXPECT_THROW(ndcg_at_k(ranked({"a"}), {}, 10), DataError);
}

TEST(Map, Examples) {
    EXPECT_DOUBLE_EQ(map_at_k(ranked({"a"}), {"a"}, 10), 1.0);
    EXPECT_NEAR(map_at_k(ranked({"x", "y", "a"}), {"a"}, 10), 1.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(map_at_k(ranked({"a", "b", "c"}), {"a", "b"}, 10), 1.0);
    // More golds than k can still reach 1.
    EXPECT_DOUBLE_EQ(map_at_k(ranked({"a", "b"}), {"a", "b", "c"}, 2), 1.0);
}

TEST(Metrics, RandomInstancesMatchBruteForce) {
    Rng rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = rng.uniform_index(11);
        std::vector<std::string> pool;
        for (std::size_t i = 0; i < 12; ++i) pool.push_back("d" + std::to_string(i));
        rng.shuffle(pool);
        std::vector<std::string> ids(pool.begin(), pool.begin() + static_cast<long>(n));
        std::set<std::string> gold;
        const std::size_t golds = 1 + rng.uniform_index(3);
        while (gold.size() < golds) gold.insert(pool[rng.uniform_index(pool.size())]);
        const std::size_t k = 1 + rng.uniform_index(12);
        const auto list = ranked(ids);
        EXPECT_EQ(ndcg_at_k(list, gold, k), brute_ndcg(ids, gold, k));
        EXPECT_EQ(map_at_k(list, gold, k), brute_map(ids, gold, k));
    }
}

TEST(Metrics, BelowCutoffPermutationIrrelevant) {
    const std::set<std::string> gold = {"c", "f"};
    const auto a = ranked({"a", "b", "c", "d", "e", "f"});
    const auto b = ranked({"a", "b", "c", "f", "e", "d"});
    EXPECT_EQ(ndcg_at_k(a, gold, 3), ndcg_at_k(b, gold, 3));
    EXPECT_EQ(map_at_k(a, gold, 3), map_at_k(b, gold, 3));
}

TEST(EntityRecall, AnswerAndGeneTogether) {
    const auto corpus = fixtures::smo_corpus();
    const auto q = smo_query();
    EXPECT_DOUBLE_EQ(entity_recall_at_k(ranked({"26822128"}), q, corpus, 10), 1.0);
}

TEST(EntityRecall, AnswerWithoutGeneCountsNothing) {
    Corpus corpus;
    corpus.add({"1", "", "the patient responded to vismodegib"});
    corpus.add({"2", "", "SMO signalling without any drug"});
    EXPECT_DOUBLE_EQ(entity_recall_at_k(ranked({"1", "2"}), smo_query(), corpus, 10), 0.0);
}

TEST(EntityRecall, NoAnswerMentioned) {
    const auto corpus = fixtures::smo_corpus();
    EXPECT_DOUBLE_EQ(entity_recall_at_k(ranked({"25759020", "22798288"}), smo_query(), corpus, 10), 0.0);
}

TEST(EntityRecall, SynonymsCount) {
    Corpus corpus;
    corpus.add({"1", "", "Smoothened mutant tumour treated with GDC-0449"});
    EXPECT_DOUBLE_EQ(entity_recall_at_k(ranked({"1"}), smo_query(), corpus, 10), 1.0);
}

TEST(EntityRecall, CutoffMatters) {
    const auto corpus = fixtures::smo_corpus();
    const auto list = ranked({"25759020", "22798288", "26822128"});
    EXPECT_DOUBLE_EQ(entity_recall_at_k(list, smo_query(), corpus, 2), 0.0);
    EXPECT_DOUBLE_EQ(entity_recall_at_k(list, smo_query(), corpus, 3), 1.0);
}

TEST(EntityRecall, FractionOfAnswers) {
    auto q = smo_query();
    SynonymTable t;
    q.answer_entities.push_back(t.resolve("Treatment", "Sonidegib"));
    const auto corpus = fixtures::smo_corpus();
    EXPECT_DOUBLE_EQ(entity_recall_at_k(ranked({"26822128"}), q, corpus, 10), 0.5);
}

TEST(EvaluateRun, PerfectRun) {
    const auto kb = fixtures::smo_kb();
    const auto corpus = fixtures::smo_corpus();
    const auto qs = build_queries(kb.records, precision_oncology_schema(), fixtures::smo_synonyms());
    kbdr::Run run;
    for (const auto& q : qs) {
        std::vector<std::string> ids(q.gold_doc_ids.begin(), q.gold_doc_ids.end());
        run[q.query_id] = ranked(ids);
    }
    const auto r = evaluate_run(run, qs, corpus, {10, 50});
    EXPECT_DOUBLE_EQ(r.mean("ndcg@10"), 100.0);
    EXPECT_DOUBLE_EQ(r.mean("map@10"), 100.0);
    EXPECT_EQ(r.means.size(), 6u);
}

TEST(EvaluateRun, ReversedPerfectTwoQueries) {
    Corpus corpus;
    for (const char* id : {"a", "b", "c", "d"}) corpus.add({id, "", "text"});
    Query q1;
    q1.query_id = "q1";
    q1.gold_doc_ids = {"a"};
    Query q2;
    q2.query_id = "q2";
    q2.gold_doc_ids = {"c", "d"};
    kbdr::Run run;
    run["q1"] = ranked({"d", "c", "b", "a"});
    run["q2"] = ranked({"b", "a", "d", "c"});
    const auto r = evaluate_run(run, {q1, q2}, corpus, {10});
    // q1: gold at rank 4. q2: golds at ranks 3 and 4.
    const double ndcg1 = 1.0 / std::log2(5.0);
    const double ndcg2 = (1.0 / 2.0 + 1.0 / std::log2(5.0)) / (1.0 + 1.0 / std::log2(3.0));
    const double map1 = 0.25;
    const double map2 = (1.0 / 3.0 + 2.0 / 4.0) / 2.0;
    EXPECT_NEAR(r.mean("ndcg@10"), 50.0 * (ndcg1 + ndcg2), 1e-9);
    EXPECT_NEAR(r.mean("map@10"), 50.0 * (map1 + map2), 1e-9);
    EXPECT_EQ(r.mean("entity_recall@10"), 0.0);
}

TEST(EvaluateRun, MissingRunAndMissingGold) {
    Corpus corpus;
    corpus.add({"a", "", "x"});
    Query q1;
    q1.query_id = "q1";
    q1.gold_doc_ids = {"a"};
    Query q2;
    q2.query_id = "q2";
    q2.gold_doc_ids = {"zzz"};
    const auto r = evaluate_run({}, {q1, q2}, corpus, {10});
    EXPECT_EQ(r.missing_runs, std::vector<std::string>{"q1"});
    EXPECT_EQ(r.skipped, std::vector<std::string>{"q2"});
    EXPECT_EQ(r.per_query.size(), 1u);
    EXPECT_EQ(r.mean("ndcg@10"), 0.0);
}

TEST(RunFile, RoundTripAndErrors) {
    kbdr::Run run;
    run["q1"] = {{"a", 0.9}, {"b", 0.5}};
    run["q2"] = {{"c", 12.25}};
    std::ostringstream out;
    write_run(out, run);
    std::istringstream in(out.str());
    const auto back = read_run(in);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.at("q1")[1].doc_id, "b");
    EXPECT_DOUBLE_EQ(back.at("q2")[0].score, 12.25);
    std::istringstream bad("q1\ta\t1\n");
    EXPECT_THROW(read_run(bad), ParseError);
}

TEST(Report, JsonAndCsv) {
    Corpus corpus;
    corpus.add({"a", "", "x"});
    Query q;
    q.query_id = "q1";
    q.gold_doc_ids = {"a"};
    const auto r = evaluate_run({{"q1", ranked({"a"})}}, {q}, corpus, {10, 50});
    std::ostringstream js, csv;
    write_report_json(js, r);
    write_report_csv(csv, r);
    EXPECT_NE(js.str().find("\"ndcg@10\""), std::string::npos);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
              "query_id,ndcg@10,map@10,entity_recall@10,ndcg@50,map@50,entity_recall@50");
}
