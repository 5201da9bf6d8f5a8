#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "kbdr/error.hpp"
#include "kbdr/kbdata.hpp"
#include "kbdr/text.hpp"

using namespace kbdr;

TEST(Text, TokenizeLowercasesAndSplits) {
    EXPECT_EQ(tokenize("SMO L412F mutation"), (std::vector<std::string>{"smo", "l412f", "mutation"}));
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_EQ(tokenize("p.L412F"), (std::vector<std::string>{"p", "l412f"}));
    EXPECT_EQ(tokenize("  --a__b  "), (std::vector<std::string>{"a", "b"}));
}

TEST(Text, NormalizeCollapsesWhitespace) {
    EXPECT_EQ(normalize("  Basal   Cell\tCarcinoma "), "basal cell carcinoma");
    EXPECT_EQ(normalize(""), "");
}

TEST(Text, PhraseMatchRespectsTokenBoundaries) {
    const auto doc = tokenize_document("", "BRAF inhibitors");
    EXPECT_FALSE(doc.contains(tokenize("RAF")));
    EXPECT_TRUE(doc.contains(tokenize("braf")));
    const auto split = tokenize_document("ends with p", "L412F starts here");
    EXPECT_FALSE(split.contains(tokenize("p.L412F")));
}

TEST(Schema, BuiltinsValidate) {
    EXPECT_NO_THROW(precision_oncology_schema().validate());
    EXPECT_NO_THROW(ptm_schema().validate());
}

TEST(Schema, RejectsMissingOrRepeatedPlaceholder) {
    auto s = precision_oncology_schema();
    s.template_text = "Treatment for gene {Gene}?";
    EXPECT_THROW(s.validate(), ConfigError);
    s.template_text = "{Gene} {Gene} {Variant}";
    EXPECT_THROW(s.validate(), ConfigError);
    s = precision_oncology_schema();
    s.query_slots.clear();
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(ParseKb, ReadsSingleRecord) {
    const auto kb = fixtures::parse_kb_text("SMO\tL412F\tVismodegib\t26822128\n", precision_oncology_schema());
    ASSERT_EQ(kb.records.size(), 1u);
    const auto& r = kb.records[0];
    ASSERT_EQ(r.query_entities.size(), 2u);
    EXPECT_EQ(r.query_entities[0].canonical, "SMO");
    EXPECT_EQ(r.query_entities[1].canonical, "L412F");
    ASSERT_EQ(r.answers.size(), 1u);
    EXPECT_EQ(r.answers[0].canonical, "Vismodegib");
    EXPECT_EQ(r.doc_id, "26822128");
    EXPECT_EQ(kb.dropped_incomplete, 0u);
}

TEST(ParseKb, DropsRecordWithEmptyAnswer) {
    const auto kb = fixtures::parse_kb_text("SMO\tL412F\t\t26822128\nSMO\tL412F\tVismodegib\t1\n",
                                            precision_oncology_schema());
    EXPECT_EQ(kb.records.size(), 1u);
    EXPECT_EQ(kb.dropped_incomplete, 1u);
    ASSERT_EQ(kb.answerless.size(), 1u);
    EXPECT_EQ(kb.answerless[0].doc_id, "26822128");
}

TEST(ParseKb, EmptyFile) {
    const auto kb = fixtures::parse_kb_text("", precision_oncology_schema());
    EXPECT_TRUE(kb.records.empty());
    EXPECT_EQ(kb.dropped_incomplete, 0u);
}

TEST(ParseKb, WrongColumnCountNamesLine) {
    try {
        fixtures::parse_kb_text("SMO\tL412F\tVismodegib\t1\nSMO\tL412F\n", precision_oncology_schema());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(ParseKb, DuplicateRecordRejected) {
    EXPECT_THROW(fixtures::parse_kb_text("SMO\tL412F\tVismodegib\t1\nSMO\tL412F\tVismodegib\t1\n",
                                         precision_oncology_schema()),
                 ParseError);
}

TEST(ParseKb, SeveralAnswersInOneCell) {
    const auto kb = fixtures::parse_kb_text("EGFR\tT790M\tOsimertinib|Rociletinib\t9\n", precision_oncology_schema());
    ASSERT_EQ(kb.records.size(), 1u);
    EXPECT_EQ(kb.records[0].answers.size(), 2u);
}

TEST(ParseKb, RoundTripReproducesRetainedRecords) {
    const auto kb = fixtures::parse_kb_text(std::string(fixtures::smo_kb_tsv) + "KIT\tD816V\t\t5\n",
                                            precision_oncology_schema());
    std::ostringstream out;
    write_kb(out, kb.records);
    EXPECT_EQ(out.str(), fixtures::smo_kb_tsv);
}

TEST(ParseKb, SynonymsAttachToEntities) {
    const auto kb = fixtures::smo_kb();
    const auto& variant = kb.records[0].query_entities[1];
    EXPECT_NE(std::find(variant.synonyms.begin(), variant.synonyms.end(), "p.L412F"), variant.synonyms.end());
    EXPECT_NE(std::find(variant.synonyms.begin(), variant.synonyms.end(), "L412F"), variant.synonyms.end());
}

TEST(Synonyms, CanonicalIsOwnSynonymAndDeduplicated) {
    SynonymTable t;
    t.add("Gene", "SMO", "smo");
    t.add("Gene", "SMO", "Smoothened");
    t.add("Gene", "SMO", " smoothened ");
    const auto e = t.resolve("Gene", "SMO");
    EXPECT_EQ(e.synonyms.size(), 2u);
    EXPECT_EQ(e.entity_type, "Gene");
    const auto unknown = t.resolve("Gene", "TP53");
    EXPECT_EQ(unknown.synonyms, std::vector<std::string>{"TP53"});
}

TEST(Synonyms, ParseAndWriteRoundTrip) {
    std::istringstream in("Gene\tSMO\tSmoothened\nProtein\tAKT1\tRAC-alpha kinase\tfull_name\n");
    const auto t = SynonymTable::parse(in);
    EXPECT_EQ(t.full_name("Protein", "AKT1").value_or(""), "RAC-alpha kinase");
    std::ostringstream out;
    t.write(out);
    std::istringstream again(out.str());
    const auto t2 = SynonymTable::parse(again);
    EXPECT_EQ(t2.resolve("Gene", "SMO"), t.resolve("Gene", "SMO"));
    EXPECT_EQ(t2.full_name("Protein", "AKT1"), t.full_name("Protein", "AKT1"));
}

TEST(Synonyms, BadRowsRejected) {
    std::istringstream in("Gene\tSMO\n");
    EXPECT_THROW(SynonymTable::parse(in), ParseError);
}

TEST(ParseCorpus, ThreeDocuments) {
    const auto c = fixtures::parse_corpus_text(
        "{\"doc_id\":\"1\",\"title\":\"a\",\"abstract\":\"b\"}\n"
        "{\"doc_id\":\"2\",\"title\":\"c\",\"abstract\":\"d\"}\n"
        "{\"doc_id\":\"3\",\"title\":\"e\",\"abstract\":\"f\"}\n");
    EXPECT_EQ(c.size(), 3u);
}

TEST(ParseCorpus, DuplicateIdNamesTheId) {
    try {
        fixtures::parse_corpus_text("{\"doc_id\":\"7\",\"title\":\"a\",\"abstract\":\"b\"}\n"
                                    "{\"doc_id\":\"7\",\"title\":\"c\",\"abstract\":\"d\"}\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("7"), std::string::npos);
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(ParseCorpus, MissingFieldNamesLine) {
    try {
        fixtures::parse_corpus_text("{\"doc_id\":\"1\",\"title\":\"a\"}\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 1u);
    }
}

TEST(ParseCorpus, EmptyAbstractRoundTrips) {
    const std::string text = "{\"abstract\":\"\",\"doc_id\":\"1\",\"title\":\"Only a title\"}\n";
    const auto c = fixtures::parse_corpus_text(text);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c.find("1")->abstract_text, "");
    EXPECT_TRUE(c.tokens("1")->body.empty());
    std::ostringstream out;
    write_corpus(out, c);
    EXPECT_EQ(fixtures::parse_corpus_text(out.str()).find("1")->title, "Only a title");
}

TEST(Document, DenseAndLexicalViews) {
    const Document d{"1", "T", "A"};
    EXPECT_EQ(dense_text(d), "T [SEP] A");
    EXPECT_EQ(lexical_text(d), "T A");
}

TEST(RenderQuery, PrecisionOncologyTemplate) {
    const auto kb = fixtures::smo_kb();
    const auto q = render_query(kb.records[0], precision_oncology_schema());
    EXPECT_EQ(q.rendered_text, "Treatment for gene SMO and variant L412F?");
    EXPECT_EQ(q.gold_doc_ids, std::set<std::string>{"26822128"});
    ASSERT_EQ(q.answer_entities.size(), 1u);
    EXPECT_EQ(q.answer_entities[0].canonical, "Vismodegib");
}

TEST(RenderQuery, PtmTemplate) {
    const auto kb = fixtures::parse_kb_text("AKT1\tphosphorylation\tserine 473\tPDPK1\t1\n", ptm_schema());
    const auto q = render_query(kb.records[0], ptm_schema());
    EXPECT_EQ(q.rendered_text, "Catalysts for the phosphorylation of AKT1 at serine 473?");
}

TEST(RenderQuery, PtmAddsFullNameWhenKnown) {
    SynonymTable syn;
    syn.add("Protein", "AKT1", "RAC-alpha serine/threonine-protein kinase", true);
    const auto kb = fixtures::parse_kb_text("AKT1\tphosphorylation\tserine 473\tPDPK1\t1\n", ptm_schema(), syn);
    const auto q = render_query(kb.records[0], ptm_schema(), syn);
    EXPECT_EQ(q.rendered_text,
              "Catalysts for the phosphorylation of AKT1 (RAC-alpha serine/threonine-protein kinase) at serine 473?");
}

TEST(BuildQueries, MergesDuplicateTuples) {
    const auto kb = fixtures::smo_kb();
    const auto qs = build_queries(kb.records, precision_oncology_schema());
    ASSERT_EQ(qs.size(), 3u);
    EXPECT_EQ(qs[0].gold_doc_ids, (std::set<std::string>{"26822128", "25759020"}));
    EXPECT_EQ(qs[0].answer_entities.size(), 1u);
    EXPECT_EQ(qs[0].record_ids.size(), 2u);
    EXPECT_LE(qs.size(), kb.records.size());
}

TEST(BuildQueries, DistinctTuplesStayApart) {
    const auto kb = fixtures::parse_kb_text("A\tV1\tT\t1\nA\tV2\tT\t2\nB\tV1\tT\t3\n", precision_oncology_schema());
    EXPECT_EQ(build_queries(kb.records, precision_oncology_schema()).size(), kb.records.size());
}

TEST(BuildQueries, SerializationRoundTrip) {
    const auto qs = build_queries(fixtures::smo_kb().records, precision_oncology_schema(), fixtures::smo_synonyms());
    std::ostringstream out;
    write_queries(out, qs);
    std::istringstream in(out.str());
    const auto back = read_queries(in);
    ASSERT_EQ(back.size(), qs.size());
    for (std::size_t i = 0; i < qs.size(); ++i) {
        EXPECT_EQ(back[i].query_id, qs[i].query_id);
        EXPECT_EQ(back[i].rendered_text, qs[i].rendered_text);
        EXPECT_EQ(back[i].gold_doc_ids, qs[i].gold_doc_ids);
        EXPECT_EQ(back[i].query_entities, qs[i].query_entities);
        EXPECT_EQ(back[i].answer_entities, qs[i].answer_entities);
    }
}

namespace {

std::vector<Query> gene_queries(std::size_t genes, std::size_t per_gene) {
    std::string tsv;
    for (std::size_t g = 0; g < genes; ++g) {
        for (std::size_t v = 0; v < per_gene; ++v) {
            tsv += "GENE" + std::to_string(g) + "\tV" + std::to_string(v) + "\tDrug\t" +
                   std::to_string(g * 100 + v) + "\n";
        }
    }
    const auto kb = fixtures::parse_kb_text(tsv, precision_oncology_schema());
    return build_queries(kb.records, precision_oncology_schema());
}

}  // namespace

TEST(Split, SingleGroupLandsInOneSplit) {
    const auto kb = fixtures::parse_kb_text("SMO\tL412F\tA\t1\nSMO\tD473H\tB\t2\nSMO\tW535L\tC\t3\n",
                                            precision_oncology_schema());
    const auto qs = build_queries(kb.records, precision_oncology_schema());
    const auto s = split_dataset(qs, {0.7, 0.15, 0.15}, 7);
    ASSERT_EQ(s.groups.size(), 1u);
    for (const auto& q : qs) EXPECT_EQ(s.of(q), s.of(qs[0]));
}

TEST(Split, HundredGenesHitTargets) {
    const auto qs = gene_queries(100, 1);
    const auto s = split_dataset(qs, {0.7, 0.15, 0.15}, 7);
    std::map<Split, int> counts;
    for (const auto& q : qs) ++counts[s.of(q)];
    EXPECT_NEAR(counts[Split::train], 70, 1);
    EXPECT_NEAR(counts[Split::dev], 15, 1);
    EXPECT_NEAR(counts[Split::test], 15, 1);
}

TEST(Split, NoGroupSpansTwoSplits) {
    const auto qs = gene_queries(40, 3);
    const auto s = split_dataset(qs, {0.7, 0.15, 0.15}, 11);
    std::map<std::string, std::set<Split>> seen;
    for (const auto& q : qs) seen[q.group_key()].insert(s.of(q));
    for (const auto& [key, splits] : seen) EXPECT_EQ(splits.size(), 1u) << key;
}

TEST(Split, DeterministicUnderSeed) {
    const auto qs = gene_queries(30, 2);
    std::ostringstream a, b, c;
    write_split(a, split_dataset(qs, {0.7, 0.15, 0.15}, 3));
    write_split(b, split_dataset(qs, {0.7, 0.15, 0.15}, 3));
    write_split(c, split_dataset(qs, {0.7, 0.15, 0.15}, 4));
    EXPECT_EQ(a.str(), b.str());
    EXPECT_NE(a.str(), c.str());
    std::istringstream in(a.str());
    EXPECT_EQ(read_split(in).groups, split_dataset(qs, {0.7, 0.15, 0.15}, 3).groups);
}

TEST(Split, TooFewGroupsIsAnError) {
    EXPECT_THROW(split_dataset(gene_queries(2, 1), {0.7, 0.15, 0.15}, 1), DataError);
}

TEST(Split, RatiosMustSumToOne) {
    EXPECT_THROW(split_dataset(gene_queries(5, 1), {0.5, 0.2, 0.2}, 1), ConfigError);
}
