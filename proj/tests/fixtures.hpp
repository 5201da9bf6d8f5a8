#pragma once

#include <sstream>
#include <string>

#include "kbdr/kbdata.hpp"

namespace kbdr::fixtures {

// Four records around the query (SMO, L412F) with abstract snippets for
// each referenced document.
inline const char* smo_kb_tsv =
    "SMO\tL412F\tVismodegib\t26822128\n"
    "SMO\tL412F\tVismodegib\t25759020\n"
    "SMO\tD473H\tSaridegib\t22550175\n"
    "BRAF\tL597R\tTrametinib\t22798288\n";

inline SynonymTable smo_synonyms() {
    SynonymTable t;
    t.add("Gene", "SMO", "Smoothened");
    t.add("Variant", "L412F", "p.L412F");
    t.add("Variant", "L597R", "BRAF(L597R)");
    t.add("Treatment", "Vismodegib", "GDC-0449");
    return t;
}

inline Corpus smo_corpus() {
    Corpus c;
    c.add({"26822128", "SMO mutations in basal cell carcinoma",
           "The p.L412F mutation was found experimentally to result in increased SMO transactivating "
           "activity, and the patient responded to vismodegib therapy."});
    c.add({"25759020", "Smoothened variants and resistance",
           "we show that both classes of SMO variants respond to aPKC-iota/lambda or GLI2 inhibitors that "
           "operate downstream of SMO"});
    c.add({"22550175", "A Hedgehog pathway inhibitor",
           "saridegib was found to be active in cells with the D473H point mutation that rendered them "
           "resistant to another Smo inhibitor, GDC-0449"});
    c.add({"22798288", "MEK sensitivity",
           "This study shows that cells harboring BRAF(L597R) mutants are sensitive to MEK inhibitor "
           "treatment with trametinib"});
    return c;
}

inline KbParseResult smo_kb() {
    std::istringstream in(smo_kb_tsv);
    return parse_kb(in, precision_oncology_schema(), smo_synonyms());
}

inline Corpus parse_corpus_text(const std::string& text) {
    std::istringstream in(text);
    return parse_corpus(in);
}

inline KbParseResult parse_kb_text(const std::string& text, const RelationSchema& schema,
                                   const SynonymTable& synonyms = {}) {
    std::istringstream in(text);
    return parse_kb(in, schema, synonyms);
}

}  // namespace kbdr::fixtures
