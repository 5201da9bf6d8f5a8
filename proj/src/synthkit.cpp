#include "kbdr/synthkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "kbdr/error.hpp"
#include "kbdr/random.hpp"

namespace kbdr {

void SynthSpec::validate() const {
    if (genes < 1 || variants_per_gene < 1 || answers_per_query < 1 || corpus_size < 1 || vocab_size < 1 ||
        treatment_pool < 1) {
        throw ConfigError("synth counts must be >= 1");
    }
    for (double p : {noise_rate, answerless_rate, background_mention_rate}) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth rates must lie in [0, 1]");
    }
    if (answers_per_query > treatment_pool) throw ConfigError("synth answers_per_query exceeds treatment_pool");
}

namespace {

constexpr std::size_t gene_slot = 0;
constexpr std::size_t variant_slot = 1;
constexpr std::size_t treatment_slot = 2;

const char* const consonants = "bcdfghklmnprstvz";
const char* const vowels = "aeiou";
const char* const amino = "ACDEFGHIKLMNPQRSTVWY";
const std::array<const char*, 20> amino3 = {"Ala", "Cys", "Asp", "Glu", "Phe", "Gly", "His",
                                            "Ile", "Lys", "Leu", "Met", "Asn", "Pro", "Gln",
                                            "Arg", "Ser", "Thr", "Val", "Trp", "Tyr"};

const std::vector<std::string> gene_sentences = {
    "alterations in {E} were observed across the cohort",
    "the {E} gene was profiled in all samples",
    "we characterized {E} in tumor tissue",
    "{E} expression was measured by sequencing",
};
const std::vector<std::string> variant_sentences = {
    "the {E} mutation was identified in the tumor",
    "sequencing revealed the {E} substitution",
    "cells harboring {E} were examined",
};
const std::vector<std::string> treatment_sentences = {
    "patients responded to {E} therapy",
    "tumor cells were sensitive to {E}",
    "treatment with {E} induced a durable response",
    "{E} inhibited growth and the patient responded",
};
const std::vector<std::string> generic_therapy_sentences = {
    "tumors responded to targeted inhibitor therapy",
    "sensitivity to kinase inhibitors was observed",
};
const std::vector<std::string> prognostic_sentences = {
    "this alteration was associated with poor prognosis",
    "carriers showed reduced overall survival",
    "the finding supports its use as a diagnostic marker",
};

/// Non-all-ones g-patterns of a noisy record, weighted like the curated
/// oncology positives (Gene, Variant, Treatment bit order).
const std::vector<std::pair<std::string, double>> noisy_pattern_weights = {
    {"101", 1032}, {"011", 1033}, {"110", 218}, {"100", 372},
    {"010", 372},  {"001", 373},  {"000", 200},
};

constexpr std::size_t successor_count = 4;
constexpr double successor_rate = 0.95;

class NameForge {
public:
    explicit NameForge(Rng& rng) : rng_(rng) {}

    std::string syllables(std::size_t count) {
        std::string s;
        for (std::size_t i = 0; i < count; ++i) {
            s.push_back(consonants[rng_.uniform_index(16)]);
            s.push_back(vowels[rng_.uniform_index(5)]);
        }
        return s;
    }

    /// A token not yet handed out (compared after normalization).
    template <typename F>
    std::string fresh(F&& make) {
        for (;;) {
            auto candidate = make();
            if (used_.insert(normalize(candidate)).second) return candidate;
        }
    }

    void reserve(const std::string& token) { used_.insert(normalize(token)); }

private:
    Rng& rng_;
    std::unordered_set<std::string> used_;
};

std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

std::string fill(const std::string& pattern, const std::string& mention) {
    auto out = pattern;
    const auto pos = out.find("{E}");
    if (pos != std::string::npos) out.replace(pos, 3, mention);
    return out;
}

class Generator {
public:
    explicit Generator(const SynthSpec& spec) : spec_(spec), rng_(derive_seed(spec.seed, "synth")), names_(rng_) {}

    SynthBundle run() {
        SynthBundle bundle;
        bundle.schema = precision_oncology_schema();
        make_vocabulary();
        make_treatments(bundle.synonyms);
        make_genes(bundle.synonyms);

        for (std::size_t g = 0; g < genes_.size(); ++g) {
            for (std::size_t v = 0; v < genes_[g].variants.size(); ++v) {
                const auto gene = bundle.synonyms.resolve("Gene", genes_[g].symbol);
                const auto variant = bundle.synonyms.resolve("Variant", genes_[g].variants[v]);
                const auto picks = rng_.sample_indices(treatments_.size(), spec_.answers_per_query);
                for (std::size_t t : picks) {
                    const auto treatment = bundle.synonyms.resolve("Treatment", treatments_[t]);
                    KbRecord record;
                    record.query_entities = {gene, variant};
                    record.answers = {treatment};
                    record.doc_id = new_doc_id();
                    const auto pattern = referenced_pattern();
                    bundle.planted.emplace(record.doc_id, pattern);
                    bundle.corpus.add(referenced_document(record, pattern, false));
                    const auto qid = query_id_for(bundle.schema, record.query_entities);
                    bundle.qrels[qid].insert(record.doc_id);
                    bundle.records.push_back(std::move(record));
                }
                if (rng_.bernoulli(spec_.answerless_rate)) {
                    KbRecord record;
                    record.query_entities = {gene, variant};
                    record.doc_id = new_doc_id();
                    const auto pattern = MatchPattern::parse("110");
                    bundle.planted.emplace(record.doc_id, pattern);
                    bundle.corpus.add(referenced_document(record, pattern, true));
                    bundle.records.push_back(std::move(record));
                }
            }
        }
        for (auto& r : bundle.records) r.record_id = record_id(r);

        while (bundle.corpus.size() < spec_.corpus_size) {
            bundle.corpus.add(background_document(bundle.synonyms));
        }
        return bundle;
    }

private:
    struct Gene {
        std::string symbol;
        std::vector<std::string> variants;
    };

    static std::string record_id(const KbRecord& r) {
        std::string id;
        for (const auto& e : r.query_entities) id += e.canonical + "|";
        for (std::size_t i = 0; i < r.answers.size(); ++i) id += (i ? "+" : "") + r.answers[i].canonical;
        return id + "@" + r.doc_id;
    }

    void make_vocabulary() {
        vocab_.clear();
        for (std::size_t i = 0; i < spec_.vocab_size; ++i) {
            vocab_.push_back(names_.fresh([&] { return names_.syllables(2 + rng_.uniform_index(3)); }));
        }
        // Template and context words must not double as filler.
        for (const auto* list : {&gene_sentences, &variant_sentences, &treatment_sentences,
                                 &generic_therapy_sentences, &prognostic_sentences}) {
            for (const auto& s : *list) {
                for (const auto& t : tokenize(s)) names_.reserve(t);
            }
        }
        zipf_cdf_.resize(vocab_.size());
        double acc = 0.0;
        for (std::size_t r = 0; r < vocab_.size(); ++r) {
            acc += 1.0 / static_cast<double>(r + 1);
            zipf_cdf_[r] = acc;
        }
        for (auto& c : zipf_cdf_) c /= acc;
        successors_.assign(vocab_.size(), {});
        for (auto& next : successors_) {
            for (std::size_t k = 0; k < successor_count; ++k) next.push_back(zipf_index());
        }
    }

    std::size_t zipf_index() {
        const double u = rng_.uniform();
        const auto it = std::lower_bound(zipf_cdf_.begin(), zipf_cdf_.end(), u);
        return std::min<std::size_t>(static_cast<std::size_t>(it - zipf_cdf_.begin()), vocab_.size() - 1);
    }

    /// Filler follows a first-order chain: each word has a few preferred
    /// successors, so bigram statistics are concentrated like real prose.
    std::string filler_sentence(std::size_t min_words, std::size_t max_words) {
        const std::size_t n = min_words + rng_.uniform_index(max_words - min_words + 1);
        std::string s;
        std::size_t prev = zipf_index();
        for (std::size_t i = 0; i < n; ++i) {
            if (i) {
                s += ' ';
                prev = rng_.bernoulli(successor_rate) ? rng_.pick(successors_[prev]) : zipf_index();
            }
            s += vocab_[prev];
        }
        return s;
    }

    void make_treatments(SynonymTable& synonyms) {
        const std::vector<std::string> suffixes = {"tinib", "rafenib", "degib", "lisib", "ximab", "ciclib"};
        for (std::size_t i = 0; i < spec_.treatment_pool; ++i) {
            const auto name = names_.fresh([&] {
                return capitalize(names_.syllables(1 + rng_.uniform_index(2)) + rng_.pick(suffixes));
            });
            synonyms.add("Treatment", name, name);
            const std::size_t extra = rng_.uniform_index(3);
            if (extra >= 1) {
                synonyms.add("Treatment", name, names_.fresh([&] {
                    return upper(names_.syllables(1)) + "-" + std::to_string(1000 + rng_.uniform_index(9000));
                }));
            }
            if (extra >= 2) {
                synonyms.add("Treatment", name, names_.fresh([&] { return capitalize(names_.syllables(3)) + "x"; }));
            }
            treatments_.push_back(name);
        }
    }

    void make_genes(SynonymTable& synonyms) {
        for (std::size_t g = 0; g < spec_.genes; ++g) {
            Gene gene;
            gene.symbol = names_.fresh([&] {
                return upper(names_.syllables(1 + rng_.uniform_index(2))) + std::to_string(1 + rng_.uniform_index(19));
            });
            synonyms.add("Gene", gene.symbol, gene.symbol);
            const std::size_t extra = rng_.uniform_index(3);
            if (extra >= 1) {
                synonyms.add("Gene", gene.symbol, names_.fresh([&] {
                    return upper(names_.syllables(2)) + "-" + std::to_string(1 + rng_.uniform_index(9));
                }));
            }
            if (extra >= 2) {
                synonyms.add("Gene", gene.symbol, names_.fresh([&] {
                    return names_.syllables(3) + " kinase " + std::to_string(2 + rng_.uniform_index(30));
                }), true);
            }
            for (std::size_t v = 0; v < spec_.variants_per_gene; ++v) {
                std::size_t from = 0;
                std::size_t to = 0;
                std::size_t pos = 0;
                const auto symbol = names_.fresh([&] {
                    from = rng_.uniform_index(20);
                    to = rng_.uniform_index(20);
                    pos = 10 + rng_.uniform_index(990);
                    return std::string(1, amino[from]) + std::to_string(pos) + std::string(1, amino[to]);
                });
                synonyms.add("Variant", symbol, symbol);
                const std::size_t extra_v = rng_.uniform_index(3);
                if (extra_v >= 1) synonyms.add("Variant", symbol, "p." + symbol);
                if (extra_v >= 2) {
                    synonyms.add("Variant", symbol, std::string(amino3[from]) + std::to_string(pos) + amino3[to]);
                }
                gene.variants.push_back(symbol);
            }
            genes_.push_back(std::move(gene));
        }
    }

    std::string new_doc_id() {
        for (;;) {
            auto id = std::to_string(20000000 + rng_.uniform_index(20000000));
            if (doc_ids_.insert(id).second) return id;
        }
    }

    MatchPattern referenced_pattern() {
        if (!rng_.bernoulli(spec_.noise_rate)) return MatchPattern::all_ones(3);
        std::vector<std::pair<MatchPattern, double>> allowed;
        double total = 0.0;
        for (const auto& [bits, w] : noisy_pattern_weights) {
            const auto p = MatchPattern::parse(bits);
            bool ok = true;
            for (std::size_t s = 0; s < 3; ++s) {
                if (!spec_.noisy_slots[s] && !p.test(s)) ok = false;
            }
            if (ok) {
                allowed.emplace_back(p, w);
                total += w;
            }
        }
        if (allowed.empty()) return MatchPattern::all_ones(3);
        double u = rng_.uniform() * total;
        for (const auto& [p, w] : allowed) {
            if (u < w) return p;
            u -= w;
        }
        return allowed.back().first;
    }

    std::string mention(const EntityRef& e) { return rng_.pick(e.synonyms); }

    Document compose(std::vector<std::string> entity_sentences, std::string title_prefix) {
        std::vector<std::string> sentences;
        const std::size_t filler = 4 + rng_.uniform_index(4);
        for (std::size_t i = 0; i < filler; ++i) sentences.push_back(filler_sentence(6, 14));
        for (auto& s : entity_sentences) {
            const auto at = rng_.uniform_index(sentences.size() + 1);
            sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(at), std::move(s));
        }
        Document doc;
        doc.doc_id = new_doc_id();
        doc.title = capitalize(title_prefix.empty() ? filler_sentence(4, 8)
                                                    : title_prefix + " " + filler_sentence(3, 6));
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            if (i) doc.abstract_text += ' ';
            doc.abstract_text += capitalize(sentences[i]) + '.';
        }
        return doc;
    }

    Document referenced_document(const KbRecord& record, const MatchPattern& pattern, bool answerless) {
        std::vector<std::string> sentences;
        std::string title;
        if (pattern.test(gene_slot)) {
            const auto m = mention(record.query_entities[gene_slot]);
            if (rng_.bernoulli(0.5)) {
                title = m;
            } else {
                sentences.push_back(fill(rng_.pick(gene_sentences), m));
            }
        }
        if (pattern.test(variant_slot)) {
            sentences.push_back(fill(rng_.pick(variant_sentences), mention(record.query_entities[variant_slot])));
        }
        if (answerless) {
            sentences.push_back(rng_.pick(prognostic_sentences));
        } else if (pattern.test(treatment_slot)) {
            sentences.push_back(fill(rng_.pick(treatment_sentences), mention(record.answers.front())));
        } else if (rng_.bernoulli(0.5)) {
            sentences.push_back(rng_.pick(generic_therapy_sentences));
        }
        auto doc = compose(std::move(sentences), std::move(title));
        doc_ids_.erase(doc.doc_id);
        doc.doc_id = record.doc_id;
        return doc;
    }

    Document background_document(const SynonymTable& synonyms) {
        std::vector<std::string> sentences;
        if (rng_.bernoulli(spec_.background_mention_rate)) {
            const auto& gene = rng_.pick(genes_);
            sentences.push_back(fill(rng_.pick(gene_sentences), mention(synonyms.resolve("Gene", gene.symbol))));
            if (rng_.bernoulli(0.3)) {
                const auto& t = rng_.pick(treatments_);
                sentences.push_back(fill(rng_.pick(treatment_sentences), mention(synonyms.resolve("Treatment", t))));
            } else if (rng_.bernoulli(0.3)) {
                sentences.push_back(rng_.pick(prognostic_sentences));
            }
        } else if (rng_.bernoulli(0.05)) {
            const auto& t = rng_.pick(treatments_);
            sentences.push_back(fill(rng_.pick(treatment_sentences), mention(synonyms.resolve("Treatment", t))));
        }
        return compose(std::move(sentences), {});
    }

    const SynthSpec& spec_;
    Rng rng_;
    NameForge names_;
    std::vector<std::string> vocab_;
    std::vector<double> zipf_cdf_;
    std::vector<std::vector<std::size_t>> successors_;
    std::vector<std::string> treatments_;
    std::vector<Gene> genes_;
    std::set<std::string> doc_ids_;
};

}  // namespace

SynthBundle generate(const SynthSpec& spec) {
    spec.validate();
    return Generator(spec).run();
}

void write_bundle(const SynthBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw DataError("cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("kb.tsv");
        write_kb(out, bundle.records);
    }
    {
        auto out = open("corpus.jsonl");
        write_corpus(out, bundle.corpus);
    }
    {
        auto out = open("synonyms.tsv");
        bundle.synonyms.write(out);
    }
    {
        auto out = open("qrels.tsv");
        for (const auto& [qid, docs] : bundle.qrels) {
            for (const auto& d : docs) out << qid << '\t' << d << '\n';
        }
    }
}

}  // namespace kbdr
