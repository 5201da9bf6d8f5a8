#include "kbdr/matching.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "kbdr/error.hpp"

namespace kbdr {

// ---------------------------------------------------------------------------
// MatchPattern

MatchPattern::MatchPattern(std::size_t size, std::uint32_t bits) : size_(size) {
    if (size == 0 || size > 16) throw ConfigError("match patterns cover 1 to 16 slots");
    bits_ = bits & mask();
}

MatchPattern MatchPattern::all_ones(std::size_t size) {
    MatchPattern p(size);
    p.bits_ = p.mask();
    return p;
}

MatchPattern MatchPattern::parse(std::string_view bits) {
    MatchPattern p(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] == '1') {
            p.set(i, true);
        } else if (bits[i] != '0') {
            throw ConfigError("invalid match pattern '" + std::string(bits) + "'");
        }
    }
    return p;
}

void MatchPattern::set(std::size_t slot, bool value) {
    if (value) {
        bits_ |= (1u << slot);
    } else {
        bits_ &= ~(1u << slot);
    }
}

std::size_t MatchPattern::count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < size_; ++i) n += test(i);
    return n;
}

std::string MatchPattern::to_string() const {
    std::string s;
    for (std::size_t i = 0; i < size_; ++i) s.push_back(test(i) ? '1' : '0');
    return s;
}

const char* to_string(Polarity p) { return p == Polarity::positive ? "positive" : "negative"; }

const char* to_string(SampleSource s) {
    switch (s) {
    case SampleSource::kb: return "kb";
    case SampleSource::bm25: return "bm25";
    case SampleSource::random: return "random";
    }
    return "?";
}

Polarity parse_polarity(std::string_view name) {
    if (name == "positive") return Polarity::positive;
    if (name == "negative") return Polarity::negative;
    throw ConfigError("unknown polarity '" + std::string(name) + "'");
}

SampleSource parse_source(std::string_view name) {
    if (name == "kb") return SampleSource::kb;
    if (name == "bm25") return SampleSource::bm25;
    if (name == "random") return SampleSource::random;
    throw ConfigError("unknown sample source '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// PatternSpec

PatternSpec PatternSpec::parse(std::string_view text) {
    PatternSpec spec;
    for (char c : text) {
        switch (c) {
        case '1': spec.slots_.emplace_back(true); break;
        case '0': spec.slots_.emplace_back(false); break;
        case '-': spec.slots_.emplace_back(std::nullopt); break;
        default: throw ConfigError("invalid pattern '" + std::string(text) + "' (use 0, 1 or -)");
        }
    }
    if (spec.slots_.empty()) throw ConfigError("empty pattern");
    return spec;
}

bool PatternSpec::matches(const MatchPattern& p) const {
    if (p.size() != slots_.size()) return false;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        if (slots_[i] && *slots_[i] != p.test(i)) return false;
    }
    return true;
}

std::string PatternSpec::to_string() const {
    std::string s;
    for (const auto& slot : slots_) s.push_back(!slot ? '-' : (*slot ? '1' : '0'));
    return s;
}

// ---------------------------------------------------------------------------
// MarginClassTable

namespace {

/// Negative rows require g = 1 on evaluated slots, except where overridden to 0.
bool negative_g_matches(const MarginRule& rule, const PatternSpec& pattern, const MatchPattern& g) {
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (pattern.is_wildcard(i)) continue;
        const bool zero = std::find(rule.g_zero_slots.begin(), rule.g_zero_slots.end(), i) !=
                          rule.g_zero_slots.end();
        if (g.test(i) != !zero) return false;
    }
    // Overrides on wildcard slots still apply.
    for (std::size_t slot : rule.g_zero_slots) {
        if (pattern.is_wildcard(slot) && g.test(slot)) return false;
    }
    return true;
}

}  // namespace

MarginClassTable::MarginClassTable(std::string dataset, std::vector<std::string> slot_names,
                                   std::vector<MarginRule> rules,
                                   std::vector<PatternSpec> unsampled_negative_patterns)
    : dataset_(std::move(dataset)),
      slot_names_(std::move(slot_names)),
      rules_(std::move(rules)),
      unsampled_(std::move(unsampled_negative_patterns)) {
    validate();
}

void MarginClassTable::validate() const {
    const auto where = [&](const std::string& what) {
        return ConfigError("margin table " + dataset_ + ": " + what);
    };
    const std::size_t n = slot_names_.size();
    if (n < 2 || n > 16) throw where("needs 2 to 16 slots");

    std::map<std::pair<Polarity, int>, double> class_mu;
    std::set<SampleSource> seen_sources;
    for (const auto& rule : rules_) {
        const std::string label = std::string(to_string(rule.polarity)) + " class " +
                                  std::to_string(rule.class_id);
        if (rule.class_id < 1) throw where(label + ": class ids start at 1");
        if (!(rule.mu >= 0.0 && rule.mu <= 2.0)) throw where(label + ": mu outside [0, 2]");
        const auto [it, fresh] = class_mu.emplace(std::make_pair(rule.polarity, rule.class_id), rule.mu);
        if (!fresh && it->second != rule.mu) throw where(label + ": conflicting mu values");
        for (const auto& p : rule.patterns) {
            if (p.size() != n) throw where(label + ": pattern " + p.to_string() + " has wrong length");
        }
        for (std::size_t slot : rule.g_zero_slots) {
            if (slot >= n) throw where(label + ": g override on unknown slot");
        }
        if (rule.polarity == Polarity::positive) {
            if (rule.source != SampleSource::kb) throw where(label + ": positives come from the KB");
            if (!rule.g_zero_slots.empty()) throw where(label + ": g overrides apply to negatives");
            for (const auto& p : rule.patterns) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (p.is_wildcard(i)) throw where(label + ": positive patterns cannot use '-'");
                }
            }
        } else if (rule.source != SampleSource::kb) {
            if (!rule.patterns.empty()) throw where(label + ": bm25/random rows take no patterns");
            if (!seen_sources.insert(rule.source).second) {
                throw where(std::string("source ") + to_string(rule.source) + " used by two classes");
            }
        }
    }
    for (const auto& p : unsampled_) {
        if (p.size() != n) throw where("unsampled pattern " + p.to_string() + " has wrong length");
    }

    for (Polarity polarity : {Polarity::positive, Polarity::negative}) {
        double previous = -1.0;
        for (const auto& [key, mu] : class_mu) {
            if (key.first != polarity) continue;
            if (mu < previous) {
                throw where(std::string(to_string(polarity)) +
                            " margins must be non-decreasing in class id");
            }
            previous = mu;
        }
    }

    const std::uint32_t combos = 1u << n;
    std::vector<double> positive_mu(combos, -1.0);
    for (std::uint32_t bits = 0; bits < combos; ++bits) {
        const MatchPattern g(n, bits);
        std::set<int> hits;
        for (const auto& rule : rules_) {
            if (rule.polarity != Polarity::positive) continue;
            for (const auto& p : rule.patterns) {
                if (p.matches(g)) hits.insert(rule.class_id);
            }
        }
        if (hits.size() != 1) {
            throw where("positive g-pattern " + g.to_string() + " matches " +
                        std::to_string(hits.size()) + " classes (need exactly 1)");
        }
        positive_mu[bits] = class_mu.at({Polarity::positive, *hits.begin()});
    }
    for (std::uint32_t a = 0; a < combos; ++a) {
        for (std::uint32_t b = 0; b < combos; ++b) {
            if ((a & ~b) == 0 && positive_mu[b] > positive_mu[a]) {
                throw where("positive margins not monotone: " + MatchPattern(n, b).to_string() +
                            " matches more entities than " + MatchPattern(n, a).to_string() +
                            " but has a larger mu");
            }
        }
    }

    for (std::uint32_t fbits = 0; fbits < combos; ++fbits) {
        const MatchPattern f(n, fbits);
        const bool unsampled = std::any_of(unsampled_.begin(), unsampled_.end(),
                                           [&](const PatternSpec& p) { return p.matches(f); });
        for (std::uint32_t gbits = 0; gbits < combos; ++gbits) {
            const MatchPattern g(n, gbits);
            std::set<int> hits;
            for (const auto& rule : rules_) {
                if (rule.polarity != Polarity::negative) continue;
                for (const auto& p : rule.patterns) {
                    if (p.matches(f) && negative_g_matches(rule, p, g)) hits.insert(rule.class_id);
                }
            }
            if (f.is_all_ones()) {
                // Wildcard rows never reach f = all ones: that pair is another positive.
                for (const auto& rule : rules_) {
                    if (rule.polarity != Polarity::negative) continue;
                    for (const auto& p : rule.patterns) {
                        bool explicit_row = true;
                        for (std::size_t i = 0; i < p.size(); ++i) explicit_row = explicit_row && !p.is_wildcard(i);
                        if (explicit_row && p.matches(f)) throw where("negative row matches the all-ones f-pattern");
                    }
                }
                continue;
            }
            if (hits.size() > 1) {
                throw where("negative f-pattern " + f.to_string() + " with g " + g.to_string() +
                            " matches several classes");
            }
            if (!g.is_all_ones()) continue;
            if (hits.empty() && !unsampled) {
                throw where("negative f-pattern " + f.to_string() + " is not covered");
            }
            if (!hits.empty() && unsampled) {
                throw where("negative f-pattern " + f.to_string() + " is both sampled and unsampled");
            }
        }
    }
}

MarginAssignment MarginClassTable::lookup_positive(const MatchPattern& g) const {
    for (const auto& rule : rules_) {
        if (rule.polarity != Polarity::positive) continue;
        for (const auto& p : rule.patterns) {
            if (p.matches(g)) return {rule.class_id, rule.mu, Polarity::positive};
        }
    }
    throw ConfigError("margin table " + dataset_ + ": no positive class for g-pattern " +
                      g.to_string());
}

NegativeLookup MarginClassTable::lookup_negative(const MatchPattern& f, const MatchPattern& g) const {
    if (f.is_all_ones()) return {NegativeLookup::Verdict::another_positive, std::nullopt};
    for (const auto& rule : rules_) {
        if (rule.polarity != Polarity::negative) continue;
        for (const auto& p : rule.patterns) {
            if (p.matches(f) && negative_g_matches(rule, p, g)) {
                return {NegativeLookup::Verdict::negative,
                        MarginAssignment{rule.class_id, rule.mu, Polarity::negative}};
            }
        }
    }
    const bool unsampled = std::any_of(unsampled_.begin(), unsampled_.end(),
                                       [&](const PatternSpec& p) { return p.matches(f); });
    if (unsampled) return {NegativeLookup::Verdict::unsampled, std::nullopt};
    if (g.is_all_ones()) {
        throw ConfigError("margin table " + dataset_ + ": no negative class for f-pattern " +
                          f.to_string());
    }
    return {NegativeLookup::Verdict::text_mismatch, std::nullopt};
}

std::vector<int> MarginClassTable::class_ids(Polarity polarity) const {
    std::set<int> ids;
    for (const auto& rule : rules_) {
        if (rule.polarity == polarity) ids.insert(rule.class_id);
    }
    return {ids.begin(), ids.end()};
}

std::optional<double> MarginClassTable::mu(int class_id, Polarity polarity) const {
    for (const auto& rule : rules_) {
        if (rule.polarity == polarity && rule.class_id == class_id) return rule.mu;
    }
    return std::nullopt;
}

std::optional<int> MarginClassTable::class_for_source(SampleSource source) const {
    for (const auto& rule : rules_) {
        if (rule.polarity == Polarity::negative && rule.source == source) return rule.class_id;
    }
    return std::nullopt;
}

bool MarginClassTable::class_has_kb_patterns(int class_id) const {
    return std::any_of(rules_.begin(), rules_.end(), [&](const MarginRule& r) {
        return r.polarity == Polarity::negative && r.class_id == class_id &&
               r.source == SampleSource::kb && !r.patterns.empty();
    });
}

bool MarginClassTable::is_consistent(const MarginAssignment& a) const {
    const auto m = mu(a.class_id, a.polarity);
    return m && *m == a.mu;
}

MarginClassTable MarginClassTable::binary(double positive_mu, double negative_mu,
                                          const std::vector<int>& dropped) const {
    std::vector<MarginRule> rules;
    std::vector<PatternSpec> unsampled = unsampled_;
    for (const auto& rule : rules_) {
        if (rule.polarity == Polarity::negative &&
            std::find(dropped.begin(), dropped.end(), rule.class_id) != dropped.end()) {
            if (rule.g_zero_slots.empty()) {
                unsampled.insert(unsampled.end(), rule.patterns.begin(), rule.patterns.end());
            }
            continue;
        }
        MarginRule copy = rule;
        copy.mu = rule.polarity == Polarity::positive ? positive_mu : negative_mu;
        rules.push_back(std::move(copy));
    }
    return MarginClassTable(dataset_, slot_names_, std::move(rules), std::move(unsampled));
}

// ---------------------------------------------------------------------------
// Default tables

namespace {

MarginRule rule(int class_id, double mu, Polarity polarity, std::vector<std::string> patterns,
                SampleSource source = SampleSource::kb, std::vector<std::size_t> g_zero = {}) {
    MarginRule r;
    r.class_id = class_id;
    r.mu = mu;
    r.polarity = polarity;
    r.source = source;
    for (const auto& p : patterns) r.patterns.push_back(PatternSpec::parse(p));
    r.g_zero_slots = std::move(g_zero);
    return r;
}

constexpr auto pos = Polarity::positive;
constexpr auto neg = Polarity::negative;

}  // namespace

MarginClassTable po_margin_table() {
    // Slots: Gene, Variant, Treatment.
    return MarginClassTable(
        "PO", {"Gene", "Variant", "Treatment"},
        {
            rule(1, 0.0, pos, {"111"}),
            rule(2, 0.2, pos, {"101", "011"}),
            rule(3, 0.6, pos, {"110"}),
            rule(4, 0.8, pos, {}),
            rule(5, 1.0, pos, {"100", "010", "001"}),
            rule(6, 1.2, pos, {"000"}),
            rule(1, 0.0, neg, {}),
            rule(2, 0.2, neg, {"101"}, SampleSource::kb, {1}),
            rule(3, 0.6, neg, {"101", "110"}),
            rule(4, 0.8, neg, {"100", "011", "001"}),
            rule(4, 0.8, neg, {}, SampleSource::bm25),
            rule(5, 1.0, neg, {"010", "000"}),
            rule(5, 1.0, neg, {}, SampleSource::random),
            rule(6, 1.2, neg, {}),
        });
}

MarginClassTable ptm_margin_table() {
    // Slots: Protein, PTM, Residue, Catalyst.
    std::vector<PatternSpec> unsampled;
    for (const char* p : {"1110", "1011", "1010", "0111", "0110", "0101", "0100", "0011", "0010"}) {
        unsampled.push_back(PatternSpec::parse(p));
    }
    return MarginClassTable(
        "PTM", {"Protein", "PTM", "Residue", "Catalyst"},
        {
            rule(1, 0.0, pos, {"1111"}),
            rule(2, 0.4, pos, {"1101", "1011", "0111"}),
            rule(3, 0.6, pos, {"1110", "1100", "1010", "1001", "0110", "0101", "0011"}),
            rule(4, 0.8, pos, {"1000", "0100", "0010", "0001"}),
            rule(5, 1.0, pos, {"0000"}),
            rule(6, 1.2, pos, {}),
            rule(1, 0.0, neg, {}),
            rule(2, 0.4, neg, {"1101"}),
            rule(3, 0.6, neg, {"1001", "1100"}),
            rule(4, 0.8, neg, {"1000", "0001"}),
            rule(4, 0.8, neg, {"1--1"}, SampleSource::kb, {0}),
            rule(4, 0.8, neg, {}, SampleSource::bm25),
            rule(5, 1.0, neg, {"1--0"}, SampleSource::kb, {0}),
            rule(5, 1.0, neg, {"0000"}),
            rule(6, 1.2, neg, {}, SampleSource::random),
        },
        std::move(unsampled));
}

MarginClassTable default_margin_table(const RelationSchema& schema) {
    if (schema.name == "PO") return po_margin_table();
    if (schema.name == "PTM") return ptm_margin_table();
    throw ConfigError("no built-in margin table for schema " + schema.name);
}

// ---------------------------------------------------------------------------
// f and g

bool text_match(const EntityRef& entity, const TokenizedText& text) {
    if (text.empty()) return false;
    for (const auto& synonym : entity.synonyms) {
        if (text.contains(tokenize(synonym))) return true;
    }
    return text.contains(tokenize(entity.canonical));
}

bool text_match(const EntityRef& entity, const Document& doc) {
    return text_match(entity, tokenize_document(doc.title, doc.abstract_text));
}

bool text_match_any(const std::vector<EntityRef>& entities, const TokenizedText& text) {
    return std::any_of(entities.begin(), entities.end(),
                       [&](const EntityRef& e) { return text_match(e, text); });
}

MatchPattern text_match_pattern(const KbRecord& record, const TokenizedText& text) {
    const std::size_t n = record.query_entities.size() + 1;
    MatchPattern g(n);
    for (std::size_t i = 0; i < record.query_entities.size(); ++i) {
        g.set(i, text_match(record.query_entities[i], text));
    }
    g.set(n - 1, text_match_any(record.answers, text));
    return g;
}

bool kb_match(const KbRecord& a, const KbRecord& b, std::size_t slot) {
    const std::size_t n = a.query_entities.size() + 1;
    if (b.query_entities.size() + 1 != n) throw DataError("kb_match: records have different schemas");
    if (slot >= n) throw DataError("kb_match: slot " + std::to_string(slot) + " not in schema");
    if (slot == n - 1) return b.has_answer();
    return normalize(a.query_entities[slot].canonical) == normalize(b.query_entities[slot].canonical);
}

bool kb_match(const RelationSchema& schema, const KbRecord& a, const KbRecord& b,
              std::string_view slot) {
    const auto index = schema.slot_index(slot);
    if (!index) throw DataError("kb_match: slot " + std::string(slot) + " not in schema " + schema.name);
    return kb_match(a, b, *index);
}

MatchPattern kb_match_pattern(const KbRecord& a, const KbRecord& b) {
    const std::size_t n = a.query_entities.size() + 1;
    MatchPattern f(n);
    for (std::size_t i = 0; i < n; ++i) f.set(i, kb_match(a, b, i));
    return f;
}

MarginAssignment classify_positive(const MarginClassTable& table, const KbRecord& record,
                                   const TokenizedText& doc) {
    return table.lookup_positive(text_match_pattern(record, doc));
}

NegativeLookup classify_negative(const MarginClassTable& table, const KbRecord& positive,
                                 const KbRecord& other, const TokenizedText& other_doc) {
    const MatchPattern f = kb_match_pattern(positive, other);
    MatchPattern g = text_match_pattern(other, other_doc);
    // An answerless record has nothing to mention in its answer slot; the
    // g-condition there holds vacuously.
    if (!other.has_answer()) g.set(g.size() - 1, true);
    return table.lookup_negative(f, g);
}

}  // namespace kbdr
