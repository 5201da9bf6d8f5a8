#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kbdr/kbdata.hpp"
#include "kbdr/text.hpp"

namespace kbdr {

/// One 0/1 evaluation of f or g per slot, in schema order with the answer
/// slot last.
class MatchPattern {
public:
    MatchPattern() = default;
    explicit MatchPattern(std::size_t size, std::uint32_t bits = 0);

    static MatchPattern all_ones(std::size_t size);
    /// "101" -> slot 0 = 1, slot 1 = 0, slot 2 = 1.
    static MatchPattern parse(std::string_view bits);

    std::size_t size() const { return size_; }
    std::uint32_t bits() const { return bits_; }
    bool test(std::size_t slot) const { return (bits_ >> slot) & 1u; }
    void set(std::size_t slot, bool value);
    bool is_all_ones() const { return bits_ == mask(); }
    std::size_t count() const;
    /// Every slot set here is also set in `other`.
    bool is_subset_of(const MatchPattern& other) const { return (bits_ & ~other.bits_) == 0; }
    std::string to_string() const;

    bool operator==(const MatchPattern&) const = default;

private:
    std::uint32_t mask() const { return size_ >= 32 ? ~0u : ((1u << size_) - 1u); }

    std::uint32_t bits_ = 0;
    std::size_t size_ = 0;
};

enum class Polarity { positive, negative };
enum class SampleSource { kb, bm25, random };

const char* to_string(Polarity p);
const char* to_string(SampleSource s);
Polarity parse_polarity(std::string_view name);
SampleSource parse_source(std::string_view name);

/// A table row over slots: '1', '0', or '-' (not evaluated).
class PatternSpec {
public:
    PatternSpec() = default;
    static PatternSpec parse(std::string_view text);

    std::size_t size() const { return slots_.size(); }
    bool is_wildcard(std::size_t slot) const { return !slots_[slot].has_value(); }
    bool matches(const MatchPattern& p) const;
    std::string to_string() const;

private:
    std::vector<std::optional<bool>> slots_;
};

/// One row group of a margin-class table. Several rules may share a class
/// (e.g. KB patterns plus the BM25 source of the same class).
struct MarginRule {
    int class_id = 0;
    double mu = 0.0;
    Polarity polarity = Polarity::positive;
    SampleSource source = SampleSource::kb;
    std::vector<PatternSpec> patterns;    ///< g-patterns (positive) or f-patterns (negative)
    std::vector<std::size_t> g_zero_slots; ///< negatives: slots where g must be 0 instead of 1
};

struct MarginAssignment {
    int class_id = 0;
    double mu = 0.0;
    Polarity polarity = Polarity::positive;

    bool operator==(const MarginAssignment&) const = default;
};

struct NegativeLookup {
    enum class Verdict {
        negative,          ///< assignment is set
        another_positive,  ///< f is all ones
        text_mismatch,     ///< the candidate document fails the row's g-conditions
        unsampled,         ///< f-pattern is declared but not drawn from
    };
    Verdict verdict = Verdict::text_mismatch;
    std::optional<MarginAssignment> assignment;
};

/// Dataset-specific mapping from f/g evaluation patterns to margins.
/// Construction validates: exhaustive and disjoint over every g-pattern
/// (positives) and every declared f-pattern (negatives), mu in [0, 2],
/// mu non-decreasing in class id, and positive monotonicity.
class MarginClassTable {
public:
    MarginClassTable() = default;
    MarginClassTable(std::string dataset, std::vector<std::string> slot_names,
                     std::vector<MarginRule> rules,
                     std::vector<PatternSpec> unsampled_negative_patterns = {});

    const std::string& dataset() const { return dataset_; }
    std::size_t slot_count() const { return slot_names_.size(); }
    const std::vector<std::string>& slot_names() const { return slot_names_; }
    const std::vector<MarginRule>& rules() const { return rules_; }
    const std::vector<PatternSpec>& unsampled_negative_patterns() const { return unsampled_; }

    /// Throws ConfigError when no row covers `g`.
    MarginAssignment lookup_positive(const MatchPattern& g) const;
    /// `f` compares the two records, `g` is the other record's entities in its
    /// own document.
    NegativeLookup lookup_negative(const MatchPattern& f, const MatchPattern& g) const;

    std::vector<int> class_ids(Polarity polarity) const;
    std::optional<double> mu(int class_id, Polarity polarity) const;
    std::optional<int> class_for_source(SampleSource source) const;
    bool class_has_kb_patterns(int class_id) const;
    bool is_consistent(const MarginAssignment& a) const;

    /// Binary-relevance variant: every positive gets `positive_mu`, every
    /// negative `negative_mu`, and the negative classes in `dropped` are
    /// removed (their all-ones-g patterns become unsampled).
    MarginClassTable binary(double positive_mu, double negative_mu,
                            const std::vector<int>& dropped) const;

private:
    void validate() const;

    std::string dataset_;
    std::vector<std::string> slot_names_;
    std::vector<MarginRule> rules_;
    std::vector<PatternSpec> unsampled_;
};

/// Tables transcribed from the curated-KB margin definitions.
MarginClassTable default_margin_table(const RelationSchema& schema);
MarginClassTable po_margin_table();
MarginClassTable ptm_margin_table();

/// g: 1 iff any synonym of `entity` appears in the text at token boundaries.
bool text_match(const EntityRef& entity, const TokenizedText& text);
bool text_match(const EntityRef& entity, const Document& doc);
/// True iff any of `entities` is mentioned.
bool text_match_any(const std::vector<EntityRef>& entities, const TokenizedText& text);

/// g over every slot of `record` (answer slot: any answer mentioned).
MatchPattern text_match_pattern(const KbRecord& record, const TokenizedText& text);

/// f for one slot index: query slots compare normalized canonicals; the
/// answer slot is 1 iff `b` has any answer.
bool kb_match(const KbRecord& a, const KbRecord& b, std::size_t slot);
bool kb_match(const RelationSchema& schema, const KbRecord& a, const KbRecord& b,
              std::string_view slot);
MatchPattern kb_match_pattern(const KbRecord& a, const KbRecord& b);

MarginAssignment classify_positive(const MarginClassTable& table, const KbRecord& record,
                                   const TokenizedText& doc);
NegativeLookup classify_negative(const MarginClassTable& table, const KbRecord& positive,
                                 const KbRecord& other, const TokenizedText& other_doc);

}  // namespace kbdr
