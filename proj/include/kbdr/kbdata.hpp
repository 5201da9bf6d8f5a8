#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kbdr/text.hpp"

namespace kbdr {

/// How a query slot is spelled when a template is rendered.
enum class SurfaceForm {
    canonical,                ///< the canonical name only, e.g. "SMO"
    canonical_with_full_name, ///< "SYMBOL (FULL NAME)" when a full name is known
};

/// An n-ary relation type: n-1 query slots, one answer slot, and the
/// natural-language template with one `{Slot}` placeholder per query slot.
struct RelationSchema {
    std::string name;
    std::vector<std::string> query_slots;
    std::string answer_slot;
    std::string template_text;
    std::map<std::string, SurfaceForm> surface_forms;

    std::size_t slot_count() const { return query_slots.size() + 1; }
    std::size_t answer_index() const { return query_slots.size(); }
    const std::string& slot_name(std::size_t index) const;
    std::optional<std::size_t> slot_index(std::string_view slot) const;
    SurfaceForm surface_form(std::string_view slot) const;

    /// Throws ConfigError unless the slots are non-empty and distinct and the
    /// template holds exactly one placeholder per query slot.
    void validate() const;
};

/// Built-in schemas for the two curated relation types.
RelationSchema precision_oncology_schema();
RelationSchema ptm_schema();

struct EntityRef {
    std::string canonical;
    std::vector<std::string> synonyms;  ///< includes the canonical name
    std::string entity_type;

    bool operator==(const EntityRef&) const = default;
};

/// Synonym dictionary keyed by (entity type, normalized canonical name).
class SynonymTable {
public:
    void add(const std::string& entity_type, const std::string& canonical,
             const std::string& synonym, bool is_full_name = false);

    /// Entity with its known synonyms; unknown names resolve to themselves.
    EntityRef resolve(const std::string& entity_type, const std::string& name) const;
    std::optional<std::string> full_name(const std::string& entity_type,
                                         const std::string& canonical) const;
    std::size_t size() const { return entries_.size(); }

    /// TSV rows `entity_type, canonical, synonym[, full_name]`.
    static SynonymTable parse(std::istream& in, const std::string& source = "<synonyms>");
    static SynonymTable load(const std::filesystem::path& path);
    void write(std::ostream& out) const;

private:
    struct Entry {
        std::string entity_type;
        std::string canonical;
        std::vector<std::string> synonyms;  // insertion order, deduplicated
        std::optional<std::string> full_name;
    };
    std::map<std::pair<std::string, std::string>, Entry> entries_;
};

struct KbRecord {
    std::string record_id;
    std::vector<EntityRef> query_entities;  ///< one per query slot, schema order
    std::vector<EntityRef> answers;         ///< empty only for answerless records
    std::string doc_id;
    std::size_t line = 0;

    bool has_answer() const { return !answers.empty(); }
    /// Entities of slot `index` (answer slot = index n-1).
    std::vector<EntityRef> slot_entities(std::size_t index) const;
};

struct KbParseResult {
    std::vector<KbRecord> records;      ///< complete records, file order
    std::vector<KbRecord> answerless;   ///< dropped from querying, kept as negative sources
    std::size_t dropped_incomplete = 0;
};

/// Answer-slot values are separated by this character inside one TSV cell.
inline constexpr char answer_separator = '|';

KbParseResult parse_kb(std::istream& in, const RelationSchema& schema,
                       const SynonymTable& synonyms, const std::string& source = "<kb>");
KbParseResult parse_kb(const std::filesystem::path& path, const RelationSchema& schema,
                       const SynonymTable& synonyms = {});
void write_kb(std::ostream& out, const std::vector<KbRecord>& records);

struct Document {
    std::string doc_id;
    std::string title;
    std::string abstract_text;

    bool operator==(const Document&) const = default;
};

/// Documents keyed by doc_id (iteration is in doc_id order), each with its
/// tokenized text.
class Corpus {
public:
    void add(Document doc);
    std::size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }
    bool contains(const std::string& doc_id) const { return docs_.count(doc_id) != 0; }
    const Document* find(const std::string& doc_id) const;
    const TokenizedText* tokens(const std::string& doc_id) const;
    std::vector<std::string> ids() const;

    template <typename F>
    void for_each(F&& fn) const {
        for (const auto& [id, entry] : docs_) fn(entry.doc, entry.tokens);
    }

private:
    struct Entry {
        Document doc;
        TokenizedText tokens;
    };
    std::map<std::string, Entry> docs_;
};

Corpus parse_corpus(std::istream& in, const std::string& source = "<corpus>");
Corpus parse_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const Corpus& corpus);

/// "title [SEP] abstract": the encoder's view of a document.
std::string dense_text(const Document& doc);
/// "title abstract": the lexical index's view of a document.
std::string lexical_text(const Document& doc);

struct Query {
    std::string query_id;
    std::string schema_name;
    std::vector<EntityRef> query_entities;
    std::string rendered_text;
    std::vector<EntityRef> answer_entities;
    std::set<std::string> gold_doc_ids;
    std::vector<std::string> record_ids;

    /// Grouping key for leakage-free splits: normalized canonical of e1.
    std::string group_key() const;
};

std::string query_id_for(const RelationSchema& schema, const std::vector<EntityRef>& query_entities);

/// Template rendering for one record; gold set is the record's document.
Query render_query(const KbRecord& record, const RelationSchema& schema,
                   const SynonymTable& synonyms = {});

/// Renders every record and merges those sharing (schema, query tuple):
/// gold documents and answers are unioned. Order is first appearance.
std::vector<Query> build_queries(const std::vector<KbRecord>& records,
                                 const RelationSchema& schema,
                                 const SynonymTable& synonyms = {});

void write_queries(std::ostream& out, const std::vector<Query>& queries);
std::vector<Query> read_queries(std::istream& in, const std::string& source = "<queries>");

enum class Split : std::uint8_t { train, dev, test };

const char* to_string(Split split);
Split parse_split(std::string_view name);

struct SplitAssignment {
    std::map<std::string, Split> groups;

    std::optional<Split> find(const std::string& group_key) const;
    Split of(const Query& query) const;
};

using SplitRatios = std::array<double, 3>;

/// Assigns whole e1 groups to train/dev/test. Groups are sorted, shuffled
/// with `seed`, then cut so each split's query count lands near its ratio.
SplitAssignment split_dataset(const std::vector<Query>& queries, const SplitRatios& ratios,
                              std::uint64_t seed);

void write_split(std::ostream& out, const SplitAssignment& split);
SplitAssignment read_split(std::istream& in, const std::string& source = "<split>");

}  // namespace kbdr
