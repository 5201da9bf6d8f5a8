#include "kbdr/kbdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "kbdr/error.hpp"
#include "kbdr/random.hpp"

namespace kbdr {

using nlohmann::json;

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            cells.emplace_back(line.substr(start));
            return cells;
        }
        cells.emplace_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::string placeholder(const std::string& slot) { return "{" + slot + "}"; }

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t count = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++count;
    }
    return count;
}

json entity_to_json(const EntityRef& e) {
    return json{{"type", e.entity_type}, {"canonical", e.canonical}, {"synonyms", e.synonyms}};
}

EntityRef entity_from_json(const json& j) {
    return EntityRef{j.at("canonical").get<std::string>(),
                     j.at("synonyms").get<std::vector<std::string>>(),
                     j.at("type").get<std::string>()};
}

void append_unique_entity(std::vector<EntityRef>& into, const EntityRef& e) {
    const auto key = normalize(e.canonical);
    for (const auto& existing : into) {
        if (normalize(existing.canonical) == key) return;
    }
    into.push_back(e);
}

}  // namespace

// ---------------------------------------------------------------------------
// RelationSchema

const std::string& RelationSchema::slot_name(std::size_t index) const {
    return index < query_slots.size() ? query_slots[index] : answer_slot;
}

std::optional<std::size_t> RelationSchema::slot_index(std::string_view slot) const {
    for (std::size_t i = 0; i < slot_count(); ++i) {
        if (slot_name(i) == slot) return i;
    }
    return std::nullopt;
}

SurfaceForm RelationSchema::surface_form(std::string_view slot) const {
    const auto it = surface_forms.find(std::string(slot));
    return it == surface_forms.end() ? SurfaceForm::canonical : it->second;
}

void RelationSchema::validate() const {
    if (name.empty()) throw ConfigError("schema without a name");
    if (query_slots.empty()) throw ConfigError("schema " + name + ": no query slots");
    if (answer_slot.empty()) throw ConfigError("schema " + name + ": no answer slot");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < slot_count(); ++i) {
        if (slot_name(i).empty()) throw ConfigError("schema " + name + ": empty slot name");
        if (!seen.insert(slot_name(i)).second) {
            throw ConfigError("schema " + name + ": duplicate slot " + slot_name(i));
        }
    }
    for (const auto& slot : query_slots) {
        const auto n = count_occurrences(template_text, placeholder(slot));
        if (n != 1) {
            throw ConfigError("schema " + name + ": template must contain " + placeholder(slot) +
                              " exactly once (found " + std::to_string(n) + ")");
        }
    }
    if (count_occurrences(template_text, placeholder(answer_slot)) != 0) {
        throw ConfigError("schema " + name + ": template must not mention the answer slot");
    }
    for (const auto& [slot, form] : surface_forms) {
        if (!slot_index(slot)) throw ConfigError("schema " + name + ": unknown slot " + slot);
    }
}

RelationSchema precision_oncology_schema() {
    return RelationSchema{"PO",
                          {"Gene", "Variant"},
                          "Treatment",
                          "Treatment for gene {Gene} and variant {Variant}?",
                          {}};
}

RelationSchema ptm_schema() {
    return RelationSchema{"PTM",
                          {"Protein", "PTM", "Residue"},
                          "Catalyst",
                          "Catalysts for the {PTM} of {Protein} at {Residue}?",
                          {{"Protein", SurfaceForm::canonical_with_full_name}}};
}

// ---------------------------------------------------------------------------
// SynonymTable

void SynonymTable::add(const std::string& entity_type, const std::string& canonical,
                       const std::string& synonym, bool is_full_name) {
    const auto key = std::make_pair(entity_type, normalize(canonical));
    auto [it, inserted] = entries_.try_emplace(key);
    Entry& entry = it->second;
    if (inserted) {
        entry.entity_type = entity_type;
        entry.canonical = trim(canonical);
        entry.synonyms.push_back(entry.canonical);
    }
    const auto value = trim(synonym);
    if (value.empty()) return;
    const auto norm = normalize(value);
    const bool known = std::any_of(entry.synonyms.begin(), entry.synonyms.end(),
                                   [&](const std::string& s) { return normalize(s) == norm; });
    if (!known) entry.synonyms.push_back(value);
    if (is_full_name) entry.full_name = value;
}

EntityRef SynonymTable::resolve(const std::string& entity_type, const std::string& name) const {
    const auto it = entries_.find({entity_type, normalize(name)});
    if (it == entries_.end()) {
        const auto canonical = trim(name);
        return EntityRef{canonical, {canonical}, entity_type};
    }
    return EntityRef{it->second.canonical, it->second.synonyms, entity_type};
}

std::optional<std::string> SynonymTable::full_name(const std::string& entity_type,
                                                   const std::string& canonical) const {
    const auto it = entries_.find({entity_type, normalize(canonical)});
    if (it == entries_.end()) return std::nullopt;
    return it->second.full_name;
}

SynonymTable SynonymTable::parse(std::istream& in, const std::string& source) {
    SynonymTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) continue;
        const auto cells = split_tabs(line);
        if (cells.size() != 3 && cells.size() != 4) {
            throw ParseError(source, line_no, "expected 3 or 4 columns, found " +
                                                  std::to_string(cells.size()));
        }
        if (cells[0].empty() || cells[1].empty()) {
            throw ParseError(source, line_no, "empty entity type or canonical name");
        }
        bool full = false;
        if (cells.size() == 4) {
            if (cells[3] == "full_name") {
                full = true;
            } else if (!cells[3].empty()) {
                throw ParseError(source, line_no, "unknown synonym flag '" + cells[3] + "'");
            }
        }
        table.add(cells[0], cells[1], cells[2], full);
    }
    return table;
}

SynonymTable SynonymTable::load(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse(in, path.string());
}

void SynonymTable::write(std::ostream& out) const {
    for (const auto& [key, entry] : entries_) {
        for (std::size_t i = 1; i < entry.synonyms.size(); ++i) {
            out << entry.entity_type << '\t' << entry.canonical << '\t' << entry.synonyms[i];
            if (entry.full_name && *entry.full_name == entry.synonyms[i]) out << "\tfull_name";
            out << '\n';
        }
        if (entry.synonyms.size() == 1) {
            out << entry.entity_type << '\t' << entry.canonical << '\t' << entry.canonical << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// KB records

std::vector<EntityRef> KbRecord::slot_entities(std::size_t index) const {
    if (index < query_entities.size()) return {query_entities[index]};
    return answers;
}

KbParseResult parse_kb(std::istream& in, const RelationSchema& schema,
                       const SynonymTable& synonyms, const std::string& source) {
    const std::size_t columns = schema.slot_count() + 1;
    KbParseResult result;
    std::unordered_map<std::string, std::size_t> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (trim(line).empty()) continue;
        const auto cells = split_tabs(line);
        if (cells.size() != columns) {
            throw ParseError(source, line_no, "expected " + std::to_string(columns) +
                                                  " columns, found " + std::to_string(cells.size()));
        }
        KbRecord record;
        record.line = line_no;
        for (std::size_t i = 0; i < schema.query_slots.size(); ++i) {
            const auto value = trim(cells[i]);
            if (value.empty()) {
                throw ParseError(source, line_no, "empty query slot " + schema.query_slots[i]);
            }
            record.query_entities.push_back(synonyms.resolve(schema.query_slots[i], value));
        }
        std::string_view answer_cell = cells[schema.answer_index()];
        std::size_t start = 0;
        while (start <= answer_cell.size()) {
            auto end = answer_cell.find(answer_separator, start);
            if (end == std::string_view::npos) end = answer_cell.size();
            const auto value = trim(answer_cell.substr(start, end - start));
            if (!value.empty()) append_unique_entity(record.answers, synonyms.resolve(schema.answer_slot, value));
            start = end + 1;
        }
        record.doc_id = trim(cells.back());
        if (record.doc_id.empty()) throw ParseError(source, line_no, "empty doc_id");

        std::string id;
        for (const auto& e : record.query_entities) id += e.canonical + "|";
        for (std::size_t i = 0; i < record.answers.size(); ++i) {
            id += (i ? "+" : "") + record.answers[i].canonical;
        }
        id += "@" + record.doc_id;
        const auto [it, fresh] = seen_ids.emplace(id, line_no);
        if (!fresh) {
            throw ParseError(source, line_no, "duplicate record_id " + id + " (first seen at line " +
                                                  std::to_string(it->second) + ")");
        }
        record.record_id = std::move(id);

        if (record.has_answer()) {
            result.records.push_back(std::move(record));
        } else {
            ++result.dropped_incomplete;
            result.answerless.push_back(std::move(record));
        }
    }
    return result;
}

KbParseResult parse_kb(const std::filesystem::path& path, const RelationSchema& schema,
                       const SynonymTable& synonyms) {
    auto in = open_input(path);
    return parse_kb(in, schema, synonyms, path.string());
}

void write_kb(std::ostream& out, const std::vector<KbRecord>& records) {
    for (const auto& r : records) {
        for (const auto& e : r.query_entities) out << e.canonical << '\t';
        for (std::size_t i = 0; i < r.answers.size(); ++i) {
            if (i) out << answer_separator;
            out << r.answers[i].canonical;
        }
        out << '\t' << r.doc_id << '\n';
    }
}

// ---------------------------------------------------------------------------
// Corpus

void Corpus::add(Document doc) {
    if (doc.doc_id.empty()) throw DataError("document with empty doc_id");
    if (docs_.count(doc.doc_id)) throw DataError("duplicate doc_id " + doc.doc_id);
    auto tokens = tokenize_document(doc.title, doc.abstract_text);
    const auto id = doc.doc_id;
    docs_.emplace(id, Entry{std::move(doc), std::move(tokens)});
}

const Document* Corpus::find(const std::string& doc_id) const {
    const auto it = docs_.find(doc_id);
    return it == docs_.end() ? nullptr : &it->second.doc;
}

const TokenizedText* Corpus::tokens(const std::string& doc_id) const {
    const auto it = docs_.find(doc_id);
    return it == docs_.end() ? nullptr : &it->second.tokens;
}

std::vector<std::string> Corpus::ids() const {
    std::vector<std::string> out;
    out.reserve(docs_.size());
    for (const auto& [id, entry] : docs_) out.push_back(id);
    return out;
}

Corpus parse_corpus(std::istream& in, const std::string& source) {
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw ParseError(source, line_no, "expected a JSON object");
        Document doc;
        for (const char* field : {"doc_id", "title", "abstract"}) {
            if (!j.contains(field) || !j[field].is_string()) {
                throw ParseError(source, line_no, std::string("missing string field '") + field + "'");
            }
        }
        doc.doc_id = j["doc_id"].get<std::string>();
        doc.title = j["title"].get<std::string>();
        doc.abstract_text = j["abstract"].get<std::string>();
        if (corpus.contains(doc.doc_id)) {
            throw ParseError(source, line_no, "duplicate doc_id " + doc.doc_id);
        }
        try {
            corpus.add(std::move(doc));
        } catch (const DataError& e) {
            throw ParseError(source, line_no, e.what());
        }
    }
    return corpus;
}

Corpus parse_corpus(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse_corpus(in, path.string());
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    corpus.for_each([&](const Document& d, const TokenizedText&) {
        out << json{{"doc_id", d.doc_id}, {"title", d.title}, {"abstract", d.abstract_text}}.dump()
            << '\n';
    });
}

std::string dense_text(const Document& doc) { return doc.title + " [SEP] " + doc.abstract_text; }

std::string lexical_text(const Document& doc) { return doc.title + " " + doc.abstract_text; }

// ---------------------------------------------------------------------------
// Queries

std::string Query::group_key() const {
    return query_entities.empty() ? std::string{} : normalize(query_entities.front().canonical);
}

std::string query_id_for(const RelationSchema& schema, const std::vector<EntityRef>& query_entities) {
    std::string id = schema.name;
    for (const auto& e : query_entities) {
        id += ':';
        for (char c : e.canonical) {
            id += (c == ' ' || c == '\t' || c == ':') ? '_' : c;
        }
    }
    return id;
}

Query render_query(const KbRecord& record, const RelationSchema& schema,
                   const SynonymTable& synonyms) {
    Query q;
    q.schema_name = schema.name;
    q.query_entities = record.query_entities;
    q.query_id = query_id_for(schema, record.query_entities);
    q.rendered_text = schema.template_text;
    for (std::size_t i = 0; i < schema.query_slots.size(); ++i) {
        const auto& slot = schema.query_slots[i];
        const auto& entity = record.query_entities[i];
        std::string surface = entity.canonical;
        if (schema.surface_form(slot) == SurfaceForm::canonical_with_full_name) {
            if (auto full = synonyms.full_name(slot, entity.canonical);
                full && normalize(*full) != normalize(entity.canonical)) {
                surface += " (" + *full + ")";
            }
        }
        const auto ph = placeholder(slot);
        const auto pos = q.rendered_text.find(ph);
        q.rendered_text.replace(pos, ph.size(), surface);
    }
    q.answer_entities = record.answers;
    q.gold_doc_ids.insert(record.doc_id);
    q.record_ids.push_back(record.record_id);
    return q;
}

std::vector<Query> build_queries(const std::vector<KbRecord>& records,
                                 const RelationSchema& schema, const SynonymTable& synonyms) {
    std::vector<Query> queries;
    std::unordered_map<std::string, std::size_t> by_tuple;
    for (const auto& record : records) {
        std::string key;
        for (const auto& e : record.query_entities) key += normalize(e.canonical) + '\x1f';
        const auto it = by_tuple.find(key);
        if (it == by_tuple.end()) {
            by_tuple.emplace(key, queries.size());
            queries.push_back(render_query(record, schema, synonyms));
            continue;
        }
        Query& q = queries[it->second];
        q.gold_doc_ids.insert(record.doc_id);
        q.record_ids.push_back(record.record_id);
        for (const auto& a : record.answers) append_unique_entity(q.answer_entities, a);
    }
    return queries;
}

void write_queries(std::ostream& out, const std::vector<Query>& queries) {
    for (const auto& q : queries) {
        json j;
        j["query_id"] = q.query_id;
        j["schema"] = q.schema_name;
        j["text"] = q.rendered_text;
        j["query_entities"] = json::array();
        for (const auto& e : q.query_entities) j["query_entities"].push_back(entity_to_json(e));
        j["answers"] = json::array();
        for (const auto& e : q.answer_entities) j["answers"].push_back(entity_to_json(e));
        j["gold"] = q.gold_doc_ids;
        j["records"] = q.record_ids;
        out << j.dump() << '\n';
    }
}

std::vector<Query> read_queries(std::istream& in, const std::string& source) {
    std::vector<Query> queries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            Query q;
            q.query_id = j.at("query_id").get<std::string>();
            q.schema_name = j.at("schema").get<std::string>();
            q.rendered_text = j.at("text").get<std::string>();
            for (const auto& e : j.at("query_entities")) q.query_entities.push_back(entity_from_json(e));
            for (const auto& e : j.at("answers")) q.answer_entities.push_back(entity_from_json(e));
            for (const auto& d : j.at("gold")) q.gold_doc_ids.insert(d.get<std::string>());
            q.record_ids = j.at("records").get<std::vector<std::string>>();
            queries.push_back(std::move(q));
        } catch (const json::exception& e) {
            throw ParseError(source, line_no, e.what());
        }
    }
    return queries;
}

// ---------------------------------------------------------------------------
// Splits

const char* to_string(Split split) {
    switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "dev") return Split::dev;
    if (name == "test") return Split::test;
    throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::optional<Split> SplitAssignment::find(const std::string& group_key) const {
    const auto it = groups.find(group_key);
    if (it == groups.end()) return std::nullopt;
    return it->second;
}

Split SplitAssignment::of(const Query& query) const {
    const auto split = find(query.group_key());
    if (!split) throw DataError("query " + query.query_id + " has no split assignment");
    return *split;
}

SplitAssignment split_dataset(const std::vector<Query>& queries, const SplitRatios& ratios,
                              std::uint64_t seed) {
    double sum = 0.0;
    std::size_t nonzero = 0;
    for (double r : ratios) {
        if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
        sum += r;
        if (r > 0.0) ++nonzero;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

    std::map<std::string, std::size_t> group_sizes;
    for (const auto& q : queries) ++group_sizes[q.group_key()];

    SplitAssignment out;
    if (group_sizes.empty()) return out;

    const auto largest = static_cast<std::size_t>(
        std::max_element(ratios.begin(), ratios.end()) - ratios.begin());
    if (group_sizes.size() == 1) {
        out.groups.emplace(group_sizes.begin()->first, static_cast<Split>(largest));
        return out;
    }
    if (group_sizes.size() < nonzero) {
        throw DataError("split needs at least " + std::to_string(nonzero) + " groups, found " +
                        std::to_string(group_sizes.size()));
    }

    std::vector<std::string> keys;
    for (const auto& [key, size] : group_sizes) keys.push_back(key);
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(keys);

    const double total = static_cast<double>(queries.size());
    std::array<double, 3> upper{};
    double acc = 0.0;
    std::size_t last_nonzero = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        acc += ratios[s];
        upper[s] = acc * total;
        if (ratios[s] > 0.0) last_nonzero = s;
    }

    std::array<std::vector<std::string>, 3> members;
    double filled = 0.0;
    for (const auto& key : keys) {
        const double size = static_cast<double>(group_sizes[key]);
        const double midpoint = filled + size / 2.0;
        std::size_t target = last_nonzero;
        for (std::size_t s = 0; s < 3; ++s) {
            if (ratios[s] > 0.0 && midpoint < upper[s]) {
                target = s;
                break;
            }
        }
        members[target].push_back(key);
        filled += size;
    }
    // A non-zero split may come out empty when groups are coarse; move one
    // group over from the split holding the most groups.
    for (std::size_t s = 0; s < 3; ++s) {
        if (ratios[s] == 0.0 || !members[s].empty()) continue;
        std::size_t donor = 0;
        for (std::size_t t = 1; t < 3; ++t) {
            if (members[t].size() > members[donor].size()) donor = t;
        }
        members[s].push_back(members[donor].back());
        members[donor].pop_back();
    }
    for (std::size_t s = 0; s < 3; ++s) {
        for (const auto& key : members[s]) out.groups.emplace(key, static_cast<Split>(s));
    }
    return out;
}

void write_split(std::ostream& out, const SplitAssignment& split) {
    for (const auto& [key, s] : split.groups) out << key << '\t' << to_string(s) << '\n';
}

SplitAssignment read_split(std::istream& in, const std::string& source) {
    SplitAssignment split;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) continue;
        const auto cells = split_tabs(line);
        if (cells.size() != 2) throw ParseError(source, line_no, "expected 2 columns");
        try {
            split.groups[cells[0]] = parse_split(cells[1]);
        } catch (const ConfigError& e) {
            throw ParseError(source, line_no, e.what());
        }
    }
    return split;
}

}  // namespace kbdr
