#include "kbdr/sampling.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "kbdr/error.hpp"
#include "kbdr/random.hpp"

namespace kbdr {

using nlohmann::json;

void SamplerConfig::validate() const {
    if (per_class_cap < 1) throw ConfigError("sampler per_class_cap must be >= 1");
}

PositiveSet build_positives(const RelationSchema& schema, const std::vector<KbRecord>& records,
                            const Corpus& corpus, const MarginClassTable& table) {
    struct Pending {
        KbRecord merged;
        std::string query_id;
    };
    std::vector<Pending> pending;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    PositiveSet out;
    for (const auto& record : records) {
        if (!corpus.contains(record.doc_id)) {
            ++out.skipped_unresolved;
            continue;
        }
        auto qid = query_id_for(schema, record.query_entities);
        const auto key = std::make_pair(qid, record.doc_id);
        const auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, pending.size());
            pending.push_back({record, std::move(qid)});
            continue;
        }
        auto& answers = pending[it->second].merged.answers;
        for (const auto& a : record.answers) {
            const bool known = std::any_of(answers.begin(), answers.end(), [&](const EntityRef& e) {
                return normalize(e.canonical) == normalize(a.canonical);
            });
            if (!known) answers.push_back(a);
        }
    }
    for (const auto& p : pending) {
        const auto assignment = classify_positive(table, p.merged, *corpus.tokens(p.merged.doc_id));
        out.examples.push_back(TrainingExample{p.query_id, p.merged.doc_id, p.merged.doc_id, 1,
                                               assignment.mu, assignment.class_id, SampleSource::kb});
    }
    return out;
}

NegativeMiner::NegativeMiner(const MarginClassTable& table, const std::vector<KbRecord>& records,
                             const std::vector<KbRecord>& answerless, const Corpus& corpus,
                             const InvertedIndex* bm25, SamplerConfig config)
    : table_(table), corpus_(corpus), bm25_(bm25), config_(config), corpus_ids_(corpus.ids()) {
    config_.validate();
    for (const auto* list : {&records, &answerless}) {
        for (const auto& record : *list) {
            const auto* tokens = corpus.tokens(record.doc_id);
            if (!tokens) continue;
            MatchPattern g = text_match_pattern(record, *tokens);
            if (!record.has_answer()) g.set(g.size() - 1, true);
            by_head_[normalize(record.query_entities.front().canonical)].push_back(records_.size());
            records_.push_back({&record, g});
        }
    }
}

CandidatePool NegativeMiner::candidates(const Query& query) const {
    CandidatePool pool;
    for (int id : table_.class_ids(Polarity::negative)) pool.by_class[id];

    KbRecord anchor;
    anchor.query_entities = query.query_entities;
    anchor.answers = query.answer_entities;

    pool.random_excluded = query.gold_doc_ids;
    if (const auto it = by_head_.find(query.group_key()); it != by_head_.end()) {
        for (std::size_t i : it->second) pool.random_excluded.insert(records_[i].record->doc_id);
    }

    // Hardest (lowest) class wins when several records point at one document.
    std::map<std::string, std::pair<int, SampleSource>> assigned;
    for (const auto& view : records_) {
        const auto& doc = view.record->doc_id;
        if (query.gold_doc_ids.count(doc)) continue;
        const auto f = kb_match_pattern(anchor, *view.record);
        const auto verdict = table_.lookup_negative(f, view.own_g);
        if (verdict.verdict != NegativeLookup::Verdict::negative) continue;
        const int cls = verdict.assignment->class_id;
        const auto [it, fresh] = assigned.emplace(doc, std::make_pair(cls, SampleSource::kb));
        if (!fresh && cls < it->second.first) it->second.first = cls;
    }
    if (bm25_) {
        if (const auto cls = table_.class_for_source(SampleSource::bm25)) {
            for (const auto& doc :
                 bm25_negatives(*bm25_, corpus_, query, query.gold_doc_ids, config_.bm25_pool_size)) {
                assigned.emplace(doc, std::make_pair(*cls, SampleSource::bm25));
            }
        }
    }
    for (const auto& [doc, cls] : assigned) {
        pool.by_class[cls.first].push_back({doc, cls.second});
    }
    return pool;
}

std::vector<TrainingExample> NegativeMiner::mine(const TrainingExample& positive, const Query& query,
                                                 const CandidatePool& pool) const {
    Rng rng(derive_seed(config_.seed, positive.query_id + '\x1f' + positive.anchor_doc_id));
    auto by_class = pool.by_class;

    if (const auto cls = table_.class_for_source(SampleSource::random); cls && !corpus_ids_.empty()) {
        std::set<std::string> taken;
        for (const auto& [id, list] : by_class) {
            for (const auto& c : list) taken.insert(c.doc_id);
        }
        std::set<std::string> drawn;
        auto& target = by_class[*cls];
        const std::size_t attempts = 20 * config_.random_pool_size + 20;
        for (std::size_t a = 0; a < attempts && drawn.size() < config_.random_pool_size; ++a) {
            const auto& doc = corpus_ids_[rng.uniform_index(corpus_ids_.size())];
            if (pool.random_excluded.count(doc) || taken.count(doc) || drawn.count(doc)) continue;
            drawn.insert(doc);
            target.push_back({doc, SampleSource::random});
        }
    }

    std::vector<TrainingExample> out;
    for (const auto& [cls, list] : by_class) {
        const double mu = *table_.mu(cls, Polarity::negative);
        for (std::size_t i : rng.sample_indices(list.size(), config_.per_class_cap)) {
            const auto& c = list[i];
            if (query.gold_doc_ids.count(c.doc_id)) continue;
            out.push_back(TrainingExample{positive.query_id, c.doc_id, positive.anchor_doc_id, 0, mu,
                                          cls, c.source});
        }
    }
    return out;
}

std::vector<TrainingExample> NegativeMiner::mine(const TrainingExample& positive,
                                                 const Query& query) const {
    return mine(positive, query, candidates(query));
}

TrainingSet build_training_set(const RelationSchema& schema, const std::vector<Query>& queries,
                               const KbParseResult& kb, const Corpus& corpus,
                               const MarginClassTable& table, const InvertedIndex* bm25,
                               const SamplerConfig& config) {
    std::unordered_map<std::string, const Query*> by_id;
    for (const auto& q : queries) by_id.emplace(q.query_id, &q);

    TrainingSet set;
    auto positives = build_positives(schema, kb.records, corpus, table);
    set.skipped_unresolved = positives.skipped_unresolved;

    NegativeMiner miner(table, kb.records, kb.answerless, corpus, bm25, config);
    std::unordered_map<std::string, CandidatePool> pools;
    for (const auto& pos : positives.examples) {
        const auto it = by_id.find(pos.query_id);
        if (it == by_id.end()) continue;
        const Query& query = *it->second;
        auto pool_it = pools.find(query.query_id);
        if (pool_it == pools.end()) pool_it = pools.emplace(query.query_id, miner.candidates(query)).first;
        set.examples.push_back(pos);
        ++set.positive_histogram[pos.class_id];
        for (auto& neg : miner.mine(pos, query, pool_it->second)) {
            ++set.negative_histogram[neg.class_id];
            set.examples.push_back(std::move(neg));
        }
    }
    return set;
}

double AuditReport::fraction(std::size_t slot) const {
    return negatives == 0 ? 0.0
                          : static_cast<double>(slot_mentions.at(slot)) / static_cast<double>(negatives);
}

AuditReport audit_negatives(const std::vector<TrainingExample>& examples,
                            const std::vector<Query>& queries, const Corpus& corpus,
                            const RelationSchema& schema) {
    std::unordered_map<std::string, const Query*> by_id;
    for (const auto& q : queries) by_id.emplace(q.query_id, &q);

    AuditReport report;
    report.slot_names = schema.query_slots;
    report.slot_mentions.assign(schema.query_slots.size(), 0);
    for (const auto& ex : examples) {
        if (ex.label != 0) continue;
        const auto it = by_id.find(ex.query_id);
        const auto* tokens = corpus.tokens(ex.doc_id);
        if (it == by_id.end() || !tokens) continue;
        ++report.negatives;
        const auto& entities = it->second->query_entities;
        for (std::size_t i = 0; i < entities.size() && i < report.slot_mentions.size(); ++i) {
            if (text_match(entities[i], *tokens)) ++report.slot_mentions[i];
        }
    }
    return report;
}

std::vector<std::vector<TrainingExample>> assemble_batches(
    const std::vector<TrainingExample>& examples, std::size_t batch_size, std::uint64_t seed) {
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    Rng rng(derive_seed(seed, "batches"));

    std::vector<std::vector<std::size_t>> groups;
    std::map<std::pair<std::string, std::string>, std::size_t> group_of;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto key = std::make_pair(examples[i].query_id, examples[i].anchor_doc_id);
        auto [it, fresh] = group_of.emplace(key, groups.size());
        if (fresh) groups.emplace_back();
        groups[it->second].push_back(i);
    }
    rng.shuffle(groups);

    std::vector<std::vector<TrainingExample>> batches;
    for (const auto& group : groups) {
        std::vector<std::size_t> positives;
        std::map<int, std::vector<std::size_t>> negatives;
        for (std::size_t i : group) {
            if (examples[i].label == 1) {
                positives.push_back(i);
            } else {
                negatives[examples[i].class_id].push_back(i);
            }
        }
        rng.shuffle(positives);
        for (auto& [cls, list] : negatives) rng.shuffle(list);

        std::vector<std::size_t> order = positives;
        for (std::size_t round = 0; order.size() < group.size(); ++round) {
            for (const auto& [cls, list] : negatives) {
                if (round < list.size()) order.push_back(list[round]);
            }
        }
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            std::vector<TrainingExample> batch;
            for (std::size_t j = start; j < std::min(order.size(), start + batch_size); ++j) {
                batch.push_back(examples[order[j]]);
            }
            batches.push_back(std::move(batch));
        }
    }
    return batches;
}

void write_examples(std::ostream& out, const std::vector<TrainingExample>& examples) {
    for (const auto& ex : examples) {
        json j;
        j["query_id"] = ex.query_id;
        j["doc_id"] = ex.doc_id;
        j["anchor"] = ex.anchor_doc_id;
        j["label"] = ex.label;
        j["mu"] = ex.mu;
        j["class"] = ex.class_id;
        j["source"] = to_string(ex.source);
        out << j.dump() << '\n';
    }
}

std::vector<TrainingExample> read_examples(std::istream& in, const std::string& source) {
    std::vector<TrainingExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            TrainingExample ex;
            ex.query_id = j.at("query_id").get<std::string>();
            ex.doc_id = j.at("doc_id").get<std::string>();
            ex.anchor_doc_id = j.value("anchor", ex.doc_id);
            ex.label = j.at("label").get<int>();
            ex.mu = j.at("mu").get<double>();
            ex.class_id = j.at("class").get<int>();
            ex.source = parse_source(j.at("source").get<std::string>());
            if (ex.label != 0 && ex.label != 1) throw ParseError(source, line_no, "label must be 0 or 1");
            out.push_back(std::move(ex));
        } catch (const json::exception& e) {
            throw ParseError(source, line_no, e.what());
        } catch (const ConfigError& e) {
            throw ParseError(source, line_no, e.what());
        }
    }
    return out;
}

}  // namespace kbdr
