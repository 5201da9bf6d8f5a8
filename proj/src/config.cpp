#include "kbdr/config.hpp"

#include <cstdlib>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "kbdr/error.hpp"
#include "kbdr/random.hpp"

namespace kbdr {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> known) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
    }
}

const char* surface_name(SurfaceForm f) {
    return f == SurfaceForm::canonical ? "canonical" : "canonical_with_full_name";
}

SurfaceForm parse_surface(const std::string& name) {
    if (name == "canonical") return SurfaceForm::canonical;
    if (name == "canonical_with_full_name") return SurfaceForm::canonical_with_full_name;
    throw ConfigError("unknown surface form '" + name + "'");
}

json schema_to_json(const RelationSchema& s) {
    json forms = json::object();
    for (const auto& [slot, form] : s.surface_forms) forms[slot] = surface_name(form);
    return {{"query_slots", s.query_slots},
            {"answer_slot", s.answer_slot},
            {"template", s.template_text},
            {"surface_forms", forms}};
}

RelationSchema schema_from_json(const std::string& name, const json& j) {
    const std::string where = "schemas." + name;
    reject_unknown(j, where, {"query_slots", "answer_slot", "template", "surface_forms"});
    RelationSchema s;
    s.name = name;
    read(j, "query_slots", s.query_slots, where);
    read(j, "answer_slot", s.answer_slot, where);
    read(j, "template", s.template_text, where);
    if (j.contains("surface_forms")) {
        std::map<std::string, std::string> forms;
        read(j, "surface_forms", forms, where);
        for (const auto& [slot, form] : forms) s.surface_forms[slot] = parse_surface(form);
    }
    s.validate();
    return s;
}

std::vector<std::string> slot_names(const RelationSchema& schema) {
    auto names = schema.query_slots;
    names.push_back(schema.answer_slot);
    return names;
}

}  // namespace

json margin_table_to_json(const MarginClassTable& table) {
    json rules = json::array();
    for (const auto& r : table.rules()) {
        json patterns = json::array();
        for (const auto& p : r.patterns) patterns.push_back(p.to_string());
        json overrides = json::array();
        for (auto slot : r.g_zero_slots) overrides.push_back(table.slot_names().at(slot));
        rules.push_back({{"class", r.class_id},
                         {"mu", r.mu},
                         {"polarity", to_string(r.polarity)},
                         {"patterns", patterns},
                         {"g_overrides", overrides},
                         {"source", to_string(r.source)}});
    }
    json unsampled = json::array();
    for (const auto& p : table.unsampled_negative_patterns()) unsampled.push_back(p.to_string());
    return {{"rules", rules}, {"unsampled_negative_patterns", unsampled}};
}

MarginClassTable margin_table_from_json(const json& j, const RelationSchema& schema) {
    const std::string where = "margin_tables." + schema.name;
    reject_unknown(j, where, {"rules", "unsampled_negative_patterns"});
    if (!j.contains("rules") || !j.at("rules").is_array()) throw ConfigError(where + ".rules must be a list");
    const auto names = slot_names(schema);
    std::vector<MarginRule> rules;
    for (const auto& r : j.at("rules")) {
        const std::string rw = where + ".rules[]";
        reject_unknown(r, rw, {"class", "mu", "polarity", "patterns", "g_overrides", "source"});
        if (!r.contains("class") || !r.contains("mu") || !r.contains("polarity")) {
            throw ConfigError(rw + " needs class, mu and polarity");
        }
        MarginRule rule;
        read(r, "class", rule.class_id, rw);
        read(r, "mu", rule.mu, rw);
        std::string polarity;
        read(r, "polarity", polarity, rw);
        rule.polarity = parse_polarity(polarity);
        std::string source = "kb";
        read(r, "source", source, rw);
        rule.source = parse_source(source);
        std::vector<std::string> patterns;
        read(r, "patterns", patterns, rw);
        for (const auto& p : patterns) {
            auto spec = PatternSpec::parse(p);
            if (spec.size() != names.size()) {
                throw ConfigError("pattern '" + p + "' does not have " + std::to_string(names.size()) + " slots");
            }
            rule.patterns.push_back(std::move(spec));
        }
        std::vector<std::string> overrides;
        read(r, "g_overrides", overrides, rw);
        for (const auto& slot : overrides) {
            const auto it = std::find(names.begin(), names.end(), slot);
            if (it == names.end()) throw ConfigError("g_overrides names unknown slot '" + slot + "'");
            rule.g_zero_slots.push_back(static_cast<std::size_t>(it - names.begin()));
        }
        rules.push_back(std::move(rule));
    }
    std::vector<PatternSpec> unsampled;
    std::vector<std::string> raw;
    read(j, "unsampled_negative_patterns", raw, where);
    for (const auto& p : raw) unsampled.push_back(PatternSpec::parse(p));
    return MarginClassTable(schema.name, names, std::move(rules), std::move(unsampled));
}

SeedPlan seed_plan(std::uint64_t root) {
    SeedPlan p;
    p.root = root;
    p.synth = root;
    p.split = derive_seed(root, "split");
    p.sampler = derive_seed(root, "sampler");
    p.init = derive_seed(root, "init");
    p.train = derive_seed(root, "train");
    return p;
}

SynthSpec PipelineConfig::synth_spec() const {
    SynthSpec s = synth;
    s.seed = seeds().synth;
    return s;
}

SamplerConfig PipelineConfig::sampler_config() const {
    SamplerConfig s = sampler;
    s.seed = seeds().sampler;
    return s;
}

TrainConfig PipelineConfig::train_config() const {
    TrainConfig t = train;
    t.seed = seeds().train;
    return t;
}

PipelineConfig::PipelineConfig() {
    for (auto s : {precision_oncology_schema(), ptm_schema()}) {
        margin_tables.emplace(s.name, default_margin_table(s));
        schemas.emplace(s.name, std::move(s));
    }
}

const RelationSchema& PipelineConfig::schema() const {
    const auto it = schemas.find(dataset);
    if (it == schemas.end()) throw ConfigError("dataset '" + dataset + "' has no schema");
    return it->second;
}

MarginClassTable PipelineConfig::margin_table() const {
    const auto it = margin_tables.find(dataset);
    if (it == margin_tables.end()) throw ConfigError("dataset '" + dataset + "' has no margin table");
    return select_margin_table(it->second, margin_mode, binary_margins);
}

void PipelineConfig::validate() const {
    const auto& s = schema();
    s.validate();
    const auto table = margin_table();
    if (table.slot_names() != slot_names(s)) {
        throw ConfigError("margin table slots do not match schema " + s.name);
    }
    double sum = 0.0;
    for (double r : split_ratios) {
        if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    sampler.validate();
    encoder.validate();
    train.validate();
    bm25.validate();
    synth.validate();
    if (eval_cutoffs.empty()) throw ConfigError("eval cutoffs must not be empty");
    for (auto k : eval_cutoffs) {
        if (k == 0) throw ConfigError("eval cutoffs must be >= 1");
    }
    if (search_k == 0) throw ConfigError("search k must be >= 1");
}

PipelineConfig config_from_json(const json& j) {
    reject_unknown(j, "config",
                   {"seed", "dataset", "schemas", "margin_tables", "split", "sampler", "encoder", "train",
                    "distance_space", "bm25", "eval", "synth", "paths"});
    PipelineConfig c;
    read(j, "seed", c.seed, "config");
    read(j, "dataset", c.dataset, "config");
    if (j.contains("schemas")) {
        if (!j.at("schemas").is_object()) throw ConfigError("schemas must be an object");
        for (const auto& [name, body] : j.at("schemas").items()) c.schemas[name] = schema_from_json(name, body);
    }
    if (j.contains("margin_tables")) {
        if (!j.at("margin_tables").is_object()) throw ConfigError("margin_tables must be an object");
        for (const auto& [name, body] : j.at("margin_tables").items()) {
            const auto it = c.schemas.find(name);
            if (it == c.schemas.end()) throw ConfigError("margin table for unknown schema '" + name + "'");
            c.margin_tables[name] = margin_table_from_json(body, it->second);
        }
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        reject_unknown(s, "split", {"ratios"});
        std::vector<double> ratios;
        read(s, "ratios", ratios, "split");
        if (!ratios.empty()) {
            if (ratios.size() != 3) throw ConfigError("split.ratios needs three values");
            c.split_ratios = {ratios[0], ratios[1], ratios[2]};
        }
    }
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        reject_unknown(s, "sampler",
                       {"per_class_cap", "random_pool_size", "bm25_pool_size", "margin_mode", "binary_positive_mu",
                        "binary_negative_mu", "binary_dropped_classes"});
        read(s, "per_class_cap", c.sampler.per_class_cap, "sampler");
        read(s, "random_pool_size", c.sampler.random_pool_size, "sampler");
        read(s, "bm25_pool_size", c.sampler.bm25_pool_size, "sampler");
        std::string mode = to_string(c.margin_mode);
        read(s, "margin_mode", mode, "sampler");
        c.margin_mode = parse_margin_mode(mode);
        read(s, "binary_positive_mu", c.binary_margins.positive_mu, "sampler");
        read(s, "binary_negative_mu", c.binary_margins.negative_mu, "sampler");
        read(s, "binary_dropped_classes", c.binary_margins.dropped_negative_classes, "sampler");
    }
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        reject_unknown(e, "encoder", {"feature_dim", "output_dim", "hash_seed"});
        read(e, "feature_dim", c.encoder.feature_dim, "encoder");
        read(e, "output_dim", c.encoder.output_dim, "encoder");
        read(e, "hash_seed", c.encoder.hash_seed, "encoder");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t, "train",
                       {"batch_size", "epochs", "learning_rate", "warmup_fraction", "weight_decay", "optimizer",
                        "beta1", "beta2", "epsilon"});
        read(t, "batch_size", c.train.batch_size, "train");
        read(t, "epochs", c.train.epochs, "train");
        read(t, "learning_rate", c.train.learning_rate, "train");
        read(t, "warmup_fraction", c.train.warmup_fraction, "train");
        read(t, "weight_decay", c.train.weight_decay, "train");
        std::string opt = to_string(c.train.optimizer);
        read(t, "optimizer", opt, "train");
        c.train.optimizer = parse_optimizer(opt);
        read(t, "beta1", c.train.beta1, "train");
        read(t, "beta2", c.train.beta2, "train");
        read(t, "epsilon", c.train.epsilon, "train");
    }
    if (j.contains("distance_space")) {
        std::string space;
        read(j, "distance_space", space, "config");
        c.train.distance_space = parse_distance_space(space);
    }
    if (j.contains("bm25")) {
        const auto& b = j.at("bm25");
        reject_unknown(b, "bm25", {"k1", "b"});
        read(b, "k1", c.bm25.k1, "bm25");
        read(b, "b", c.bm25.b, "bm25");
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        reject_unknown(e, "eval", {"cutoffs", "k"});
        read(e, "cutoffs", c.eval_cutoffs, "eval");
        read(e, "k", c.search_k, "eval");
    }
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        reject_unknown(s, "synth",
                       {"genes", "variants_per_gene", "answers_per_query", "corpus_size", "vocab_size",
                        "noise_rate", "treatment_pool", "answerless_rate", "background_mention_rate",
                        "noisy_slots"});
        read(s, "genes", c.synth.genes, "synth");
        read(s, "variants_per_gene", c.synth.variants_per_gene, "synth");
        read(s, "answers_per_query", c.synth.answers_per_query, "synth");
        read(s, "corpus_size", c.synth.corpus_size, "synth");
        read(s, "vocab_size", c.synth.vocab_size, "synth");
        read(s, "noise_rate", c.synth.noise_rate, "synth");
        read(s, "treatment_pool", c.synth.treatment_pool, "synth");
        read(s, "answerless_rate", c.synth.answerless_rate, "synth");
        read(s, "background_mention_rate", c.synth.background_mention_rate, "synth");
        if (s.contains("noisy_slots")) {
            std::vector<std::string> slots;
            read(s, "noisy_slots", slots, "synth");
            const std::vector<std::string> names = {"Gene", "Variant", "Treatment"};
            c.synth.noisy_slots = {false, false, false};
            for (const auto& slot : slots) {
                const auto it = std::find(names.begin(), names.end(), slot);
                if (it == names.end()) throw ConfigError("synth.noisy_slots names unknown slot '" + slot + "'");
                c.synth.noisy_slots[static_cast<std::size_t>(it - names.begin())] = true;
            }
        }
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        reject_unknown(p, "paths", {"work_dir", "kb", "corpus", "synonyms"});
        const auto path_of = [&](const char* key, std::optional<std::filesystem::path>& out) {
            if (p.contains(key) && !p.at(key).is_null()) {
                std::string v;
                read(p, key, v, "paths");
                out = v;
            }
        };
        std::string work = c.paths.work_dir.string();
        read(p, "work_dir", work, "paths");
        c.paths.work_dir = work;
        path_of("kb", c.paths.kb);
        path_of("corpus", c.paths.corpus);
        path_of("synonyms", c.paths.synonyms);
    }
    c.validate();
    return c;
}

json config_to_json(const PipelineConfig& c) {
    json schemas = json::object();
    for (const auto& [name, s] : c.schemas) schemas[name] = schema_to_json(s);
    json tables = json::object();
    for (const auto& [name, t] : c.margin_tables) tables[name] = margin_table_to_json(t);
    json noisy = json::array();
    const std::vector<std::string> names = {"Gene", "Variant", "Treatment"};
    for (std::size_t i = 0; i < 3; ++i) {
        if (c.synth.noisy_slots[i]) noisy.push_back(names[i]);
    }
    const auto opt_path = [](const std::optional<std::filesystem::path>& p) -> json {
        return p ? json(p->string()) : json(nullptr);
    };
    return {
        {"seed", c.seed},
        {"dataset", c.dataset},
        {"schemas", schemas},
        {"margin_tables", tables},
        {"split", {{"ratios", {c.split_ratios[0], c.split_ratios[1], c.split_ratios[2]}}}},
        {"sampler",
         {{"per_class_cap", c.sampler.per_class_cap},
          {"random_pool_size", c.sampler.random_pool_size},
          {"bm25_pool_size", c.sampler.bm25_pool_size},
          {"margin_mode", to_string(c.margin_mode)},
          {"binary_positive_mu", c.binary_margins.positive_mu},
          {"binary_negative_mu", c.binary_margins.negative_mu},
          {"binary_dropped_classes", c.binary_margins.dropped_negative_classes}}},
        {"encoder",
         {{"feature_dim", c.encoder.feature_dim},
          {"output_dim", c.encoder.output_dim},
          {"hash_seed", c.encoder.hash_seed}}},
        {"train",
         {{"batch_size", c.train.batch_size},
          {"epochs", c.train.epochs},
          {"learning_rate", c.train.learning_rate},
          {"warmup_fraction", c.train.warmup_fraction},
          {"weight_decay", c.train.weight_decay},
          {"optimizer", to_string(c.train.optimizer)},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"epsilon", c.train.epsilon}}},
        {"distance_space", to_string(c.train.distance_space)},
        {"bm25", {{"k1", c.bm25.k1}, {"b", c.bm25.b}}},
        {"eval", {{"cutoffs", c.eval_cutoffs}, {"k", c.search_k}}},
        {"synth",
         {{"genes", c.synth.genes},
          {"variants_per_gene", c.synth.variants_per_gene},
          {"answers_per_query", c.synth.answers_per_query},
          {"corpus_size", c.synth.corpus_size},
          {"vocab_size", c.synth.vocab_size},
          {"noise_rate", c.synth.noise_rate},
          {"treatment_pool", c.synth.treatment_pool},
          {"answerless_rate", c.synth.answerless_rate},
          {"background_mention_rate", c.synth.background_mention_rate},
          {"noisy_slots", noisy}}},
        {"paths",
         {{"work_dir", c.paths.work_dir.string()},
          {"kb", opt_path(c.paths.kb)},
          {"corpus", opt_path(c.paths.corpus)},
          {"synonyms", opt_path(c.paths.synonyms)}}},
    };
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void apply_env_overrides(PipelineConfig& config) {
    if (const char* v = std::getenv("KBDR_KB"); v && *v) config.paths.kb = v;
    if (const char* v = std::getenv("KBDR_CORPUS"); v && *v) config.paths.corpus = v;
    if (const char* v = std::getenv("KBDR_SYNONYMS"); v && *v) config.paths.synonyms = v;
    if (const char* v = std::getenv("KBDR_WORK_DIR"); v && *v) config.paths.work_dir = v;
}

}  // namespace kbdr
