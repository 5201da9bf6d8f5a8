#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "kbdr/config.hpp"
#include "kbdr/error.hpp"
#include "kbdr/pipeline.hpp"
#include "kbdr/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kbdr;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> k;
    std::string kb;
    std::string corpus;
    std::string synonyms;
    std::string examples;
    std::string model;
    std::string index;
    std::string run;
    std::string split = "test";
    std::string margin_mode;
    std::optional<std::size_t> epochs;
    bool lexical = false;
};

struct Context {
    std::string command;
    PipelineConfig config;
    fs::path work;
    fs::path out;
    json outputs = json::object();

    fs::path input(const std::string& flag, const std::optional<fs::path>& configured,
                   const char* default_name) const {
        if (!flag.empty()) return flag;
        if (configured) return *configured;
        return work / default_name;
    }

    std::ofstream create(const std::string& name) {
        fs::create_directories(out);
        const auto path = out / name;
        std::ofstream stream(path, std::ios::binary);
        if (!stream) throw DataError("cannot write " + path.string());
        outputs[name] = path.string();
        return stream;
    }

    void write_manifest(json summary) {
        json manifest = {{"command", command},
                         {"seed", config.seed},
                         {"config", config_to_json(config)},
                         {"outputs", outputs},
                         {"summary", std::move(summary)}};
        auto stream = create(command + ".manifest.json");
        stream << manifest.dump(2) << '\n';
    }
};

PipelineConfig resolve_config(const Options& opt) {
    PipelineConfig config = opt.config_path.empty() ? PipelineConfig{} : load_config(opt.config_path);
    if (opt.seed) config.seed = *opt.seed;
    if (opt.k) config.search_k = *opt.k;
    if (!opt.margin_mode.empty()) config.margin_mode = parse_margin_mode(opt.margin_mode);
    if (opt.epochs) config.train.epochs = *opt.epochs;
    apply_env_overrides(config);
    config.validate();
    return config;
}

Dataset load(const Context& ctx, const Options& opt) {
    const auto& c = ctx.config;
    const auto kb = ctx.input(opt.kb, c.paths.kb, "kb.tsv");
    const auto corpus = ctx.input(opt.corpus, c.paths.corpus, "corpus.jsonl");
    std::optional<fs::path> synonyms;
    if (!opt.synonyms.empty()) {
        synonyms = opt.synonyms;
    } else if (c.paths.synonyms) {
        synonyms = c.paths.synonyms;
    } else if (fs::exists(ctx.work / "synonyms.tsv")) {
        synonyms = ctx.work / "synonyms.tsv";
    }
    if (!fs::exists(kb)) throw DataError("KB file not found: " + kb.string());
    if (!fs::exists(corpus)) throw DataError("corpus file not found: " + corpus.string());
    return load_dataset(c.schema(), kb, corpus, synonyms, c.split_ratios, c.seeds().split);
}

std::vector<TrainingExample> load_examples(const Context& ctx, const Options& opt) {
    const auto path = opt.examples.empty() ? ctx.work / "examples.jsonl" : fs::path(opt.examples);
    std::ifstream in(path);
    if (!in) throw DataError("cannot open examples " + path.string());
    return read_examples(in, path.string());
}

json histogram_json(const std::map<int, std::size_t>& h) {
    json j = json::object();
    for (const auto& [cls, n] : h) j[std::to_string(cls)] = n;
    return j;
}

json cmd_synth(Context& ctx, const Options&) {
    const auto bundle = generate(ctx.config.synth_spec());
    fs::create_directories(ctx.out);
    write_bundle(bundle, ctx.out);
    std::size_t answerless = 0;
    for (const auto& r : bundle.records) answerless += r.has_answer() ? 0 : 1;
    for (const char* name : {"kb.tsv", "corpus.jsonl", "synonyms.tsv", "qrels.tsv"}) {
        ctx.outputs[name] = (ctx.out / name).string();
    }
    return {{"records", bundle.records.size()},
            {"answerless", answerless},
            {"documents", bundle.corpus.size()},
            {"queries", bundle.qrels.size()}};
}

json cmd_ingest(Context& ctx, const Options& opt) {
    const auto ds = load(ctx, opt);
    {
        auto out = ctx.create("queries.jsonl");
        write_queries(out, ds.queries);
    }
    {
        auto out = ctx.create("split.tsv");
        write_split(out, ds.split);
    }
    json counts = json::object();
    for (auto s : {Split::train, Split::dev, Split::test}) counts[to_string(s)] = ds.queries_in(s).size();
    return {{"records", ds.kb.records.size()},
            {"answerless", ds.kb.answerless.size()},
            {"dropped_incomplete", ds.kb.dropped_incomplete},
            {"documents", ds.corpus.size()},
            {"queries", ds.queries.size()},
            {"split", counts}};
}

json cmd_mine(Context& ctx, const Options& opt) {
    const auto ds = load(ctx, opt);
    const auto bm25 = InvertedIndex::build(ds.corpus, ctx.config.bm25);
    const auto table = ctx.config.margin_table();
    const auto set = build_training_set(ds.schema, ds.queries_in(Split::train), ds.kb, ds.corpus, table, &bm25,
                                        ctx.config.sampler_config());
    {
        auto out = ctx.create("examples.jsonl");
        write_examples(out, set.examples);
    }
    json histogram = {{"positive", histogram_json(set.positive_histogram)},
                      {"negative", histogram_json(set.negative_histogram)}};
    {
        auto out = ctx.create("histogram.json");
        out << histogram.dump(2) << '\n';
    }
    return {{"examples", set.examples.size()},
            {"skipped_unresolved", set.skipped_unresolved},
            {"margin_mode", to_string(ctx.config.margin_mode)},
            {"histogram", histogram}};
}

json cmd_train(Context& ctx, const Options& opt) {
    const auto ds = load(ctx, opt);
    const auto examples = load_examples(ctx, opt);
    const auto texts = make_text_lookup(ds.queries, ds.corpus);
    auto init = EncoderModel::initialize(ctx.config.encoder, ctx.config.seeds().init);
    const auto result = train(std::move(init), examples, texts, ctx.config.train_config());
    {
        auto out = ctx.create("model.bin");
        result.model.save(out);
    }
    {
        auto out = ctx.create("loss_trace.csv");
        write_loss_trace(out, result.trace);
    }
    return {{"examples", examples.size()}, {"steps", result.trace.size()}, {"epoch_loss", result.epoch_loss}};
}

json cmd_index(Context& ctx, const Options& opt) {
    const auto ds = load(ctx, opt);
    if (opt.lexical) {
        const auto index = InvertedIndex::build(ds.corpus, ctx.config.bm25);
        auto out = ctx.create("bm25.idx");
        index.save(out);
        return {{"kind", "lexical"}, {"documents", index.doc_count()}, {"terms", index.term_count()}};
    }
    const auto model_path = opt.model.empty() ? ctx.work / "model.bin" : fs::path(opt.model);
    const auto model = EncoderModel::load(model_path);
    const auto index = index_build(model, ds.corpus);
    auto out = ctx.create("dense.idx");
    index.save(out);
    return {{"kind", "dense"}, {"documents", index.size()}, {"dim", index.dim()}};
}

json cmd_search(Context& ctx, const Options& opt) {
    const auto ds = load(ctx, opt);
    const auto queries = ds.queries_in(parse_split(opt.split));
    const auto k = ctx.config.search_k;
    Run run;
    if (opt.lexical) {
        const auto path = opt.index.empty() ? ctx.work / "bm25.idx" : fs::path(opt.index);
        run = bm25_run(InvertedIndex::load(path), queries, k);
    } else {
        const auto model = EncoderModel::load(opt.model.empty() ? ctx.work / "model.bin" : fs::path(opt.model));
        const auto index = VectorIndex::load(opt.index.empty() ? ctx.work / "dense.idx" : fs::path(opt.index));
        if (index.dim() != model.output_dim()) throw DataError("index dimension does not match the model");
        run = dense_run(model, index, queries, k);
    }
    const std::string name = opt.run.empty() ? std::string(opt.lexical ? "bm25" : "dense") + ".run.tsv" : opt.run;
    auto out = ctx.create(name);
    write_run(out, run);
    return {{"queries", queries.size()}, {"k", k}, {"split", opt.split}, {"run", name}};
}

json cmd_eval(Context& ctx, const Options& opt) {
    if (opt.run.empty()) throw ConfigError("eval needs --run");
    const auto ds = load(ctx, opt);
    std::ifstream in(opt.run);
    if (!in) throw DataError("cannot open run " + opt.run);
    const auto run = read_run(in, opt.run);
    const auto queries = ds.queries_in(parse_split(opt.split));
    const auto report = evaluate_run(run, queries, ds.corpus, ctx.config.eval_cutoffs);
    {
        auto out = ctx.create("report.json");
        write_report_json(out, report);
    }
    {
        auto out = ctx.create("report.csv");
        write_report_csv(out, report);
    }
    for (const auto& id : report.missing_runs) std::cerr << "kbdr: warning: no ranked list for " << id << '\n';
    return {{"means", report.means}, {"skipped", report.skipped}, {"missing_runs", report.missing_runs}};
}

json cmd_audit(Context& ctx, const Options& opt) {
    const auto ds = load(ctx, opt);
    const auto examples = load_examples(ctx, opt);
    const auto report = audit_negatives(examples, ds.queries, ds.corpus, ds.schema);
    json slots = json::object();
    for (std::size_t i = 0; i < report.slot_names.size(); ++i) {
        slots[report.slot_names[i]] = {{"mentions", report.slot_mentions[i]}, {"fraction", report.fraction(i)}};
    }
    json result = {{"negatives", report.negatives}, {"slots", slots}};
    auto out = ctx.create("audit.json");
    out << result.dump(2) << '\n';
    return result;
}

using Handler = json (*)(Context&, const Options&);

int run_command(const std::string& name, Handler handler, const Options& opt) {
    Context ctx;
    ctx.command = name;
    ctx.config = resolve_config(opt);
    if (!opt.out.empty()) ctx.config.paths.work_dir = opt.out;
    ctx.work = ctx.config.paths.work_dir;
    ctx.out = ctx.work;
    std::cout << "kbdr " << name << " seed=" << ctx.config.seed << '\n';
    std::cout << "config " << config_to_json(ctx.config).dump() << '\n';
    auto summary = handler(ctx, opt);
    std::cout << summary.dump(2) << '\n';
    ctx.write_manifest(std::move(summary));
    return 0;
}

void report_error(const char* kind, int code, const std::string& message) {
    std::string flat = message;
    for (auto& ch : flat) {
        if (ch == '\n' || ch == '\r') ch = ' ';
    }
    std::cerr << "kbdr: error code=" << code << " kind=" << kind << " msg=" << flat << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weakly supervised retriever training from knowledge-base relations"};
    app.require_subcommand(1);
    app.fallthrough();
    Options opt;
    app.add_option("--config", opt.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", opt.seed, "Root seed");
    app.add_option("--out", opt.out, "Working directory for inputs and outputs (overrides paths.work_dir)");

    const auto data_flags = [&](CLI::App* sub) {
        sub->add_option("--kb", opt.kb, "KB TSV");
        sub->add_option("--corpus", opt.corpus, "Corpus JSONL");
        sub->add_option("--synonyms", opt.synonyms, "Synonym TSV");
    };

    std::vector<std::pair<CLI::App*, std::pair<std::string, Handler>>> commands;
    const auto add = [&](const char* name, const char* help, Handler handler) {
        auto* sub = app.add_subcommand(name, help);
        commands.push_back({sub, {name, handler}});
        return sub;
    };

    add("synth", "Generate a synthetic KB, corpus, synonyms and qrels", cmd_synth);
    data_flags(add("ingest", "Parse KB and corpus, build queries and splits", cmd_ingest));
    auto* mine = add("mine", "Mine weakly supervised training examples", cmd_mine);
    data_flags(mine);
    mine->add_option("--margin-mode", opt.margin_mode, "multi or binary");
    auto* train = add("train", "Train the bi-encoder", cmd_train);
    data_flags(train);
    train->add_option("--examples", opt.examples, "Training examples JSONL");
    train->add_option("--epochs", opt.epochs, "Override train.epochs");
    auto* index = add("index", "Build a dense or lexical index", cmd_index);
    data_flags(index);
    index->add_flag("--lexical", opt.lexical, "Build the BM25 index");
    index->add_option("--model", opt.model, "Encoder checkpoint");
    auto* search = add("search", "Retrieve documents for the queries of one split", cmd_search);
    data_flags(search);
    search->add_flag("--lexical", opt.lexical, "Use the BM25 index");
    search->add_option("--model", opt.model, "Encoder checkpoint");
    search->add_option("--index", opt.index, "Index file");
    search->add_option("--split", opt.split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
    search->add_option("--k", opt.k, "Documents per query");
    search->add_option("--run", opt.run, "Run file name inside the output directory");
    auto* eval = add("eval", "Score a run file", cmd_eval);
    data_flags(eval);
    eval->add_option("--run", opt.run, "Run TSV")->required();
    eval->add_option("--split", opt.split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
    auto* audit = add("audit", "Report how often negatives mention the query entities", cmd_audit);
    data_flags(audit);
    audit->add_option("--examples", opt.examples, "Training examples JSONL");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("config", 2, e.what());
        return 2;
    }

    try {
        for (const auto& [sub, entry] : commands) {
            if (sub->parsed()) return run_command(entry.first, entry.second, opt);
        }
    } catch (const Error& e) {
        report_error(to_string(e.kind()), e.exit_code(), e.what());
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        report_error("data", 3, e.what());
        return 3;
    } catch (const std::exception& e) {
        report_error("data", 3, e.what());
        return 3;
    }
    return 0;
}
