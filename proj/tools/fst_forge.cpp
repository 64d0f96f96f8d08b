// fst-forge: build, evaluate, and export finite-state transducers learned
// from paired string data.
//
// Induction subcommands (extract, ostia, ddostia, sweep) read a dataset
// directory holding train.tsv / dev.tsv / test.tsv, write the machine as
// att_text to <out>.att and a run report to <out>.json, and print the report.
// A JSON config file given with --config overrides any flag of the same name.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fstforge/fst_io.hpp"
#include "fstforge/harness.hpp"

namespace {

using namespace fstforge;

struct Opts {
    std::string data_dir;
    std::string task = "normalization";
    std::string align = "crp";
    std::string merge = "right";
    std::string objective = "transduction";
    std::string synthetic = "on";
    std::uint32_t k = 0;  // 0 = lower bound of the valid range
    long lambda_trans = -1;  // -1 = no split threshold
    std::string classifier = "svm";
    std::uint64_t seed = 0;
    double time_limit = 600.0;
    int budget = 10;
    int workers = 1;
    int d = 32;
    double lr = 1e-3;
    int epochs = 200;
    std::string out = "run";
    std::string config_file;
    std::string model_file;
    std::string split = "dev";
    std::string format = "att";
};

void add_common(CLI::App* sub, Opts& o, bool dataset_cmd) {
    if (dataset_cmd)
        sub->add_option("data", o.data_dir, "dataset directory with train/dev/test.tsv")
            ->required();
    sub->add_option("--task", o.task, "inflection, g2p, or normalization");
    sub->add_option("--seed", o.seed, "run seed; all randomness derives from it");
    sub->add_option("--out", o.out, "output path stem");
    sub->add_option("--config", o.config_file, "JSON file whose values override flags");
}

void add_pipeline(CLI::App* sub, Opts& o) {
    sub->add_option("--align", o.align, "aligner: crp or med");
    sub->add_option("--merge", o.merge, "epsilon merge: right or greedy");
    sub->add_option("--objective", o.objective, "transduction, lm, or binary");
    sub->add_option("--synthetic", o.synthetic, "augment with generated inputs: on or off");
    sub->add_option("--k", o.k, "cluster count; 0 picks the lower valid bound");
    sub->add_option("--lambda-trans", o.lambda_trans, "split threshold; -1 disables splitting");
    sub->add_option("--classifier", o.classifier, "splitter: svm or logreg");
    sub->add_option("--d", o.d, "hidden size (16, 32, 64, or 128)");
    sub->add_option("--lr", o.lr, "learning rate");
    sub->add_option("--epochs", o.epochs, "training epochs");
}

// --config overrides flags; unknown keys are rejected so typos do not pass
// silently.
void apply_config(Opts& o) {
    if (o.config_file.empty()) return;
    std::ifstream in(o.config_file);
    if (!in) throw ConfigError("cannot open config file " + o.config_file);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + o.config_file + ": " + e.what());
    }
    for (const auto& [key, val] : j.items()) {
        if (key == "task") o.task = val;
        else if (key == "align") o.align = val;
        else if (key == "merge") o.merge = val;
        else if (key == "objective") o.objective = val;
        else if (key == "synthetic")
            o.synthetic = val.is_boolean() ? (val.get<bool>() ? "on" : "off")
                                           : val.get<std::string>();
        else if (key == "k") o.k = val;
        else if (key == "lambda-trans" || key == "lambda_trans")
            o.lambda_trans = val.is_null() ? -1 : val.get<long>();
        else if (key == "classifier") o.classifier = val;
        else if (key == "seed") o.seed = val;
        else if (key == "time-limit" || key == "time_limit") o.time_limit = val;
        else if (key == "budget") o.budget = val;
        else if (key == "workers") o.workers = val;
        else if (key == "d") o.d = val;
        else if (key == "lr") o.lr = val;
        else if (key == "epochs") o.epochs = val;
        else if (key == "out") o.out = val;
        else if (key == "split") o.split = val;
        else if (key == "format") o.format = val;
        else throw ConfigError("config file: unknown key '" + key + "'");
    }
}

bool parse_on_off(const std::string& s) {
    if (s == "on") return true;
    if (s == "off") return false;
    throw ConfigError("expected on or off, got '" + s + "'");
}

PipelineConfig pipeline_config(const Opts& o) {
    PipelineConfig cfg;
    cfg.align = parse_align(o.align);
    cfg.merge = parse_merge(o.merge);
    cfg.synthetic = parse_on_off(o.synthetic);
    cfg.seed = o.seed;
    cfg.train.objective = parse_objective(o.objective);
    cfg.train.d = o.d;
    cfg.train.lr = o.lr;
    cfg.train.epochs = o.epochs;
    cfg.extraction.k = o.k;
    cfg.extraction.classifier = parse_classifier(o.classifier);
    if (o.lambda_trans >= 0) cfg.extraction.lambda_trans = o.lambda_trans;
    return cfg;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << content;
}

void emit_run(const Opts& o, const Transducer& fst, RunReport report) {
    report.states = fst.num_states();
    report.transitions = fst.num_arcs();
    write_file(o.out + ".att", serialize(fst, FstFormat::att_text));
    std::string j = to_json(report).dump(2);
    write_file(o.out + ".json", j);
    std::cout << j << "\n";
}

const std::vector<StringPair>& pick_split(const Dataset& ds, const std::string& split) {
    if (split == "dev") return ds.dev;
    if (split == "train") return ds.train;
    if (split == "test") return ds.test();
    throw ConfigError("unknown split: " + split);
}

int run_align(const Opts& o) {
    Dataset ds = load_dataset(o.data_dir, parse_task(o.task));
    auto merged = detail::align_and_merge(marked_pairs(ds.train, ds.marker),
                                          parse_align(o.align), parse_merge(o.merge), o.seed);
    std::ostringstream text;
    for (const auto& m : merged)
        text << dump_merged(m, ds.input_table, ds.output_table) << "\n";
    if (o.out == "run")
        std::cout << text.str();
    else
        write_file(o.out, text.str());
    return 0;
}

int run_train(const Opts& o) {
    Dataset ds = load_dataset(o.data_dir, parse_task(o.task));
    PipelineConfig cfg = pipeline_config(o);
    auto merged = detail::align_and_merge(marked_pairs(ds.train, ds.marker), cfg.align,
                                          cfg.merge, cfg.seed);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    TrainedModel tm = train(merged, tc);
    std::string path = o.out == "run" ? "model.json" : o.out;
    write_file(path, model_to_json(tm, ds.input_table, ds.output_table).dump());
    std::cerr << "wrote " << path << "\n";
    return 0;
}

int run_extract(const Opts& o) {
    Dataset ds = load_dataset(o.data_dir, parse_task(o.task));
    PipelineConfig cfg = pipeline_config(o);

    PipelineResult res = [&] {
        if (o.model_file.empty()) return run_pipeline(ds, cfg);

        // reuse a checkpoint from `train`; alignment settings must match
        std::ifstream in(o.model_file);
        if (!in) throw ConfigError("cannot open model file " + o.model_file);
        nlohmann::json j;
        in >> j;
        LoadedModel lm = model_from_json(j);
        auto merged = detail::align_and_merge(marked_pairs(ds.train, ds.marker), cfg.align,
                                              cfg.merge, cfg.seed);
        std::vector<std::vector<SymbolId>> synthetic;
        if (cfg.synthetic)
            synthetic = detail::synthetic_inputs(ds, cfg.synthetic_cap, cfg.seed);
        ExtractionConfig ec = cfg.extraction;
        ec.seed = cfg.seed;
        if (ec.k == 0) {
            auto records = collect_activations(lm.model, merged, synthetic);
            ec.k = cluster_count_range(count_distinct_vectors(records)).first;
        }
        ExtractionResult ex =
            extract(lm.model, ds.input_table, ds.output_table, merged, synthetic, ec);
        return PipelineResult{std::move(ex.fst), ex.report, cfg.train, ec, 0.0};
    }();

    EvalReport dev = evaluate(fst_system(res.fst, ds.marker), ds.dev);
    EvalReport test = evaluate(fst_system(res.fst, ds.marker), ds.test());

    PipelineConfig used = cfg;
    used.extraction = res.extraction;
    RunReport report{o.data_dir,   "pipeline",  pipeline_config_json(used),
                     dev.accuracy, test.accuracy, 0,
                     0,            res.wall_clock_s, {}};
    if (res.report.budget_exhausted) report.flags.push_back("split_budget_exhausted");
    emit_run(o, res.fst, std::move(report));
    return 0;
}

int run_baseline(const Opts& o, bool data_driven) {
    Dataset ds = load_dataset(o.data_dir, parse_task(o.task));
    InductionLog log;
    auto start = std::chrono::steady_clock::now();
    Transducer fst = data_driven
                         ? dd_ostia(ds.train, ds.input_table, ds.output_table, ds.marker,
                                    o.time_limit, &log)
                         : ostia(ds.train, ds.input_table, ds.output_table, ds.marker,
                                 o.time_limit, &log);
    std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;

    EvalReport dev = evaluate(fst_system(fst, ds.marker), ds.dev);
    EvalReport test = evaluate(fst_system(fst, ds.marker), ds.test());

    nlohmann::json config{{"time_limit", o.time_limit},
                          {"merges_attempted", log.merges_attempted},
                          {"merges_committed", log.merges_committed}};
    RunReport report{o.data_dir,   data_driven ? "ddostia" : "ostia",
                     config,       dev.accuracy,
                     test.accuracy, 0,
                     0,            took.count(),
                     {}};
    if (log.time_limit_hit) report.flags.push_back("time_limit_hit");
    emit_run(o, fst, std::move(report));
    return 0;
}

int run_nochange(const Opts& o) {
    Dataset ds = load_dataset(o.data_dir, parse_task(o.task));
    System sys = identity_system(ds.input_table, ds.output_table);
    EvalReport dev = evaluate(sys, ds.dev);
    EvalReport test = evaluate(sys, ds.test());
    RunReport report{o.data_dir, "nochange", nlohmann::json::object(),
                     dev.accuracy, test.accuracy, 0, 0,
                     dev.wall_clock_s + test.wall_clock_s, {}};
    std::string j = to_json(report).dump(2);
    write_file(o.out + ".json", j);
    std::cout << j << "\n";
    return 0;
}

int run_eval(const Opts& o) {
    Dataset ds = load_dataset(o.data_dir, parse_task(o.task));
    std::ifstream in(o.model_file);
    if (!in) throw ConfigError("cannot open transducer file " + o.model_file);
    std::stringstream buf;
    buf << in.rdbuf();
    Transducer fst = deserialize_att(buf.str());

    EvalReport r = evaluate(fst_system(fst, ds.marker), pick_split(ds, o.split));
    nlohmann::json j{{"dataset", o.data_dir},
                     {"split", o.split},
                     {"accuracy", r.accuracy},
                     {"correct", r.correct},
                     {"wrong_output", r.wrong_output},
                     {"no_path", r.no_path},
                     {"states", fst.num_states()},
                     {"transitions", fst.num_arcs()}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int run_sweep_cmd(const Opts& o) {
    Dataset ds = load_dataset(o.data_dir, parse_task(o.task));
    SweepSpec spec;
    spec.budget = o.budget;
    spec.workers = o.workers;
    spec.seed = o.seed;
    spec.align = parse_align(o.align);
    spec.merge = parse_merge(o.merge);
    spec.objective = parse_objective(o.objective);
    spec.synthetic = parse_on_off(o.synthetic);

    SweepResult res = run_sweep(ds, spec);

    RunReport report{o.data_dir,
                     "pipeline-sweep",
                     pipeline_config_json(res.best),
                     res.dev_report.accuracy,
                     res.test_report.accuracy,
                     0,
                     0,
                     res.dev_report.wall_clock_s + res.test_report.wall_clock_s,
                     {}};
    if (res.extraction_report.budget_exhausted)
        report.flags.push_back("split_budget_exhausted");
    if (res.failed_trials > 0) report.flags.push_back("trials_failed");

    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : res.trials)
        trials.push_back({{"config", t.config},
                          {"failed", t.failed},
                          {"error", t.error},
                          {"dev_accuracy", t.dev_accuracy},
                          {"states", t.states},
                          {"transitions", t.transitions}});
    write_file(o.out + ".trials.json", trials.dump(2));
    emit_run(o, res.fst, std::move(report));
    return 0;
}

int run_export(const Opts& o) {
    std::ifstream in(o.model_file);
    if (!in) throw ConfigError("cannot open transducer file " + o.model_file);
    std::stringstream buf;
    buf << in.rdbuf();
    Transducer fst = deserialize_att(buf.str());
    FstFormat fmt;
    if (o.format == "att" || o.format == "att_text")
        fmt = FstFormat::att_text;
    else if (o.format == "dot")
        fmt = FstFormat::dot;
    else
        throw ConfigError("unknown format: " + o.format);
    std::string text = serialize(fst, fmt);
    if (o.out == "run")
        std::cout << text;
    else
        write_file(o.out, text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fst-forge: learn finite-state transducers from string pairs"};
    app.require_subcommand(1);
    Opts o;

    CLI::App* align = app.add_subcommand("align", "align training pairs and print merged steps");
    add_common(align, o, true);
    align->add_option("--align", o.align, "aligner: crp or med");
    align->add_option("--merge", o.merge, "epsilon merge: right or greedy");

    CLI::App* train = app.add_subcommand("train", "train the sequence model and save it");
    add_common(train, o, true);
    add_pipeline(train, o);

    CLI::App* extract = app.add_subcommand("extract", "train (or load) a model and extract an FST");
    add_common(extract, o, true);
    add_pipeline(extract, o);
    extract->add_option("--model", o.model_file, "reuse a checkpoint written by train");

    CLI::App* ostia_cmd = app.add_subcommand("ostia", "state-merging induction baseline");
    add_common(ostia_cmd, o, true);
    ostia_cmd->add_option("--time-limit", o.time_limit, "seconds before merging stops");

    CLI::App* ddostia_cmd = app.add_subcommand("ddostia", "breadth-first state-merging baseline");
    add_common(ddostia_cmd, o, true);
    ddostia_cmd->add_option("--time-limit", o.time_limit, "seconds before merging stops");

    CLI::App* nochange = app.add_subcommand("nochange", "identity baseline report");
    add_common(nochange, o, true);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a saved transducer on a split");
    add_common(eval, o, true);
    eval->add_option("--model", o.model_file, "att_text transducer file")->required();
    eval->add_option("--split", o.split, "train, dev, or test");

    CLI::App* sweep = app.add_subcommand("sweep", "random search over the hyperparameter grids");
    add_common(sweep, o, true);
    sweep->add_option("--align", o.align, "aligner: crp or med");
    sweep->add_option("--merge", o.merge, "epsilon merge: right or greedy");
    sweep->add_option("--objective", o.objective, "transduction, lm, or binary");
    sweep->add_option("--synthetic", o.synthetic, "augment with generated inputs: on or off");
    sweep->add_option("--budget", o.budget, "number of trials");
    sweep->add_option("--workers", o.workers, "parallel trial workers");

    CLI::App* export_cmd = app.add_subcommand("export", "rewrite a saved transducer");
    export_cmd->add_option("model", o.model_file, "att_text transducer file")->required();
    export_cmd->add_option("--format", o.format, "att or dot");
    export_cmd->add_option("--out", o.out, "output file; default stdout");
    export_cmd->add_option("--config", o.config_file, "JSON file whose values override flags");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        apply_config(o);
        if (align->parsed()) return run_align(o);
        if (train->parsed()) return run_train(o);
        if (extract->parsed()) return run_extract(o);
        if (ostia_cmd->parsed()) return run_baseline(o, false);
        if (ddostia_cmd->parsed()) return run_baseline(o, true);
        if (nochange->parsed()) return run_nochange(o);
        if (eval->parsed()) return run_eval(o);
        if (sweep->parsed()) return run_sweep_cmd(o);
        if (export_cmd->parsed()) return run_export(o);
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
