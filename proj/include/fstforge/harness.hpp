// Dataset ingestion, task encoding, evaluation, and hyperparameter sweeps.
//
// Datasets are directories with train.tsv / dev.tsv / test.tsv. Inflection
// rows are lemma<TAB>target<TAB>tags (tags ;-separated, each tag one atomic
// input symbol named "[TAG]"); g2p rows are word<TAB>segments with outputs
// tokenized on spaces; normalization rows are input<TAB>output with both
// sides tokenized per UTF-8 character.
//
// Every induced transducer consumes inputs terminated by a reserved
// end-of-string symbol; marked() appends it. The no-change baseline and the
// stored dataset pairs stay unmarked. Test pairs sit behind an accessor that
// counts reads, so leak checks can assert the split was touched exactly once.
#pragma once

#include <algorithm>
#include <cmath>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fstforge/alignment.hpp"
#include "fstforge/baselines.hpp"
#include "fstforge/domain_gen.hpp"
#include "fstforge/errors.hpp"
#include "fstforge/extraction.hpp"
#include "fstforge/rnn.hpp"
#include "fstforge/transducer.hpp"

namespace fstforge {

enum class Task { inflection, g2p, normalization };

inline const char* task_name(Task t) {
    switch (t) {
        case Task::inflection: return "inflection";
        case Task::g2p: return "g2p";
        case Task::normalization: return "normalization";
    }
    return "?";
}

inline Task parse_task(const std::string& s) {
    if (s == "inflection") return Task::inflection;
    if (s == "g2p") return Task::g2p;
    if (s == "normalization") return Task::normalization;
    throw ConfigError("unknown task: " + s);
}

inline constexpr const char* kEndMarkerName = "⋉";

struct Dataset {
    Task task = Task::normalization;
    SymbolTable input_table;
    SymbolTable output_table;
    SymbolId marker = 0;
    std::vector<StringPair> train;
    std::vector<StringPair> dev;
    std::vector<SymbolId> tag_symbols;  // sorted inflection tag inventory

    const std::vector<StringPair>& test() const {
        ++test_reads_;
        return test_;
    }
    long test_reads() const { return test_reads_; }
    std::size_t test_size() const { return test_.size(); }

    bool is_tag(SymbolId s) const {
        return std::binary_search(tag_symbols.begin(), tag_symbols.end(), s);
    }

    friend Dataset load_dataset(const std::filesystem::path&, Task);
    friend Dataset make_dataset(Task, SymbolTable, SymbolTable, SymbolId,
                                std::vector<StringPair>, std::vector<StringPair>,
                                std::vector<StringPair>, std::vector<SymbolId>);

private:
    std::vector<StringPair> test_;
    mutable long test_reads_ = 0;
};

namespace detail {

inline std::vector<std::string> utf8_chars(const std::string& s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if ((c >> 5) == 0x6) len = 2;
        else if ((c >> 4) == 0xe) len = 3;
        else if ((c >> 3) == 0x1e) len = 4;
        if (i + len > s.size()) len = 1;
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

inline std::vector<std::string> split_on(const std::string& s, char sep, bool keep_empty) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            if (keep_empty || !cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (keep_empty || !cur.empty()) out.push_back(cur);
    return out;
}

inline std::vector<SymbolId> intern_chars(SymbolTable& t, const std::string& s) {
    std::vector<SymbolId> out;
    for (const auto& ch : utf8_chars(s)) out.push_back(t.intern(ch));
    return out;
}

inline void check_disjoint(const std::vector<StringPair>& a, const std::vector<StringPair>& b,
                           const std::string& what) {
    std::set<std::vector<SymbolId>> seen;
    for (const auto& p : a) seen.insert(p.input);
    for (const auto& p : b)
        if (seen.count(p.input))
            throw ConflictError("dataset splits are not disjoint: " + what +
                                " share an input");
}

}  // namespace detail

inline Dataset make_dataset(Task task, SymbolTable in_table, SymbolTable out_table,
                            SymbolId marker, std::vector<StringPair> train,
                            std::vector<StringPair> dev, std::vector<StringPair> test,
                            std::vector<SymbolId> tags = {}) {
    Dataset ds;
    ds.task = task;
    ds.input_table = std::move(in_table);
    ds.output_table = std::move(out_table);
    ds.marker = marker;
    ds.train = std::move(train);
    ds.dev = std::move(dev);
    ds.test_ = std::move(test);
    std::sort(tags.begin(), tags.end());
    ds.tag_symbols = std::move(tags);
    detail::check_disjoint(ds.train, ds.dev, "train/dev");
    detail::check_disjoint(ds.train, ds.test_, "train/test");
    detail::check_disjoint(ds.dev, ds.test_, "dev/test");
    return ds;
}

inline Dataset load_dataset(const std::filesystem::path& dir, Task task) {
    Dataset ds;
    ds.task = task;
    ds.marker = ds.input_table.intern(kEndMarkerName);
    std::set<SymbolId> tags;

    auto parse_file = [&](const std::filesystem::path& file, std::vector<StringPair>& into) {
        std::ifstream in(file);
        if (!in) throw FormatError(0, "cannot open " + file.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            auto fields = detail::split_on(line, '\t', true);
            StringPair p;
            if (task == Task::inflection) {
                if (fields.size() != 3)
                    throw FormatError(line_no, "expected lemma, target, tags in " +
                                                   file.string());
                for (const auto& tag : detail::split_on(fields[2], ';', false)) {
                    SymbolId id = ds.input_table.intern("[" + tag + "]");
                    tags.insert(id);
                    p.input.push_back(id);
                }
                auto lemma = detail::intern_chars(ds.input_table, fields[0]);
                p.input.insert(p.input.end(), lemma.begin(), lemma.end());
                p.output = detail::intern_chars(ds.output_table, fields[1]);
            } else if (task == Task::g2p) {
                if (fields.size() != 2)
                    throw FormatError(line_no, "expected word, segments in " + file.string());
                p.input = detail::intern_chars(ds.input_table, fields[0]);
                for (const auto& seg : detail::split_on(fields[1], ' ', false))
                    p.output.push_back(ds.output_table.intern(seg));
            } else {
                if (fields.size() != 2)
                    throw FormatError(line_no, "expected input, output in " + file.string());
                p.input = detail::intern_chars(ds.input_table, fields[0]);
                p.output = detail::intern_chars(ds.output_table, fields[1]);
            }
            into.push_back(std::move(p));
        }
    };

    parse_file(dir / "train.tsv", ds.train);
    parse_file(dir / "dev.tsv", ds.dev);
    parse_file(dir / "test.tsv", ds.test_);

    ds.tag_symbols.assign(tags.begin(), tags.end());
    detail::check_disjoint(ds.train, ds.dev, "train/dev");
    detail::check_disjoint(ds.train, ds.test_, "train/test");
    detail::check_disjoint(ds.dev, ds.test_, "dev/test");
    return ds;
}

inline std::vector<SymbolId> marked(std::vector<SymbolId> input, SymbolId marker) {
    input.push_back(marker);
    return input;
}

inline std::vector<StringPair> marked_pairs(const std::vector<StringPair>& pairs,
                                            SymbolId marker) {
    std::vector<StringPair> out = pairs;
    for (auto& p : out) p.input.push_back(marker);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
    double accuracy = 0.0;
    long correct = 0;
    long wrong_output = 0;
    long no_path = 0;  // includes unknown-symbol failures
    StateId states = 0;
    std::size_t transitions = 0;
    double wall_clock_s = 0.0;
};

using System = std::function<ApplyResult(const std::vector<SymbolId>&)>;

inline EvalReport evaluate(const System& system, const std::vector<StringPair>& pairs) {
    EvalReport r;
    auto start = std::chrono::steady_clock::now();
    for (const auto& p : pairs) {
        ApplyResult a = system(p.input);
        if (!a.ok())
            ++r.no_path;
        else if (a.output == p.output)
            ++r.correct;
        else
            ++r.wrong_output;
    }
    if (!pairs.empty()) r.accuracy = static_cast<double>(r.correct) / pairs.size();
    std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
    r.wall_clock_s = d.count();
    return r;
}

// Runs the transducer on the input with the end marker appended.
inline System fst_system(Transducer t, SymbolId marker) {
    return [t = std::move(t), marker](const std::vector<SymbolId>& input) {
        return t.apply(marked(input, marker));
    };
}

// Maps every input symbol to the output symbol of the same name. Inputs using
// a name absent from the output table come back as unknown-symbol failures.
inline System identity_system(SymbolTable in_table, SymbolTable out_table) {
    return [in_table = std::move(in_table),
            out_table = std::move(out_table)](const std::vector<SymbolId>& input) {
        ApplyResult r;
        for (std::size_t i = 0; i < input.size(); ++i) {
            if (!in_table.contains(input[i])) {
                return ApplyResult{ApplyStatus::unknown_symbol, {}, i, 0};
            }
            auto id = out_table.find(in_table.name(input[i]));
            if (!id || *id == kEpsilon)
                return ApplyResult{ApplyStatus::unknown_symbol, {}, i, 0};
            r.output.push_back(*id);
        }
        return r;
    };
}

// ---------------------------------------------------------------------------
// Full pipeline: align, merge, train, generate, extract.

enum class AlignMethod { crp, med };
enum class MergeMethod { right, greedy };

inline const char* align_name(AlignMethod m) { return m == AlignMethod::crp ? "crp" : "med"; }
inline const char* merge_name(MergeMethod m) {
    return m == MergeMethod::right ? "right" : "greedy";
}

inline AlignMethod parse_align(const std::string& s) {
    if (s == "crp") return AlignMethod::crp;
    if (s == "med") return AlignMethod::med;
    throw ConfigError("unknown alignment method: " + s);
}

inline MergeMethod parse_merge(const std::string& s) {
    if (s == "right") return MergeMethod::right;
    if (s == "greedy") return MergeMethod::greedy;
    throw ConfigError("unknown merge method: " + s);
}

struct PipelineConfig {
    AlignMethod align = AlignMethod::crp;
    MergeMethod merge = MergeMethod::right;
    bool synthetic = true;
    std::size_t synthetic_cap = 2000;
    std::uint64_t seed = 0;     // feeds align/train/extract sub-streams
    TrainConfig train;          // .seed is overwritten by `seed`
    ExtractionConfig extraction;  // .seed likewise; .k == 0 picks the lower
                                  // end of the valid cluster-count range
};

namespace detail {

inline std::vector<MergedSequence> align_and_merge(const std::vector<StringPair>& pairs,
                                                   AlignMethod align, MergeMethod merge,
                                                   std::uint64_t seed) {
    std::vector<AlignedSequence> aligned =
        align == AlignMethod::crp ? crp_align(pairs, CrpOptions{}, seed) : med_align(pairs);
    return merge == MergeMethod::right ? merge_right_all(aligned)
                                       : merge_epsilons_greedy(aligned);
}

// Synthetic inputs for the dataset's task, marker appended, training inputs
// included as generated.
inline std::vector<std::vector<SymbolId>> synthetic_inputs(const Dataset& ds,
                                                           std::size_t cap,
                                                           std::uint64_t seed) {
    std::set<std::vector<SymbolId>> gen;
    if (ds.task == Task::inflection) {
        std::vector<TaggedInput> examples;
        for (const auto& p : ds.train) {
            TaggedInput e;
            for (SymbolId s : p.input)
                (ds.is_tag(s) && e.lemma.empty() ? e.tags : e.lemma).push_back(s);
            examples.push_back(std::move(e));
        }
        gen = gen_inflection_swap(examples, cap, seed);
    } else {
        std::vector<std::vector<SymbolId>> inputs;
        std::size_t max_len = 1;
        for (const auto& p : ds.train) {
            inputs.push_back(p.input);
            max_len = std::max(max_len, p.input.size());
        }
        NgramModel m = NgramModel::build(inputs, 2);
        gen = gen_ngram_strings(m, static_cast<int>(max_len), cap, seed);
    }
    std::vector<std::vector<SymbolId>> out;
    out.reserve(gen.size());
    for (const auto& s : gen) out.push_back(marked(s, ds.marker));
    return out;
}

}  // namespace detail

struct PipelineResult {
    Transducer fst;
    ExtractionReport report;
    TrainConfig train;            // resolved configs actually used
    ExtractionConfig extraction;
    double wall_clock_s = 0.0;
};

inline PipelineResult run_pipeline(const Dataset& ds, const PipelineConfig& cfg) {
    auto start = std::chrono::steady_clock::now();

    auto merged = detail::align_and_merge(marked_pairs(ds.train, ds.marker), cfg.align,
                                          cfg.merge, cfg.seed);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    TrainedModel tm = train(merged, tc);

    std::vector<std::vector<SymbolId>> synthetic;
    if (cfg.synthetic) synthetic = detail::synthetic_inputs(ds, cfg.synthetic_cap, cfg.seed);

    ExtractionConfig ec = cfg.extraction;
    ec.seed = cfg.seed;
    if (ec.k == 0) {
        auto records = collect_activations(tm, merged, synthetic);
        ec.k = cluster_count_range(count_distinct_vectors(records)).first;
    }
    ExtractionResult ex = extract(tm, ds.input_table, ds.output_table, merged, synthetic, ec);

    std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
    return PipelineResult{std::move(ex.fst), ex.report, tc, ec, d.count()};
}

// ---------------------------------------------------------------------------
// Sweeps: seeded random search over the training and extraction grids.

struct SweepSpec {
    std::vector<int> hidden_sizes = {16, 32, 64, 128};
    std::vector<double> dropouts = {0.0, 0.1, 0.3};
    std::vector<double> learning_rates = {2e-4, 1e-3, 2e-3, 1e-2};
    std::vector<int> epoch_choices = {200, 600, 1000};
    std::vector<int> batch_sizes;  // empty: derived from the training-set size
    std::vector<ClassifierKind> classifiers = {ClassifierKind::svm,
                                               ClassifierKind::logistic_regression};
    std::vector<std::optional<long>> lambda_choices = {
        std::nullopt, 2, 3, 4, 5, 10, 15, 20, 25, 30, 40, 50};
    int budget = 10;
    int workers = 1;
    std::uint64_t seed = 0;
    AlignMethod align = AlignMethod::crp;
    MergeMethod merge = MergeMethod::right;
    Objective objective = Objective::transduction;
    bool synthetic = true;
    std::size_t synthetic_cap = 2000;
};

namespace detail {

template <typename T>
bool subset_of(const std::vector<T>& values, const std::vector<T>& allowed) {
    for (const auto& v : values)
        if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) return false;
    return true;
}

// The batch grid is 2*10^k. Candidates are the four largest values under a
// fifth of the training-set size; tiny sets fall back to the default batch.
inline std::vector<int> batch_candidates(std::size_t train_size) {
    std::vector<int> all;
    for (long long b = 20; b <= 2000000000LL; b *= 10) all.push_back(static_cast<int>(b));
    std::vector<int> fit;
    for (int b : all)
        if (b < static_cast<double>(train_size) / 5.0) fit.push_back(b);
    while (fit.size() > 4) fit.erase(fit.begin());
    if (fit.empty()) fit.push_back(TrainConfig{}.batch_size);
    return fit;
}

}  // namespace detail

inline void validate_spec(const SweepSpec& spec, std::size_t train_size) {
    if (spec.budget < 1) throw ConfigError("sweep budget must be >= 1");
    if (spec.workers < 1) throw ConfigError("sweep workers must be >= 1");
    const SweepSpec grid;  // default-constructed members hold the full grids
    if (spec.hidden_sizes.empty() || !detail::subset_of(spec.hidden_sizes, grid.hidden_sizes))
        throw ConfigError("hidden sizes must be a nonempty subset of {16,32,64,128}");
    if (spec.dropouts.empty() || !detail::subset_of(spec.dropouts, grid.dropouts))
        throw ConfigError("dropouts must be a nonempty subset of {0,0.1,0.3}");
    if (spec.learning_rates.empty() ||
        !detail::subset_of(spec.learning_rates, grid.learning_rates))
        throw ConfigError("learning rates must be a nonempty subset of {2e-4,1e-3,2e-3,1e-2}");
    if (spec.epoch_choices.empty() || !detail::subset_of(spec.epoch_choices, grid.epoch_choices))
        throw ConfigError("epochs must be a nonempty subset of {200,600,1000}");
    if (!spec.batch_sizes.empty() &&
        !detail::subset_of(spec.batch_sizes, detail::batch_candidates(train_size)))
        throw ConfigError("batch sizes must come from the 2*10^k grid for this dataset");
    if (spec.classifiers.empty()) throw ConfigError("classifier grid is empty");
    if (spec.lambda_choices.empty() ||
        !detail::subset_of(spec.lambda_choices, grid.lambda_choices))
        throw ConfigError("split thresholds must come from {None,2,3,4,5,10,15,20,25,30,40,50}");
}

struct TrialSummary {
    int index = 0;
    nlohmann::json config;
    bool failed = false;
    std::string error;
    double dev_accuracy = 0.0;
    StateId states = 0;
    std::size_t transitions = 0;
    ExtractionReport report;
};

struct SweepResult {
    Transducer fst;              // winner
    PipelineConfig best;
    EvalReport dev_report;
    EvalReport test_report;
    ExtractionReport extraction_report;
    std::vector<TrialSummary> trials;
    int failed_trials = 0;
};

inline nlohmann::json pipeline_config_json(const PipelineConfig& cfg) {
    nlohmann::json j{{"align", align_name(cfg.align)},
                     {"merge", merge_name(cfg.merge)},
                     {"objective", objective_name(cfg.train.objective)},
                     {"synthetic", cfg.synthetic},
                     {"seed", cfg.seed},
                     {"d", cfg.train.d},
                     {"dropout", cfg.train.dropout},
                     {"learning_rate", cfg.train.lr},
                     {"epochs", cfg.train.epochs},
                     {"batch_size", cfg.train.batch_size},
                     {"k", cfg.extraction.k},
                     {"classifier", classifier_name(cfg.extraction.classifier)}};
    if (cfg.extraction.lambda_trans)
        j["lambda_trans"] = *cfg.extraction.lambda_trans;
    else
        j["lambda_trans"] = nullptr;
    return j;
}

inline SweepResult run_sweep(const Dataset& ds, const SweepSpec& spec) {
    validate_spec(spec, ds.train.size());

    // Sampled up front so the trial list is fixed before any work runs.
    struct Trial {
        PipelineConfig cfg;
        double k_fraction = 0.0;  // position within the valid k range
    };
    auto rng = substream(spec.seed, "sweep");
    auto pick = [&](const auto& options) {
        std::uniform_int_distribution<std::size_t> d(0, options.size() - 1);
        return options[d(rng)];
    };
    std::vector<int> batches =
        spec.batch_sizes.empty() ? detail::batch_candidates(ds.train.size()) : spec.batch_sizes;

    std::vector<Trial> trials(static_cast<std::size_t>(spec.budget));
    for (auto& t : trials) {
        t.cfg.align = spec.align;
        t.cfg.merge = spec.merge;
        t.cfg.synthetic = spec.synthetic;
        t.cfg.synthetic_cap = spec.synthetic_cap;
        t.cfg.seed = spec.seed;
        t.cfg.train.objective = spec.objective;
        t.cfg.train.seed = spec.seed;
        t.cfg.train.d = pick(spec.hidden_sizes);
        t.cfg.train.dropout = pick(spec.dropouts);
        t.cfg.train.lr = pick(spec.learning_rates);
        t.cfg.train.epochs = pick(spec.epoch_choices);
        t.cfg.train.batch_size = pick(batches);
        t.cfg.extraction.classifier = pick(spec.classifiers);
        t.cfg.extraction.lambda_trans = pick(spec.lambda_choices);
        t.cfg.extraction.seed = spec.seed;
        t.k_fraction = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    }

    // Shared per-sweep work: alignment and synthetic generation do not vary
    // across trials.
    auto merged = detail::align_and_merge(marked_pairs(ds.train, ds.marker), spec.align,
                                          spec.merge, spec.seed);
    std::vector<std::vector<SymbolId>> synthetic;
    if (spec.synthetic) synthetic = detail::synthetic_inputs(ds, spec.synthetic_cap, spec.seed);

    struct CacheEntry {
        TrainConfig key;
        std::shared_ptr<TrainedModel> model;
        std::size_t distinct = 0;
    };
    std::vector<CacheEntry> cache;
    std::mutex cache_mu;
    auto model_for = [&](const TrainConfig& tc) {
        std::lock_guard<std::mutex> lock(cache_mu);
        for (const auto& e : cache)
            if (e.key == tc) return e;
        CacheEntry e;
        e.key = tc;
        e.model = std::make_shared<TrainedModel>(train(merged, tc));
        e.distinct = count_distinct_vectors(collect_activations(*e.model, merged, synthetic));
        cache.push_back(e);
        return e;
    };

    struct Outcome {
        TrialSummary summary;
        std::optional<Transducer> fst;
        std::optional<EvalReport> dev;
        PipelineConfig cfg;
    };
    std::vector<Outcome> outcomes(trials.size());

    auto run_trial = [&](std::size_t i) {
        Outcome& out = outcomes[i];
        out.summary.index = static_cast<int>(i);
        out.cfg = trials[i].cfg;
        try {
            CacheEntry entry = model_for(trials[i].cfg.train);
            auto [lo, hi] = cluster_count_range(entry.distinct);
            // log-uniform across the valid range: the useful cluster counts
            // sit orders of magnitude below the record count
            double span = std::log(static_cast<double>(hi) / static_cast<double>(lo));
            auto k = static_cast<std::uint32_t>(
                std::lround(lo * std::exp(trials[i].k_fraction * span)));
            out.cfg.extraction.k = std::clamp(k, lo, hi);
            out.summary.config = pipeline_config_json(out.cfg);

            ExtractionResult ex = extract(*entry.model, ds.input_table, ds.output_table,
                                          merged, synthetic, out.cfg.extraction);
            EvalReport dev = evaluate(fst_system(ex.fst, ds.marker), ds.dev);
            dev.states = ex.fst.num_states();
            dev.transitions = ex.fst.num_arcs();
            out.summary.dev_accuracy = dev.accuracy;
            out.summary.states = dev.states;
            out.summary.transitions = dev.transitions;
            out.summary.report = ex.report;
            out.fst = std::move(ex.fst);
            out.dev = dev;
        } catch (const std::exception& e) {
            out.summary.failed = true;
            out.summary.error = e.what();
            if (out.summary.config.is_null())
                out.summary.config = pipeline_config_json(out.cfg);
        }
    };

    if (spec.workers <= 1) {
        for (std::size_t i = 0; i < trials.size(); ++i) run_trial(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < spec.workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < trials.size(); i = next++) run_trial(i);
            });
        for (auto& th : pool) th.join();
    }

    // Winner: best dev accuracy, ties to the smaller machine, then the
    // earlier trial. Order is independent of execution interleaving.
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (outcomes[i].summary.failed) continue;
        if (!best) {
            best = i;
            continue;
        }
        const auto& a = outcomes[i].summary;
        const auto& b = outcomes[*best].summary;
        if (a.dev_accuracy > b.dev_accuracy ||
            (a.dev_accuracy == b.dev_accuracy &&
             std::tie(a.states, a.transitions, a.index) <
                 std::tie(b.states, b.transitions, b.index)))
            best = i;
    }
    if (!best) throw Error("every sweep trial failed");

    Outcome& win = outcomes[*best];
    EvalReport test_report = evaluate(fst_system(*win.fst, ds.marker), ds.test());
    test_report.states = win.fst->num_states();
    test_report.transitions = win.fst->num_arcs();

    SweepResult result{std::move(*win.fst), win.cfg,          *win.dev,
                       test_report,         win.summary.report, {},
                       0};
    for (auto& o : outcomes) {
        if (o.summary.failed) ++result.failed_trials;
        result.trials.push_back(std::move(o.summary));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Run reports

struct RunReport {
    std::string dataset;
    std::string system;
    nlohmann::json config;
    std::optional<double> dev_accuracy;
    double test_accuracy = 0.0;
    StateId states = 0;
    std::size_t transitions = 0;
    double wall_clock_s = 0.0;
    std::vector<std::string> flags;
};

inline nlohmann::json to_json(const RunReport& r) {
    nlohmann::json j{{"dataset", r.dataset},
                     {"system", r.system},
                     {"config", r.config},
                     {"test_accuracy", r.test_accuracy},
                     {"states", r.states},
                     {"transitions", r.transitions},
                     {"wall_clock_s", r.wall_clock_s},
                     {"flags", r.flags}};
    if (r.dev_accuracy)
        j["dev_accuracy"] = *r.dev_accuracy;
    else
        j["dev_accuracy"] = nullptr;
    return j;
}

}  // namespace fstforge
