// FST extraction from a trained network: collect hidden-state records over
// training and synthetic strings, cluster them into states, aggregate the
// transitions between clusters, resolve non-determinism by threshold
// filtering and classifier-driven state splitting, then prune and minimize.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fstforge/cluster.hpp"
#include "fstforge/errors.hpp"
#include "fstforge/rng.hpp"
#include "fstforge/rnn.hpp"
#include "fstforge/transducer.hpp"

namespace fstforge {

enum class RecordSource { root, train, synthetic };

// One deduplicated hidden state. Records form a tree over token prefixes:
// `prev` is the record for the state one step earlier (the shared h_0 root
// points at itself), and (in, label) is the transition consumed to get here.
// `weight` counts how many (string, position) occurrences were folded in.
struct ActivationRecord {
    Eigen::VectorXd vector;
    std::uint32_t prev = 0;
    SymbolId in = kEpsilon;
    std::uint32_t label = 0;
    RecordSource source = RecordSource::root;
    long weight = 0;
};

enum class ClassifierKind { svm, logistic_regression };

inline std::string classifier_name(ClassifierKind c) {
    return c == ClassifierKind::svm ? "svm" : "logistic_regression";
}

inline ClassifierKind parse_classifier(const std::string& name) {
    if (name == "svm") return ClassifierKind::svm;
    if (name == "logistic_regression") return ClassifierKind::logistic_regression;
    throw ConfigError("unknown classifier: '" + name + "'");
}

struct ExtractionConfig {
    std::uint32_t k = 2;
    ClassifierKind classifier = ClassifierKind::svm;
    // Minimum record-edge support a transition needs to survive. Unset
    // disables splitting; determinism then comes from max-count projection.
    std::optional<long> lambda_trans;
    std::uint64_t seed = 0;
    // Keep the h_0 root out of k-means and give it a dedicated state.
    bool pin_root = false;
};

inline void validate_config(const ExtractionConfig& cfg) {
    if (cfg.k < 1) throw InvalidKError("k must be at least 1");
    if (cfg.lambda_trans && *cfg.lambda_trans < 2)
        throw ConfigError("lambda_trans must be at least 2 when set");
}

// ---- activation collection ----

// Records for every position of every string, deduplicated by token prefix:
// two positions share a record exactly when their (input, label) histories
// match, which also makes their hidden states equal. Training strings carry
// gold labels; synthetic strings carry the model's own predicted labels,
// except that synthetic strings whose input already occurs in the training
// set are dropped.
inline std::vector<ActivationRecord> collect_activations(
    const TrainedModel& tm, const std::vector<MergedSequence>& train,
    const std::vector<std::vector<SymbolId>>& synthetic) {
    std::vector<ActivationRecord> records;
    std::vector<std::map<std::pair<SymbolId, std::uint32_t>, std::uint32_t>> children;
    records.push_back(ActivationRecord{Eigen::VectorXd::Zero(tm.params.d), 0, kEpsilon,
                                       0, RecordSource::root, 0});
    children.emplace_back();

    auto add_trace = [&](const HiddenTrace& tr, RecordSource source) {
        records[0].weight += 1;
        std::uint32_t cur = 0;
        for (std::size_t t = 0; t < tr.steps.size(); ++t) {
            auto key = tr.steps[t];
            auto it = children[cur].find(key);
            std::uint32_t next;
            if (it == children[cur].end()) {
                next = static_cast<std::uint32_t>(records.size());
                records.push_back(ActivationRecord{tr.h[t + 1], cur, key.first,
                                                   key.second, source, 0});
                children.emplace_back();
                children[cur].emplace(key, next);
            } else {
                next = it->second;
                if (source == RecordSource::train)
                    records[next].source = RecordSource::train;
            }
            records[next].weight += 1;
            cur = next;
        }
    };

    std::set<std::vector<SymbolId>> train_inputs;
    for (const auto& seq : train) {
        if (seq.steps.empty()) continue;
        train_inputs.insert(seq.input_projection());
        add_trace(trace_gold(tm, seq), RecordSource::train);
    }
    for (const auto& input : synthetic) {
        if (input.empty() || train_inputs.count(input)) continue;
        add_trace(trace_decode(tm, input), RecordSource::synthetic);
    }
    return records;
}

inline std::size_t count_distinct_vectors(const std::vector<ActivationRecord>& records) {
    std::vector<std::vector<double>> vs;
    vs.reserve(records.size());
    for (const auto& r : records)
        vs.emplace_back(r.vector.data(), r.vector.data() + r.vector.size());
    std::sort(vs.begin(), vs.end());
    return static_cast<std::size_t>(std::unique(vs.begin(), vs.end()) - vs.begin());
}

// Sweep bounds for the cluster count: up to one state per distinct vector,
// from 50 upward, with the floor relaxed on tiny record sets.
inline std::pair<std::uint32_t, std::uint32_t> cluster_count_range(std::size_t distinct) {
    auto hi = static_cast<std::uint32_t>(std::max<std::size_t>(distinct, 1));
    auto lo = static_cast<std::uint32_t>(
        std::min<std::size_t>(50, std::max<std::size_t>(distinct / 2, 1)));
    if (lo > hi) lo = hi;
    return {lo, hi};
}

// ---- clustering ----

struct ClusterTransition {
    std::uint32_t src = 0;
    SymbolId in = kEpsilon;
    std::uint32_t label = 0;
    std::uint32_t dst = 0;

    auto operator<=>(const ClusterTransition&) const = default;
};

struct ClusteredAutomaton {
    std::vector<std::uint32_t> assignment;          // record id -> state id
    std::map<ClusterTransition, long> transitions;  // aggregated record edges
    std::uint32_t initial = 0;
    std::uint32_t num_states = 0;
};

namespace detail {

inline std::vector<Eigen::VectorXd> standardized_vectors(
    const std::vector<ActivationRecord>& records) {
    std::vector<Eigen::VectorXd> xs;
    std::vector<double> ws;
    xs.reserve(records.size());
    ws.reserve(records.size());
    for (const auto& r : records) {
        xs.push_back(r.vector);
        ws.push_back(static_cast<double>(r.weight));
    }
    Standardizer st = Standardizer::fit(xs, ws);
    for (auto& x : xs) x = st.apply(x);
    return xs;
}

inline std::map<ClusterTransition, long> aggregate_transitions(
    const std::vector<ActivationRecord>& records,
    const std::vector<std::uint32_t>& assignment) {
    std::map<ClusterTransition, long> out;
    for (std::size_t r = 1; r < records.size(); ++r)
        out[ClusterTransition{assignment[records[r].prev], records[r].in,
                              records[r].label, assignment[r]}] += records[r].weight;
    return out;
}

}  // namespace detail

inline ClusteredAutomaton cluster(const std::vector<ActivationRecord>& records,
                                  std::uint32_t k, std::uint64_t seed,
                                  bool pin_root = false) {
    if (records.empty()) throw ConfigError("no activation records to cluster");
    if (k < 1) throw InvalidKError("k must be at least 1");
    std::vector<Eigen::VectorXd> std_vecs = detail::standardized_vectors(records);

    std::vector<Eigen::VectorXd> xs;
    std::vector<double> ws;
    const std::size_t first = pin_root ? 1 : 0;
    for (std::size_t i = first; i < records.size(); ++i) {
        xs.push_back(std_vecs[i]);
        ws.push_back(static_cast<double>(records[i].weight));
    }
    if (xs.empty()) throw ConfigError("no records left to cluster");
    {
        std::vector<std::vector<double>> vs;
        for (const auto& x : xs)
            vs.emplace_back(x.data(), x.data() + x.size());
        std::sort(vs.begin(), vs.end());
        std::size_t distinct =
            static_cast<std::size_t>(std::unique(vs.begin(), vs.end()) - vs.begin());
        if (k > distinct)
            throw InvalidKError("k = " + std::to_string(k) + " exceeds " +
                                std::to_string(distinct) + " distinct vectors");
    }

    std::mt19937_64 rng = substream(seed, "kmeans");
    KMeansResult km = weighted_kmeans(xs, ws, k, rng);

    ClusteredAutomaton ca;
    ca.assignment.resize(records.size());
    for (std::size_t i = first; i < records.size(); ++i)
        ca.assignment[i] = km.assignment[i - first];
    ca.num_states = k;
    if (pin_root) ca.assignment[0] = ca.num_states++;
    ca.initial = ca.assignment[0];
    ca.transitions = detail::aggregate_transitions(records, ca.assignment);
    return ca;
}

// ---- linear classifier for state splitting ----

namespace detail {

// One-vs-rest linear separators trained by full-batch (sub)gradient descent
// on weighted samples. Two classes use a single separator.
struct LinearClassifier {
    Eigen::MatrixXd W;  // one row per separator
    Eigen::VectorXd b;
    std::uint32_t num_classes = 0;

    std::uint32_t predict(const Eigen::VectorXd& x) const {
        if (num_classes == 2) return W.row(0).dot(x) + b[0] >= 0.0 ? 1u : 0u;
        std::uint32_t best = 0;
        double best_score = W.row(0).dot(x) + b[0];
        for (std::uint32_t c = 1; c < num_classes; ++c) {
            double s = W.row(c).dot(x) + b[c];
            if (s > best_score) {
                best_score = s;
                best = c;
            }
        }
        return best;
    }
};

inline LinearClassifier train_classifier(const std::vector<Eigen::VectorXd>& xs,
                                         const std::vector<std::uint32_t>& labels,
                                         const std::vector<double>& weights,
                                         std::uint32_t num_classes,
                                         ClassifierKind kind) {
    constexpr int kEpochs = 200;
    constexpr double kLr = 0.1;
    constexpr double kL2 = 1e-4;
    const Eigen::Index dim = xs[0].size();
    double total = 0.0;
    for (double w : weights) total += w;

    auto fit_binary = [&](auto target) {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
        double b = 0.0;
        for (int epoch = 0; epoch < kEpochs; ++epoch) {
            Eigen::VectorXd gw = kL2 * w;
            double gb = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                double y = target(labels[i]) ? 1.0 : -1.0;
                double f = w.dot(xs[i]) + b;
                double coef;
                if (kind == ClassifierKind::svm) {
                    if (y * f >= 1.0) continue;
                    coef = -y;
                } else {
                    coef = 1.0 / (1.0 + std::exp(-f)) - (y > 0 ? 1.0 : 0.0);
                }
                gw += (weights[i] / total * coef) * xs[i];
                gb += weights[i] / total * coef;
            }
            w -= kLr * gw;
            b -= kLr * gb;
        }
        return std::make_pair(w, b);
    };

    LinearClassifier clf;
    clf.num_classes = num_classes;
    if (num_classes == 2) {
        auto [w, b] = fit_binary([](std::uint32_t l) { return l == 1; });
        clf.W = w.transpose();
        clf.b = Eigen::VectorXd::Constant(1, b);
    } else {
        clf.W.resize(num_classes, dim);
        clf.b.resize(num_classes);
        for (std::uint32_t c = 0; c < num_classes; ++c) {
            auto [w, b] = fit_binary([c](std::uint32_t l) { return l == c; });
            clf.W.row(c) = w.transpose();
            clf.b[c] = b;
        }
    }
    return clf;
}

}  // namespace detail

// ---- transition resolution ----

using ResolvedEdges =
    std::map<std::pair<std::uint32_t, SymbolId>, std::pair<std::uint32_t, std::uint32_t>>;

struct ResolvedTransitions {
    ResolvedEdges edges;  // (state, input) -> (output label, destination)
    std::vector<std::uint32_t> assignment;
    std::uint32_t initial = 0;
    std::uint32_t num_states = 0;
    int splits = 0;
    int split_failures = 0;
    long dropped = 0;  // transition alternatives filtered or projected away
    bool budget_exhausted = false;
};

namespace detail {

// (output label, destination) alternatives per input symbol, with counts.
using AltMap = std::map<SymbolId, std::map<std::pair<std::uint32_t, std::uint32_t>, long>>;

inline AltMap gather_alternatives(const std::vector<ActivationRecord>& records,
                                  const std::vector<std::uint32_t>& assignment,
                                  std::uint32_t state) {
    AltMap alts;
    for (std::size_t r = 1; r < records.size(); ++r)
        if (assignment[records[r].prev] == state)
            alts[records[r].in][{records[r].label, assignment[r]}] += records[r].weight;
    return alts;
}

inline std::vector<std::pair<std::pair<std::uint32_t, std::uint32_t>, long>>
over_threshold(const std::map<std::pair<std::uint32_t, std::uint32_t>, long>& alts,
               std::optional<long> lambda) {
    std::vector<std::pair<std::pair<std::uint32_t, std::uint32_t>, long>> kept;
    for (const auto& [alt, count] : alts)
        if (!lambda || count >= *lambda) kept.emplace_back(alt, count);
    return kept;
}

inline std::pair<std::uint32_t, std::uint32_t> max_count_alternative(
    const std::map<std::pair<std::uint32_t, std::uint32_t>, long>& alts) {
    auto best = alts.begin();
    for (auto it = std::next(alts.begin()); it != alts.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;  // map order breaks count ties by (label, destination)
}

}  // namespace detail

// Breadth-first driver over the clustered automaton. For each reached state
// and input symbol, transitions with support below lambda_trans are dropped;
// a surviving unique transition is committed; competing survivors trigger a
// classifier split of the state on its most conflicted input symbol, after
// which every state with an edge into the new states is requeued with its
// resolutions cleared. A global budget of 10k splits guarantees termination;
// once it is spent, remaining conflicts are projected to the max-count
// alternative and the result is flagged.
inline ResolvedTransitions resolve_transitions(const std::vector<ActivationRecord>& records,
                                               const ClusteredAutomaton& ca,
                                               const ExtractionConfig& cfg) {
    validate_config(cfg);
    ResolvedTransitions res;
    res.assignment = ca.assignment;
    res.num_states = ca.num_states;
    res.initial = ca.initial;

    const long split_budget = 10L * static_cast<long>(cfg.k);
    std::vector<Eigen::VectorXd> std_vecs = detail::standardized_vectors(records);

    std::set<std::pair<std::uint32_t, SymbolId>> resolved;
    std::set<std::uint32_t> retired;
    std::set<std::uint32_t> in_queue;
    std::deque<std::uint32_t> queue;
    auto enqueue = [&](std::uint32_t q) {
        if (in_queue.insert(q).second) queue.push_back(q);
    };
    enqueue(res.initial);

    // Majority projection for one (state, symbol): commit the best-supported
    // alternative and drop the rest.
    auto project = [&](std::uint32_t q, SymbolId sym,
                       const std::map<std::pair<std::uint32_t, std::uint32_t>, long>& alts) {
        res.edges[{q, sym}] = detail::max_count_alternative(alts);
        resolved.insert({q, sym});
        res.dropped += static_cast<long>(alts.size()) - 1;
    };

    // Splits state q on sym. Returns false when the records cannot be
    // separated; the caller then falls back to majority projection.
    auto try_split = [&](std::uint32_t q, SymbolId sym, const detail::AltMap& alts) {
        std::vector<std::uint32_t> members;
        for (std::size_t r = 0; r < records.size(); ++r)
            if (res.assignment[r] == q) members.push_back(static_cast<std::uint32_t>(r));

        auto survivors = detail::over_threshold(alts.at(sym), cfg.lambda_trans);
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> class_of;
        for (const auto& [alt, count] : survivors)
            class_of.emplace(alt, static_cast<std::uint32_t>(class_of.size()));

        // Label each member that emits sym toward a surviving alternative by
        // its own best-supported one.
        std::vector<Eigen::VectorXd> xs;
        std::vector<std::uint32_t> labels;
        std::vector<double> weights;
        std::vector<std::uint32_t> labeled_members;
        {
            std::map<std::uint32_t,
                     std::map<std::pair<std::uint32_t, std::uint32_t>, long>>
                member_alts;
            for (std::size_t r = 1; r < records.size(); ++r) {
                const auto& rec = records[r];
                if (res.assignment[rec.prev] != q || rec.in != sym) continue;
                auto alt = std::make_pair(rec.label, res.assignment[r]);
                if (class_of.count(alt)) member_alts[rec.prev][alt] += rec.weight;
            }
            for (const auto& [member, own] : member_alts) {
                xs.push_back(std_vecs[member]);
                labels.push_back(class_of.at(detail::max_count_alternative(own)));
                weights.push_back(static_cast<double>(records[member].weight));
                labeled_members.push_back(member);
            }
        }
        std::set<std::uint32_t> distinct_labels(labels.begin(), labels.end());
        if (distinct_labels.size() < 2) return false;

        auto clf = detail::train_classifier(
            xs, labels, weights, static_cast<std::uint32_t>(class_of.size()),
            cfg.classifier);
        std::set<std::uint32_t> predicted_on_labeled;
        for (const auto& x : xs) predicted_on_labeled.insert(clf.predict(x));
        if (predicted_on_labeled.size() < 2) return false;

        // Reassign every member, conflicting or not, by classifier prediction.
        std::map<std::uint32_t, std::uint32_t> state_of_class;
        std::vector<std::uint32_t> member_class(members.size());
        for (std::size_t i = 0; i < members.size(); ++i)
            member_class[i] = clf.predict(std_vecs[members[i]]);
        std::set<std::uint32_t> used(member_class.begin(), member_class.end());
        for (std::uint32_t c : used) state_of_class[c] = res.num_states++;
        std::set<std::uint32_t> new_states;
        for (std::size_t i = 0; i < members.size(); ++i) {
            res.assignment[members[i]] = state_of_class[member_class[i]];
            new_states.insert(res.assignment[members[i]]);
        }
        retired.insert(q);
        res.splits += 1;
        res.initial = res.assignment[0];

        std::set<std::uint32_t> upstream;
        for (std::size_t r = 1; r < records.size(); ++r)
            if (new_states.count(res.assignment[r]))
                upstream.insert(res.assignment[records[r].prev]);
        for (std::uint32_t u : upstream) {
            std::erase_if(resolved, [&](const auto& p) { return p.first == u; });
            std::erase_if(res.edges, [&](const auto& e) { return e.first.first == u; });
            enqueue(u);
        }
        std::erase_if(resolved, [&](const auto& p) { return p.first == q; });
        std::erase_if(res.edges, [&](const auto& e) { return e.first.first == q; });
        enqueue(res.initial);
        return true;
    };

    while (!queue.empty()) {
        std::uint32_t q = queue.front();
        queue.pop_front();
        in_queue.erase(q);
        if (retired.count(q)) continue;

        detail::AltMap alts = detail::gather_alternatives(records, res.assignment, q);
        bool rescan = true;
        while (rescan) {
            rescan = false;
            for (const auto& [sym, sym_alts] : alts) {
                if (resolved.count({q, sym})) continue;
                if (!cfg.lambda_trans) {
                    project(q, sym, sym_alts);
                    enqueue(res.edges[{q, sym}].second);
                    continue;
                }
                auto survivors = detail::over_threshold(sym_alts, cfg.lambda_trans);
                if (survivors.empty()) {
                    resolved.insert({q, sym});
                    res.dropped += static_cast<long>(sym_alts.size());
                    continue;
                }
                if (survivors.size() == 1) {
                    res.edges[{q, sym}] = survivors[0].first;
                    resolved.insert({q, sym});
                    res.dropped += static_cast<long>(sym_alts.size()) - 1;
                    enqueue(survivors[0].first.second);
                    continue;
                }
                if (res.splits >= split_budget) {
                    res.budget_exhausted = true;
                    std::map<std::pair<std::uint32_t, std::uint32_t>, long> surv_map(
                        survivors.begin(), survivors.end());
                    project(q, sym, surv_map);
                    res.dropped += static_cast<long>(sym_alts.size()) -
                                   static_cast<long>(survivors.size());
                    enqueue(res.edges[{q, sym}].second);
                    continue;
                }
                // Most conflicted unresolved symbol, ties to the smallest id.
                SymbolId worst = sym;
                std::size_t worst_n = 0;
                for (const auto& [s2, alts2] : alts) {
                    if (resolved.count({q, s2})) continue;
                    std::size_t n = detail::over_threshold(alts2, cfg.lambda_trans).size();
                    if (n > worst_n) {
                        worst_n = n;
                        worst = s2;
                    }
                }
                if (try_split(q, worst, alts)) {
                    rescan = false;
                    break;  // q no longer exists
                }
                res.split_failures += 1;
                auto worst_survivors = detail::over_threshold(alts.at(worst), cfg.lambda_trans);
                std::map<std::pair<std::uint32_t, std::uint32_t>, long> surv_map(
                    worst_survivors.begin(), worst_survivors.end());
                project(q, worst, surv_map);
                res.dropped += static_cast<long>(alts.at(worst).size()) -
                               static_cast<long>(worst_survivors.size());
                enqueue(res.edges[{q, worst}].second);
                rescan = true;
                break;  // restart the symbol scan for q
            }
            if (retired.count(q)) break;
        }
    }
    return res;
}

// ---- finalization ----

inline Transducer finalize(const ResolvedEdges& edges, std::uint32_t num_states,
                           std::uint32_t initial, const SymbolTable& input_table,
                           const SymbolTable& output_table, const OutputVocab& vocab) {
    std::vector<RawTransition> raw;
    raw.reserve(edges.size());
    for (const auto& [key, val] : edges)
        raw.push_back(RawTransition{key.first, key.second, vocab.label(val.first),
                                    val.second});
    Transducer t(input_table, output_table, std::max(num_states, initial + 1), initial,
                 raw);
    return minimize(prune_inaccessible(t));
}

// ---- end-to-end extraction ----

struct ExtractionReport {
    std::uint32_t k = 0;
    int splits = 0;
    int split_failures = 0;
    std::uint32_t states_before_minimize = 0;
    std::uint32_t states_after_minimize = 0;
    long dropped_transitions = 0;
    bool budget_exhausted = false;
    std::optional<double> dev_accuracy;  // filled in by the evaluation harness
};

inline nlohmann::json report_to_json(const ExtractionReport& r) {
    nlohmann::json j;
    j["k"] = r.k;
    j["splits"] = r.splits;
    j["split_failures"] = r.split_failures;
    j["states_before_minimize"] = r.states_before_minimize;
    j["states_after_minimize"] = r.states_after_minimize;
    j["dropped_transitions"] = r.dropped_transitions;
    j["budget_exhausted"] = r.budget_exhausted;
    j["dev_accuracy"] = r.dev_accuracy ? nlohmann::json(*r.dev_accuracy)
                                       : nlohmann::json(nullptr);
    return j;
}

struct ExtractionResult {
    Transducer fst;
    ExtractionReport report;
};

inline ExtractionResult extract(const TrainedModel& tm, const SymbolTable& input_table,
                                const SymbolTable& output_table,
                                const std::vector<MergedSequence>& train,
                                const std::vector<std::vector<SymbolId>>& synthetic,
                                const ExtractionConfig& cfg) {
    validate_config(cfg);
    std::vector<ActivationRecord> records = collect_activations(tm, train, synthetic);
    ClusteredAutomaton ca = cluster(records, cfg.k, cfg.seed, cfg.pin_root);
    ResolvedTransitions rt = resolve_transitions(records, ca, cfg);

    std::vector<RawTransition> raw;
    for (const auto& [key, val] : rt.edges)
        raw.push_back(RawTransition{key.first, key.second, tm.vocab.label(val.first),
                                    val.second});
    Transducer full(input_table, output_table,
                    std::max(rt.num_states, rt.initial + 1), rt.initial, raw);
    Transducer pruned = prune_inaccessible(full);
    Transducer minimized = minimize(pruned);

    ExtractionReport report;
    report.k = cfg.k;
    report.splits = rt.splits;
    report.split_failures = rt.split_failures;
    report.states_before_minimize = pruned.num_states();
    report.states_after_minimize = minimized.num_states();
    report.dropped_transitions = rt.dropped;
    report.budget_exhausted = rt.budget_exhausted;
    return ExtractionResult{std::move(minimized), report};
}

}  // namespace fstforge
