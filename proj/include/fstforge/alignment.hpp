// Character alignment between input/output string pairs, and the epsilon
// merging that turns alignments into FST-ready (input symbol, output string)
// steps.
//
// Two aligners are provided: a Gibbs-sampled aligner driven by corpus-wide
// aligned-pair counts, and a per-pair minimum-edit-distance aligner used as
// an ablation. Both produce monotone alignments: epsilon insertions and
// deletions only, no reordering. Same-length pairs are aligned positionwise.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fstforge/errors.hpp"
#include "fstforge/rng.hpp"
#include "fstforge/symbol_table.hpp"

namespace fstforge {

struct StringPair {
    std::vector<SymbolId> input;
    std::vector<SymbolId> output;

    bool operator==(const StringPair&) const = default;
};

// One alignment step; `in` or `out` may be epsilon, never both.
struct AlignedStep {
    SymbolId in = kEpsilon;
    SymbolId out = kEpsilon;

    bool operator==(const AlignedStep&) const = default;
    auto operator<=>(const AlignedStep&) const = default;
};

struct AlignedSequence {
    std::vector<AlignedStep> steps;

    bool operator==(const AlignedSequence&) const = default;
};

// Post-merge step: a real input symbol with an output string (possibly empty).
struct MergedStep {
    SymbolId in = kEpsilon;
    std::vector<SymbolId> out;

    bool operator==(const MergedStep&) const = default;
    auto operator<=>(const MergedStep&) const = default;
};

struct MergedSequence {
    std::vector<MergedStep> steps;

    bool operator==(const MergedSequence&) const = default;

    std::vector<SymbolId> input_projection() const {
        std::vector<SymbolId> v;
        for (const auto& s : steps) v.push_back(s.in);
        return v;
    }
    std::vector<SymbolId> output_concat() const {
        std::vector<SymbolId> v;
        for (const auto& s : steps) v.insert(v.end(), s.out.begin(), s.out.end());
        return v;
    }
};

// Corpus-wide counts of aligned (in, out) pairs.
struct PairCounts {
    std::map<std::pair<SymbolId, SymbolId>, long> counts;
    long total = 0;

    void add(const AlignedSequence& a, long sign = 1) {
        for (const auto& s : a.steps) {
            counts[{s.in, s.out}] += sign;
            total += sign;
        }
    }
    long count(SymbolId in, SymbolId out) const {
        auto it = counts.find({in, out});
        return it == counts.end() ? 0 : it->second;
    }
};

struct CrpOptions {
    int iterations = 10;
    double alpha = 0.1;        // add-alpha smoothing over the pair vocabulary
    bool incremental = false;  // update counts within a pass instead of between passes
};

namespace detail {

// Samples one monotone alignment for (x, y) by dynamic programming over
// log pair weights, walking the table backward. Same-length pairs are
// aligned positionwise without sampling.
template <typename WeightFn>
AlignedSequence sample_alignment(const std::vector<SymbolId>& x,
                                 const std::vector<SymbolId>& y, WeightFn log_weight,
                                 std::mt19937_64& rng) {
    AlignedSequence out;
    const std::size_t n = x.size(), m = y.size();
    if (n == m) {
        for (std::size_t i = 0; i < n; ++i) out.steps.push_back({x[i], y[i]});
        return out;
    }
    constexpr double kNegInf = -1e300;
    std::vector<double> f((n + 1) * (m + 1), kNegInf);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return f[i * (m + 1) + j]; };
    at(0, 0) = 0.0;
    auto lse = [](double a, double b) {
        if (a < b) std::swap(a, b);
        if (b <= -1e299) return a;
        return a + std::log1p(std::exp(b - a));
    };
    for (std::size_t i = 0; i <= n; ++i) {
        for (std::size_t j = 0; j <= m; ++j) {
            if (i == 0 && j == 0) continue;
            double v = kNegInf;
            if (i > 0 && j > 0) v = lse(v, at(i - 1, j - 1) + log_weight(x[i - 1], y[j - 1]));
            if (j > 0) v = lse(v, at(i, j - 1) + log_weight(kEpsilon, y[j - 1]));
            if (i > 0) v = lse(v, at(i - 1, j) + log_weight(x[i - 1], kEpsilon));
            at(i, j) = v;
        }
    }
    std::size_t i = n, j = m;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (i > 0 || j > 0) {
        double w_diag = (i > 0 && j > 0)
                            ? at(i - 1, j - 1) + log_weight(x[i - 1], y[j - 1])
                            : kNegInf;
        double w_ins = j > 0 ? at(i, j - 1) + log_weight(kEpsilon, y[j - 1]) : kNegInf;
        double w_del = i > 0 ? at(i - 1, j) + log_weight(x[i - 1], kEpsilon) : kNegInf;
        double mx = std::max({w_diag, w_ins, w_del});
        double p_diag = std::exp(w_diag - mx);
        double p_ins = std::exp(w_ins - mx);
        double p_del = std::exp(w_del - mx);
        double r = unit(rng) * (p_diag + p_ins + p_del);
        if (r < p_diag) {
            out.steps.push_back({x[i - 1], y[j - 1]});
            --i, --j;
        } else if (r < p_diag + p_ins) {
            out.steps.push_back({kEpsilon, y[j - 1]});
            --j;
        } else {
            out.steps.push_back({x[i - 1], kEpsilon});
            --i;
        }
    }
    std::reverse(out.steps.begin(), out.steps.end());
    return out;
}

}  // namespace detail

inline std::vector<AlignedSequence> crp_align(const std::vector<StringPair>& pairs,
                                              const CrpOptions& opt, std::uint64_t seed) {
    if (opt.iterations < 1) throw ConfigError("crp_align requires iterations >= 1");
    auto rng = substream(seed, "align");

    std::set<SymbolId> in_syms, out_syms;
    for (const auto& p : pairs) {
        in_syms.insert(p.input.begin(), p.input.end());
        out_syms.insert(p.output.begin(), p.output.end());
    }
    // Pair vocabulary: (in + epsilon) x (out + epsilon), minus (eps, eps).
    const double vocab =
        static_cast<double>((in_syms.size() + 1) * (out_syms.size() + 1) - 1);

    // Step 1: random initial monotone alignment (uniform over paths).
    std::vector<AlignedSequence> alignments;
    alignments.reserve(pairs.size());
    auto uniform_w = [](SymbolId, SymbolId) { return 0.0; };
    for (const auto& p : pairs)
        alignments.push_back(detail::sample_alignment(p.input, p.output, uniform_w, rng));

    PairCounts counts;
    for (const auto& a : alignments) counts.add(a);

    // Steps 2-3: resample each word against the aligned-pair probabilities,
    // removing the word's own counts first; recount between iterations
    // (or immediately, in the incremental variant).
    for (int iter = 0; iter < opt.iterations; ++iter) {
        PairCounts snapshot = counts;
        std::vector<AlignedSequence> next = alignments;
        for (std::size_t w = 0; w < pairs.size(); ++w) {
            PairCounts& base = opt.incremental ? counts : snapshot;
            base.add(alignments[w], -1);
            auto log_weight = [&](SymbolId a, SymbolId b) {
                double num = static_cast<double>(base.count(a, b)) + opt.alpha;
                double den = static_cast<double>(base.total) + opt.alpha * vocab;
                return std::log(num) - std::log(den);
            };
            AlignedSequence fresh =
                detail::sample_alignment(pairs[w].input, pairs[w].output, log_weight, rng);
            if (opt.incremental) {
                counts.add(fresh);
                alignments[w] = std::move(fresh);
            } else {
                base.add(alignments[w]);  // restore snapshot
                next[w] = std::move(fresh);
            }
        }
        if (!opt.incremental) {
            alignments = std::move(next);
            counts = PairCounts{};
            for (const auto& a : alignments) counts.add(a);
        }
    }
    return alignments;
}

inline std::vector<AlignedSequence> crp_align(const std::vector<StringPair>& pairs,
                                              int iterations, std::uint64_t seed) {
    CrpOptions opt;
    opt.iterations = iterations;
    return crp_align(pairs, opt, seed);
}

// Per-pair Levenshtein alignment with unit costs. Traceback prefers
// match > substitution > insertion > deletion. Same-length pairs are aligned
// positionwise like the sampler, even where a shifted path would cost less.
inline AlignedSequence med_align_pair(const StringPair& p) {
    const auto& x = p.input;
    const auto& y = p.output;
    const std::size_t n = x.size(), m = y.size();
    if (n == m) {
        AlignedSequence out;
        for (std::size_t i = 0; i < n; ++i) out.steps.push_back({x[i], y[i]});
        return out;
    }
    std::vector<int> cost((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> int& { return cost[i * (m + 1) + j]; };
    for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            at(i, j) = std::min({at(i - 1, j - 1) + (x[i - 1] == y[j - 1] ? 0 : 1),
                                 at(i, j - 1) + 1, at(i - 1, j) + 1});
    AlignedSequence out;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        bool eq = i > 0 && j > 0 && x[i - 1] == y[j - 1];
        if (eq && at(i, j) == at(i - 1, j - 1)) {
            out.steps.push_back({x[i - 1], y[j - 1]});
            --i, --j;
        } else if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + 1) {
            out.steps.push_back({x[i - 1], y[j - 1]});
            --i, --j;
        } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
            out.steps.push_back({kEpsilon, y[j - 1]});
            --j;
        } else {
            out.steps.push_back({x[i - 1], kEpsilon});
            --i;
        }
    }
    std::reverse(out.steps.begin(), out.steps.end());
    return out;
}

inline std::vector<AlignedSequence> med_align(const std::vector<StringPair>& pairs) {
    std::vector<AlignedSequence> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(med_align_pair(p));
    return out;
}

// Folds every epsilon-input step's output into the nearest following step
// with a real input symbol. Trailing epsilon steps, which have no such
// follower, merge leftward instead.
inline MergedSequence merge_epsilons_right(const AlignedSequence& a) {
    MergedSequence out;
    std::vector<SymbolId> pending;
    for (const auto& s : a.steps) {
        if (s.in == kEpsilon) {
            pending.push_back(s.out);
            continue;
        }
        MergedStep m;
        m.in = s.in;
        m.out = pending;
        if (s.out != kEpsilon) m.out.push_back(s.out);
        pending.clear();
        out.steps.push_back(std::move(m));
    }
    if (!pending.empty()) {
        if (out.steps.empty())
            throw Error("alignment has no non-epsilon input step to merge into");
        auto& last = out.steps.back().out;
        last.insert(last.end(), pending.begin(), pending.end());
    }
    return out;
}

// Corpus-level greedy merging: repeatedly find the most frequent adjacent
// (step, epsilon-step) candidate across the whole corpus and merge every
// instance of it, until no epsilon inputs remain. Ties break by
// lexicographic label order.
inline std::vector<MergedSequence> merge_epsilons_greedy(
    const std::vector<AlignedSequence>& alignments) {
    struct WorkStep {
        SymbolId in;
        std::vector<SymbolId> out;
        auto operator<=>(const WorkStep&) const = default;
    };
    std::vector<std::vector<WorkStep>> work;
    work.reserve(alignments.size());
    for (const auto& a : alignments) {
        std::vector<WorkStep> seq;
        for (const auto& s : a.steps) {
            WorkStep w{s.in, {}};
            if (s.out != kEpsilon) w.out.push_back(s.out);
            seq.push_back(std::move(w));
        }
        work.push_back(std::move(seq));
    }

    // A candidate is the epsilon step's output plus its neighbor's label,
    // tagged with which side the epsilon sits on.
    enum Side { eps_after = 0, eps_before = 1 };
    using Candidate = std::tuple<int, std::vector<SymbolId>, SymbolId, std::vector<SymbolId>>;

    for (;;) {
        std::map<Candidate, long> tally;
        bool any_eps = false;
        for (const auto& seq : work) {
            for (std::size_t i = 0; i < seq.size(); ++i) {
                if (seq[i].in == kEpsilon) any_eps = true;
                if (i + 1 >= seq.size()) continue;
                const WorkStep& a = seq[i];
                const WorkStep& b = seq[i + 1];
                if (a.in != kEpsilon && b.in == kEpsilon)
                    ++tally[{eps_after, b.out, a.in, a.out}];
                else if (a.in == kEpsilon && b.in != kEpsilon)
                    ++tally[{eps_before, a.out, b.in, b.out}];
            }
        }
        if (!any_eps) break;
        if (tally.empty())
            throw Error("epsilon steps remain but no merge candidate exists");
        auto best = tally.begin();
        for (auto it = std::next(tally.begin()); it != tally.end(); ++it)
            if (it->second > best->second) best = it;

        const auto& [side, eps_out, nb_in, nb_out] = best->first;
        for (auto& seq : work) {
            std::vector<WorkStep> merged;
            for (std::size_t i = 0; i < seq.size(); ++i) {
                if (i + 1 < seq.size()) {
                    const WorkStep& a = seq[i];
                    const WorkStep& b = seq[i + 1];
                    if (side == eps_after && a.in != kEpsilon && b.in == kEpsilon &&
                        b.out == eps_out && a.in == nb_in && a.out == nb_out) {
                        WorkStep m{a.in, a.out};
                        m.out.insert(m.out.end(), b.out.begin(), b.out.end());
                        merged.push_back(std::move(m));
                        ++i;
                        continue;
                    }
                    if (side == eps_before && a.in == kEpsilon && b.in != kEpsilon &&
                        a.out == eps_out && b.in == nb_in && b.out == nb_out) {
                        WorkStep m{b.in, a.out};
                        m.out.insert(m.out.end(), b.out.begin(), b.out.end());
                        merged.push_back(std::move(m));
                        ++i;
                        continue;
                    }
                }
                merged.push_back(seq[i]);
            }
            seq = std::move(merged);
        }
    }

    std::vector<MergedSequence> out;
    out.reserve(work.size());
    for (auto& seq : work) {
        MergedSequence m;
        for (auto& w : seq) m.steps.push_back(MergedStep{w.in, std::move(w.out)});
        out.push_back(std::move(m));
    }
    return out;
}

inline std::vector<MergedSequence> merge_right_all(
    const std::vector<AlignedSequence>& alignments) {
    std::vector<MergedSequence> out;
    out.reserve(alignments.size());
    for (const auto& a : alignments) out.push_back(merge_epsilons_right(a));
    return out;
}

// Dump formats: one line per pair, "in:out" tokens, epsilon rendered "_".
inline std::string dump_alignment(const AlignedSequence& a, const SymbolTable& in_table,
                                  const SymbolTable& out_table) {
    std::string line;
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        if (i) line += ' ';
        line += a.steps[i].in == kEpsilon ? "_" : in_table.name(a.steps[i].in);
        line += ':';
        line += a.steps[i].out == kEpsilon ? "_" : out_table.name(a.steps[i].out);
    }
    return line;
}

inline std::string dump_merged(const MergedSequence& m, const SymbolTable& in_table,
                               const SymbolTable& out_table) {
    std::string line;
    for (std::size_t i = 0; i < m.steps.size(); ++i) {
        if (i) line += ' ';
        line += in_table.name(m.steps[i].in);
        line += ':';
        if (m.steps[i].out.empty()) {
            line += '_';
        } else {
            for (SymbolId o : m.steps[i].out) line += out_table.name(o);
        }
    }
    return line;
}

}  // namespace fstforge
