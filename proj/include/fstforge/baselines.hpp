// Classical transducer induction baselines: onward prefix-tree construction,
// OSTIA-style state merging in two candidate orders, and the no-change
// identity.
//
// The machines built here are subsequential: each state carries an optional
// residual output emitted at end of input. The Transducer type has no final
// outputs, so compile_with_marker() appends a reserved end-of-string input
// symbol and moves each residual onto its transition. Callers append the same
// marker to every input before apply().
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "fstforge/alignment.hpp"
#include "fstforge/errors.hpp"
#include "fstforge/symbol_table.hpp"
#include "fstforge/transducer.hpp"

namespace fstforge {

struct PttEdge {
    std::vector<SymbolId> output;
    std::uint32_t dst = 0;

    bool operator==(const PttEdge&) const = default;
};

struct PttState {
    std::map<SymbolId, PttEdge> edges;
    std::optional<std::vector<SymbolId>> residual;

    bool operator==(const PttState&) const = default;
};

// Trie over training inputs with per-edge output strings. State 0 is the
// root. access[q] is the input prefix that created q; merging keeps it around
// to order candidate states. After merging, some states become unreachable
// and are dropped at compile time.
struct PrefixTreeTransducer {
    std::vector<PttState> states;
    std::vector<std::vector<SymbolId>> access;
};

namespace detail {

inline std::vector<SymbolId> common_prefix(const std::vector<SymbolId>& a,
                                           const std::vector<SymbolId>& b) {
    std::size_t n = std::min(a.size(), b.size());
    std::size_t i = 0;
    while (i < n && a[i] == b[i]) ++i;
    return std::vector<SymbolId>(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(i));
}

}  // namespace detail

// Builds the trie, stores each full output as the leaf residual, then hoists
// every state's common output prefix onto its incoming edge until the tree is
// onward. Throws ConflictError when one input maps to two distinct outputs.
inline PrefixTreeTransducer build_onward_ptt(const std::vector<StringPair>& pairs) {
    PrefixTreeTransducer ptt;
    ptt.states.emplace_back();
    ptt.access.emplace_back();
    std::vector<std::uint32_t> parent{0};
    std::vector<SymbolId> parent_sym{kEpsilon};

    for (const auto& p : pairs) {
        std::uint32_t q = 0;
        for (SymbolId sym : p.input) {
            auto it = ptt.states[q].edges.find(sym);
            if (it == ptt.states[q].edges.end()) {
                std::uint32_t child = static_cast<std::uint32_t>(ptt.states.size());
                ptt.states[q].edges[sym] = PttEdge{{}, child};
                ptt.states.emplace_back();
                auto acc = ptt.access[q];
                acc.push_back(sym);
                ptt.access.push_back(std::move(acc));
                parent.push_back(q);
                parent_sym.push_back(sym);
                q = child;
            } else {
                q = it->second.dst;
            }
        }
        auto& res = ptt.states[q].residual;
        if (res && *res != p.output)
            throw ConflictError("input mapped to two distinct outputs");
        res = p.output;
    }

    // States were created parent-first, so walking in reverse processes every
    // child before its parent and one pass reaches the onward form.
    for (std::uint32_t q = static_cast<std::uint32_t>(ptt.states.size()); q-- > 1;) {
        PttState& st = ptt.states[q];
        std::optional<std::vector<SymbolId>> lcp;
        if (st.residual) lcp = *st.residual;
        for (const auto& [sym, e] : st.edges)
            lcp = lcp ? detail::common_prefix(*lcp, e.output) : e.output;
        if (!lcp || lcp->empty()) continue;
        for (auto& [sym, e] : st.edges)
            e.output.erase(e.output.begin(), e.output.begin() + static_cast<std::ptrdiff_t>(lcp->size()));
        if (st.residual)
            st.residual->erase(st.residual->begin(),
                               st.residual->begin() + static_cast<std::ptrdiff_t>(lcp->size()));
        auto& in_edge = ptt.states[parent[q]].edges.at(parent_sym[q]);
        in_edge.output.insert(in_edge.output.end(), lcp->begin(), lcp->end());
    }
    return ptt;
}

// True when every non-root state reachable from the root has no common prefix
// across its outgoing edge outputs and defined residual.
inline bool is_onward(const PrefixTreeTransducer& ptt) {
    std::vector<char> seen(ptt.states.size(), 0);
    std::vector<std::uint32_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
        std::uint32_t q = stack.back();
        stack.pop_back();
        const PttState& st = ptt.states[q];
        if (q != 0) {
            std::optional<std::vector<SymbolId>> lcp;
            if (st.residual) lcp = *st.residual;
            for (const auto& [sym, e] : st.edges)
                lcp = lcp ? detail::common_prefix(*lcp, e.output) : e.output;
            if (lcp && !lcp->empty()) return false;
        }
        for (const auto& [sym, e] : st.edges)
            if (!seen[e.dst]) {
                seen[e.dst] = 1;
                stack.push_back(e.dst);
            }
    }
    return true;
}

// Follows the trie edges and concatenates outputs plus the final residual.
// Returns nullopt when an edge is missing or the end state has no residual.
inline std::optional<std::vector<SymbolId>> subsequential_apply(
    const PrefixTreeTransducer& ptt, const std::vector<SymbolId>& input) {
    std::uint32_t q = 0;
    std::vector<SymbolId> out;
    for (SymbolId sym : input) {
        auto it = ptt.states[q].edges.find(sym);
        if (it == ptt.states[q].edges.end()) return std::nullopt;
        out.insert(out.end(), it->second.output.begin(), it->second.output.end());
        q = it->second.dst;
    }
    const auto& res = ptt.states[q].residual;
    if (!res) return std::nullopt;
    out.insert(out.end(), res->begin(), res->end());
    return out;
}

struct InductionLog {
    long merges_attempted = 0;
    long merges_committed = 0;
    bool time_limit_hit = false;
};

enum class MergeOrder {
    lexicographic,   // candidates by access string, plain lexicographic
    breadth_first,   // candidates by access string length, then lexicographic
};

namespace detail {

inline void prepend_outputs(PrefixTreeTransducer& m, std::uint32_t q,
                            const std::vector<SymbolId>& prefix) {
    for (auto& [sym, e] : m.states[q].edges)
        e.output.insert(e.output.begin(), prefix.begin(), prefix.end());
    if (m.states[q].residual)
        m.states[q].residual->insert(m.states[q].residual->begin(), prefix.begin(), prefix.end());
}

// Folds the subtree rooted at qp into q. Outputs on the q side are fixed;
// when an edge pair disagrees, the q output must be a prefix of the qp output
// and the remainder is pushed down into the qp child before recursing.
// Returns false on conflict (caller reverts by discarding the trial copy).
inline bool fold_states(PrefixTreeTransducer& m, std::uint32_t q, std::uint32_t qp) {
    if (q == qp) return true;
    if (m.states[qp].residual) {
        auto& rq = m.states[q].residual;
        if (rq && *rq != *m.states[qp].residual) return false;
        if (!rq) rq = m.states[qp].residual;
    }
    for (auto& [sym, ep] : m.states[qp].edges) {
        auto it = m.states[q].edges.find(sym);
        if (it == m.states[q].edges.end()) {
            m.states[q].edges.emplace(sym, ep);
            continue;
        }
        PttEdge& eq = it->second;
        if (ep.output.size() < eq.output.size() ||
            !std::equal(eq.output.begin(), eq.output.end(), ep.output.begin()))
            return false;
        std::vector<SymbolId> rem(ep.output.begin() + static_cast<std::ptrdiff_t>(eq.output.size()),
                                  ep.output.end());
        if (!rem.empty()) {
            prepend_outputs(m, ep.dst, rem);
            ep.output = eq.output;
        }
        if (!fold_states(m, eq.dst, ep.dst)) return false;
    }
    return true;
}

}  // namespace detail

// OSTIA merging loop. Red states are consolidated; each round picks the
// smallest blue state (a non-red target of a red edge) under `order`, tries
// to merge it into each red state in promotion order, commits the first
// attempt that folds without conflict, and promotes the state to red when
// every attempt conflicts. Attempts run on a copy of the machine, so a
// conflict reverts by discarding the copy. When the time limit expires the
// loop stops and the current machine is returned as is.
inline PrefixTreeTransducer merge_states(PrefixTreeTransducer m, MergeOrder order,
                                         double time_limit_s, InductionLog* log = nullptr) {
    InductionLog scratch;
    InductionLog& lg = log ? *log : scratch;
    auto start = std::chrono::steady_clock::now();
    auto expired = [&] {
        std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
        return d.count() > time_limit_s;
    };

    std::vector<std::uint32_t> red{0};
    std::vector<char> is_red(m.states.size(), 0);
    is_red[0] = 1;

    auto precedes = [&](std::uint32_t a, std::uint32_t b) {
        if (order == MergeOrder::breadth_first &&
            m.access[a].size() != m.access[b].size())
            return m.access[a].size() < m.access[b].size();
        return m.access[a] < m.access[b];
    };

    for (;;) {
        if (expired()) {
            lg.time_limit_hit = true;
            break;
        }
        std::optional<std::uint32_t> blue;
        std::uint32_t blue_parent = 0;
        SymbolId blue_sym = kEpsilon;
        for (std::uint32_t r : red) {
            for (const auto& [sym, e] : m.states[r].edges) {
                if (is_red[e.dst]) continue;
                if (!blue || precedes(e.dst, *blue)) {
                    blue = e.dst;
                    blue_parent = r;
                    blue_sym = sym;
                }
            }
        }
        if (!blue) break;

        bool merged = false;
        for (std::uint32_t r : red) {
            if (expired()) {
                lg.time_limit_hit = true;
                break;
            }
            ++lg.merges_attempted;
            PrefixTreeTransducer trial = m;
            trial.states[blue_parent].edges.at(blue_sym).dst = r;
            if (detail::fold_states(trial, r, *blue)) {
                m = std::move(trial);
                ++lg.merges_committed;
                merged = true;
                break;
            }
        }
        if (lg.time_limit_hit) break;
        if (!merged) {
            red.push_back(*blue);
            is_red[*blue] = 1;
        }
    }
    return m;
}

// Materializes the reachable part as a Transducer. Each state with a defined
// residual gets a transition on `marker` carrying the residual into a shared
// sink state. The marker must not occur as an ordinary trie symbol.
inline Transducer compile_with_marker(const PrefixTreeTransducer& m,
                                      const SymbolTable& input_table,
                                      const SymbolTable& output_table, SymbolId marker) {
    std::vector<std::uint32_t> order;
    std::map<std::uint32_t, StateId> id;
    order.push_back(0);
    id[0] = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (const auto& [sym, e] : m.states[order[i]].edges) {
            if (sym == marker)
                throw ConfigError("end marker collides with an input symbol in the training data");
            if (!id.count(e.dst)) {
                id[e.dst] = static_cast<StateId>(order.size());
                order.push_back(e.dst);
            }
        }
    }

    bool any_residual = false;
    for (std::uint32_t q : order)
        if (m.states[q].residual) any_residual = true;
    StateId sink = static_cast<StateId>(order.size());

    std::vector<RawTransition> raw;
    for (std::uint32_t q : order) {
        for (const auto& [sym, e] : m.states[q].edges)
            raw.push_back({id[q], sym, e.output, id[e.dst]});
        if (m.states[q].residual)
            raw.push_back({id[q], marker, *m.states[q].residual, sink});
    }
    StateId n = static_cast<StateId>(order.size()) + (any_residual ? 1 : 0);
    return Transducer(input_table, output_table, n, 0, raw);
}

inline Transducer ostia(const std::vector<StringPair>& pairs, const SymbolTable& input_table,
                        const SymbolTable& output_table, SymbolId marker,
                        double time_limit_s = 600.0, InductionLog* log = nullptr) {
    PrefixTreeTransducer m = merge_states(build_onward_ptt(pairs), MergeOrder::lexicographic,
                                          time_limit_s, log);
    return compile_with_marker(m, input_table, output_table, marker);
}

inline Transducer dd_ostia(const std::vector<StringPair>& pairs, const SymbolTable& input_table,
                           const SymbolTable& output_table, SymbolId marker,
                           double time_limit_s = 600.0, InductionLog* log = nullptr) {
    PrefixTreeTransducer m = merge_states(build_onward_ptt(pairs), MergeOrder::breadth_first,
                                          time_limit_s, log);
    return compile_with_marker(m, input_table, output_table, marker);
}

inline std::vector<SymbolId> no_change(const std::vector<SymbolId>& input) { return input; }

}  // namespace fstforge
