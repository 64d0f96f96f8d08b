// Unweighted, input-deterministic finite-state transducer.
//
// A transducer is the tuple (input alphabet, output alphabet, states,
// initial state, transition map). Transitions carry one input symbol and an
// output string (a possibly empty sequence of output symbols). Every state
// accepts; rejecting an input is signaled only by a missing transition.
// Instances are immutable once constructed and safe for concurrent reads.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fstforge/errors.hpp"
#include "fstforge/symbol_table.hpp"

namespace fstforge {

using StateId = std::uint32_t;

struct Arc {
    SymbolId input = kEpsilon;        // never kEpsilon on a finalized transducer
    std::vector<SymbolId> output;     // empty vector = epsilon output
    StateId dst = 0;

    bool operator==(const Arc&) const = default;
};

// One unaggregated transition record, as produced by extraction or parsing.
struct RawTransition {
    StateId src = 0;
    SymbolId input = kEpsilon;
    std::vector<SymbolId> output;
    StateId dst = 0;

    bool operator==(const RawTransition&) const = default;
};

enum class ApplyStatus { ok, unknown_symbol, no_transition };

struct ApplyResult {
    ApplyStatus status = ApplyStatus::ok;
    std::vector<SymbolId> output;   // meaningful only when ok()
    std::size_t fail_pos = 0;       // input position of the failure
    StateId fail_state = 0;         // state where no transition was found

    bool ok() const { return status == ApplyStatus::ok; }
    bool operator==(const ApplyResult&) const = default;
};

// True iff no (source, input) key maps to two distinct (output, destination)
// pairs. Exact duplicate records do not count as a violation.
inline bool is_input_deterministic(const std::vector<RawTransition>& raw) {
    std::map<std::pair<StateId, SymbolId>, std::pair<std::vector<SymbolId>, StateId>> seen;
    for (const auto& t : raw) {
        auto key = std::make_pair(t.src, t.input);
        auto val = std::make_pair(t.output, t.dst);
        auto [it, inserted] = seen.emplace(key, val);
        if (!inserted && it->second != val) return false;
    }
    return true;
}

class Transducer {
public:
    Transducer(SymbolTable input_table, SymbolTable output_table, StateId num_states,
               StateId initial, const std::vector<RawTransition>& transitions)
        : input_table_(std::move(input_table)),
          output_table_(std::move(output_table)),
          num_states_(num_states),
          initial_(initial),
          arcs_(num_states) {
        if (num_states == 0 || initial >= num_states)
            throw ConfigError("initial state out of range");
        for (const auto& t : transitions) {
            if (t.src >= num_states || t.dst >= num_states)
                throw ConfigError("transition state out of range");
            if (t.input == kEpsilon)
                throw ConfigError("epsilon input label on transition");
            if (!input_table_.contains(t.input))
                throw ConfigError("input symbol id not in table");
            for (SymbolId o : t.output)
                if (o == kEpsilon || !output_table_.contains(o))
                    throw ConfigError("bad output symbol id");
            auto& row = arcs_[t.src];
            for (const auto& a : row)
                if (a.input == t.input)
                    throw ConfigError("duplicate (state, input) transition key");
            row.push_back(Arc{t.input, t.output, t.dst});
        }
        for (auto& row : arcs_)
            std::sort(row.begin(), row.end(),
                      [](const Arc& a, const Arc& b) { return a.input < b.input; });
    }

    const SymbolTable& input_table() const { return input_table_; }
    const SymbolTable& output_table() const { return output_table_; }
    StateId num_states() const { return num_states_; }
    StateId initial() const { return initial_; }

    std::span<const Arc> arcs(StateId state) const { return arcs_[state]; }

    std::size_t num_arcs() const {
        std::size_t n = 0;
        for (const auto& row : arcs_) n += row.size();
        return n;
    }

    const Arc* find_arc(StateId state, SymbolId input) const {
        const auto& row = arcs_[state];
        auto it = std::lower_bound(row.begin(), row.end(), input,
                                   [](const Arc& a, SymbolId s) { return a.input < s; });
        if (it == row.end() || it->input != input) return nullptr;
        return &*it;
    }

    // Runs the input through the transition map from the initial state,
    // concatenating per-step outputs.
    ApplyResult apply(std::span<const SymbolId> input) const {
        ApplyResult res;
        StateId state = initial_;
        for (std::size_t i = 0; i < input.size(); ++i) {
            SymbolId sym = input[i];
            if (sym == kEpsilon || !input_table_.contains(sym)) {
                res.status = ApplyStatus::unknown_symbol;
                res.fail_pos = i;
                res.fail_state = state;
                res.output.clear();
                return res;
            }
            const Arc* arc = find_arc(state, sym);
            if (!arc) {
                res.status = ApplyStatus::no_transition;
                res.fail_pos = i;
                res.fail_state = state;
                res.output.clear();
                return res;
            }
            res.output.insert(res.output.end(), arc->output.begin(), arc->output.end());
            state = arc->dst;
        }
        return res;
    }

    ApplyResult apply(const std::vector<SymbolId>& input) const {
        return apply(std::span<const SymbolId>(input));
    }

    // Convenience for tests and the CLI: whole-string application by symbol
    // names, one input symbol per string.
    ApplyResult apply_names(const std::vector<std::string>& symbols) const {
        std::vector<SymbolId> ids;
        ids.reserve(symbols.size());
        for (std::size_t i = 0; i < symbols.size(); ++i) {
            auto id = input_table_.find(symbols[i]);
            if (!id || *id == kEpsilon) {
                ApplyResult res;
                res.status = ApplyStatus::unknown_symbol;
                res.fail_pos = i;
                res.fail_state = initial_;
                return res;
            }
            ids.push_back(*id);
        }
        return apply(ids);
    }

    std::vector<RawTransition> raw_transitions() const {
        std::vector<RawTransition> out;
        for (StateId s = 0; s < num_states_; ++s)
            for (const auto& a : arcs_[s])
                out.push_back(RawTransition{s, a.input, a.output, a.dst});
        return out;
    }

    // Structural equality: same shape and same labels by symbol *name*, so
    // two transducers whose tables list symbols in different orders still
    // compare equal when their arcs spell the same strings.
    bool operator==(const Transducer& other) const {
        if (num_states_ != other.num_states_ || initial_ != other.initial_) return false;
        auto named_arcs = [](const Transducer& t, StateId s) {
            std::vector<std::pair<std::string, std::pair<std::vector<std::string>, StateId>>> v;
            for (const auto& a : t.arcs_[s]) {
                std::vector<std::string> out;
                for (SymbolId o : a.output) out.push_back(t.output_table_.name(o));
                v.emplace_back(t.input_table_.name(a.input),
                               std::make_pair(std::move(out), a.dst));
            }
            std::sort(v.begin(), v.end());
            return v;
        };
        for (StateId s = 0; s < num_states_; ++s)
            if (named_arcs(*this, s) != named_arcs(other, s)) return false;
        return true;
    }

private:
    SymbolTable input_table_;
    SymbolTable output_table_;
    StateId num_states_;
    StateId initial_;
    std::vector<std::vector<Arc>> arcs_;
};

// Keeps exactly the states reachable from the initial state, renumbered in
// BFS discovery order (arcs visited in input-symbol order, so the result is
// deterministic). Apply behavior is unchanged on every input.
inline Transducer prune_inaccessible(const Transducer& t) {
    constexpr StateId kUnset = static_cast<StateId>(-1);
    std::vector<StateId> remap(t.num_states(), kUnset);
    std::vector<StateId> order;
    std::queue<StateId> frontier;
    remap[t.initial()] = 0;
    order.push_back(t.initial());
    frontier.push(t.initial());
    while (!frontier.empty()) {
        StateId s = frontier.front();
        frontier.pop();
        for (const auto& a : t.arcs(s)) {
            if (remap[a.dst] == kUnset) {
                remap[a.dst] = static_cast<StateId>(order.size());
                order.push_back(a.dst);
                frontier.push(a.dst);
            }
        }
    }
    std::vector<RawTransition> kept;
    for (StateId s : order)
        for (const auto& a : t.arcs(s))
            kept.push_back(RawTransition{remap[s], a.input, a.output, remap[a.dst]});
    return Transducer(t.input_table(), t.output_table(),
                      static_cast<StateId>(order.size()), 0, kept);
}

// Hopcroft-style partition refinement treating each (input, output string)
// pair as one opaque label. All states accept, so the initial partition
// groups states by their set of defined labels; blocks are then refined by
// (label -> successor block) maps until stable. Expects an
// input-deterministic, pruned transducer; returns the minimal equivalent
// one, renumbered in BFS order so equal inputs give identical results.
inline Transducer minimize(const Transducer& t) {
    const StateId n = t.num_states();
    std::vector<std::size_t> block(n);

    // Label signature of a state: sorted (input, output) keys only.
    auto label_signature = [&](StateId s) {
        std::vector<std::pair<SymbolId, std::vector<SymbolId>>> sig;
        for (const auto& a : t.arcs(s)) sig.emplace_back(a.input, a.output);
        return sig;  // arcs are already sorted by input
    };

    {
        std::map<std::vector<std::pair<SymbolId, std::vector<SymbolId>>>, std::size_t> ids;
        for (StateId s = 0; s < n; ++s) {
            auto sig = label_signature(s);
            auto [it, _] = ids.emplace(std::move(sig), ids.size());
            block[s] = it->second;
        }
    }

    for (;;) {
        std::map<std::pair<std::size_t, std::vector<std::size_t>>, std::size_t> ids;
        std::vector<std::size_t> next(n);
        for (StateId s = 0; s < n; ++s) {
            std::vector<std::size_t> succ;
            for (const auto& a : t.arcs(s)) succ.push_back(block[a.dst]);
            auto key = std::make_pair(block[s], std::move(succ));
            auto [it, _] = ids.emplace(std::move(key), ids.size());
            next[s] = it->second;
        }
        if (next == block) break;
        block = std::move(next);
    }

    std::size_t num_blocks = *std::max_element(block.begin(), block.end()) + 1;
    std::vector<StateId> rep(num_blocks, static_cast<StateId>(-1));
    for (StateId s = 0; s < n; ++s)
        if (rep[block[s]] == static_cast<StateId>(-1)) rep[block[s]] = s;

    std::vector<RawTransition> merged;
    for (std::size_t b = 0; b < num_blocks; ++b)
        for (const auto& a : t.arcs(rep[b]))
            merged.push_back(RawTransition{static_cast<StateId>(b), a.input, a.output,
                                           static_cast<StateId>(block[a.dst])});
    Transducer out(t.input_table(), t.output_table(), static_cast<StateId>(num_blocks),
                   static_cast<StateId>(block[t.initial()]), merged);
    return prune_inaccessible(out);
}

}  // namespace fstforge
