// Synthetic input-string generation: an n-gram domain approximation built
// from training inputs, and tag-for-lemma recombination for inflection data.
// Synthetic strings widen hidden-state coverage before extraction.
#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "fstforge/errors.hpp"
#include "fstforge/rng.hpp"
#include "fstforge/symbol_table.hpp"

namespace fstforge {

// Boundary markers used inside n-grams; outside any real symbol table.
inline constexpr SymbolId kGramBegin = 0xfffffffeu;
inline constexpr SymbolId kGramEnd = 0xfffffffdu;

struct NgramModel {
    int n = 2;
    bool check_end = true;
    std::set<std::vector<SymbolId>> grams;
    std::vector<SymbolId> alphabet;  // sorted observed symbols

    static NgramModel build(const std::vector<std::vector<SymbolId>>& train_inputs,
                            int n = 2, bool check_end = true) {
        if (n < 1) throw ConfigError("n-gram order must be >= 1");
        NgramModel m;
        m.n = n;
        m.check_end = check_end;
        std::set<SymbolId> seen;
        for (const auto& s : train_inputs) {
            seen.insert(s.begin(), s.end());
            std::vector<SymbolId> padded(static_cast<std::size_t>(n) - 1, kGramBegin);
            padded.insert(padded.end(), s.begin(), s.end());
            padded.push_back(kGramEnd);
            for (std::size_t i = 0; i + n <= padded.size(); ++i)
                m.grams.insert({padded.begin() + i, padded.begin() + i + n});
        }
        m.alphabet.assign(seen.begin(), seen.end());
        return m;
    }
};

// Depth-first enumeration of every string up to max_len whose padded
// n-grams were all observed. Results above `cap` are thinned by a seeded
// uniform sample.
inline std::set<std::vector<SymbolId>> gen_ngram_strings(const NgramModel& m,
                                                         int max_len,
                                                         std::size_t cap = 50000,
                                                         std::uint64_t seed = 0) {
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    std::set<std::vector<SymbolId>> out;
    if (m.grams.empty()) return out;

    // The sliding context is the last n-1 symbols of the padded prefix.
    std::vector<SymbolId> context(static_cast<std::size_t>(m.n) - 1, kGramBegin);
    std::vector<SymbolId> current;

    auto has_gram = [&](SymbolId last) {
        std::vector<SymbolId> g = context;
        g.push_back(last);
        return m.grams.count(g) > 0;
    };

    auto dfs = [&](auto&& self) -> void {
        if (!current.empty() && (!m.check_end || has_gram(kGramEnd)))
            out.insert(current);
        if (static_cast<int>(current.size()) == max_len) return;
        for (SymbolId a : m.alphabet) {
            if (!has_gram(a)) continue;
            current.push_back(a);
            if (m.n > 1) {
                context.erase(context.begin());
                context.push_back(a);
            }
            self(self);
            current.pop_back();
            if (m.n > 1) {
                std::vector<SymbolId> padded(static_cast<std::size_t>(m.n) - 1,
                                             kGramBegin);
                padded.insert(padded.end(), current.begin(), current.end());
                context.assign(padded.end() - (m.n - 1), padded.end());
            }
        }
    };
    dfs(dfs);

    if (out.size() > cap) {
        std::vector<std::vector<SymbolId>> all(out.begin(), out.end());
        std::vector<std::vector<SymbolId>> kept;
        auto rng = substream(seed, "ngram-cap");
        std::sample(all.begin(), all.end(), std::back_inserter(kept), cap, rng);
        out.clear();
        out.insert(kept.begin(), kept.end());
    }
    return out;
}

// One encoded inflection input: feature-tag tokens followed by lemma characters.
struct TaggedInput {
    std::vector<SymbolId> tags;
    std::vector<SymbolId> lemma;
};

// All tag-sequence x lemma recombinations not present in training, capped by
// seeded uniform sampling.
inline std::set<std::vector<SymbolId>> gen_inflection_swap(
    const std::vector<TaggedInput>& examples, std::size_t cap = 50000,
    std::uint64_t seed = 0) {
    std::set<std::vector<SymbolId>> train_strings;
    std::set<std::vector<SymbolId>> tag_seqs, lemmas;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& e = examples[i];
        if (e.tags.empty() || e.lemma.empty())
            throw FormatError(i + 1, "inflection example lacks a tag/lemma boundary");
        std::vector<SymbolId> whole = e.tags;
        whole.insert(whole.end(), e.lemma.begin(), e.lemma.end());
        train_strings.insert(std::move(whole));
        tag_seqs.insert(e.tags);
        lemmas.insert(e.lemma);
    }
    std::set<std::vector<SymbolId>> out;
    for (const auto& tags : tag_seqs) {
        for (const auto& lemma : lemmas) {
            std::vector<SymbolId> s = tags;
            s.insert(s.end(), lemma.begin(), lemma.end());
            if (!train_strings.count(s)) out.insert(std::move(s));
        }
    }
    if (out.size() > cap) {
        std::vector<std::vector<SymbolId>> all(out.begin(), out.end());
        std::vector<std::vector<SymbolId>> kept;
        auto rng = substream(seed, "swap-cap");
        std::sample(all.begin(), all.end(), std::back_inserter(kept), cap, rng);
        out.clear();
        out.insert(kept.begin(), kept.end());
    }
    return out;
}

}  // namespace fstforge
