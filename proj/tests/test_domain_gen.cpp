#include <random>
#include <set>
#include <string>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "fstforge/domain_gen.hpp"
#include "fstforge/rng.hpp"
#include "support/generators.hpp"

using namespace fstforge;
using testsupport::ids_of;
using testsupport::table_of;

namespace {

// Reference filter written independently of the generator: pad a candidate
// and look up each window in a gram set built here from scratch.
bool oracle_admits(const std::vector<std::vector<SymbolId>>& train, int n,
                   const std::vector<SymbolId>& s, bool check_end) {
    std::set<std::vector<SymbolId>> grams;
    for (const auto& t : train) {
        std::vector<SymbolId> p(n - 1, kGramBegin);
        p.insert(p.end(), t.begin(), t.end());
        p.push_back(kGramEnd);
        for (std::size_t i = 0; i + n <= p.size(); ++i)
            grams.insert({p.begin() + i, p.begin() + i + n});
    }
    std::vector<SymbolId> p(n - 1, kGramBegin);
    p.insert(p.end(), s.begin(), s.end());
    if (check_end) p.push_back(kGramEnd);
    for (std::size_t i = 0; i + n <= p.size(); ++i)
        if (!grams.count({p.begin() + i, p.begin() + i + n})) return false;
    return true;
}

std::set<std::vector<SymbolId>> oracle_enumerate(
    const std::vector<std::vector<SymbolId>>& train, int n, int max_len,
    const std::vector<SymbolId>& alphabet, bool check_end) {
    std::set<std::vector<SymbolId>> out;
    std::vector<std::vector<SymbolId>> frontier{{}};
    for (int len = 1; len <= max_len; ++len) {
        std::vector<std::vector<SymbolId>> next;
        for (const auto& base : frontier) {
            for (SymbolId a : alphabet) {
                auto s = base;
                s.push_back(a);
                next.push_back(s);
                if (oracle_admits(train, n, s, check_end)) out.insert(s);
            }
        }
        frontier = std::move(next);
    }
    return out;
}

}  // namespace

TEST_CASE("ngram generation on the single pair ab") {
    auto t = table_of({"a", "b"});
    auto m = NgramModel::build({ids_of(t, "ab")}, 2);
    auto got = gen_ngram_strings(m, 2);
    CHECK(got == std::set<std::vector<SymbolId>>{ids_of(t, "ab")});
}

TEST_CASE("ngram generation on the single string aa admits all short a-runs") {
    auto t = table_of({"a"});
    auto m = NgramModel::build({ids_of(t, "aa")}, 2);
    auto got = gen_ngram_strings(m, 3);
    CHECK(got == std::set<std::vector<SymbolId>>{ids_of(t, "a"), ids_of(t, "aa"),
                                                 ids_of(t, "aaa")});
}

TEST_CASE("ngram generation from an empty training set is empty") {
    auto m = NgramModel::build({}, 2);
    CHECK(gen_ngram_strings(m, 4).empty());
}

TEST_CASE("ngram generation matches brute-force enumeration") {
    auto rng = substream(7, "domain-prop");
    std::uniform_int_distribution<int> num_strings(1, 6), len(1, 4);
    std::uniform_int_distribution<SymbolId> sym(1, 3);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<std::vector<SymbolId>> train;
        int k = num_strings(rng);
        for (int i = 0; i < k; ++i) {
            std::vector<SymbolId> s;
            int n = len(rng);
            for (int j = 0; j < n; ++j) s.push_back(sym(rng));
            train.push_back(std::move(s));
        }
        int order = 2 + (trial % 2);
        bool check_end = trial % 3 != 0;
        auto m = NgramModel::build(train, order, check_end);
        auto got = gen_ngram_strings(m, 5);
        auto want = oracle_enumerate(train, order, 5, {1, 2, 3}, check_end);
        CHECK(got == want);

        for (const auto& s : train) {
            if (s.size() <= 5 && check_end) CHECK(got.count(s) == 1);
            for (const auto& g : got)
                for (SymbolId a : g) CHECK((a >= 1 && a <= 3));
        }
    }
}

TEST_CASE("ngram generation cap is a deterministic uniform sample") {
    auto t = table_of({"a", "b"});
    std::vector<std::vector<SymbolId>> train{ids_of(t, "ab"), ids_of(t, "ba"),
                                             ids_of(t, "aa"), ids_of(t, "bb")};
    auto m = NgramModel::build(train, 2);
    auto full = gen_ngram_strings(m, 6);
    REQUIRE(full.size() > 10);
    auto capped = gen_ngram_strings(m, 6, 10, 99);
    CHECK(capped.size() == 10);
    for (const auto& s : capped) CHECK(full.count(s) == 1);
    CHECK(capped == gen_ngram_strings(m, 6, 10, 99));
}

TEST_CASE("inflection swap completes the tag-lemma grid") {
    auto t = table_of({"T1", "T2", "c", "a", "d", "o", "g"});
    auto tag = [&](const char* n) { return std::vector<SymbolId>{t.require(n)}; };

    std::vector<SymbolId> cat{t.require("c"), t.require("a")};
    std::vector<SymbolId> dog{t.require("d"), t.require("o"), t.require("g")};

    SECTION("full grid in training leaves nothing to add") {
        std::vector<TaggedInput> ex{{tag("T1"), cat}, {tag("T1"), dog},
                                    {tag("T2"), cat}, {tag("T2"), dog}};
        CHECK(gen_inflection_swap(ex).empty());
    }
    SECTION("missing combinations are exactly the output") {
        std::vector<TaggedInput> ex{{tag("T1"), cat}, {tag("T2"), dog}};
        auto got = gen_inflection_swap(ex);
        std::vector<SymbolId> t1dog = tag("T1");
        t1dog.insert(t1dog.end(), dog.begin(), dog.end());
        std::vector<SymbolId> t2cat = tag("T2");
        t2cat.insert(t2cat.end(), cat.begin(), cat.end());
        CHECK(got == std::set<std::vector<SymbolId>>{t1dog, t2cat});
    }
}

TEST_CASE("inflection swap at scale respects the cap and the grid oracle") {
    auto rng = substream(13, "swap-scale");
    std::uniform_int_distribution<SymbolId> tag_sym(100, 109), lem_sym(1, 5);
    std::uniform_int_distribution<int> tag_len(1, 3), lem_len(2, 5);
    std::vector<TaggedInput> ex;
    for (int i = 0; i < 53; ++i) {
        TaggedInput e;
        int tn = tag_len(rng), ln = lem_len(rng);
        for (int j = 0; j < tn; ++j) e.tags.push_back(tag_sym(rng));
        for (int j = 0; j < ln; ++j) e.lemma.push_back(lem_sym(rng));
        ex.push_back(std::move(e));
    }

    std::set<std::vector<SymbolId>> tag_seqs, lemmas, train;
    for (const auto& e : ex) {
        tag_seqs.insert(e.tags);
        lemmas.insert(e.lemma);
        auto whole = e.tags;
        whole.insert(whole.end(), e.lemma.begin(), e.lemma.end());
        train.insert(whole);
    }
    std::set<std::vector<SymbolId>> grid;
    for (const auto& ts : tag_seqs)
        for (const auto& lm : lemmas) {
            auto s = ts;
            s.insert(s.end(), lm.begin(), lm.end());
            if (!train.count(s)) grid.insert(s);
        }

    auto uncapped = gen_inflection_swap(ex, 1u << 20, 0);
    CHECK(uncapped == grid);

    std::size_t cap = grid.size() / 2;
    auto capped = gen_inflection_swap(ex, cap, 5);
    CHECK(capped.size() == cap);
    for (const auto& s : capped) CHECK(grid.count(s) == 1);
    CHECK(capped == gen_inflection_swap(ex, cap, 5));
}

TEST_CASE("inflection swap rejects examples without a boundary") {
    TaggedInput no_tags{{}, {1, 2}};
    TaggedInput no_lemma{{100}, {}};
    CHECK_THROWS_AS(gen_inflection_swap({no_tags}), FormatError);
    try {
        gen_inflection_swap({{{100}, {1}}, no_lemma});
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.line == 2);
    }
}
