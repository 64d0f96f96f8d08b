#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "fstforge/fst_io.hpp"
#include "fstforge/transducer.hpp"
#include "support/generators.hpp"

using namespace fstforge;
using namespace testsupport;

namespace {

// The "cat" -> "cats" chain: c:c, a:a, t:ts over four states.
Transducer cats_transducer() {
    SymbolTable in = table_of({"c", "a", "t"});
    SymbolTable out = table_of({"c", "a", "t", "s"});
    std::vector<RawTransition> raw{
        {0, in.require("c"), {out.require("c")}, 1},
        {1, in.require("a"), {out.require("a")}, 2},
        {2, in.require("t"), {out.require("t"), out.require("s")}, 3},
    };
    return Transducer(in, out, 4, 0, raw);
}

}  // namespace

TEST_CASE("apply rewrites cat to cats") {
    Transducer t = cats_transducer();
    auto res = t.apply(ids_of(t.input_table(), "cat"));
    REQUIRE(res.ok());
    CHECK(names_of(t.output_table(), res.output) == "cats");
}

TEST_CASE("apply on empty input consumes no transitions") {
    Transducer t = cats_transducer();
    auto res = t.apply(std::vector<SymbolId>{});
    REQUIRE(res.ok());
    CHECK(res.output.empty());
}

TEST_CASE("apply reports unknown symbols") {
    Transducer t = cats_transducer();
    auto res = t.apply_names({"d", "o", "g"});
    CHECK(res.status == ApplyStatus::unknown_symbol);
}

TEST_CASE("apply reports missing transitions with position and state") {
    Transducer t = cats_transducer();
    auto res = t.apply(ids_of(t.input_table(), "ca"));
    REQUIRE(res.ok());
    res = t.apply(ids_of(t.input_table(), "cc"));
    CHECK(res.status == ApplyStatus::no_transition);
    CHECK(res.fail_pos == 1);
    CHECK(res.fail_state == 1);
}

TEST_CASE("is_input_deterministic") {
    auto tr = [](StateId s, SymbolId i, std::vector<SymbolId> o, StateId d) {
        return RawTransition{s, i, std::move(o), d};
    };
    CHECK(is_input_deterministic({tr(0, 1, {1}, 1)}));
    CHECK_FALSE(is_input_deterministic({tr(0, 1, {1}, 1), tr(0, 1, {2}, 1)}));
    CHECK(is_input_deterministic({tr(0, 1, {1}, 1), tr(0, 2, {1}, 1)}));
}

TEST_CASE("apply concatenates per-step outputs along random paths") {
    std::mt19937_64 rng(11);
    for (int iter = 0; iter < 20; ++iter) {
        Transducer t = random_transducer(rng, 6, 3, 3);
        std::vector<SymbolId> input;
        std::vector<SymbolId> expected;
        StateId state = t.initial();
        for (int step = 0; step < 10; ++step) {
            auto arcs = t.arcs(state);
            if (arcs.empty()) break;
            const Arc& a = arcs[std::uniform_int_distribution<std::size_t>(
                0, arcs.size() - 1)(rng)];
            input.push_back(a.input);
            expected.insert(expected.end(), a.output.begin(), a.output.end());
            state = a.dst;
        }
        auto res = t.apply(input);
        REQUIRE(res.ok());
        CHECK(res.output == expected);
    }
}

TEST_CASE("prune removes an unreachable state") {
    SymbolTable in = table_of({"a"});
    SymbolTable out = table_of({"x"});
    // State 2 is an orphan.
    std::vector<RawTransition> raw{
        {0, 1, {1}, 1},
        {2, 1, {1}, 0},
    };
    Transducer t(in, out, 3, 0, raw);
    Transducer p = prune_inaccessible(t);
    CHECK(p.num_states() == 2);
    auto r = p.apply(std::vector<SymbolId>{1});
    REQUIRE(r.ok());
    CHECK(r.output == std::vector<SymbolId>{1});
}

TEST_CASE("prune is a fixed point on fully reachable transducers") {
    Transducer t = cats_transducer();
    Transducer p = prune_inaccessible(t);
    CHECK(p == t);
}

TEST_CASE("prune matches breadth-first reachability oracle") {
    SymbolTable in = table_of({"a", "b"});
    SymbolTable out = table_of({"x"});
    // Chain 0 -> 1 -> 2 plus orphans 3 and 4 (linked to each other only).
    std::vector<RawTransition> raw{
        {0, 1, {}, 1}, {1, 1, {1}, 2}, {3, 1, {}, 4}, {4, 2, {}, 3},
    };
    Transducer t(in, out, 5, 0, raw);
    auto reach = reachable_oracle(raw, 0);
    Transducer p = prune_inaccessible(t);
    CHECK(p.num_states() == reach.size());
    CHECK(p.num_states() == 3);
}

TEST_CASE("prune never changes apply results") {
    std::mt19937_64 rng(7);
    for (int iter = 0; iter < 15; ++iter) {
        Transducer t = random_transducer(rng, 8, 3, 2, 0.5);
        Transducer p = prune_inaccessible(t);
        for (const auto& s : all_strings(3, 6)) {
            CHECK(outcome_of(p.apply(s)) == outcome_of(t.apply(s)));
        }
    }
}

TEST_CASE("minimize merges duplicate states") {
    SymbolTable in = table_of({"a"});
    SymbolTable out = table_of({"x"});
    // States 1 and 2 have identical outgoing maps; 0 reaches both.
    std::vector<RawTransition> raw{
        {0, 1, {1}, 1},
        {1, 1, {}, 2},
        {2, 1, {}, 1},
    };
    Transducer t(in, out, 3, 0, raw);
    Transducer m = minimize(t);
    CHECK(m.num_states() == 2);
    for (const auto& s : all_strings(1, 8))
        CHECK(outcome_of(m.apply(s)) == outcome_of(t.apply(s)));
}

TEST_CASE("minimize keeps already-minimal transducers intact") {
    Transducer t = cats_transducer();
    Transducer m = minimize(t);
    CHECK(m.num_states() == t.num_states());
}

TEST_CASE("minimize agrees with enumeration oracle and is idempotent") {
    std::mt19937_64 rng(23);
    auto strings = all_strings(3, 8);
    for (int iter = 0; iter < 10; ++iter) {
        Transducer t = prune_inaccessible(random_transducer(rng, 12, 3, 2));
        Transducer m = minimize(t);
        CHECK(m.num_states() <= t.num_states());
        for (const auto& s : strings)
            CHECK(outcome_of(m.apply(s)) == outcome_of(t.apply(s)));
        Transducer mm = minimize(m);
        CHECK(mm == m);
    }
}

TEST_CASE("att_text serialization of the cats transducer") {
    Transducer t = cats_transducer();
    std::string text = serialize(t, FstFormat::att_text);
    CHECK(text ==
          "0\t1\tc\tc\n"
          "1\t2\ta\ta\n"
          "2\t3\tt\tt s\n"
          "0\n");
}

TEST_CASE("att_text of an empty transducer is only the initial line") {
    SymbolTable in = table_of({"a"});
    SymbolTable out = table_of({"x"});
    Transducer t(in, out, 1, 0, {});
    CHECK(serialize(t, FstFormat::att_text) == "0\n");
}

TEST_CASE("att_text round-trips random transducers") {
    std::mt19937_64 rng(99);
    for (int iter = 0; iter < 10; ++iter) {
        Transducer t = random_transducer(rng, 20, 4, 3);
        Transducer back = deserialize_att(serialize(t, FstFormat::att_text));
        CHECK(back == t);
    }
}

TEST_CASE("att_text empty outputs round-trip as <eps>") {
    SymbolTable in = table_of({"a"});
    SymbolTable out = table_of({"x"});
    Transducer t(in, out, 2, 0, {{0, 1, {}, 1}});
    std::string text = serialize(t, FstFormat::att_text);
    CHECK(text.find("<eps>") != std::string::npos);
    CHECK(deserialize_att(text) == t);
}

TEST_CASE("deserialize rejects malformed lines with line numbers") {
    CHECK_THROWS_AS(deserialize_att("0\t1\ta\n0\n"), FormatError);
    CHECK_THROWS_AS(deserialize_att("x\t1\ta\tb\n0\n"), FormatError);
    CHECK_THROWS_AS(deserialize_att("0\t1\ta\tb\n"), FormatError);  // no initial line
    try {
        deserialize_att("0\t1\ta\tb\nbogus\tline\n0\n");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.line == 2);
    }
}

TEST_CASE("dot output names arcs in:out") {
    Transducer t = cats_transducer();
    std::string text = serialize(t, FstFormat::dot);
    CHECK(text.find("digraph") != std::string::npos);
    CHECK(text.find("label=\"t:ts\"") != std::string::npos);
}

TEST_CASE("construction rejects invalid transducers") {
    SymbolTable in = table_of({"a"});
    SymbolTable out = table_of({"x"});
    CHECK_THROWS_AS(Transducer(in, out, 1, 1, {}), ConfigError);  // initial out of range
    CHECK_THROWS_AS(Transducer(in, out, 1, 0, {{0, kEpsilon, {}, 0}}), ConfigError);
    CHECK_THROWS_AS(Transducer(in, out, 1, 0, {{0, 1, {}, 3}}), ConfigError);
    CHECK_THROWS_AS(Transducer(in, out, 1, 0, {{0, 1, {}, 0}, {0, 1, {1}, 0}}),
                    ConfigError);  // duplicate key
}
