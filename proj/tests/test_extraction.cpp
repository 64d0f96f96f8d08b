#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "fstforge/extraction.hpp"
#include "fstforge/rng.hpp"
#include "support/generators.hpp"

using namespace fstforge;
using Catch::Approx;
using testsupport::all_strings;
using testsupport::outcome_of;
using testsupport::table_of;

namespace {

Eigen::VectorXd vec2(double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
    return v;
}

ActivationRecord rec(Eigen::VectorXd v, std::uint32_t prev, SymbolId in,
                     std::uint32_t label, long w,
                     RecordSource src = RecordSource::train) {
    return ActivationRecord{std::move(v), prev, in, label, src, w};
}

std::vector<MergedSequence> identity_corpus(int count, int min_len, int max_len,
                                            int alphabet, std::uint64_t seed) {
    auto rng = substream(seed, "identity-corpus");
    std::uniform_int_distribution<int> len(min_len, max_len);
    std::uniform_int_distribution<SymbolId> sym(1, alphabet);
    std::vector<MergedSequence> data;
    for (int i = 0; i < count; ++i) {
        MergedSequence seq;
        int n = len(rng);
        for (int k = 0; k < n; ++k) {
            SymbolId x = sym(rng);
            seq.steps.push_back({x, {x}});
        }
        data.push_back(std::move(seq));
    }
    return data;
}

MergedSequence identity_seq(const std::vector<SymbolId>& ids) {
    MergedSequence seq;
    for (SymbolId x : ids) seq.steps.push_back({x, {x}});
    return seq;
}

TrainedModel toy_model(const std::vector<MergedSequence>& data) {
    TrainConfig cfg;
    cfg.d = 16;
    cfg.epochs = 0;
    return train(data, cfg);
}

TrainedModel copy_model(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.d = 16;
    cfg.lr = 1e-2;
    cfg.epochs = 200;
    cfg.seed = seed;
    return train(identity_corpus(60, 1, 4, 2, seed + 17), cfg);
}

// Strings over {a, c, t}; output copies the input and appends "s" when the
// string ends in t. The end marker # (input id 4) carries the decision.
MergedSequence pluralizer_seq(const std::vector<SymbolId>& word) {
    MergedSequence seq;
    for (SymbolId x : word) seq.steps.push_back({x, {x}});
    bool final_t = !word.empty() && word.back() == 3;
    seq.steps.push_back({4, final_t ? std::vector<SymbolId>{4}
                                    : std::vector<SymbolId>{}});
    return seq;
}

Transducer pluralizer_reference() {
    SymbolTable in = table_of({"a", "c", "t", "#"});
    SymbolTable out = table_of({"a", "c", "t", "s"});
    std::vector<RawTransition> raw{
        {0, 1, {1}, 0}, {0, 2, {2}, 0}, {0, 3, {3}, 1}, {0, 4, {}, 2},
        {1, 1, {1}, 0}, {1, 2, {2}, 0}, {1, 3, {3}, 1}, {1, 4, {4}, 2},
    };
    return Transducer(in, out, 3, 0, raw);
}

}  // namespace

TEST_CASE("standardizer centers and scales by weighted moments") {
    std::vector<Eigen::VectorXd> xs{vec2(0, 7), vec2(3, 7)};
    std::vector<double> ws{2.0, 1.0};
    Standardizer st = Standardizer::fit(xs, ws);
    // mean_0 = (0*2 + 3*1) / 3 = 1, var_0 = (2*1 + 1*4) / 3 = 2
    CHECK(st.mean[0] == Approx(1.0));
    CHECK(st.apply(xs[0])[0] == Approx(-1.0 / std::sqrt(2.0)));
    CHECK(st.apply(xs[1])[0] == Approx(2.0 / std::sqrt(2.0)));
    // second dimension is constant, so it maps to exactly 0
    CHECK(st.apply(xs[0])[1] == 0.0);
    CHECK(st.apply(xs[1])[1] == 0.0);
}

TEST_CASE("weighted k-means separates distant tight blobs exactly") {
    auto rng = substream(7, "blob");
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<Eigen::VectorXd> xs;
    std::vector<double> ws;
    for (int i = 0; i < 40; ++i) {
        xs.push_back(vec2(0 + noise(rng), 0 + noise(rng)));
        ws.push_back(i % 3 == 0 ? 2.0 : 1.0);
    }
    for (int i = 0; i < 40; ++i) {
        xs.push_back(vec2(10 + noise(rng), 0 + noise(rng)));
        ws.push_back(1.0);
    }
    auto km_rng = substream(7, "kmeans");
    KMeansResult km = weighted_kmeans(xs, ws, 2, km_rng);
    REQUIRE(km.assignment.size() == 80);
    for (int i = 1; i < 40; ++i) CHECK(km.assignment[i] == km.assignment[0]);
    for (int i = 41; i < 80; ++i) CHECK(km.assignment[i] == km.assignment[40]);
    CHECK(km.assignment[0] != km.assignment[40]);
    double lo = std::min(km.centroids[0][0], km.centroids[1][0]);
    double hi = std::max(km.centroids[0][0], km.centroids[1][0]);
    CHECK(lo == Approx(0.0).margin(0.1));
    CHECK(hi == Approx(10.0).margin(0.1));
}

TEST_CASE("k-means distance ties go to the lowest centroid index") {
    // The near-zero weight keeps the middle point out of the seeding, so the
    // centroids start exactly at -1 and +1 and the middle point is a true tie.
    std::vector<Eigen::VectorXd> xs{Eigen::VectorXd::Constant(1, -1.0),
                                    Eigen::VectorXd::Constant(1, 1.0),
                                    Eigen::VectorXd::Constant(1, 0.0)};
    std::vector<double> ws{1.0, 1.0, 1e-12};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto rng = substream(seed, "tie");
        KMeansResult km = weighted_kmeans(xs, ws, 2, rng);
        CHECK(km.assignment[0] != km.assignment[1]);
        CHECK(km.assignment[2] == 0);
    }
}

TEST_CASE("k-means rejects k beyond the number of distinct vectors") {
    std::vector<Eigen::VectorXd> xs{vec2(0, 0), vec2(0, 0), vec2(0, 0),
                                    vec2(1, 1), vec2(1, 1)};
    std::vector<double> ws(5, 1.0);
    auto rng = substream(0, "k");
    CHECK_THROWS_AS(weighted_kmeans(xs, ws, 3, rng), InvalidKError);
    auto rng2 = substream(0, "k");
    CHECK_THROWS_AS(weighted_kmeans(xs, ws, 0, rng2), InvalidKError);
}

TEST_CASE("collect_activations builds a prefix tree of records") {
    SymbolTable t = table_of({"a", "b"});
    std::vector<MergedSequence> data{identity_seq({1, 2, 1})};
    TrainedModel tm = toy_model(data);

    SECTION("one length-3 string gives three records plus the root") {
        auto records = collect_activations(tm, data, {});
        REQUIRE(records.size() == 4);
        CHECK(records[0].source == RecordSource::root);
        CHECK(records[0].weight == 1);
        CHECK(records[0].prev == 0);
        for (std::size_t r = 1; r < records.size(); ++r) {
            CHECK(records[r].prev == r - 1);
            CHECK(records[r].in != kEpsilon);
            CHECK(records[r].weight == 1);
            CHECK(records[r].source == RecordSource::train);
            CHECK(tm.vocab.label(records[r].label) ==
                  std::vector<SymbolId>{records[r].in});
        }
    }

    SECTION("shared prefixes share records with summed weights") {
        std::vector<MergedSequence> two{identity_seq({1, 2}), identity_seq({1, 1})};
        auto records = collect_activations(toy_model(two), two, {});
        // root, "a", "ab", "aa"
        REQUIRE(records.size() == 4);
        CHECK(records[0].weight == 2);
        CHECK(records[1].weight == 2);
        CHECK(records[2].weight == 1);
        CHECK(records[3].weight == 1);
    }

    SECTION("a synthetic string already in the training set is dropped") {
        auto base = collect_activations(tm, data, {});
        auto with_dup = collect_activations(tm, data, {{1, 2, 1}});
        REQUIRE(with_dup.size() == base.size());
        for (std::size_t r = 0; r < base.size(); ++r) {
            CHECK(with_dup[r].weight == base[r].weight);
            CHECK(with_dup[r].source == base[r].source);
        }
    }

    SECTION("fresh synthetic strings add records marked synthetic") {
        auto records = collect_activations(tm, data, {{2, 1}});
        REQUIRE(records.size() == 6);
        CHECK(records[0].weight == 2);
        CHECK(records[4].source == RecordSource::synthetic);
        CHECK(records[5].source == RecordSource::synthetic);
    }

    SECTION("unknown synthetic symbols are rejected") {
        CHECK_THROWS_AS(collect_activations(tm, data, {{99}}), UnknownSymbolError);
    }
}

TEST_CASE("synthetic records from a converged copy model carry identity labels") {
    TrainedModel tm = copy_model(21);
    std::vector<MergedSequence> train{identity_seq({1}), identity_seq({2})};
    auto records = collect_activations(tm, train, {{1, 2}, {2, 2, 1}});
    bool saw_synthetic = false;
    for (const auto& r : records) {
        if (r.source != RecordSource::synthetic) continue;
        saw_synthetic = true;
        CHECK(tm.vocab.label(r.label) == std::vector<SymbolId>{r.in});
    }
    CHECK(saw_synthetic);
}

TEST_CASE("cluster with k=1 folds everything into one self-looping state") {
    std::vector<ActivationRecord> records{
        rec(vec2(0, 0), 0, kEpsilon, 0, 2, RecordSource::root),
        rec(vec2(1, 0), 0, 1, 1, 2),
        rec(vec2(2, 0), 1, 2, 2, 1),
    };
    ClusteredAutomaton ca = cluster(records, 1, 0);
    CHECK(ca.num_states == 1);
    CHECK(ca.initial == 0);
    for (auto a : ca.assignment) CHECK(a == 0);
    REQUIRE(ca.transitions.size() == 2);
    CHECK(ca.transitions.at(ClusterTransition{0, 1, 1, 0}) == 2);
    CHECK(ca.transitions.at(ClusterTransition{0, 2, 2, 0}) == 1);
}

TEST_CASE("cluster with k equal to distinct vectors isolates every record") {
    std::vector<ActivationRecord> records{
        rec(vec2(0, 0), 0, kEpsilon, 0, 1, RecordSource::root),
        rec(vec2(5, 0), 0, 1, 1, 3),
        rec(vec2(0, 5), 1, 2, 2, 3),
        rec(vec2(5, 5), 2, 1, 1, 3),
    };
    ClusteredAutomaton ca = cluster(records, 4, 9);
    std::set<std::uint32_t> states(ca.assignment.begin(), ca.assignment.end());
    CHECK(states.size() == 4);
    CHECK(ca.initial == ca.assignment[0]);
    CHECK(ca.transitions.at(ClusterTransition{ca.assignment[0], 1, 1,
                                              ca.assignment[1]}) == 3);
    CHECK_THROWS_AS(cluster(records, 5, 9), InvalidKError);
}

TEST_CASE("cluster assignment follows blob membership regardless of seed") {
    // Blob offsets are chosen so the gap dominates in both dimensions even
    // after per-dimension standardization.
    std::vector<ActivationRecord> records;
    records.push_back(rec(vec2(0, 0), 0, kEpsilon, 0, 5, RecordSource::root));
    for (int i = 0; i < 10; ++i)
        records.push_back(rec(vec2(0, 0.01 * (i + 1)), 0, 1, 1, 1));
    for (int i = 0; i < 10; ++i)
        records.push_back(rec(vec2(10, 1 + 0.01 * (i + 1)), 0, 2, 1, 1));
    for (std::uint64_t seed : {0ull, 1ull, 42ull}) {
        ClusteredAutomaton ca = cluster(records, 2, seed);
        for (int i = 1; i <= 10; ++i) CHECK(ca.assignment[i] == ca.assignment[0]);
        for (int i = 12; i <= 20; ++i) CHECK(ca.assignment[i] == ca.assignment[11]);
        CHECK(ca.assignment[0] != ca.assignment[11]);
        CHECK(ca.initial == ca.assignment[0]);
    }
}

TEST_CASE("pinning the root keeps it out of k-means in its own state") {
    std::vector<ActivationRecord> records{
        rec(vec2(0, 0), 0, kEpsilon, 0, 2, RecordSource::root),
        rec(vec2(0, 1), 0, 1, 1, 2),
        rec(vec2(9, 1), 1, 2, 2, 2),
    };
    ClusteredAutomaton ca = cluster(records, 2, 3, true);
    CHECK(ca.num_states == 3);
    CHECK(ca.assignment[0] == 2);
    CHECK(ca.initial == 2);
    CHECK(ca.assignment[1] != ca.assignment[2]);
}

TEST_CASE("resolve keeps an already-deterministic automaton unchanged") {
    std::vector<ActivationRecord> records{
        rec(vec2(0, 0), 0, kEpsilon, 0, 3, RecordSource::root),
        rec(vec2(1, 0), 0, 1, 5, 3),
        rec(vec2(2, 0), 1, 2, 6, 3),
    };
    ClusteredAutomaton ca;
    ca.assignment = {0, 1, 2};
    ca.num_states = 3;
    ca.initial = 0;
    ca.transitions = detail::aggregate_transitions(records, ca.assignment);

    ExtractionConfig cfg;
    cfg.k = 3;
    cfg.lambda_trans = 2;
    ResolvedTransitions res = resolve_transitions(records, ca, cfg);
    CHECK(res.splits == 0);
    CHECK(res.split_failures == 0);
    CHECK(res.dropped == 0);
    REQUIRE(res.edges.size() == 2);
    CHECK(res.edges.at({0, 1}) == std::make_pair(5u, 1u));
    CHECK(res.edges.at({1, 2}) == std::make_pair(6u, 2u));
}

TEST_CASE("an under-threshold alternative is removed without splitting") {
    // One cluster emits a:x five times and a:y once; with the threshold at 2
    // the y branch disappears and the x transition commits untouched.
    std::vector<ActivationRecord> records{
        rec(vec2(0, 0), 0, kEpsilon, 0, 6, RecordSource::root),
        rec(vec2(1, 0), 0, 2, 0, 5),
        rec(vec2(2, 0), 0, 3, 0, 1),
        rec(vec2(3, 0), 1, 1, 10, 5),
        rec(vec2(4, 0), 2, 1, 11, 1),
    };
    ClusteredAutomaton ca;
    ca.assignment = {0, 0, 0, 1, 1};
    ca.num_states = 2;
    ca.initial = 0;
    ca.transitions = detail::aggregate_transitions(records, ca.assignment);

    ExtractionConfig cfg;
    cfg.k = 2;
    cfg.lambda_trans = 2;
    ResolvedTransitions res = resolve_transitions(records, ca, cfg);
    CHECK(res.splits == 0);
    CHECK(res.dropped == 2);  // the a:y alternative and the weight-1 entry edge
    REQUIRE(res.edges.size() == 2);
    CHECK(res.edges.at({0, 1}) == std::make_pair(10u, 1u));
    CHECK(res.edges.at({0, 2}) == std::make_pair(0u, 0u));
    CHECK(res.edges.count({0, 3}) == 0);
}

TEST_CASE("a balanced separable conflict splits the state in two") {
    // Six parent records in one cluster: three near x=0 emit a:x, three near
    // x=10 emit a:y, each side with count 9, well over the threshold.
    std::vector<ActivationRecord> records;
    records.push_back(rec(vec2(0, 5), 0, kEpsilon, 0, 18, RecordSource::root));
    for (int i = 0; i < 3; ++i)
        records.push_back(rec(vec2(0, i), 0, static_cast<SymbolId>(2 + i), 0, 3));
    for (int i = 0; i < 3; ++i)
        records.push_back(rec(vec2(10, i), 0, static_cast<SymbolId>(5 + i), 0, 3));
    for (int i = 0; i < 3; ++i)
        records.push_back(rec(vec2(20, i), static_cast<std::uint32_t>(1 + i), 1, 10, 3));
    for (int i = 0; i < 3; ++i)
        records.push_back(rec(vec2(30, i), static_cast<std::uint32_t>(4 + i), 1, 11, 3));
    ClusteredAutomaton ca;
    ca.assignment = {0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 2};
    ca.num_states = 3;
    ca.initial = 0;
    ca.transitions = detail::aggregate_transitions(records, ca.assignment);

    ExtractionConfig cfg;
    cfg.k = 3;
    cfg.lambda_trans = 2;

    for (ClassifierKind kind :
         {ClassifierKind::svm, ClassifierKind::logistic_regression}) {
        cfg.classifier = kind;
        ResolvedTransitions res = resolve_transitions(records, ca, cfg);
        CHECK(res.splits == 1);
        CHECK(res.split_failures == 0);
        CHECK(res.dropped == 0);
        CHECK_FALSE(res.budget_exhausted);

        // The x-emitting and y-emitting parents now live in different states.
        std::uint32_t sx = res.assignment[1];
        std::uint32_t sy = res.assignment[4];
        CHECK(sx != sy);
        CHECK(res.assignment[2] == sx);
        CHECK(res.assignment[3] == sx);
        CHECK(res.assignment[5] == sy);
        CHECK(res.assignment[6] == sy);
        CHECK(res.initial == res.assignment[0]);

        CHECK(res.edges.at({sx, 1}) == std::make_pair(10u, 1u));
        CHECK(res.edges.at({sy, 1}) == std::make_pair(11u, 2u));
        // Entry edges from the root's state reach the right half.
        std::uint32_t root_state = res.assignment[0];
        CHECK(res.edges.at({root_state, 2}).second == sx);
        CHECK(res.edges.at({root_state, 5}).second == sy);
    }
}

TEST_CASE("a three-way conflict resolves with one-vs-rest into three states") {
    // Each parent blob sits on its own axis so every one-vs-rest separator
    // has a clean margin.
    auto unit = [](int axis, double v, double jitter) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
        x[axis] = v;
        x[4] = jitter;
        return x;
    };
    std::vector<ActivationRecord> records;
    records.push_back(rec(unit(3, -5, 0), 0, kEpsilon, 0, 12, RecordSource::root));
    int sym = 2;
    for (int axis : {0, 1, 2})
        for (int i = 0; i < 2; ++i)
            records.push_back(
                rec(unit(axis, 1.0, 0.1 * i), 0, static_cast<SymbolId>(sym++), 0, 2));
    std::uint32_t label = 10;
    for (int group = 0; group < 3; ++group) {
        for (int i = 0; i < 2; ++i) {
            auto parent = static_cast<std::uint32_t>(1 + group * 2 + i);
            records.push_back(rec(unit(3, 100.0 + group, 0.1 * i), parent, 1, label, 2));
        }
        ++label;
    }
    ClusteredAutomaton ca;
    ca.assignment = {0, 0, 0, 0, 0, 0, 0, 1, 1, 2, 2, 3, 3};
    ca.num_states = 4;
    ca.initial = 0;
    ca.transitions = detail::aggregate_transitions(records, ca.assignment);

    ExtractionConfig cfg;
    cfg.k = 4;
    cfg.lambda_trans = 2;
    ResolvedTransitions res = resolve_transitions(records, ca, cfg);
    CHECK(res.splits == 1);
    CHECK(res.split_failures == 0);
    CHECK(res.num_states - ca.num_states <= 3);

    std::uint32_t sa = res.assignment[1], sb = res.assignment[3], sc = res.assignment[5];
    CHECK(res.assignment[2] == sa);
    CHECK(res.assignment[4] == sb);
    CHECK(res.assignment[6] == sc);
    CHECK(sa != sb);
    CHECK(sb != sc);
    CHECK(sa != sc);
    CHECK(res.edges.at({sa, 1}) == std::make_pair(10u, 1u));
    CHECK(res.edges.at({sb, 1}) == std::make_pair(11u, 2u));
    CHECK(res.edges.at({sc, 1}) == std::make_pair(12u, 3u));
}

TEST_CASE("identical conflicting vectors fall back to the majority count") {
    std::vector<ActivationRecord> records{
        rec(vec2(0, 0), 0, kEpsilon, 0, 5, RecordSource::root),
        rec(vec2(1, 1), 0, 2, 0, 3),
        rec(vec2(1, 1), 0, 3, 0, 2),
        rec(vec2(5, 0), 1, 1, 10, 3),
        rec(vec2(6, 0), 2, 1, 11, 2),
    };
    ClusteredAutomaton ca;
    ca.assignment = {0, 0, 0, 1, 2};
    ca.num_states = 3;
    ca.initial = 0;
    ca.transitions = detail::aggregate_transitions(records, ca.assignment);

    ExtractionConfig cfg;
    cfg.k = 3;
    cfg.lambda_trans = 2;

    SECTION("higher-count alternative wins") {
        ResolvedTransitions res = resolve_transitions(records, ca, cfg);
        CHECK(res.splits == 0);
        CHECK(res.split_failures == 1);
        CHECK(res.edges.at({0, 1}) == std::make_pair(10u, 1u));
        CHECK(res.dropped == 1);
    }

    SECTION("counts favoring the other label flip the winner") {
        records[2].weight = 4;
        records[4].weight = 4;
        records[0].weight = 7;
        ClusteredAutomaton ca2 = ca;
        ca2.transitions = detail::aggregate_transitions(records, ca2.assignment);
        ResolvedTransitions res = resolve_transitions(records, ca2, cfg);
        CHECK(res.split_failures == 1);
        CHECK(res.edges.at({0, 1}) == std::make_pair(11u, 2u));
    }

    SECTION("a count tie goes to the smaller label") {
        records[2].weight = 3;
        records[4].weight = 3;
        records[0].weight = 6;
        ClusteredAutomaton ca2 = ca;
        ca2.transitions = detail::aggregate_transitions(records, ca2.assignment);
        ResolvedTransitions res = resolve_transitions(records, ca2, cfg);
        CHECK(res.split_failures == 1);
        CHECK(res.edges.at({0, 1}) == std::make_pair(10u, 1u));
    }
}

TEST_CASE("without a threshold splitting is disabled and max count wins") {
    std::vector<ActivationRecord> records{
        rec(vec2(0, 0), 0, kEpsilon, 0, 4, RecordSource::root),
        rec(vec2(0, 1), 0, 2, 0, 1),
        rec(vec2(9, 1), 0, 3, 0, 3),
        rec(vec2(3, 0), 1, 1, 10, 1),
        rec(vec2(4, 0), 2, 1, 11, 3),
    };
    ClusteredAutomaton ca;
    ca.assignment = {0, 0, 0, 1, 1};
    ca.num_states = 2;
    ca.initial = 0;
    ca.transitions = detail::aggregate_transitions(records, ca.assignment);

    ExtractionConfig cfg;
    cfg.k = 2;
    cfg.lambda_trans = std::nullopt;
    ResolvedTransitions res = resolve_transitions(records, ca, cfg);
    CHECK(res.splits == 0);
    CHECK(res.split_failures == 0);
    // Conflict projected to the count-3 alternative; weight-1 edges survive
    // because no threshold filtering happens.
    CHECK(res.edges.at({0, 1}) == std::make_pair(11u, 1u));
    CHECK(res.edges.at({0, 2}) == std::make_pair(0u, 0u));
    CHECK(res.edges.at({0, 3}) == std::make_pair(0u, 0u));
    CHECK(res.dropped == 1);
}

TEST_CASE("the split budget caps work and flags the projected remainder") {
    // Fifteen independent two-way conflicts, one per cluster, each separable
    // along its own axis. With k=1 the budget allows only ten splits.
    const int copies = 15;
    const int dim = 17;
    auto unit = [&](int axis, double v) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
        x[axis] = v;
        return x;
    };
    std::vector<ActivationRecord> records;
    records.push_back(rec(Eigen::VectorXd::Zero(dim), 0, kEpsilon, 0, 60,
                          RecordSource::root));
    for (int j = 0; j < copies; ++j) {
        records.push_back(rec(unit(j, 1.0), 0, static_cast<SymbolId>(2 + 2 * j), 0, 2));
        records.push_back(rec(unit(j, -1.0), 0, static_cast<SymbolId>(3 + 2 * j), 0, 2));
    }
    for (int j = 0; j < copies; ++j) {
        auto p1 = static_cast<std::uint32_t>(1 + 2 * j);
        records.push_back(rec(unit(15, 1.0 + j), p1, 1, 10, 2));
        records.push_back(rec(unit(16, 1.0 + j), p1 + 1, 1, 11, 2));
    }
    ClusteredAutomaton ca;
    ca.assignment.assign(records.size(), 0);
    for (int j = 0; j < copies; ++j) {
        ca.assignment[1 + 2 * j] = static_cast<std::uint32_t>(1 + j);
        ca.assignment[2 + 2 * j] = static_cast<std::uint32_t>(1 + j);
        ca.assignment[1 + 2 * copies + 2 * j] = 16;
        ca.assignment[2 + 2 * copies + 2 * j] = 17;
    }
    ca.num_states = 18;
    ca.initial = 0;
    ca.transitions = detail::aggregate_transitions(records, ca.assignment);

    ExtractionConfig cfg;
    cfg.k = 1;  // split budget 10
    cfg.lambda_trans = 2;
    ResolvedTransitions res = resolve_transitions(records, ca, cfg);
    CHECK(res.splits == 10);
    CHECK(res.budget_exhausted);
    CHECK(res.split_failures == 0);

    int split_copies = 0, projected_copies = 0;
    for (int j = 0; j < copies; ++j) {
        std::uint32_t a = res.assignment[1 + 2 * j];
        std::uint32_t b = res.assignment[2 + 2 * j];
        if (a != b) {
            ++split_copies;
            CHECK(res.edges.at({a, 1}) == std::make_pair(10u, 16u));
            CHECK(res.edges.at({b, 1}) == std::make_pair(11u, 17u));
        } else {
            ++projected_copies;
            // Equal counts, so the smaller label wins the projection.
            CHECK(res.edges.at({a, 1}) == std::make_pair(10u, 16u));
        }
    }
    CHECK(split_copies == 10);
    CHECK(projected_copies == 5);
}

TEST_CASE("finalize materializes, prunes, and minimizes") {
    SymbolTable in = table_of({"a", "b"});
    SymbolTable out = table_of({"x"});
    std::vector<MergedSequence> vocab_data{MergedSequence{{{1, {1}}, {2, {}}}}};
    OutputVocab vocab = OutputVocab::build(vocab_data);  // {}, {x}
    std::uint32_t x = vocab.require({1}), eps = vocab.require({});

    SECTION("a chain automaton survives untouched") {
        ResolvedEdges edges{{{0, 1}, {x, 1}}, {{1, 2}, {eps, 2}}};
        Transducer t = finalize(edges, 3, 0, in, out, vocab);
        CHECK(t.num_states() == 3);
        auto r = t.apply(std::vector<SymbolId>{1, 2});
        REQUIRE(r.ok());
        CHECK(r.output == std::vector<SymbolId>{1});
    }

    SECTION("behavior-equivalent states merge") {
        // States 1 and 2 behave identically, so they collapse.
        ResolvedEdges edges{{{0, 1}, {x, 1}},
                            {{0, 2}, {x, 2}},
                            {{1, 1}, {eps, 0}},
                            {{2, 1}, {eps, 0}}};
        Transducer t = finalize(edges, 3, 0, in, out, vocab);
        CHECK(t.num_states() == 2);
        std::vector<RawTransition> raw{
            {0, 1, {1}, 1}, {0, 2, {1}, 2}, {1, 1, {}, 0}, {2, 1, {}, 0}};
        Transducer direct(in, out, 3, 0, raw);
        for (const auto& s : all_strings(2, 8))
            CHECK(outcome_of(t.apply(s)) == outcome_of(direct.apply(s)));
    }

    SECTION("unreachable remnants disappear") {
        ResolvedEdges edges{{{0, 1}, {x, 0}}, {{5, 1}, {x, 5}}, {{7, 2}, {eps, 0}}};
        Transducer t = finalize(edges, 8, 0, in, out, vocab);
        CHECK(t.num_states() == 1);
        CHECK(t.num_arcs() == 1);
    }
}

TEST_CASE("extraction from a copy model yields the one-state identity machine") {
    SymbolTable letters = table_of({"a", "b"});
    TrainedModel tm = copy_model(33);
    std::vector<MergedSequence> corpus = identity_corpus(60, 1, 4, 2, 50);

    std::vector<std::vector<SymbolId>> synthetic;
    for (const auto& s : all_strings(2, 4))
        if (!s.empty()) synthetic.push_back(s);

    ExtractionConfig cfg;
    cfg.k = 1;
    cfg.lambda_trans = std::nullopt;
    cfg.seed = 4;
    ExtractionResult out = extract(tm, letters, letters, corpus, synthetic, cfg);

    CHECK(out.report.k == 1);
    CHECK(out.report.states_after_minimize == 1);
    CHECK(is_input_deterministic(out.fst.raw_transitions()));

    int total = 0, correct = 0;
    for (const auto& s : all_strings(2, 6)) {
        if (s.empty()) continue;
        ++total;
        auto r = out.fst.apply(s);
        if (r.ok() && r.output == s) ++correct;
    }
    CHECK(correct == total);

    ExtractionResult again = extract(tm, letters, letters, corpus, synthetic, cfg);
    CHECK(again.fst == out.fst);
    CHECK(report_to_json(again.report) == report_to_json(out.report));
}

TEST_CASE("extracted pluralizer matches the reference machine on short strings") {
    SymbolTable in = table_of({"a", "c", "t", "#"});
    SymbolTable out = table_of({"a", "c", "t", "s"});

    std::vector<MergedSequence> corpus;
    for (const auto& w : all_strings(3, 4)) corpus.push_back(pluralizer_seq(w));

    TrainConfig tc;
    tc.d = 16;
    tc.lr = 1e-2;
    tc.epochs = 250;
    tc.seed = 3;
    TrainedModel tm = train(corpus, tc);

    std::vector<std::vector<SymbolId>> synthetic;
    for (const auto& w : all_strings(3, 6)) {
        auto s = w;
        s.push_back(4);
        synthetic.push_back(std::move(s));
    }

    ExtractionConfig cfg;
    cfg.k = 2;
    cfg.lambda_trans = 2;
    cfg.seed = 0;
    ExtractionResult res = extract(tm, in, out, corpus, synthetic, cfg);
    CHECK(is_input_deterministic(res.fst.raw_transitions()));

    Transducer ref = pluralizer_reference();
    for (const auto& w : all_strings(3, 6)) {
        auto s = w;
        s.push_back(4);
        CHECK(outcome_of(res.fst.apply(s)) == outcome_of(ref.apply(s)));
    }
}

TEST_CASE("synthetic coverage accepts strictly more than train-only extraction") {
    SymbolTable letters = table_of({"a", "b"});
    TrainedModel tm = copy_model(77);
    // Deliberately thin training set: its lone transition chain falls under
    // the count threshold, so the train-only machine stays nearly empty.
    std::vector<MergedSequence> small_train{identity_seq({1})};

    std::vector<std::vector<SymbolId>> synthetic;
    for (const auto& s : all_strings(2, 4))
        if (!s.empty()) synthetic.push_back(s);

    ExtractionConfig cfg;
    cfg.k = 2;
    cfg.lambda_trans = 2;
    cfg.seed = 6;
    ExtractionResult with_syn = extract(tm, letters, letters, small_train, synthetic, cfg);
    ExtractionResult without = extract(tm, letters, letters, small_train, {}, cfg);

    int acc_syn = 0, acc_train_only = 0;
    for (const auto& s : all_strings(2, 4)) {
        if (s.size() < 2) continue;
        if (with_syn.fst.apply(s).ok()) ++acc_syn;
        if (without.fst.apply(s).ok()) ++acc_train_only;
    }
    CHECK(acc_syn > acc_train_only);
}

TEST_CASE("extraction config validation rejects bad values") {
    ExtractionConfig cfg;
    cfg.k = 0;
    CHECK_THROWS_AS(validate_config(cfg), InvalidKError);
    cfg.k = 2;
    cfg.lambda_trans = 1;
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    cfg.lambda_trans = 2;
    CHECK_NOTHROW(validate_config(cfg));
    CHECK(parse_classifier("svm") == ClassifierKind::svm);
    CHECK(parse_classifier("logistic_regression") == ClassifierKind::logistic_regression);
    CHECK_THROWS_AS(parse_classifier("forest"), ConfigError);
    CHECK(classifier_name(ClassifierKind::svm) == "svm");
}

TEST_CASE("cluster count sweep bounds follow the distinct-vector budget") {
    CHECK(cluster_count_range(1000) == std::make_pair(50u, 1000u));
    CHECK(cluster_count_range(53) == std::make_pair(26u, 53u));
    CHECK(cluster_count_range(10) == std::make_pair(5u, 10u));
    CHECK(cluster_count_range(1) == std::make_pair(1u, 1u));
}

TEST_CASE("extraction report serializes every field") {
    ExtractionReport r;
    r.k = 7;
    r.splits = 2;
    r.split_failures = 1;
    r.states_before_minimize = 9;
    r.states_after_minimize = 4;
    r.dropped_transitions = 13;
    r.budget_exhausted = true;
    auto j = report_to_json(r);
    CHECK(j["k"] == 7);
    CHECK(j["splits"] == 2);
    CHECK(j["split_failures"] == 1);
    CHECK(j["states_before_minimize"] == 9);
    CHECK(j["states_after_minimize"] == 4);
    CHECK(j["dropped_transitions"] == 13);
    CHECK(j["budget_exhausted"] == true);
    CHECK(j["dev_accuracy"].is_null());
    r.dev_accuracy = 0.5;
    CHECK(report_to_json(r)["dev_accuracy"] == 0.5);
}
