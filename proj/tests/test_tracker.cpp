#include <doctest.h>

#include <cmath>
#include <set>

#include "quadtrack/synthlab.hpp"
#include "quadtrack/tracker.hpp"

using namespace quadtrack;
using descriptor::Agd;
using geometry::Quad;
using tracker::TrackerConfig;
using tracker::TrackerState;

namespace {

Agd fixed_agd(std::vector<float> values) {
    Agd agd;
    const int n = static_cast<int>(values.size());
    agd.values = Tensor({n}, std::move(values));
    agd.appearance_width = n;
    return agd;
}

}  // namespace

TEST_CASE("similarity of identical singletons is [[0]]") {
    Tensor d({3}, {0.5f, -0.5f, 1.0f});
    Tensor cost = tracker::similarity_matrix({d}, {d});
    REQUIRE(cost.shape() == std::vector<int>{1, 1});
    CHECK(cost[0] == 0.0f);
}

TEST_CASE("similarity of orthogonal unit vectors is sqrt(2) off-diagonal") {
    Tensor e1({2}, {1.0f, 0.0f});
    Tensor e2({2}, {0.0f, 1.0f});
    Tensor cost = tracker::similarity_matrix({e1, e2}, {e1, e2});
    CHECK(cost.at(0, 0) == 0.0f);
    CHECK(cost.at(1, 1) == 0.0f);
    CHECK(cost.at(0, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
    CHECK(cost.at(1, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("similarity matches the per-pair norm oracle") {
    Rng rng(81);
    std::vector<Tensor> prev, cur;
    for (int i = 0; i < 4; ++i) prev.push_back(Tensor::uniform({9}, rng));
    for (int j = 0; j < 6; ++j) cur.push_back(Tensor::uniform({9}, rng));
    Tensor cost = tracker::similarity_matrix(prev, cur);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 6; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 9; ++k) {
                const double d = static_cast<double>(prev[static_cast<size_t>(i)][k]) - cur[static_cast<size_t>(j)][k];
                acc += d * d;
            }
            CHECK(std::fabs(cost.at(i, j) - std::sqrt(acc)) < 1e-6);
        }
    }
}

TEST_CASE("similarity rejects width mismatches") {
    CHECK_THROWS_AS(tracker::similarity_matrix({Tensor({3})}, {Tensor({4})}), ShapeError);
}

TEST_CASE("kuhn_munkres trivial and analytic cases") {
    SUBCASE("singleton") {
        Tensor cost({1, 1});
        const auto pairs = tracker::kuhn_munkres(cost, 1.0);
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0] == std::pair<int, int>{0, 0});
    }
    SUBCASE("diagonal beats the swap") {
        Tensor cost({2, 2}, {1.0f, 2.0f, 2.0f, 1.0f});
        const auto pairs = tracker::kuhn_munkres(cost, 10.0);
        REQUIRE(pairs.size() == 2);
        CHECK(pairs[0] == std::pair<int, int>{0, 0});
        CHECK(pairs[1] == std::pair<int, int>{1, 1});
    }
    SUBCASE("threshold drops every optimal pair") {
        Tensor cost({2, 2}, {0.5f, 3.0f, 3.0f, 0.5f});
        CHECK(tracker::kuhn_munkres(cost, 0.4).empty());
    }
    SUBCASE("empty matrix") { CHECK(tracker::kuhn_munkres(Tensor{}, 1.0).empty()); }
}

TEST_CASE("kuhn_munkres equals brute force on 1000 random matrices") {
    Rng rng(82);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(7));
        Tensor cost({n, n});
        for (int64_t i = 0; i < cost.numel(); ++i) cost[i] = rng.uniform(0.0f, 10.0f);
        const auto pairs = tracker::kuhn_munkres(cost, 1e9);
        REQUIRE(static_cast<int>(pairs.size()) == n);
        double total = 0.0;
        for (const auto& [i, j] : pairs) total += cost.at(i, j);
        const auto brute = synth::brute_force_assignment(cost);
        CHECK(total == brute.total);
    }
}

TEST_CASE("kuhn_munkres handles rectangular matrices") {
    Rng rng(83);
    for (int trial = 0; trial < 100; ++trial) {
        const int p = 1 + static_cast<int>(rng.below(4));
        const int q = 1 + static_cast<int>(rng.below(6));
        Tensor cost({p, q});
        for (int64_t i = 0; i < cost.numel(); ++i) cost[i] = rng.uniform(0.0f, 5.0f);
        const auto pairs = tracker::kuhn_munkres(cost, 1e9);
        CHECK(static_cast<int>(pairs.size()) == std::min(p, q));
        // exhaustive check against the padded brute force
        const int n = std::max(p, q);
        Tensor padded = Tensor::full({n, n}, 1e6f);
        for (int i = 0; i < p; ++i) {
            for (int j = 0; j < q; ++j) padded.at(i, j) = cost.at(i, j);
        }
        double total = 0.0;
        for (const auto& [i, j] : pairs) total += cost.at(i, j);
        const auto brute = synth::brute_force_assignment(padded);
        double brute_real = 0.0;
        for (const auto& [i, j] : brute.matching) {
            if (i < p && j < q) brute_real += padded.at(i, j);
        }
        CHECK(total == doctest::Approx(brute_real).epsilon(1e-9));
    }
}

TEST_CASE("step on empty input and state yields nothing") {
    TrackerState state;
    TrackerConfig cfg;
    recurrent::GruParams gru = recurrent::GruParams::zeros(4, 4);
    const auto confirmed = tracker::step({}, {}, state, cfg, gru);
    CHECK(confirmed.empty());
    CHECK(state.active.empty());
    CHECK(state.frame == 1);
}

TEST_CASE("a confident detection spawns a fresh tracklet") {
    TrackerState state;
    TrackerConfig cfg;
    recurrent::GruParams gru = recurrent::GruParams::zeros(4, 4);
    Quad q = Quad::rect(0, 0, 10, 10, 0.9f);
    const auto confirmed = tracker::step({q}, {fixed_agd({1, 0, 0, 0})}, state, cfg, gru);
    REQUIRE(confirmed.size() == 1);
    CHECK(confirmed[0].track_id == 0);
    REQUIRE(state.active.size() == 1);
    CHECK(state.active[0].history.size() == 1);
}

TEST_CASE("a timid detection below theta_h does not spawn") {
    TrackerState state;
    TrackerConfig cfg;  // theta_h = 0.8
    recurrent::GruParams gru = recurrent::GruParams::zeros(4, 4);
    Quad q = Quad::rect(0, 0, 10, 10, 0.5f);
    const auto confirmed = tracker::step({q}, {fixed_agd({1, 0, 0, 0})}, state, cfg, gru);
    CHECK(confirmed.empty());
    CHECK(state.active.empty());
}

TEST_CASE("misaligned detections and descriptors are rejected") {
    TrackerState state;
    TrackerConfig cfg;
    recurrent::GruParams gru = recurrent::GruParams::zeros(4, 4);
    CHECK_THROWS_AS(tracker::step({Quad::rect(0, 0, 1, 1)}, {}, state, cfg, gru), UsageError);
}

TEST_CASE("two-frame repeat rewards the confidence by tau*ln(2)") {
    TrackerState state;
    TrackerConfig cfg;
    cfg.theta_m = 100.0;  // force the match
    cfg.tau = 0.05;
    cfg.matching = TrackerConfig::Matching::AgdAgd;
    recurrent::GruParams gru = recurrent::GruParams::zeros(4, 4);
    Quad q = Quad::rect(0, 0, 10, 10, 0.9f);
    Agd agd = fixed_agd({1, 2, 3, 4});
    tracker::step({q}, {agd}, state, cfg, gru);
    const auto confirmed = tracker::step({q}, {agd}, state, cfg, gru);
    REQUIRE(confirmed.size() == 1);
    const double expected = std::min(1.0, 0.9 + 0.05 * std::log(2.0));
    CHECK(confirmed[0].quad.score == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("reward clamps at one") {
    TrackerState state;
    TrackerConfig cfg;
    cfg.theta_m = 100.0;
    cfg.tau = 0.5;
    cfg.matching = TrackerConfig::Matching::AgdAgd;
    recurrent::GruParams gru = recurrent::GruParams::zeros(4, 4);
    Quad q = Quad::rect(0, 0, 10, 10, 0.95f);
    Agd agd = fixed_agd({1, 2, 3, 4});
    for (int t = 0; t < 6; ++t) {
        const auto confirmed = tracker::step({q}, {agd}, state, cfg, gru);
        REQUIRE(confirmed.size() == 1);
        CHECK(confirmed[0].quad.score <= 1.0f);
    }
    CHECK(state.active[0].history.back().quad.score == 1.0f);
}

TEST_CASE("with an infinite threshold and one proposal per frame, exactly one tracklet ever exists") {
    TrackerState state;
    TrackerConfig cfg;
    cfg.theta_m = 1e9;
    cfg.matching = TrackerConfig::Matching::AgdAgd;
    recurrent::GruParams gru = recurrent::GruParams::zeros(4, 4);
    Rng rng(84);
    for (int t = 0; t < 25; ++t) {
        Quad q = Quad::rect(t, t, t + 10.0, t + 10.0, 0.9f);
        Agd agd = fixed_agd({rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
        tracker::step({q}, {agd}, state, cfg, gru);
        CHECK(state.active.size() == 1);
        CHECK(state.retired.empty());
        CHECK(state.next_id == 1);
    }
    CHECK(state.active[0].history.size() == 25);
}

TEST_CASE("tracklets retire after max_missed consecutive silent frames and never return") {
    TrackerState state;
    TrackerConfig cfg;
    cfg.max_missed = 3;
    cfg.matching = TrackerConfig::Matching::AgdAgd;
    recurrent::GruParams gru = recurrent::GruParams::zeros(4, 4);
    Quad q = Quad::rect(0, 0, 10, 10, 0.9f);
    Agd agd = fixed_agd({1, 0, 0, 0});
    tracker::step({q}, {agd}, state, cfg, gru);
    REQUIRE(state.active.size() == 1);
    for (int t = 0; t < 3; ++t) {
        tracker::step({}, {}, state, cfg, gru);
        CHECK(state.active.size() == 1);  // missed <= max_missed keeps it alive
    }
    const auto confirmed = tracker::step({}, {}, state, cfg, gru);
    CHECK(confirmed.empty());
    CHECK(state.active.empty());
    REQUIRE(state.retired.size() == 1);
    CHECK(state.retired[0].missed == 4);
}

TEST_CASE("one-to-one: no duplicate tracklets or proposals within a frame") {
    TrackerState state;
    TrackerConfig cfg;
    cfg.theta_m = 1e9;
    cfg.matching = TrackerConfig::Matching::AgdAgd;
    recurrent::GruParams gru = recurrent::GruParams::zeros(6, 6);
    Rng rng(85);
    for (int t = 0; t < 12; ++t) {
        std::vector<Quad> dets;
        std::vector<Agd> agds;
        const int n = 1 + static_cast<int>(rng.below(5));
        for (int i = 0; i < n; ++i) {
            dets.push_back(Quad::rect(20.0 * i, 10, 20.0 * i + 15, 24, 0.9f));
            std::vector<float> v(6);
            for (float& x : v) x = rng.uniform(-1.0f, 1.0f);
            agds.push_back(fixed_agd(std::move(v)));
        }
        const auto confirmed = tracker::step(dets, agds, state, cfg, gru);
        std::set<int> ids;
        for (const auto& c : confirmed) {
            CHECK(ids.insert(c.track_id).second);
        }
    }
}

TEST_CASE("identical input streams produce identical id assignments") {
    auto run = [] {
        TrackerState state;
        TrackerConfig cfg;
        cfg.matching = TrackerConfig::Matching::AgdAgd;
        recurrent::GruParams gru = recurrent::GruParams::zeros(4, 4);
        Rng rng(86);
        std::vector<std::vector<int>> ids_per_frame;
        for (int t = 0; t < 10; ++t) {
            std::vector<Quad> dets;
            std::vector<Agd> agds;
            for (int i = 0; i < 3; ++i) {
                dets.push_back(Quad::rect(30.0 * i, 8, 30.0 * i + 20, 22, 0.85f + 0.05f * i));
                std::vector<float> v = {static_cast<float>(i), rng.uniform(), 0.0f, 1.0f};
                agds.push_back(fixed_agd(std::move(v)));
            }
            std::vector<int> ids;
            for (const auto& c : tracker::step(dets, agds, state, cfg, gru)) ids.push_back(c.track_id);
            ids_per_frame.push_back(ids);
        }
        return ids_per_frame;
    };
    CHECK(run() == run());
}

TEST_CASE("tracker config validates its ranges") {
    TrackerConfig cfg;
    cfg.theta_l = 0.9;  // above theta_h
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg = TrackerConfig{};
    cfg.theta_m = 0.0;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg = TrackerConfig{};
    cfg.k = 0;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
}
