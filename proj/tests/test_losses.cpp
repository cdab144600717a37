#include <doctest.h>

#include <cmath>

#include "quadtrack/losses.hpp"

using namespace quadtrack;
using losses::LossWeights;
using losses::PairLabels;

TEST_CASE("dice loss anchors") {
    Tensor gt({4, 4});
    for (int i = 0; i < 8; ++i) gt[i] = 1.0f;  // half ones

    SUBCASE("perfect prediction is ~0") {
        CHECK(losses::dice_loss(gt, gt) == doctest::Approx(0.0).epsilon(1e-5));
    }
    SUBCASE("inverted prediction is ~1") {
        Tensor inv(gt.shape());
        for (int64_t i = 0; i < gt.numel(); ++i) inv[i] = 1.0f - gt[i];
        CHECK(losses::dice_loss(inv, gt) == doctest::Approx(1.0).epsilon(1e-5));
    }
    SUBCASE("uniform half prediction on half-ones ground truth is 0.5") {
        Tensor half = Tensor::full(gt.shape(), 0.5f);
        CHECK(losses::dice_loss(half, gt) == doctest::Approx(0.5).epsilon(1e-5));
    }
    SUBCASE("shape mismatch throws") {
        CHECK_THROWS_AS(losses::dice_loss(Tensor({2, 2}), gt), ShapeError);
    }
}

TEST_CASE("smooth-L1 offset loss anchors") {
    SUBCASE("perfect offsets cost 0") {
        Rng rng(41);
        Tensor pred = Tensor::uniform({8, 3}, rng);
        Tensor norm = Tensor::full({3}, 1.5f);
        CHECK(losses::smooth_l1_offsets(pred, pred, norm) == 0.0);
    }
    SUBCASE("every entry at the |d| = 1 boundary costs 0.5") {
        Tensor gt({8, 1});
        Tensor pred({8, 1});
        Tensor norm = Tensor::full({1}, 2.0f);
        for (int c = 0; c < 8; ++c) pred.at(c, 0) = gt.at(c, 0) + 2.0f;  // d = 1 exactly
        CHECK(losses::smooth_l1_offsets(pred, gt, norm) == doctest::Approx(0.5).epsilon(1e-7));
    }
    SUBCASE("random instance matches the looped scalar formula") {
        Rng rng(42);
        Tensor pred = Tensor::uniform({8, 6}, rng, -3.0f, 3.0f);
        Tensor gt = Tensor::uniform({8, 6}, rng, -3.0f, 3.0f);
        Tensor norm({6});
        for (int i = 0; i < 6; ++i) norm[i] = rng.uniform(0.5f, 2.5f);
        double want = 0.0;
        for (int c = 0; c < 8; ++c) {
            for (int p = 0; p < 6; ++p) {
                const double d = (static_cast<double>(pred.at(c, p)) - gt.at(c, p)) / norm[p];
                want += std::fabs(d) < 1.0 ? 0.5 * d * d : std::fabs(d) - 0.5;
            }
        }
        want /= 48.0;
        CHECK(losses::smooth_l1_offsets(pred, gt, norm) == doctest::Approx(want).epsilon(1e-6));
    }
    SUBCASE("zero norm marks degenerate ground truth") {
        Tensor pred({8, 2});
        Tensor norm({2});
        norm[0] = 1.0f;  // norm[1] stays 0
        CHECK_THROWS_AS(losses::smooth_l1_offsets(pred, pred, norm), GeometryError);
    }
}

TEST_CASE("detection loss combines the terms with alpha") {
    LossWeights w;  // alpha = 5
    CHECK(losses::detection_loss(0.2, 0.1, w) == doctest::Approx(0.7).epsilon(1e-12));
    w.alpha = 0.0f;
    CHECK(losses::detection_loss(0.2, 0.1, w) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("detection loss routes gradient (1, alpha) to its terms") {
    ad::Tape tape;
    ad::Value cls = ad::leaf(tape, Tensor::scalar(0.2f));
    ad::Value off = ad::leaf(tape, Tensor::scalar(0.1f));
    LossWeights w;
    ad::Value root = losses::detection_loss(&tape, cls, off, w);
    CHECK(root.v[0] == doctest::Approx(0.7).epsilon(1e-6));
    const auto grads = tape.backward(root.id);
    CHECK(grads[static_cast<size_t>(cls.id)][0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(grads[static_cast<size_t>(off.id)][0] == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("contrastive loss anchors") {
    LossWeights w;  // margin 1.0
    SUBCASE("positives at zero distance and negatives beyond the margin cost 0") {
        Tensor a({2}, {0.0f, 0.0f});
        Tensor far({2}, {3.0f, 4.0f});  // distance 5 >= m
        PairLabels y(2, 2);
        y.mark_positive(0, 0);
        y.mark_positive(1, 1);
        CHECK(losses::contrastive_track_loss({a, far}, {a, far}, y, w) == 0.0);
    }
    SUBCASE("single positive pair at d = 0.3 costs 0.09") {
        Tensor a({1}, {0.0f});
        Tensor b({1}, {0.3f});
        PairLabels y(1, 1);
        y.mark_positive(0, 0);
        CHECK(losses::contrastive_track_loss({a}, {b}, y, w) == doctest::Approx(0.09).epsilon(1e-6));
    }
    SUBCASE("single negative pair at d = 0.3 costs 0.49") {
        Tensor a({1}, {0.0f});
        Tensor b({1}, {0.3f});
        PairLabels y(1, 1);
        CHECK(losses::contrastive_track_loss({a}, {b}, y, w) == doctest::Approx(0.49).epsilon(1e-6));
    }
    SUBCASE("width mismatch throws") {
        PairLabels y(1, 1);
        CHECK_THROWS_AS(losses::contrastive_track_loss({Tensor({3})}, {Tensor({4})}, y, w), ShapeError);
    }
}

TEST_CASE("negative pairs beyond the margin get exactly zero gradient") {
    LossWeights w;
    ad::Tape tape;
    ad::Value a = ad::leaf(tape, Tensor({2}, {0.0f, 0.0f}));
    ad::Value b = ad::leaf(tape, Tensor({2}, {3.0f, 4.0f}));  // d = 5 > m
    PairLabels y(1, 1);
    ad::Value root = losses::contrastive_track_loss(&tape, {a}, {b}, y, w);
    CHECK(root.v[0] == 0.0f);
    const auto grads = tape.backward(root.id);
    for (int i = 0; i < 2; ++i) {
        CHECK(grads[static_cast<size_t>(a.id)][i] == 0.0f);
        CHECK(grads[static_cast<size_t>(b.id)][i] == 0.0f);
    }
}

TEST_CASE("contrastive loss is zero iff positives coincide and negatives clear the margin") {
    LossWeights w;
    Tensor a({1}, {0.0f});
    Tensor b({1}, {0.5f});  // negative pair inside the margin
    PairLabels y(2, 2);
    y.mark_positive(0, 0);
    y.mark_positive(1, 1);
    const double loss = losses::contrastive_track_loss({a, b}, {a, b}, y, w);
    CHECK(loss > 0.0);  // the off-diagonal negatives sit at d = 0.5 < m
}

TEST_CASE("total loss anchors") {
    LossWeights w;  // beta 0.1
    CHECK(losses::total_loss({0.7}, {1.0}, w) == doctest::Approx(0.8).epsilon(1e-6));
    w.beta = 0.0f;
    CHECK(losses::total_loss({0.3, 0.5}, {9.0, 9.0}, w) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("total loss is a per-frame mean and permutation invariant") {
    LossWeights w;
    CHECK(losses::total_loss({0.7, 0.7}, {1.0, 1.0}, w) == doctest::Approx(0.8).epsilon(1e-6));
    const double fwd = losses::total_loss({0.1, 0.9, 0.4}, {0.2, 0.3, 0.8}, w);
    const double rev = losses::total_loss({0.4, 0.9, 0.1}, {0.8, 0.3, 0.2}, w);
    CHECK(fwd == doctest::Approx(rev).epsilon(1e-12));
}

TEST_CASE("total loss rejects empty or mismatched lists") {
    LossWeights w;
    CHECK_THROWS_AS(losses::total_loss(std::vector<double>{}, std::vector<double>{}, w), UsageError);
    CHECK_THROWS_AS(losses::total_loss({0.1}, {0.1, 0.2}, w), UsageError);
}

TEST_CASE("all losses are non-negative on random inputs") {
    Rng rng(44);
    LossWeights w;
    for (int trial = 0; trial < 10; ++trial) {
        Tensor pred({5, 5});
        Tensor gt({5, 5});
        for (int64_t i = 0; i < pred.numel(); ++i) {
            pred[i] = rng.uniform();
            gt[i] = rng.uniform() < 0.5f ? 1.0f : 0.0f;
        }
        const double dice = losses::dice_loss(pred, gt);
        CHECK(dice >= 0.0);
        CHECK(dice <= 1.0 + 1e-5);

        Tensor off_pred = Tensor::uniform({8, 4}, rng, -2.0f, 2.0f);
        Tensor off_gt = Tensor::uniform({8, 4}, rng, -2.0f, 2.0f);
        Tensor norm({4});
        for (int i = 0; i < 4; ++i) norm[i] = rng.uniform(0.5f, 2.0f);
        CHECK(losses::smooth_l1_offsets(off_pred, off_gt, norm) >= 0.0);

        std::vector<Tensor> prev = {Tensor::uniform({6}, rng), Tensor::uniform({6}, rng)};
        std::vector<Tensor> cur = {Tensor::uniform({6}, rng), Tensor::uniform({6}, rng)};
        PairLabels y(2, 2);
        y.mark_positive(0, 0);
        CHECK(losses::contrastive_track_loss(prev, cur, y, w) >= 0.0);
    }
}

TEST_CASE("pair labels reject double assignment") {
    PairLabels y(3, 3);
    y.mark_positive(0, 1);
    CHECK_THROWS_AS(y.mark_positive(0, 2), UsageError);  // row reuse
    CHECK_THROWS_AS(y.mark_positive(2, 1), UsageError);  // column reuse
    CHECK_THROWS_AS(y.mark_positive(3, 0), UsageError);  // out of range
}

TEST_CASE("loss weights validate their ranges") {
    LossWeights w;
    w.margin = 0.0f;
    CHECK_THROWS_AS(w.validate(), UsageError);
    w.margin = 1.0f;
    w.alpha = -1.0f;
    CHECK_THROWS_AS(w.validate(), UsageError);
}
