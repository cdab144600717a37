#include <doctest.h>

#include <cmath>

#include "quadtrack/gradcheck.hpp"
#include "quadtrack/tape.hpp"

using namespace quadtrack;

TEST_CASE("backward of sum gives all-ones") {
    Rng rng(21);
    ad::Tape tape;
    ad::Value x = ad::leaf(tape, Tensor::uniform({6}, rng));
    ad::Value root = ad::sum(&tape, x);
    const auto grads = tape.backward(root.id);
    for (int i = 0; i < 6; ++i) CHECK(grads[static_cast<size_t>(x.id)][i] == 1.0f);
}

TEST_CASE("backward of squared norm gives 2x") {
    Rng rng(22);
    Tensor xv = Tensor::uniform({5}, rng);
    ad::Tape tape;
    ad::Value x = ad::leaf(tape, xv);
    ad::Value root = ad::sum(&tape, ad::mul(&tape, x, x));
    const auto grads = tape.backward(root.id);
    for (int i = 0; i < 5; ++i) {
        CHECK(grads[static_cast<size_t>(x.id)][i] == doctest::Approx(2.0f * xv[i]).epsilon(1e-6));
    }
}

TEST_CASE("backward requires a scalar root") {
    ad::Tape tape;
    ad::Value x = ad::leaf(tape, Tensor({3}));
    ad::Value y = ad::affine(&tape, x, 2.0f, 0.0f);
    CHECK_THROWS_AS(tape.backward(y.id), UsageError);
}

TEST_CASE("nodes the root does not depend on get zero gradients") {
    Rng rng(23);
    ad::Tape tape;
    ad::Value x = ad::leaf(tape, Tensor::uniform({4}, rng));
    ad::Value unused = ad::leaf(tape, Tensor::uniform({7}, rng));
    ad::Value root = ad::sum(&tape, x);
    const auto grads = tape.backward(root.id);
    REQUIRE(grads[static_cast<size_t>(unused.id)].numel() == 7);
    for (int i = 0; i < 7; ++i) CHECK(grads[static_cast<size_t>(unused.id)][i] == 0.0f);
}

TEST_CASE("gradient accumulates over reused nodes") {
    // y = x + x: dy/dx = 2
    ad::Tape tape;
    ad::Value x = ad::leaf(tape, Tensor({3}, {1.0f, 2.0f, 3.0f}));
    ad::Value root = ad::sum(&tape, ad::add(&tape, x, x));
    const auto grads = tape.backward(root.id);
    for (int i = 0; i < 3; ++i) CHECK(grads[static_cast<size_t>(x.id)][i] == 2.0f);
}

TEST_CASE("untraced ops run without a tape") {
    Rng rng(24);
    Tensor a = Tensor::uniform({4}, rng), b = Tensor::uniform({4}, rng);
    ad::Value out = ad::mul(nullptr, ad::constant(a), ad::constant(b));
    CHECK(out.id == ad::kUntraced);
    for (int i = 0; i < 4; ++i) CHECK(out.v[i] == a[i] * b[i]);
}

TEST_CASE("ops reject shape mismatches") {
    CHECK_THROWS_AS(ad::add(nullptr, ad::constant(Tensor({3})), ad::constant(Tensor({4}))), ShapeError);
    CHECK_THROWS_AS(ad::mul(nullptr, ad::constant(Tensor({2, 2})), ad::constant(Tensor({4}))), ShapeError);
}

TEST_CASE("every differentiable op and loss passes finite differences") {
    for (uint64_t seed : {1ull, 17ull}) {
        const auto rows = gradcheck::run_all(seed);
        for (const auto& row : rows) {
            INFO(row.name, " seed ", seed, " err ", row.max_rel_err);
            CHECK(row.pass);
        }
    }
}

TEST_CASE("a deliberately perturbed analytic gradient is reported as failure") {
    const auto rows = gradcheck::run_all(1, true);
    bool saw_fixture = false;
    for (const auto& row : rows) {
        if (row.name.rfind("fixture.", 0) == 0) {
            saw_fixture = true;
            CHECK_FALSE(row.pass);
        }
    }
    CHECK(saw_fixture);
}

TEST_CASE("gradcheck rows are identical across repeated runs") {
    const auto a = gradcheck::run_all(5);
    const auto b = gradcheck::run_all(5);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(a[i].max_rel_err == b[i].max_rel_err);
    }
}

TEST_CASE("parameter sets enforce unique names and fixed shapes") {
    ad::ParameterSet set;
    set.add("w", Tensor({2, 2}));
    CHECK_THROWS_AS(set.add("w", Tensor({1})), UsageError);
    CHECK_THROWS_AS(set.set("w", Tensor({3, 3})), ShapeError);
    CHECK_THROWS_AS(set.get("missing"), UsageError);
    set.set("w", Tensor::full({2, 2}, 3.0f));
    CHECK(set.get("w")[0] == 3.0f);
}
