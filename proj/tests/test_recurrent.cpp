#include <doctest.h>

#include <cmath>

#include "quadtrack/recurrent.hpp"

using namespace quadtrack;
using recurrent::ConvLstmParams;
using recurrent::ConvLstmState;
using recurrent::GruParams;

TEST_CASE("gru with zero parameters halves the hidden state") {
    // z = sigmoid(0) = 0.5, cand = tanh(0) = 0, so h' = 0.5 * h_prev
    GruParams p = GruParams::zeros(4, 3);
    Rng rng(51);
    Tensor x = Tensor::uniform({4}, rng);
    Tensor h_prev = Tensor::uniform({3}, rng);
    auto [out, h] = recurrent::gru_step(x, h_prev, p);
    for (int i = 0; i < 3; ++i) {
        CHECK(h[i] == doctest::Approx(0.5f * h_prev[i]).epsilon(1e-7));
        CHECK(out[i] == h[i]);
    }
}

TEST_CASE("gru at the origin stays at the origin") {
    GruParams p = GruParams::zeros(4, 3);
    auto [out, h] = recurrent::gru_step(Tensor({4}), Tensor({3}), p);
    for (int i = 0; i < 3; ++i) CHECK(h[i] == 0.0f);
    (void)out;
}

TEST_CASE("gru rejects mismatched shapes") {
    GruParams p = GruParams::zeros(4, 3);
    CHECK_THROWS_AS(recurrent::gru_step(Tensor({5}), Tensor({3}), p), ShapeError);
    CHECK_THROWS_AS(recurrent::gru_step(Tensor({4}), Tensor({2}), p), ShapeError);
}

TEST_CASE("gru output is a pure function of its inputs") {
    Rng rng(52);
    GruParams p = GruParams::seeded(5, 5, rng);
    Tensor x = Tensor::uniform({5}, rng);
    Tensor h_prev = Tensor::uniform({5}, rng);
    auto [a_out, a_h] = recurrent::gru_step(x, h_prev, p);
    auto [b_out, b_h] = recurrent::gru_step(x, h_prev, p);
    for (int i = 0; i < 5; ++i) {
        CHECK(a_out[i] == b_out[i]);
        CHECK(a_h[i] == b_h[i]);
    }
}

TEST_CASE("resetting the hidden state equals a fresh start") {
    Rng rng(53);
    GruParams p = GruParams::seeded(6, 6, rng);
    Tensor x = Tensor::uniform({6}, rng);
    Tensor zeros({6});
    auto [fresh_out, fresh_h] = recurrent::gru_step(x, zeros, p);
    // caller-side mask semantics: zeroing h_prev is exactly the fresh start
    Tensor h_prev = Tensor::uniform({6}, rng);
    for (int64_t i = 0; i < h_prev.numel(); ++i) h_prev[i] *= 0.0f;
    auto [masked_out, masked_h] = recurrent::gru_step(x, h_prev, p);
    for (int i = 0; i < 6; ++i) {
        CHECK(fresh_out[i] == masked_out[i]);
        CHECK(fresh_h[i] == masked_h[i]);
    }
}

TEST_CASE("convlstm from rest with zero parameters emits zeros") {
    ConvLstmParams p = ConvLstmParams::zeros(2, 2, 3);
    ConvLstmState s = ConvLstmState::zeros(2, 5, 6);
    Tensor x({2, 5, 6});
    const auto out = recurrent::convlstm_step(x, s, p);
    for (int64_t i = 0; i < out.f.numel(); ++i) CHECK(out.f[i] == 0.0f);
}

TEST_CASE("convlstm gates stay in range on random inputs") {
    Rng rng(54);
    ConvLstmParams p = ConvLstmParams::seeded(3, 3, rng, 3, 0.5f);
    ConvLstmState s = ConvLstmState::zeros(3, 6, 7);
    Tensor x = Tensor::uniform({3, 6, 7}, rng);
    for (int t = 0; t < 4; ++t) {
        const auto out = recurrent::convlstm_step(x, s, p);
        s = out.state;
        for (int64_t i = 0; i < s.h.numel(); ++i) {
            CHECK(s.h[i] > -1.0f);
            CHECK(s.h[i] < 1.0f);
        }
    }
}

namespace {

// scalar LSTM cell: the per-pixel oracle for 1x1 kernels
struct ScalarLstm {
    double c = 0.0, h = 0.0;
    void step(double x, double wi_x, double wi_h, double bi, double wf_x, double wf_h, double bf, double wo_x,
              double wo_h, double bo, double wc_x, double wc_h, double bc) {
        auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
        const double i = sig(wi_x * x + wi_h * h + bi);
        const double f = sig(wf_x * x + wf_h * h + bf);
        const double o = sig(wo_x * x + wo_h * h + bo);
        const double g = std::tanh(wc_x * x + wc_h * h + bc);
        c = f * c + i * g;
        h = o * std::tanh(c);
    }
};

}  // namespace

TEST_CASE("convlstm with 1x1 kernels matches the per-pixel scalar oracle") {
    Rng rng(55);
    ConvLstmParams p = ConvLstmParams::seeded(1, 1, rng, 1, 0.8f);
    for (Tensor* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_c}) (*b)[0] = rng.uniform(-0.3f, 0.3f);
    const int H = 4, W = 5;
    ConvLstmState s = ConvLstmState::zeros(1, H, W);
    std::vector<Tensor> inputs;
    for (int t = 0; t < 3; ++t) inputs.push_back(Tensor::uniform({1, H, W}, rng));

    // library recurrence
    std::vector<Tensor> outs;
    ConvLstmState state = s;
    for (const Tensor& x : inputs) {
        const auto out = recurrent::convlstm_step(x, state, p);
        outs.push_back(out.f);
        state = out.state;
    }

    // independent per-location scalar recurrence
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            ScalarLstm cell;
            for (int t = 0; t < 3; ++t) {
                cell.step(inputs[static_cast<size_t>(t)].at(0, y, x), p.w_i[0], p.w_i[1], p.b_i[0], p.w_f[0],
                          p.w_f[1], p.b_f[0], p.w_o[0], p.w_o[1], p.b_o[0], p.w_c[0], p.w_c[1], p.b_c[0]);
                CHECK(std::fabs(outs[static_cast<size_t>(t)].at(0, y, x) - cell.h) < 1e-6);
            }
        }
    }
}

TEST_CASE("convlstm converges under constant input") {
    Rng rng(56);
    ConvLstmParams p = ConvLstmParams::seeded(2, 2, rng, 3, 0.2f);
    Tensor x = Tensor::uniform({2, 5, 5}, rng);
    ConvLstmState s = ConvLstmState::zeros(2, 5, 5);
    double prev_delta = -1.0;
    Tensor prev_h = s.h;
    // burn in, then the sup-norm step size must be non-increasing
    for (int t = 0; t < 80; ++t) {
        const auto out = recurrent::convlstm_step(x, s, p);
        s = out.state;
        double delta = 0.0;
        for (int64_t i = 0; i < s.h.numel(); ++i) {
            delta = std::max(delta, std::fabs(static_cast<double>(s.h[i]) - prev_h[i]));
        }
        prev_h = s.h;
        if (t >= 50) {
            if (prev_delta >= 0.0) CHECK(delta <= prev_delta + 1e-9);
            prev_delta = delta;
        }
    }
}

TEST_CASE("convlstm validates state and kernel shapes") {
    ConvLstmParams p = ConvLstmParams::zeros(2, 3, 3);
    ConvLstmState s = ConvLstmState::zeros(3, 4, 4);
    CHECK_THROWS_AS(recurrent::convlstm_step(Tensor({2, 5, 5}), s, p), ShapeError);
    CHECK_THROWS_AS(recurrent::convlstm_step(Tensor({1, 4, 4}), s, p), ShapeError);
    ConvLstmParams bad = ConvLstmParams::zeros(2, 3, 3);
    bad.w_f = Tensor({3, 5, 5, 5});
    CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("gru parameter shapes are validated") {
    GruParams p = GruParams::zeros(4, 3);
    p.w_r = Tensor({3, 6});
    CHECK_THROWS_AS(p.validate(), ShapeError);
}
