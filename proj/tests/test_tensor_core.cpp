#include <doctest.h>

#include <cmath>

#include "quadtrack/kernels.hpp"
#include "quadtrack/tensor.hpp"

using namespace quadtrack;
using kernels::Activation;

namespace {

// independent oracles, straight from the definitions

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += static_cast<double>(a.at(i, t)) * b.at(t, j);
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    Tensor out({F, H, W});
    for (int f = 0; f < F; ++f)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                double acc = b[f];
                for (int c = 0; c < C; ++c)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = y + ky - kh / 2, ix = xx + kx - kw / 2;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += static_cast<double>(w[((static_cast<int64_t>(f) * C + c) * kh + ky) * kw + kx]) *
                                   x.at(c, iy, ix);
                        }
                out.at(f, y, xx) = static_cast<float>(acc);
            }
    return out;
}

double bilinear_oracle(const Tensor& map, int c, double sx, double sy) {
    const int H = map.dim(1), W = map.dim(2);
    auto px = [&](int y, int x) -> double {
        if (x < 0 || x >= W || y < 0 || y >= H) return 0.0;
        return map.at(c, y, x);
    };
    const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
    const double wx = sx - x0, wy = sy - y0;
    return (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x0 + 1)) +
           wy * ((1 - wx) * px(y0 + 1, x0) + wx * px(y0 + 1, x0 + 1));
}

}  // namespace

TEST_CASE("tensor shape invariants") {
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0f, 2.0f}), ShapeError);
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.shape_str() == "[2x3]");
}

TEST_CASE("matmul identity and zero") {
    Rng rng(42);
    Tensor a = Tensor::uniform({3, 3}, rng);
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0f;
    Tensor prod = kernels::matmul(eye, a);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(prod[i] == a[i]);

    Tensor zero({3, 3});
    Tensor zprod = kernels::matmul(zero, a);
    for (int64_t i = 0; i < zprod.numel(); ++i) CHECK(zprod[i] == 0.0f);
}

TEST_CASE("matmul matches the naive triple-loop oracle") {
    Rng rng(7);
    Tensor a = Tensor::uniform({4, 5}, rng);
    Tensor b = Tensor::uniform({5, 3}, rng);
    Tensor got = kernels::matmul(a, b);
    Tensor want = naive_matmul(a, b);
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(std::fabs(got[i] - want[i]) < 1e-6);
}

TEST_CASE("matmul shape errors") {
    Rng rng(1);
    CHECK_THROWS_AS(kernels::matmul(Tensor::uniform({2, 3}, rng), Tensor::uniform({4, 2}, rng)), ShapeError);
}

TEST_CASE("matmul associativity within 1e-4 relative") {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = Tensor::uniform({4, 6}, rng);
        Tensor b = Tensor::uniform({6, 5}, rng);
        Tensor c = Tensor::uniform({5, 3}, rng);
        Tensor left = kernels::matmul(kernels::matmul(a, b), c);
        Tensor right = kernels::matmul(a, kernels::matmul(b, c));
        for (int64_t i = 0; i < left.numel(); ++i) {
            const double denom = std::max({std::fabs(static_cast<double>(left[i])),
                                           std::fabs(static_cast<double>(right[i])), 1e-3});
            CHECK(std::fabs(left[i] - right[i]) / denom < 1e-4);
        }
    }
}

TEST_CASE("activations hit the anchor values and ranges") {
    Tensor x({5}, {0.0f, -3.2f, 3.2f, -10.0f, 10.0f});
    Tensor sig = kernels::activation(x, Activation::Sigmoid);
    CHECK(sig[0] == doctest::Approx(0.5).epsilon(1e-7));
    Tensor th = kernels::activation(x, Activation::Tanh);
    CHECK(th[0] == 0.0f);
    Tensor re = kernels::activation(x, Activation::Relu);
    CHECK(re[1] == 0.0f);
    CHECK(re[2] == 3.2f);
    for (int64_t i = 0; i < x.numel(); ++i) {
        CHECK(sig[i] >= 0.0f);
        CHECK(sig[i] <= 1.0f);
        // f32 saturates tanh/sigmoid at extreme inputs; the open interval
        // holds away from saturation
        CHECK(th[i] >= -1.0f);
        CHECK(th[i] <= 1.0f);
        CHECK(re[i] >= 0.0f);
    }
    Tensor moderate({3}, {-3.0f, 0.5f, 3.0f});
    Tensor thm = kernels::activation(moderate, Activation::Tanh);
    Tensor sgm = kernels::activation(moderate, Activation::Sigmoid);
    for (int64_t i = 0; i < moderate.numel(); ++i) {
        CHECK(thm[i] > -1.0f);
        CHECK(thm[i] < 1.0f);
        CHECK(sgm[i] > 0.0f);
        CHECK(sgm[i] < 1.0f);
    }
}

TEST_CASE("concat forms the 136-wide descriptor layout") {
    Rng rng(3);
    Tensor v = Tensor::uniform({128}, rng);
    Tensor w = Tensor::uniform({8}, rng);
    Tensor cat = kernels::concat({v, w}, 0);
    REQUIRE(cat.dim(0) == 136);
    for (int i = 0; i < 128; ++i) CHECK(cat[i] == v[i]);
    for (int i = 0; i < 8; ++i) CHECK(cat[128 + i] == w[i]);
}

TEST_CASE("concat of one part is the identity") {
    Rng rng(4);
    Tensor x = Tensor::uniform({7}, rng);
    Tensor cat = kernels::concat({x}, 0);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(cat[i] == x[i]);
}

TEST_CASE("concat then slicing recovers every part bit-exactly") {
    Rng rng(5);
    std::vector<Tensor> parts = {Tensor::uniform({4}, rng), Tensor::uniform({6}, rng), Tensor::uniform({3}, rng)};
    Tensor cat = kernels::concat(parts, 0);
    int64_t off = 0;
    for (const Tensor& p : parts) {
        for (int64_t i = 0; i < p.numel(); ++i) CHECK(cat[off + i] == p[i]);
        off += p.numel();
    }
    CHECK(off == cat.numel());
}

TEST_CASE("concat rejects mismatched non-axis dims") {
    CHECK_THROWS_AS(kernels::concat({Tensor({2, 3}), Tensor({2, 4})}, 0), ShapeError);
    CHECK_NOTHROW(kernels::concat({Tensor({2, 3}), Tensor({2, 4})}, 1));
}

TEST_CASE("conv2d 1x1 unit kernel is the identity") {
    Rng rng(6);
    Tensor x = Tensor::uniform({2, 4, 5}, rng);
    Tensor w({2, 2, 1, 1});
    w[0 * 2 + 0] = 1.0f;  // f0 reads c0
    w[1 * 2 + 1] = 1.0f;  // f1 reads c1
    Tensor b({2});
    Tensor out = kernels::conv2d(x, w, b);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("conv2d delta-center 3x3 kernel is the identity") {
    Rng rng(8);
    Tensor x = Tensor::uniform({1, 5, 6}, rng);
    Tensor w({1, 1, 3, 3});
    w[4] = 1.0f;  // center tap
    Tensor b({1});
    Tensor out = kernels::conv2d(x, w, b);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("conv2d matches the direct six-loop oracle") {
    Rng rng(10);
    Tensor x = Tensor::uniform({2, 5, 5}, rng);
    Tensor w = Tensor::uniform({3, 2, 3, 3}, rng);
    Tensor b = Tensor::uniform({3}, rng);
    Tensor got = kernels::conv2d(x, w, b);
    Tensor want = naive_conv2d(x, w, b);
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(std::fabs(got[i] - want[i]) < 1e-5);
}

TEST_CASE("conv2d validates shapes") {
    Rng rng(2);
    Tensor x = Tensor::uniform({2, 4, 4}, rng);
    CHECK_THROWS_AS(kernels::conv2d(x, Tensor::uniform({3, 1, 3, 3}, rng), Tensor({3})), ShapeError);
    CHECK_THROWS_AS(kernels::conv2d(x, Tensor::uniform({3, 2, 2, 2}, rng), Tensor({3})), ShapeError);
}

TEST_CASE("global_avg_pool on constant and 1x1 maps") {
    Tensor c = Tensor::full({3, 4, 5}, 2.5f);
    Tensor pooled = kernels::global_avg_pool(c);
    for (int i = 0; i < 3; ++i) CHECK(pooled[i] == doctest::Approx(2.5).epsilon(1e-7));

    Rng rng(11);
    Tensor tiny = Tensor::uniform({4, 1, 1}, rng);
    Tensor pt = kernels::global_avg_pool(tiny);
    for (int i = 0; i < 4; ++i) CHECK(pt[i] == tiny[i]);
}

TEST_CASE("global_avg_pool matches the summation oracle") {
    Rng rng(12);
    Tensor x = Tensor::uniform({4, 8, 64}, rng);
    Tensor pooled = kernels::global_avg_pool(x);
    for (int c = 0; c < 4; ++c) {
        double acc = 0.0;
        for (int y = 0; y < 8; ++y)
            for (int xx = 0; xx < 64; ++xx) acc += x.at(c, y, xx);
        CHECK(std::fabs(pooled[c] - acc / (8.0 * 64.0)) < 1e-6);
    }
}

TEST_CASE("bilinear_sample at integer coords returns exact pixels") {
    Rng rng(13);
    Tensor map = Tensor::uniform({2, 4, 6}, rng);
    Tensor out = kernels::bilinear_sample(map, {{3.0f, 2.0f}, {0.0f, 0.0f}});
    CHECK(out.at(0, 0) == map.at(0, 2, 3));
    CHECK(out.at(1, 0) == map.at(1, 2, 3));
    CHECK(out.at(0, 1) == map.at(0, 0, 0));
}

TEST_CASE("bilinear_sample midpoint of 0 and 1 is 0.5") {
    Tensor map({1, 1, 2}, {0.0f, 1.0f});
    Tensor out = kernels::bilinear_sample(map, {{0.5f, 0.0f}});
    CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("bilinear_sample matches the 4-neighbor oracle, including the border") {
    Rng rng(14);
    Tensor map = Tensor::uniform({3, 7, 9}, rng);
    Rng crng(15);
    std::vector<std::pair<float, float>> coords;
    for (int i = 0; i < 50; ++i) {
        // deliberately covers out-of-bounds coordinates
        coords.emplace_back(crng.uniform(-2.0f, 10.0f), crng.uniform(-2.0f, 8.0f));
    }
    Tensor out = kernels::bilinear_sample(map, coords);
    for (int c = 0; c < 3; ++c) {
        for (size_t i = 0; i < coords.size(); ++i) {
            CHECK(std::fabs(out.at(c, static_cast<int>(i)) -
                            bilinear_oracle(map, c, coords[i].first, coords[i].second)) < 1e-6);
        }
    }
}

TEST_CASE("parallel kernels match the serial reference bit-exactly at any thread cap") {
    Rng rng(16);
    Tensor a = Tensor::uniform({9, 17}, rng);
    Tensor b = Tensor::uniform({17, 11}, rng);
    Tensor x = Tensor::uniform({3, 12, 20}, rng);
    Tensor w = Tensor::uniform({5, 3, 3, 3}, rng);
    Tensor bias = Tensor::uniform({5}, rng);
    std::vector<std::pair<float, float>> coords;
    Rng crng(17);
    for (int i = 0; i < 33; ++i) coords.emplace_back(crng.uniform(0.0f, 19.0f), crng.uniform(0.0f, 11.0f));

    const Tensor mm_ref = kernels::ref::matmul(a, b);
    const Tensor cv_ref = kernels::ref::conv2d(x, w, bias);
    const Tensor gp_ref = kernels::ref::global_avg_pool(x);
    const Tensor bs_ref = kernels::ref::bilinear_sample(x, coords);

    for (int threads : {1, 2, 4}) {
        set_worker_threads(threads);
        const Tensor mm = kernels::matmul(a, b);
        const Tensor cv = kernels::conv2d(x, w, bias);
        const Tensor gp = kernels::global_avg_pool(x);
        const Tensor bs = kernels::bilinear_sample(x, coords);
        for (int64_t i = 0; i < mm.numel(); ++i) CHECK(mm[i] == mm_ref[i]);
        for (int64_t i = 0; i < cv.numel(); ++i) CHECK(cv[i] == cv_ref[i]);
        for (int64_t i = 0; i < gp.numel(); ++i) CHECK(gp[i] == gp_ref[i]);
        for (int64_t i = 0; i < bs.numel(); ++i) CHECK(bs[i] == bs_ref[i]);
    }
    set_worker_threads(0);
}
