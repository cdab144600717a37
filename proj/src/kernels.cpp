#include "quadtrack/kernels.hpp"

#include <cmath>
#include <omp.h>

namespace quadtrack::kernels {

namespace {

void check_matmul_shapes(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2) throw ShapeError("matmul: left factor must be rank 2, got " + a.shape_str());
    if (b.rank() != 2 && b.rank() != 1) {
        throw ShapeError("matmul: right factor must be rank 1 or 2, got " + b.shape_str());
    }
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() + " vs " + b.shape_str());
    }
}

inline float apply_act(float v, Activation kind) {
    switch (kind) {
        case Activation::Sigmoid: return 1.0f / (1.0f + std::exp(-v));
        case Activation::Tanh: return std::tanh(v);
        case Activation::Relu: return v > 0.0f ? v : 0.0f;
    }
    return v;
}

void check_conv_shapes(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 3) throw ShapeError("conv2d: input must be [C x H x W], got " + x.shape_str());
    if (w.rank() != 4) throw ShapeError("conv2d: kernel must be [F x C x kh x kw], got " + w.shape_str());
    if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
        throw ShapeError("conv2d: bias must be [F=" + std::to_string(w.dim(0)) + "], got " + b.shape_str());
    }
    if (w.dim(1) != x.dim(0)) {
        throw ShapeError("conv2d: channel mismatch, input " + x.shape_str() + " vs kernel " + w.shape_str());
    }
    if (w.dim(2) % 2 == 0 || w.dim(3) % 2 == 0) {
        throw ShapeError("conv2d: kernel dims must be odd, got " + w.shape_str());
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_matmul_shapes(a, b);
    const int m = a.dim(0), k = a.dim(1);
    const int n = b.rank() == 2 ? b.dim(1) : 1;
    Tensor out(b.rank() == 2 ? std::vector<int>{m, n} : std::vector<int>{m});
    const float* ap = a.data();
    const float* bp = b.data();
    float* op = out.data();
#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) {
                acc += static_cast<double>(ap[static_cast<size_t>(i) * k + t]) * bp[static_cast<size_t>(t) * n + j];
            }
            op[static_cast<size_t>(i) * n + j] = static_cast<float>(acc);
        }
    }
    out.require_finite("matmul");
    return out;
}

Tensor activation(const Tensor& x, Activation kind) {
    Tensor out(x.shape());
    const int64_t n = x.numel();
    const float* xp = x.data();
    float* op = out.data();
#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (int64_t i = 0; i < n; ++i) op[i] = apply_act(xp[i], kind);
    out.require_finite("activation");
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no parts");
    const Tensor& first = parts.front();
    if (axis < 0 || axis >= first.rank()) throw ShapeError("concat: axis out of range");
    int axis_total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != first.rank()) throw ShapeError("concat: rank mismatch");
        for (int d = 0; d < first.rank(); ++d) {
            if (d != axis && p.dim(d) != first.dim(d)) {
                throw ShapeError("concat: non-axis dims differ, " + p.shape_str() + " vs " + first.shape_str());
            }
        }
        axis_total += p.dim(axis);
    }
    std::vector<int> out_shape = first.shape();
    out_shape[static_cast<size_t>(axis)] = axis_total;
    Tensor out(out_shape);

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= first.dim(d);
    for (int d = axis + 1; d < first.rank(); ++d) inner *= first.dim(d);

    int64_t offset = 0;  // running position along the output axis, in inner-blocks
    for (const Tensor& p : parts) {
        const int64_t block = p.dim(axis) * inner;
        for (int64_t o = 0; o < outer; ++o) {
            const float* src = p.data() + o * block;
            float* dst = out.data() + o * (static_cast<int64_t>(axis_total) * inner) + offset;
            for (int64_t i = 0; i < block; ++i) dst[i] = src[i];
        }
        offset += block;
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    check_conv_shapes(x, w, b);
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int ph = kh / 2, pw = kw / 2;
    Tensor out({F, H, W});
#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (int f = 0; f < F; ++f) {
        std::vector<double> row(static_cast<size_t>(W));
        for (int y = 0; y < H; ++y) {
            const double bias = b[f];
            for (int xx = 0; xx < W; ++xx) row[static_cast<size_t>(xx)] = bias;
            for (int c = 0; c < C; ++c) {
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = y + ky - ph;
                    if (iy < 0 || iy >= H) continue;
                    const float* in_row = x.data() + (static_cast<int64_t>(c) * H + iy) * W;
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = w[((static_cast<int64_t>(f) * C + c) * kh + ky) * kw + kx];
                        const int shift = kx - pw;
                        const int x0 = shift < 0 ? -shift : 0;
                        const int x1 = shift > 0 ? W - shift : W;
                        double* rp = row.data();
                        for (int xx = x0; xx < x1; ++xx) rp[xx] += wv * in_row[xx + shift];
                    }
                }
            }
            float* out_row = &out.at(f, y, 0);
            for (int xx = 0; xx < W; ++xx) out_row[xx] = static_cast<float>(row[static_cast<size_t>(xx)]);
        }
    }
    out.require_finite("conv2d");
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("global_avg_pool: input must be [C x H x W], got " + x.shape_str());
    const int C = x.dim(0);
    const int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
    Tensor out({C});
#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (int c = 0; c < C; ++c) {
        const float* p = x.data() + static_cast<int64_t>(c) * hw;
        double acc = 0.0;
        for (int64_t i = 0; i < hw; ++i) acc += p[i];
        out[c] = static_cast<float>(acc / static_cast<double>(hw));
    }
    out.require_finite("global_avg_pool");
    return out;
}

Tensor bilinear_sample(const Tensor& map, const std::vector<std::pair<float, float>>& coords) {
    if (map.rank() != 3) throw ShapeError("bilinear_sample: map must be [C x H x W], got " + map.shape_str());
    const int C = map.dim(0), H = map.dim(1), W = map.dim(2);
    const int n = static_cast<int>(coords.size());
    if (n == 0) throw ShapeError("bilinear_sample: no coordinates");
    Tensor out({C, n});
    auto pixel = [&](int c, int y, int x) -> double {
        if (x < 0 || x >= W || y < 0 || y >= H) return 0.0;
        return map.at(c, y, x);
    };
#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (int i = 0; i < n; ++i) {
        const double sx = coords[static_cast<size_t>(i)].first;
        const double sy = coords[static_cast<size_t>(i)].second;
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const double wx = sx - x0, wy = sy - y0;
        for (int c = 0; c < C; ++c) {
            const double v = (1.0 - wy) * ((1.0 - wx) * pixel(c, y0, x0) + wx * pixel(c, y0, x0 + 1)) +
                             wy * ((1.0 - wx) * pixel(c, y0 + 1, x0) + wx * pixel(c, y0 + 1, x0 + 1));
            out.at(c, i) = static_cast<float>(v);
        }
    }
    out.require_finite("bilinear_sample");
    return out;
}

namespace ref {

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_matmul_shapes(a, b);
    const int m = a.dim(0), k = a.dim(1);
    const int n = b.rank() == 2 ? b.dim(1) : 1;
    Tensor out(b.rank() == 2 ? std::vector<int>{m, n} : std::vector<int>{m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) {
                acc += static_cast<double>(a[static_cast<size_t>(i) * k + t]) * b[static_cast<size_t>(t) * n + j];
            }
            out[static_cast<size_t>(i) * n + j] = static_cast<float>(acc);
        }
    }
    return out;
}

Tensor activation(const Tensor& x, Activation kind) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = apply_act(x[i], kind);
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    check_conv_shapes(x, w, b);
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int ph = kh / 2, pw = kw / 2;
    Tensor out({F, H, W});
    for (int f = 0; f < F; ++f) {
        for (int y = 0; y < H; ++y) {
            for (int xx = 0; xx < W; ++xx) {
                double acc = b[f];
                for (int c = 0; c < C; ++c) {
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = y + ky - ph;
                            const int ix = xx + kx - pw;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += static_cast<double>(w[((static_cast<int64_t>(f) * C + c) * kh + ky) * kw + kx]) *
                                   x.at(c, iy, ix);
                        }
                    }
                }
                out.at(f, y, xx) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("global_avg_pool: input must be [C x H x W], got " + x.shape_str());
    const int C = x.dim(0);
    const int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
    Tensor out({C});
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        const float* p = x.data() + static_cast<int64_t>(c) * hw;
        for (int64_t i = 0; i < hw; ++i) acc += p[i];
        out[c] = static_cast<float>(acc / static_cast<double>(hw));
    }
    return out;
}

Tensor bilinear_sample(const Tensor& map, const std::vector<std::pair<float, float>>& coords) {
    if (map.rank() != 3) throw ShapeError("bilinear_sample: map must be [C x H x W], got " + map.shape_str());
    const int C = map.dim(0), H = map.dim(1), W = map.dim(2);
    const int n = static_cast<int>(coords.size());
    if (n == 0) throw ShapeError("bilinear_sample: no coordinates");
    Tensor out({C, n});
    auto pixel = [&](int c, int y, int x) -> double {
        if (x < 0 || x >= W || y < 0 || y >= H) return 0.0;
        return map.at(c, y, x);
    };
    for (int i = 0; i < n; ++i) {
        const double sx = coords[static_cast<size_t>(i)].first;
        const double sy = coords[static_cast<size_t>(i)].second;
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const double wx = sx - x0, wy = sy - y0;
        for (int c = 0; c < C; ++c) {
            const double v = (1.0 - wy) * ((1.0 - wx) * pixel(c, y0, x0) + wx * pixel(c, y0, x0 + 1)) +
                             wy * ((1.0 - wx) * pixel(c, y0 + 1, x0) + wx * pixel(c, y0 + 1, x0 + 1));
            out.at(c, i) = static_cast<float>(v);
        }
    }
    return out;
}

}  // namespace ref

}  // namespace quadtrack::kernels
