#include "quadtrack/descriptor.hpp"

#include <cmath>
#include <string>

namespace quadtrack::descriptor {

using kernels::Activation;

void AppearanceHeadParams::validate() const {
    for (const Tensor* w : {&w1, &w2, &w3}) {
        if (w->rank() != 4 || w->dim(2) != 3 || w->dim(3) != 3) {
            throw ShapeError("AppearanceHeadParams: conv kernels must be [F x C x 3 x 3], got " + w->shape_str());
        }
    }
    if (w2.dim(1) != w1.dim(0) || w3.dim(1) != w2.dim(0)) {
        throw ShapeError("AppearanceHeadParams: channel plan broken");
    }
    if (b1.dim(0) != w1.dim(0) || b2.dim(0) != w2.dim(0) || b3.dim(0) != w3.dim(0)) {
        throw ShapeError("AppearanceHeadParams: bias widths mismatch");
    }
}

AppearanceHeadParams AppearanceHeadParams::seeded(int c_in, Rng& rng, int c1, int c2, int out) {
    AppearanceHeadParams p;
    auto init = [&rng](int f, int c) {
        // He-style fan-in scaling keeps activations in range for relu stacks
        const float scale = std::sqrt(2.0f / (static_cast<float>(c) * 9.0f));
        Tensor w({f, c, 3, 3});
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-scale, scale);
        return w;
    };
    p.w1 = init(c1, c_in);
    p.b1 = Tensor({c1});
    p.w2 = init(c2, c1);
    p.b2 = Tensor({c2});
    p.w3 = init(out, c2);
    p.b3 = Tensor({out});
    return p;
}

void GeometryEmbedParams::validate() const {
    if (w1.rank() != 2 || w1.dim(1) != 8) throw ShapeError("GeometryEmbedParams: w1 must be [hidden x 8]");
    if (w2.rank() != 2 || w2.dim(1) != w1.dim(0)) throw ShapeError("GeometryEmbedParams: w2 must be [out x hidden]");
    if (b1.dim(0) != w1.dim(0) || b2.dim(0) != w2.dim(0)) throw ShapeError("GeometryEmbedParams: bias widths mismatch");
}

GeometryEmbedParams GeometryEmbedParams::zeros(int hidden, int out) {
    GeometryEmbedParams p;
    p.w1 = Tensor({hidden, 8});
    p.b1 = Tensor({hidden});
    p.w2 = Tensor({out, hidden});
    p.b2 = Tensor({out});
    return p;
}

GeometryEmbedParams GeometryEmbedParams::seeded(Rng& rng, int hidden, int out, float scale) {
    GeometryEmbedParams p = zeros(hidden, out);
    for (Tensor* w : {&p.w1, &p.w2}) {
        for (int64_t i = 0; i < w->numel(); ++i) (*w)[i] = rng.uniform(-scale, scale);
    }
    return p;
}

GeometryEmbedNodes GeometryEmbedNodes::bind(ad::Tape* tape, const GeometryEmbedParams& p) {
    p.validate();
    if (!tape) {
        return GeometryEmbedNodes{ad::constant(p.w1), ad::constant(p.b1), ad::constant(p.w2), ad::constant(p.b2)};
    }
    return GeometryEmbedNodes{ad::leaf(*tape, p.w1), ad::leaf(*tape, p.b1), ad::leaf(*tape, p.w2),
                              ad::leaf(*tape, p.b2)};
}

Tensor Agd::appearance_part() const {
    Tensor out({appearance_width});
    for (int i = 0; i < appearance_width; ++i) out[i] = values[i];
    return out;
}

Tensor Agd::geometry_part() const {
    const int gw = values.dim(0) - appearance_width;
    Tensor out({gw});
    for (int i = 0; i < gw; ++i) out[i] = values[appearance_width + i];
    return out;
}

Tensor appearance_feature(const Tensor& feature_map, const geometry::Quad& q, const AppearanceHeadParams& p,
                          int roi_w, int roi_h) {
    p.validate();
    if (feature_map.rank() != 3) {
        throw ShapeError("appearance_feature: feature map must be [C x H x W], got " + feature_map.shape_str());
    }
    if (feature_map.dim(0) != p.in_channels()) {
        throw ShapeError("appearance_feature: map channels " + std::to_string(feature_map.dim(0)) +
                         " do not match head input " + std::to_string(p.in_channels()));
    }
    const auto grid = geometry::roi_grid(q, roi_w, roi_h);
    Tensor patch = kernels::bilinear_sample(feature_map, grid);  // [C x roi_h*roi_w]
    patch = Tensor({feature_map.dim(0), roi_h, roi_w}, patch.vec());
    Tensor a1 = kernels::activation(kernels::conv2d(patch, p.w1, p.b1), Activation::Relu);
    Tensor a2 = kernels::activation(kernels::conv2d(a1, p.w2, p.b2), Activation::Relu);
    Tensor a3 = kernels::activation(kernels::conv2d(a2, p.w3, p.b3), Activation::Relu);
    return kernels::global_avg_pool(a3);
}

Tensor pooled_appearance(const Tensor& feature_map, const geometry::Quad& q, int roi_w, int roi_h) {
    if (feature_map.rank() != 3) {
        throw ShapeError("pooled_appearance: feature map must be [C x H x W], got " + feature_map.shape_str());
    }
    const auto grid = geometry::roi_grid(q, roi_w, roi_h);
    Tensor patch = kernels::bilinear_sample(feature_map, grid);
    patch = Tensor({feature_map.dim(0), roi_h, roi_w}, patch.vec());
    return kernels::global_avg_pool(patch);
}

Tensor normalized_coords(const geometry::Quad& q, double frame_w, double frame_h) {
    if (frame_w <= 0.0 || frame_h <= 0.0) throw UsageError("normalized_coords: frame dims must be > 0");
    Tensor g({8});
    for (int k = 0; k < 4; ++k) {
        g[2 * k] = static_cast<float>(q.v[static_cast<size_t>(k)].x / frame_w);
        g[2 * k + 1] = static_cast<float>(q.v[static_cast<size_t>(k)].y / frame_h);
    }
    return g;
}

ad::Value geometry_feature(ad::Tape* tape, ad::Value g, const GeometryEmbedNodes& p) {
    if (g.v.rank() != 1 || g.v.dim(0) != 8) {
        throw ShapeError("geometry_feature: coordinate vector must be [8], got " + g.v.shape_str());
    }
    ad::Value hidden = ad::activation(tape, ad::add(tape, ad::matmul(tape, p.w1, g), p.b1), Activation::Relu);
    return ad::add(tape, ad::matmul(tape, p.w2, hidden), p.b2);
}

Tensor geometry_feature(const geometry::Quad& q, double frame_w, double frame_h, const GeometryEmbedParams& p) {
    GeometryEmbedNodes nodes = GeometryEmbedNodes::bind(nullptr, p);
    return geometry_feature(nullptr, ad::constant(normalized_coords(q, frame_w, frame_h)), nodes).v;
}

Agd make_agd(const Tensor& f_a, const Tensor& f_g) {
    if (f_a.rank() != 1 || f_g.rank() != 1) throw ShapeError("make_agd: parts must be rank-1 vectors");
    Agd agd;
    agd.values = kernels::concat({f_a, f_g}, 0);
    agd.appearance_width = f_a.dim(0);
    return agd;
}

Eagd estimate_eagd(const Agd& agd, const Tensor& h_prev, int mask, const recurrent::GruParams& p) {
    if (mask != 0 && mask != 1) throw UsageError("estimate_eagd: mask must be 0 or 1");
    const Tensor h_in = mask == 1 ? h_prev : Tensor({p.hidden()});
    auto [out, h] = recurrent::gru_step(agd.values, h_in, p);
    return Eagd{out, h};
}

}  // namespace quadtrack::descriptor
