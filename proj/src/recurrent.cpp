#include "quadtrack/recurrent.hpp"

#include <cmath>
#include <string>

namespace quadtrack::recurrent {

using kernels::Activation;

void GruParams::validate() const {
    const int d = b_z.dim(0);
    auto check_w = [&](const Tensor& w, const char* name) {
        if (w.rank() != 2 || w.dim(0) != d || w.dim(1) <= d) {
            throw ShapeError(std::string("GruParams: ") + name + " must be [D x (D_in + D)], got " + w.shape_str());
        }
        if (w.dim(1) != w_z.dim(1)) throw ShapeError("GruParams: inconsistent gate widths");
    };
    check_w(w_z, "w_z");
    check_w(w_r, "w_r");
    check_w(w_h, "w_h");
    for (const Tensor* b : {&b_z, &b_r, &b_h}) {
        if (b->rank() != 1 || b->dim(0) != d) throw ShapeError("GruParams: bias width mismatch");
    }
}

GruParams GruParams::zeros(int d_in, int d) {
    GruParams p;
    p.w_z = Tensor({d, d_in + d});
    p.w_r = Tensor({d, d_in + d});
    p.w_h = Tensor({d, d_in + d});
    p.b_z = Tensor({d});
    p.b_r = Tensor({d});
    p.b_h = Tensor({d});
    return p;
}

GruParams GruParams::seeded(int d_in, int d, Rng& rng, float scale) {
    GruParams p = zeros(d_in, d);
    for (Tensor* w : {&p.w_z, &p.w_r, &p.w_h}) {
        for (int64_t i = 0; i < w->numel(); ++i) (*w)[i] = rng.uniform(-scale, scale);
    }
    return p;
}

GruNodes GruNodes::bind(ad::Tape* tape, const GruParams& p) {
    p.validate();
    if (!tape) {
        return GruNodes{ad::constant(p.w_z), ad::constant(p.w_r), ad::constant(p.w_h),
                        ad::constant(p.b_z), ad::constant(p.b_r), ad::constant(p.b_h)};
    }
    return GruNodes{ad::leaf(*tape, p.w_z), ad::leaf(*tape, p.w_r), ad::leaf(*tape, p.w_h),
                    ad::leaf(*tape, p.b_z), ad::leaf(*tape, p.b_r), ad::leaf(*tape, p.b_h)};
}

GruStep gru_step(ad::Tape* tape, ad::Value x, ad::Value h_prev, const GruNodes& p) {
    const int d = p.b_z.v.dim(0);
    const int d_in = p.w_z.v.dim(1) - d;
    if (x.v.rank() != 1 || x.v.dim(0) != d_in) {
        throw ShapeError("gru_step: input must be [" + std::to_string(d_in) + "], got " + x.v.shape_str());
    }
    if (h_prev.v.rank() != 1 || h_prev.v.dim(0) != d) {
        throw ShapeError("gru_step: hidden must be [" + std::to_string(d) + "], got " + h_prev.v.shape_str());
    }
    ad::Value xh = ad::concat(tape, {x, h_prev});
    ad::Value z = ad::activation(tape, ad::add(tape, ad::matmul(tape, p.w_z, xh), p.b_z), Activation::Sigmoid);
    ad::Value r = ad::activation(tape, ad::add(tape, ad::matmul(tape, p.w_r, xh), p.b_r), Activation::Sigmoid);
    ad::Value xrh = ad::concat(tape, {x, ad::mul(tape, r, h_prev)});
    ad::Value cand = ad::activation(tape, ad::add(tape, ad::matmul(tape, p.w_h, xrh), p.b_h), Activation::Tanh);
    // h' = (1-z)*h_prev + z*cand
    ad::Value h = ad::add(tape, ad::mul(tape, ad::affine(tape, z, -1.0f, 1.0f), h_prev), ad::mul(tape, z, cand));
    return GruStep{h, h};
}

std::pair<Tensor, Tensor> gru_step(const Tensor& x, const Tensor& h_prev, const GruParams& p) {
    GruNodes nodes = GruNodes::bind(nullptr, p);
    GruStep s = gru_step(nullptr, ad::constant(x), ad::constant(h_prev), nodes);
    return {s.out.v, s.h.v};
}

void ConvLstmParams::validate() const {
    const int ch = b_i.dim(0);
    const int k = w_i.dim(2);
    for (const Tensor* w : {&w_i, &w_f, &w_o, &w_c}) {
        if (w->rank() != 4 || w->dim(0) != ch || w->dim(2) != k || w->dim(3) != k) {
            throw ShapeError("ConvLstmParams: gate kernel shape mismatch, got " + w->shape_str());
        }
        if (w->dim(1) != w_i.dim(1)) throw ShapeError("ConvLstmParams: inconsistent gate input channels");
    }
    if (k % 2 == 0) throw ShapeError("ConvLstmParams: kernels must be square and odd");
    for (const Tensor* b : {&b_i, &b_f, &b_o, &b_c}) {
        if (b->rank() != 1 || b->dim(0) != ch) throw ShapeError("ConvLstmParams: bias width mismatch");
    }
}

ConvLstmParams ConvLstmParams::zeros(int c_in, int c_h, int k) {
    ConvLstmParams p;
    for (Tensor* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_c}) *w = Tensor({c_h, c_in + c_h, k, k});
    for (Tensor* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_c}) *b = Tensor({c_h});
    return p;
}

ConvLstmParams ConvLstmParams::seeded(int c_in, int c_h, Rng& rng, int k, float scale) {
    ConvLstmParams p = zeros(c_in, c_h, k);
    for (Tensor* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_c}) {
        for (int64_t i = 0; i < w->numel(); ++i) (*w)[i] = rng.uniform(-scale, scale);
    }
    return p;
}

ConvLstmState ConvLstmState::zeros(int c_h, int h, int w) {
    return ConvLstmState{Tensor({c_h, h, w}), Tensor({c_h, h, w})};
}

ConvLstmOut convlstm_step(const Tensor& x, const ConvLstmState& s, const ConvLstmParams& p) {
    p.validate();
    if (x.rank() != 3 || x.dim(0) != p.input_channels()) {
        throw ShapeError("convlstm_step: input must be [" + std::to_string(p.input_channels()) + " x H x W], got " +
                         x.shape_str());
    }
    if (!s.c.same_shape(s.h)) throw ShapeError("convlstm_step: state tensors must share a shape");
    if (s.c.dim(0) != p.hidden_channels() || s.c.dim(1) != x.dim(1) || s.c.dim(2) != x.dim(2)) {
        throw ShapeError("convlstm_step: state " + s.c.shape_str() + " does not match input " + x.shape_str());
    }
    const Tensor xh = kernels::concat({x, s.h}, 0);
    const Tensor gi = kernels::activation(kernels::conv2d(xh, p.w_i, p.b_i), Activation::Sigmoid);
    const Tensor gf = kernels::activation(kernels::conv2d(xh, p.w_f, p.b_f), Activation::Sigmoid);
    const Tensor go = kernels::activation(kernels::conv2d(xh, p.w_o, p.b_o), Activation::Sigmoid);
    const Tensor gg = kernels::activation(kernels::conv2d(xh, p.w_c, p.b_c), Activation::Tanh);

    ConvLstmOut out;
    out.state.c = Tensor(s.c.shape());
    out.state.h = Tensor(s.h.shape());
    for (int64_t i = 0; i < s.c.numel(); ++i) {
        const float c_new = gf[i] * s.c[i] + gi[i] * gg[i];
        out.state.c[i] = c_new;
        out.state.h[i] = go[i] * std::tanh(c_new);
    }
    out.state.c.require_finite("convlstm_step");
    out.f = out.state.h;
    return out;
}

}  // namespace quadtrack::recurrent
