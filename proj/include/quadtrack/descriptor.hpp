#pragma once

#include "quadtrack/geometry.hpp"
#include "quadtrack/recurrent.hpp"
#include "quadtrack/tape.hpp"
#include "quadtrack/tensor.hpp"

namespace quadtrack::descriptor {

/// Three 3x3 conv layers (C -> c1 -> c2 -> out) applied to the ROI-warped
/// patch, forward only.
struct AppearanceHeadParams {
    Tensor w1, b1, w2, b2, w3, b3;

    int in_channels() const { return w1.dim(1); }
    int out_width() const { return w3.dim(0); }
    void validate() const;

    static AppearanceHeadParams seeded(int c_in, Rng& rng, int c1 = 32, int c2 = 64, int out = 128);
};

/// Two fully connected layers 8 -> hidden -> out embedding the normalized
/// vertex coordinates.
struct GeometryEmbedParams {
    Tensor w1, b1;  // [hidden x 8], [hidden]
    Tensor w2, b2;  // [out x hidden], [out]

    int out_width() const { return w2.dim(0); }
    void validate() const;

    static GeometryEmbedParams zeros(int hidden = 16, int out = 8);
    static GeometryEmbedParams seeded(Rng& rng, int hidden = 16, int out = 8, float scale = 0.5f);
};

struct GeometryEmbedNodes {
    ad::Value w1, b1, w2, b2;

    static GeometryEmbedNodes bind(ad::Tape* tape, const GeometryEmbedParams& p);
};

/// Appearance-geometry descriptor of one proposal: [f_a ; f_g].
struct Agd {
    Tensor values;
    int appearance_width = 0;

    Tensor appearance_part() const;
    Tensor geometry_part() const;
};

/// Estimated descriptor plus the GRU hidden state that produced it.
struct Eagd {
    Tensor values;
    Tensor h;
};

// ROI-warp an 8 x 64 (by default) patch from the feature map through the
// quad's homography, run the conv head with relu, and global-average-pool.
// The quad must be expressed in the feature map's coordinate system.
Tensor appearance_feature(const Tensor& feature_map, const geometry::Quad& q, const AppearanceHeadParams& p,
                          int roi_w = 64, int roi_h = 8);

// Parameter-free variant: per-channel mean over the warped ROI grid. Used as
// the appearance cue for synthetic worlds, where the map carries per-instance
// signatures directly.
Tensor pooled_appearance(const Tensor& feature_map, const geometry::Quad& q, int roi_w = 64, int roi_h = 8);

// (x0/W, y0/H, ..., x3/W, y3/H) in vertex order.
Tensor normalized_coords(const geometry::Quad& q, double frame_w, double frame_h);

// f_g = FC2(relu(FC1(g))), traced form; g is the normalized coordinate vector.
ad::Value geometry_feature(ad::Tape* tape, ad::Value g, const GeometryEmbedNodes& p);

// Forward-only convenience from a quad.
Tensor geometry_feature(const geometry::Quad& q, double frame_w, double frame_h, const GeometryEmbedParams& p);

Agd make_agd(const Tensor& f_a, const Tensor& f_g);

// One GRU advance of the instance descriptor. mask must be 0 (no predecessor
// in the previous frame; h_prev is ignored) or 1.
Eagd estimate_eagd(const Agd& agd, const Tensor& h_prev, int mask, const recurrent::GruParams& p);

}  // namespace quadtrack::descriptor
