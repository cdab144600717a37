#pragma once

#include <array>
#include <vector>

#include "quadtrack/tensor.hpp"

namespace quadtrack::geometry {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// Ordered convex quadrangle in pixel coordinates, clockwise starting
/// top-left (image convention, y down). `score` is the detection confidence;
/// ground truth leaves it at 1.
struct Quad {
    std::array<Vec2, 4> v{};
    float score = 1.0f;

    static Quad rect(double x0, double y0, double x1, double y1, float score = 1.0f);

    double area() const;            // shoelace, positive for valid clockwise quads
    bool valid() const;             // convex, positive area
    Vec2 centroid() const;
    double shortest_edge() const;
    bool contains(const Vec2& p) const;  // boundary inclusive
    Quad shrunk(double ratio) const;     // vertices pulled toward the centroid
    Quad scaled(double factor) const;    // coordinates multiplied by factor
};

/// Per-pixel detection targets at feature-map resolution: one score channel
/// plus 8 offset channels (dx, dy to each of the 4 vertices, map units).
struct DetectionMaps {
    Tensor score;    // [1 x H x W]
    Tensor offsets;  // [8 x H x W]

    int height() const { return score.dim(1); }
    int width() const { return score.dim(2); }
    void validate() const;
};

/// 3x3 perspective transform with h33 = 1.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Vec2 apply(const Vec2& p) const;
    Homography inverse() const;
};

// Intersection-over-union of two convex quads via Sutherland-Hodgman
// clipping and shoelace areas. Throws GeometryError on degenerate input.
double quad_iou(const Quad& a, const Quad& b);

// Greedy descending-score suppression; ties keep the earlier input index.
// A candidate is dropped when its IoU with any kept quad exceeds iou_thresh.
std::vector<Quad> nms(const std::vector<Quad>& proposals, double iou_thresh);

// Rasterize ground-truth quads (image coordinates) into detection targets at
// map resolution; `scale` is the image-to-map downsampling factor. Pixels
// inside a (optionally shrunk) quad are positive, take the quad's score
// (1 for ground truth) and carry vertex offsets; when quads overlap, the
// later quad in input order wins.
DetectionMaps encode_targets(const std::vector<Quad>& gt, int map_h, int map_w, double scale,
                             double shrink = 0.0);

struct DecodeResult {
    std::vector<Quad> proposals;
    int skipped = 0;  // positive pixels dropped for non-finite offsets
};

// Emit one quad per pixel with score >= theta_l, rescaled to image
// coordinates. Pre-NMS.
DecodeResult decode_proposals(const DetectionMaps& maps, double theta_l, double scale);

// Perspective transform mapping the output grid corners (0,0), (w-1,0),
// (w-1,h-1), (0,h-1) onto the quad's vertices. Throws GeometryError when the
// vertices are collinear (singular system).
Homography homography_from_quad(const Quad& q, int out_w = 64, int out_h = 8);

// Row-major (y, then x) sampling locations of the out_h x out_w grid mapped
// through homography_from_quad(q).
std::vector<std::pair<float, float>> roi_grid(const Quad& q, int out_w = 64, int out_h = 8);

}  // namespace quadtrack::geometry
