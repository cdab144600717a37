#include "quadtrack/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <omp.h>

namespace quadtrack::geometry {

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double polygon_area(const std::vector<Vec2>& poly) {
    const size_t n = poly.size();
    if (n < 3) return 0.0;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    return 0.5 * acc;
}

// Clip `subject` against the half-plane on the inner (clockwise) side of the
// edge a->b.
std::vector<Vec2> clip_edge(const std::vector<Vec2>& subject, const Vec2& a, const Vec2& b) {
    std::vector<Vec2> out;
    const size_t n = subject.size();
    out.reserve(n + 2);
    for (size_t i = 0; i < n; ++i) {
        const Vec2& cur = subject[i];
        const Vec2& nxt = subject[(i + 1) % n];
        const double dc = cross(a, b, cur);
        const double dn = cross(a, b, nxt);
        const bool cur_in = dc >= 0.0;
        const bool nxt_in = dn >= 0.0;
        if (cur_in) out.push_back(cur);
        if (cur_in != nxt_in) {
            const double t = dc / (dc - dn);
            out.push_back(Vec2{cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
        }
    }
    return out;
}

}  // namespace

Quad Quad::rect(double x0, double y0, double x1, double y1, float score) {
    Quad q;
    q.v = {Vec2{x0, y0}, Vec2{x1, y0}, Vec2{x1, y1}, Vec2{x0, y1}};
    q.score = score;
    return q;
}

double Quad::area() const {
    std::vector<Vec2> poly(v.begin(), v.end());
    return polygon_area(poly);
}

bool Quad::valid() const {
    if (!(area() > 0.0)) return false;
    for (int i = 0; i < 4; ++i) {
        // consecutive edge turns must all be clockwise (image coords, y down)
        if (cross(v[static_cast<size_t>(i)], v[(i + 1) % 4], v[(i + 2) % 4]) <= 0.0) return false;
    }
    return true;
}

Vec2 Quad::centroid() const {
    Vec2 c;
    for (const Vec2& p : v) {
        c.x += p.x;
        c.y += p.y;
    }
    c.x *= 0.25;
    c.y *= 0.25;
    return c;
}

double Quad::shortest_edge() const {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i) {
        const Vec2& a = v[static_cast<size_t>(i)];
        const Vec2& b = v[(i + 1) % 4];
        best = std::min(best, std::hypot(b.x - a.x, b.y - a.y));
    }
    return best;
}

bool Quad::contains(const Vec2& p) const {
    for (int i = 0; i < 4; ++i) {
        if (cross(v[static_cast<size_t>(i)], v[(i + 1) % 4], p) < 0.0) return false;
    }
    return true;
}

Quad Quad::shrunk(double ratio) const {
    if (ratio <= 0.0) return *this;
    const Vec2 c = centroid();
    Quad out = *this;
    for (Vec2& p : out.v) {
        p.x = c.x + (p.x - c.x) * (1.0 - ratio);
        p.y = c.y + (p.y - c.y) * (1.0 - ratio);
    }
    return out;
}

Quad Quad::scaled(double factor) const {
    Quad out = *this;
    for (Vec2& p : out.v) {
        p.x *= factor;
        p.y *= factor;
    }
    return out;
}

void DetectionMaps::validate() const {
    if (score.rank() != 3 || score.dim(0) != 1) {
        throw ShapeError("DetectionMaps: score must be [1 x H x W], got " + score.shape_str());
    }
    if (offsets.rank() != 3 || offsets.dim(0) != 8) {
        throw ShapeError("DetectionMaps: offsets must be [8 x H x W], got " + offsets.shape_str());
    }
    if (offsets.dim(1) != score.dim(1) || offsets.dim(2) != score.dim(2)) {
        throw ShapeError("DetectionMaps: score/offset spatial dims differ");
    }
}

Vec2 Homography::apply(const Vec2& p) const {
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    if (std::fabs(w) < 1e-12) throw GeometryError("homography: point maps to infinity");
    return Vec2{(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

Homography Homography::inverse() const {
    const auto& a = m;
    std::array<double, 9> inv{};
    inv[0] = a[4] * a[8] - a[5] * a[7];
    inv[1] = a[2] * a[7] - a[1] * a[8];
    inv[2] = a[1] * a[5] - a[2] * a[4];
    inv[3] = a[5] * a[6] - a[3] * a[8];
    inv[4] = a[0] * a[8] - a[2] * a[6];
    inv[5] = a[2] * a[3] - a[0] * a[5];
    inv[6] = a[3] * a[7] - a[4] * a[6];
    inv[7] = a[1] * a[6] - a[0] * a[7];
    inv[8] = a[0] * a[4] - a[1] * a[3];
    const double det = a[0] * inv[0] + a[1] * inv[3] + a[2] * inv[6];
    if (std::fabs(det) < 1e-9) throw GeometryError("homography: not invertible");
    Homography out;
    const double norm = inv[8] / det;  // rescale so h33 == 1
    if (std::fabs(norm) < 1e-12) throw GeometryError("homography: inverse has vanishing h33");
    for (int i = 0; i < 9; ++i) out.m[static_cast<size_t>(i)] = inv[static_cast<size_t>(i)] / det / norm;
    return out;
}

double quad_iou(const Quad& a, const Quad& b) {
    if (!(a.area() > 0.0) || !(b.area() > 0.0)) throw GeometryError("quad_iou: degenerate quad");
    std::vector<Vec2> poly(a.v.begin(), a.v.end());
    for (int i = 0; i < 4 && !poly.empty(); ++i) {
        poly = clip_edge(poly, b.v[static_cast<size_t>(i)], b.v[(i + 1) % 4]);
    }
    const double inter = poly.size() >= 3 ? polygon_area(poly) : 0.0;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<Quad> nms(const std::vector<Quad>& proposals, double iou_thresh) {
    std::vector<int> order(proposals.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
        return proposals[static_cast<size_t>(i)].score > proposals[static_cast<size_t>(j)].score;
    });
    std::vector<Quad> kept;
    for (int idx : order) {
        const Quad& cand = proposals[static_cast<size_t>(idx)];
        bool suppressed = false;
        for (const Quad& k : kept) {
            if (quad_iou(cand, k) > iou_thresh) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(cand);
    }
    return kept;
}

DetectionMaps encode_targets(const std::vector<Quad>& gt, int map_h, int map_w, double scale, double shrink) {
    if (scale <= 0.0) throw UsageError("encode_targets: scale must be > 0");
    if (map_h < 1 || map_w < 1) throw UsageError("encode_targets: map dims must be >= 1");
    DetectionMaps maps;
    maps.score = Tensor({1, map_h, map_w});
    maps.offsets = Tensor({8, map_h, map_w});
    if (gt.empty()) return maps;

    // quads in map coordinates, pre-shrunk for the containment test
    std::vector<Quad> inner(gt.size()), full(gt.size());
    for (size_t i = 0; i < gt.size(); ++i) {
        if (!gt[i].valid()) throw GeometryError("encode_targets: invalid ground-truth quad");
        inner[i] = gt[i].shrunk(shrink).scaled(1.0 / scale);
        full[i] = gt[i].scaled(1.0 / scale);
    }

#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (int y = 0; y < map_h; ++y) {
        for (int x = 0; x < map_w; ++x) {
            const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
            // later quads win on overlap, so scan in order and keep the last hit
            int hit = -1;
            for (size_t i = 0; i < inner.size(); ++i) {
                if (inner[i].contains(p)) hit = static_cast<int>(i);
            }
            if (hit < 0) continue;
            const Quad& q = full[static_cast<size_t>(hit)];
            maps.score.at(0, y, x) = q.score;
            for (int k = 0; k < 4; ++k) {
                maps.offsets.at(2 * k, y, x) = static_cast<float>(q.v[static_cast<size_t>(k)].x - p.x);
                maps.offsets.at(2 * k + 1, y, x) = static_cast<float>(q.v[static_cast<size_t>(k)].y - p.y);
            }
        }
    }
    return maps;
}

DecodeResult decode_proposals(const DetectionMaps& maps, double theta_l, double scale) {
    maps.validate();
    // theta_l > 1 is a legal "emit nothing" setting; negative thresholds are a mistake
    if (theta_l < 0.0) throw UsageError("decode_proposals: theta_l must be >= 0");
    const int H = maps.height(), W = maps.width();
    DecodeResult result;
    std::vector<std::vector<Quad>> rows(static_cast<size_t>(H));
    std::vector<int> row_skips(static_cast<size_t>(H), 0);
#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const float s = maps.score.at(0, y, x);
            if (s < theta_l) continue;
            Quad q;
            q.score = s;
            bool ok = true;
            for (int k = 0; k < 4; ++k) {
                const float dx = maps.offsets.at(2 * k, y, x);
                const float dy = maps.offsets.at(2 * k + 1, y, x);
                if (!std::isfinite(dx) || !std::isfinite(dy)) {
                    ok = false;
                    break;
                }
                q.v[static_cast<size_t>(k)] = Vec2{(x + static_cast<double>(dx)) * scale,
                                                   (y + static_cast<double>(dy)) * scale};
            }
            if (ok) {
                rows[static_cast<size_t>(y)].push_back(q);
            } else {
                ++row_skips[static_cast<size_t>(y)];
            }
        }
    }
    for (int y = 0; y < H; ++y) {
        auto& r = rows[static_cast<size_t>(y)];
        result.proposals.insert(result.proposals.end(), r.begin(), r.end());
        result.skipped += row_skips[static_cast<size_t>(y)];
    }
    return result;
}

Homography homography_from_quad(const Quad& q, int out_w, int out_h) {
    if (out_w < 2 || out_h < 2) throw UsageError("homography_from_quad: output grid must be at least 2x2");
    const std::array<Vec2, 4> src = {Vec2{0, 0}, Vec2{static_cast<double>(out_w - 1), 0},
                                     Vec2{static_cast<double>(out_w - 1), static_cast<double>(out_h - 1)},
                                     Vec2{0, static_cast<double>(out_h - 1)}};
    // 8-unknown DLT system A * h = rhs with h = (a,b,c,d,e,f,g,h)
    double A[8][9];
    for (int i = 0; i < 4; ++i) {
        const Vec2& s = src[static_cast<size_t>(i)];
        const Vec2& d = q.v[static_cast<size_t>(i)];
        double* r0 = A[2 * i];
        double* r1 = A[2 * i + 1];
        r0[0] = s.x; r0[1] = s.y; r0[2] = 1; r0[3] = 0; r0[4] = 0; r0[5] = 0;
        r0[6] = -s.x * d.x; r0[7] = -s.y * d.x; r0[8] = d.x;
        r1[0] = 0; r1[1] = 0; r1[2] = 0; r1[3] = s.x; r1[4] = s.y; r1[5] = 1;
        r1[6] = -s.x * d.y; r1[7] = -s.y * d.y; r1[8] = d.y;
    }
    // Gaussian elimination with partial pivoting
    for (int col = 0; col < 8; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 8; ++r) {
            if (std::fabs(A[r][col]) > std::fabs(A[pivot][col])) pivot = r;
        }
        if (std::fabs(A[pivot][col]) < 1e-9) {
            throw GeometryError("homography_from_quad: singular system (collinear vertices?)");
        }
        if (pivot != col) std::swap_ranges(A[col], A[col] + 9, A[pivot]);
        for (int r = 0; r < 8; ++r) {
            if (r == col) continue;
            const double f = A[r][col] / A[col][col];
            for (int c = col; c < 9; ++c) A[r][c] -= f * A[col][c];
        }
    }
    Homography h;
    for (int i = 0; i < 8; ++i) h.m[static_cast<size_t>(i)] = A[i][8] / A[i][i];
    h.m[8] = 1.0;
    return h;
}

std::vector<std::pair<float, float>> roi_grid(const Quad& q, int out_w, int out_h) {
    const Homography h = homography_from_quad(q, out_w, out_h);
    std::vector<std::pair<float, float>> grid;
    grid.reserve(static_cast<size_t>(out_w) * out_h);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const Vec2 p = h.apply(Vec2{static_cast<double>(x), static_cast<double>(y)});
            grid.emplace_back(static_cast<float>(p.x), static_cast<float>(p.y));
        }
    }
    return grid;
}

}  // namespace quadtrack::geometry
