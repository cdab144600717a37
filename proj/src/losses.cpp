#include "quadtrack/losses.hpp"

#include <cmath>

namespace quadtrack::losses {

namespace {
constexpr double kDiceEps = 1e-6;

double smooth_l1_scalar(double d) { return std::fabs(d) < 1.0 ? 0.5 * d * d : std::fabs(d) - 0.5; }
double smooth_l1_deriv(double d) { return std::fabs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0); }
}  // namespace

PairLabels::PairLabels(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1) throw UsageError("PairLabels: dimensions must be >= 1");
    y_.assign(static_cast<size_t>(rows) * cols, 0);
}

void PairLabels::mark_positive(int i, int j) {
    if (i < 0 || i >= rows_ || j < 0 || j >= cols_) throw UsageError("PairLabels: index out of range");
    for (int c = 0; c < cols_; ++c) {
        if (c != j && positive(i, c)) throw UsageError("PairLabels: row already has a positive");
    }
    for (int r = 0; r < rows_; ++r) {
        if (r != i && positive(r, j)) throw UsageError("PairLabels: column already has a positive");
    }
    y_[static_cast<size_t>(i) * cols_ + j] = 1;
}

void LossWeights::validate() const {
    if (alpha < 0.0f || beta < 0.0f) throw UsageError("loss weights alpha/beta must be >= 0");
    if (margin <= 0.0f) throw UsageError("contrastive margin must be > 0");
}

ad::Value dice_loss(ad::Tape* tape, ad::Value pred, const Tensor& gt) {
    if (!pred.v.same_shape(gt)) {
        throw ShapeError("dice_loss: shape mismatch " + pred.v.shape_str() + " vs " + gt.shape_str());
    }
    const double inter = dot64(pred.v, gt);
    const double denom = sum64(pred.v) + sum64(gt) + kDiceEps;
    Tensor out = Tensor::scalar(static_cast<float>(1.0 - 2.0 * inter / denom));
    if (!tape) return ad::Value{std::move(out)};
    ad::Value traced = pred.id == ad::kUntraced ? ad::leaf(*tape, pred.v) : pred;
    const ad::NodeId ip = traced.id;
    Tensor gt_copy = gt;
    ad::NodeId id = tape->push("dice_loss", std::move(out),
                               [ip, gt_copy](const Tensor& dout, const ad::Tape& t, std::vector<Tensor>& g) {
        const Tensor& p = t.value(ip);
        const double inter = dot64(p, gt_copy);
        const double denom = sum64(p) + sum64(gt_copy) + kDiceEps;
        Tensor dp(p.shape());
        // d/dp_i [1 - 2A/B] = -2 (g_i B - A) / B^2
        for (int64_t i = 0; i < p.numel(); ++i) {
            dp[i] = static_cast<float>(dout[0] * -2.0 * (gt_copy[i] * denom - inter) / (denom * denom));
        }
        ad::accumulate_grad(g, ip, dp);
    });
    return ad::Value{tape->value(id), id};
}

ad::Value smooth_l1_offsets(ad::Tape* tape, ad::Value pred, const Tensor& gt, const Tensor& norm) {
    if (!pred.v.same_shape(gt)) {
        throw ShapeError("smooth_l1_offsets: shape mismatch " + pred.v.shape_str() + " vs " + gt.shape_str());
    }
    if (pred.v.rank() != 2 || pred.v.dim(0) != 8) {
        throw ShapeError("smooth_l1_offsets: expected [8 x P], got " + pred.v.shape_str());
    }
    const int P = pred.v.dim(1);
    if (norm.rank() != 1 || norm.dim(0) != P) {
        throw ShapeError("smooth_l1_offsets: norm must be [P=" + std::to_string(P) + "], got " + norm.shape_str());
    }
    for (int p = 0; p < P; ++p) {
        if (!(norm[p] > 0.0f)) throw GeometryError("smooth_l1_offsets: non-positive norm at pixel " + std::to_string(p));
    }
    const int64_t count = pred.v.numel();
    double acc = 0.0;
    for (int c = 0; c < 8; ++c) {
        for (int p = 0; p < P; ++p) {
            acc += smooth_l1_scalar((static_cast<double>(pred.v.at(c, p)) - gt.at(c, p)) / norm[p]);
        }
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(count)));
    if (!tape) return ad::Value{std::move(out)};
    ad::Value traced = pred.id == ad::kUntraced ? ad::leaf(*tape, pred.v) : pred;
    const ad::NodeId ip = traced.id;
    Tensor gt_copy = gt, norm_copy = norm;
    ad::NodeId id = tape->push("smooth_l1_offsets", std::move(out),
                               [ip, gt_copy, norm_copy, count](const Tensor& dout, const ad::Tape& t,
                                                               std::vector<Tensor>& g) {
        const Tensor& p = t.value(ip);
        const int P = p.dim(1);
        Tensor dp(p.shape());
        for (int c = 0; c < 8; ++c) {
            for (int px = 0; px < P; ++px) {
                const double d = (static_cast<double>(p.at(c, px)) - gt_copy.at(c, px)) / norm_copy[px];
                dp.at(c, px) = static_cast<float>(dout[0] * smooth_l1_deriv(d) / norm_copy[px] /
                                                  static_cast<double>(count));
            }
        }
        ad::accumulate_grad(g, ip, dp);
    });
    return ad::Value{tape->value(id), id};
}

ad::Value detection_loss(ad::Tape* tape, ad::Value cls_term, ad::Value off_term, const LossWeights& w) {
    w.validate();
    if (cls_term.v.numel() != 1 || off_term.v.numel() != 1) {
        throw ShapeError("detection_loss: terms must be scalars");
    }
    return ad::add(tape, cls_term, ad::affine(tape, off_term, w.alpha, 0.0f));
}

ad::Value contrastive_track_loss(ad::Tape* tape, const std::vector<ad::Value>& eagd_prev,
                                 const std::vector<ad::Value>& agd_cur, const PairLabels& labels,
                                 const LossWeights& w) {
    w.validate();
    const int P = static_cast<int>(eagd_prev.size());
    const int Q = static_cast<int>(agd_cur.size());
    if (P < 1 || Q < 1) throw UsageError("contrastive_track_loss: need at least one descriptor per side");
    if (labels.rows() != P || labels.cols() != Q) throw UsageError("contrastive_track_loss: label matrix size mismatch");
    const int64_t width = eagd_prev.front().v.numel();
    for (const auto& d : eagd_prev) {
        if (d.v.numel() != width) throw ShapeError("contrastive_track_loss: descriptor width mismatch");
    }
    for (const auto& d : agd_cur) {
        if (d.v.numel() != width) throw ShapeError("contrastive_track_loss: descriptor width mismatch");
    }
    const double n = static_cast<double>(P) * Q;
    const double m = w.margin;
    double acc = 0.0;
    for (int i = 0; i < P; ++i) {
        for (int j = 0; j < Q; ++j) {
            const double d = euclidean_distance(eagd_prev[static_cast<size_t>(i)].v, agd_cur[static_cast<size_t>(j)].v);
            if (labels.positive(i, j)) {
                acc += d * d;
            } else {
                const double h = m - d;
                if (h > 0.0) acc += h * h;
            }
        }
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc / n));
    if (!tape) return ad::Value{std::move(out)};

    std::vector<ad::NodeId> prev_ids(eagd_prev.size()), cur_ids(agd_cur.size());
    for (size_t i = 0; i < eagd_prev.size(); ++i) {
        prev_ids[i] = eagd_prev[i].id != ad::kUntraced ? eagd_prev[i].id : tape->leaf(eagd_prev[i].v);
    }
    for (size_t j = 0; j < agd_cur.size(); ++j) {
        cur_ids[j] = agd_cur[j].id != ad::kUntraced ? agd_cur[j].id : tape->leaf(agd_cur[j].v);
    }
    PairLabels labels_copy = labels;
    const float margin = w.margin;
    ad::NodeId id = tape->push("contrastive_track_loss", std::move(out),
                               [prev_ids, cur_ids, labels_copy, margin, n](const Tensor& dout, const ad::Tape& t,
                                                                            std::vector<Tensor>& g) {
        const int P = static_cast<int>(prev_ids.size());
        const int Q = static_cast<int>(cur_ids.size());
        std::vector<Tensor> dprev(prev_ids.size()), dcur(cur_ids.size());
        for (int i = 0; i < P; ++i) dprev[static_cast<size_t>(i)] = Tensor::zeros(t.value(prev_ids[static_cast<size_t>(i)]).shape());
        for (int j = 0; j < Q; ++j) dcur[static_cast<size_t>(j)] = Tensor::zeros(t.value(cur_ids[static_cast<size_t>(j)]).shape());
        for (int i = 0; i < P; ++i) {
            const Tensor& a = t.value(prev_ids[static_cast<size_t>(i)]);
            for (int j = 0; j < Q; ++j) {
                const Tensor& b = t.value(cur_ids[static_cast<size_t>(j)]);
                const double d = euclidean_distance(a, b);
                double coef = 0.0;  // d(term)/dd * 1/d, so grad = coef * (a - b)
                if (labels_copy.positive(i, j)) {
                    coef = 2.0 / n;  // d(d^2) = 2 d dd; dd/da = (a-b)/d
                } else if (d < margin && d > 0.0) {
                    coef = -2.0 * (margin - d) / (d * n);
                } else {
                    continue;  // hinge region (d >= m) or coincident negatives: zero gradient
                }
                const double scale = dout[0] * coef;
                Tensor& da = dprev[static_cast<size_t>(i)];
                Tensor& db = dcur[static_cast<size_t>(j)];
                for (int64_t k = 0; k < a.numel(); ++k) {
                    const double diff = static_cast<double>(a[k]) - b[k];
                    da[k] += static_cast<float>(scale * diff);
                    db[k] -= static_cast<float>(scale * diff);
                }
            }
        }
        for (int i = 0; i < P; ++i) ad::accumulate_grad(g, prev_ids[static_cast<size_t>(i)], dprev[static_cast<size_t>(i)]);
        for (int j = 0; j < Q; ++j) ad::accumulate_grad(g, cur_ids[static_cast<size_t>(j)], dcur[static_cast<size_t>(j)]);
    });
    return ad::Value{tape->value(id), id};
}

ad::Value total_loss(ad::Tape* tape, const std::vector<ad::Value>& det_losses,
                     const std::vector<ad::Value>& track_losses, const LossWeights& w) {
    w.validate();
    if (det_losses.empty() || det_losses.size() != track_losses.size()) {
        throw UsageError("total_loss: need equal, non-empty per-frame loss lists");
    }
    const float inv_n = 1.0f / static_cast<float>(det_losses.size());
    ad::Value acc;
    bool first = true;
    for (size_t t = 0; t < det_losses.size(); ++t) {
        ad::Value frame = ad::add(tape, det_losses[t], ad::affine(tape, track_losses[t], w.beta, 0.0f));
        acc = first ? frame : ad::add(tape, acc, frame);
        first = false;
    }
    return ad::affine(tape, acc, inv_n, 0.0f);
}

double dice_loss(const Tensor& pred, const Tensor& gt) {
    return dice_loss(nullptr, ad::constant(pred), gt).v[0];
}

double smooth_l1_offsets(const Tensor& pred, const Tensor& gt, const Tensor& norm) {
    return smooth_l1_offsets(nullptr, ad::constant(pred), gt, norm).v[0];
}

double detection_loss(double cls_term, double off_term, const LossWeights& w) {
    w.validate();
    return cls_term + static_cast<double>(w.alpha) * off_term;
}

double contrastive_track_loss(const std::vector<Tensor>& eagd_prev, const std::vector<Tensor>& agd_cur,
                              const PairLabels& labels, const LossWeights& w) {
    std::vector<ad::Value> prev, cur;
    prev.reserve(eagd_prev.size());
    cur.reserve(agd_cur.size());
    for (const Tensor& t : eagd_prev) prev.push_back(ad::constant(t));
    for (const Tensor& t : agd_cur) cur.push_back(ad::constant(t));
    return contrastive_track_loss(nullptr, prev, cur, labels, w).v[0];
}

double total_loss(const std::vector<double>& det_losses, const std::vector<double>& track_losses,
                  const LossWeights& w) {
    w.validate();
    if (det_losses.empty() || det_losses.size() != track_losses.size()) {
        throw UsageError("total_loss: need equal, non-empty per-frame loss lists");
    }
    double acc = 0.0;
    for (size_t t = 0; t < det_losses.size(); ++t) acc += det_losses[t] + static_cast<double>(w.beta) * track_losses[t];
    return acc / static_cast<double>(det_losses.size());
}

}  // namespace quadtrack::losses
