#pragma once

#include <cstdint>
#include <vector>

#include "quadtrack/tape.hpp"
#include "quadtrack/tensor.hpp"

namespace quadtrack::losses {

/// Binary correspondence labels between K tracklets at t-1 (rows) and K
/// proposals at t (cols). At most one positive per row and per column.
class PairLabels {
public:
    PairLabels(int rows, int cols);

    void mark_positive(int i, int j);
    bool positive(int i, int j) const { return y_[static_cast<size_t>(i) * cols_ + j] != 0; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }

private:
    int rows_, cols_;
    std::vector<uint8_t> y_;
};

struct LossWeights {
    float alpha = 5.0f;   // detection trade-off
    float beta = 0.1f;    // tracking trade-off
    float margin = 1.0f;  // contrastive margin

    void validate() const;
};

// Traced forms. Pass a null tape for plain forward evaluation.

// 1 - 2*sum(pred*gt) / (sum(pred) + sum(gt) + eps), eps = 1e-6.
ad::Value dice_loss(ad::Tape* tape, ad::Value pred, const Tensor& gt);

// Mean of smooth-L1((pred - gt) / norm) over all 8 x P entries; norm holds
// the shortest ground-truth edge per positive pixel and must be > 0.
ad::Value smooth_l1_offsets(ad::Tape* tape, ad::Value pred, const Tensor& gt, const Tensor& norm);

// L_cls + alpha * L_off.
ad::Value detection_loss(ad::Tape* tape, ad::Value cls_term, ad::Value off_term, const LossWeights& w);

// (1 / (P*Q)) * sum_ij [ y*d^2 + (1-y)*max(margin - d, 0)^2 ] with d the
// Euclidean distance between prev[i] and cur[j].
ad::Value contrastive_track_loss(ad::Tape* tape, const std::vector<ad::Value>& eagd_prev,
                                 const std::vector<ad::Value>& agd_cur, const PairLabels& labels,
                                 const LossWeights& w);

// (1/N) * sum_t [ det[t] + beta * track[t] ].
ad::Value total_loss(ad::Tape* tape, const std::vector<ad::Value>& det_losses,
                     const std::vector<ad::Value>& track_losses, const LossWeights& w);

// Forward-only conveniences.
double dice_loss(const Tensor& pred, const Tensor& gt);
double smooth_l1_offsets(const Tensor& pred, const Tensor& gt, const Tensor& norm);
double detection_loss(double cls_term, double off_term, const LossWeights& w);
double contrastive_track_loss(const std::vector<Tensor>& eagd_prev, const std::vector<Tensor>& agd_cur,
                              const PairLabels& labels, const LossWeights& w);
double total_loss(const std::vector<double>& det_losses, const std::vector<double>& track_losses,
                  const LossWeights& w);

}  // namespace quadtrack::losses
