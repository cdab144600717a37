#pragma once

#include <map>
#include <vector>

#include "quadtrack/geometry.hpp"

namespace quadtrack::metrics {

/// One annotated or hypothesized box in one frame; `id` is the ground-truth
/// instance id or the tracker id depending on which side it sits on.
struct FrameObject {
    int id;
    geometry::Quad quad;
};

// frame index -> objects present in that frame
using FrameMap = std::map<int, std::vector<FrameObject>>;

/// Ground-truth trajectory of one instance.
struct GtTrack {
    int id;
    std::map<int, geometry::Quad> by_frame;
};

struct MotReport {
    double mota = 0.0;  // percent, can be negative
    double motp = 0.0;  // percent, mean matched IoU
    bool motp_defined = false;
    int64_t false_positives = 0;
    int64_t misses = 0;
    int64_t id_switches = 0;
    int64_t gt_total = 0;
    int64_t matches = 0;
};

struct Correspondence {
    int gt_id;
    int hyp_id;
    double iou;
};

// CLEAR per-frame matching: correspondences from `prev_corr` persist while
// both boxes exist and still overlap at >= iou_thresh; the remainder is
// matched by maximum total IoU, discarding pairs below the threshold.
std::vector<Correspondence> match_frame(const std::vector<FrameObject>& gt, const std::vector<FrameObject>& hyp,
                                        const std::map<int, int>& prev_corr, double iou_thresh);

// CLEAR-MOT accumulation over all frames present in gt or hyp.
MotReport mot_metrics(const std::vector<GtTrack>& gt, const FrameMap& hyp, double iou_thresh = 0.5);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    int64_t tp = 0, fp = 0, fn = 0;
};

// Frame-by-frame one-to-one max-IoU matching at the threshold; ids ignored.
Prf detection_prf(const FrameMap& gt, const FrameMap& det, double iou_thresh = 0.5);

FrameMap to_frame_map(const std::vector<GtTrack>& tracks);

}  // namespace quadtrack::metrics
