#pragma once

#include <utility>
#include <vector>

#include "quadtrack/descriptor.hpp"
#include "quadtrack/geometry.hpp"
#include "quadtrack/recurrent.hpp"

namespace quadtrack::tracker {

struct TrackerConfig {
    double theta_l = 0.4;   // detection threshold (applied at decode time)
    double theta_m = 1.0;   // matching distance threshold
    double theta_h = 0.8;   // spawn threshold
    double tau = 0.05;      // log-length confidence reward
    int k = 10;             // max proposals per frame
    int max_missed = 8;     // retire horizon

    enum class Matching { EagdAgd, AgdAgd };
    Matching matching = Matching::EagdAgd;

    void validate() const;
};

struct TrackPoint {
    int frame;
    geometry::Quad quad;  // quad.score carries the (possibly rewarded) confidence
};

struct Tracklet {
    int id;
    std::vector<TrackPoint> history;
    Tensor h;     // GRU hidden state
    Tensor eagd;  // descriptor to match against next frame's proposals
    int missed = 0;
};

struct TrackerState {
    std::vector<Tracklet> active;
    std::vector<Tracklet> retired;
    int next_id = 0;
    int frame = 0;
};

struct Confirmed {
    int track_id;
    geometry::Quad quad;
};

// Pairwise Euclidean distances, [P x Q]; lower = more similar.
Tensor similarity_matrix(const std::vector<Tensor>& eagd_prev, const std::vector<Tensor>& agd_cur);

// Minimum-cost one-to-one assignment on a rectangular matrix (square-padded
// with a large sentinel), then pairs costing more than theta_m are dropped.
// Result is sorted by row index.
std::vector<std::pair<int, int>> kuhn_munkres(const Tensor& cost, double theta_m);

struct StepTimes {
    double matching = 0.0;  // similarity matrix + assignment, seconds
    double update = 0.0;    // tracklet bookkeeping + GRU advance, seconds
};

// One frame of online trajectory generation. `detections` are the NMS'd
// top-K proposals, aligned 1:1 with their descriptors. Returns the confirmed
// detections of this frame tagged with tracklet ids; `state` advances in
// place.
std::vector<Confirmed> step(const std::vector<geometry::Quad>& detections,
                            const std::vector<descriptor::Agd>& agds, TrackerState& state,
                            const TrackerConfig& cfg, const recurrent::GruParams& gru,
                            StepTimes* times = nullptr);

}  // namespace quadtrack::tracker
