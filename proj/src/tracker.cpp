#include "quadtrack/tracker.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace quadtrack::tracker {

namespace {
constexpr double kPadSentinel = 1e6;
}

void TrackerConfig::validate() const {
    if (theta_l < 0.0 || theta_l > theta_h || theta_h > 1.0) {
        throw UsageError("TrackerConfig: need 0 <= theta_l <= theta_h <= 1");
    }
    if (theta_m <= 0.0) throw UsageError("TrackerConfig: theta_m must be > 0");
    if (tau < 0.0) throw UsageError("TrackerConfig: tau must be >= 0");
    if (k < 1) throw UsageError("TrackerConfig: k must be >= 1");
    if (max_missed < 0) throw UsageError("TrackerConfig: max_missed must be >= 0");
}

Tensor similarity_matrix(const std::vector<Tensor>& eagd_prev, const std::vector<Tensor>& agd_cur) {
    const int p = static_cast<int>(eagd_prev.size());
    const int q = static_cast<int>(agd_cur.size());
    if (p == 0 || q == 0) throw UsageError("similarity_matrix: empty descriptor list");
    Tensor cost({p, q});
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < q; ++j) {
            cost.at(i, j) = static_cast<float>(
                euclidean_distance(eagd_prev[static_cast<size_t>(i)], agd_cur[static_cast<size_t>(j)]));
        }
    }
    return cost;
}

std::vector<std::pair<int, int>> kuhn_munkres(const Tensor& cost, double theta_m) {
    if (cost.numel() == 0) return {};
    if (cost.rank() != 2) throw ShapeError("kuhn_munkres: cost must be a matrix, got " + cost.shape_str());
    cost.require_finite("kuhn_munkres");
    const int p = cost.dim(0), q = cost.dim(1);
    const int n = std::max(p, q);

    // square matrix, 1-indexed, padded with the sentinel
    std::vector<double> a(static_cast<size_t>(n + 1) * (n + 1), kPadSentinel);
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < q; ++j) a[static_cast<size_t>(i + 1) * (n + 1) + (j + 1)] = cost.at(i, j);
    }

    // Hungarian algorithm with potentials and shortest augmenting paths
    std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(n + 1), 0.0);
    std::vector<int> match(static_cast<size_t>(n + 1), 0), way(static_cast<size_t>(n + 1), 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n + 1), std::numeric_limits<double>::infinity());
        std::vector<char> used(static_cast<size_t>(n + 1), 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            const int i0 = match[static_cast<size_t>(j0)];
            double delta = std::numeric_limits<double>::infinity();
            int j1 = -1;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                const double cur = a[static_cast<size_t>(i0) * (n + 1) + j] - u[static_cast<size_t>(i0)] -
                                   v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<size_t>(j0)] != 0);
        // augment along the found path
        while (j0 != 0) {
            const int j1 = way[static_cast<size_t>(j0)];
            match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
            j0 = j1;
        }
    }

    std::vector<std::pair<int, int>> pairs;
    for (int j = 1; j <= n; ++j) {
        const int i = match[static_cast<size_t>(j)];
        if (i < 1 || i > p || j > q) continue;  // padded row or column
        const double c = cost.at(i - 1, j - 1);
        if (c > theta_m) continue;
        pairs.emplace_back(i - 1, j - 1);
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

std::vector<Confirmed> step(const std::vector<geometry::Quad>& detections,
                            const std::vector<descriptor::Agd>& agds, TrackerState& state,
                            const TrackerConfig& cfg, const recurrent::GruParams& gru, StepTimes* times) {
    using clock = std::chrono::steady_clock;
    cfg.validate();
    if (detections.size() != agds.size()) {
        throw UsageError("tracker::step: detections and descriptors must align 1:1");
    }
    const int frame = state.frame++;
    const int num_props = static_cast<int>(detections.size());
    const int num_tracks = static_cast<int>(state.active.size());

    const auto t0 = clock::now();
    std::vector<std::pair<int, int>> matches;
    if (num_tracks > 0 && num_props > 0) {
        std::vector<Tensor> prev;
        prev.reserve(state.active.size());
        for (const Tracklet& t : state.active) prev.push_back(t.eagd);
        std::vector<Tensor> cur;
        cur.reserve(agds.size());
        for (const descriptor::Agd& a : agds) cur.push_back(a.values);
        matches = kuhn_munkres(similarity_matrix(prev, cur), cfg.theta_m);
    }
    const auto t1 = clock::now();

    std::vector<char> track_matched(static_cast<size_t>(num_tracks), 0);
    std::vector<char> prop_matched(static_cast<size_t>(num_props), 0);

    for (const auto& [ti, pj] : matches) {
        track_matched[static_cast<size_t>(ti)] = 1;
        prop_matched[static_cast<size_t>(pj)] = 1;
        Tracklet& t = state.active[static_cast<size_t>(ti)];
        geometry::Quad q = detections[static_cast<size_t>(pj)];
        const double rewarded =
            q.score + cfg.tau * std::log(static_cast<double>(t.history.size() + 1));
        q.score = static_cast<float>(std::clamp(rewarded, 0.0, 1.0));
        t.history.push_back(TrackPoint{frame, q});
        t.missed = 0;
        if (cfg.matching == TrackerConfig::Matching::AgdAgd) {
            t.eagd = agds[static_cast<size_t>(pj)].values;
        } else {
            descriptor::Eagd e = descriptor::estimate_eagd(agds[static_cast<size_t>(pj)], t.h, 1, gru);
            t.eagd = e.values;
            t.h = e.h;
        }
    }

    // spawn tracklets for confident unmatched proposals
    std::vector<Tracklet> spawned;
    for (int j = 0; j < num_props; ++j) {
        if (prop_matched[static_cast<size_t>(j)]) continue;
        if (detections[static_cast<size_t>(j)].score < cfg.theta_h) continue;
        Tracklet t;
        t.id = state.next_id++;
        t.history.push_back(TrackPoint{frame, detections[static_cast<size_t>(j)]});
        if (cfg.matching == TrackerConfig::Matching::AgdAgd) {
            t.eagd = agds[static_cast<size_t>(j)].values;
            t.h = Tensor({gru.hidden()});
        } else {
            descriptor::Eagd e = descriptor::estimate_eagd(agds[static_cast<size_t>(j)], Tensor({gru.hidden()}), 0, gru);
            t.eagd = e.values;
            t.h = e.h;
        }
        t.missed = 0;
        spawned.push_back(std::move(t));
    }

    // age unmatched tracklets, retiring the stale ones
    std::vector<Tracklet> survivors;
    survivors.reserve(state.active.size() + spawned.size());
    for (int i = 0; i < num_tracks; ++i) {
        Tracklet& t = state.active[static_cast<size_t>(i)];
        if (!track_matched[static_cast<size_t>(i)]) {
            t.missed += 1;
            if (t.missed > cfg.max_missed) {
                state.retired.push_back(std::move(t));
                continue;
            }
        }
        survivors.push_back(std::move(t));
    }
    for (Tracklet& t : spawned) survivors.push_back(std::move(t));
    state.active = std::move(survivors);

    std::vector<Confirmed> confirmed;
    for (const Tracklet& t : state.active) {
        if (!t.history.empty() && t.history.back().frame == frame) {
            confirmed.push_back(Confirmed{t.id, t.history.back().quad});
        }
    }
    std::sort(confirmed.begin(), confirmed.end(),
              [](const Confirmed& a, const Confirmed& b) { return a.track_id < b.track_id; });
    if (times) {
        const auto t2 = clock::now();
        times->matching += std::chrono::duration<double>(t1 - t0).count();
        times->update += std::chrono::duration<double>(t2 - t1).count();
    }
    return confirmed;
}

}  // namespace quadtrack::tracker
