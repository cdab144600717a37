#include "quadtrack/metrics.hpp"

#include <algorithm>
#include <set>

#include "quadtrack/tracker.hpp"

namespace quadtrack::metrics {

namespace {
constexpr double kInvalid = 1e6;  // cost sentinel for sub-threshold pairs

const FrameObject* find_by_id(const std::vector<FrameObject>& objs, int id) {
    for (const FrameObject& o : objs) {
        if (o.id == id) return &o;
    }
    return nullptr;
}
}  // namespace

std::vector<Correspondence> match_frame(const std::vector<FrameObject>& gt, const std::vector<FrameObject>& hyp,
                                        const std::map<int, int>& prev_corr, double iou_thresh) {
    if (iou_thresh <= 0.0 || iou_thresh >= 1.0) throw UsageError("match_frame: iou_thresh must be in (0,1)");
    std::vector<Correspondence> out;
    std::set<int> used_gt, used_hyp;

    // persistence: previous pairs survive while both exist and still overlap
    for (const auto& [gid, hid] : prev_corr) {
        const FrameObject* g = find_by_id(gt, gid);
        const FrameObject* h = find_by_id(hyp, hid);
        if (!g || !h) continue;
        const double iou = geometry::quad_iou(g->quad, h->quad);
        if (iou >= iou_thresh) {
            out.push_back(Correspondence{gid, hid, iou});
            used_gt.insert(gid);
            used_hyp.insert(hid);
        }
    }

    std::vector<const FrameObject*> rem_gt, rem_hyp;
    for (const FrameObject& g : gt) {
        if (!used_gt.count(g.id)) rem_gt.push_back(&g);
    }
    for (const FrameObject& h : hyp) {
        if (!used_hyp.count(h.id)) rem_hyp.push_back(&h);
    }
    if (!rem_gt.empty() && !rem_hyp.empty()) {
        Tensor cost({static_cast<int>(rem_gt.size()), static_cast<int>(rem_hyp.size())});
        std::vector<std::vector<double>> ious(rem_gt.size(), std::vector<double>(rem_hyp.size()));
        for (size_t i = 0; i < rem_gt.size(); ++i) {
            for (size_t j = 0; j < rem_hyp.size(); ++j) {
                const double iou = geometry::quad_iou(rem_gt[i]->quad, rem_hyp[j]->quad);
                ious[i][j] = iou;
                cost.at(static_cast<int>(i), static_cast<int>(j)) =
                    static_cast<float>(iou >= iou_thresh ? 1.0 - iou : kInvalid);
            }
        }
        for (const auto& [i, j] : tracker::kuhn_munkres(cost, 2.0)) {
            out.push_back(Correspondence{rem_gt[static_cast<size_t>(i)]->id, rem_hyp[static_cast<size_t>(j)]->id,
                                         ious[static_cast<size_t>(i)][static_cast<size_t>(j)]});
        }
    }
    std::sort(out.begin(), out.end(), [](const Correspondence& a, const Correspondence& b) {
        return a.gt_id < b.gt_id;
    });
    return out;
}

MotReport mot_metrics(const std::vector<GtTrack>& gt, const FrameMap& hyp, double iou_thresh) {
    FrameMap gt_frames = to_frame_map(gt);
    if (gt_frames.empty()) throw DataError("mot_metrics: empty ground truth, MOTA undefined");

    std::set<int> frames;
    for (const auto& [f, _] : gt_frames) frames.insert(f);
    for (const auto& [f, _] : hyp) frames.insert(f);

    MotReport report;
    double iou_sum = 0.0;
    std::map<int, int> corr;        // persisting correspondences fed to match_frame
    std::map<int, int> last_match;  // last hypothesis ever matched per gt id, for switches
    static const std::vector<FrameObject> empty;
    for (int f : frames) {
        auto git = gt_frames.find(f);
        auto hit = hyp.find(f);
        const std::vector<FrameObject>& g = git != gt_frames.end() ? git->second : empty;
        const std::vector<FrameObject>& h = hit != hyp.end() ? hit->second : empty;
        report.gt_total += static_cast<int64_t>(g.size());

        const auto pairs = match_frame(g, h, corr, iou_thresh);
        corr.clear();
        for (const Correspondence& c : pairs) {
            auto last = last_match.find(c.gt_id);
            if (last != last_match.end() && last->second != c.hyp_id) report.id_switches += 1;
            last_match[c.gt_id] = c.hyp_id;
            corr[c.gt_id] = c.hyp_id;
            iou_sum += c.iou;
        }
        report.matches += static_cast<int64_t>(pairs.size());
        report.misses += static_cast<int64_t>(g.size() - pairs.size());
        report.false_positives += static_cast<int64_t>(h.size() - pairs.size());
    }

    report.mota = 100.0 * (1.0 - static_cast<double>(report.misses + report.false_positives + report.id_switches) /
                                     static_cast<double>(report.gt_total));
    if (report.matches > 0) {
        report.motp = 100.0 * iou_sum / static_cast<double>(report.matches);
        report.motp_defined = true;
    }
    return report;
}

Prf detection_prf(const FrameMap& gt, const FrameMap& det, double iou_thresh) {
    Prf out;
    std::set<int> frames;
    for (const auto& [f, _] : gt) frames.insert(f);
    for (const auto& [f, _] : det) frames.insert(f);
    static const std::vector<FrameObject> empty;
    static const std::map<int, int> no_corr;
    for (int f : frames) {
        auto git = gt.find(f);
        auto dit = det.find(f);
        // ids play no role here; reindex by position so duplicates cannot collide
        std::vector<FrameObject> g = git != gt.end() ? git->second : empty;
        std::vector<FrameObject> d = dit != det.end() ? dit->second : empty;
        for (size_t i = 0; i < g.size(); ++i) g[i].id = static_cast<int>(i);
        for (size_t i = 0; i < d.size(); ++i) d[i].id = static_cast<int>(i);
        const auto pairs = match_frame(g, d, no_corr, iou_thresh);
        out.tp += static_cast<int64_t>(pairs.size());
        out.fn += static_cast<int64_t>(g.size() - pairs.size());
        out.fp += static_cast<int64_t>(d.size() - pairs.size());
    }
    out.precision = out.tp + out.fp > 0 ? static_cast<double>(out.tp) / static_cast<double>(out.tp + out.fp) : 0.0;
    out.recall = out.tp + out.fn > 0 ? static_cast<double>(out.tp) / static_cast<double>(out.tp + out.fn) : 0.0;
    out.f_measure = out.precision + out.recall > 0.0
                        ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                        : 0.0;
    return out;
}

FrameMap to_frame_map(const std::vector<GtTrack>& tracks) {
    FrameMap map;
    for (const GtTrack& t : tracks) {
        for (const auto& [frame, quad] : t.by_frame) {
            auto& objs = map[frame];
            for (const FrameObject& o : objs) {
                if (o.id == t.id) throw DataError("duplicate ground-truth id " + std::to_string(t.id) +
                                                  " in frame " + std::to_string(frame));
            }
            objs.push_back(FrameObject{t.id, quad});
        }
    }
    return map;
}

}  // namespace quadtrack::metrics
