#include "quadtrack/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <omp.h>

#include "quadtrack/losses.hpp"
#include "quadtrack/tape.hpp"
#include "quadtrack/tracker.hpp"

namespace quadtrack::synth {

namespace {

// Stateless per-element noise so rendering parallelizes without reordering
// the random stream.
uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

float hash_uniform(uint64_t seed, uint64_t a, uint64_t b) {
    const uint64_t h = mix64(seed * 0x9e3779b97f4a7c15ull + a * 0xd1342543de82ef95ull + b + 1);
    return static_cast<float>(h >> 40) * (1.0f / 16777216.0f);  // [0, 1)
}

geometry::Quad translated(const geometry::Quad& q, double dx, double dy) {
    geometry::Quad out = q;
    for (auto& p : out.v) {
        p.x += dx;
        p.y += dy;
    }
    return out;
}

}  // namespace

void ScenarioConfig::validate() const {
    if (frames < 1) throw UsageError("scenario: frames must be >= 1");
    if (image_w < 8 || image_h < 8) throw UsageError("scenario: frame dims too small");
    if (scale <= 0.0) throw UsageError("scenario: scale must be > 0");
    if (feature_channels < 1) throw UsageError("scenario: need at least one feature channel");
    if (instances.empty()) throw UsageError("scenario: no instances");
    for (const InstanceSpec& inst : instances) {
        if (!inst.quad0.valid()) throw UsageError("scenario: invalid spawn quad");
        if (static_cast<int>(inst.signature.size()) != feature_channels) {
            throw UsageError("scenario: signature width must equal feature_channels");
        }
    }
    for (size_t i = 0; i < instances.size(); ++i) {
        for (size_t j = i + 1; j < instances.size(); ++j) {
            if (geometry::quad_iou(instances[i].quad0, instances[j].quad0) > 0.0) {
                throw UsageError("scenario rejected: instances overlap at spawn");
            }
        }
    }
    for (const OcclusionWindow& w : occlusions) {
        if (w.instance < 0 || w.instance >= static_cast<int>(instances.size())) {
            throw UsageError("scenario: occlusion names an unknown instance");
        }
        if (w.from < 0 || w.to > frames || w.from >= w.to) {
            throw UsageError("scenario: occlusion span outside frame range");
        }
    }
}

SyntheticSequence generate_sequence(const ScenarioConfig& cfg) {
    cfg.validate();
    SyntheticSequence seq;
    seq.config = cfg;
    seq.map_h = static_cast<int>(std::ceil(cfg.image_h / cfg.scale));
    seq.map_w = static_cast<int>(std::ceil(cfg.image_w / cfg.scale));
    seq.frames.resize(static_cast<size_t>(cfg.frames));

    const int n = static_cast<int>(cfg.instances.size());
    auto occluded = [&cfg](int inst, int frame) {
        for (const OcclusionWindow& w : cfg.occlusions) {
            if (w.instance == inst && frame >= w.from && frame < w.to) return true;
        }
        return false;
    };

    for (int t = 0; t < cfg.frames; ++t) {
        SyntheticFrame& fr = seq.frames[static_cast<size_t>(t)];

        std::vector<geometry::Quad> true_quads(static_cast<size_t>(n));
        std::vector<char> visible(static_cast<size_t>(n), 0);
        for (int i = 0; i < n; ++i) {
            const InstanceSpec& inst = cfg.instances[static_cast<size_t>(i)];
            true_quads[static_cast<size_t>(i)] = translated(inst.quad0, inst.vx * t, inst.vy * t);
            visible[static_cast<size_t>(i)] = occluded(i, t) ? 0 : 1;
            if (visible[static_cast<size_t>(i)]) {
                fr.gt.push_back(metrics::FrameObject{i, true_quads[static_cast<size_t>(i)]});
            }
        }

        // observed quads: vertex jitter + score jitter, one draw per value
        std::vector<geometry::Quad> observed;
        for (int i = 0; i < n; ++i) {
            if (!visible[static_cast<size_t>(i)]) continue;
            geometry::Quad q = true_quads[static_cast<size_t>(i)];
            if (cfg.vertex_jitter > 0.0) {
                geometry::Quad j = q;
                for (int k = 0; k < 4; ++k) {
                    const uint64_t key = (static_cast<uint64_t>(t) << 24) | (static_cast<uint64_t>(i) << 8) |
                                         static_cast<uint64_t>(k);
                    j.v[static_cast<size_t>(k)].x +=
                        (hash_uniform(cfg.seed, key, 11) * 2.0 - 1.0) * cfg.vertex_jitter;
                    j.v[static_cast<size_t>(k)].y +=
                        (hash_uniform(cfg.seed, key, 13) * 2.0 - 1.0) * cfg.vertex_jitter;
                }
                if (j.valid()) q = j;  // keep the clean quad if jitter degenerated it
            }
            if (cfg.score_jitter > 0.0f) {
                q.score = 1.0f - cfg.score_jitter *
                                     hash_uniform(cfg.seed, (static_cast<uint64_t>(t) << 24) | static_cast<uint64_t>(i), 17);
            }
            observed.push_back(q);
            fr.observed.push_back(metrics::FrameObject{i, q});
        }

        fr.targets = geometry::encode_targets(observed, seq.map_h, seq.map_w, cfg.scale);

        // render: signature inside the true quad (map coords), noise everywhere
        fr.features = Tensor({cfg.feature_channels, seq.map_h, seq.map_w});
        std::vector<geometry::Quad> map_quads(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            map_quads[static_cast<size_t>(i)] = true_quads[static_cast<size_t>(i)].scaled(1.0 / cfg.scale);
        }
        const int map_h = seq.map_h, map_w = seq.map_w;
#pragma omp parallel for schedule(static) num_threads(worker_threads())
        for (int y = 0; y < map_h; ++y) {
            for (int x = 0; x < map_w; ++x) {
                int hit = -1;
                for (int i = 0; i < n; ++i) {
                    if (visible[static_cast<size_t>(i)] &&
                        map_quads[static_cast<size_t>(i)].contains(
                            geometry::Vec2{static_cast<double>(x), static_cast<double>(y)})) {
                        hit = i;
                    }
                }
                for (int c = 0; c < cfg.feature_channels; ++c) {
                    float v = hit >= 0 ? cfg.instances[static_cast<size_t>(hit)].signature[static_cast<size_t>(c)]
                                       : 0.0f;
                    if (hit >= 0 && cfg.signature_flicker > 0.0f) {
                        // frame-wide appearance shift per instance (illumination, blur)
                        const uint64_t key = (static_cast<uint64_t>(t) << 20) |
                                             (static_cast<uint64_t>(hit) << 8) | static_cast<uint64_t>(c);
                        v += (hash_uniform(cfg.seed, key, 29) * 2.0f - 1.0f) * cfg.signature_flicker;
                    }
                    if (cfg.feature_noise > 0.0f) {
                        const uint64_t key = ((static_cast<uint64_t>(t) * 131 + static_cast<uint64_t>(c)) << 32) |
                                             (static_cast<uint64_t>(y) << 16) | static_cast<uint64_t>(x);
                        v += (hash_uniform(cfg.seed, key, 23) * 2.0f - 1.0f) * cfg.feature_noise;
                    }
                    fr.features.at(c, y, x) = v;
                }
            }
        }
    }
    return seq;
}

std::vector<metrics::GtTrack> SyntheticSequence::gt_tracks() const {
    std::vector<metrics::GtTrack> tracks;
    for (size_t i = 0; i < config.instances.size(); ++i) {
        tracks.push_back(metrics::GtTrack{static_cast<int>(i), {}});
    }
    for (int t = 0; t < static_cast<int>(frames.size()); ++t) {
        for (const metrics::FrameObject& o : frames[static_cast<size_t>(t)].gt) {
            tracks[static_cast<size_t>(o.id)].by_frame[t] = o.quad;
        }
    }
    return tracks;
}

ScenarioConfig static_scenario(int frames, uint64_t seed) {
    ScenarioConfig cfg;
    cfg.frames = frames;
    cfg.seed = seed;
    InstanceSpec inst;
    inst.quad0 = geometry::Quad::rect(120, 200, 280, 260);
    inst.signature = {0.9f, -0.6f, 0.4f, -0.2f, 0.7f, -0.8f, 0.3f, 0.5f};
    cfg.instances.push_back(inst);
    return cfg;
}

ScenarioConfig crossing_scenario(int frames, uint64_t seed) {
    ScenarioConfig cfg;
    cfg.frames = frames;
    cfg.seed = seed;
    // two instances swap x-order over the sequence; signatures well separated
    InstanceSpec a;
    a.quad0 = geometry::Quad::rect(60, 140, 180, 190);
    a.vx = 48.0;
    a.signature = {1.0f, -1.0f, 1.0f, -1.0f, 1.0f, -1.0f, 1.0f, -1.0f};
    InstanceSpec b;
    b.quad0 = geometry::Quad::rect(330, 300, 450, 350);
    b.vx = -48.0;
    b.signature = {-1.0f, 1.0f, -1.0f, 1.0f, -1.0f, 1.0f, -1.0f, 1.0f};
    cfg.instances = {a, b};
    return cfg;
}

ScenarioConfig random_scenario(int instances, int frames, uint64_t seed, bool with_occlusions,
                               float feature_noise, double vertex_jitter, bool paired_signatures,
                               bool crossing_pairs) {
    if (instances < 1 || instances > 12) throw UsageError("random_scenario: instances must be in [1, 12]");
    ScenarioConfig cfg;
    cfg.frames = frames;
    cfg.seed = seed;
    cfg.feature_noise = feature_noise;
    cfg.vertex_jitter = vertex_jitter;
    Rng rng(seed * 77 + 3);

    // spawn cells on a 3 x 4 grid so instances never overlap at frame 0
    const int cols = 3, rows = 4;
    std::vector<int> cells(static_cast<size_t>(cols * rows));
    std::iota(cells.begin(), cells.end(), 0);
    for (size_t i = cells.size() - 1; i > 0; --i) std::swap(cells[i], cells[rng.below(static_cast<uint32_t>(i + 1))]);

    for (int i = 0; i < instances; ++i) {
        const int cell = cells[static_cast<size_t>(i)];
        const double cx = 40.0 + (cell % cols) * 160.0 + rng.uniform(0.0f, 30.0f);
        const double cy = 30.0 + (cell / cols) * 115.0 + rng.uniform(0.0f, 25.0f);
        const double w = 90.0 + rng.uniform(0.0f, 30.0f);
        const double h = 36.0 + rng.uniform(0.0f, 14.0f);
        InstanceSpec inst;
        inst.quad0 = geometry::Quad::rect(cx, cy, cx + w, cy + h);
        inst.vx = rng.uniform(-3.0f, 3.0f);
        inst.vy = rng.uniform(-2.0f, 2.0f);
        inst.signature.resize(static_cast<size_t>(cfg.feature_channels));
        for (float& s : inst.signature) s = rng.uniform(-1.0f, 1.0f);
        cfg.instances.push_back(inst);
    }
    if (paired_signatures) {
        for (int i = 0; i + 1 < instances; i += 2) {
            cfg.instances[static_cast<size_t>(i + 1)].signature = cfg.instances[static_cast<size_t>(i)].signature;
        }
    }
    if (crossing_pairs) {
        // aim paired instances at each other so their paths cross mid-sequence
        for (int i = 0; i + 1 < instances; i += 2) {
            InstanceSpec& a = cfg.instances[static_cast<size_t>(i)];
            InstanceSpec& b = cfg.instances[static_cast<size_t>(i + 1)];
            const geometry::Vec2 ca = a.quad0.centroid();
            const geometry::Vec2 cb = b.quad0.centroid();
            const double f = std::max(1, frames - 1);
            a.vx = (cb.x - ca.x) / f;
            a.vy = (cb.y - ca.y) / f;
            b.vx = -a.vx;
            b.vy = -a.vy;
        }
    }
    if (with_occlusions) {
        for (int i = 0; i < instances; ++i) {
            if (frames < 10) break;
            const int len = 2 + static_cast<int>(rng.below(4));
            const int from = 2 + static_cast<int>(rng.below(static_cast<uint32_t>(frames - len - 3)));
            cfg.occlusions.push_back(OcclusionWindow{i, from, from + len});
        }
    }
    return cfg;
}

ScenarioConfig ablation_scenario(int frames, uint64_t seed, bool with_occlusions, float feature_noise,
                                 double vertex_jitter, float signature_flicker) {
    ScenarioConfig cfg;
    cfg.frames = frames;
    cfg.seed = seed;
    cfg.feature_noise = feature_noise;
    cfg.vertex_jitter = vertex_jitter;
    cfg.signature_flicker = signature_flicker;
    Rng rng(seed * 191 + 17);

    auto spawn = [&rng](double cx, double cy) {
        const double w = 96.0 + rng.uniform(0.0f, 24.0f);
        const double h = 38.0 + rng.uniform(0.0f, 10.0f);
        InstanceSpec inst;
        inst.quad0 = geometry::Quad::rect(cx, cy, cx + w, cy + h);
        inst.vx = rng.uniform(-1.5f, 1.5f);
        inst.vy = rng.uniform(-1.0f, 1.0f);
        inst.signature.resize(8);
        for (float& s : inst.signature) s = rng.uniform(-1.0f, 1.0f);
        return inst;
    };

    // appearance twins in the top band: identical signatures, disjoint paths
    InstanceSpec twin_a = spawn(40 + rng.uniform(0.0f, 20.0f), 30);
    InstanceSpec twin_b = spawn(300 + rng.uniform(0.0f, 20.0f), 95);
    twin_b.signature = twin_a.signature;
    // crossers in the middle band: distinct signatures, paths that swap
    InstanceSpec cross_a = spawn(50 + rng.uniform(0.0f, 15.0f), 210);
    InstanceSpec cross_b = spawn(330 + rng.uniform(0.0f, 15.0f), 265);
    // opposite strong signatures: appearance stays decisive at the crossing
    for (int c = 0; c < 8; ++c) {
        cross_a.signature[static_cast<size_t>(c)] = (rng.uniform() < 0.5f ? -1.0f : 1.0f) * rng.uniform(0.6f, 1.0f);
        cross_b.signature[static_cast<size_t>(c)] = -cross_a.signature[static_cast<size_t>(c)];
    }
    {
        const geometry::Vec2 ca = cross_a.quad0.centroid();
        const geometry::Vec2 cb = cross_b.quad0.centroid();
        const double f = std::max(1, frames - 1);
        cross_a.vx = (cb.x - ca.x) / f;
        cross_a.vy = (cb.y - ca.y) / f;
        cross_b.vx = -cross_a.vx;
        cross_b.vy = -cross_a.vy;
    }
    // plain instances in the bottom band
    InstanceSpec plain_a = spawn(60 + rng.uniform(0.0f, 20.0f), 380);
    InstanceSpec plain_b = spawn(330 + rng.uniform(0.0f, 20.0f), 440);
    cfg.instances = {twin_a, twin_b, cross_a, cross_b, plain_a, plain_b};

    if (with_occlusions && frames >= 12) {
        for (int i = 0; i < 6; ++i) {
            const int len = 3 + static_cast<int>(rng.below(3));
            const int from = 2 + static_cast<int>(rng.below(static_cast<uint32_t>(frames - len - 3)));
            cfg.occlusions.push_back(OcclusionWindow{i, from, from + len});
        }
    }
    return cfg;
}

BruteForceResult brute_force_assignment(const Tensor& cost) {
    if (cost.rank() != 2 || cost.dim(0) != cost.dim(1)) {
        throw UsageError("brute_force_assignment: cost must be square, got " + cost.shape_str());
    }
    const int n = cost.dim(0);
    if (n > 8) throw UsageError("brute_force_assignment: refused for n > 8");
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    BruteForceResult best;
    best.total = std::numeric_limits<double>::infinity();
    std::vector<int> best_perm;
    do {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += cost.at(i, perm[static_cast<size_t>(i)]);
        if (total < best.total) {
            best.total = total;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (int i = 0; i < n; ++i) best.matching.emplace_back(i, best_perm[static_cast<size_t>(i)]);
    return best;
}

double monte_carlo_iou(const geometry::Quad& a, const geometry::Quad& b, int samples, uint64_t seed) {
    if (samples < 10000) throw UsageError("monte_carlo_iou: need at least 10^4 samples");
    double min_x = a.v[0].x, max_x = a.v[0].x, min_y = a.v[0].y, max_y = a.v[0].y;
    for (const geometry::Quad* q : {&a, &b}) {
        for (const geometry::Vec2& p : q->v) {
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_y = std::min(min_y, p.y);
            max_y = std::max(max_y, p.y);
        }
    }
    Rng rng(seed);
    int64_t in_a = 0, in_b = 0, in_both = 0;
    for (int s = 0; s < samples; ++s) {
        const geometry::Vec2 p{min_x + (max_x - min_x) * rng.uniform(), min_y + (max_y - min_y) * rng.uniform()};
        const bool ia = a.contains(p);
        const bool ib = b.contains(p);
        in_a += ia;
        in_b += ib;
        in_both += ia && ib;
    }
    const int64_t in_union = in_a + in_b - in_both;
    if (in_union <= 0) return 0.0;
    return static_cast<double>(in_both) / static_cast<double>(in_union);
}

DescriptorTable extract_descriptor_table(const SyntheticSequence& seq) {
    if (!seq.config.occlusions.empty()) {
        throw UsageError("extract_descriptor_table: requires an occlusion-free sequence");
    }
    const int n = static_cast<int>(seq.config.instances.size());
    DescriptorTable table;
    table.appearance.resize(seq.frames.size());
    table.coords.resize(seq.frames.size());
    for (size_t t = 0; t < seq.frames.size(); ++t) {
        const SyntheticFrame& fr = seq.frames[t];
        table.appearance[t].resize(static_cast<size_t>(n));
        table.coords[t].resize(static_cast<size_t>(n));
        for (const metrics::FrameObject& o : fr.observed) {
            const geometry::Quad map_quad = o.quad.scaled(1.0 / seq.config.scale);
            table.appearance[t][static_cast<size_t>(o.id)] = descriptor::pooled_appearance(fr.features, map_quad);
            table.coords[t][static_cast<size_t>(o.id)] =
                descriptor::normalized_coords(o.quad, seq.config.image_w, seq.config.image_h);
        }
    }
    return table;
}

namespace {

// association accuracy of the trained pair (geometry embed + GRU) on held-out
// sequences: a frame counts as correct when Kuhn-Munkres on the
// EAGD_{t-1} x AGD_t distances returns the identity correspondence
double holdout_accuracy(const std::vector<DescriptorTable>& tables, const descriptor::GeometryEmbedParams& geo,
                        const recurrent::GruParams& gru) {
    int correct = 0, total = 0;
    for (const DescriptorTable& table : tables) {
        const int frames = static_cast<int>(table.appearance.size());
        const int n = frames > 0 ? static_cast<int>(table.appearance[0].size()) : 0;
        if (n == 0) continue;
        std::vector<Tensor> h(static_cast<size_t>(n), Tensor({gru.hidden()}));
        std::vector<Tensor> prev_eagd(static_cast<size_t>(n));
        for (int t = 0; t < frames; ++t) {
            std::vector<Tensor> agd(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                const Tensor f_g = descriptor::geometry_feature(
                    nullptr, ad::constant(table.coords[static_cast<size_t>(t)][static_cast<size_t>(i)]),
                    descriptor::GeometryEmbedNodes::bind(nullptr, geo)).v;
                agd[static_cast<size_t>(i)] =
                    kernels::concat({table.appearance[static_cast<size_t>(t)][static_cast<size_t>(i)], f_g}, 0);
            }
            if (t > 0) {
                const Tensor cost = tracker::similarity_matrix(prev_eagd, agd);
                const auto pairs = tracker::kuhn_munkres(cost, 1e9);
                bool ok = static_cast<int>(pairs.size()) == n;
                for (const auto& [i, j] : pairs) ok = ok && i == j;
                correct += ok;
                total += 1;
            }
            for (int i = 0; i < n; ++i) {
                auto [out, hh] = recurrent::gru_step(agd[static_cast<size_t>(i)], h[static_cast<size_t>(i)], gru);
                prev_eagd[static_cast<size_t>(i)] = out;
                h[static_cast<size_t>(i)] = hh;
            }
        }
    }
    return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

}  // namespace

ToyTrainResult toy_train(const ToyTrainConfig& cfg) {
    if (cfg.steps < 1) throw UsageError("toy_train: steps must be >= 1");
    if (cfg.train_sequences < 1 || cfg.eval_sequences < 1) throw UsageError("toy_train: need train and eval sequences");

    // materialize training and held-out descriptor tables up front
    auto build_scenario = [&cfg](uint64_t seed) {
        ScenarioConfig scen = cfg.world == ToyTrainConfig::World::Ablation
                                  ? ablation_scenario(cfg.frames, seed, false, cfg.feature_noise, cfg.vertex_jitter,
                                                      cfg.signature_flicker)
                                  : random_scenario(cfg.instances, cfg.frames, seed, false, cfg.feature_noise,
                                                    cfg.vertex_jitter);
        scen.feature_channels = cfg.feature_channels;
        scen.signature_flicker = cfg.signature_flicker;
        if (cfg.world != ToyTrainConfig::World::Ablation) {
            scen.image_w = cfg.image_w;
            scen.image_h = cfg.image_h;
        }
        scen.scale = cfg.scale;
        scen.score_jitter = cfg.score_jitter;
        if (cfg.world == ToyTrainConfig::World::Ablation) {
            // signatures were drawn at width 8; re-check the requested width
            for (auto& inst : scen.instances) inst.signature.resize(static_cast<size_t>(cfg.feature_channels), 0.0f);
        }
        return scen;
    };
    std::vector<DescriptorTable> train_tables, eval_tables;
    for (int s = 0; s < cfg.train_sequences; ++s) {
        train_tables.push_back(extract_descriptor_table(generate_sequence(build_scenario(cfg.seed + static_cast<uint64_t>(s)))));
    }
    for (int s = 0; s < cfg.eval_sequences; ++s) {
        eval_tables.push_back(
            extract_descriptor_table(generate_sequence(build_scenario(cfg.seed + 100000 + static_cast<uint64_t>(s)))));
    }

    const int width = cfg.feature_channels + cfg.geometry_out;
    Rng rng(cfg.seed * 1315423911ull + 5);
    ToyTrainResult result;
    result.geometry = descriptor::GeometryEmbedParams::seeded(rng, cfg.geometry_hidden, cfg.geometry_out);
    result.gru = recurrent::GruParams::seeded(width, width, rng);

    losses::LossWeights weights;
    weights.margin = cfg.margin;

    ToyTrainReport& report = result.report;
    int divergent_streak = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        const DescriptorTable& table = train_tables[static_cast<size_t>(step % cfg.train_sequences)];
        const int frames = static_cast<int>(table.appearance.size());
        const int n = static_cast<int>(table.appearance[0].size());

        ad::Tape tape;
        auto geo_nodes = descriptor::GeometryEmbedNodes::bind(&tape, result.geometry);
        auto gru_nodes = recurrent::GruNodes::bind(&tape, result.gru);

        std::vector<ad::Value> h(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) h[static_cast<size_t>(i)] = ad::constant(Tensor({width}));
        std::vector<ad::Value> prev_eagd(static_cast<size_t>(n));
        std::vector<ad::Value> frame_losses;
        std::vector<ad::Value> agd(static_cast<size_t>(n));
        for (int t = 0; t < frames; ++t) {
            for (int i = 0; i < n; ++i) {
                ad::Value f_g = descriptor::geometry_feature(
                    &tape, ad::constant(table.coords[static_cast<size_t>(t)][static_cast<size_t>(i)]), geo_nodes);
                agd[static_cast<size_t>(i)] = ad::concat(
                    &tape, {ad::constant(table.appearance[static_cast<size_t>(t)][static_cast<size_t>(i)]), f_g});
            }
            if (t > 0) {
                losses::PairLabels labels(n, n);
                for (int i = 0; i < n; ++i) labels.mark_positive(i, i);
                frame_losses.push_back(losses::contrastive_track_loss(&tape, prev_eagd, agd, labels, weights));
            }
            for (int i = 0; i < n; ++i) {
                recurrent::GruStep s = recurrent::gru_step(&tape, agd[static_cast<size_t>(i)],
                                                           h[static_cast<size_t>(i)], gru_nodes);
                prev_eagd[static_cast<size_t>(i)] = s.out;
                h[static_cast<size_t>(i)] = s.h;
            }
        }
        if (frame_losses.empty()) throw UsageError("toy_train: need at least 2 frames per sequence");
        ad::Value loss = frame_losses.front();
        for (size_t i = 1; i < frame_losses.size(); ++i) loss = ad::add(&tape, loss, frame_losses[i]);
        loss = ad::affine(&tape, loss, 1.0f / static_cast<float>(frame_losses.size()), 0.0f);

        const double loss_value = loss.v[0];
        report.loss_curve.push_back(loss_value);
        if (step == 0) report.initial_loss = loss_value;
        if (loss_value > 10.0 * report.initial_loss && step > 0) {
            if (++divergent_streak >= 100) {
                throw Error("toy_train diverged: loss " + std::to_string(loss_value) + " > 10x initial " +
                            std::to_string(report.initial_loss) + " for 100 consecutive steps (step " +
                            std::to_string(step) + ")");
            }
        } else {
            divergent_streak = 0;
        }

        const auto grads = tape.backward(loss.id);
        auto sgd = [&](Tensor& param, ad::NodeId id) {
            const Tensor& g = grads[static_cast<size_t>(id)];
            for (int64_t k = 0; k < param.numel(); ++k) param[k] -= cfg.learning_rate * g[k];
        };
        sgd(result.geometry.w1, geo_nodes.w1.id);
        sgd(result.geometry.b1, geo_nodes.b1.id);
        sgd(result.geometry.w2, geo_nodes.w2.id);
        sgd(result.geometry.b2, geo_nodes.b2.id);
        sgd(result.gru.w_z, gru_nodes.w_z.id);
        sgd(result.gru.w_r, gru_nodes.w_r.id);
        sgd(result.gru.w_h, gru_nodes.w_h.id);
        sgd(result.gru.b_z, gru_nodes.b_z.id);
        sgd(result.gru.b_r, gru_nodes.b_r.id);
        sgd(result.gru.b_h, gru_nodes.b_h.id);
        report.steps_run = step + 1;
    }

    report.final_loss = report.loss_curve.back();
    report.holdout_accuracy = holdout_accuracy(eval_tables, result.geometry, result.gru);
    return result;
}

}  // namespace quadtrack::synth
