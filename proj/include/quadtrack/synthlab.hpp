#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "quadtrack/descriptor.hpp"
#include "quadtrack/geometry.hpp"
#include "quadtrack/metrics.hpp"
#include "quadtrack/recurrent.hpp"

namespace quadtrack::synth {

/// One moving text instance: spawn quad, linear velocity, and the constant
/// per-channel signature painted into the feature map.
struct InstanceSpec {
    geometry::Quad quad0;
    double vx = 0.0, vy = 0.0;
    std::vector<float> signature;
};

/// Half-open frame span [from, to) during which an instance is hidden.
struct OcclusionWindow {
    int instance = 0;
    int from = 0;
    int to = 0;
};

struct ScenarioConfig {
    int frames = 10;
    int image_w = 512, image_h = 512;
    double scale = 4.0;  // image-to-map downsampling
    int feature_channels = 8;
    std::vector<InstanceSpec> instances;
    std::vector<OcclusionWindow> occlusions;
    float feature_noise = 0.0f;      // additive uniform per-pixel noise on the maps
    float signature_flicker = 0.0f;  // per-instance-per-frame signature shift amplitude
    double vertex_jitter = 0.0;      // px perturbation of observed (detected) quads
    float score_jitter = 0.0f;       // observed score = 1 - u * score_jitter
    uint64_t seed = 1;

    void validate() const;
};

struct SyntheticFrame {
    Tensor features;                             // [C x map_h x map_w]
    geometry::DetectionMaps targets;             // encoded from the observed quads
    std::vector<metrics::FrameObject> gt;        // true quads of visible instances
    std::vector<metrics::FrameObject> observed;  // jittered detector-style quads
};

struct SyntheticSequence {
    ScenarioConfig config;
    int map_h = 0, map_w = 0;
    std::vector<SyntheticFrame> frames;

    std::vector<metrics::GtTrack> gt_tracks() const;
};

// Deterministic given the seed: motion is linear, occluded instances vanish
// from the maps and the observed set but keep their identity.
SyntheticSequence generate_sequence(const ScenarioConfig& cfg);

// Presets used by the tests and the synth CLI.
ScenarioConfig static_scenario(int frames = 3, uint64_t seed = 1);
ScenarioConfig crossing_scenario(int frames = 5, uint64_t seed = 1);
// K instances with random spawn cells, velocities and signatures; optional
// occlusion windows; `paired_signatures` gives instances 2i and 2i+1 the same
// signature (appearance-ambiguous pairs).
ScenarioConfig random_scenario(int instances, int frames, uint64_t seed, bool with_occlusions,
                               float feature_noise, double vertex_jitter, bool paired_signatures = false,
                               bool crossing_pairs = false);

// The occlusion benchmark world: six instances where 0/1 are appearance
// twins (identical signatures, separate paths), 2/3 cross mid-sequence with
// distinct signatures, 4/5 are plain; optional staggered occlusion windows.
ScenarioConfig ablation_scenario(int frames, uint64_t seed, bool with_occlusions, float feature_noise,
                                 double vertex_jitter, float signature_flicker = 0.0f);

struct BruteForceResult {
    std::vector<std::pair<int, int>> matching;
    double total = 0.0;
};

// Exact minimum assignment by enumerating all n! permutations; refuses n > 8.
BruteForceResult brute_force_assignment(const Tensor& cost);

// Uniform point sampling over the joint bounding box; requires >= 10^4 samples.
double monte_carlo_iou(const geometry::Quad& a, const geometry::Quad& b, int samples, uint64_t seed);

struct ToyTrainConfig {
    int instances = 2;
    int frames = 12;
    int train_sequences = 16;
    int eval_sequences = 8;
    int steps = 2000;
    float learning_rate = 0.05f;
    uint64_t seed = 7;
    int feature_channels = 8;
    float feature_noise = 0.15f;
    float signature_flicker = 0.0f;
    double vertex_jitter = 1.0;
    float score_jitter = 0.0f;
    enum class World { Plain, Ablation };
    World world = World::Plain;
    int geometry_hidden = 16;
    int geometry_out = 8;
    float margin = 1.0f;
    int image_w = 512, image_h = 512;
    double scale = 4.0;
};

struct ToyTrainReport {
    std::vector<double> loss_curve;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double holdout_accuracy = 0.0;
    int steps_run = 0;
};

struct ToyTrainResult {
    descriptor::GeometryEmbedParams geometry;
    recurrent::GruParams gru;
    ToyTrainReport report;
};

// Plain SGD on the contrastive loss over descriptor pairs drawn from
// synthetic sequences. The appearance cue is the ROI-pooled map signature;
// only the geometry embedding and the GRU train. Aborts with diagnostics if
// the loss exceeds 10x its initial value for 100 consecutive steps.
ToyTrainResult toy_train(const ToyTrainConfig& cfg);

// Descriptor tables the trainer and the evaluators share: element [t][i] is
// instance i's descriptor input at frame t (ROI-pooled appearance and the
// normalized coordinate vector of the observed quad).
struct DescriptorTable {
    std::vector<std::vector<Tensor>> appearance;  // [frames][instances], width C
    std::vector<std::vector<Tensor>> coords;      // [frames][instances], width 8
};

DescriptorTable extract_descriptor_table(const SyntheticSequence& seq);

}  // namespace quadtrack::synth
