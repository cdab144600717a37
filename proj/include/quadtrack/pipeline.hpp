#pragma once

#include <optional>
#include <string>
#include <vector>

#include "quadtrack/descriptor.hpp"
#include "quadtrack/io.hpp"
#include "quadtrack/recurrent.hpp"
#include "quadtrack/tracker.hpp"

namespace quadtrack::pipeline {

struct RunConfig {
    tracker::TrackerConfig tracker;
    double nms_iou = 0.2;
    double stride = 4.0;  // feature-map downsampling vs image coordinates

    enum class DescriptorMode { Appearance, Geometry, Agd };
    DescriptorMode descriptor_mode = DescriptorMode::Agd;

    enum class AppearanceSource { Head, Pooled };
    AppearanceSource appearance_source = AppearanceSource::Head;

    bool use_convlstm = false;
    std::string params_path;  // optional parameter manifest
    uint64_t seed = 1;        // init seed for parameters not in the manifest

    int roi_w = 64, roi_h = 8;
    int appearance_width = 128;  // conv-head output channels
    int head_c1 = 32, head_c2 = 64;
    int geometry_hidden = 16, geometry_out = 8;

    // descriptor width given the frame tensors' feature channel count
    int descriptor_width(int feature_channels) const;
    void validate() const;
};

RunConfig parse_config(const std::string& path);
std::string render_config(const RunConfig& cfg);

/// Parameters resolved from the manifest plus seeded defaults; the head and
/// ConvLSTM are sized on the first frame (channel count comes from data).
struct ModelParams {
    descriptor::GeometryEmbedParams geometry;
    recurrent::GruParams gru;
    std::optional<descriptor::AppearanceHeadParams> head;
    std::optional<recurrent::ConvLstmParams> convlstm;
};

struct StageTimes {
    double ingest = 0.0;
    double convlstm = 0.0;
    double decode = 0.0;
    double nms = 0.0;
    double descriptors = 0.0;
    double matching = 0.0;
    double update = 0.0;
    int frames = 0;

    double total() const { return ingest + convlstm + decode + nms + descriptors + matching + update; }
};

struct FrameResult {
    int frame;
    std::vector<tracker::Confirmed> confirmed;
};

struct PipelineResult {
    std::vector<FrameResult> frames;
    tracker::TrackerState state;
    StageTimes times;
    int decode_skipped = 0;
    std::vector<std::pair<std::pair<int, int>, Tensor>> descriptor_dump;  // when requested

    std::vector<io::TrajectoryRecord> trajectory_records() const;  // (track_id, frame) order
    std::vector<io::TrajectoryRecord> confirmed_records() const;   // (frame, track_id) order
};

struct PipelineOptions {
    bool collect_descriptor_dump = false;
};

// Full run over a frame manifest: ingest -> optional ConvLSTM smoothing ->
// decode (or precomputed detections) -> NMS / top-K -> descriptors ->
// tracker. Tensor paths resolve relative to `base_dir`.
PipelineResult run_pipeline(const RunConfig& cfg, const std::vector<io::FrameManifestEntry>& manifest,
                            const std::string& base_dir, const PipelineOptions& opts = {});

// In-memory variant used by the synthetic harness and the benchmarks.
struct FrameData {
    int frame = 0;
    std::optional<geometry::DetectionMaps> maps;        // decoded when present
    std::optional<Tensor> features;                     // [C x H x W]
    std::optional<std::vector<geometry::Quad>> quads;   // precomputed detections
};

PipelineResult run_pipeline_frames(const RunConfig& cfg, const std::vector<FrameData>& frames,
                                   const PipelineOptions& opts = {});

// Parameter resolution exposed for tests and the trainer handoff.
ModelParams resolve_params(const RunConfig& cfg, int feature_channels, bool need_head, bool need_convlstm);
ad::ParameterSet to_parameter_set(const ModelParams& params);

}  // namespace quadtrack::pipeline
