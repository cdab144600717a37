#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "quadtrack/geometry.hpp"
#include "quadtrack/metrics.hpp"
#include "quadtrack/tape.hpp"
#include "quadtrack/tracker.hpp"

namespace quadtrack::io {

// Binary tensor file: magic "QTNS", u8 version=1, u32 rank, u32 dims[rank],
// then little-endian f32 payload, row-major.
void write_qtns(const std::string& path, const Tensor& t);
Tensor read_qtns(const std::string& path);

struct TrajectoryRecord {
    int frame = 0;
    int track_id = 0;
    geometry::Quad quad;  // quad.score carries the confidence
};

struct GtRecord {
    int frame = 0;
    int id = 0;
    geometry::Quad quad;
};

void write_trajectories(const std::string& path, const std::vector<TrajectoryRecord>& records);
std::vector<TrajectoryRecord> read_trajectories(const std::string& path);

void write_gt(const std::string& path, const std::vector<GtRecord>& records);
std::vector<GtRecord> read_gt(const std::string& path);

// {"frame":..., "proposal_index":..., "agd":[...]} debug stream
void write_descriptor_dump(const std::string& path,
                           const std::vector<std::pair<std::pair<int, int>, Tensor>>& rows);

// Per-frame detection stream: {"quad":[8 floats], "score":...} rows.
std::vector<geometry::Quad> read_detections(const std::string& path);
void write_detections(const std::string& path, const std::vector<geometry::Quad>& quads);

struct FrameManifestEntry {
    int frame = 0;
    std::string tensor;      // QTNS path, relative to the manifest
    std::string detections;  // optional precomputed detection JSONL
};

void write_manifest(const std::string& path, const std::vector<FrameManifestEntry>& entries);
// Validates that frame indices are contiguous from 0; aborts naming the gap.
std::vector<FrameManifestEntry> read_manifest(const std::string& path);

// Parameter checkpoint: a JSONL manifest of {"name","shape","file"} rows next
// to one QTNS file per tensor.
void save_parameter_set(const std::string& manifest_path, const ad::ParameterSet& params);
ad::ParameterSet load_parameter_set(const std::string& manifest_path);

// conversions between metric inputs and record streams
std::vector<metrics::GtTrack> gt_tracks_from_records(const std::vector<GtRecord>& records);
metrics::FrameMap frame_map_from_trajectories(const std::vector<TrajectoryRecord>& records);

std::string dirname(const std::string& path);
std::string join_path(const std::string& dir, const std::string& leaf);

}  // namespace quadtrack::io
