#include "quadtrack/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

namespace quadtrack::pipeline {

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point start) {
    return std::chrono::duration<double>(clock_type::now() - start).count();
}

Tensor slice_channels(const Tensor& t, int from, int count) {
    const int h = t.dim(1), w = t.dim(2);
    Tensor out({count, h, w});
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int c = 0; c < count; ++c) {
        const float* src = t.data() + (from + c) * plane;
        float* dst = out.data() + c * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] = src[i];
    }
    return out;
}

}  // namespace

int RunConfig::descriptor_width(int feature_channels) const {
    const int app_w = appearance_source == AppearanceSource::Head ? appearance_width : feature_channels;
    switch (descriptor_mode) {
        case DescriptorMode::Appearance: return app_w;
        case DescriptorMode::Geometry: return geometry_out;
        case DescriptorMode::Agd: return app_w + geometry_out;
    }
    return 0;
}

void RunConfig::validate() const {
    tracker.validate();
    if (nms_iou <= 0.0 || nms_iou >= 1.0) throw UsageError("config: nms_iou must be in (0,1)");
    if (stride <= 0.0) throw UsageError("config: stride must be > 0");
    if (roi_w < 2 || roi_h < 2) throw UsageError("config: roi dims must be >= 2");
    if (appearance_width < 1 || geometry_out < 1 || geometry_hidden < 1) {
        throw UsageError("config: descriptor widths must be >= 1");
    }
}

namespace {

const std::map<std::string, RunConfig::DescriptorMode> kModeNames = {
    {"appearance", RunConfig::DescriptorMode::Appearance},
    {"geometry", RunConfig::DescriptorMode::Geometry},
    {"agd", RunConfig::DescriptorMode::Agd},
};
const std::map<std::string, RunConfig::AppearanceSource> kSourceNames = {
    {"head", RunConfig::AppearanceSource::Head},
    {"pooled", RunConfig::AppearanceSource::Pooled},
};
const std::map<std::string, tracker::TrackerConfig::Matching> kMatchingNames = {
    {"agd-agd", tracker::TrackerConfig::Matching::AgdAgd},
    {"eagd-agd", tracker::TrackerConfig::Matching::EagdAgd},
};

template <typename T>
std::string name_of(const std::map<std::string, T>& names, T value) {
    for (const auto& [k, v] : names) {
        if (v == value) return k;
    }
    return "?";
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("config: bad boolean for " + key + ": " + v);
}

}  // namespace

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path);
    RunConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        if (line.front() == '[') {
            if (line.back() != ']') throw UsageError(path + ":" + std::to_string(lineno) + ": bad section header");
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = section + "." + trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "tracker.theta_l") cfg.tracker.theta_l = std::stod(value);
            else if (key == "tracker.theta_m") cfg.tracker.theta_m = std::stod(value);
            else if (key == "tracker.theta_h") cfg.tracker.theta_h = std::stod(value);
            else if (key == "tracker.tau") cfg.tracker.tau = std::stod(value);
            else if (key == "tracker.k") cfg.tracker.k = std::stoi(value);
            else if (key == "tracker.max_missed") cfg.tracker.max_missed = std::stoi(value);
            else if (key == "detection.nms_iou") cfg.nms_iou = std::stod(value);
            else if (key == "detection.stride") cfg.stride = std::stod(value);
            else if (key == "descriptor.mode") cfg.descriptor_mode = kModeNames.at(value);
            else if (key == "descriptor.appearance") cfg.appearance_source = kSourceNames.at(value);
            else if (key == "descriptor.matching") cfg.tracker.matching = kMatchingNames.at(value);
            else if (key == "descriptor.roi_w") cfg.roi_w = std::stoi(value);
            else if (key == "descriptor.roi_h") cfg.roi_h = std::stoi(value);
            else if (key == "descriptor.appearance_width") cfg.appearance_width = std::stoi(value);
            else if (key == "descriptor.head_c1") cfg.head_c1 = std::stoi(value);
            else if (key == "descriptor.head_c2") cfg.head_c2 = std::stoi(value);
            else if (key == "descriptor.geometry_hidden") cfg.geometry_hidden = std::stoi(value);
            else if (key == "descriptor.geometry_out") cfg.geometry_out = std::stoi(value);
            else if (key == "model.params") cfg.params_path = value;
            else if (key == "model.seed") cfg.seed = std::stoull(value);
            else if (key == "pipeline.use_convlstm") cfg.use_convlstm = parse_bool(value, key);
            else throw UsageError("unknown key " + key);
        } catch (const std::out_of_range&) {
            throw UsageError(path + ":" + std::to_string(lineno) + ": bad value for " + key + ": " + value);
        } catch (const std::invalid_argument&) {
            throw UsageError(path + ":" + std::to_string(lineno) + ": bad value for " + key + ": " + value);
        }
    }
    cfg.validate();
    return cfg;
}

std::string render_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "[tracker]\n";
    os << "theta_l = " << cfg.tracker.theta_l << "\n";
    os << "theta_m = " << cfg.tracker.theta_m << "\n";
    os << "theta_h = " << cfg.tracker.theta_h << "\n";
    os << "tau = " << cfg.tracker.tau << "\n";
    os << "k = " << cfg.tracker.k << "\n";
    os << "max_missed = " << cfg.tracker.max_missed << "\n";
    os << "\n[detection]\n";
    os << "nms_iou = " << cfg.nms_iou << "\n";
    os << "stride = " << cfg.stride << "\n";
    os << "\n[descriptor]\n";
    os << "mode = " << name_of(kModeNames, cfg.descriptor_mode) << "\n";
    os << "appearance = " << name_of(kSourceNames, cfg.appearance_source) << "\n";
    os << "matching = " << name_of(kMatchingNames, cfg.tracker.matching) << "\n";
    os << "roi_w = " << cfg.roi_w << "\n";
    os << "roi_h = " << cfg.roi_h << "\n";
    os << "appearance_width = " << cfg.appearance_width << "\n";
    os << "head_c1 = " << cfg.head_c1 << "\n";
    os << "head_c2 = " << cfg.head_c2 << "\n";
    os << "geometry_hidden = " << cfg.geometry_hidden << "\n";
    os << "geometry_out = " << cfg.geometry_out << "\n";
    os << "\n[model]\n";
    os << "params = " << cfg.params_path << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "\n[pipeline]\n";
    os << "use_convlstm = " << (cfg.use_convlstm ? "true" : "false") << "\n";
    return os.str();
}

ModelParams resolve_params(const RunConfig& cfg, int feature_channels, bool need_head, bool need_convlstm) {
    cfg.validate();
    const int width = cfg.descriptor_width(feature_channels);
    std::optional<ad::ParameterSet> loaded;
    if (!cfg.params_path.empty()) loaded = io::load_parameter_set(cfg.params_path);
    Rng rng(cfg.seed);

    ModelParams params;
    if (loaded && loaded->has("geometry.w1")) {
        params.geometry.w1 = loaded->get("geometry.w1");
        params.geometry.b1 = loaded->get("geometry.b1");
        params.geometry.w2 = loaded->get("geometry.w2");
        params.geometry.b2 = loaded->get("geometry.b2");
        params.geometry.validate();
        if (params.geometry.out_width() != cfg.geometry_out) {
            throw DataError("loaded geometry embedding width " + std::to_string(params.geometry.out_width()) +
                            " does not match configured " + std::to_string(cfg.geometry_out));
        }
    } else {
        Rng fork = rng.fork(1);
        params.geometry = descriptor::GeometryEmbedParams::seeded(fork, cfg.geometry_hidden, cfg.geometry_out);
    }

    if (loaded && loaded->has("gru.w_z")) {
        params.gru.w_z = loaded->get("gru.w_z");
        params.gru.w_r = loaded->get("gru.w_r");
        params.gru.w_h = loaded->get("gru.w_h");
        params.gru.b_z = loaded->get("gru.b_z");
        params.gru.b_r = loaded->get("gru.b_r");
        params.gru.b_h = loaded->get("gru.b_h");
        params.gru.validate();
        if (params.gru.hidden() != width || params.gru.input() != width) {
            throw DataError("loaded GRU dims [" + std::to_string(params.gru.input()) + " -> " +
                            std::to_string(params.gru.hidden()) + "] do not match descriptor width " +
                            std::to_string(width));
        }
    } else {
        Rng fork = rng.fork(2);
        params.gru = recurrent::GruParams::seeded(width, width, fork);
    }

    if (need_head) {
        if (feature_channels < 1) throw DataError("appearance head requested but frames carry no feature channels");
        if (loaded && loaded->has("head.w1")) {
            descriptor::AppearanceHeadParams head;
            head.w1 = loaded->get("head.w1");
            head.b1 = loaded->get("head.b1");
            head.w2 = loaded->get("head.w2");
            head.b2 = loaded->get("head.b2");
            head.w3 = loaded->get("head.w3");
            head.b3 = loaded->get("head.b3");
            head.validate();
            if (head.in_channels() != feature_channels || head.out_width() != cfg.appearance_width) {
                throw DataError("loaded appearance head does not match the frame channels/configured width");
            }
            params.head = std::move(head);
        } else {
            Rng fork = rng.fork(3);
            params.head = descriptor::AppearanceHeadParams::seeded(feature_channels, fork, cfg.head_c1, cfg.head_c2,
                                                                   cfg.appearance_width);
        }
    }

    if (need_convlstm) {
        if (feature_channels < 1) throw DataError("convlstm requested but frames carry no feature channels");
        if (loaded && loaded->has("convlstm.w_i")) {
            recurrent::ConvLstmParams lstm;
            lstm.w_i = loaded->get("convlstm.w_i");
            lstm.w_f = loaded->get("convlstm.w_f");
            lstm.w_o = loaded->get("convlstm.w_o");
            lstm.w_c = loaded->get("convlstm.w_c");
            lstm.b_i = loaded->get("convlstm.b_i");
            lstm.b_f = loaded->get("convlstm.b_f");
            lstm.b_o = loaded->get("convlstm.b_o");
            lstm.b_c = loaded->get("convlstm.b_c");
            lstm.validate();
            if (lstm.input_channels() != feature_channels) {
                throw DataError("loaded convlstm channels do not match the frames");
            }
            params.convlstm = std::move(lstm);
        } else {
            Rng fork = rng.fork(4);
            params.convlstm = recurrent::ConvLstmParams::seeded(feature_channels, feature_channels, fork);
        }
    }
    return params;
}

ad::ParameterSet to_parameter_set(const ModelParams& params) {
    ad::ParameterSet set;
    set.add("geometry.w1", params.geometry.w1);
    set.add("geometry.b1", params.geometry.b1);
    set.add("geometry.w2", params.geometry.w2);
    set.add("geometry.b2", params.geometry.b2);
    set.add("gru.w_z", params.gru.w_z);
    set.add("gru.w_r", params.gru.w_r);
    set.add("gru.w_h", params.gru.w_h);
    set.add("gru.b_z", params.gru.b_z);
    set.add("gru.b_r", params.gru.b_r);
    set.add("gru.b_h", params.gru.b_h);
    if (params.head) {
        set.add("head.w1", params.head->w1);
        set.add("head.b1", params.head->b1);
        set.add("head.w2", params.head->w2);
        set.add("head.b2", params.head->b2);
        set.add("head.w3", params.head->w3);
        set.add("head.b3", params.head->b3);
    }
    if (params.convlstm) {
        set.add("convlstm.w_i", params.convlstm->w_i);
        set.add("convlstm.w_f", params.convlstm->w_f);
        set.add("convlstm.w_o", params.convlstm->w_o);
        set.add("convlstm.w_c", params.convlstm->w_c);
        set.add("convlstm.b_i", params.convlstm->b_i);
        set.add("convlstm.b_f", params.convlstm->b_f);
        set.add("convlstm.b_o", params.convlstm->b_o);
        set.add("convlstm.b_c", params.convlstm->b_c);
    }
    return set;
}

PipelineResult run_pipeline_frames(const RunConfig& cfg, const std::vector<FrameData>& frames,
                                   const PipelineOptions& opts) {
    cfg.validate();
    PipelineResult result;
    if (frames.empty()) return result;

    int feature_channels = 0;
    for (const FrameData& f : frames) {
        if (f.features) {
            feature_channels = f.features->dim(0);
            break;
        }
    }
    const bool needs_appearance = cfg.descriptor_mode != RunConfig::DescriptorMode::Geometry;
    const bool need_head = needs_appearance && cfg.appearance_source == RunConfig::AppearanceSource::Head;
    if (needs_appearance && feature_channels < 1) {
        throw DataError("descriptor mode needs appearance features, but frames carry none");
    }
    const ModelParams params = resolve_params(cfg, feature_channels, need_head, cfg.use_convlstm);

    std::optional<recurrent::ConvLstmState> lstm_state;
    StageTimes& times = result.times;
    for (const FrameData& frame : frames) {
        times.frames += 1;
        std::optional<Tensor> features = frame.features;

        if (cfg.use_convlstm && features) {
            const auto t0 = clock_type::now();
            if (!lstm_state) {
                lstm_state = recurrent::ConvLstmState::zeros(features->dim(0), features->dim(1), features->dim(2));
            }
            recurrent::ConvLstmOut out = recurrent::convlstm_step(*features, *lstm_state, *params.convlstm);
            features = out.f;
            lstm_state = out.state;
            times.convlstm += seconds_since(t0);
        }

        // detections: decode the maps or take the precomputed stream
        const auto t_decode = clock_type::now();
        std::vector<geometry::Quad> proposals;
        if (frame.maps) {
            geometry::DecodeResult decoded = geometry::decode_proposals(*frame.maps, cfg.tracker.theta_l, cfg.stride);
            proposals = std::move(decoded.proposals);
            result.decode_skipped += decoded.skipped;
        } else if (frame.quads) {
            for (const geometry::Quad& q : *frame.quads) {
                if (q.score >= cfg.tracker.theta_l) proposals.push_back(q);
            }
        }
        times.decode += seconds_since(t_decode);

        const auto t_nms = clock_type::now();
        std::vector<geometry::Quad> kept = geometry::nms(proposals, cfg.nms_iou);
        if (static_cast<int>(kept.size()) > cfg.tracker.k) kept.resize(static_cast<size_t>(cfg.tracker.k));
        times.nms += seconds_since(t_nms);

        // frame dims for coordinate normalization come from the tensor grid
        double frame_w = 0.0, frame_h = 0.0;
        if (features) {
            frame_w = features->dim(2) * cfg.stride;
            frame_h = features->dim(1) * cfg.stride;
        } else if (frame.maps) {
            frame_w = frame.maps->width() * cfg.stride;
            frame_h = frame.maps->height() * cfg.stride;
        }

        const auto t_desc = clock_type::now();
        std::vector<descriptor::Agd> agds;
        agds.reserve(kept.size());
        for (const geometry::Quad& q : kept) {
            std::optional<Tensor> f_a;
            if (needs_appearance) {
                const geometry::Quad map_quad = q.scaled(1.0 / cfg.stride);
                f_a = need_head
                          ? descriptor::appearance_feature(*features, map_quad, *params.head, cfg.roi_w, cfg.roi_h)
                          : descriptor::pooled_appearance(*features, map_quad, cfg.roi_w, cfg.roi_h);
            }
            std::optional<Tensor> f_g;
            if (cfg.descriptor_mode != RunConfig::DescriptorMode::Appearance) {
                if (frame_w <= 0.0 || frame_h <= 0.0) throw DataError("no frame dimensions for geometry features");
                f_g = descriptor::geometry_feature(q, frame_w, frame_h, params.geometry);
            }
            descriptor::Agd agd;
            if (f_a && f_g) {
                agd = descriptor::make_agd(*f_a, *f_g);
            } else if (f_a) {
                agd.values = *f_a;
                agd.appearance_width = f_a->dim(0);
            } else {
                agd.values = *f_g;
                agd.appearance_width = 0;
            }
            agds.push_back(std::move(agd));
        }
        times.descriptors += seconds_since(t_desc);

        if (opts.collect_descriptor_dump) {
            for (size_t j = 0; j < agds.size(); ++j) {
                result.descriptor_dump.push_back({{frame.frame, static_cast<int>(j)}, agds[j].values});
            }
        }

        tracker::StepTimes step_times;
        auto confirmed = tracker::step(kept, agds, result.state, cfg.tracker, params.gru, &step_times);
        times.matching += step_times.matching;
        times.update += step_times.update;
        result.frames.push_back(FrameResult{frame.frame, std::move(confirmed)});
    }
    return result;
}

PipelineResult run_pipeline(const RunConfig& cfg, const std::vector<io::FrameManifestEntry>& manifest,
                            const std::string& base_dir, const PipelineOptions& opts) {
    std::vector<FrameData> frames;
    frames.reserve(manifest.size());
    StageTimes ingest_times;
    const auto t0 = clock_type::now();
    for (const io::FrameManifestEntry& e : manifest) {
        FrameData data;
        data.frame = e.frame;
        Tensor t = io::read_qtns(io::join_path(base_dir, e.tensor));
        if (t.rank() != 3) throw DataError(e.tensor + ": frame tensors must be [C x H x W]");
        if (!e.detections.empty()) {
            data.features = std::move(t);
            data.quads = io::read_detections(io::join_path(base_dir, e.detections));
        } else {
            if (t.dim(0) < 9) {
                throw DataError(e.tensor + ": bundled frame tensor needs score+offset channels (1+8) first, got " +
                                t.shape_str());
            }
            geometry::DetectionMaps maps;
            maps.score = slice_channels(t, 0, 1);
            maps.offsets = slice_channels(t, 1, 8);
            data.maps = std::move(maps);
            if (t.dim(0) > 9) data.features = slice_channels(t, 9, t.dim(0) - 9);
        }
        frames.push_back(std::move(data));
    }
    ingest_times.ingest = seconds_since(t0);

    PipelineResult result = run_pipeline_frames(cfg, frames, opts);
    result.times.ingest = ingest_times.ingest;
    return result;
}

std::vector<io::TrajectoryRecord> PipelineResult::trajectory_records() const {
    std::vector<io::TrajectoryRecord> records;
    auto emit = [&records](const tracker::Tracklet& t) {
        for (const tracker::TrackPoint& p : t.history) {
            records.push_back(io::TrajectoryRecord{p.frame, t.id, p.quad});
        }
    };
    for (const tracker::Tracklet& t : state.retired) emit(t);
    for (const tracker::Tracklet& t : state.active) emit(t);
    std::sort(records.begin(), records.end(), [](const io::TrajectoryRecord& a, const io::TrajectoryRecord& b) {
        return a.track_id != b.track_id ? a.track_id < b.track_id : a.frame < b.frame;
    });
    return records;
}

std::vector<io::TrajectoryRecord> PipelineResult::confirmed_records() const {
    std::vector<io::TrajectoryRecord> records;
    for (const FrameResult& f : frames) {
        for (const tracker::Confirmed& c : f.confirmed) {
            records.push_back(io::TrajectoryRecord{f.frame, c.track_id, c.quad});
        }
    }
    return records;
}

}  // namespace quadtrack::pipeline
