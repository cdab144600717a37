#include "quadtrack/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little, "QTNS io assumes a little-endian host");

namespace quadtrack::io {

using nlohmann::json;

namespace {

json quad_to_json(const geometry::Quad& q) {
    json arr = json::array();
    for (const auto& p : q.v) {
        arr.push_back(p.x);
        arr.push_back(p.y);
    }
    return arr;
}

geometry::Quad quad_from_json(const json& arr, const char* where) {
    if (!arr.is_array() || arr.size() != 8) throw DataError(std::string(where) + ": quad must be 8 numbers");
    geometry::Quad q;
    for (int k = 0; k < 4; ++k) {
        q.v[static_cast<size_t>(k)].x = arr[static_cast<size_t>(2 * k)].get<double>();
        q.v[static_cast<size_t>(k)].y = arr[static_cast<size_t>(2 * k + 1)].get<double>();
    }
    return q;
}

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<json> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            rows.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    return out;
}

}  // namespace

void write_qtns(const std::string& path, const Tensor& t) {
    std::ofstream out = open_out(path);
    out.write("QTNS", 4);
    const uint8_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 1);
    const uint32_t rank = static_cast<uint32_t>(t.rank());
    out.write(reinterpret_cast<const char*>(&rank), 4);
    for (int d = 0; d < t.rank(); ++d) {
        const uint32_t dim = static_cast<uint32_t>(t.dim(d));
        out.write(reinterpret_cast<const char*>(&dim), 4);
    }
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
    if (!out) throw DataError("short write to " + path);
}

Tensor read_qtns(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    auto fail = [&path, &in](const std::string& what) {
        throw DataError(path + " @" + std::to_string(static_cast<long long>(in.tellg())) + ": " + what);
    };
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "QTNS", 4) != 0) fail("bad magic, not a QTNS tensor");
    uint8_t version = 0;
    if (!in.read(reinterpret_cast<char*>(&version), 1) || version != 1) fail("unsupported version");
    uint32_t rank = 0;
    if (!in.read(reinterpret_cast<char*>(&rank), 4) || rank == 0 || rank > 8) fail("bad rank");
    std::vector<int> shape(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
        uint32_t dim = 0;
        if (!in.read(reinterpret_cast<char*>(&dim), 4) || dim == 0) fail("bad dimension");
        shape[d] = static_cast<int>(dim);
        numel *= dim;
        if (numel > (1ll << 31)) fail("tensor too large");
    }
    std::vector<float> payload(static_cast<size_t>(numel));
    if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(numel * 4))) {
        fail("truncated payload");
    }
    Tensor t(shape, std::move(payload));
    if (!t.all_finite()) fail("non-finite payload values");
    return t;
}

void write_trajectories(const std::string& path, const std::vector<TrajectoryRecord>& records) {
    std::ofstream out = open_out(path);
    for (const TrajectoryRecord& r : records) {
        json row;
        row["frame"] = r.frame;
        row["track_id"] = r.track_id;
        row["quad"] = quad_to_json(r.quad);
        row["score"] = static_cast<double>(r.quad.score);
        out << row.dump() << '\n';
    }
}

std::vector<TrajectoryRecord> read_trajectories(const std::string& path) {
    std::vector<TrajectoryRecord> records;
    for (const json& row : read_jsonl(path)) {
        TrajectoryRecord r;
        r.frame = row.at("frame").get<int>();
        r.track_id = row.at("track_id").get<int>();
        r.quad = quad_from_json(row.at("quad"), path.c_str());
        r.quad.score = row.value("score", 1.0);
        records.push_back(r);
    }
    return records;
}

void write_gt(const std::string& path, const std::vector<GtRecord>& records) {
    std::ofstream out = open_out(path);
    for (const GtRecord& r : records) {
        json row;
        row["frame"] = r.frame;
        row["id"] = r.id;
        row["quad"] = quad_to_json(r.quad);
        out << row.dump() << '\n';
    }
}

std::vector<GtRecord> read_gt(const std::string& path) {
    std::vector<GtRecord> records;
    for (const json& row : read_jsonl(path)) {
        GtRecord r;
        r.frame = row.at("frame").get<int>();
        r.id = row.at("id").get<int>();
        r.quad = quad_from_json(row.at("quad"), path.c_str());
        records.push_back(r);
    }
    return records;
}

void write_descriptor_dump(const std::string& path,
                           const std::vector<std::pair<std::pair<int, int>, Tensor>>& rows) {
    std::ofstream out = open_out(path);
    for (const auto& [key, agd] : rows) {
        json row;
        row["frame"] = key.first;
        row["proposal_index"] = key.second;
        json values = json::array();
        for (int64_t i = 0; i < agd.numel(); ++i) values.push_back(static_cast<double>(agd[i]));
        row["agd"] = values;
        out << row.dump() << '\n';
    }
}

std::vector<geometry::Quad> read_detections(const std::string& path) {
    std::vector<geometry::Quad> quads;
    for (const json& row : read_jsonl(path)) {
        geometry::Quad q = quad_from_json(row.at("quad"), path.c_str());
        q.score = row.value("score", 1.0);
        quads.push_back(q);
    }
    return quads;
}

void write_detections(const std::string& path, const std::vector<geometry::Quad>& quads) {
    std::ofstream out = open_out(path);
    for (const geometry::Quad& q : quads) {
        json row;
        row["quad"] = quad_to_json(q);
        row["score"] = static_cast<double>(q.score);
        out << row.dump() << '\n';
    }
}

void write_manifest(const std::string& path, const std::vector<FrameManifestEntry>& entries) {
    std::ofstream out = open_out(path);
    for (const FrameManifestEntry& e : entries) {
        json row;
        row["frame"] = e.frame;
        row["tensor"] = e.tensor;
        if (!e.detections.empty()) row["detections"] = e.detections;
        out << row.dump() << '\n';
    }
}

std::vector<FrameManifestEntry> read_manifest(const std::string& path) {
    std::vector<FrameManifestEntry> entries;
    for (const json& row : read_jsonl(path)) {
        FrameManifestEntry e;
        e.frame = row.at("frame").get<int>();
        e.tensor = row.at("tensor").get<std::string>();
        e.detections = row.value("detections", std::string());
        entries.push_back(e);
    }
    std::sort(entries.begin(), entries.end(),
              [](const FrameManifestEntry& a, const FrameManifestEntry& b) { return a.frame < b.frame; });
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].frame != static_cast<int>(i)) {
            throw DataError(path + ": frame indices must be contiguous from 0, missing frame " +
                            std::to_string(i) + " (found " + std::to_string(entries[i].frame) + ")");
        }
    }
    return entries;
}

void save_parameter_set(const std::string& manifest_path, const ad::ParameterSet& params) {
    const std::string dir = dirname(manifest_path);
    std::ofstream out = open_out(manifest_path);
    for (const auto& [name, tensor] : params.items()) {
        const std::string file = name + ".qtns";
        write_qtns(join_path(dir, file), tensor);
        json row;
        row["name"] = name;
        row["file"] = file;
        row["shape"] = tensor.shape();
        out << row.dump() << '\n';
    }
}

ad::ParameterSet load_parameter_set(const std::string& manifest_path) {
    const std::string dir = dirname(manifest_path);
    ad::ParameterSet params;
    for (const json& row : read_jsonl(manifest_path)) {
        const std::string name = row.at("name").get<std::string>();
        const std::string file = row.at("file").get<std::string>();
        Tensor t = read_qtns(join_path(dir, file));
        const auto shape = row.at("shape").get<std::vector<int>>();
        if (shape != t.shape()) {
            throw DataError(manifest_path + ": shape mismatch for " + name);
        }
        params.add(name, std::move(t));
    }
    return params;
}

std::vector<metrics::GtTrack> gt_tracks_from_records(const std::vector<GtRecord>& records) {
    std::vector<metrics::GtTrack> tracks;
    for (const GtRecord& r : records) {
        metrics::GtTrack* track = nullptr;
        for (metrics::GtTrack& t : tracks) {
            if (t.id == r.id) {
                track = &t;
                break;
            }
        }
        if (!track) {
            tracks.push_back(metrics::GtTrack{r.id, {}});
            track = &tracks.back();
        }
        if (track->by_frame.count(r.frame)) {
            throw DataError("ground truth id " + std::to_string(r.id) + " appears twice in frame " +
                            std::to_string(r.frame));
        }
        track->by_frame[r.frame] = r.quad;
    }
    return tracks;
}

metrics::FrameMap frame_map_from_trajectories(const std::vector<TrajectoryRecord>& records) {
    metrics::FrameMap map;
    for (const TrajectoryRecord& r : records) {
        map[r.frame].push_back(metrics::FrameObject{r.track_id, r.quad});
    }
    return map;
}

std::string dirname(const std::string& path) {
    const size_t slash = path.find_last_of('/');
    if (slash == std::string::npos) return ".";
    if (slash == 0) return "/";
    return path.substr(0, slash);
}

std::string join_path(const std::string& dir, const std::string& leaf) {
    if (leaf.empty()) return leaf;
    if (leaf.front() == '/') return leaf;
    if (dir.empty() || dir == ".") return leaf;
    return dir.back() == '/' ? dir + leaf : dir + "/" + leaf;
}

}  // namespace quadtrack::io
