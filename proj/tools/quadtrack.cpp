#include <cerrno>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <sys/stat.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "quadtrack/gradcheck.hpp"
#include "quadtrack/io.hpp"
#include "quadtrack/kernels.hpp"
#include "quadtrack/metrics.hpp"
#include "quadtrack/pipeline.hpp"
#include "quadtrack/synthlab.hpp"

namespace qt = quadtrack;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

void make_dir(const std::string& path) {
    if (mkdir(path.c_str(), 0755) != 0 && errno != EEXIST) {
        throw qt::DataError("cannot create directory " + path);
    }
}

qt::pipeline::RunConfig load_config(const std::string& path) {
    return path.empty() ? qt::pipeline::RunConfig{} : qt::pipeline::parse_config(path);
}

std::string machine_info() {
    std::string model = "unknown cpu";
    std::ifstream cpuinfo("/proc/cpuinfo");
    std::string line;
    while (std::getline(cpuinfo, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) model = line.substr(colon + 2);
            break;
        }
    }
    return model + ", " + std::to_string(std::thread::hardware_concurrency()) + " hw threads, " +
           std::to_string(qt::worker_threads()) + " workers";
}

void print_stage_times(std::ostream& os, const qt::pipeline::StageTimes& t) {
    auto row = [&os, &t](const char* name, double sec) {
        os << "  " << name << ": " << sec * 1000.0 << " ms total, " << (t.frames ? sec * 1000.0 / t.frames : 0.0)
           << " ms/frame\n";
    };
    os << "stage timing over " << t.frames << " frames:\n";
    row("ingest", t.ingest);
    row("convlstm", t.convlstm);
    row("decode", t.decode);
    row("nms", t.nms);
    row("descriptors", t.descriptors);
    row("matching", t.matching);
    row("update", t.update);
    const double total = t.total();
    os << "  total: " << total * 1000.0 << " ms, " << (total > 0 ? t.frames / total : 0.0) << " fps\n";
}

int cmd_track(const std::string& config_path, const std::string& manifest_path, const std::string& out_path,
              const std::string& dets_path, const std::string& dump_path, const std::string& timing_path) {
    const qt::pipeline::RunConfig cfg = load_config(config_path);
    const auto manifest = qt::io::read_manifest(manifest_path);
    qt::pipeline::PipelineOptions opts;
    opts.collect_descriptor_dump = !dump_path.empty();
    const auto result = qt::pipeline::run_pipeline(cfg, manifest, qt::io::dirname(manifest_path), opts);

    qt::io::write_trajectories(out_path, result.trajectory_records());
    if (!dets_path.empty()) qt::io::write_trajectories(dets_path, result.confirmed_records());
    if (!dump_path.empty()) qt::io::write_descriptor_dump(dump_path, result.descriptor_dump);
    if (result.decode_skipped > 0) {
        std::cerr << "warning: skipped " << result.decode_skipped << " positive pixels with non-finite offsets\n";
    }
    // wall-time stats are diagnostics, not part of the deterministic outputs
    print_stage_times(std::cerr, result.times);
    if (!timing_path.empty()) {
        std::ofstream tf(timing_path);
        print_stage_times(tf, result.times);
    }
    return 0;
}

int cmd_eval(bool mot_mode, const std::string& gt_path, const std::string& hyp_path, double iou,
             const std::string& report_path) {
    const auto gt_records = qt::io::read_gt(gt_path);
    const auto hyp_records = qt::io::read_trajectories(hyp_path);
    json report;
    std::ostringstream text;
    if (mot_mode) {
        const auto gt_tracks = qt::io::gt_tracks_from_records(gt_records);
        const auto hyp_map = qt::io::frame_map_from_trajectories(hyp_records);
        const qt::metrics::MotReport r = qt::metrics::mot_metrics(gt_tracks, hyp_map, iou);
        char line[256];
        std::snprintf(line, sizeof(line), "MOTA %.4f MOTP %.4f%s (FP %lld FN %lld IDSW %lld GT %lld matches %lld)",
                      r.mota, r.motp, r.motp_defined ? "" : " (undefined: no matches)",
                      static_cast<long long>(r.false_positives), static_cast<long long>(r.misses),
                      static_cast<long long>(r.id_switches), static_cast<long long>(r.gt_total),
                      static_cast<long long>(r.matches));
        text << line << "\n";
        report = {{"mota", r.mota},
                  {"motp", r.motp},
                  {"motp_defined", r.motp_defined},
                  {"false_positives", r.false_positives},
                  {"misses", r.misses},
                  {"id_switches", r.id_switches},
                  {"gt_total", r.gt_total},
                  {"matches", r.matches}};
    } else {
        qt::metrics::FrameMap gt_map;
        for (const auto& r : gt_records) gt_map[r.frame].push_back(qt::metrics::FrameObject{r.id, r.quad});
        const auto det_map = qt::io::frame_map_from_trajectories(hyp_records);
        const qt::metrics::Prf r = qt::metrics::detection_prf(gt_map, det_map, iou);
        char line[256];
        std::snprintf(line, sizeof(line), "P %.4f R %.4f F %.4f (TP %lld FP %lld FN %lld)", r.precision, r.recall,
                      r.f_measure, static_cast<long long>(r.tp), static_cast<long long>(r.fp),
                      static_cast<long long>(r.fn));
        text << line << "\n";
        report = {{"precision", r.precision}, {"recall", r.recall}, {"f_measure", r.f_measure},
                  {"tp", r.tp},               {"fp", r.fp},         {"fn", r.fn}};
    }
    std::cout << text.str();
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        out << report.dump(2) << "\n";
    }
    return 0;
}

int cmd_synth(const std::string& preset, const std::string& out_dir, int frames, int instances, uint64_t seed,
              float noise, double jitter, int channels) {
    qt::synth::ScenarioConfig scen;
    if (preset == "static") {
        scen = qt::synth::static_scenario(frames, seed);
    } else if (preset == "crossing") {
        scen = qt::synth::crossing_scenario(frames, seed);
    } else if (preset == "separable") {
        scen = qt::synth::random_scenario(2, frames, seed, false, noise, jitter);
    } else if (preset == "occlusion") {
        scen = qt::synth::ablation_scenario(frames, seed, true, noise, jitter);
    } else if (preset == "random") {
        scen = qt::synth::random_scenario(instances, frames, seed, false, noise, jitter);
    } else {
        throw qt::UsageError("unknown preset " + preset);
    }
    if (preset == "static" || preset == "crossing") {
        scen.feature_noise = noise;
        scen.vertex_jitter = jitter;
    }
    if (channels > 0 && channels != scen.feature_channels) {
        // re-draw signatures at the requested width
        scen.feature_channels = channels;
        qt::Rng rng(seed * 31 + 7);
        for (auto& inst : scen.instances) {
            inst.signature.resize(static_cast<size_t>(channels));
            for (float& s : inst.signature) s = rng.uniform(-1.0f, 1.0f);
        }
    }
    const qt::synth::SyntheticSequence seq = qt::synth::generate_sequence(scen);

    make_dir(out_dir);
    make_dir(qt::io::join_path(out_dir, "frames"));
    std::vector<qt::io::FrameManifestEntry> manifest;
    std::vector<qt::io::GtRecord> gt_records;
    for (int t = 0; t < static_cast<int>(seq.frames.size()); ++t) {
        const qt::synth::SyntheticFrame& fr = seq.frames[static_cast<size_t>(t)];
        // bundle: score channel, 8 offset channels, feature channels
        qt::Tensor bundle = qt::kernels::concat({fr.targets.score, fr.targets.offsets, fr.features}, 0);
        const std::string rel = "frames/" + std::to_string(t) + ".qtns";
        qt::io::write_qtns(qt::io::join_path(out_dir, rel), bundle);
        manifest.push_back(qt::io::FrameManifestEntry{t, rel, ""});
        for (const auto& o : fr.gt) gt_records.push_back(qt::io::GtRecord{t, o.id, o.quad});
    }
    qt::io::write_manifest(qt::io::join_path(out_dir, "manifest.jsonl"), manifest);
    qt::io::write_gt(qt::io::join_path(out_dir, "gt.jsonl"), gt_records);
    std::cout << "wrote " << seq.frames.size() << " frames, " << scen.instances.size() << " instances to " << out_dir
              << "\n";
    return 0;
}

int cmd_gradcheck(uint64_t seed, bool negative_control) {
    const auto rows = qt::gradcheck::run_all(seed, negative_control);
    bool all_pass = true;
    std::printf("%-34s %-12s %s\n", "check", "max_rel_err", "status");
    for (const auto& row : rows) {
        const bool expected_fail = row.name.rfind("fixture.", 0) == 0;
        std::printf("%-34s %-12.3e %s\n", row.name.c_str(), row.max_rel_err, row.pass ? "PASS" : "FAIL");
        if (!expected_fail) all_pass = all_pass && row.pass;
        if (expected_fail && row.pass) all_pass = false;  // the fixture must fail
    }
    return all_pass ? 0 : kExitCheck;
}

int cmd_bench(const std::string& config_path, const std::string& manifest_path, bool kernels_too, int repeat) {
    std::cout << "machine: " << machine_info() << "\n";
    if (!manifest_path.empty()) {
        const qt::pipeline::RunConfig cfg = load_config(config_path);
        const auto manifest = qt::io::read_manifest(manifest_path);
        qt::pipeline::StageTimes best;
        for (int r = 0; r < repeat; ++r) {
            const auto result = qt::pipeline::run_pipeline(cfg, manifest, qt::io::dirname(manifest_path));
            if (r == 0 || result.times.total() < best.total()) best = result.times;
        }
        print_stage_times(std::cout, best);
        const double assoc = best.frames ? (best.matching + best.update) / best.frames : 0.0;
        std::cout << "association step (matching+update): " << assoc * 1000.0 << " ms/frame\n";
    }
    if (kernels_too) {
        using clock = std::chrono::steady_clock;
        auto time_it = [](auto&& fn, int reps) {
            const auto t0 = clock::now();
            for (int i = 0; i < reps; ++i) fn();
            return std::chrono::duration<double>(clock::now() - t0).count() / reps * 1000.0;
        };
        qt::Rng rng(11);
        std::cout << "kernel comparison (serial reference vs OpenMP, ms):\n";
        {
            qt::Tensor a = qt::Tensor::uniform({136, 272}, rng);
            qt::Tensor b = qt::Tensor::uniform({272, 64}, rng);
            const double serial = time_it([&] { qt::kernels::ref::matmul(a, b); }, 20);
            const double par = time_it([&] { qt::kernels::matmul(a, b); }, 20);
            std::printf("  %-28s %8.3f %8.3f\n", "matmul 136x272 * 272x64", serial, par);
        }
        {
            qt::Tensor x = qt::Tensor::uniform({32, 16, 64}, rng);
            qt::Tensor w = qt::Tensor::uniform({64, 32, 3, 3}, rng, -0.1f, 0.1f);
            qt::Tensor b({64});
            const double serial = time_it([&] { qt::kernels::ref::conv2d(x, w, b); }, 5);
            const double par = time_it([&] { qt::kernels::conv2d(x, w, b); }, 5);
            std::printf("  %-28s %8.3f %8.3f\n", "conv2d 32x16x64 -> 64", serial, par);
        }
        {
            qt::Tensor map = qt::Tensor::uniform({8, 128, 128}, rng);
            std::vector<std::pair<float, float>> coords;
            qt::Rng crng(5);
            for (int i = 0; i < 4096; ++i) coords.emplace_back(crng.uniform(0.0f, 127.0f), crng.uniform(0.0f, 127.0f));
            const double serial = time_it([&] { qt::kernels::ref::bilinear_sample(map, coords); }, 20);
            const double par = time_it([&] { qt::kernels::bilinear_sample(map, coords); }, 20);
            std::printf("  %-28s %8.3f %8.3f\n", "bilinear 8ch x 4096 pts", serial, par);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quadrangle text tracking toolkit"};
    app.require_subcommand(0, 1);

    bool print_config = false;
    app.add_flag("--print-config", print_config, "print the default configuration and exit");

    auto* track = app.add_subcommand("track", "run the tracking pipeline over a frame manifest");
    std::string track_config, track_manifest, track_out = "trajectories.jsonl", track_dets, track_dump, track_timing;
    track->add_option("--config", track_config, "config file (defaults when omitted)");
    track->add_option("--manifest", track_manifest, "frame manifest JSONL")->required();
    track->add_option("--out", track_out, "trajectory output JSONL");
    track->add_option("--dets", track_dets, "per-frame confirmed detection JSONL");
    track->add_option("--dump-descriptors", track_dump, "descriptor debug JSONL");
    track->add_option("--timing", track_timing, "write wall-time stats to this file");

    auto* eval_det = app.add_subcommand("eval-det", "detection precision/recall/F against ground truth");
    auto* eval_mot = app.add_subcommand("eval-mot", "CLEAR-MOT metrics against ground truth");
    std::string eval_gt, eval_hyp, eval_report;
    double eval_iou = 0.5;
    for (auto* cmd : {eval_det, eval_mot}) {
        cmd->add_option("--gt", eval_gt, "ground-truth JSONL")->required();
        cmd->add_option("--hyp", eval_hyp, "hypothesis JSONL")->required();
        cmd->add_option("--iou", eval_iou, "matching IoU threshold");
        cmd->add_option("--report", eval_report, "write machine-readable report JSON");
    }

    auto* synth = app.add_subcommand("synth", "generate a synthetic sequence");
    std::string synth_preset = "random", synth_out;
    int synth_frames = 10, synth_instances = 4, synth_channels = 0;
    uint64_t synth_seed = 1;
    float synth_noise = 0.1f;
    double synth_jitter = 0.5;
    synth->add_option("--preset", synth_preset, "static | crossing | separable | occlusion | random");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--frames", synth_frames, "frame count");
    synth->add_option("--instances", synth_instances, "instance count");
    synth->add_option("--seed", synth_seed, "scenario seed");
    synth->add_option("--noise", synth_noise, "feature map noise amplitude");
    synth->add_option("--jitter", synth_jitter, "observed quad vertex jitter, px");
    synth->add_option("--channels", synth_channels, "feature channels (preset default when 0)");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks for all differentiable ops");
    uint64_t gc_seed = 1;
    bool gc_negative = false;
    gradcheck->add_option("--seed", gc_seed, "seed for the check instances");
    gradcheck->add_flag("--negative-control", gc_negative, "include the deliberately broken fixture");

    auto* bench = app.add_subcommand("bench", "pipeline stage latency and kernel comparison");
    std::string bench_config, bench_manifest;
    bool bench_kernels = false;
    int bench_repeat = 3;
    bench->add_option("--config", bench_config, "config file");
    bench->add_option("--manifest", bench_manifest, "sequence manifest to time");
    bench->add_flag("--kernels", bench_kernels, "compare serial reference vs OpenMP kernels");
    bench->add_option("--repeat", bench_repeat, "repetitions, best run reported");

    try {
        app.parse(argc, argv);
        if (print_config) {
            std::cout << qt::pipeline::render_config(qt::pipeline::RunConfig{});
            return 0;
        }
        if (track->parsed()) {
            return cmd_track(track_config, track_manifest, track_out, track_dets, track_dump, track_timing);
        }
        if (eval_det->parsed() || eval_mot->parsed()) {
            return cmd_eval(eval_mot->parsed(), eval_gt, eval_hyp, eval_iou, eval_report);
        }
        if (synth->parsed()) {
            return cmd_synth(synth_preset, synth_out, synth_frames, synth_instances, synth_seed, synth_noise,
                             synth_jitter, synth_channels);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_negative);
        if (bench->parsed()) return cmd_bench(bench_config, bench_manifest, bench_kernels, bench_repeat);
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const qt::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const qt::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const qt::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
