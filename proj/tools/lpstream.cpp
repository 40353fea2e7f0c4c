// lpstream command line: experiments, codec benchmarks, invariant checks and
// capture-based server/client runs.

#include "lpstream/capture.hpp"
#include "lpstream/codec.hpp"
#include "lpstream/error.hpp"
#include "lpstream/harness.hpp"
#include "lpstream/packing.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>

#include <fstream>
#include <sstream>

using namespace lpstream;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig load_config(const std::string& path) {
    return path.empty() ? ExperimentConfig{} : parse_experiment_config(slurp(path));
}

void print_summary(const MetricsReport& report) {
    fmt::print("{:<18} {:>12} {:>12} {:>12} {:>10} {:>10} {:>12} {:>8}\n", "method", "color_mbps", "vis_mbps",
               "total_mbps", "ratio_c", "ratio_v", "latency_ms", "mirrors");
    for (const MethodSummary& m : report.methods) {
        fmt::print("{:<18} {:>12.4f} {:>12.4f} {:>12.4f} {:>10.2f} {:>10.2f} {:>12.2f} {:>8}\n", m.method,
                   m.color_mbps, m.visibility_mbps, m.total_mbps, m.color_ratio.mean, m.visibility_ratio.mean,
                   m.latency_total_ms.mean, m.mirrors_match ? "ok" : "MISMATCH");
    }
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
    const MetricsReport report = run_experiment(load_config(config_path));
    if (!out_dir.empty()) emit_report(report, out_dir);
    print_summary(report);
    return report.all_mirrors_match() ? 0 : 1;
}

int cmd_record(const std::string& config_path, const std::string& prefix, std::uint64_t frames) {
    const ExperimentConfig cfg = load_config(config_path);
    const Scenario scenario(cfg.scenario);
    const std::uint64_t n = frames ? std::min(frames, cfg.scenario.frames) : cfg.scenario.frames;
    std::ofstream color(prefix + ".color.pbv", std::ios::binary);
    std::ofstream vis(prefix + ".visibility.pbv", std::ios::binary);
    if (!color || !vis) throw InvalidArgument("cannot write " + prefix + ".*.pbv");
    for (std::uint64_t f = 0; f < n; ++f) {
        const ProbeFrame frame = scenario.generate_frame(f);
        write_snapshot(color, cfg.scenario.dims, frame.color);
        write_snapshot(vis, cfg.scenario.dims, frame.visibility);
    }
    fmt::print("wrote {} frames to {}.color.pbv and {}.visibility.pbv\n", n, prefix, prefix);
    return 0;
}

int cmd_bench_codec(const std::string& path, int gop) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path);
    CodecStreamState enc(1, CodecRole::Encoder, gop);
    CodecStreamState dec(1, CodecRole::Decoder, gop);
    std::vector<double> ratios;
    bool lossless = true;
    fmt::print("{:>6} {:>4} {:>12} {:>10} {:>10}\n", "frame", "key", "raw_bits", "bytes", "ratio");
    for (int f = 0; in.peek() != std::char_traits<char>::eof(); ++f) {
        const AtlasSnapshot snap = read_snapshot(in);
        const PlaneSet planes = pack_planes(snap.atlas.kind(), snap.atlas.image());
        const EncodedFrame ef = encode_frame(planes, enc);
        lossless = lossless && decode_frame(EncodedFrame::parse(ef.serialize()), dec) == planes;
        const double raw = static_cast<double>(snap.atlas.image().texels.size()) * 32.0;
        const double ratio = raw / (8.0 * static_cast<double>(ef.payload.size() ? ef.payload.size() : 1));
        ratios.push_back(ratio);
        fmt::print("{:>6} {:>4} {:>12} {:>10} {:>10.2f}\n", f, ef.header.key ? 1 : 0, raw, ef.wire_size(), ratio);
    }
    const SeriesStats s = series_stats(ratios);
    fmt::print("ratio mean {:.3f} sd {:.3f} min {:.3f} max {:.3f} over {} frames, lossless {}\n", s.mean, s.stddev,
               s.min, s.max, s.count, lossless ? "yes" : "NO");
    return lossless ? 0 : 1;
}

int cmd_verify(std::uint64_t frames, int dims) {
    bool ok = true;
    for (Regime regime : {Regime::Collapse, Regime::DayCycle, Regime::Street}) {
        for (double loss : {0.0, 0.05, 0.2}) {
            ExperimentConfig cfg;
            cfg.scenario.regime = regime;
            cfg.scenario.dims = {dims, std::max(2, dims / 2), dims};
            cfg.scenario.frames = frames;
            cfg.downlink.loss = loss;
            cfg.uplink.loss = loss;
            const MetricsReport r = run_experiment(cfg);
            const double unc = r.summary(UpdateMethod::Uncompressed).total_mbps;
            const bool mirrors = r.all_mirrors_match();
            const bool order = r.summary(UpdateMethod::PackingCaching).total_mbps <= unc &&
                               r.summary(UpdateMethod::Encoded).total_mbps <= unc;
            fmt::print("{} {:<9} loss {:.2f}: mirrors {}, ordering {}\n", mirrors && order ? "PASS" : "FAIL",
                       to_string(regime), loss, mirrors ? "ok" : "MISMATCH", order ? "ok" : "VIOLATED");
            ok = ok && mirrors && order;
        }
    }
    return ok ? 0 : 1;
}

int cmd_serve(const std::string& config_path, const std::string& method, std::uint32_t client,
              const std::string& capture_path, const std::string& metrics_dir) {
    ExperimentConfig cfg = load_config(config_path);
    cfg.methods = {parse_update_method(method)};
    cfg.clients = std::max<int>(cfg.clients, static_cast<int>(client));
    const Scenario scenario(cfg.scenario);
    std::ofstream out(capture_path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + capture_path);
    write_capture_header(out, {client, scenario.volume(), scenario.geometry()});
    std::size_t records = 0;
    const MetricsReport report =
        run_experiment(cfg, [&](std::string_view, std::uint32_t id, double t, std::span<const std::uint8_t> pkt) {
            if (id != client) return;
            write_capture_record(out, {t, Bytes(pkt.begin(), pkt.end())});
            ++records;
        });
    if (!metrics_dir.empty()) emit_report(report, metrics_dir);
    print_summary(report);
    fmt::print("captured {} packets for client {} in {}\n", records, client, capture_path);
    return report.all_mirrors_match() ? 0 : 1;
}

int cmd_connect(const std::string& capture_path, const std::string& path_file, const std::string& dump_path,
                const std::string& metrics_path, int raster) {
    std::ifstream in(capture_path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + capture_path);
    const Capture cap = read_capture(in);
    ClientState state(cap.header.client_id, cap.header.volume);
    std::ifstream poses(path_file);
    if (!poses) throw InvalidArgument("cannot open " + path_file);
    std::ofstream dump(dump_path);
    if (!dump) throw InvalidArgument("cannot write " + dump_path);
    dump << "t,sample,px,py,pz,nx,ny,nz,r,g,b\n";

    SelectionParams params;
    params.raster_width = params.raster_height = raster;
    std::size_t next = 0, applied = 0, refused = 0, samples = 0, probes = 0;
    std::string line;
    while (std::getline(poses, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double t;
        CameraPose pose;
        if (!(ls >> t >> pose.position.x >> pose.position.y >> pose.position.z >> pose.forward.x >> pose.forward.y >>
              pose.forward.z)) {
            throw InvalidArgument("bad camera path line: " + line);
        }
        for (; next < cap.records.size() && cap.records[next].time <= t; ++next) {
            const UpdatePacket pkt = UpdatePacket::parse(cap.records[next].packet);
            try {
                probes += apply_update(pkt, state).size();
                ++applied;
            } catch (const ProtocolError&) {
                if (pkt.epoch >= state.stream(pkt.stream).epoch) throw;
                ++refused;  // stale epoch after a reconnect
            }
        }
        state.pose = pose;
        int i = 0;
        for (const Hit& h : frustum_samples(pose, cap.header.scene, params)) {
            const Vec3 c = shade_sample(h.point, h.normal, state);
            dump << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", t, i++, h.point.x, h.point.y, h.point.z,
                                h.normal.x, h.normal.y, h.normal.z, c.x, c.y, c.z);
            ++samples;
        }
    }
    if (!metrics_path.empty()) {
        std::ofstream m(metrics_path);
        m << fmt::format("{{\"packets\": {}, \"applied\": {}, \"refused\": {}, \"probes_written\": {}, \"samples\": {}}}\n",
                         cap.records.size(), applied, refused, probes, samples);
    }
    fmt::print("applied {} of {} packets, wrote {} samples to {}\n", applied, cap.records.size(), samples, dump_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Light-probe streaming: server, client, transport and experiment harness"};
    app.require_subcommand(1);

    std::string config, out, method = "packing-caching", capture, path, dump, metrics, input;
    std::uint64_t frames = 0;
    std::uint32_t client = 1;
    int gop = kDefaultGopLength, dims = 6, raster = 32;

    auto* run = app.add_subcommand("run", "run an experiment config and write reports");
    run->add_option("config", config, "experiment JSON (defaults when omitted)");
    run->add_option("-o,--out", out, "report directory");

    auto* record = app.add_subcommand("record", "write scenario atlases as PBV1 snapshot sequences");
    record->add_option("config", config, "experiment JSON");
    record->add_option("-o,--out", out, "output prefix")->required();
    record->add_option("-n,--frames", frames, "frame limit");

    auto* bench = app.add_subcommand("bench-codec", "encode a recorded atlas sequence and print ratios");
    bench->add_option("input", input, "PBV1 snapshot sequence")->required();
    bench->add_option("--gop", gop, "key frame interval");

    auto* verify = app.add_subcommand("verify", "end-to-end invariant suite over all regimes and loss rates");
    frames = 0;
    verify->add_option("-n,--frames", frames, "frames per run (default 30)");
    verify->add_option("--dims", dims, "volume edge length");

    auto* serve = app.add_subcommand("serve", "run the server for one client and capture what it receives");
    serve->add_option("config", config, "experiment JSON");
    serve->add_option("-m,--method", method, "update method");
    serve->add_option("-c,--client", client, "client id to capture")->check(CLI::PositiveNumber);
    serve->add_option("-o,--capture", capture, "capture file")->required();
    serve->add_option("--metrics", metrics, "report directory");

    auto* connect = app.add_subcommand("connect", "replay a capture and shade along a camera path");
    connect->add_option("capture", capture, "capture file")->required();
    connect->add_option("-p,--path", path, "camera path: t px py pz fx fy fz per line")->required();
    connect->add_option("-o,--out", dump, "sample dump CSV")->required();
    connect->add_option("--metrics", metrics, "metrics JSON");
    connect->add_option("--raster", raster, "primary-view raster size");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(config, out);
        if (*record) return cmd_record(config, out, frames);
        if (*bench) return cmd_bench_codec(input, gop);
        if (*verify) return cmd_verify(frames ? frames : 30, dims);
        if (*serve) return cmd_serve(config, method, client, capture, metrics);
        if (*connect) return cmd_connect(capture, path, dump, metrics, raster);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 0;
}
