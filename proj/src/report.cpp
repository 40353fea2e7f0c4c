#include "lpstream/error.hpp"
#include "lpstream/harness.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <initializer_list>

namespace lpstream {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void require_keys(const json& j, const char* what, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw InvalidArgument(std::string(what) + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw InvalidArgument("unknown " + std::string(what) + " key: " + key);
    }
}

Vec3 vec3_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw InvalidArgument("expected an array of three numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

ordered_json vec3_to(const Vec3& v) { return ordered_json::array({v.x, v.y, v.z}); }

void parse_scenario(const json& j, ScenarioConfig& s) {
    require_keys(j, "scenario",
                 {"regime", "dims", "origin", "spacing", "frames", "seed", "active_fraction", "pillars", "amplitude",
                  "hotspots", "hotspot_radius", "hotspot_speed", "period"});
    if (j.contains("regime")) s.regime = parse_regime(j["regime"].get<std::string>());
    if (j.contains("dims")) {
        const auto& d = j["dims"];
        if (!d.is_array() || d.size() != 3) throw InvalidArgument("dims must be [nx, ny, nz]");
        s.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    }
    if (j.contains("origin")) s.origin = vec3_from(j["origin"]);
    if (j.contains("spacing")) s.spacing = vec3_from(j["spacing"]);
    s.frames = j.value("frames", s.frames);
    s.seed = j.value("seed", s.seed);
    s.active_fraction = j.value("active_fraction", s.active_fraction);
    s.pillars = j.value("pillars", s.pillars);
    s.amplitude = j.value("amplitude", s.amplitude);
    s.hotspots = j.value("hotspots", s.hotspots);
    s.hotspot_radius = j.value("hotspot_radius", s.hotspot_radius);
    s.hotspot_speed = j.value("hotspot_speed", s.hotspot_speed);
    s.period = j.value("period", s.period);
}

void parse_server(const json& j, ServerConfig& s) {
    require_keys(j, "server",
                 {"color_rate_hz", "visibility_rate_hz", "budget", "gop_length", "use_pvs", "slot_count", "workers",
                  "change_threshold", "sphere_rays", "raster_width", "raster_height", "sphere_seed"});
    s.color_rate_hz = j.value("color_rate_hz", s.color_rate_hz);
    s.visibility_rate_hz = j.value("visibility_rate_hz", s.visibility_rate_hz);
    if (j.contains("budget")) s.budget = j["budget"].is_null() ? kUnlimitedBudget : j["budget"].get<std::size_t>();
    s.gop_length = j.value("gop_length", s.gop_length);
    s.use_pvs = j.value("use_pvs", s.use_pvs);
    s.slot_count = j.value("slot_count", s.slot_count);
    s.workers = j.value("workers", s.workers);
    s.selection.change_threshold = j.value("change_threshold", s.selection.change_threshold);
    s.selection.sphere_rays = j.value("sphere_rays", s.selection.sphere_rays);
    s.selection.raster_width = j.value("raster_width", s.selection.raster_width);
    s.selection.raster_height = j.value("raster_height", s.selection.raster_height);
    s.selection.sphere_seed = j.value("sphere_seed", s.selection.sphere_seed);
}

void parse_costs(const json& j, CostModel& c) {
    require_keys(j, "costs",
                 {"encode_fixed_ms", "encode_ms_per_mtexel", "decode_fixed_ms", "decode_ms_per_mtexel",
                  "apply_fixed_ms", "apply_ms_per_probe"});
    c.encode_fixed_ms = j.value("encode_fixed_ms", c.encode_fixed_ms);
    c.encode_ms_per_mtexel = j.value("encode_ms_per_mtexel", c.encode_ms_per_mtexel);
    c.decode_fixed_ms = j.value("decode_fixed_ms", c.decode_fixed_ms);
    c.decode_ms_per_mtexel = j.value("decode_ms_per_mtexel", c.decode_ms_per_mtexel);
    c.apply_fixed_ms = j.value("apply_fixed_ms", c.apply_fixed_ms);
    c.apply_ms_per_probe = j.value("apply_ms_per_probe", c.apply_ms_per_probe);
}

NetworkConfig merge_network(const json& j, const NetworkConfig& base) {
    json merged = json::parse(network_config_to_json(base));
    if (!j.is_object()) throw InvalidArgument("network config must be a JSON object");
    for (const auto& [key, value] : j.items()) merged[key] = value;
    return parse_network_config(merged.dump());
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    ExperimentConfig c;
    try {
        const json j = json::parse(json_text);
        require_keys(j, "experiment",
                     {"scenario", "methods", "server", "clients", "render_rate_hz", "downlink", "uplink", "transport",
                      "step_s", "drain_limit_s", "costs", "wall_clock", "reconnect_at_frame"});
        if (j.contains("scenario")) parse_scenario(j["scenario"], c.scenario);
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j["methods"]) c.methods.push_back(parse_update_method(m.get<std::string>()));
        }
        if (j.contains("server")) parse_server(j["server"], c.server);
        c.clients = j.value("clients", c.clients);
        c.render_rate_hz = j.value("render_rate_hz", c.render_rate_hz);
        if (j.contains("downlink")) c.downlink = merge_network(j["downlink"], c.downlink);
        if (j.contains("uplink")) c.uplink = merge_network(j["uplink"], c.uplink);
        if (j.contains("transport")) {
            require_keys(j["transport"], "transport", {"mtu", "window"});
            c.transport.mtu = j["transport"].value("mtu", c.transport.mtu);
            c.transport.window = j["transport"].value("window", c.transport.window);
        }
        c.step_s = j.value("step_s", c.step_s);
        c.drain_limit_s = j.value("drain_limit_s", c.drain_limit_s);
        if (j.contains("costs")) parse_costs(j["costs"], c.costs);
        c.wall_clock = j.value("wall_clock", c.wall_clock);
        c.reconnect_at_frame = j.value("reconnect_at_frame", c.reconnect_at_frame);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("invalid experiment config: ") + e.what());
    }
    return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
    ordered_json j;
    const ScenarioConfig& s = c.scenario;
    j["scenario"] = {{"regime", std::string(to_string(s.regime))},
                     {"dims", {s.dims.nx, s.dims.ny, s.dims.nz}},
                     {"origin", vec3_to(s.origin)},
                     {"spacing", vec3_to(s.spacing)},
                     {"frames", s.frames},
                     {"seed", s.seed},
                     {"active_fraction", s.active_fraction},
                     {"pillars", s.pillars},
                     {"amplitude", s.amplitude},
                     {"hotspots", s.hotspots},
                     {"hotspot_radius", s.hotspot_radius},
                     {"hotspot_speed", s.hotspot_speed},
                     {"period", s.period}};
    ordered_json methods = ordered_json::array();
    for (UpdateMethod m : c.methods) methods.push_back(std::string(to_string(m)));
    j["methods"] = methods;
    const ServerConfig& v = c.server;
    ordered_json server;
    server["color_rate_hz"] = v.color_rate_hz;
    server["visibility_rate_hz"] = v.visibility_rate_hz;
    server["budget"] = v.budget == kUnlimitedBudget ? ordered_json(nullptr) : ordered_json(v.budget);
    server["gop_length"] = v.gop_length;
    server["use_pvs"] = v.use_pvs;
    server["slot_count"] = v.slot_count;
    server["workers"] = v.workers;
    server["change_threshold"] = v.selection.change_threshold;
    server["sphere_rays"] = v.selection.sphere_rays;
    server["raster_width"] = v.selection.raster_width;
    server["raster_height"] = v.selection.raster_height;
    server["sphere_seed"] = v.selection.sphere_seed;
    j["server"] = server;
    j["clients"] = c.clients;
    j["render_rate_hz"] = c.render_rate_hz;
    j["downlink"] = ordered_json::parse(network_config_to_json(c.downlink));
    j["uplink"] = ordered_json::parse(network_config_to_json(c.uplink));
    j["transport"] = {{"mtu", c.transport.mtu}, {"window", c.transport.window}};
    j["step_s"] = c.step_s;
    j["drain_limit_s"] = c.drain_limit_s;
    j["costs"] = {{"encode_fixed_ms", c.costs.encode_fixed_ms},
                  {"encode_ms_per_mtexel", c.costs.encode_ms_per_mtexel},
                  {"decode_fixed_ms", c.costs.decode_fixed_ms},
                  {"decode_ms_per_mtexel", c.costs.decode_ms_per_mtexel},
                  {"apply_fixed_ms", c.costs.apply_fixed_ms},
                  {"apply_ms_per_probe", c.costs.apply_ms_per_probe}};
    j["wall_clock"] = c.wall_clock;
    j["reconnect_at_frame"] = c.reconnect_at_frame;
    return j.dump(2);
}

// ---------------------------------------------------------------------------

namespace {

ordered_json stats_json(const SeriesStats& s) {
    return {{"count", s.count}, {"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}};
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    return out;
}

}  // namespace

std::string summary_json(const MetricsReport& report) {
    ordered_json j;
    j["config"] = ordered_json::parse(experiment_config_to_json(report.config));
    ordered_json methods = ordered_json::array();
    for (const MethodSummary& m : report.methods) {
        ordered_json o;
        o["method"] = m.method;
        o["duration_s"] = m.duration_s;
        o["color_mbps"] = m.color_mbps;
        o["visibility_mbps"] = m.visibility_mbps;
        o["total_mbps"] = m.total_mbps;
        o["content_bytes"] = m.content_bytes;
        o["packet_overhead_bytes"] = m.packet_overhead_bytes;
        o["transport_overhead_bytes"] = m.transport_overhead_bytes;
        o["color_ratio"] = stats_json(m.color_ratio);
        o["visibility_ratio"] = stats_json(m.visibility_ratio);
        o["index_bytes"] = stats_json(m.index_bytes);
        o["packets"] = m.packets;
        o["key_frames"] = m.key_frames;
        o["retransmissions"] = m.retransmissions;
        o["latency_ms"] = {{"total", stats_json(m.latency_total_ms)},
                           {"input", stats_json(m.latency_input_ms)},
                           {"encode", stats_json(m.latency_encode_ms)},
                           {"transport", stats_json(m.latency_transport_ms)},
                           {"decode", stats_json(m.latency_decode_ms)},
                           {"apply", stats_json(m.latency_apply_ms)}};
        o["mirrors_match"] = m.mirrors_match;
        o["drained"] = m.drained;
        if (report.config.wall_clock) {
            o["wall_encode_ms"] = m.wall_encode_ms;
            o["wall_apply_ms"] = m.wall_apply_ms;
        }
        methods.push_back(o);
    }
    j["methods"] = methods;
    return j.dump(2);
}

void emit_report(const MetricsReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto out = open_out(dir / "frames.csv");
        out << "method,frame,client,stream,seq,key_frame,coded,raw_bits,content_bytes,index_bytes,packet_bytes,"
               "selected,ratio,delivered\n";
        for (const UpdateRecord& r : report.updates) {
            out << r.method << ',' << r.frame << ',' << r.client << ',' << r.stream << ',' << r.seq << ','
                << int(r.key_frame) << ',' << int(r.coded) << ',' << r.raw_bits << ',' << r.content_bytes << ','
                << r.index_bytes << ',' << r.packet_bytes << ',' << r.selected << ',' << num(r.ratio) << ','
                << int(r.delivered) << '\n';
        }
    }
    {
        auto out = open_out(dir / "latency.csv");
        out << "method,frame,client,stream,seq,input_ms,encode_ms,transport_ms,decode_ms,apply_ms,total_ms\n";
        for (const UpdateRecord& r : report.updates) {
            if (!r.delivered) continue;
            out << r.method << ',' << r.frame << ',' << r.client << ',' << r.stream << ',' << r.seq << ','
                << num(r.input_ms) << ',' << num(r.encode_ms) << ',' << num(r.transport_ms) << ','
                << num(r.decode_ms) << ',' << num(r.apply_ms) << ',' << num(r.total_ms) << '\n';
        }
    }
    {
        auto out = open_out(dir / "bandwidth.csv");
        out << "method,duration_s,color_mbps,visibility_mbps,total_mbps,content_bytes,packet_overhead_bytes,"
               "transport_overhead_bytes\n";
        for (const MethodSummary& m : report.methods) {
            out << m.method << ',' << num(m.duration_s) << ',' << num(m.color_mbps) << ',' << num(m.visibility_mbps)
                << ',' << num(m.total_mbps) << ',' << m.content_bytes << ',' << m.packet_overhead_bytes << ','
                << m.transport_overhead_bytes << '\n';
        }
    }
    {
        auto out = open_out(dir / "probes.csv");
        out << "method,frame,client,stream,active,changed,visible_changed,selected\n";
        for (const ProbeRecord& p : report.probes) {
            out << p.method << ',' << p.frame << ',' << p.client << ',' << p.stream << ',' << p.active << ','
                << p.changed << ',' << p.visible_changed << ',' << p.selected << '\n';
        }
    }
    auto out = open_out(dir / "summary.json");
    out << summary_json(report) << '\n';
}

}  // namespace lpstream
