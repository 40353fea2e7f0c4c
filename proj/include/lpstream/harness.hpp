#pragma once

// End-to-end simulation: scenario frames -> server -> reliable transport ->
// client, once per update method, with bandwidth, compression, latency and
// probe-selection metrics.

#include "lpstream/client.hpp"
#include "lpstream/scenario.hpp"
#include "lpstream/server.hpp"
#include "lpstream/transport.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lpstream {

/// Virtual stage costs, so latency reports are reproducible. Times in ms.
struct CostModel {
    double encode_fixed_ms = 0.5;
    double encode_ms_per_mtexel = 4.0;
    double decode_fixed_ms = 0.5;
    double decode_ms_per_mtexel = 2.0;
    double apply_fixed_ms = 0.1;
    double apply_ms_per_probe = 0.002;
};

struct ExperimentConfig {
    ScenarioConfig scenario;
    std::vector<UpdateMethod> methods{UpdateMethod::Uncompressed, UpdateMethod::Encoded, UpdateMethod::Culling,
                                      UpdateMethod::PackingNoCache, UpdateMethod::PackingCaching};
    /// `method` is overridden per run.
    ServerConfig server;
    int clients = 1;
    double render_rate_hz = 30.0;
    NetworkConfig downlink{100.0};  ///< server -> client (texture latency)
    NetworkConfig uplink{20.0};     ///< client -> server (input latency)
    TransportConfig transport;
    double step_s = 0.001;
    double drain_limit_s = 60.0;
    CostModel costs;
    /// Add wall-clock stage timings to the summary (makes reports non-reproducible).
    bool wall_clock = false;
    /// Clear every client's state and the matching server session at this frame (-1 = never).
    long long reconnect_at_frame = -1;
};

/// JSON config; every key optional. See the README for the schema.
ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_to_json(const ExperimentConfig& config);

struct UpdateRecord {
    std::string method;
    std::uint64_t frame = 0;
    std::uint32_t client = 0;
    std::string stream;
    std::uint32_t seq = 0;
    bool key_frame = false;
    bool coded = false;
    std::uint64_t raw_bits = 0;
    std::uint64_t content_bytes = 0;  ///< index buffer + texture payload
    std::uint64_t index_bytes = 0;
    std::uint64_t packet_bytes = 0;   ///< serialized update packet
    std::size_t selected = 0;
    double ratio = 0.0;               ///< raw bits / payload bits, coded updates only
    bool delivered = false;
    // Latency stages, ms.
    double input_ms = 0.0;
    double encode_ms = 0.0;
    double transport_ms = 0.0;
    double decode_ms = 0.0;
    double apply_ms = 0.0;
    double total_ms = 0.0;
};

struct ProbeRecord {
    std::string method;
    std::uint64_t frame = 0;
    std::uint32_t client = 0;
    std::string stream;
    std::size_t active = 0;
    std::size_t changed = 0;
    std::size_t visible_changed = 0;
    std::size_t selected = 0;
};

struct SeriesStats {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;  ///< population
    double min = 0.0;
    double max = 0.0;
};

SeriesStats series_stats(const std::vector<double>& values);

struct MethodSummary {
    std::string method;
    double duration_s = 0.0;
    double color_mbps = 0.0;       ///< content only
    double visibility_mbps = 0.0;  ///< content only
    double total_mbps = 0.0;
    std::uint64_t content_bytes = 0;
    std::uint64_t packet_overhead_bytes = 0;     ///< update packet and frame headers
    std::uint64_t transport_overhead_bytes = 0;  ///< datagram headers and retransmissions
    SeriesStats color_ratio;
    SeriesStats visibility_ratio;
    SeriesStats index_bytes;
    std::uint64_t packets = 0;
    std::uint64_t key_frames = 0;
    std::uint64_t retransmissions = 0;
    SeriesStats latency_total_ms;
    SeriesStats latency_encode_ms;
    SeriesStats latency_transport_ms;
    SeriesStats latency_decode_ms;
    SeriesStats latency_apply_ms;
    SeriesStats latency_input_ms;
    bool mirrors_match = false;
    bool drained = false;
    double wall_encode_ms = 0.0;
    double wall_apply_ms = 0.0;
};

struct MetricsReport {
    ExperimentConfig config;
    std::vector<UpdateRecord> updates;
    std::vector<ProbeRecord> probes;
    std::vector<MethodSummary> methods;

    const MethodSummary& summary(UpdateMethod method) const;
    bool all_mirrors_match() const;
};

/// Called for every update packet as the client receives it.
using DeliveryObserver = std::function<void(std::string_view method, std::uint32_t client, double delivered_at,
                                            std::span<const std::uint8_t> packet)>;

MetricsReport run_experiment(const ExperimentConfig& config, const DeliveryObserver& observer = {});

/// Writes frames.csv, bandwidth.csv, latency.csv, probes.csv and summary.json into `dir`.
void emit_report(const MetricsReport& report, const std::filesystem::path& dir);
std::string summary_json(const MetricsReport& report);

/// Encoded size of a frame sequence under each block arrangement.
struct LayoutResult {
    int k = 1;
    std::uint64_t color_bytes = 0;
    std::uint64_t visibility_bytes = 0;
    bool round_trip = false;
};

std::vector<LayoutResult> atlas_arrangement_experiment(const ScenarioConfig& scenario, std::uint64_t frames,
                                                       int gop_length = kDefaultGopLength);

/// Camera pose wire encoding for the input channel.
Bytes encode_pose(const CameraPose& pose, double sent_at);
std::pair<CameraPose, double> decode_pose(std::span<const std::uint8_t> bytes);

}  // namespace lpstream
