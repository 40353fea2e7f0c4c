#pragma once

// Deterministic probe-content generators. Each frame is a pure function of
// (config, frame index). Probe content is traced against a simple room with
// pillars, then animated per regime:
//   Collapse  - per-texel noise on both textures every frame
//   DayCycle  - global periodic color modulation; visibility static except
//               around an occluder that sweeps through the volume
//   Street    - colored hotspots moving through the volume; k = 0 is static

#include "lpstream/probe_model.hpp"
#include "lpstream/scene.hpp"
#include "lpstream/selection.hpp"
#include "lpstream/server.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lpstream {

enum class Regime : std::uint8_t { Collapse, DayCycle, Street };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view name);

struct ScenarioConfig {
    Regime regime = Regime::Street;
    GridDims dims{8, 4, 8};
    Vec3 origin{0.0, 0.0, 0.0};
    Vec3 spacing{1.0, 1.0, 1.0};
    std::uint64_t frames = 100;
    std::uint64_t seed = 1;
    double active_fraction = 0.75;
    int pillars = 3;
    /// Collapse noise scale, DayCycle modulation depth, Street hotspot intensity.
    double amplitude = 1.0;
    int hotspots = 2;
    double hotspot_radius = 1.5;  ///< in grid cells
    double hotspot_speed = 0.05;  ///< revolutions per frame
    int period = 60;              ///< DayCycle frames per cycle
};

class Scenario {
public:
    explicit Scenario(ScenarioConfig config);

    const ScenarioConfig& config() const { return config_; }
    const ProbeVolume& volume() const { return volume_; }
    const SceneGeometry& geometry() const { return geometry_; }

    ProbeFrame generate_frame(std::uint64_t frame) const;

private:
    void render_color(std::uint64_t frame, ProbeAtlas& atlas) const;
    void render_visibility(std::uint64_t frame, ProbeAtlas& atlas) const;

    ScenarioConfig config_;
    ProbeVolume volume_;
    SceneGeometry geometry_;
    /// Per active probe, per core texel: base linear color and traced distance.
    std::vector<Vec3> base_color_;
    std::vector<double> base_distance_;
};

/// Camera circling inside the volume, looking along its path and slightly inward.
/// Distinct clients start at different phases.
CameraPose orbit_pose(const ProbeVolume& volume, double t, std::uint32_t client);

}  // namespace lpstream
