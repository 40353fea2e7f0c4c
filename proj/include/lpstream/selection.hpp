#pragma once

// Per-client probe selection: change detection against the last transmitted
// state, potentially-visible-set gathering and budgeted ordering.

#include "lpstream/probe_model.hpp"
#include "lpstream/scene.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace lpstream {

/// Sorted, duplicate-free probe ids.
using ProbeSet = std::vector<ProbeId>;

inline constexpr std::size_t kUnlimitedBudget = std::numeric_limits<std::size_t>::max();

struct CameraPose {
    Vec3 position;
    Vec3 forward{0.0, 0.0, 1.0};
    Vec3 up{0.0, 1.0, 0.0};
    double vertical_fov_deg = 60.0;
    double aspect = 1.0;
};

struct SelectionParams {
    /// 0 means any bit difference counts as a change. Color: 10-bit channel
    /// units. Visibility: absolute difference of the decoded half floats.
    double change_threshold = 0.0;
    int sphere_rays = 1024;
    int raster_width = 64;
    int raster_height = 64;
    std::size_t budget = kUnlimitedBudget;
    std::uint64_t sphere_seed = 0;
};

ProbeSet detect_changed(const ProbeAtlas& rendered, const ProbeAtlas& last_sent, const ProbeVolume& volume,
                        double threshold = 0.0);

/// Grid cell enclosing a point (clamped to the volume) and the point's
/// fractional position inside it. corner index bit0 -> +i, bit1 -> +j, bit2 -> +k.
struct CellCage {
    std::array<ProbeId, 8> corners{};
    Vec3 fraction;
};

CellCage cell_cage(const Vec3& point, const ProbeVolume& volume);

/// The (up to) 8 probes shading a point, as a set.
ProbeSet probes_for_point(const Vec3& point, const ProbeVolume& volume);

/// One ray per raster pixel center through the view frustum, row-major.
std::vector<Ray> frustum_rays(const CameraPose& pose, const SelectionParams& params);

/// Prefix-nested, near-uniform sphere directions (Halton points mapped to the
/// sphere, rotated by a seed-derived offset): the first n directions of
/// sphere_directions(n + m) equal sphere_directions(n).
std::vector<Vec3> sphere_directions(int count, std::uint64_t seed = 0);

/// Hit points of the frustum rays; these are the client's visible shading points.
std::vector<Hit> frustum_samples(const CameraPose& pose, const SceneGeometry& scene, const SelectionParams& params);

/// Probes shading points visible in the primary view only.
ProbeSet primary_view_probes(const CameraPose& pose, const SceneGeometry& scene, const ProbeVolume& volume,
                             const SelectionParams& params);

/// Primary view plus a spherical gather from the camera position. Rays that
/// miss contribute the camera cell and the cell where the ray leaves the volume.
ProbeSet pvs_probes(const CameraPose& pose, const SceneGeometry& scene, const ProbeVolume& volume,
                    const SelectionParams& params);

/// changed ∩ pvs ∩ active, most stale first (ties by id), truncated to budget.
/// `staleness[p]` is the number of frames since probe p was last transmitted.
std::vector<ProbeId> select_for_client(const ProbeSet& changed, const ProbeSet& pvs, const ProbeVolume& volume,
                                       std::span<const std::uint64_t> staleness, std::size_t budget);

ProbeSet set_intersection(const ProbeSet& a, const ProbeSet& b);
ProbeSet set_union(const ProbeSet& a, const ProbeSet& b);

}  // namespace lpstream
