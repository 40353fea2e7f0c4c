#include "lpstream/selection.hpp"

#include "lpstream/error.hpp"
#include "lpstream/half.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lpstream {

ProbeSet set_intersection(const ProbeSet& a, const ProbeSet& b) {
    ProbeSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

ProbeSet set_union(const ProbeSet& a, const ProbeSet& b) {
    ProbeSet out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

namespace {

bool texel_changed(TextureKind kind, Texel a, Texel b, double threshold) {
    if (a == b) return false;
    if (threshold <= 0.0) return true;
    if (kind == TextureKind::Color) {
        const auto diff = [](std::uint32_t x, std::uint32_t y) { return x > y ? x - y : y - x; };
        const std::uint32_t d =
            std::max({diff(texel_r(a), texel_r(b)), diff(texel_g(a), texel_g(b)), diff(texel_b(a), texel_b(b))});
        return static_cast<double>(d) > threshold;
    }
    for (auto [ha, hb] : {std::pair{texel_lo16(a), texel_lo16(b)}, std::pair{texel_hi16(a), texel_hi16(b)}}) {
        if (ha == hb) continue;
        const float fa = half_to_float(ha);
        const float fb = half_to_float(hb);
        if (std::isnan(fa) || std::isnan(fb)) return true;
        if (std::abs(static_cast<double>(fa) - static_cast<double>(fb)) > threshold) return true;
    }
    return false;
}

}  // namespace

ProbeSet detect_changed(const ProbeAtlas& rendered, const ProbeAtlas& last_sent, const ProbeVolume& volume,
                        double threshold) {
    if (rendered.kind() != last_sent.kind() || rendered.probe_count() != last_sent.probe_count() ||
        rendered.probes_per_row() != last_sent.probes_per_row() || rendered.probe_count() != volume.probe_count()) {
        throw InvalidArgument("atlas layouts do not match");
    }
    ProbeSet changed;
    const int side = rendered.probe_side();
    const TexelImage& a = rendered.image();
    const TexelImage& b = last_sent.image();
    for (ProbeId p = 0; p < rendered.probe_count(); ++p) {
        if (!volume.is_active(p)) continue;
        const auto [ox, oy] = rendered.block_origin(p);
        bool differs = false;
        for (int y = 0; y < side && !differs; ++y) {
            const std::size_t row = static_cast<std::size_t>(oy + y) * a.width + ox;
            for (int x = 0; x < side; ++x) {
                if (texel_changed(rendered.kind(), a.texels[row + x], b.texels[row + x], threshold)) {
                    differs = true;
                    break;
                }
            }
        }
        if (differs) changed.push_back(p);
    }
    return changed;
}

CellCage cell_cage(const Vec3& point, const ProbeVolume& volume) {
    const GridDims& d = volume.dims();
    const Vec3 local = hadamard(point - volume.origin(),
                                Vec3{1.0 / volume.spacing().x, 1.0 / volume.spacing().y, 1.0 / volume.spacing().z});
    const int n[3] = {d.nx, d.ny, d.nz};
    int lo[3], hi[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double l = std::clamp(local[a], 0.0, static_cast<double>(n[a] - 1));
        if (n[a] == 1) {
            lo[a] = hi[a] = 0;
            frac[a] = 0.0;
            continue;
        }
        lo[a] = std::min(static_cast<int>(std::floor(l)), n[a] - 2);
        hi[a] = lo[a] + 1;
        frac[a] = l - lo[a];
    }
    CellCage cage;
    cage.fraction = {frac[0], frac[1], frac[2]};
    for (int c = 0; c < 8; ++c) {
        const GridCoord g{(c & 1) ? hi[0] : lo[0], (c & 2) ? hi[1] : lo[1], (c & 4) ? hi[2] : lo[2]};
        cage.corners[c] = grid_to_index(g, d);
    }
    return cage;
}

ProbeSet probes_for_point(const Vec3& point, const ProbeVolume& volume) {
    const CellCage cage = cell_cage(point, volume);
    ProbeSet out(cage.corners.begin(), cage.corners.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<Ray> frustum_rays(const CameraPose& pose, const SelectionParams& params) {
    if (params.raster_width < 0 || params.raster_height < 0) throw InvalidArgument("raster size must be non-negative");
    const Vec3 f = normalize(pose.forward);
    if (length(f) == 0.0) throw InvalidArgument("camera forward vector is zero");
    Vec3 up = pose.up;
    if (length(cross(f, up)) < 1e-9) up = std::abs(f.y) < 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
    const Vec3 right = normalize(cross(f, up));
    const Vec3 true_up = cross(right, f);
    const double tan_half = std::tan(pose.vertical_fov_deg * std::numbers::pi / 360.0);

    std::vector<Ray> rays;
    rays.reserve(static_cast<std::size_t>(params.raster_width) * params.raster_height);
    for (int py = 0; py < params.raster_height; ++py) {
        const double sy = (1.0 - 2.0 * (py + 0.5) / params.raster_height) * tan_half;
        for (int px = 0; px < params.raster_width; ++px) {
            const double sx = (2.0 * (px + 0.5) / params.raster_width - 1.0) * tan_half * pose.aspect;
            rays.push_back({pose.position, normalize(f + right * sx + true_up * sy)});
        }
    }
    return rays;
}

namespace {

double radical_inverse(std::uint64_t i, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base);
    double f = inv;
    double r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

// SplitMix64 finalizer; turns the seed into rotation offsets.
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

std::vector<Vec3> sphere_directions(int count, std::uint64_t seed) {
    if (count < 0) throw InvalidArgument("ray count must be non-negative");
    double du = 0.0, dv = 0.0;
    if (seed != 0) {
        du = static_cast<double>(mix64(seed) >> 11) * 0x1p-53;
        dv = static_cast<double>(mix64(seed ^ 0xA5A5A5A5A5A5A5A5ull) >> 11) * 0x1p-53;
    }
    std::vector<Vec3> dirs;
    dirs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double u = std::fmod(radical_inverse(static_cast<std::uint64_t>(i) + 1, 2) + du, 1.0);
        const double v = std::fmod(radical_inverse(static_cast<std::uint64_t>(i) + 1, 3) + dv, 1.0);
        const double z = 1.0 - 2.0 * u;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = 2.0 * std::numbers::pi * v;
        dirs.push_back({r * std::cos(phi), r * std::sin(phi), z});
    }
    return dirs;
}

std::vector<Hit> frustum_samples(const CameraPose& pose, const SceneGeometry& scene, const SelectionParams& params) {
    std::vector<Hit> hits;
    for (const Ray& ray : frustum_rays(pose, params)) {
        if (auto h = scene.intersect(ray)) hits.push_back(*h);
    }
    return hits;
}

namespace {

class ProbeMarker {
public:
    explicit ProbeMarker(const ProbeVolume& volume) : volume_(volume), marks_(volume.probe_count(), 0) {}

    void mark_point(const Vec3& p) {
        for (ProbeId id : cell_cage(p, volume_).corners) marks_[id] = 1;
    }

    void trace(const Ray& ray, const SceneGeometry& scene, const Vec3& camera) {
        if (auto h = scene.intersect(ray)) {
            mark_point(h->point);
            return;
        }
        mark_point(camera);
        const Box bounds{volume_.bounds_min(), volume_.bounds_max()};
        if (auto exit = intersect(ray, bounds)) mark_point(exit->point);
    }

    ProbeSet active_set() const {
        ProbeSet out;
        for (ProbeId p = 0; p < marks_.size(); ++p) {
            if (marks_[p] && volume_.is_active(p)) out.push_back(p);
        }
        return out;
    }

private:
    const ProbeVolume& volume_;
    std::vector<std::uint8_t> marks_;
};

}  // namespace

ProbeSet primary_view_probes(const CameraPose& pose, const SceneGeometry& scene, const ProbeVolume& volume,
                             const SelectionParams& params) {
    ProbeMarker marker(volume);
    for (const Ray& ray : frustum_rays(pose, params)) marker.trace(ray, scene, pose.position);
    return marker.active_set();
}

ProbeSet pvs_probes(const CameraPose& pose, const SceneGeometry& scene, const ProbeVolume& volume,
                    const SelectionParams& params) {
    if (params.sphere_rays < 1) throw InvalidArgument("sphere ray count must be >= 1");
    ProbeMarker marker(volume);
    for (const Ray& ray : frustum_rays(pose, params)) marker.trace(ray, scene, pose.position);
    for (const Vec3& d : sphere_directions(params.sphere_rays, params.sphere_seed)) {
        marker.trace({pose.position, d}, scene, pose.position);
    }
    return marker.active_set();
}

std::vector<ProbeId> select_for_client(const ProbeSet& changed, const ProbeSet& pvs, const ProbeVolume& volume,
                                       std::span<const std::uint64_t> staleness, std::size_t budget) {
    if (staleness.size() != volume.probe_count()) throw InvalidArgument("staleness size does not match volume");
    std::vector<ProbeId> out;
    for (ProbeId p : set_intersection(changed, pvs)) {
        if (p < volume.probe_count() && volume.is_active(p)) out.push_back(p);
    }
    std::stable_sort(out.begin(), out.end(), [&](ProbeId a, ProbeId b) {
        if (staleness[a] != staleness[b]) return staleness[a] > staleness[b];
        return a < b;
    });
    if (out.size() > budget) out.resize(budget);
    return out;
}

}  // namespace lpstream
