#include "lpstream/scenario.hpp"

#include "lpstream/error.hpp"
#include "lpstream/half.hpp"
#include "lpstream/packing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace lpstream {

std::string_view to_string(Regime regime) {
    switch (regime) {
        case Regime::Collapse: return "collapse";
        case Regime::DayCycle: return "daycycle";
        case Regime::Street: return "street";
    }
    return "unknown";
}

Regime parse_regime(std::string_view name) {
    for (Regime r : {Regime::Collapse, Regime::DayCycle, Regime::Street}) {
        if (to_string(r) == name) return r;
    }
    throw InvalidArgument("unknown regime: " + std::string(name));
}

namespace {

std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint64_t hash(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0, std::uint64_t d = 0) {
    return mix(a ^ mix(b ^ mix(c ^ mix(d))));
}

/// Uniform in [0, 1).
double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1p-53; }

std::uint32_t quantize10(double v) {
    return static_cast<std::uint32_t>(std::lround(std::clamp(v, 0.0, 1.0) * 1023.0));
}

constexpr std::uint64_t kSaltActive = 1;
constexpr std::uint64_t kSaltPillar = 2;
constexpr std::uint64_t kSaltNoise = 3;
constexpr std::uint64_t kSaltHotspot = 4;

}  // namespace

Scenario::Scenario(ScenarioConfig config) : config_(config), volume_(config.dims, config.origin, config.spacing) {
    if (config_.dims.count() == 0) throw InvalidArgument("scenario volume is empty");
    if (config_.active_fraction < 0.0 || config_.active_fraction > 1.0) {
        throw InvalidArgument("active fraction must lie in [0, 1]");
    }
    if (config_.period < 1) throw InvalidArgument("period must be >= 1");
    if (config_.hotspots < 0 || config_.pillars < 0) throw InvalidArgument("negative scenario count");

    for (ProbeId p = 0; p < volume_.probe_count(); ++p) {
        volume_.set_active(p, unit(hash(config_.seed, kSaltActive, p)) < config_.active_fraction);
    }

    const Vec3 lo = volume_.bounds_min() - config_.spacing * 0.5;
    const Vec3 hi = volume_.bounds_max() + config_.spacing * 0.5;
    geometry_.add_box({lo, hi});
    for (int i = 0; i < config_.pillars; ++i) {
        const double u = unit(hash(config_.seed, kSaltPillar, static_cast<std::uint64_t>(i), 0));
        const double v = unit(hash(config_.seed, kSaltPillar, static_cast<std::uint64_t>(i), 1));
        const Vec3 c{lo.x + (hi.x - lo.x) * (0.2 + 0.6 * u), 0.0, lo.z + (hi.z - lo.z) * (0.2 + 0.6 * v)};
        const Vec3 half{0.2 * config_.spacing.x, 0.0, 0.2 * config_.spacing.z};
        geometry_.add_box({Vec3{c.x - half.x, lo.y, c.z - half.z}, Vec3{c.x + half.x, hi.y, c.z + half.z}});
    }

    const int cc = core_side(TextureKind::Color);
    const int cv = core_side(TextureKind::Visibility);
    base_color_.assign(volume_.probe_count() * cc * cc, Vec3{});
    base_distance_.assign(volume_.probe_count() * cv * cv, 0.0);
    const Vec3 extent = hi - lo;
    for (ProbeId p = 0; p < volume_.probe_count(); ++p) {
        if (!volume_.is_active(p)) continue;
        const Vec3 pos = volume_.probe_position(p);
        const Vec3 rel{(pos.x - lo.x) / extent.x, (pos.y - lo.y) / extent.y, (pos.z - lo.z) / extent.z};
        for (int y = 0; y < cc; ++y) {
            for (int x = 0; x < cc; ++x) {
                const Vec3 d = texel_direction(x, y, cc);
                const double sky = 0.5 + 0.5 * d.y;
                base_color_[(p * cc + y) * cc + x] = {0.15 + 0.45 * sky * rel.x + 0.2 * rel.z,
                                                       0.2 + 0.4 * sky + 0.1 * rel.y,
                                                       0.25 + 0.35 * sky * (1.0 - rel.x) + 0.1 * d.z * d.z};
            }
        }
        for (int y = 0; y < cv; ++y) {
            for (int x = 0; x < cv; ++x) {
                const Ray ray{pos, texel_direction(x, y, cv)};
                const auto hit = geometry_.intersect(ray);
                base_distance_[(p * cv + y) * cv + x] = hit ? hit->t : length(extent);
            }
        }
    }
}

void Scenario::render_color(std::uint64_t frame, ProbeAtlas& atlas) const {
    const int side = atlas.probe_side();
    const int cc = atlas.core_side();
    const double phase = static_cast<double>(frame % static_cast<std::uint64_t>(config_.period)) / config_.period;
    const double day = 0.15 + 0.85 * config_.amplitude * (0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * phase)) +
                       0.85 * (1.0 - config_.amplitude);
    const Vec3 tint{1.0, 0.9 + 0.1 * std::cos(2.0 * std::numbers::pi * phase), 0.8 + 0.2 * std::sin(std::numbers::pi * phase)};

    std::vector<Vec3> hot_center(static_cast<std::size_t>(config_.hotspots));
    std::vector<Vec3> hot_color(static_cast<std::size_t>(config_.hotspots));
    const Vec3 center = (volume_.bounds_min() + volume_.bounds_max()) * 0.5;
    const Vec3 half_extent = (volume_.bounds_max() - volume_.bounds_min()) * 0.5;
    for (int h = 0; h < config_.hotspots; ++h) {
        const auto hh = static_cast<std::uint64_t>(h);
        const double r = 0.3 + 0.6 * unit(hash(config_.seed, kSaltHotspot, hh, 0));
        const double start = unit(hash(config_.seed, kSaltHotspot, hh, 1));
        const double height = unit(hash(config_.seed, kSaltHotspot, hh, 2));
        const double angle = 2.0 * std::numbers::pi * (start + config_.hotspot_speed * static_cast<double>(frame));
        hot_center[h] = {center.x + r * half_extent.x * std::cos(angle),
                         volume_.bounds_min().y + height * 2.0 * half_extent.y,
                         center.z + r * half_extent.z * std::sin(angle)};
        // Police-light flashing: red and blue swap every few frames.
        const bool red = ((frame / 3) + hh) % 2 == 0;
        hot_color[h] = red ? Vec3{1.0, 0.1, 0.1} : Vec3{0.1, 0.2, 1.0};
    }
    const double radius = config_.hotspot_radius * std::min({config_.spacing.x, config_.spacing.y, config_.spacing.z});

    std::vector<Texel> block(static_cast<std::size_t>(side) * side);
    for (ProbeId p = 0; p < volume_.probe_count(); ++p) {
        if (!volume_.is_active(p)) continue;
        const Vec3 pos = volume_.probe_position(p);
        Vec3 glow;
        if (config_.regime == Regime::Street) {
            for (int h = 0; h < config_.hotspots; ++h) {
                const double d = length(pos - hot_center[h]);
                if (d < radius) glow = glow + hot_color[h] * (config_.amplitude * (1.0 - d / radius));
            }
        }
        for (int y = 0; y < cc; ++y) {
            for (int x = 0; x < cc; ++x) {
                Vec3 c = base_color_[(p * cc + y) * cc + x];
                switch (config_.regime) {
                    case Regime::Collapse: {
                        const std::uint64_t h = hash(config_.seed, kSaltNoise, frame, (std::uint64_t{p} << 16) | (y * cc + x));
                        const double n = config_.amplitude * 0.25;
                        c = c + Vec3{n * (unit(h) - 0.5), n * (unit(mix(h)) - 0.5), n * (unit(mix(h + 1)) - 0.5)};
                        break;
                    }
                    case Regime::DayCycle: c = hadamard(c, tint) * day; break;
                    case Regime::Street: {
                        const Vec3 d = texel_direction(x, y, cc);
                        c = c * 0.35 + glow * (0.6 + 0.4 * std::max(0.0, d.y));
                        break;
                    }
                }
                block[static_cast<std::size_t>(y + 1) * side + x + 1] = pack_rgb10(quantize10(c.x), quantize10(c.y), quantize10(c.z));
            }
        }
        fill_guard_band(block, side);
        atlas.insert_block(p, block);
    }
}

void Scenario::render_visibility(std::uint64_t frame, ProbeAtlas& atlas) const {
    const int side = atlas.probe_side();
    const int cv = atlas.core_side();
    const double phase = static_cast<double>(frame % static_cast<std::uint64_t>(config_.period)) / config_.period;
    const Vec3 lo = volume_.bounds_min();
    const Vec3 hi = volume_.bounds_max();
    const Vec3 occluder{lo.x + (hi.x - lo.x) * phase, (lo.y + hi.y) * 0.5, (lo.z + hi.z) * 0.5};
    const double occluder_radius = 0.75 * std::min({config_.spacing.x, config_.spacing.y, config_.spacing.z});
    const double window = 2.5 * std::max({config_.spacing.x, config_.spacing.y, config_.spacing.z});

    std::vector<Texel> block(static_cast<std::size_t>(side) * side);
    for (ProbeId p = 0; p < volume_.probe_count(); ++p) {
        if (!volume_.is_active(p)) continue;
        const Vec3 pos = volume_.probe_position(p);
        const Vec3 to_occ = occluder - pos;
        const double occ_dist = length(to_occ);
        const bool near_occluder = config_.regime == Regime::DayCycle && occ_dist < window;
        for (int y = 0; y < cv; ++y) {
            for (int x = 0; x < cv; ++x) {
                double mu = base_distance_[(p * cv + y) * cv + x];
                if (config_.regime == Regime::Collapse) {
                    const std::uint64_t h = hash(config_.seed, kSaltNoise + 100, frame, (std::uint64_t{p} << 16) | (y * cv + x));
                    mu *= 1.0 + config_.amplitude * 0.3 * (unit(h) - 0.5);
                } else if (near_occluder && occ_dist > 1e-9) {
                    const Vec3 d = texel_direction(x, y, cv);
                    if (dot(d, to_occ / occ_dist) > 0.7) mu = std::min(mu, std::max(0.05, occ_dist - occluder_radius));
                }
                const double var = (0.05 * mu) * (0.05 * mu);
                block[static_cast<std::size_t>(y + 1) * side + x + 1] =
                    pack_rg16(float_to_half(static_cast<float>(mu)), float_to_half(static_cast<float>(mu * mu + var)));
            }
        }
        fill_guard_band(block, side);
        atlas.insert_block(p, block);
    }
}

ProbeFrame Scenario::generate_frame(std::uint64_t frame) const {
    if (frame >= config_.frames) throw InvalidArgument("frame index beyond scenario duration");
    ProbeFrame out{frame, ProbeAtlas(TextureKind::Color, volume_.probe_count()),
                   ProbeAtlas(TextureKind::Visibility, volume_.probe_count()), geometry_};
    render_color(frame, out.color);
    render_visibility(frame, out.visibility);
    return out;
}

CameraPose orbit_pose(const ProbeVolume& volume, double t, std::uint32_t client) {
    const Vec3 lo = volume.bounds_min();
    const Vec3 hi = volume.bounds_max();
    const Vec3 center = (lo + hi) * 0.5;
    const Vec3 half = (hi - lo) * 0.5;
    const double angle = 2.0 * std::numbers::pi * (0.05 * t + 0.37 * client);
    CameraPose pose;
    pose.position = {center.x + 0.6 * half.x * std::cos(angle), center.y, center.z + 0.6 * half.z * std::sin(angle)};
    const Vec3 tangent{-std::sin(angle), 0.0, std::cos(angle)};
    Vec3 inward = center - pose.position;
    if (length(inward) > 1e-12) inward = normalize(inward);
    pose.forward = normalize(tangent + inward * 0.3);
    return pose;
}

}  // namespace lpstream
