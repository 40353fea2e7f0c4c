#pragma once

// Probe volumes, atlas geometry and octahedral direction mapping.
//
// Atlas texels are stored as 32-bit words regardless of kind:
//   Color      A2RGB10: R in bits 0..9, G in 10..19, B in 20..29, alpha in 30..31.
//   Visibility RG16F:   mean distance (half) in bits 0..15, mean squared distance in 16..31.

#include "lpstream/vec3.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace lpstream {

using ProbeId = std::uint32_t;
using Texel = std::uint32_t;

enum class TextureKind : std::uint8_t { Color = 0, Visibility = 1 };

std::string_view to_string(TextureKind kind);

struct GridDims {
    int nx = 1;
    int ny = 1;
    int nz = 1;

    constexpr std::size_t count() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    constexpr bool operator==(const GridDims&) const = default;
};

struct GridCoord {
    int i = 0;
    int j = 0;
    int k = 0;
    constexpr bool operator==(const GridCoord&) const = default;
};

/// Row-major with i varying fastest: index = i + nx * (j + ny * k).
ProbeId grid_to_index(GridCoord c, GridDims dims);
GridCoord index_to_grid(ProbeId index, GridDims dims);

class ProbeVolume {
public:
    /// All probes start active.
    explicit ProbeVolume(GridDims dims, Vec3 origin = {}, Vec3 spacing = {1.0, 1.0, 1.0});

    const GridDims& dims() const { return dims_; }
    const Vec3& origin() const { return origin_; }
    const Vec3& spacing() const { return spacing_; }
    std::size_t probe_count() const { return dims_.count(); }

    bool is_active(ProbeId id) const;
    void set_active(ProbeId id, bool active);
    std::size_t active_count() const;
    std::span<const std::uint8_t> active_flags() const { return active_; }

    Vec3 probe_position(ProbeId id) const;
    Vec3 bounds_min() const { return origin_; }
    Vec3 bounds_max() const;

private:
    GridDims dims_;
    Vec3 origin_;
    Vec3 spacing_;
    std::vector<std::uint8_t> active_;
};

/// Plain row-major 2-D texel array.
struct TexelImage {
    int width = 0;
    int height = 0;
    std::vector<Texel> texels;

    TexelImage() = default;
    TexelImage(int w, int h, Texel fill = 0);

    Texel& at(int x, int y) { return texels[static_cast<std::size_t>(y) * width + x]; }
    Texel at(int x, int y) const { return texels[static_cast<std::size_t>(y) * width + x]; }
    bool operator==(const TexelImage&) const = default;
};

constexpr int probe_side(TextureKind kind) { return kind == TextureKind::Color ? 10 : 18; }
constexpr int core_side(TextureKind kind) { return probe_side(kind) - 2; }
constexpr std::uint64_t probe_block_bits(TextureKind kind) {
    return static_cast<std::uint64_t>(probe_side(kind)) * probe_side(kind) * 32u;
}

/// 16 probes per row up to 256 probes, ceil(sqrt(n)) beyond.
int default_probes_per_row(std::size_t probe_count);

/// Per-probe blocks (guard band included) laid out left-to-right, top-to-bottom.
class ProbeAtlas {
public:
    ProbeAtlas(TextureKind kind, std::size_t probe_count, int probes_per_row = 0);

    TextureKind kind() const { return kind_; }
    int probe_side() const { return lpstream::probe_side(kind_); }
    int core_side() const { return lpstream::core_side(kind_); }
    std::size_t probe_count() const { return probe_count_; }
    int probes_per_row() const { return probes_per_row_; }
    int probe_rows() const;

    const TexelImage& image() const { return image_; }
    TexelImage& image() { return image_; }

    /// Top-left texel of the probe's block (guard band included).
    std::pair<int, int> block_origin(ProbeId id) const;

    std::vector<Texel> extract_block(ProbeId id) const;
    void insert_block(ProbeId id, std::span<const Texel> block);

    /// Texels of the probe blocks only, in probe order (no padding blocks).
    std::vector<Texel> probe_payload() const;
    void load_probe_payload(std::span<const Texel> payload);

    bool operator==(const ProbeAtlas&) const = default;

private:
    TextureKind kind_;
    std::size_t probe_count_;
    int probes_per_row_;
    TexelImage image_;
};

struct OctahedralUV {
    double u = 0.5;
    double v = 0.5;
};

/// Standard octahedral fold; uv lies in [0,1)^2. Throws on zero vectors.
OctahedralUV oct_encode(const Vec3& direction);
Vec3 oct_decode(OctahedralUV uv);

/// Direction at the center of core texel (x, y).
Vec3 texel_direction(int x, int y, int side);
/// Core texel containing the direction.
std::pair<int, int> direction_to_texel(const Vec3& direction, int side);

std::uint64_t raw_bits(const ProbeVolume& volume, TextureKind kind);

/// Bits per second; kb = 1024 bits.
double throughput(double rate_hz, std::size_t probe_count, TextureKind kind);

constexpr double kBitsPerKb = 1024.0;
constexpr double kBitsPerMb = 1024.0 * 1024.0;
inline double to_mbps(double bits_per_second) { return bits_per_second / kBitsPerMb; }

// Texel helpers.
constexpr Texel pack_rgb10(std::uint32_t r, std::uint32_t g, std::uint32_t b, std::uint32_t a = 0) {
    return (r & 0x3FFu) | ((g & 0x3FFu) << 10) | ((b & 0x3FFu) << 20) | ((a & 0x3u) << 30);
}
constexpr std::uint32_t texel_r(Texel t) { return t & 0x3FFu; }
constexpr std::uint32_t texel_g(Texel t) { return (t >> 10) & 0x3FFu; }
constexpr std::uint32_t texel_b(Texel t) { return (t >> 20) & 0x3FFu; }

constexpr Texel pack_rg16(std::uint16_t r, std::uint16_t g) {
    return static_cast<Texel>(r) | (static_cast<Texel>(g) << 16);
}
constexpr std::uint16_t texel_lo16(Texel t) { return static_cast<std::uint16_t>(t & 0xFFFFu); }
constexpr std::uint16_t texel_hi16(Texel t) { return static_cast<std::uint16_t>(t >> 16); }

// "PBV1" snapshot: magic, u32 nx/ny/nz, u8 kind, u32 probes_per_row, u32 texels (LE).
struct AtlasSnapshot {
    GridDims dims;
    ProbeAtlas atlas;
};

void write_snapshot(std::ostream& out, const GridDims& dims, const ProbeAtlas& atlas);
AtlasSnapshot read_snapshot(std::istream& in);

}  // namespace lpstream
