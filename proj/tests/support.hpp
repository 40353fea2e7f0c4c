#pragma once

// Shared helpers for the unit and property tests.

#include "lpstream/packing.hpp"
#include "lpstream/probe_model.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace lpstream::test {

using Rng = std::mt19937_64;

inline std::uint32_t uniform_u32(Rng& rng, std::uint32_t lo, std::uint32_t hi) {
    return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Texel random_color_texel(Rng& rng) {
    return pack_rgb10(uniform_u32(rng, 0, 1023), uniform_u32(rng, 0, 1023), uniform_u32(rng, 0, 1023),
                      uniform_u32(rng, 0, 3));
}

inline Texel random_texel(Rng& rng) { return static_cast<Texel>(rng()); }

/// Random texels for an atlas of the given kind (color alpha bits cleared).
inline void fill_random(ProbeAtlas& atlas, Rng& rng) {
    for (Texel& t : atlas.image().texels) {
        t = atlas.kind() == TextureKind::Color ? (random_color_texel(rng) & 0x3FFFFFFFu) : random_texel(rng);
    }
}

/// Random core with a guard band that follows the wrap rule.
inline std::vector<Texel> random_block(TextureKind kind, Rng& rng) {
    std::vector<Texel> core(static_cast<std::size_t>(core_side(kind) * core_side(kind)));
    for (Texel& t : core) t = kind == TextureKind::Color ? (random_color_texel(rng) & 0x3FFFFFFFu) : random_texel(rng);
    return reconstruct_guard_band(core, core_side(kind));
}

/// Runs `body(rng, case_index)` for `cases` independently seeded cases.
template <typename F>
void for_cases(std::uint64_t seed, int cases, F&& body) {
    for (int i = 0; i < cases; ++i) {
        Rng rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(i));
        body(rng, i);
    }
}

}  // namespace lpstream::test
