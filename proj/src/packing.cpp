#include "lpstream/packing.hpp"

#include "lpstream/error.hpp"

#include <algorithm>
#include <cmath>

namespace lpstream {

PlaneSet::PlaneSet(PlaneKind k, int w, int h) : kind(k), width(w), height(h) {
    if (w < 0 || h < 0) throw InvalidArgument("negative plane size");
    for (auto& p : planes) p.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
}

PlaneKind plane_kind_for(TextureKind kind) {
    return kind == TextureKind::Color ? PlaneKind::Color10in16 : PlaneKind::VisibilityBytes;
}

PlaneSet pack_color(const TexelImage& image) {
    PlaneSet out(PlaneKind::Color10in16, image.width, image.height);
    for (std::size_t i = 0; i < image.texels.size(); ++i) {
        const Texel t = image.texels[i];
        out.planes[0][i] = static_cast<std::uint16_t>(texel_r(t));
        out.planes[1][i] = static_cast<std::uint16_t>(texel_g(t));
        out.planes[2][i] = static_cast<std::uint16_t>(texel_b(t));
    }
    return out;
}

TexelImage unpack_color(const PlaneSet& planes) {
    if (planes.kind != PlaneKind::Color10in16) throw InvalidArgument("not a color plane set");
    TexelImage out(planes.width, planes.height);
    for (std::size_t i = 0; i < out.texels.size(); ++i) {
        out.texels[i] = pack_rgb10(planes.planes[0][i], planes.planes[1][i], planes.planes[2][i]);
    }
    return out;
}

int widened_width(int texels) {
    if (texels < 0) throw InvalidArgument("negative width");
    return (4 * texels + 2) / 3;
}

int source_width(int elements) {
    if (elements < 0) throw InvalidArgument("negative width");
    const int x = (3 * elements) / 4;
    if (widened_width(x) != elements) throw InvalidArgument("plane width is not a widened visibility width");
    return x;
}

PlaneSet pack_visibility(const TexelImage& image) {
    const int x = image.width;
    const int xw = widened_width(x);
    PlaneSet out(PlaneKind::VisibilityBytes, xw, image.height);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(xw) * 3, 0);
    for (int y = 0; y < image.height; ++y) {
        std::fill(row.begin(), row.end(), std::uint8_t{0});
        for (int t = 0; t < x; ++t) {
            const Texel texel = image.at(t, y);
            const std::uint16_t r = texel_lo16(texel);
            const std::uint16_t g = texel_hi16(texel);
            row[4 * t + 0] = static_cast<std::uint8_t>(r >> 8);
            row[4 * t + 1] = static_cast<std::uint8_t>(r & 0xFF);
            row[4 * t + 2] = static_cast<std::uint8_t>(g >> 8);
            row[4 * t + 3] = static_cast<std::uint8_t>(g & 0xFF);
        }
        const std::size_t base = static_cast<std::size_t>(y) * xw;
        for (int p = 0; p < xw; ++p) {
            out.planes[0][base + p] = row[3 * p];
            out.planes[1][base + p] = row[3 * p + 1];
            out.planes[2][base + p] = row[3 * p + 2];
        }
    }
    return out;
}

TexelImage unpack_visibility(const PlaneSet& planes) {
    if (planes.kind != PlaneKind::VisibilityBytes) throw InvalidArgument("not a visibility plane set");
    for (const auto& p : planes.planes) {
        if (p.size() != planes.element_count()) throw InvalidArgument("plane length mismatch");
    }
    const int xw = planes.width;
    const int x = source_width(xw);
    TexelImage out(x, planes.height);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(xw) * 3);
    for (int y = 0; y < planes.height; ++y) {
        const std::size_t base = static_cast<std::size_t>(y) * xw;
        for (int p = 0; p < xw; ++p) {
            row[3 * p] = static_cast<std::uint8_t>(planes.planes[0][base + p]);
            row[3 * p + 1] = static_cast<std::uint8_t>(planes.planes[1][base + p]);
            row[3 * p + 2] = static_cast<std::uint8_t>(planes.planes[2][base + p]);
        }
        for (int t = 0; t < x; ++t) {
            const auto r = static_cast<std::uint16_t>((row[4 * t] << 8) | row[4 * t + 1]);
            const auto g = static_cast<std::uint16_t>((row[4 * t + 2] << 8) | row[4 * t + 3]);
            out.at(t, y) = pack_rg16(r, g);
        }
    }
    return out;
}

PlaneSet pack_planes(TextureKind kind, const TexelImage& image) {
    return kind == TextureKind::Color ? pack_color(image) : pack_visibility(image);
}

TexelImage unpack_planes(const PlaneSet& planes) {
    return planes.kind == PlaneKind::Color10in16 ? unpack_color(planes) : unpack_visibility(planes);
}

// ---------------------------------------------------------------------------
// Guard bands

namespace {

void check_side(std::size_t size, int side) {
    if (side < 3) throw InvalidArgument("probe block side must be >= 3");
    if (size != static_cast<std::size_t>(side) * side) throw InvalidArgument("block size does not match side");
}

// Source texel for border position (x, y) under the octahedral wrap rule.
std::pair<int, int> wrap_source(int x, int y, int s) {
    const bool left = x == 0, right = x == s - 1, top = y == 0, bottom = y == s - 1;
    if (left && top) return {s - 2, s - 2};
    if (right && top) return {1, s - 2};
    if (left && bottom) return {s - 2, 1};
    if (right && bottom) return {1, 1};
    if (top) return {s - 1 - x, 1};
    if (bottom) return {s - 1 - x, s - 2};
    if (left) return {1, s - 1 - y};
    return {s - 2, s - 1 - y};  // right
}

template <typename Fn>
void for_each_border(int s, Fn&& fn) {
    for (int x = 0; x < s; ++x) {
        fn(x, 0);
        fn(x, s - 1);
    }
    for (int y = 1; y < s - 1; ++y) {
        fn(0, y);
        fn(s - 1, y);
    }
}

}  // namespace

std::vector<Texel> strip_guard_band(std::span<const Texel> block, int side) {
    check_side(block.size(), side);
    const int n = side - 2;
    std::vector<Texel> core(static_cast<std::size_t>(n) * n);
    for (int y = 0; y < n; ++y) {
        std::copy_n(block.begin() + (y + 1) * side + 1, n, core.begin() + y * n);
    }
    return core;
}

std::vector<Texel> reconstruct_guard_band(std::span<const Texel> core, int core_side) {
    const int side = core_side + 2;
    if (core_side < 1 || core.size() != static_cast<std::size_t>(core_side) * core_side) {
        throw InvalidArgument("core size does not match core side");
    }
    std::vector<Texel> block(static_cast<std::size_t>(side) * side, 0);
    for (int y = 0; y < core_side; ++y) {
        std::copy_n(core.begin() + y * core_side, core_side, block.begin() + (y + 1) * side + 1);
    }
    fill_guard_band(block, side);
    return block;
}

void fill_guard_band(std::span<Texel> block, int side) {
    check_side(block.size(), side);
    for_each_border(side, [&](int x, int y) {
        const auto [sx, sy] = wrap_source(x, y, side);
        block[static_cast<std::size_t>(y) * side + x] = block[static_cast<std::size_t>(sy) * side + sx];
    });
}

bool guard_band_consistent(std::span<const Texel> block, int side) {
    check_side(block.size(), side);
    bool ok = true;
    for_each_border(side, [&](int x, int y) {
        const auto [sx, sy] = wrap_source(x, y, side);
        ok = ok && block[static_cast<std::size_t>(y) * side + x] == block[static_cast<std::size_t>(sy) * side + sx];
    });
    return ok;
}

// ---------------------------------------------------------------------------
// Update atlas

UpdateAtlasLayout::UpdateAtlasLayout(std::size_t slot_count, int core_side, int slots_per_row)
    : core_side_(core_side) {
    if (slot_count == 0) throw InvalidArgument("update atlas needs at least one slot");
    if (core_side < 1) throw InvalidArgument("core side must be positive");
    if (slots_per_row <= 0) {
        auto root = static_cast<int>(std::sqrt(static_cast<double>(slot_count)));
        while (static_cast<std::size_t>(root) * root < slot_count) ++root;
        slots_per_row = root;
    }
    slots_per_row_ = slots_per_row;
    slot_probe_.assign(slot_count, std::nullopt);
    slot_last_use_.assign(slot_count, 0);
    for (std::uint32_t s = 0; s < slot_count; ++s) free_.insert(s);
}

int UpdateAtlasLayout::height() const {
    const auto rows = (slot_probe_.size() + slots_per_row_ - 1) / slots_per_row_;
    return static_cast<int>(rows) * core_side_;
}

std::pair<int, int> UpdateAtlasLayout::slot_origin(std::uint32_t slot) const {
    if (slot >= slot_probe_.size()) throw InvalidArgument("slot out of range");
    return {static_cast<int>(slot % slots_per_row_) * core_side_, static_cast<int>(slot / slots_per_row_) * core_side_};
}

std::optional<std::uint32_t> UpdateAtlasLayout::slot_of(ProbeId probe) const {
    const auto it = probe_slot_.find(probe);
    if (it == probe_slot_.end()) return std::nullopt;
    return it->second;
}

std::optional<ProbeId> UpdateAtlasLayout::probe_in(std::uint32_t slot) const {
    if (slot >= slot_probe_.size()) throw InvalidArgument("slot out of range");
    return slot_probe_[slot];
}

void UpdateAtlasLayout::bind(std::uint32_t slot, ProbeId probe) {
    slot_probe_[slot] = probe;
    probe_slot_[probe] = slot;
    slot_last_use_[slot] = frame_;
    free_.erase(slot);
}

std::vector<IndexEntry> UpdateAtlasLayout::assign(std::span<const ProbeId> selected) {
    if (selected.size() > slot_probe_.size()) {
        throw InvalidArgument("selection exceeds update atlas slot count");
    }
    {
        std::vector<ProbeId> sorted(selected.begin(), selected.end());
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw InvalidArgument("duplicate probe in selection");
        }
    }
    ++frame_;
    std::vector<IndexEntry> entries;
    entries.reserve(selected.size());
    std::vector<std::uint8_t> pinned(slot_probe_.size(), 0);

    std::vector<ProbeId> uncached;
    for (ProbeId p : selected) {
        if (auto s = slot_of(p)) {
            slot_last_use_[*s] = frame_;
            pinned[*s] = 1;
            entries.push_back({*s, p});
        } else {
            uncached.push_back(p);
        }
    }
    // Ascending ids onto ascending slots keeps index deltas small.
    std::sort(uncached.begin(), uncached.end());
    std::vector<std::uint32_t> targets;
    targets.reserve(uncached.size());
    for (std::size_t i = 0; i < uncached.size(); ++i) {
        std::uint32_t slot;
        if (!free_.empty()) {
            slot = *free_.begin();
            free_.erase(free_.begin());
        } else {
            // Evict the least recently used slot that is not part of this frame.
            std::optional<std::uint32_t> victim;
            for (std::uint32_t s = 0; s < slot_probe_.size(); ++s) {
                if (pinned[s]) continue;
                if (!victim || slot_last_use_[s] < slot_last_use_[*victim]) victim = s;
            }
            slot = *victim;  // exists: |selected| <= slot_count
            probe_slot_.erase(*slot_probe_[slot]);
            slot_probe_[slot].reset();
        }
        pinned[slot] = 1;
        targets.push_back(slot);
    }
    std::sort(targets.begin(), targets.end());
    for (std::size_t i = 0; i < uncached.size(); ++i) {
        bind(targets[i], uncached[i]);
        entries.push_back({targets[i], uncached[i]});
    }
    std::sort(entries.begin(), entries.end(), [](const IndexEntry& a, const IndexEntry& b) { return a.slot < b.slot; });
    return entries;
}

void UpdateAtlasLayout::clear() {
    std::fill(slot_probe_.begin(), slot_probe_.end(), std::nullopt);
    std::fill(slot_last_use_.begin(), slot_last_use_.end(), 0);
    probe_slot_.clear();
    free_.clear();
    for (std::uint32_t s = 0; s < slot_probe_.size(); ++s) free_.insert(s);
}

TexelImage make_update_texture(const UpdateAtlasLayout& layout) {
    return TexelImage(layout.width(), layout.height());
}

std::vector<IndexEntry> build_update_atlas(std::span<const ProbeId> selected, UpdateAtlasLayout& layout,
                                           const ProbeAtlas& source, TexelImage& update_texture) {
    if (layout.core_side() != source.core_side()) throw InvalidArgument("layout core side does not match atlas");
    if (update_texture.width != layout.width() || update_texture.height != layout.height()) {
        throw InvalidArgument("update texture does not match layout");
    }
    for (ProbeId p : selected) {
        if (p >= source.probe_count()) throw InvalidArgument("selected probe out of range");
    }
    auto entries = layout.assign(selected);
    const int n = layout.core_side();
    for (const IndexEntry& e : entries) {
        const auto core = strip_guard_band(source.extract_block(e.probe), source.probe_side());
        const auto [ox, oy] = layout.slot_origin(e.slot);
        for (int y = 0; y < n; ++y) {
            std::copy_n(core.begin() + y * n, n,
                        update_texture.texels.begin() + static_cast<std::ptrdiff_t>((oy + y) * update_texture.width + ox));
        }
    }
    return entries;
}

std::vector<Texel> read_slot_core(const TexelImage& update_texture, int core_side, int slots_per_row,
                                  std::uint32_t slot) {
    const int ox = static_cast<int>(slot % static_cast<std::uint32_t>(slots_per_row)) * core_side;
    const int oy = static_cast<int>(slot / static_cast<std::uint32_t>(slots_per_row)) * core_side;
    if (ox + core_side > update_texture.width || oy + core_side > update_texture.height) {
        throw InvalidArgument("slot lies outside the update texture");
    }
    std::vector<Texel> core(static_cast<std::size_t>(core_side) * core_side);
    for (int y = 0; y < core_side; ++y) {
        std::copy_n(update_texture.texels.begin() + static_cast<std::ptrdiff_t>((oy + y) * update_texture.width + ox),
                    core_side, core.begin() + y * core_side);
    }
    return core;
}

std::vector<Texel> read_slot_core(const TexelImage& update_texture, const UpdateAtlasLayout& layout,
                                  std::uint32_t slot) {
    return read_slot_core(update_texture, layout.core_side(), layout.slots_per_row(), slot);
}

// ---------------------------------------------------------------------------
// Interleaved arrangements

namespace {

template <bool Forward>
TexelImage permute_groups(const TexelImage& atlas, int side, int k) {
    if (k != 1 && k != 2 && k != 4) throw InvalidArgument("interleave factor must be 1, 2 or 4");
    if (side < 1 || atlas.width % side != 0 || atlas.height % side != 0) {
        throw InvalidArgument("atlas size is not a multiple of the block side");
    }
    const int bw = atlas.width / side;
    const int bh = atlas.height / side;
    if (bw % k != 0 || bh % k != 0) throw InvalidArgument("probe grid is not divisible by the interleave factor");
    TexelImage out(atlas.width, atlas.height);
    const int group = k * side;
    for (int gy = 0; gy < bh / k; ++gy) {
        for (int gx = 0; gx < bw / k; ++gx) {
            for (int py = 0; py < k; ++py) {
                for (int px = 0; px < k; ++px) {
                    for (int ty = 0; ty < side; ++ty) {
                        for (int tx = 0; tx < side; ++tx) {
                            const int bx = gx * group + px * side + tx;
                            const int by = gy * group + py * side + ty;
                            const int ix = gx * group + tx * k + px;
                            const int iy = gy * group + ty * k + py;
                            if constexpr (Forward) {
                                out.at(ix, iy) = atlas.at(bx, by);
                            } else {
                                out.at(bx, by) = atlas.at(ix, iy);
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace

TexelImage interleave_layout(const TexelImage& atlas, int block_side, int k) {
    return permute_groups<true>(atlas, block_side, k);
}

TexelImage deinterleave_layout(const TexelImage& atlas, int block_side, int k) {
    return permute_groups<false>(atlas, block_side, k);
}

}  // namespace lpstream
