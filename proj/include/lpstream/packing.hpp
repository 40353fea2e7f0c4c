#pragma once

// Bit-exact layout transforms between probe atlases and codec input planes:
// YUV plane packing for color and visibility, guard-band strip/reconstruct,
// update-atlas slot allocation and interleaved atlas arrangements.

#include "lpstream/probe_model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

namespace lpstream {

enum class PlaneKind : std::uint8_t {
    Color10in16 = 0,      ///< 16-bit elements, values < 1024
    VisibilityBytes = 1,  ///< 8-bit elements
};

struct PlaneSet {
    PlaneKind kind = PlaneKind::Color10in16;
    int width = 0;
    int height = 0;
    std::array<std::vector<std::uint16_t>, 3> planes;  // Y, U, V

    PlaneSet() = default;
    PlaneSet(PlaneKind k, int w, int h);

    int bit_depth() const { return kind == PlaneKind::Color10in16 ? 10 : 8; }
    int element_bytes() const { return kind == PlaneKind::Color10in16 ? 2 : 1; }
    std::size_t element_count() const { return static_cast<std::size_t>(width) * height; }
    /// Bytes the planes occupy at their storage element width.
    std::size_t raw_bytes() const { return element_count() * 3 * static_cast<std::size_t>(element_bytes()); }

    bool operator==(const PlaneSet&) const = default;
};

PlaneKind plane_kind_for(TextureKind kind);

PlaneSet pack_color(const TexelImage& image);
/// Alpha bits come back as zero.
TexelImage unpack_color(const PlaneSet& planes);

/// ceil(4x/3): YUV elements needed to carry x RG16F texels.
int widened_width(int texels);
/// Inverse of widened_width; throws if `elements` is not a reachable widened width.
int source_width(int elements);

/// Per row, byte stream R-hi,R-lo,G-hi,G-lo per texel laid out as Y[p]=s[3p], U[p]=s[3p+1], V[p]=s[3p+2].
PlaneSet pack_visibility(const TexelImage& image);
TexelImage unpack_visibility(const PlaneSet& planes);

PlaneSet pack_planes(TextureKind kind, const TexelImage& image);
TexelImage unpack_planes(const PlaneSet& planes);

/// Inner (side-2)^2 texels of a side x side block.
std::vector<Texel> strip_guard_band(std::span<const Texel> block, int side);
/// Surround a core with its octahedral-wrap guard band.
std::vector<Texel> reconstruct_guard_band(std::span<const Texel> core, int core_side);
/// Rewrite the border of a full block from its own core.
void fill_guard_band(std::span<Texel> block, int side);
bool guard_band_consistent(std::span<const Texel> block, int side);

struct IndexEntry {
    std::uint32_t slot = 0;
    ProbeId probe = 0;
    bool operator==(const IndexEntry&) const = default;
};

/// Slot allocator for per-client update textures. A probe keeps its slot across
/// frames while it stays cached; new probes take the lowest free slot and,
/// when none is free, evict the least recently used probe not selected this frame.
class UpdateAtlasLayout {
public:
    UpdateAtlasLayout(std::size_t slot_count, int core_side, int slots_per_row = 0);

    std::size_t slot_count() const { return slot_probe_.size(); }
    int slots_per_row() const { return slots_per_row_; }
    int core_side() const { return core_side_; }
    int width() const { return slots_per_row_ * core_side_; }
    int height() const;
    std::pair<int, int> slot_origin(std::uint32_t slot) const;

    std::optional<std::uint32_t> slot_of(ProbeId probe) const;
    std::optional<ProbeId> probe_in(std::uint32_t slot) const;
    std::size_t cached_count() const { return probe_slot_.size(); }

    /// Assign slots for this frame's selection; returns entries sorted by slot.
    std::vector<IndexEntry> assign(std::span<const ProbeId> selected);
    /// Drop every cached assignment.
    void clear();

private:
    void bind(std::uint32_t slot, ProbeId probe);

    int core_side_;
    int slots_per_row_;
    std::vector<std::optional<ProbeId>> slot_probe_;
    std::vector<std::uint64_t> slot_last_use_;
    std::unordered_map<ProbeId, std::uint32_t> probe_slot_;
    std::set<std::uint32_t> free_;
    std::uint64_t frame_ = 0;
};

TexelImage make_update_texture(const UpdateAtlasLayout& layout);

/// Write the stripped core of each selected probe into its slot. Slots not
/// referenced this frame keep their previous contents.
std::vector<IndexEntry> build_update_atlas(std::span<const ProbeId> selected, UpdateAtlasLayout& layout,
                                           const ProbeAtlas& source, TexelImage& update_texture);

/// Copy the core stored at `slot` of an update texture.
std::vector<Texel> read_slot_core(const TexelImage& update_texture, const UpdateAtlasLayout& layout,
                                  std::uint32_t slot);
std::vector<Texel> read_slot_core(const TexelImage& update_texture, int core_side, int slots_per_row,
                                  std::uint32_t slot);

/// Interleave texels of each k x k group of blocks so that same-position texels
/// of the group are adjacent. k = 1 is the identity.
TexelImage interleave_layout(const TexelImage& atlas, int block_side, int k);
TexelImage deinterleave_layout(const TexelImage& atlas, int block_side, int k);

}  // namespace lpstream
