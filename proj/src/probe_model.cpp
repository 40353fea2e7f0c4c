#include "lpstream/probe_model.hpp"

#include "lpstream/bytes.hpp"
#include "lpstream/error.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>

namespace lpstream {

std::string_view to_string(TextureKind kind) {
    return kind == TextureKind::Color ? "color" : "visibility";
}

namespace {

void check_dims(GridDims dims) {
    if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
        throw InvalidArgument("grid dimensions must be >= 1");
    }
}

}  // namespace

ProbeId grid_to_index(GridCoord c, GridDims dims) {
    check_dims(dims);
    if (c.i < 0 || c.i >= dims.nx || c.j < 0 || c.j >= dims.ny || c.k < 0 || c.k >= dims.nz) {
        throw InvalidArgument("grid coordinate out of range");
    }
    return static_cast<ProbeId>(c.i + dims.nx * (c.j + dims.ny * c.k));
}

GridCoord index_to_grid(ProbeId index, GridDims dims) {
    check_dims(dims);
    if (index >= dims.count()) throw InvalidArgument("probe index out of range");
    const int idx = static_cast<int>(index);
    return {idx % dims.nx, (idx / dims.nx) % dims.ny, idx / (dims.nx * dims.ny)};
}

ProbeVolume::ProbeVolume(GridDims dims, Vec3 origin, Vec3 spacing)
    : dims_(dims), origin_(origin), spacing_(spacing) {
    check_dims(dims);
    if (spacing.x <= 0.0 || spacing.y <= 0.0 || spacing.z <= 0.0) {
        throw InvalidArgument("probe spacing must be positive");
    }
    active_.assign(dims.count(), 1);
}

bool ProbeVolume::is_active(ProbeId id) const {
    return id < active_.size() && active_[id] != 0;
}

void ProbeVolume::set_active(ProbeId id, bool active) {
    if (id >= active_.size()) throw InvalidArgument("probe index out of range");
    active_[id] = active ? 1 : 0;
}

std::size_t ProbeVolume::active_count() const {
    return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), std::uint8_t{1}));
}

Vec3 ProbeVolume::probe_position(ProbeId id) const {
    const GridCoord c = index_to_grid(id, dims_);
    return origin_ + hadamard(spacing_, Vec3{double(c.i), double(c.j), double(c.k)});
}

Vec3 ProbeVolume::bounds_max() const {
    return origin_ + hadamard(spacing_, Vec3{double(dims_.nx - 1), double(dims_.ny - 1), double(dims_.nz - 1)});
}

TexelImage::TexelImage(int w, int h, Texel fill) : width(w), height(h) {
    if (w < 0 || h < 0) throw InvalidArgument("negative image size");
    texels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
}

int default_probes_per_row(std::size_t probe_count) {
    if (probe_count <= 256) return 16;
    auto root = static_cast<std::size_t>(std::sqrt(static_cast<double>(probe_count)));
    while (root * root < probe_count) ++root;
    return static_cast<int>(root);
}

ProbeAtlas::ProbeAtlas(TextureKind kind, std::size_t probe_count, int probes_per_row)
    : kind_(kind),
      probe_count_(probe_count),
      probes_per_row_(probes_per_row > 0 ? probes_per_row : default_probes_per_row(probe_count)) {
    if (probe_count == 0) throw InvalidArgument("atlas needs at least one probe");
    const int side = lpstream::probe_side(kind);
    image_ = TexelImage(probes_per_row_ * side, probe_rows() * side);
}

int ProbeAtlas::probe_rows() const {
    return static_cast<int>((probe_count_ + probes_per_row_ - 1) / probes_per_row_);
}

std::pair<int, int> ProbeAtlas::block_origin(ProbeId id) const {
    if (id >= probe_count_) throw InvalidArgument("probe index out of range");
    const int side = probe_side();
    return {static_cast<int>(id % probes_per_row_) * side, static_cast<int>(id / probes_per_row_) * side};
}

std::vector<Texel> ProbeAtlas::extract_block(ProbeId id) const {
    const auto [ox, oy] = block_origin(id);
    const int side = probe_side();
    std::vector<Texel> block(static_cast<std::size_t>(side) * side);
    for (int y = 0; y < side; ++y) {
        const auto row = image_.texels.begin() + static_cast<std::ptrdiff_t>((oy + y) * image_.width + ox);
        std::copy(row, row + side, block.begin() + y * side);
    }
    return block;
}

void ProbeAtlas::insert_block(ProbeId id, std::span<const Texel> block) {
    const int side = probe_side();
    if (block.size() != static_cast<std::size_t>(side) * side) {
        throw InvalidArgument("block size does not match probe side");
    }
    const auto [ox, oy] = block_origin(id);
    for (int y = 0; y < side; ++y) {
        std::copy(block.begin() + y * side, block.begin() + (y + 1) * side,
                  image_.texels.begin() + static_cast<std::ptrdiff_t>((oy + y) * image_.width + ox));
    }
}

std::vector<Texel> ProbeAtlas::probe_payload() const {
    std::vector<Texel> out;
    out.reserve(probe_count_ * static_cast<std::size_t>(probe_side() * probe_side()));
    for (ProbeId id = 0; id < probe_count_; ++id) {
        const auto block = extract_block(id);
        out.insert(out.end(), block.begin(), block.end());
    }
    return out;
}

void ProbeAtlas::load_probe_payload(std::span<const Texel> payload) {
    const std::size_t per = static_cast<std::size_t>(probe_side()) * probe_side();
    if (payload.size() != per * probe_count_) throw InvalidArgument("payload size does not match atlas");
    for (ProbeId id = 0; id < probe_count_; ++id) insert_block(id, payload.subspan(id * per, per));
}

namespace {

double sign_not_zero(double v) { return v >= 0.0 ? 1.0 : -1.0; }

}  // namespace

OctahedralUV oct_encode(const Vec3& d) {
    const double l1 = std::abs(d.x) + std::abs(d.y) + std::abs(d.z);
    if (!(l1 > 0.0) || !std::isfinite(l1)) throw InvalidArgument("cannot encode a zero or non-finite direction");
    double px = d.x / l1;
    double py = d.y / l1;
    if (d.z < 0.0) {
        const double fx = (1.0 - std::abs(py)) * sign_not_zero(px);
        const double fy = (1.0 - std::abs(px)) * sign_not_zero(py);
        px = fx;
        py = fy;
    }
    constexpr double kBelowOne = 1.0 - 0x1p-53;
    return {std::clamp(px * 0.5 + 0.5, 0.0, kBelowOne), std::clamp(py * 0.5 + 0.5, 0.0, kBelowOne)};
}

Vec3 oct_decode(OctahedralUV uv) {
    double px = uv.u * 2.0 - 1.0;
    double py = uv.v * 2.0 - 1.0;
    const double pz = 1.0 - std::abs(px) - std::abs(py);
    if (pz < 0.0) {
        const double fx = (1.0 - std::abs(py)) * sign_not_zero(px);
        const double fy = (1.0 - std::abs(px)) * sign_not_zero(py);
        px = fx;
        py = fy;
    }
    return normalize(Vec3{px, py, pz});
}

Vec3 texel_direction(int x, int y, int side) {
    return oct_decode({(x + 0.5) / side, (y + 0.5) / side});
}

std::pair<int, int> direction_to_texel(const Vec3& direction, int side) {
    const OctahedralUV uv = oct_encode(direction);
    const int x = std::min(side - 1, static_cast<int>(uv.u * side));
    const int y = std::min(side - 1, static_cast<int>(uv.v * side));
    return {x, y};
}

std::uint64_t raw_bits(const ProbeVolume& volume, TextureKind kind) {
    return static_cast<std::uint64_t>(volume.probe_count()) * probe_block_bits(kind);
}

double throughput(double rate_hz, std::size_t probe_count, TextureKind kind) {
    if (rate_hz < 0.0) throw InvalidArgument("rate must be non-negative");
    const double kb_per_probe = static_cast<double>(probe_block_bits(kind)) / kBitsPerKb;  // 3.125 or 10.125
    return rate_hz * static_cast<double>(probe_count) * kb_per_probe * kBitsPerKb;
}

void write_snapshot(std::ostream& out, const GridDims& dims, const ProbeAtlas& atlas) {
    if (dims.count() != atlas.probe_count()) throw InvalidArgument("dims do not match atlas probe count");
    ByteWriter w;
    w.tag("PBV1");
    w.u32(static_cast<std::uint32_t>(dims.nx));
    w.u32(static_cast<std::uint32_t>(dims.ny));
    w.u32(static_cast<std::uint32_t>(dims.nz));
    w.u8(static_cast<std::uint8_t>(atlas.kind()));
    w.u32(static_cast<std::uint32_t>(atlas.probes_per_row()));
    for (Texel t : atlas.image().texels) w.u32(t);
    const Bytes& b = w.view();
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!out) throw Error("failed to write snapshot");
}

AtlasSnapshot read_snapshot(std::istream& in) {
    // Reads exactly one snapshot so that sequences can be stored back to back.
    const auto read_exact = [&in](std::size_t n) {
        Bytes b(n);
        in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n) throw DecodeError("truncated snapshot");
        return b;
    };
    const Bytes head = read_exact(21);
    ByteReader r(head);
    r.expect_tag("PBV1");
    GridDims dims;
    dims.nx = static_cast<int>(r.u32());
    dims.ny = static_cast<int>(r.u32());
    dims.nz = static_cast<int>(r.u32());
    check_dims(dims);
    const std::uint8_t kind = r.u8();
    if (kind > 1) throw DecodeError("unknown texture kind in snapshot");
    const int ppr = static_cast<int>(r.u32());
    if (ppr < 1) throw DecodeError("invalid probes_per_row in snapshot");
    ProbeAtlas atlas(static_cast<TextureKind>(kind), dims.count(), ppr);
    const Bytes body = read_exact(atlas.image().texels.size() * 4);
    ByteReader tr(body);
    for (Texel& t : atlas.image().texels) t = tr.u32();
    return {dims, std::move(atlas)};
}

}  // namespace lpstream
