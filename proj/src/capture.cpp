#include "lpstream/capture.hpp"

#include "lpstream/error.hpp"

#include <json.hpp>

#include <bit>
#include <istream>
#include <iterator>
#include <ostream>

namespace lpstream {

namespace {

void put(std::ostream& out, const Bytes& b) {
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!out) throw InvalidArgument("capture write failed");
}

}  // namespace

void write_capture_header(std::ostream& out, const CaptureHeader& h) {
    const ProbeVolume& v = h.volume;
    std::string active;
    for (std::uint8_t f : v.active_flags()) active.push_back(f ? '1' : '0');
    nlohmann::ordered_json j;
    j["client"] = h.client_id;
    j["dims"] = {v.dims().nx, v.dims().ny, v.dims().nz};
    j["origin"] = {v.origin().x, v.origin().y, v.origin().z};
    j["spacing"] = {v.spacing().x, v.spacing().y, v.spacing().z};
    j["active"] = active;
    j["scene"] = nlohmann::ordered_json::parse(scene_to_json(h.scene));
    const std::string text = j.dump();
    ByteWriter w;
    w.tag("LPC1");
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.bytes({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
    put(out, w.take());
}

void write_capture_record(std::ostream& out, const CaptureRecord& r) {
    ByteWriter w;
    w.u64(std::bit_cast<std::uint64_t>(r.time));
    w.u32(static_cast<std::uint32_t>(r.packet.size()));
    w.bytes(r.packet);
    put(out, w.take());
}

Capture read_capture(std::istream& in) {
    const Bytes data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    ByteReader r(data);
    r.expect_tag("LPC1");
    const auto text = r.bytes(r.u32());
    Capture cap;
    try {
        const auto j = nlohmann::json::parse(text.begin(), text.end());
        const auto& d = j.at("dims");
        const auto& o = j.at("origin");
        const auto& s = j.at("spacing");
        cap.header.client_id = j.at("client").get<std::uint32_t>();
        cap.header.volume = ProbeVolume(GridDims{d[0].get<int>(), d[1].get<int>(), d[2].get<int>()},
                                        Vec3{o[0].get<double>(), o[1].get<double>(), o[2].get<double>()},
                                        Vec3{s[0].get<double>(), s[1].get<double>(), s[2].get<double>()});
        const std::string active = j.at("active").get<std::string>();
        if (active.size() != cap.header.volume.probe_count()) throw DecodeError("active flag count mismatch");
        for (ProbeId p = 0; p < active.size(); ++p) cap.header.volume.set_active(p, active[p] == '1');
        cap.header.scene = parse_scene(j.at("scene").dump());
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("bad capture header: ") + e.what());
    }
    while (!r.done()) {
        CaptureRecord rec;
        rec.time = std::bit_cast<double>(r.u64());
        const auto body = r.bytes(r.u32());
        rec.packet.assign(body.begin(), body.end());
        cap.records.push_back(std::move(rec));
    }
    return cap;
}

}  // namespace lpstream
