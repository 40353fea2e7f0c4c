#pragma once

// "LPC1" capture file: what one client received from the server, replayable
// offline. Layout: magic, u32 header length, JSON header (volume, active
// flags, scene), then records of f64 receive time, u32 length, update packet.

#include "lpstream/bytes.hpp"
#include "lpstream/probe_model.hpp"
#include "lpstream/scene.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace lpstream {

struct CaptureHeader {
    std::uint32_t client_id = 1;
    ProbeVolume volume{GridDims{}};
    SceneGeometry scene;
};

struct CaptureRecord {
    double time = 0.0;
    Bytes packet;
};

struct Capture {
    CaptureHeader header;
    std::vector<CaptureRecord> records;
};

void write_capture_header(std::ostream& out, const CaptureHeader& header);
void write_capture_record(std::ostream& out, const CaptureRecord& record);
Capture read_capture(std::istream& in);

}  // namespace lpstream
