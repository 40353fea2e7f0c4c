#include "lpstream/entropy.hpp"

namespace lpstream {

Bytes entropy_encode(std::span<const std::uint8_t> input) {
    ByteWriter w;
    std::size_t literal_start = 0;
    std::size_t i = 0;
    auto flush_literal = [&](std::size_t end) {
        if (end > literal_start) {
            w.varint(static_cast<std::uint64_t>(end - literal_start - 1) << 1);
            w.bytes(input.subspan(literal_start, end - literal_start));
        }
    };
    while (i < input.size()) {
        if (input[i] != 0) {
            ++i;
            continue;
        }
        std::size_t run_end = i;
        while (run_end < input.size() && input[run_end] == 0) ++run_end;
        const std::size_t run = run_end - i;
        if (run >= kMinZeroRun) {
            flush_literal(i);
            w.varint((static_cast<std::uint64_t>(run - kMinZeroRun) << 1) | 1u);
            literal_start = run_end;
        }
        i = run_end;
    }
    flush_literal(input.size());
    return w.take();
}

Bytes entropy_decode(std::span<const std::uint8_t> stream) {
    ByteReader r(stream);
    Bytes out;
    while (!r.done()) {
        const std::uint64_t h = r.varint();
        const std::uint64_t n = h >> 1;
        if (h & 1u) {
            if (n > (std::uint64_t{1} << 32)) throw DecodeError("zero run too long");
            out.insert(out.end(), static_cast<std::size_t>(n + kMinZeroRun), std::uint8_t{0});
        } else {
            if (n + 1 > r.remaining()) throw DecodeError("literal run exceeds stream");
            const auto lit = r.bytes(static_cast<std::size_t>(n + 1));
            out.insert(out.end(), lit.begin(), lit.end());
        }
    }
    return out;
}

}  // namespace lpstream
