#pragma once

// Zero-run-length byte coder.
//
// The stream is a sequence of tokens, each a LEB128 varint `h` optionally
// followed by bytes:
//   h even: literal run of (h >> 1) + 1 bytes, copied verbatim after the token
//   h odd:  run of (h >> 1) + kMinZeroRun zero bytes
// An empty input encodes to an empty stream.

#include "lpstream/bytes.hpp"

#include <span>

namespace lpstream {

inline constexpr std::size_t kMinZeroRun = 4;

Bytes entropy_encode(std::span<const std::uint8_t> input);
/// Throws DecodeError on truncated or malformed streams.
Bytes entropy_decode(std::span<const std::uint8_t> stream);

}  // namespace lpstream
