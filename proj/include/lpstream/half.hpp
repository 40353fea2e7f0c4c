#pragma once

#include <cstdint>

namespace lpstream {

// IEEE 754 binary16 <-> binary32. Round-to-nearest-even on narrowing;
// NaN payloads are truncated to the top mantissa bits but stay NaN.
std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t bits);

}  // namespace lpstream
