#pragma once

// Image interchange: 8-bit RGB PNG for corpus data and results, PFM for
// float intermediates, and the shared 8-bit quantization rule.

#include <string>

#include "bair/tensor.hpp"

namespace bair {

// Decodes to {3, H, W} in [0,1] by /255. Grayscale and alpha inputs are
// expanded/flattened to plain RGB.
Image read_png(const std::string& path);

// Quantizes (round half away from zero, clamp) and writes 8-bit RGB.
void write_png(const std::string& path, const Image& img);

// Portable float map, color variant, little-endian.
Image read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Image& img);

// v -> round(v*255)/255 with halves away from zero, clamped to [0,1].
// Applying it twice is the same as applying it once.
float quantize8_value(float v);
Image quantize8(const Image& img);

}  // namespace bair
