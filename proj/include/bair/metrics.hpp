#pragma once

// PSNR, SSIM, and the YCbCr conversion used by the chroma reference loss.
// All metrics assume unit-range data.

#include <array>

#include "bair/tensor.hpp"

namespace bair {

enum class MetricMode { kLuminance, kRgb };

struct MetricSpace {
  MetricMode mode = MetricMode::kRgb;
  int border = 0;  // pixels cropped from each side before comparison
};

// ITU-R BT.601 studio swing. Input channels in [0,1]; Y lands in
// [16/255, 235/255] and neutral gray maps to Cb = Cr = 128/255.
Image to_ycbcr(const Image& rgb);
Image from_ycbcr(const Image& ycbcr);

// The forward transform as y = M*rgb + c, for callers that need it as a
// differentiable per-pixel affine map.
std::array<double, 9> ycbcr_matrix();
std::array<double, 3> ycbcr_offset();

// 10*log10(1/MSE) in the selected space; identical inputs give +infinity.
double psnr(const Image& a, const Image& b, const MetricSpace& space);

// Single-scale SSIM, 11x11 Gaussian window sigma 1.5, K1 0.01, K2 0.03,
// L 1, averaged over valid window positions. Luminance mode scores the Y
// channel; rgb mode averages the per-channel scores.
double ssim(const Image& a, const Image& b, const MetricSpace& space);

}  // namespace bair
