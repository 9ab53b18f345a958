#pragma once

// Non-learned reference resamplers: nearest, bilinear, bicubic (a = -0.5,
// Matlab-convention antialiasing), and exact area averaging. All separable,
// center-aligned, clamp-to-edge.

#include "bair/tensor.hpp"

namespace bair {

enum class Kernel { kNearest, kBilinear, kBicubic, kArea };

struct KernelSpec {
  Kernel kind = Kernel::kBicubic;
  // Widen the kernel support by the scale factor when downscaling.
  // Ignored by nearest (point sampling) and area (inherently averaging).
  bool antialias = true;
};

// Two-piece cubic with a = -0.5; k(0) = 1, zero at integers >= 1.
double bicubic_kernel(double t);

Image resample(const Image& image, int out_h, int out_w,
               const KernelSpec& spec);

// Plain bilinear downscale to (lr_h, lr_w), nearest-neighbor upscale back.
// Integer scale ratios only; exactly idempotent there.
Image bilnn_cycle(const Image& image, int lr_h, int lr_w);

}  // namespace bair
