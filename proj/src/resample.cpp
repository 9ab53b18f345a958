#include "bair/resample.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bair/common.hpp"
#include "bair/lattice.hpp"

namespace bair {

double bicubic_kernel(double t) {
  constexpr double a = -0.5;
  double x = std::abs(t);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return a * (((x - 5.0) * x + 8.0) * x - 4.0);
  return 0.0;
}

namespace {

struct Tap {
  int src;
  float w;
};

// Per-output-pixel taps for one axis. Weights sum to 1; zero-weight taps
// are dropped so identity mappings copy bits.
struct AxisTaps {
  std::vector<std::vector<Tap>> per_dst;
};

double kernel_radius(Kernel kind) {
  switch (kind) {
    case Kernel::kNearest: return 0.5;
    case Kernel::kBilinear: return 1.0;
    default: return 2.0;  // bicubic
  }
}

double kernel_eval(Kernel kind, double t) {
  if (kind == Kernel::kBilinear) {
    double x = std::abs(t);
    return x < 1.0 ? 1.0 - x : 0.0;
  }
  return bicubic_kernel(t);
}

AxisTaps build_taps(int n_in, int n_out, const KernelSpec& spec) {
  AxisTaps taps;
  taps.per_dst.resize(std::size_t(n_out));

  if (spec.kind == Kernel::kArea) {
    // Segment lengths from the exact lattice; per output pixel they are
    // already a normalized partition (they sum to the pixel's own length).
    AxisLattice lat = build_axis_lattice(n_in, n_out);
    for (const AxisSegment& seg : lat.segments) {
      double w = double(seg.end - seg.start) / double(n_in);
      taps.per_dst[std::size_t(seg.out_index)].push_back(
          {seg.in_index, float(w)});
    }
    return taps;
  }

  double scale = double(n_in) / double(n_out);
  for (int dst = 0; dst < n_out; ++dst) {
    double center = (dst + 0.5) * scale - 0.5;
    std::vector<Tap>& out = taps.per_dst[std::size_t(dst)];

    if (spec.kind == Kernel::kNearest) {
      int src = int(std::floor(center + 0.5));
      src = src < 0 ? 0 : (src >= n_in ? n_in - 1 : src);
      out.push_back({src, 1.0f});
      continue;
    }

    double widen =
        (spec.antialias && n_out < n_in) ? scale : 1.0;
    double radius = kernel_radius(spec.kind) * widen;
    int lo = int(std::ceil(center - radius));
    int hi = int(std::floor(center + radius));

    std::vector<double> raw;
    raw.reserve(std::size_t(hi - lo + 1));
    double sum = 0.0;
    for (int i = lo; i <= hi; ++i) {
      double w = kernel_eval(spec.kind, (i - center) / widen) / widen;
      raw.push_back(w);
      sum += w;
    }
    // Clamped taps fold onto the edge pixel, so an index can repeat;
    // merging keeps the tap lists short.
    for (int i = lo; i <= hi; ++i) {
      double w = raw[std::size_t(i - lo)] / sum;
      if (w == 0.0) continue;
      int src = i < 0 ? 0 : (i >= n_in ? n_in - 1 : i);
      if (!out.empty() && out.back().src == src) {
        out.back().w += float(w);
      } else {
        out.push_back({src, float(w)});
      }
    }
  }
  return taps;
}

// Applies vertical taps: {C, in_h, W} -> {C, out_h, W}.
Image apply_rows(const Image& src, const AxisTaps& taps, int out_h) {
  int c = src.dim(0), w = src.dim(2);
  Image dst({c, out_h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < out_h; ++y) {
      float* drow = dst.ptr() + (std::size_t(ch) * out_h + y) * w;
      for (const Tap& tap : taps.per_dst[std::size_t(y)]) {
        const float* srow =
            src.ptr() + (std::size_t(ch) * src.dim(1) + tap.src) * w;
        if (tap.w == 1.0f && taps.per_dst[std::size_t(y)].size() == 1) {
          std::copy_n(srow, w, drow);
        } else {
          for (int x = 0; x < w; ++x) drow[x] += tap.w * srow[x];
        }
      }
    }
  }
  return dst;
}

// Applies horizontal taps: {C, H, in_w} -> {C, H, out_w}.
Image apply_cols(const Image& src, const AxisTaps& taps, int out_w) {
  int c = src.dim(0), h = src.dim(1), in_w = src.dim(2);
  Image dst({c, h, out_w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      const float* srow = src.ptr() + (std::size_t(ch) * h + y) * in_w;
      float* drow = dst.ptr() + (std::size_t(ch) * h + y) * out_w;
      for (int x = 0; x < out_w; ++x) {
        const std::vector<Tap>& tl = taps.per_dst[std::size_t(x)];
        if (tl.size() == 1 && tl[0].w == 1.0f) {
          drow[x] = srow[tl[0].src];
          continue;
        }
        float acc = 0.0f;
        for (const Tap& tap : tl) acc += tap.w * srow[tap.src];
        drow[x] = acc;
      }
    }
  }
  return dst;
}

}  // namespace

Image resample(const Image& image, int out_h, int out_w,
               const KernelSpec& spec) {
  if (image.rank() != 3) {
    throw ContractError("resample: expected {C,H,W} image, got " +
                        image.shape_str());
  }
  if (out_h < 1 || out_w < 1) {
    throw ContractError("resample: output size must be positive, got " +
                        std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  AxisTaps v = build_taps(image.dim(1), out_h, spec);
  AxisTaps h = build_taps(image.dim(2), out_w, spec);
  return apply_cols(apply_rows(image, v, out_h), h, out_w);
}

Image bilnn_cycle(const Image& image, int lr_h, int lr_w) {
  int h = image.dim(1), w = image.dim(2);
  if (lr_h < 1 || lr_w < 1 || h % lr_h != 0 || w % lr_w != 0) {
    throw ContractError("bilnn_cycle: " + std::to_string(h) + "x" +
                        std::to_string(w) + " -> " + std::to_string(lr_h) +
                        "x" + std::to_string(lr_w) +
                        " is not an integer scale");
  }
  // Idempotence needs the plain kernel: the downscale then samples either
  // a single source pixel or the midpoint of two equal replicated ones.
  Image lr = resample(image, lr_h, lr_w, {Kernel::kBilinear, false});
  return resample(lr, h, w, {Kernel::kNearest, false});
}

}  // namespace bair
