#include "bair/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "bair/common.hpp"

namespace bair {
namespace {

// Forward transform written as y = M*rgb + c with everything in [0,1].
constexpr std::array<double, 9> kYcbcrM = {
    65.481 / 255.0,  128.553 / 255.0, 24.966 / 255.0,   //
    -37.797 / 255.0, -74.203 / 255.0, 112.0 / 255.0,    //
    112.0 / 255.0,   -93.786 / 255.0, -18.214 / 255.0,
};
constexpr std::array<double, 3> kYcbcrC = {16.0 / 255.0, 128.0 / 255.0,
                                           128.0 / 255.0};

std::array<double, 9> invert3(const std::array<double, 9>& m) {
  double det = m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
  double s = 1.0 / det;
  return {s * (m[4] * m[8] - m[5] * m[7]), s * (m[2] * m[7] - m[1] * m[8]),
          s * (m[1] * m[5] - m[2] * m[4]), s * (m[5] * m[6] - m[3] * m[8]),
          s * (m[0] * m[8] - m[2] * m[6]), s * (m[2] * m[3] - m[0] * m[5]),
          s * (m[3] * m[7] - m[4] * m[6]), s * (m[1] * m[6] - m[0] * m[7]),
          s * (m[0] * m[4] - m[1] * m[3])};
}

Image apply_color(const Image& img, const std::array<double, 9>& m,
                  const std::array<double, 3>& pre,
                  const std::array<double, 3>& post) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw ContractError("color transform needs a 3-channel image, got " +
                        img.shape_str());
  }
  int h = img.dim(1), w = img.dim(2);
  Image out({3, h, w});
  std::size_t plane = std::size_t(h) * std::size_t(w);
  for (std::size_t p = 0; p < plane; ++p) {
    double in0 = double(img.data[p]) + pre[0];
    double in1 = double(img.data[plane + p]) + pre[1];
    double in2 = double(img.data[2 * plane + p]) + pre[2];
    for (int ch = 0; ch < 3; ++ch) {
      double v = m[std::size_t(3 * ch)] * in0 + m[std::size_t(3 * ch + 1)] * in1 +
                 m[std::size_t(3 * ch + 2)] * in2 + post[ch];
      out.data[std::size_t(ch) * plane + p] = float(v);
    }
  }
  return out;
}

Image crop_border(const Image& img, int border) {
  if (border <= 0) return img;
  int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (2 * border >= h || 2 * border >= w) {
    throw ContractError("border crop of " + std::to_string(border) +
                        " consumes the whole " + img.shape_str() + " image");
  }
  Image out({c, h - 2 * border, w - 2 * border});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < out.dim(1); ++y) {
      for (int x = 0; x < out.dim(2); ++x) {
        out.at(ch, y, x) = img.at(ch, y + border, x + border);
      }
    }
  }
  return out;
}

// Extracts the channels the metric actually compares, border already cropped.
std::pair<Image, Image> prepare(const Image& a, const Image& b,
                                const MetricSpace& space) {
  if (!a.same_shape(b)) {
    throw ContractError("metric inputs differ in shape: " + a.shape_str() +
                        " vs " + b.shape_str());
  }
  if (a.rank() != 3) {
    throw ContractError("metrics expect rank-3 images, got " + a.shape_str());
  }
  Image pa = crop_border(a, space.border);
  Image pb = crop_border(b, space.border);
  if (space.mode == MetricMode::kLuminance) {
    Image ya = to_ycbcr(pa);
    Image yb = to_ycbcr(pb);
    int h = ya.dim(1), w = ya.dim(2);
    Image la({1, h, w}), lb({1, h, w});
    std::size_t plane = std::size_t(h) * std::size_t(w);
    for (std::size_t p = 0; p < plane; ++p) {
      la.data[p] = ya.data[p];
      lb.data[p] = yb.data[p];
    }
    return {la, lb};
  }
  return {pa, pb};
}

const int kWindow = 11;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> t{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    double d = i - (kWindow - 1) / 2.0;
    t[std::size_t(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += t[std::size_t(i)];
  }
  for (auto& v : t) v /= sum;
  return t;
}

// SSIM of one channel over valid window positions.
double ssim_plane(const float* a, const float* b, int h, int w) {
  static const std::array<double, kWindow> taps = gaussian_taps();
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;

  // Horizontal pass of the separable window over the five moment fields.
  int hw = w - kWindow + 1;
  std::vector<double> ma(std::size_t(h) * std::size_t(hw));
  std::vector<double> mb(ma.size()), maa(ma.size()), mbb(ma.size()),
      mab(ma.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < hw; ++x) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int k = 0; k < kWindow; ++k) {
        double va = a[y * w + x + k];
        double vb = b[y * w + x + k];
        double t = taps[std::size_t(k)];
        sa += t * va;
        sb += t * vb;
        saa += t * va * va;
        sbb += t * vb * vb;
        sab += t * va * vb;
      }
      std::size_t o = std::size_t(y) * std::size_t(hw) + std::size_t(x);
      ma[o] = sa;
      mb[o] = sb;
      maa[o] = saa;
      mbb[o] = sbb;
      mab[o] = sab;
    }
  }

  int vh = h - kWindow + 1;
  double total = 0.0;
  for (int y = 0; y < vh; ++y) {
    for (int x = 0; x < hw; ++x) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int k = 0; k < kWindow; ++k) {
        std::size_t o = std::size_t(y + k) * std::size_t(hw) + std::size_t(x);
        double t = taps[std::size_t(k)];
        sa += t * ma[o];
        sb += t * mb[o];
        saa += t * maa[o];
        sbb += t * mbb[o];
        sab += t * mab[o];
      }
      double var_a = saa - sa * sa;
      double var_b = sbb - sb * sb;
      double cov = sab - sa * sb;
      double num = (2.0 * sa * sb + c1) * (2.0 * cov + c2);
      double den = (sa * sa + sb * sb + c1) * (var_a + var_b + c2);
      total += num / den;
    }
  }
  return total / (double(vh) * double(hw));
}

}  // namespace

std::array<double, 9> ycbcr_matrix() { return kYcbcrM; }
std::array<double, 3> ycbcr_offset() { return kYcbcrC; }

Image to_ycbcr(const Image& rgb) {
  return apply_color(rgb, kYcbcrM, {0.0, 0.0, 0.0}, kYcbcrC);
}

Image from_ycbcr(const Image& ycbcr) {
  static const std::array<double, 9> inv = invert3(kYcbcrM);
  return apply_color(ycbcr, inv, {-kYcbcrC[0], -kYcbcrC[1], -kYcbcrC[2]},
                     {0.0, 0.0, 0.0});
}

double psnr(const Image& a, const Image& b, const MetricSpace& space) {
  auto [pa, pb] = prepare(a, b, space);
  double acc = 0.0;
  for (std::size_t i = 0; i < pa.data.size(); ++i) {
    double d = double(pa.data[i]) - double(pb.data[i]);
    acc += d * d;
  }
  double mse = acc / double(pa.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b, const MetricSpace& space) {
  auto [pa, pb] = prepare(a, b, space);
  int c = pa.dim(0), h = pa.dim(1), w = pa.dim(2);
  if (h < kWindow || w < kWindow) {
    throw ContractError("ssim needs at least " + std::to_string(kWindow) + "x" +
                        std::to_string(kWindow) + " pixels, got " +
                        pa.shape_str());
  }
  // Identical inputs score exactly 1; the windowed ratio only reaches that
  // up to rounding.
  if (pa.data == pb.data) return 1.0;
  std::size_t plane = std::size_t(h) * std::size_t(w);
  double total = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    total += ssim_plane(pa.ptr() + std::size_t(ch) * plane,
                        pb.ptr() + std::size_t(ch) * plane, h, w);
  }
  return total / double(c);
}

}  // namespace bair
