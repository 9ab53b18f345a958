#include "bair/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bair/common.hpp"
#include "bair/image_io.hpp"

namespace bair {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int round_dim(int dim, double scale) {
  return std::clamp(int(std::lround(double(dim) / scale)), 1, dim * 16);
}

void append_row(std::string& out, const ReportRow& r) {
  char buf[160];
  if (std::isinf(r.psnr_db)) {
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%d,%s,inf,%.6f,%.3f\n",
                  r.scale_h, r.scale_w, r.cycle, r.mode.c_str(), r.ssim,
                  r.runtime_ms);
  } else {
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%d,%s,%.6f,%.6f,%.3f\n",
                  r.scale_h, r.scale_w, r.cycle, r.mode.c_str(), r.psnr_db,
                  r.ssim, r.runtime_ms);
  }
  out += buf;
}

Image maybe_quantize(Image img, bool quantize) {
  return quantize ? quantize8(img) : img;
}

}  // namespace

Image Engine::down(const Image& img, int out_h, int out_w) const {
  switch (kind) {
    case Kind::kModel:
      return downscale(model, img, out_h, out_w, true);
    case Kind::kKernel:
      return resample(img, out_h, out_w, kernel);
    case Kind::kBilnn:
      return resample(img, out_h, out_w, {Kernel::kBilinear, false});
  }
  throw ContractError("engine kind out of range");
}

Image Engine::up(const Image& img, int out_h, int out_w) const {
  switch (kind) {
    case Kind::kModel:
      return upscale(model, img, out_h, out_w);
    case Kind::kKernel:
      return resample(img, out_h, out_w, kernel);
    case Kind::kBilnn:
      return resample(img, out_h, out_w, {Kernel::kNearest, true});
  }
  throw ContractError("engine kind out of range");
}

Engine make_kernel_engine(const std::string& name) {
  Engine e;
  e.label = name;
  if (name == "bilnn") {
    e.kind = Engine::Kind::kBilnn;
    return e;
  }
  e.kind = Engine::Kind::kKernel;
  if (name == "nearest") e.kernel = {Kernel::kNearest, true};
  else if (name == "bilinear") e.kernel = {Kernel::kBilinear, true};
  else if (name == "bicubic") e.kernel = {Kernel::kBicubic, true};
  else if (name == "area") e.kernel = {Kernel::kArea, true};
  else throw UsageError("unknown kernel '" + name + "'");
  return e;
}

Engine make_model_engine(const std::string& path) {
  Engine e;
  e.kind = Engine::Kind::kModel;
  e.model = load_model(path);
  e.label = path;
  return e;
}

void write_report_csv(const std::string& path, const ReportMeta& meta,
                      const std::vector<ReportRow>& rows) {
  std::string out;
  out += "# engine=" + meta.engine + "\n";
  out += "# seed=" + std::to_string(meta.seed) + "\n";
  out += std::string("# quantize=") + (meta.quantize ? "on" : "off") + "\n";
  out += "scale_h,scale_w,cycle,mode,psnr_db,ssim,runtime_ms\n";
  for (const ReportRow& r : rows) append_row(out, r);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open report file " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f.good()) throw IoError("failed writing report to " + path);
}

std::vector<ReportRow> run_idem(const std::vector<Image>& corpus,
                                const Engine& engine, double scale, int cycles,
                                const std::string& mode, bool quantize,
                                MetricSpace space) {
  if (corpus.empty()) throw ContractError("empty corpus");
  if (cycles < 1) throw ContractError("cycle count must be >= 1");
  if (scale < 1.0) throw ContractError("idem scale must be >= 1");
  if (mode != "closed" && mode != "open") {
    throw ContractError("idem mode must be closed or open, got '" + mode +
                        "'");
  }
  std::vector<ReportRow> rows;
  for (const Image& gt : corpus) {
    int h = gt.dim(1), w = gt.dim(2);
    int lr_h = round_dim(h, scale), lr_w = round_dim(w, scale);
    Image cur = gt;
    for (int c = 1; c <= cycles; ++c) {
      auto t0 = Clock::now();
      Image lr = mode == "closed"
                     ? engine.down(cur, lr_h, lr_w)
                     : resample(cur, lr_h, lr_w, {Kernel::kArea, true});
      lr = maybe_quantize(std::move(lr), quantize);
      Image hr = maybe_quantize(engine.up(lr, h, w), quantize);
      double rt = ms_since(t0);
      rows.push_back({scale, scale, c, mode, psnr(gt, hr, space),
                      ssim(gt, hr, space), rt});
      cur = std::move(hr);
    }
  }
  return rows;
}

std::vector<ReportRow> run_sweep(const std::vector<Image>& corpus,
                                 const Engine& engine,
                                 const std::vector<double>& scales,
                                 bool quantize, MetricSpace space) {
  if (corpus.empty()) throw ContractError("empty corpus");
  if (scales.empty()) throw ContractError("empty scale list");
  for (double s : scales) {
    if (s < 1.0) throw ContractError("sweep scales must be >= 1");
  }
  std::vector<ReportRow> rows;
  for (double s : scales) {
    for (const Image& gt : corpus) {
      int h = gt.dim(1), w = gt.dim(2);
      auto t0 = Clock::now();
      Image lr = maybe_quantize(
          engine.down(gt, round_dim(h, s), round_dim(w, s)), quantize);
      Image hr = maybe_quantize(engine.up(lr, h, w), quantize);
      double rt = ms_since(t0);
      rows.push_back({s, s, 1, "closed", psnr(gt, hr, space),
                      ssim(gt, hr, space), rt});
    }
  }
  return rows;
}

std::vector<double> parse_scale_range(const std::string& text) {
  std::vector<double> out;
  auto parse_one = [&](const std::string& tok) {
    try {
      std::size_t pos = 0;
      double v = std::stod(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      throw UsageError("bad scale value '" + tok + "'");
    }
  };
  if (text.find(':') != std::string::npos) {
    auto a = text.find(':');
    auto b = text.find(':', a + 1);
    if (b == std::string::npos) {
      throw UsageError("scale range must be lo:hi:step, got '" + text + "'");
    }
    double lo = parse_one(text.substr(0, a));
    double hi = parse_one(text.substr(a + 1, b - a - 1));
    double step = parse_one(text.substr(b + 1));
    if (step <= 0.0 || hi < lo) {
      throw UsageError("scale range must have hi >= lo and step > 0");
    }
    for (int k = 0;; ++k) {
      double v = lo + k * step;
      if (v > hi + step / 2.0) break;
      out.push_back(v);
    }
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    std::string tok = comma == std::string::npos
                          ? text.substr(start)
                          : text.substr(start, comma - start);
    out.push_back(parse_one(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

AsymResult run_asym(const std::vector<Image>& corpus, const Engine& engine,
                    double s_v, double s_h, const std::string& conversion,
                    bool quantize, MetricSpace space) {
  if (corpus.empty()) throw ContractError("empty corpus");
  if (s_v < 1.0 || s_h < 1.0) throw ContractError("asym scales must be >= 1");
  if (conversion != "pre-interp" && conversion != "native") {
    throw ContractError("conversion must be pre-interp or native, got '" +
                        conversion + "'");
  }
  AsymResult res;
  res.s_m = std::sqrt(s_v * s_h);
  for (const Image& gt : corpus) {
    int h = gt.dim(1), w = gt.dim(2);
    auto t0 = Clock::now();
    Image hr;
    if (conversion == "native") {
      Image lr = maybe_quantize(
          engine.down(gt, round_dim(h, s_v), round_dim(w, s_h)), quantize);
      hr = maybe_quantize(engine.up(lr, h, w), quantize);
    } else {
      // Per-axis bicubic so a symmetric s_m downscale lands on the same LR
      // grid the native path uses.
      int ph = std::max(1, int(std::lround(double(h) * res.s_m / s_v)));
      int pw = std::max(1, int(std::lround(double(w) * res.s_m / s_h)));
      Image pre = resample(gt, ph, pw, {Kernel::kBicubic, true});
      Image lr = maybe_quantize(
          engine.down(pre, round_dim(ph, res.s_m), round_dim(pw, res.s_m)),
          quantize);
      hr = maybe_quantize(engine.up(lr, h, w), quantize);
    }
    double rt = ms_since(t0);
    res.rows.push_back({s_v, s_h, 1, conversion, psnr(gt, hr, space),
                        ssim(gt, hr, space), rt});
  }
  return res;
}

BigscaleResult run_bigscale(const std::vector<Image>& corpus,
                            const Engine& engine, double scale, bool quantize,
                            MetricSpace space) {
  if (corpus.empty()) throw ContractError("empty corpus");
  if (scale <= 4.0) throw ContractError("bigscale needs scale > 4");
  BigscaleResult res;
  for (const Image& gt : corpus) {
    int h = gt.dim(1), w = gt.dim(2);
    int lr_h = round_dim(h, scale), lr_w = round_dim(w, scale);
    // Pinning the intermediate to exactly 4*lr keeps the engine's
    // downscaling step at x4 even after LR rounding.
    int pre_h = 4 * lr_h, pre_w = 4 * lr_w;
    auto t0 = Clock::now();
    Image pre = maybe_quantize(
        resample(gt, pre_h, pre_w, {Kernel::kBicubic, true}), quantize);
    Image lr = maybe_quantize(engine.down(pre, lr_h, lr_w), quantize);
    Image hr = maybe_quantize(engine.up(lr, h, w), quantize);
    double rt = ms_since(t0);
    res.rows.push_back({scale, scale, 1, "closed", psnr(gt, hr, space),
                        ssim(gt, hr, space), rt});
    res.sizes.push_back({h, w, pre_h, pre_w, lr_h, lr_w});
  }
  return res;
}

Image run_rescale(const Image& input, const Engine& engine, int out_h,
                  int out_w) {
  if (out_h < 1 || out_w < 1) throw ContractError("output size must be >= 1");
  int h = input.dim(1), w = input.dim(2);
  if (engine.kind == Engine::Kind::kModel) {
    bool down_h = out_h <= h, down_w = out_w <= w;
    bool up_h = out_h >= h, up_w = out_w >= w;
    if (down_h && down_w) return engine.down(input, out_h, out_w);
    if (up_h && up_w) return engine.up(input, out_h, out_w);
    throw ContractError(
        "model engine cannot mix per-axis directions; convert through the "
        "symmetric scale sqrt(s_v*s_h) in two steps instead");
  }
  if (engine.kind == Engine::Kind::kBilnn) {
    if (out_h <= h && out_w <= w) return engine.down(input, out_h, out_w);
    return engine.up(input, out_h, out_w);
  }
  return resample(input, out_h, out_w, engine.kernel);
}

// === Synthetic corpus ===

namespace {

Image synth_noise(int size, std::mt19937& rng) {
  int coarse = std::max(2, size / 8);
  Image low({3, coarse, coarse});
  for (auto& v : low.data) v = float(uniform_unit(rng));
  Image img = resample(low, size, size, {Kernel::kBicubic, false});
  for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

Image synth_gradient(int size, std::mt19937& rng) {
  Image img({3, size, size});
  for (int c = 0; c < 3; ++c) {
    double gx = uniform_real(rng, -1.0, 1.0) / size;
    double gy = uniform_real(rng, -1.0, 1.0) / size;
    double base = uniform_real(rng, 0.2, 0.8);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        img.at(c, y, x) = float(std::clamp(base + gx * x + gy * y, 0.0, 1.0));
      }
    }
  }
  return img;
}

Image synth_checker(int size, int period, std::mt19937& rng) {
  float a[3], b[3];
  for (int c = 0; c < 3; ++c) {
    a[c] = float(uniform_real(rng, 0.0, 0.45));
    b[c] = float(uniform_real(rng, 0.55, 1.0));
  }
  Image img({3, size, size});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      bool odd = ((y / period) + (x / period)) % 2 != 0;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = odd ? b[c] : a[c];
    }
  }
  return img;
}

// 5x7 glyph bitmaps, one row per byte, bit 4 = leftmost column.
constexpr unsigned char kGlyphs[][7] = {
    {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // A
    {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F},  // E
    {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11},  // K
    {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},  // R
    {0x0E, 0x11, 0x10, 0x0E, 0x01, 0x11, 0x0E},  // S
    {0x0A, 0x1F, 0x0A, 0x0A, 0x1F, 0x0A, 0x00},  // #
};

Image synth_glyphs(int size, std::mt19937& rng) {
  float bg = float(uniform_real(rng, 0.85, 1.0));
  Image img = Image::full({3, size, size}, bg);
  int count = size / 8;
  for (int g = 0; g < count; ++g) {
    int which = uniform_int(rng, 0, int(std::size(kGlyphs)) - 1);
    int cell = uniform_int(rng, 1, std::max(1, size / 24));
    int gw = 5 * cell, gh = 7 * cell;
    int oy = uniform_int(rng, 0, std::max(0, size - gh));
    int ox = uniform_int(rng, 0, std::max(0, size - gw));
    float ink = float(uniform_real(rng, 0.0, 0.25));
    for (int ry = 0; ry < 7; ++ry) {
      for (int rx = 0; rx < 5; ++rx) {
        if (!((kGlyphs[which][ry] >> (4 - rx)) & 1)) continue;
        for (int dy = 0; dy < cell; ++dy) {
          for (int dx = 0; dx < cell; ++dx) {
            int y = oy + ry * cell + dy, x = ox + rx * cell + dx;
            if (y >= size || x >= size) continue;
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = ink;
          }
        }
      }
    }
  }
  return img;
}

}  // namespace

Image synth_image(int index, int size, std::uint32_t seed) {
  if (size < 16) throw ContractError("synthetic image size must be >= 16");
  if (index < 0) throw ContractError("synthetic image index must be >= 0");
  std::mt19937 rng(seed + std::uint32_t(index) * 0x9E3779B9u);
  static const int kPeriods[] = {1, 2, 3, 4, 6, 8};
  Image img;
  switch (index % 4) {
    case 0: img = synth_noise(size, rng); break;
    case 1: img = synth_gradient(size, rng); break;
    case 2: img = synth_checker(size, kPeriods[(index / 4) % 6], rng); break;
    default: img = synth_glyphs(size, rng); break;
  }
  return quantize8(img);
}

std::vector<std::string> synth_corpus(const std::string& out_dir, int count,
                                      int size, std::uint32_t seed) {
  if (count < 1) throw ContractError("corpus count must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir);
  std::vector<std::string> paths;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%03d.png", i);
    std::string path = (fs::path(out_dir) / name).string();
    write_png(path, synth_image(i, size, seed));
    paths.push_back(path);
  }
  return paths;
}

std::vector<Image> load_corpus(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".png") {
      paths.push_back(entry.path().string());
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw ContractError("no .png files in " + dir);
  std::vector<Image> out;
  out.reserve(paths.size());
  for (const std::string& p : paths) out.push_back(read_png(p));
  return out;
}

}  // namespace bair
