#pragma once

// Experiment protocols behind the CLI: cycle idempotence (closed/open),
// continuous scale sweeps, asymmetric and large-scale evaluation, and the
// deterministic synthetic corpus.

#include <cstdint>
#include <string>
#include <vector>

#include "bair/metrics.hpp"
#include "bair/model.hpp"
#include "bair/resample.hpp"
#include "bair/tensor.hpp"

namespace bair {

// A rescaling engine is either the trained model, a classic kernel, or the
// bilinear-down/nearest-up reference pair.
struct Engine {
  enum class Kind { kModel, kKernel, kBilnn };
  Kind kind = Kind::kKernel;
  RescaleModel model;
  KernelSpec kernel = {Kernel::kBicubic, true};
  std::string label;  // model path or kernel name, echoed in reports

  Image down(const Image& img, int out_h, int out_w) const;
  Image up(const Image& img, int out_h, int out_w) const;
};

Engine make_kernel_engine(const std::string& name);
Engine make_model_engine(const std::string& path);

struct ReportRow {
  double scale_h = 1.0;
  double scale_w = 1.0;
  int cycle = 1;
  std::string mode;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double runtime_ms = 0.0;
};

struct ReportMeta {
  std::string engine;
  std::uint32_t seed = 0;
  bool quantize = true;
};

// Header `scale_h,scale_w,cycle,mode,psnr_db,ssim,runtime_ms` after `#`
// metadata comment lines. Byte-stable apart from the runtime column.
void write_report_csv(const std::string& path, const ReportMeta& meta,
                      const std::vector<ReportRow>& rows);

// === Protocols ===

// K cycles per image; closed uses the engine's own downscaler, open fixes
// the downscaler to area averaging. Rows are per image, contiguous and
// ordered by cycle. Quantization (when on) applies to the LR and HR images
// between stages, matching 8-bit storage.
std::vector<ReportRow> run_idem(const std::vector<Image>& corpus,
                                const Engine& engine, double scale, int cycles,
                                const std::string& mode, bool quantize,
                                MetricSpace space = {});

// One closed reconstruction cycle per (scale, image) pair.
std::vector<ReportRow> run_sweep(const std::vector<Image>& corpus,
                                 const Engine& engine,
                                 const std::vector<double>& scales,
                                 bool quantize, MetricSpace space = {});

// Parses "lo:hi:step" (inclusive endpoints within half a step) into the
// sweep's scale list.
std::vector<double> parse_scale_range(const std::string& text);

// Asymmetric evaluation. pre-interp converts the problem to the symmetric
// scale s_m = sqrt(s_v*s_h) by bicubic per-axis resampling; native uses the
// asymmetric lattices directly.
struct AsymResult {
  std::vector<ReportRow> rows;
  double s_m = 1.0;
};
AsymResult run_asym(const std::vector<Image>& corpus, const Engine& engine,
                    double s_v, double s_h, const std::string& conversion,
                    bool quantize, MetricSpace space = {});

// Large scales: bicubic pre-downscale so the model's downscaling step is
// exactly x4, then one model upscale straight to the original size.
struct BigscaleSizes {
  int gt_h = 0, gt_w = 0;      // original
  int pre_h = 0, pre_w = 0;    // after bicubic pre-downscale
  int lr_h = 0, lr_w = 0;      // model LR
};
struct BigscaleResult {
  std::vector<ReportRow> rows;
  std::vector<BigscaleSizes> sizes;  // one per image
};
BigscaleResult run_bigscale(const std::vector<Image>& corpus,
                            const Engine& engine, double scale, bool quantize,
                            MetricSpace space = {});

// Single-image rescale; the model engine refuses mixed per-axis directions.
Image run_rescale(const Image& input, const Engine& engine, int out_h,
                  int out_w);

// === Synthetic corpus ===

// Deterministic image `index` of the mixture; cycles through band-limited
// noise, gradients, checkerboards (periods down to one pixel), and glyph
// rasters.
Image synth_image(int index, int size, std::uint32_t seed);

// Writes `count` PNGs (synth_000.png, ...) and returns their paths.
std::vector<std::string> synth_corpus(const std::string& out_dir, int count,
                                      int size, std::uint32_t seed);

// Loads every .png in a directory, sorted by filename.
std::vector<Image> load_corpus(const std::string& dir);

}  // namespace bair
