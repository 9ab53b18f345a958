#pragma once

// Losses, scale sampling, the multi-cycle proxy objective, and the staged
// optimizer loop. Loss graphs are templated on the tape scalar so the same
// code runs under the double-precision gradient checker.

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "bair/common.hpp"
#include "bair/metrics.hpp"
#include "bair/model.hpp"
#include "bair/resample.hpp"
#include "bair/tensor.hpp"

namespace bair {

enum class RecKind { kL1, kLs };
enum class RefKind { kL2Pixel, kL2Chroma, kL2Mean, kNone };
enum class Stage { kPretrain, kBase, kFinetuneN, kFinetuneAsym };

struct LossSpec {
  RecKind rec_kind = RecKind::kL1;
  RefKind ref_kind = RefKind::kL2Pixel;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  int max_cycles = 1;
};

// The chroma reference ships with twice the usual weight.
double default_lambda2(RefKind kind);

struct TrainConfig {
  int batch = 8;
  int patch = 48;
  double scale_low = 1.0;
  double scale_high = 4.0;
  bool asymmetric = false;  // independent per-axis scale draws
  double lr = 1e-4;
  int lr_halve_every = 0;  // steps between halvings; 0 keeps lr constant
  int steps = 2000;
  std::uint32_t seed = 1;
  int checkpoint_every = 0;  // steps per checkpoint; 0 disables
  std::string checkpoint_dir;
};

// One LR-size draw. The effective scales are the exact ratios patch/lr_dim
// after rounding, which is what the scale-normalized loss divides by.
struct ScaleDraw {
  int lr_h = 0;
  int lr_w = 0;
  double s_v = 1.0;
  double s_h = 1.0;
};

ScaleDraw sample_scale(const TrainConfig& cfg, std::mt19937& rng);

// Cycle count for one batch item. N = 1 never touches the generator, so a
// max_cycles = 1 run consumes exactly the same random stream as the plain
// 1-cycle objective.
int draw_cycles(const LossSpec& spec, std::mt19937& rng);

// === Scalar loss evaluations ===

double rec_loss(const Image& x, const Image& xhat, RecKind kind, double s_v,
                double s_h);
double ref_loss(const Image& x, const Image& x_tilde, RefKind kind);

// === Tape loss graphs ===

template <class T>
int rec_loss_node(Tape<T>& t, int x, int xhat, RecKind kind, double s_v,
                  double s_h) {
  int l1 = t.mean_abs_diff(xhat, x);
  if (kind == RecKind::kL1) return l1;
  double s = s_v == s_h ? s_v : std::sqrt(s_v * s_h);
  return t.scalar_mul(l1, 1.0 / s);
}

// x enters as plain data: the reference target is built from it outside the
// tape and is a constant as far as gradients are concerned.
template <class T>
int ref_loss_node(Tape<T>& t, const Image& x, int x_tilde, RefKind kind) {
  if (kind == RefKind::kNone) {
    throw ContractError("ref_loss_node called with kind none");
  }
  if (kind == RefKind::kL2Mean) {
    int mx = t.channel_mean(t.input(x.template cast<T>()));
    return t.mean_sq_diff(t.channel_mean(x_tilde), mx);
  }
  const TensorT<T>& lr = t.value(x_tilde);
  Image bar = resample(x, lr.dim(1), lr.dim(2), {Kernel::kBicubic, true});
  int r = t.input(bar.template cast<T>());
  if (kind == RefKind::kL2Pixel) return t.mean_sq_diff(x_tilde, r);
  auto m = ycbcr_matrix();
  auto off = ycbcr_offset();
  int ca = t.slice_channels(t.color_transform(x_tilde, m, off), 1, 3);
  int cb = t.slice_channels(t.color_transform(r, m, off), 1, 3);
  return t.mean_sq_diff(ca, cb);
}

struct CycleLossNodes {
  int loss = -1;
  int rec = -1;
  int ref = -1;  // -1 when the reference term is off
  int lr = -1;   // LR output of the last cycle
  int hr = -1;   // HR output of the last cycle
};

// n rescaling cycles at the drawn LR size, reconstruction against the
// original input, reference supervision on the last cycle's LR image.
// Gradients flow through every cycle.
template <class T>
CycleLossNodes multi_cycle_loss_node(ModelGraph<T>& g, const Image& x,
                                     const ScaleDraw& draw,
                                     const LossSpec& spec, int n,
                                     bool use_swf) {
  if (n < 1) throw ContractError("cycle count must be >= 1");
  if (spec.lambda1 <= 0.0) throw ContractError("lambda1 must be positive");
  Tape<T>& t = *g.tape;
  CycleLossNodes out;
  int x0 = t.input(x.template cast<T>());
  int cur = x0;
  for (int k = 0; k < n; ++k) {
    auto [lr, hr] = cycle_nodes(g, cur, draw.lr_h, draw.lr_w, use_swf);
    out.lr = lr;
    out.hr = hr;
    cur = hr;
  }
  out.rec = rec_loss_node(t, x0, out.hr, spec.rec_kind, draw.s_v, draw.s_h);
  out.loss = t.scalar_mul(out.rec, spec.lambda1);
  if (spec.ref_kind != RefKind::kNone && spec.lambda2 != 0.0) {
    out.ref = ref_loss_node(t, x, out.lr, spec.ref_kind);
    out.loss = t.add(out.loss, t.scalar_mul(out.ref, spec.lambda2));
  }
  return out;
}

// === Optimizer ===

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam_state(const RescaleModel& model);
void adam_step(RescaleModel& model, const std::vector<Tensor>& grads,
               AdamState& state, double lr);

// === Staged training ===

struct CurvePoint {
  int step = 0;
  double loss = 0.0;
  double psnr_train = 0.0;
};

// Overwrites the loss knobs a stage pins down; leaves the rest alone.
void apply_stage(Stage stage, TrainConfig& cfg, LossSpec& spec);
bool stage_uses_swf(Stage stage);
Stage parse_stage(const std::string& name);
std::string stage_name(Stage stage);

std::vector<CurvePoint> train(RescaleModel& model, const TrainConfig& cfg,
                              const LossSpec& spec,
                              const std::vector<Image>& corpus, Stage stage);

void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& curve);

// === Config files ===

// Plain `key = value` lines, '#' comments. Unknown keys are format errors.
struct TrainSettings {
  TrainConfig config;
  LossSpec loss;
  Stage stage = Stage::kPretrain;
  bool lambda2_explicit = false;
  std::string init_model;
  std::string out_model;
  std::string corpus_dir;
  std::string curve_csv;
};

TrainSettings parse_train_settings(std::istream& in);
TrainSettings load_train_settings(const std::string& path);

}  // namespace bair
