#include "bair/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace bair {
namespace {

Image crop(const Image& img, int oy, int ox, int size) {
  Image out({img.dim(0), size, size});
  for (int c = 0; c < img.dim(0); ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        out.at(c, y, x) = img.at(c, oy + y, ox + x);
      }
    }
  }
  return out;
}

double mse(const Image& a, const Image& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = double(a.data[i]) - double(b.data[i]);
    acc += d * d;
  }
  return acc / double(a.data.size());
}

int round_lr(int patch, double s) {
  int lr = int(std::lround(double(patch) / s));
  return std::clamp(lr, 1, patch);
}

void validate(const TrainConfig& cfg, const LossSpec& spec,
              const std::vector<Image>& corpus) {
  if (cfg.batch < 1) throw ContractError("batch size must be >= 1");
  if (cfg.patch < 8) throw ContractError("patch size must be >= 8");
  if (cfg.scale_low < 1.0) throw ContractError("scale low must be >= 1");
  if (cfg.scale_high < cfg.scale_low) {
    throw ContractError("scale high must be >= scale low");
  }
  if (spec.lambda1 <= 0.0) throw ContractError("lambda1 must be positive");
  if (spec.max_cycles < 1) throw ContractError("max cycle count must be >= 1");
  if (corpus.empty()) throw ContractError("training corpus is empty");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Image& img = corpus[i];
    if (img.rank() != 3 || img.dim(0) != 3) {
      throw ContractError("corpus image " + std::to_string(i) +
                          " is not 3-channel: " + img.shape_str());
    }
    if (img.dim(1) < cfg.patch || img.dim(2) < cfg.patch) {
      throw ContractError("corpus image " + std::to_string(i) + " (" +
                          img.shape_str() + ") is smaller than patch " +
                          std::to_string(cfg.patch));
    }
  }
}

}  // namespace

double default_lambda2(RefKind kind) {
  return kind == RefKind::kL2Chroma ? 2.0 : 1.0;
}

ScaleDraw sample_scale(const TrainConfig& cfg, std::mt19937& rng) {
  if (cfg.patch < 8) throw ContractError("patch size must be >= 8");
  ScaleDraw d;
  double sv = uniform_real(rng, cfg.scale_low, cfg.scale_high);
  double sh = cfg.asymmetric ? uniform_real(rng, cfg.scale_low, cfg.scale_high)
                             : sv;
  d.lr_h = round_lr(cfg.patch, sv);
  d.lr_w = round_lr(cfg.patch, sh);
  d.s_v = double(cfg.patch) / double(d.lr_h);
  d.s_h = double(cfg.patch) / double(d.lr_w);
  return d;
}

int draw_cycles(const LossSpec& spec, std::mt19937& rng) {
  if (spec.max_cycles < 1) throw ContractError("max cycle count must be >= 1");
  if (spec.max_cycles == 1) return 1;
  return uniform_int(rng, 1, spec.max_cycles);
}

double rec_loss(const Image& x, const Image& xhat, RecKind kind, double s_v,
                double s_h) {
  if (!x.same_shape(xhat)) {
    throw ContractError("rec_loss shapes differ: " + x.shape_str() + " vs " +
                        xhat.shape_str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    acc += std::abs(double(x.data[i]) - double(xhat.data[i]));
  }
  double l1 = acc / double(x.data.size());
  if (kind == RecKind::kL1) return l1;
  double s = s_v == s_h ? s_v : std::sqrt(s_v * s_h);
  return l1 / s;
}

double ref_loss(const Image& x, const Image& x_tilde, RefKind kind) {
  if (kind == RefKind::kNone) return 0.0;
  if (x_tilde.dim(1) > x.dim(1) || x_tilde.dim(2) > x.dim(2)) {
    throw ContractError("reference LR " + x_tilde.shape_str() +
                        " is larger than the source " + x.shape_str());
  }
  if (kind == RefKind::kL2Mean) {
    double acc = 0.0;
    std::size_t pa = std::size_t(x.dim(1)) * std::size_t(x.dim(2));
    std::size_t pb = std::size_t(x_tilde.dim(1)) * std::size_t(x_tilde.dim(2));
    for (int c = 0; c < 3; ++c) {
      double ma = 0.0, mb = 0.0;
      for (std::size_t p = 0; p < pa; ++p) ma += x.data[std::size_t(c) * pa + p];
      for (std::size_t p = 0; p < pb; ++p)
        mb += x_tilde.data[std::size_t(c) * pb + p];
      double d = mb / double(pb) - ma / double(pa);
      acc += d * d;
    }
    return acc / 3.0;
  }
  Image bar =
      resample(x, x_tilde.dim(1), x_tilde.dim(2), {Kernel::kBicubic, true});
  if (kind == RefKind::kL2Pixel) return mse(x_tilde, bar);
  Image ca = to_ycbcr(x_tilde);
  Image cb = to_ycbcr(bar);
  double acc = 0.0;
  std::size_t plane = std::size_t(ca.dim(1)) * std::size_t(ca.dim(2));
  for (std::size_t i = plane; i < 3 * plane; ++i) {
    double d = double(ca.data[i]) - double(cb.data[i]);
    acc += d * d;
  }
  return acc / double(2 * plane);
}

AdamState make_adam_state(const RescaleModel& model) {
  AdamState st;
  st.m.reserve(model.params.size());
  st.v.reserve(model.params.size());
  for (const auto& [name, tensor] : model.params) {
    (void)name;
    st.m.emplace_back(tensor.data.size(), 0.0);
    st.v.emplace_back(tensor.data.size(), 0.0);
  }
  return st;
}

void adam_step(RescaleModel& model, const std::vector<Tensor>& grads,
               AdamState& state, double lr) {
  if (grads.size() != model.params.size()) {
    throw ContractError("gradient list does not match parameter list");
  }
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, state.t);
  double bc2 = 1.0 - std::pow(state.beta2, state.t);
  for (std::size_t p = 0; p < grads.size(); ++p) {
    Tensor& w = model.params[p].second;
    const Tensor& g = grads[p];
    if (g.data.size() != w.data.size()) {
      throw ContractError("gradient shape mismatch for " +
                          model.params[p].first);
    }
    for (std::size_t i = 0; i < w.data.size(); ++i) {
      double gi = double(g.data[i]);
      double& m = state.m[p][i];
      double& v = state.v[p][i];
      m = state.beta1 * m + (1.0 - state.beta1) * gi;
      v = state.beta2 * v + (1.0 - state.beta2) * gi * gi;
      double update = lr * (m / bc1) / (std::sqrt(v / bc2) + state.eps);
      w.data[i] = float(double(w.data[i]) - update);
    }
  }
}

void apply_stage(Stage stage, TrainConfig& cfg, LossSpec& spec) {
  switch (stage) {
    case Stage::kPretrain:
      spec.rec_kind = RecKind::kL1;
      spec.ref_kind = RefKind::kL2Pixel;
      spec.max_cycles = 1;
      cfg.asymmetric = false;
      break;
    case Stage::kBase:
      spec.rec_kind = RecKind::kLs;
      spec.ref_kind = RefKind::kL2Mean;
      spec.max_cycles = 1;
      cfg.asymmetric = false;
      break;
    case Stage::kFinetuneN:
      // keeps the configured cycle count and loss kinds
      break;
    case Stage::kFinetuneAsym:
      cfg.asymmetric = true;
      break;
  }
}

bool stage_uses_swf(Stage stage) { return stage != Stage::kPretrain; }

Stage parse_stage(const std::string& name) {
  if (name == "pretrain") return Stage::kPretrain;
  if (name == "base") return Stage::kBase;
  if (name == "finetune-n") return Stage::kFinetuneN;
  if (name == "finetune-asym") return Stage::kFinetuneAsym;
  throw FormatError("unknown stage '" + name + "'");
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::kPretrain: return "pretrain";
    case Stage::kBase: return "base";
    case Stage::kFinetuneN: return "finetune-n";
    case Stage::kFinetuneAsym: return "finetune-asym";
  }
  return "?";
}

std::vector<CurvePoint> train(RescaleModel& model, const TrainConfig& cfg,
                              const LossSpec& spec,
                              const std::vector<Image>& corpus, Stage stage) {
  TrainConfig c = cfg;
  LossSpec ls = spec;
  apply_stage(stage, c, ls);
  validate(c, ls, corpus);
  bool use_swf = stage_uses_swf(stage);

  std::mt19937 rng(c.seed);
  AdamState adam = make_adam_state(model);
  std::vector<CurvePoint> curve;
  curve.reserve(std::size_t(c.steps));

  for (int step = 1; step <= c.steps; ++step) {
    double lr = c.lr;
    if (c.lr_halve_every > 0) {
      lr = c.lr * std::pow(0.5, (step - 1) / c.lr_halve_every);
    }

    Tape<float> tape;
    ModelGraph<float> g = attach(tape, model);
    int total = -1;
    double mse_acc = 0.0;
    for (int item = 0; item < c.batch; ++item) {
      int idx = uniform_int(rng, 0, int(corpus.size()) - 1);
      const Image& src = corpus[std::size_t(idx)];
      int oy = uniform_int(rng, 0, src.dim(1) - c.patch);
      int ox = uniform_int(rng, 0, src.dim(2) - c.patch);
      Image patch = crop(src, oy, ox, c.patch);
      ScaleDraw draw = sample_scale(c, rng);
      int n = draw_cycles(ls, rng);
      CycleLossNodes nodes =
          multi_cycle_loss_node(g, patch, draw, ls, n, use_swf);
      total = item == 0 ? nodes.loss : tape.add(total, nodes.loss);
      Image hr(tape.value(nodes.hr).shape, tape.value(nodes.hr).data);
      mse_acc += mse(hr, patch);
    }
    int loss_node = tape.scalar_mul(total, 1.0 / double(c.batch));
    tape.backward(loss_node);

    std::vector<Tensor> grads;
    grads.reserve(g.param_ids.size());
    for (int id : g.param_ids) grads.push_back(tape.grad(id));
    adam_step(model, grads, adam, lr);

    double batch_mse = mse_acc / double(c.batch);
    double psnr_train = batch_mse == 0.0
                            ? std::numeric_limits<double>::infinity()
                            : 10.0 * std::log10(1.0 / batch_mse);
    curve.push_back({step, double(tape.value(loss_node).data[0]), psnr_train});

    if (c.checkpoint_every > 0 && !c.checkpoint_dir.empty() &&
        step % c.checkpoint_every == 0) {
      save_model(model, c.checkpoint_dir + "/ckpt_step" +
                            std::to_string(step) + ".bair");
    }
  }
  return curve;
}

void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open loss curve file " + path);
  out << "step,loss,psnr_train\n";
  char buf[96];
  for (const CurvePoint& p : curve) {
    if (std::isinf(p.psnr_train)) {
      std::snprintf(buf, sizeof buf, "%d,%.8g,inf", p.step, p.loss);
    } else {
      std::snprintf(buf, sizeof buf, "%d,%.8g,%.8g", p.step, p.loss,
                    p.psnr_train);
    }
    out << buf << "\n";
  }
  if (!out.good()) throw IoError("failed writing loss curve to " + path);
}

TrainSettings parse_train_settings(std::istream& in) {
  TrainSettings s;
  std::string line;
  int lineno = 0;
  bool saw_lambda2 = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    auto trim = [](std::string v) {
      auto a = v.find_first_not_of(" \t\r");
      auto b = v.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : v.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) {
      throw FormatError("config line " + std::to_string(lineno) +
                        ": empty key or value");
    }
    auto as_int = [&](const std::string& v) {
      try {
        std::size_t pos = 0;
        int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
      } catch (const std::exception&) {
        throw FormatError("config line " + std::to_string(lineno) +
                          ": bad integer '" + v + "'");
      }
    };
    auto as_double = [&](const std::string& v) {
      try {
        std::size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
      } catch (const std::exception&) {
        throw FormatError("config line " + std::to_string(lineno) +
                          ": bad number '" + v + "'");
      }
    };
    auto as_bool = [&](const std::string& v) {
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw FormatError("config line " + std::to_string(lineno) +
                        ": bad boolean '" + v + "'");
    };

    if (key == "batch") s.config.batch = as_int(val);
    else if (key == "patch") s.config.patch = as_int(val);
    else if (key == "scale_low") s.config.scale_low = as_double(val);
    else if (key == "scale_high") s.config.scale_high = as_double(val);
    else if (key == "asymmetric") s.config.asymmetric = as_bool(val);
    else if (key == "lr") s.config.lr = as_double(val);
    else if (key == "lr_halve_every") s.config.lr_halve_every = as_int(val);
    else if (key == "steps") s.config.steps = as_int(val);
    else if (key == "seed") s.config.seed = std::uint32_t(as_int(val));
    else if (key == "checkpoint_every") s.config.checkpoint_every = as_int(val);
    else if (key == "checkpoint_dir") s.config.checkpoint_dir = val;
    else if (key == "stage") s.stage = parse_stage(val);
    else if (key == "cycles") s.loss.max_cycles = as_int(val);
    else if (key == "lambda1") s.loss.lambda1 = as_double(val);
    else if (key == "lambda2") { s.loss.lambda2 = as_double(val); saw_lambda2 = true; }
    else if (key == "rec_kind") {
      if (val == "l1") s.loss.rec_kind = RecKind::kL1;
      else if (val == "ls") s.loss.rec_kind = RecKind::kLs;
      else throw FormatError("config line " + std::to_string(lineno) +
                             ": unknown rec_kind '" + val + "'");
    } else if (key == "ref_kind") {
      if (val == "l2_pixel") s.loss.ref_kind = RefKind::kL2Pixel;
      else if (val == "l2_chroma") s.loss.ref_kind = RefKind::kL2Chroma;
      else if (val == "l2_mean") s.loss.ref_kind = RefKind::kL2Mean;
      else if (val == "none") s.loss.ref_kind = RefKind::kNone;
      else throw FormatError("config line " + std::to_string(lineno) +
                             ": unknown ref_kind '" + val + "'");
    } else if (key == "init_model") s.init_model = val;
    else if (key == "out_model") s.out_model = val;
    else if (key == "corpus") s.corpus_dir = val;
    else if (key == "curve") s.curve_csv = val;
    else {
      throw FormatError("config line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
    }
  }
  s.lambda2_explicit = saw_lambda2;
  if (!saw_lambda2) s.loss.lambda2 = default_lambda2(s.loss.ref_kind);
  return s;
}

TrainSettings load_train_settings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  return parse_train_settings(in);
}

}  // namespace bair
