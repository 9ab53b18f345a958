#pragma once

// The rescaling network: a shared convolutional feature encoder, two
// subpixel value MLPs (one per direction), and a subpixel weight MLP used
// when merging downscaled subpixels. Graph builders are templated on the
// scalar type so the whole pipeline can run on a double tape for gradient
// checking.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bair/autodiff.hpp"
#include "bair/common.hpp"
#include "bair/lattice.hpp"
#include "bair/tensor.hpp"

namespace bair {

struct ModelConfig {
  int enc_width = 32;   // channels inside the residual blocks
  int enc_blocks = 4;   // residual blocks between head and tail convs
  int feat_dim = 32;    // encoder output channels F
  int svf_hidden = 64;  // hidden width of the two value MLPs
  int swf_hidden = 16;  // hidden width of the weight MLP
};

// Parameters are kept as an ordered name -> tensor list; the order is part
// of the serialization format and fixes the optimizer state layout.
struct RescaleModel {
  ModelConfig cfg;
  std::vector<std::pair<std::string, Tensor>> params;

  int index_of(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
  Tensor& tensor(const std::string& name);
};

// Fresh model with Kaiming-uniform fan-in weights and zero biases,
// deterministic in the seed.
RescaleModel init_model(const ModelConfig& cfg, std::uint32_t seed);

// Byte serialization; see README for the layout. Round-trips bit-exactly.
std::vector<std::uint8_t> serialize(const RescaleModel& model);
RescaleModel deserialize(const std::vector<std::uint8_t>& bytes);
void save_model(const RescaleModel& model, const std::string& path);
RescaleModel load_model(const std::string& path);

enum class Direction { kDown, kUp };

// A model's parameters registered as leaves on one tape. Gradients for
// parameter i land on tape node param_ids[i] after backward().
template <class T>
struct ModelGraph {
  const RescaleModel* model = nullptr;
  Tape<T>* tape = nullptr;
  std::vector<int> param_ids;

  int id(const std::string& name) const {
    return param_ids[std::size_t(model->index_of(name))];
  }
};

template <class T>
ModelGraph<T> attach(Tape<T>& tape, const RescaleModel& model) {
  ModelGraph<T> g{&model, &tape, {}};
  g.param_ids.reserve(model.params.size());
  for (const auto& [name, tensor] : model.params) {
    (void)name;
    g.param_ids.push_back(tape.input(tensor.template cast<T>()));
  }
  return g;
}

namespace detail {

template <class T>
int mlp5(ModelGraph<T>& g, int x, const std::string& prefix) {
  Tape<T>& t = *g.tape;
  for (int layer = 0; layer < 5; ++layer) {
    std::string base = prefix + ".l" + std::to_string(layer);
    x = t.linear(x, g.id(base + ".w"), g.id(base + ".b"));
    if (layer < 4) x = t.relu(x);
  }
  return x;
}

template <class T>
TensorT<T> offsets_tensor(const SubpixelLattice& lat, bool use_phi) {
  TensorT<T> out({int(lat.records.size()), 4});
  for (std::size_t k = 0; k < lat.records.size(); ++k) {
    const auto& q = use_phi ? lat.records[k].phi : lat.records[k].psi;
    for (int c = 0; c < 4; ++c) {
      out.data[k * 4 + std::size_t(c)] = T(q[std::size_t(c)].to_double());
    }
  }
  return out;
}

}  // namespace detail

// {3, H, W} image -> {F, H, W} features; spatial size is preserved.
template <class T>
int encode(ModelGraph<T>& g, int image) {
  Tape<T>& t = *g.tape;
  const TensorT<T>& xv = t.value(image);
  if (xv.rank() != 3 || xv.dim(0) != 3) {
    throw ContractError("encode: expected {3,H,W} image, got " +
                        xv.shape_str());
  }
  for (T v : xv.data) {
    if (!std::isfinite(double(v))) {
      throw ContractError("encode: non-finite input pixel");
    }
  }
  int h = t.conv2d(image, g.id("enc.head.w"), g.id("enc.head.b"),
                   Pad::kReplicate);
  for (int blk = 0; blk < g.model->cfg.enc_blocks; ++blk) {
    std::string base = "enc.block" + std::to_string(blk);
    int r = t.conv2d(h, g.id(base + ".c1.w"), g.id(base + ".c1.b"),
                     Pad::kReplicate);
    r = t.relu(r);
    r = t.conv2d(r, g.id(base + ".c2.w"), g.id(base + ".c2.b"),
                 Pad::kReplicate);
    h = t.add(h, r);
  }
  return t.conv2d(h, g.id("enc.tail.w"), g.id("enc.tail.b"), Pad::kReplicate);
}

// Per-record subpixel colors: the direction's SVF applied to each record's
// parent-pixel feature concatenated with its phi offsets. -> {n_records, 3}
template <class T>
int split(ModelGraph<T>& g, int features, const SubpixelLattice& lat,
          Direction dir) {
  Tape<T>& t = *g.tape;
  const TensorT<T>& fv = t.value(features);
  if (fv.rank() != 3 || fv.dim(1) != lat.in_h() || fv.dim(2) != lat.in_w()) {
    throw ContractError("split: features " + fv.shape_str() +
                        " do not cover a " + std::to_string(lat.in_h()) + "x" +
                        std::to_string(lat.in_w()) + " lattice input");
  }
  int rows = t.chw_to_rows(features);
  std::vector<int> idx;
  idx.reserve(lat.records.size());
  for (const SubpixelRecord& rec : lat.records) {
    idx.push_back(rec.in_pixel.row * lat.in_w() + rec.in_pixel.col);
  }
  int z = t.gather_rows(rows, std::move(idx));
  int phi = t.input(detail::offsets_tensor<T>(lat, true));
  int x = t.concat(z, phi);
  return detail::mlp5(g, x, dir == Direction::kDown ? "svf_down" : "svf_up");
}

// Learned positive merge weights from psi. -> {n_records}
template <class T>
int swf_weights(ModelGraph<T>& g, const SubpixelLattice& lat) {
  Tape<T>& t = *g.tape;
  int psi = t.input(detail::offsets_tensor<T>(lat, false));
  int raw = detail::mlp5(g, psi, "swf");
  int pos = t.add_scalar(t.softplus(raw), 1e-6);
  return t.reshape(pos, {int(lat.records.size())});
}

// Geometric merge weights (subpixel areas) as a tape constant. -> {n_records}
template <class T>
int area_weight_node(Tape<T>& t, const SubpixelLattice& lat) {
  TensorT<T> w({int(lat.records.size())});
  for (std::size_t k = 0; k < lat.records.size(); ++k) {
    w.data[k] = T(lat.records[k].area.to_double());
  }
  return t.input(std::move(w));
}

// Normalized weighted merge of per-record colors onto the output grid.
// -> {3, out_h, out_w}
template <class T>
int merge(Tape<T>& t, int values, int weights, const SubpixelLattice& lat) {
  std::vector<int> groups;
  groups.reserve(lat.records.size());
  for (const SubpixelRecord& rec : lat.records) {
    groups.push_back(rec.out_pixel.row * lat.out_w() + rec.out_pixel.col);
  }
  int pixels = t.weighted_scatter_reduce(values, weights, std::move(groups),
                                         lat.out_h() * lat.out_w());
  return t.rows_to_chw(pixels, lat.out_h(), lat.out_w());
}

// Full downscale pipeline on the tape. use_swf=false substitutes area
// weights (the pretraining configuration).
template <class T>
int downscale_node(ModelGraph<T>& g, int image, const SubpixelLattice& lat,
                   bool use_swf) {
  int feats = encode(g, image);
  int values = split(g, feats, lat, Direction::kDown);
  int weights = use_swf ? swf_weights(g, lat)
                        : area_weight_node(*g.tape, lat);
  return merge(*g.tape, values, weights, lat);
}

// Full upscale pipeline; merging always uses area weights.
template <class T>
int upscale_node(ModelGraph<T>& g, int image, const SubpixelLattice& lat) {
  int feats = encode(g, image);
  int values = split(g, feats, lat, Direction::kUp);
  return merge(*g.tape, values, area_weight_node(*g.tape, lat), lat);
}

// One rescaling cycle at fixed LR size: returns (x_tilde, x_hat) nodes.
// x_hat has the input's spatial size.
template <class T>
std::pair<int, int> cycle_nodes(ModelGraph<T>& g, int image, int lr_h,
                                int lr_w, bool use_swf = true) {
  const TensorT<T>& xv = g.tape->value(image);
  int h = xv.dim(1), w = xv.dim(2);
  SubpixelLattice down = build_lattice(h, w, lr_h, lr_w);
  SubpixelLattice up = build_lattice(lr_h, lr_w, h, w);
  int lr = downscale_node(g, image, down, use_swf);
  int hr = upscale_node(g, lr, up);
  return {lr, hr};
}

// Convenience single-image entry points (float, forward only).
Image downscale(const RescaleModel& model, const Image& image, int out_h,
                int out_w, bool use_swf = true);
Image upscale(const RescaleModel& model, const Image& image, int out_h,
              int out_w);
std::pair<Image, Image> cycle(const RescaleModel& model, const Image& image,
                              int lr_h, int lr_w, bool use_swf = true);

}  // namespace bair
