#include "bair/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "bair/autodiff.hpp"
#include "bair/common.hpp"
#include "bair/lattice.hpp"
#include "gradient_suite.hpp"

using namespace bair;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.enc_width = 8;
  cfg.enc_blocks = 2;
  cfg.feat_dim = 8;
  cfg.svf_hidden = 12;
  cfg.swf_hidden = 6;
  return cfg;
}

Image random_image(std::mt19937& rng, int h, int w) {
  Image img({3, h, w});
  for (float& v : img.data) v = float(uniform_unit(rng));
  return img;
}

}  // namespace

TEST(Encode, PreservesSpatialSize) {
  RescaleModel m = init_model(tiny_cfg(), 1);
  Tape<float> t;
  auto g = attach(t, m);
  std::mt19937 rng(2);
  int f = encode(g, t.input(random_image(rng, 8, 8)));
  EXPECT_EQ(t.value(f).shape, (std::vector<int>{8, 8, 8}));
}

TEST(Encode, ZeroTailLayerGivesZeroFeatures) {
  RescaleModel m = init_model(tiny_cfg(), 1);
  std::fill(m.tensor("enc.tail.w").data.begin(),
            m.tensor("enc.tail.w").data.end(), 0.0f);
  std::fill(m.tensor("enc.tail.b").data.begin(),
            m.tensor("enc.tail.b").data.end(), 0.0f);
  Tape<float> t;
  auto g = attach(t, m);
  int f = encode(g, t.input(Image({3, 5, 5})));
  for (float v : t.value(f).data) EXPECT_EQ(v, 0.0f);
}

TEST(Encode, DeterministicAcrossRuns) {
  auto run = [] {
    RescaleModel m = init_model(tiny_cfg(), 77);
    std::mt19937 rng(5);
    Tape<float> t;
    auto g = attach(t, m);
    return t.value(encode(g, t.input(random_image(rng, 6, 7)))).data;
  };
  EXPECT_EQ(run(), run());
}

TEST(Encode, RejectsNonFiniteInput) {
  RescaleModel m = init_model(tiny_cfg(), 1);
  Tape<float> t;
  auto g = attach(t, m);
  Image bad({3, 4, 4});
  bad.data[7] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(encode(g, t.input(bad)), ContractError);
}

TEST(Split, EqualOffsetsGiveBitEqualValues) {
  // With a constant feature map the MLP input depends on phi alone, so
  // records sharing phi must produce identical colors.
  RescaleModel m = init_model(tiny_cfg(), 3);
  SubpixelLattice lat = build_lattice(3, 3, 6, 6);
  Tape<float> t;
  auto g = attach(t, m);
  int feats = t.input(TensorT<float>::full({8, 3, 3}, 0.25f));
  int vals = split(g, feats, lat, Direction::kDown);
  const auto& v = t.value(vals);

  std::map<std::string, std::vector<float>> by_phi;
  for (std::size_t k = 0; k < lat.records.size(); ++k) {
    std::string key;
    for (const Rat& r : lat.records[k].phi) key += r.str() + ";";
    std::vector<float> color(v.ptr() + k * 3, v.ptr() + k * 3 + 3);
    auto [it, fresh] = by_phi.emplace(key, color);
    if (!fresh) EXPECT_EQ(it->second, color);
  }
  // x2 upscale has exactly four distinct phi quadrants.
  EXPECT_EQ(by_phi.size(), 4u);
}

TEST(Split, RejectsMismatchedFeatureSize) {
  RescaleModel m = init_model(tiny_cfg(), 3);
  SubpixelLattice lat = build_lattice(4, 4, 2, 2);
  Tape<float> t;
  auto g = attach(t, m);
  int feats = t.input(TensorT<float>({8, 3, 3}));
  EXPECT_THROW(split(g, feats, lat, Direction::kDown), ContractError);
}

TEST(Split, DirectionsUseIndependentWeights) {
  RescaleModel m = init_model(tiny_cfg(), 3);
  SubpixelLattice lat = build_lattice(4, 4, 4, 4);
  Tape<float> t;
  auto g = attach(t, m);
  std::mt19937 rng(4);
  TensorT<float> f({8, 4, 4});
  for (float& v : f.data) v = float(uniform_real(rng, -1.0, 1.0));
  int feats = t.input(f);
  auto down = t.value(split(g, feats, lat, Direction::kDown)).data;
  auto up = t.value(split(g, feats, lat, Direction::kUp)).data;
  EXPECT_NE(down, up);
}

TEST(Merge, ConstantValuesPropagateExactly) {
  // Normalization makes the weights drop out when all subpixels agree.
  std::mt19937 rng(6);
  SubpixelLattice lat = build_lattice(5, 4, 3, 7);
  int n = int(lat.records.size());
  Tape<float> t;
  int vals = t.input(TensorT<float>::full({n, 3}, 0.625f));
  TensorT<float> w({n});
  for (float& v : w.data) v = float(uniform_real(rng, 0.1, 2.0));
  int y = merge(t, vals, t.input(w), lat);
  for (float v : t.value(y).data) EXPECT_NEAR(v, 0.625f, 1e-6f);
}

TEST(Merge, OneDimensionalThreeToTwo) {
  // Segments carry values [1,1,0,0]; areas {1/3,1/6,1/6,1/3} merge them
  // into [1, 0].
  SubpixelLattice lat = build_lattice(3, 1, 2, 1);
  Tape<float> t;
  int vals = t.input(TensorT<float>({4, 1}, {1.0f, 1.0f, 0.0f, 0.0f}));
  int y = merge(t, vals, area_weight_node(t, lat), lat);
  ASSERT_EQ(t.value(y).shape, (std::vector<int>{1, 2, 1}));
  EXPECT_FLOAT_EQ(t.value(y).data[0], 1.0f);
  EXPECT_FLOAT_EQ(t.value(y).data[1], 0.0f);
}

TEST(Merge, IdentityLatticeReturnsValuesVerbatim) {
  // Single-element groups divide a weight by itself; any positive weight
  // reproduces the value bit for bit.
  std::mt19937 rng(7);
  SubpixelLattice lat = build_lattice(4, 5, 4, 5);
  int n = int(lat.records.size());
  TensorT<float> vals({n, 3}), w({n});
  for (float& v : vals.data) v = float(uniform_real(rng, -1.0, 1.0));
  for (float& v : w.data) v = float(uniform_real(rng, 0.01, 3.0));
  Tape<float> t;
  int y = merge(t, t.input(vals), t.input(w), lat);
  for (std::size_t k = 0; k < lat.records.size(); ++k) {
    const auto& rec = lat.records[k];
    for (int c = 0; c < 3; ++c) {
      EXPECT_EQ(t.value(y).at(c, rec.out_pixel.row, rec.out_pixel.col),
                vals.at(int(k), c));
    }
  }
}

TEST(Downscale, IdentitySizeIsPerPixelMlp) {
  RescaleModel m = init_model(tiny_cfg(), 9);
  std::mt19937 rng(9);
  Image img = random_image(rng, 5, 5);
  Image out = downscale(m, img, 5, 5);
  EXPECT_EQ(out.shape, img.shape);
  for (float v : out.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Downscale, SmokeWithSwf) {
  RescaleModel m = init_model(tiny_cfg(), 10);
  std::mt19937 rng(10);
  Image out = downscale(m, random_image(rng, 6, 6), 4, 4);
  EXPECT_EQ(out.shape, (std::vector<int>{3, 4, 4}));
  for (float v : out.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Upscale, ShapeAndGroupSizes) {
  RescaleModel m = init_model(tiny_cfg(), 11);
  std::mt19937 rng(11);
  Image out = upscale(m, random_image(rng, 4, 4), 9, 9);
  EXPECT_EQ(out.shape, (std::vector<int>{3, 9, 9}));
  SubpixelLattice lat = build_lattice(4, 4, 9, 9);
  for (const auto& group : lat.r_map) {
    std::size_t sz = group.size();
    EXPECT_TRUE(sz == 1 || sz == 2 || sz == 4);
  }
}

TEST(Upscale, AsymmetricTargetRuns) {
  RescaleModel m = init_model(tiny_cfg(), 12);
  std::mt19937 rng(12);
  Image out = upscale(m, random_image(rng, 4, 4), 7, 5);
  EXPECT_EQ(out.shape, (std::vector<int>{3, 7, 5}));
  for (float v : out.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Cycle, RandomSizeFuzz) {
  RescaleModel m = init_model(tiny_cfg(), 13);
  std::mt19937 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    int h = uniform_int(rng, 2, 10);
    int w = uniform_int(rng, 2, 10);
    int lh = uniform_int(rng, 1, h);
    int lw = uniform_int(rng, 1, w);
    auto [lr, hr] = cycle(m, random_image(rng, h, w), lh, lw);
    EXPECT_EQ(lr.shape, (std::vector<int>{3, lh, lw}));
    EXPECT_EQ(hr.shape, (std::vector<int>{3, h, w}));
    for (float v : lr.data) ASSERT_TRUE(std::isfinite(v));
    for (float v : hr.data) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Swf, WeightsAreStrictlyPositive) {
  RescaleModel m = init_model(tiny_cfg(), 14);
  std::mt19937 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    SubpixelLattice lat = build_lattice(uniform_int(rng, 1, 9),
                                        uniform_int(rng, 1, 9),
                                        uniform_int(rng, 1, 9),
                                        uniform_int(rng, 1, 9));
    Tape<float> t;
    auto g = attach(t, m);
    int w = swf_weights(g, lat);
    ASSERT_EQ(t.value(w).numel(), std::int64_t(lat.records.size()));
    for (float v : t.value(w).data) ASSERT_GE(v, 1e-6f);
  }
}

TEST(Model, IdentityScaleLocality) {
  // After the encoder, an identity-scale pipeline is purely per-pixel:
  // nudging feature z_p must change output pixel p and nothing else.
  RescaleModel m = init_model(tiny_cfg(), 15);
  SubpixelLattice lat = build_lattice(4, 4, 4, 4);
  std::mt19937 rng(15);
  TensorT<float> feats({8, 4, 4});
  for (float& v : feats.data) v = float(uniform_real(rng, -1.0, 1.0));

  auto forward = [&](const TensorT<float>& f) {
    Tape<float> t;
    auto g = attach(t, m);
    int vals = split(g, t.input(f), lat, Direction::kDown);
    int y = merge(t, vals, swf_weights(g, lat), lat);
    return t.value(y);
  };

  Image base = forward(feats);
  TensorT<float> poked = feats;
  poked.at(3, 1, 2) += 0.5f;
  Image changed = forward(poked);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        if (y == 1 && x == 2) continue;
        EXPECT_EQ(base.at(c, y, x), changed.at(c, y, x));
      }
    }
  }
  bool touched = false;
  for (int c = 0; c < 3; ++c) {
    touched = touched || base.at(c, 1, 2) != changed.at(c, 1, 2);
  }
  EXPECT_TRUE(touched);
}

// ============================================================================
// End-to-end gradients
// ============================================================================

TEST(ModelGradients, EveryParameterGroupReceivesSignal) {
  RescaleModel m = init_model(tiny_cfg(), 16);
  std::mt19937 rng(16);
  Tape<double> t;
  auto g = attach(t, m);
  int x = t.input(random_image(rng, 6, 6).cast<double>());
  auto [lr, hr] = cycle_nodes(g, x, 4, 4, true);
  (void)lr;
  t.backward(t.mean_abs_diff(hr, x));

  std::map<std::string, double> group_norm;
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const std::string& name = m.params[i].first;
    std::string group = name.substr(0, name.find('.'));
    for (double v : t.grad(g.param_ids[i]).data) {
      group_norm[group] += std::abs(v);
    }
  }
  ASSERT_EQ(group_norm.size(), 4u);
  for (const auto& [group, norm] : group_norm) {
    EXPECT_GT(norm, 0.0) << group;
  }
}

// The L1 cycle loss has a kink wherever a pixel residual crosses zero, so a
// fraction of probes lands too close to one for a central difference to mean
// anything; those are skipped, and at least half must survive.
TEST(ModelGradients, CycleLossPassesFiniteDifferences) {
  auto res = bair_test::run_cycle_fd(321, 5, 8);
  EXPECT_LT(res.max_rel_err, 1e-4);
  EXPECT_GE(res.coords_checked, res.coords_skipped);
  EXPECT_GE(res.coords_checked, 20);
}

// ============================================================================
// Serialization
// ============================================================================

TEST(Serialization, RoundTripIsBitExact) {
  RescaleModel m = init_model(tiny_cfg(), 17);
  std::vector<std::uint8_t> bytes = serialize(m);
  RescaleModel back = deserialize(bytes);
  ASSERT_EQ(back.params.size(), m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    EXPECT_EQ(back.params[i].first, m.params[i].first);
    EXPECT_EQ(back.params[i].second.shape, m.params[i].second.shape);
    EXPECT_EQ(back.params[i].second.data, m.params[i].second.data);
  }
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_EQ(back.cfg.enc_width, m.cfg.enc_width);
  EXPECT_EQ(back.cfg.enc_blocks, m.cfg.enc_blocks);
  EXPECT_EQ(back.cfg.feat_dim, m.cfg.feat_dim);
  EXPECT_EQ(back.cfg.svf_hidden, m.cfg.svf_hidden);
  EXPECT_EQ(back.cfg.swf_hidden, m.cfg.swf_hidden);
}

TEST(Serialization, FileRoundTrip) {
  RescaleModel m = init_model(tiny_cfg(), 18);
  std::string path = testing::TempDir() + "model_roundtrip.bair";
  save_model(m, path);
  RescaleModel back = load_model(path);
  EXPECT_EQ(serialize(back), serialize(m));
  std::remove(path.c_str());
}

TEST(Serialization, RejectsCorruption) {
  RescaleModel m = init_model(tiny_cfg(), 19);
  std::vector<std::uint8_t> bytes = serialize(m);

  auto corrupt = bytes;
  corrupt[1] = 'X';
  EXPECT_THROW(deserialize(corrupt), FormatError);

  corrupt = bytes;
  corrupt[4] = 99;  // version
  EXPECT_THROW(deserialize(corrupt), FormatError);

  corrupt = bytes;
  corrupt[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(deserialize(corrupt), FormatError);

  corrupt = bytes;
  corrupt.resize(bytes.size() / 2);
  EXPECT_THROW(deserialize(corrupt), FormatError);

  EXPECT_THROW(deserialize({}), FormatError);
}

TEST(Serialization, LoadedModelRunsOnBothTapes) {
  RescaleModel m = init_model(tiny_cfg(), 20);
  RescaleModel back = deserialize(serialize(m));
  std::mt19937 rng(20);
  Image img = random_image(rng, 5, 5);

  Image f32 = downscale(back, img, 3, 3);

  Tape<double> t;
  auto g = attach(t, back);
  SubpixelLattice lat = build_lattice(5, 5, 3, 3);
  int y = downscale_node(g, t.input(img.cast<double>()), lat, true);
  const auto& f64 = t.value(y);

  ASSERT_EQ(f64.shape, f32.shape);
  for (std::size_t i = 0; i < f32.data.size(); ++i) {
    EXPECT_NEAR(double(f32.data[i]), f64.data[i], 1e-4);
  }
}
