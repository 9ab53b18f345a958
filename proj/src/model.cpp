#include "bair/model.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace bair {

namespace {

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  double bound;  // weights ~ U(-bound, bound); 0 means stay zero
};

// Kaiming-uniform fan-in bounds with the gain matched to what follows each
// layer: sqrt(6/fan) where a relu consumes the output, sqrt(3/fan) where the
// output is used linearly. Residual branches close with a zeroed conv so
// every block starts as the identity and the encoder's forward variance is
// independent of its depth. Biases draw from U(-1/sqrt(fan), 1/sqrt(fan));
// the final SVF biases stay zero so fresh subpixel colors start centered.
std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  std::vector<ParamSpec> specs;
  auto relu_b = [](int fan) { return std::sqrt(6.0 / fan); };
  auto lin_b = [](int fan) { return std::sqrt(3.0 / fan); };
  auto bias_b = [](int fan) { return 1.0 / std::sqrt(double(fan)); };
  auto conv = [&](const std::string& name, int oc, int ic, double wb,
                  double bb) {
    specs.push_back({name + ".w", {oc, ic, 3, 3}, wb});
    specs.push_back({name + ".b", {oc}, bb});
  };
  auto mlp = [&](const std::string& name, int in, int hidden, int out,
                 bool zero_final_bias) {
    for (int layer = 0; layer < 5; ++layer) {
      int li = layer == 0 ? in : hidden;
      int lo = layer == 4 ? out : hidden;
      std::string base = name + ".l" + std::to_string(layer);
      specs.push_back({base + ".w", {lo, li}, layer < 4 ? relu_b(li) : lin_b(li)});
      specs.push_back(
          {base + ".b", {lo}, layer == 4 && zero_final_bias ? 0.0 : bias_b(li)});
    }
  };

  conv("enc.head", cfg.enc_width, 3, lin_b(27), bias_b(27));
  for (int blk = 0; blk < cfg.enc_blocks; ++blk) {
    std::string base = "enc.block" + std::to_string(blk);
    int fan = cfg.enc_width * 9;
    conv(base + ".c1", cfg.enc_width, cfg.enc_width, relu_b(fan), bias_b(fan));
    conv(base + ".c2", cfg.enc_width, cfg.enc_width, 0.0, 0.0);
  }
  conv("enc.tail", cfg.feat_dim, cfg.enc_width, lin_b(cfg.enc_width * 9),
       bias_b(cfg.enc_width * 9));
  mlp("svf_down", cfg.feat_dim + 4, cfg.svf_hidden, 3, true);
  mlp("svf_up", cfg.feat_dim + 4, cfg.svf_hidden, 3, true);
  mlp("swf", 4, cfg.swf_hidden, 1, false);
  return specs;
}

}  // namespace

int RescaleModel::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].first == name) return int(i);
  }
  throw ContractError("model: unknown parameter " + name);
}

const Tensor& RescaleModel::tensor(const std::string& name) const {
  return params[std::size_t(index_of(name))].second;
}

Tensor& RescaleModel::tensor(const std::string& name) {
  return params[std::size_t(index_of(name))].second;
}

RescaleModel init_model(const ModelConfig& cfg, std::uint32_t seed) {
  RescaleModel model;
  model.cfg = cfg;
  std::mt19937 rng(seed);
  for (const ParamSpec& spec : param_specs(cfg)) {
    Tensor t(spec.shape);
    if (spec.bound > 0.0) {
      for (float& v : t.data) {
        v = float(uniform_real(rng, -spec.bound, spec.bound));
      }
    }
    model.params.emplace_back(spec.name, std::move(t));
  }
  return model;
}

// ----------------------------------------------------------------------------
// Serialization
// ----------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'B', 'A', 'I', 'R'};
constexpr std::uint16_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v & 0xff));
  out.push_back(std::uint8_t((v >> 8) & 0xff));
  out.push_back(std::uint8_t((v >> 16) & 0xff));
  out.push_back(std::uint8_t((v >> 24) & 0xff));
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) {
      throw FormatError("model file truncated at offset " +
                        std::to_string(pos));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = std::uint32_t(bytes[pos]) |
                      std::uint32_t(bytes[pos + 1]) << 8 |
                      std::uint32_t(bytes[pos + 2]) << 16 |
                      std::uint32_t(bytes[pos + 3]) << 24;
    pos += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v =
        std::uint16_t(bytes[pos] | std::uint32_t(bytes[pos + 1]) << 8);
    pos += 2;
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> serialize(const RescaleModel& model) {
  std::vector<std::uint8_t> payload;
  put_u32(payload, std::uint32_t(model.params.size()));
  for (const auto& [name, tensor] : model.params) {
    put_u32(payload, std::uint32_t(name.size()));
    payload.insert(payload.end(), name.begin(), name.end());
    put_u32(payload, std::uint32_t(tensor.rank()));
    for (int d : tensor.shape) put_u32(payload, std::uint32_t(d));
    std::size_t at = payload.size();
    payload.resize(at + tensor.data.size() * 4);
    std::memcpy(payload.data() + at, tensor.data.data(),
                tensor.data.size() * 4);
  }

  std::vector<std::uint8_t> out;
  out.reserve(payload.size() + 10);
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(std::uint8_t(kVersion & 0xff));
  out.push_back(std::uint8_t(kVersion >> 8));
  out.insert(out.end(), payload.begin(), payload.end());
  put_u32(out, std::uint32_t(crc32(0L, payload.data(),
                                   uInt(payload.size()))));
  return out;
}

RescaleModel deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(6);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("model file: bad magic at offset 0");
  }
  r.pos = 4;
  std::uint16_t version = r.u16();
  if (version != kVersion) {
    throw FormatError("model file: unsupported version " +
                      std::to_string(version) + " at offset 4");
  }
  if (bytes.size() < 10) {
    throw FormatError("model file truncated at offset 6");
  }
  std::size_t payload_len = bytes.size() - 10;
  std::uint32_t stored_crc =
      std::uint32_t(bytes[bytes.size() - 4]) |
      std::uint32_t(bytes[bytes.size() - 3]) << 8 |
      std::uint32_t(bytes[bytes.size() - 2]) << 16 |
      std::uint32_t(bytes[bytes.size() - 1]) << 24;
  std::uint32_t actual_crc =
      std::uint32_t(crc32(0L, bytes.data() + 6, uInt(payload_len)));
  if (stored_crc != actual_crc) {
    throw FormatError("model file: CRC mismatch at offset " +
                      std::to_string(bytes.size() - 4));
  }

  RescaleModel model;
  std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = r.u32();
    r.need(name_len);
    std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos),
                     name_len);
    r.pos += name_len;
    std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 4) {
      throw FormatError("model file: tensor " + name + " has bad rank " +
                        std::to_string(rank));
    }
    std::vector<int> shape;
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::uint32_t dim = r.u32();
      if (dim < 1 || dim > (1u << 24)) {
        throw FormatError("model file: tensor " + name + " has bad dim " +
                          std::to_string(dim));
      }
      shape.push_back(int(dim));
      numel *= dim;
    }
    r.need(std::size_t(numel) * 4);
    Tensor t(shape);
    std::memcpy(t.data.data(), bytes.data() + r.pos, std::size_t(numel) * 4);
    r.pos += std::size_t(numel) * 4;
    model.params.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos != bytes.size() - 4) {
    throw FormatError("model file: trailing bytes at offset " +
                      std::to_string(r.pos));
  }

  // Rebuild the configuration from tensor shapes, then confirm the full
  // parameter table matches what that configuration implies.
  ModelConfig cfg;
  cfg.enc_width = model.tensor("enc.head.w").dim(0);
  cfg.feat_dim = model.tensor("enc.tail.w").dim(0);
  cfg.svf_hidden = model.tensor("svf_down.l0.w").dim(0);
  cfg.swf_hidden = model.tensor("swf.l0.w").dim(0);
  cfg.enc_blocks = 0;
  for (const auto& [name, tensor] : model.params) {
    (void)tensor;
    if (name.rfind("enc.block", 0) == 0 && name.find(".c1.w") != std::string::npos) {
      ++cfg.enc_blocks;
    }
  }
  model.cfg = cfg;

  auto specs = param_specs(cfg);
  if (specs.size() != model.params.size()) {
    throw FormatError("model file: expected " +
                      std::to_string(specs.size()) + " tensors, found " +
                      std::to_string(model.params.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (model.params[i].first != specs[i].name ||
        model.params[i].second.shape != specs[i].shape) {
      throw FormatError("model file: tensor " + model.params[i].first +
                        " does not match the expected table");
    }
  }
  return model;
}

void save_model(const RescaleModel& model, const std::string& path) {
  std::vector<std::uint8_t> bytes = serialize(model);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          std::streamsize(bytes.size()));
  if (!f) throw IoError("failed writing " + path);
}

RescaleModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open " + path);
  std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size), 0);
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw IoError("failed reading " + path);
  return deserialize(bytes);
}

// ----------------------------------------------------------------------------
// Forward-only wrappers
// ----------------------------------------------------------------------------

Image downscale(const RescaleModel& model, const Image& image, int out_h,
                int out_w, bool use_swf) {
  Tape<float> tape;
  ModelGraph<float> g = attach(tape, model);
  SubpixelLattice lat = build_lattice(image.dim(1), image.dim(2), out_h, out_w);
  int y = downscale_node(g, tape.input(image), lat, use_swf);
  return tape.value(y);
}

Image upscale(const RescaleModel& model, const Image& image, int out_h,
              int out_w) {
  Tape<float> tape;
  ModelGraph<float> g = attach(tape, model);
  SubpixelLattice lat = build_lattice(image.dim(1), image.dim(2), out_h, out_w);
  int y = upscale_node(g, tape.input(image), lat);
  return tape.value(y);
}

std::pair<Image, Image> cycle(const RescaleModel& model, const Image& image,
                              int lr_h, int lr_w, bool use_swf) {
  Tape<float> tape;
  ModelGraph<float> g = attach(tape, model);
  auto [lr, hr] = cycle_nodes(g, tape.input(image), lr_h, lr_w, use_swf);
  return {tape.value(lr), tape.value(hr)};
}

}  // namespace bair
