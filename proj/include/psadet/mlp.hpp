#pragma once

// Forward-only shared MLP with externally supplied weights.
//
// Fixture formats (both describe the same MlpSpec):
//
// JSON:
//   {"layers": [{"in": 4, "out": 16, "activation": "relu",
//                "weight": [... out*in values, row-major ...],
//                "bias":   [... out values ...]}, ...]}
//
// Binary (little-endian):
//   char[4]   magic "PMLP"
//   u32       version (1)
//   u32       layer count L
//   u32[L+1]  layer widths (input width first)
//   u32[L]    activations (0 = linear, 1 = relu)
//   per layer: f32[out*in] weight (row-major), f32[out] bias

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psadet/error.hpp"
#include "psadet/rng.hpp"

namespace psadet {

enum class Activation : std::uint32_t { linear = 0, relu = 1 };

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;    // out
  Activation activation = Activation::relu;
};

class MlpSpec {
 public:
  MlpSpec() = default;
  explicit MlpSpec(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t input_width() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t output_width() const { return layers_.empty() ? 0 : layers_.back().out; }

  /// Applies the network to one input row.
  void forward(std::span<const double> input, std::vector<double>& out,
               std::vector<double>& scratch) const {
    if (input.size() != input_width()) {
      throw Error("MlpSpec::forward: input width " + std::to_string(input.size()) +
                  " != expected " + std::to_string(input_width()));
    }
    out.assign(input.begin(), input.end());
    for (const auto& layer : layers_) {
      scratch.assign(layer.out, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double* w = layer.weight.data() + o * layer.in;
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * out[i];
        scratch[o] = (layer.activation == Activation::relu && acc < 0.0) ? 0.0 : acc;
      }
      out.swap(scratch);
    }
  }

  /// Layers with He-style random weights; widths = {in, h1, ..., out}.
  static MlpSpec random(std::span<const std::size_t> widths, std::uint64_t seed,
                        Activation last = Activation::relu) {
    PSADET_CHECK(widths.size() >= 2, "MlpSpec::random: need at least two widths");
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      DenseLayer d;
      d.in = widths[l];
      d.out = widths[l + 1];
      const double scale = std::sqrt(2.0 / static_cast<double>(d.in));
      d.weight.resize(d.in * d.out);
      for (auto& w : d.weight) w = rng.normal(0.0, scale);
      d.bias.resize(d.out);
      for (auto& b : d.bias) b = rng.normal(0.0, 0.01);
      d.activation = (l + 2 == widths.size()) ? last : Activation::relu;
      layers.push_back(std::move(d));
    }
    return MlpSpec(std::move(layers));
  }

  static MlpSpec identity(std::size_t width) {
    DenseLayer d;
    d.in = d.out = width;
    d.weight.assign(width * width, 0.0);
    for (std::size_t i = 0; i < width; ++i) d.weight[i * width + i] = 1.0;
    d.bias.assign(width, 0.0);
    d.activation = Activation::linear;
    return MlpSpec({d});
  }

 private:
  void validate() const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& d = layers_[l];
      const std::string where = "MlpSpec layer " + std::to_string(l) + ": ";
      if (d.in == 0 || d.out == 0) throw Error(where + "zero width");
      if (d.weight.size() != d.in * d.out) throw Error(where + "weight block size mismatch");
      if (d.bias.size() != d.out) throw Error(where + "bias size mismatch");
      if (l > 0 && layers_[l - 1].out != d.in) throw Error(where + "incompatible with previous layer");
      for (double w : d.weight)
        if (!std::isfinite(w)) throw Error(where + "non-finite weight");
      for (double b : d.bias)
        if (!std::isfinite(b)) throw Error(where + "non-finite bias");
    }
  }

  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json mlp_to_json(const MlpSpec& mlp) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& d : mlp.layers()) {
    layers.push_back({{"in", d.in},
                      {"out", d.out},
                      {"activation", d.activation == Activation::relu ? "relu" : "linear"},
                      {"weight", d.weight},
                      {"bias", d.bias}});
  }
  return {{"layers", layers}};
}

inline MlpSpec mlp_from_json(const nlohmann::json& j) {
  try {
    std::vector<DenseLayer> layers;
    for (const auto& l : j.at("layers")) {
      DenseLayer d;
      d.in = l.at("in").get<std::size_t>();
      d.out = l.at("out").get<std::size_t>();
      const auto act = l.at("activation").get<std::string>();
      if (act == "relu") {
        d.activation = Activation::relu;
      } else if (act == "linear") {
        d.activation = Activation::linear;
      } else {
        throw Error("unknown activation '" + act + "'");
      }
      d.weight = l.at("weight").get<std::vector<double>>();
      d.bias = l.at("bias").get<std::vector<double>>();
      layers.push_back(std::move(d));
    }
    return MlpSpec(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mlp json: ") + e.what());
  }
}

namespace detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian host");

inline void put_u32(std::string& buf, std::uint32_t v) {
  buf.append(reinterpret_cast<const char*>(&v), 4);
}
inline void put_f32(std::string& buf, float v) { buf.append(reinterpret_cast<const char*>(&v), 4); }

class ByteReader {
 public:
  ByteReader(std::span<const char> data, std::string source) : data_(data), source_(std::move(source)) {}
  std::uint32_t u32() { return read<std::uint32_t>(); }
  float f32() { return read<float>(); }
  bool done() const { return pos_ == data_.size(); }

 private:
  template <typename T>
  T read() {
    if (pos_ + sizeof(T) > data_.size()) throw ParseError(source_ + ": truncated at byte " + std::to_string(pos_));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const char> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string mlp_to_binary(const MlpSpec& mlp) {
  std::string buf = "PMLP";
  detail::put_u32(buf, 1);
  const auto& layers = mlp.layers();
  detail::put_u32(buf, static_cast<std::uint32_t>(layers.size()));
  if (!layers.empty()) detail::put_u32(buf, static_cast<std::uint32_t>(layers.front().in));
  for (const auto& d : layers) detail::put_u32(buf, static_cast<std::uint32_t>(d.out));
  for (const auto& d : layers) detail::put_u32(buf, static_cast<std::uint32_t>(d.activation));
  for (const auto& d : layers) {
    for (double w : d.weight) detail::put_f32(buf, static_cast<float>(w));
    for (double b : d.bias) detail::put_f32(buf, static_cast<float>(b));
  }
  return buf;
}

inline MlpSpec mlp_from_binary(std::span<const char> bytes, const std::string& source = "mlp") {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PMLP", 4) != 0) {
    throw ParseError(source + ": bad magic");
  }
  detail::ByteReader r(bytes.subspan(4), source);
  if (const auto v = r.u32(); v != 1) throw ParseError(source + ": unsupported version " + std::to_string(v));
  const std::uint32_t n_layers = r.u32();
  if (n_layers > 1024) throw ParseError(source + ": implausible layer count");
  std::vector<std::uint32_t> widths(n_layers == 0 ? 0 : n_layers + 1);
  for (auto& w : widths) w = r.u32();
  std::vector<DenseLayer> layers(n_layers);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const auto act = r.u32();
    if (act > 1) throw ParseError(source + ": bad activation code in layer " + std::to_string(l));
    layers[l].activation = static_cast<Activation>(act);
    layers[l].in = widths[l];
    layers[l].out = widths[l + 1];
  }
  for (auto& d : layers) {
    d.weight.resize(d.in * d.out);
    for (auto& w : d.weight) w = r.f32();
    d.bias.resize(d.out);
    for (auto& b : d.bias) b = r.f32();
  }
  if (!r.done()) throw ParseError(source + ": trailing bytes");
  return MlpSpec(std::move(layers));
}

inline MlpSpec load_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_mlp: cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.rfind("PMLP", 0) == 0) return mlp_from_binary(bytes, path);
  try {
    return mlp_from_json(nlohmann::json::parse(bytes));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace psadet
