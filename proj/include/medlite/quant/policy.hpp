// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "medlite/core/error.hpp"
#include "medlite/core/hash.hpp"
#include "medlite/quant/blockwise.hpp"

namespace medlite {

enum class LayerClass : std::uint8_t { kAttention = 0, kFeedforward = 1, kEmbedding = 2, kOutput = 3 };

inline constexpr std::array<LayerClass, 4> kAllLayerClasses = {LayerClass::kAttention, LayerClass::kFeedforward,
                                                               LayerClass::kEmbedding, LayerClass::kOutput};

constexpr std::string_view to_string(LayerClass c) noexcept {
  switch (c) {
    case LayerClass::kAttention: return "attention";
    case LayerClass::kFeedforward: return "feedforward";
    case LayerClass::kEmbedding: return "embedding";
    case LayerClass::kOutput: return "output";
  }
  return "unknown";
}

constexpr std::optional<LayerClass> layer_class_from_string(std::string_view s) noexcept {
  for (LayerClass c : kAllLayerClasses) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

struct LayerSpec {
  std::string name;
  LayerClass layer_class = LayerClass::kFeedforward;
  std::vector<std::size_t> shape;

  std::size_t params() const noexcept {
    if (shape.empty()) return 0;
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
};

struct ModelManifest {
  std::vector<LayerSpec> layers;

  std::size_t total_params() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.params();
    return n;
  }

  void validate() const {
    std::set<std::string> names;
    for (const auto& l : layers) {
      if (l.name.empty()) throw ConfigError("manifest layer with empty name");
      if (!names.insert(l.name).second) throw ConfigError("duplicate manifest layer '" + l.name + "'");
      if (l.params() == 0) throw ConfigError("manifest layer '" + l.name + "' has no parameters");
    }
    if (layers.empty()) throw ConfigError("manifest has no layers");
  }

  // Stable identity of the layer list, stored in quantized checkpoints.
  std::uint64_t digest() const {
    std::string canon;
    for (const auto& l : layers) {
      canon += l.name;
      canon += '|';
      canon += to_string(l.layer_class);
      for (std::size_t d : l.shape) canon += '|' + std::to_string(d);
      canon += '\n';
    }
    return fnv1a64(canon);
  }
};

// Bit width per layer class; 4 = NF4, 8 = int8, 16 = unquantized half.
struct PrecisionPolicy {
  std::map<LayerClass, int> bits = {{LayerClass::kAttention, 8},
                                    {LayerClass::kFeedforward, 4},
                                    {LayerClass::kEmbedding, 4},
                                    {LayerClass::kOutput, 4}};
  std::size_t block_size = kDefaultBlockSize;

  static PrecisionPolicy uniform(int width, std::size_t block = kDefaultBlockSize) {
    PrecisionPolicy p;
    for (LayerClass c : kAllLayerClasses) p.bits[c] = width;
    p.block_size = block;
    return p;
  }

  int bits_for(LayerClass c) const {
    auto it = bits.find(c);
    if (it == bits.end()) throw ConfigError("precision policy has no bit width for '" + std::string(to_string(c)) + "'");
    return it->second;
  }

  void validate() const {
    if (block_size == 0) throw ConfigError("precision policy block size must be positive");
    for (LayerClass c : kAllLayerClasses) {
      const int b = bits_for(c);
      if (b != 4 && b != 8 && b != 16) {
        throw ConfigError("unsupported bit width " + std::to_string(b) + " for '" + std::string(to_string(c)) + "'");
      }
    }
  }
};

struct LayerFootprint {
  std::string name;
  LayerClass layer_class = LayerClass::kFeedforward;
  int bits = 16;
  std::size_t params = 0;
  std::size_t code_bytes = 0;
  std::size_t scale_bytes = 0;

  std::size_t total_bytes() const noexcept { return code_bytes + scale_bytes; }
};

struct QuantizationPlan {
  std::vector<LayerFootprint> layers;
  std::size_t block_size = kDefaultBlockSize;
  std::size_t total_bytes = 0;
  std::size_t fp16_bytes = 0;

  double ratio_to_fp16() const noexcept {
    return fp16_bytes == 0 ? 0.0 : static_cast<double>(total_bytes) / static_cast<double>(fp16_bytes);
  }
  double reduction() const noexcept { return 1.0 - ratio_to_fp16(); }
};

// Codes take ceil(params * bits / 8) bytes; quantized layers add one 32-bit
// scale per block. 16-bit layers carry no scales, so an all-16 policy equals
// the FP16 baseline exactly.
inline LayerFootprint layer_footprint(const LayerSpec& layer, int bits, std::size_t block_size) {
  LayerFootprint f{layer.name, layer.layer_class, bits, layer.params(), 0, 0};
  f.code_bytes = (f.params * static_cast<std::size_t>(bits) + 7) / 8;
  if (bits < 16) f.scale_bytes = (f.params + block_size - 1) / block_size * sizeof(float);
  return f;
}

inline QuantizationPlan apply_policy(const ModelManifest& manifest, const PrecisionPolicy& policy) {
  manifest.validate();
  policy.validate();
  QuantizationPlan plan;
  plan.block_size = policy.block_size;
  for (const auto& layer : manifest.layers) {
    plan.layers.push_back(layer_footprint(layer, policy.bits_for(layer.layer_class), policy.block_size));
    plan.total_bytes += plan.layers.back().total_bytes();
    plan.fp16_bytes += layer.params() * 2;
  }
  return plan;
}

// LLaMA-7B-shaped layer list: 32 blocks of hidden 4096, FFN 11008, vocab
// 32000. Attention holds about 32% of the parameters.
inline ModelManifest synthetic_7b_manifest() {
  constexpr std::size_t hidden = 4096, ffn = 11008, vocab = 32000, blocks = 32;
  ModelManifest m;
  m.layers.push_back({"tok_embeddings", LayerClass::kEmbedding, {vocab, hidden}});
  for (std::size_t i = 0; i < blocks; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    for (const char* proj : {"attention.wq", "attention.wk", "attention.wv", "attention.wo"}) {
      m.layers.push_back({p + proj, LayerClass::kAttention, {hidden, hidden}});
    }
    m.layers.push_back({p + "feed_forward.w1", LayerClass::kFeedforward, {ffn, hidden}});
    m.layers.push_back({p + "feed_forward.w2", LayerClass::kFeedforward, {hidden, ffn}});
    m.layers.push_back({p + "feed_forward.w3", LayerClass::kFeedforward, {ffn, hidden}});
  }
  m.layers.push_back({"output", LayerClass::kOutput, {vocab, hidden}});
  return m;
}

// Manifest document:
//   {"schema": "medlite.manifest/1",
//    "layers": [{"name": "...", "class": "attention", "shape": [4096, 4096],
//                "params": 16777216}, ...]}
// "params" is optional; when present it must equal the shape product.
inline ModelManifest manifest_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("layers") || !doc["layers"].is_array()) {
    throw ConfigError("manifest: missing required key 'layers'");
  }
  ModelManifest m;
  for (const auto& l : doc["layers"]) {
    LayerSpec spec;
    if (!l.contains("name") || !l["name"].is_string()) throw ConfigError("manifest: layer missing 'name'");
    spec.name = l["name"].get<std::string>();
    if (!l.contains("class") || !l["class"].is_string()) {
      throw ConfigError("manifest: layer '" + spec.name + "' missing 'class'");
    }
    auto cls = layer_class_from_string(l["class"].get<std::string>());
    if (!cls) throw ConfigError("manifest: layer '" + spec.name + "' has unknown class");
    spec.layer_class = *cls;
    if (!l.contains("shape") || !l["shape"].is_array()) {
      throw ConfigError("manifest: layer '" + spec.name + "' missing 'shape'");
    }
    for (const auto& d : l["shape"]) {
      if (!d.is_number_unsigned()) throw ConfigError("manifest: layer '" + spec.name + "' has a bad dimension");
      spec.shape.push_back(d.get<std::size_t>());
    }
    if (l.contains("params") && l["params"].get<std::size_t>() != spec.params()) {
      throw ConfigError("manifest: layer '" + spec.name + "' params do not match its shape");
    }
    m.layers.push_back(std::move(spec));
  }
  m.validate();
  return m;
}

inline nlohmann::json manifest_to_json(const ModelManifest& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.layers) {
    layers.push_back({{"name", l.name}, {"class", to_string(l.layer_class)}, {"shape", l.shape}, {"params", l.params()}});
  }
  return {{"schema", "medlite.manifest/1"}, {"layers", layers}};
}

inline PrecisionPolicy policy_from_json(const nlohmann::json& doc) {
  PrecisionPolicy p;
  if (doc.contains("block_size")) p.block_size = doc["block_size"].get<std::size_t>();
  if (doc.contains("bits")) {
    for (const auto& [name, width] : doc["bits"].items()) {
      auto cls = layer_class_from_string(name);
      if (!cls) throw ConfigError("policy: unknown layer class '" + name + "'");
      p.bits[*cls] = width.get<int>();
    }
  }
  p.validate();
  return p;
}

}  // namespace medlite
