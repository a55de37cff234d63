// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "medlite/core/binary_io.hpp"
#include "medlite/core/error.hpp"
#include "medlite/core/hash.hpp"
#include "medlite/quant/blockwise.hpp"
#include "medlite/quant/policy.hpp"

namespace medlite {

// Quantized checkpoint container (all integers little-endian):
//
//   header
//     char[4]  magic "MLQC"
//     u32      version (1)
//     u64      manifest digest (ModelManifest::digest)
//     u32      block size
//     u8[4]    policy bits: attention, feedforward, embedding, output
//     u32      layer count
//   per layer, in manifest order
//     u32 + bytes  name (UTF-8)
//     u8       layer class (0 attention, 1 feedforward, 2 embedding, 3 output)
//     u8       bits (4 = NF4 packed nibbles, 8 = int8, 16 = IEEE half)
//     u8       rank, then rank x u64 dims
//     u64      scale count, then scale count x f32 (absent for 16-bit)
//     u64      code byte count, then the code bytes
//   trailer
//     u64      FNV-1a 64 of every preceding byte
struct QuantizedLayer {
  LayerSpec spec;
  int bits = 16;
  std::vector<float> scales;
  std::vector<std::uint8_t> codes;
};

struct QuantizedCheckpoint {
  std::uint64_t manifest_digest = 0;
  PrecisionPolicy policy;
  std::vector<QuantizedLayer> layers;
};

inline constexpr char kCheckpointMagic[4] = {'M', 'L', 'Q', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline QuantizedLayer quantize_layer(const LayerSpec& spec, std::span<const float> weights, int bits,
                                     std::size_t block_size) {
  if (weights.size() != spec.params()) {
    throw DimensionError("layer '" + spec.name + "' expects " + std::to_string(spec.params()) + " weights");
  }
  QuantizedLayer out{spec, bits, {}, {}};
  if (bits == 16) {
    out.codes.resize(weights.size() * 2);
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const std::uint16_t h = float_to_half(weights[i]);
      out.codes[2 * i] = static_cast<std::uint8_t>(h & 0xFF);
      out.codes[2 * i + 1] = static_cast<std::uint8_t>(h >> 8);
    }
    return out;
  }
  auto qt = quantize_tensor(weights, spec.shape, bits == 4 ? QuantFormat::kNf4 : QuantFormat::kInt8, block_size);
  out.scales = std::move(qt.scales);
  out.codes = std::move(qt.codes);
  return out;
}

inline std::vector<float> dequantize_layer(const QuantizedLayer& layer, std::size_t block_size) {
  if (layer.bits == 16) {
    if (layer.codes.size() != layer.spec.params() * 2) throw FormatError("half layer has the wrong byte count");
    std::vector<float> out(layer.spec.params());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = half_to_float(static_cast<std::uint16_t>(layer.codes[2 * i] | (layer.codes[2 * i + 1] << 8)));
    }
    return out;
  }
  QuantizedTensor qt{layer.bits == 4 ? QuantFormat::kNf4 : QuantFormat::kInt8, layer.codes, layer.scales,
                     layer.spec.shape, block_size};
  return dequantize(qt);
}

// Streams a checkpoint to disk one layer at a time.
class CheckpointWriter {
 public:
  CheckpointWriter(const std::string& path, const ModelManifest& manifest, const PrecisionPolicy& policy)
      : out_(path, std::ios::binary), policy_(policy), expected_layers_(manifest.layers.size()) {
    if (!out_) throw Error("cannot write checkpoint '" + path + "'");
    manifest.validate();
    policy.validate();
    ByteWriter w;
    for (char c : kCheckpointMagic) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint64_t>(manifest.digest());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(policy.block_size));
    for (LayerClass c : kAllLayerClasses) w.put<std::uint8_t>(static_cast<std::uint8_t>(policy.bits_for(c)));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(manifest.layers.size()));
    emit(w);
  }

  void add_layer(const QuantizedLayer& layer) {
    if (written_ == expected_layers_) throw Error("checkpoint already holds every manifest layer");
    ByteWriter w;
    w.put_string(layer.spec.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(layer.spec.layer_class));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(layer.bits));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(layer.spec.shape.size()));
    for (std::size_t d : layer.spec.shape) w.put<std::uint64_t>(d);
    w.put<std::uint64_t>(layer.scales.size());
    for (float s : layer.scales) w.put<float>(s);
    w.put<std::uint64_t>(layer.codes.size());
    w.put_bytes(layer.codes);
    emit(w);
    ++written_;
  }

  void finish() {
    if (written_ != expected_layers_) throw Error("checkpoint is missing layers");
    ByteWriter w;
    w.put<std::uint64_t>(hash_);
    out_.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
    out_.flush();
    if (!out_) throw Error("failed writing checkpoint");
  }

 private:
  void emit(const ByteWriter& w) {
    hash_ = fnv1a64(std::span<const std::uint8_t>(w.bytes()), hash_);
    out_.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
    if (!out_) throw Error("failed writing checkpoint");
  }

  std::ofstream out_;
  PrecisionPolicy policy_;
  std::size_t expected_layers_;
  std::size_t written_ = 0;
  std::uint64_t hash_ = kFnvOffset64;
};

inline QuantizedCheckpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("checkpoint too short");
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader trailer(bytes.last(8));
  if (trailer.get<std::uint64_t>() != fnv1a64(body)) throw FormatError("checkpoint checksum mismatch");

  ByteReader r(body);
  const auto magic = r.get_bytes(4);
  for (std::size_t i = 0; i < 4; ++i) {
    if (magic[i] != static_cast<std::uint8_t>(kCheckpointMagic[i])) throw FormatError("not a medlite checkpoint");
  }
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  QuantizedCheckpoint ckpt;
  ckpt.manifest_digest = r.get<std::uint64_t>();
  ckpt.policy.block_size = r.get<std::uint32_t>();
  for (LayerClass c : kAllLayerClasses) ckpt.policy.bits[c] = r.get<std::uint8_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    QuantizedLayer layer;
    layer.spec.name = r.get_string();
    const auto cls = r.get<std::uint8_t>();
    if (cls > 3) throw FormatError("bad layer class");
    layer.spec.layer_class = static_cast<LayerClass>(cls);
    layer.bits = r.get<std::uint8_t>();
    if (layer.bits != 4 && layer.bits != 8 && layer.bits != 16) throw FormatError("bad layer bit width");
    const auto rank = r.get<std::uint8_t>();
    for (std::uint8_t d = 0; d < rank; ++d) layer.spec.shape.push_back(r.get<std::uint64_t>());
    const auto scales = r.get<std::uint64_t>();
    if (scales > r.remaining() / 4) throw FormatError("scale count exceeds file size");
    layer.scales.resize(scales);
    for (auto& s : layer.scales) s = r.get<float>();
    const auto code_bytes = r.get<std::uint64_t>();
    const auto codes = r.get_bytes(code_bytes);
    layer.codes.assign(codes.begin(), codes.end());
    ckpt.layers.push_back(std::move(layer));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint");
  return ckpt;
}

inline QuantizedCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

// Quantizes a raw weight file (float32 little-endian, layers concatenated in
// manifest order) into a checkpoint, holding one layer in memory at a time.
inline QuantizationPlan quantize_weight_file(const std::string& weights_path, const ModelManifest& manifest,
                                             const PrecisionPolicy& policy, const std::string& out_path) {
  const auto plan = apply_policy(manifest, policy);
  std::ifstream in(weights_path, std::ios::binary | std::ios::ate);
  if (!in) throw Error("cannot open weight file '" + weights_path + "'");
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size != manifest.total_params() * sizeof(float)) {
    throw FormatError("weight file holds " + std::to_string(size) + " bytes, manifest needs " +
                      std::to_string(manifest.total_params() * sizeof(float)));
  }
  in.seekg(0);
  CheckpointWriter writer(out_path, manifest, policy);
  std::vector<float> buf;
  for (const auto& layer : manifest.layers) {
    buf.resize(layer.params());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw FormatError("short read in weight file at layer '" + layer.name + "'");
    writer.add_layer(quantize_layer(layer, buf, policy.bits_for(layer.layer_class), policy.block_size));
  }
  writer.finish();
  return plan;
}

inline std::string footprint_report(const QuantizationPlan& plan) {
  std::string out = "layer\tclass\tbits\tparams\tcode_bytes\tscale_bytes\n";
  char line[512];
  for (const auto& l : plan.layers) {
    std::snprintf(line, sizeof line, "%s\t%s\t%d\t%zu\t%zu\t%zu\n", l.name.c_str(),
                  std::string(to_string(l.layer_class)).c_str(), l.bits, l.params, l.code_bytes, l.scale_bytes);
    out += line;
  }
  std::snprintf(line, sizeof line, "total_bytes\t%zu\nfp16_bytes\t%zu\nratio_to_fp16\t%.4f\nreduction\t%.4f\n",
                plan.total_bytes, plan.fp16_bytes, plan.ratio_to_fp16(), plan.reduction());
  out += line;
  return out;
}

}  // namespace medlite
