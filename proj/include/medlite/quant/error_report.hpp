// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/quant/blockwise.hpp"
#include "medlite/quant/policy.hpp"

namespace medlite {

struct LayerError {
  std::string name;
  int bits = 16;
  double mse = 0.0;
};

// Round-trip error of one layer at the given width. 16-bit layers are kept
// unquantized and report zero.
inline double quantization_mse(std::span<const float> weights, int bits, std::size_t block_size) {
  if (bits == 16) return 0.0;
  const auto format = bits == 4 ? QuantFormat::kNf4 : QuantFormat::kInt8;
  const auto back = dequantize(quantize_tensor(weights, {weights.size()}, format, block_size));
  double sum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double d = static_cast<double>(back[i]) - static_cast<double>(weights[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(weights.size());
}

// One row per planned layer; weights[i] holds layer i's values.
inline std::vector<LayerError> quant_error_report(const std::vector<std::vector<float>>& weights,
                                                  const QuantizationPlan& plan) {
  if (weights.size() != plan.layers.size()) throw DimensionError("weights do not match the plan's layer count");
  std::vector<LayerError> rows;
  rows.reserve(plan.layers.size());
  for (std::size_t i = 0; i < plan.layers.size(); ++i) {
    const auto& layer = plan.layers[i];
    if (weights[i].size() != layer.params) {
      throw DimensionError("layer '" + layer.name + "' has " + std::to_string(weights[i].size()) +
                           " weights, plan expects " + std::to_string(layer.params));
    }
    rows.push_back({layer.name, layer.bits, quantization_mse(weights[i], layer.bits, plan.block_size)});
  }
  return rows;
}

}  // namespace medlite
