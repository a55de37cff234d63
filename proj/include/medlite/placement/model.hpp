// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "medlite/core/error.hpp"
#include "medlite/core/matrix.hpp"
#include "medlite/quant/policy.hpp"

namespace medlite {

struct DeviceSpec {
  std::string id;
  double memory_bytes = 0.0;
  double throughput = 0.0;  // FLOP/s
  double bandwidth = 0.0;   // host-device bytes/s
};

struct LayerProfile {
  std::string id;
  std::size_t order = 0;
  double flops = 0.0;  // per token
  double weight_bytes = 0.0;
  double activation_bytes = 0.0;  // leaving this layer
};

// Layers x devices, higher is better.
using AffinityMatrix = Matrix;

class InfeasiblePlacement : public Error {
 public:
  using Error::Error;
};

inline void validate_devices(const std::vector<DeviceSpec>& devices) {
  if (devices.empty()) throw ConfigError("no devices given");
  for (const auto& d : devices) {
    if (!(d.memory_bytes >= 0.0) || !std::isfinite(d.memory_bytes)) {
      throw ConfigError("device '" + d.id + "' has an invalid memory capacity");
    }
    if (!(d.throughput > 0.0) || !std::isfinite(d.throughput)) {
      throw DomainError("device '" + d.id + "' must have positive finite throughput");
    }
    if (!(d.bandwidth > 0.0) || !std::isfinite(d.bandwidth)) {
      throw DomainError("device '" + d.id + "' must have positive finite bandwidth");
    }
  }
}

inline void validate_layers(const std::vector<LayerProfile>& layers) {
  if (layers.empty()) throw ConfigError("no layers given");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.order != i) throw ConfigError("layer order indices must be contiguous from 0");
    if (!(l.flops >= 0.0) || !(l.weight_bytes >= 0.0) || !(l.activation_bytes >= 0.0) || !std::isfinite(l.flops) ||
        !std::isfinite(l.weight_bytes) || !std::isfinite(l.activation_bytes)) {
      throw ConfigError("layer '" + l.id + "' has negative or non-finite costs");
    }
  }
}

// Per layer: time t_d = flops / throughput_d, scored (t_max - t_d) / (t_max - t_min).
// Rows where every device takes the same time score 1 everywhere.
inline AffinityMatrix build_affinity(const std::vector<LayerProfile>& layers, const std::vector<DeviceSpec>& devices) {
  validate_layers(layers);
  validate_devices(devices);
  AffinityMatrix a(layers.size(), devices.size(), 0.0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& d : devices) {
      const double t = layers[l].flops / d.throughput;
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    for (std::size_t d = 0; d < devices.size(); ++d) {
      const double t = layers[l].flops / devices[d].throughput;
      a(l, d) = hi == lo ? 1.0 : (hi - t) / (hi - lo);
    }
  }
  return a;
}

inline double transfer_seconds(const LayerProfile& from, const DeviceSpec& a, const DeviceSpec& b) {
  return from.activation_bytes / std::min(a.bandwidth, b.bandwidth);
}

// Seconds per token: compute on each assigned device plus one activation
// transfer at every boundary where the device changes.
inline double estimate_latency(const std::vector<std::size_t>& assignment, const std::vector<LayerProfile>& layers,
                               const std::vector<DeviceSpec>& devices) {
  if (assignment.size() != layers.size()) throw DimensionError("assignment does not cover every layer");
  double total = 0.0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (assignment[l] >= devices.size()) throw DimensionError("assignment names an unknown device");
    total += layers[l].flops / devices[assignment[l]].throughput;
    if (l > 0 && assignment[l] != assignment[l - 1]) {
      total += transfer_seconds(layers[l - 1], devices[assignment[l - 1]], devices[assignment[l]]);
    }
  }
  return total;
}

// Device file:
//   {"schema": "medlite.devices/1",
//    "devices": [{"id": "gpu0", "memory_bytes": 8e9, "throughput_flops": 2e13,
//                 "bandwidth_bytes_per_s": 1.6e10}, ...]}
inline std::vector<DeviceSpec> devices_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("devices") || !doc["devices"].is_array()) {
    throw ConfigError("devices: missing required key 'devices'");
  }
  std::vector<DeviceSpec> out;
  for (const auto& d : doc["devices"]) {
    for (const char* key : {"id", "memory_bytes", "throughput_flops", "bandwidth_bytes_per_s"}) {
      if (!d.contains(key)) throw ConfigError(std::string("devices: entry missing '") + key + "'");
    }
    out.push_back({d["id"].get<std::string>(), d["memory_bytes"].get<double>(), d["throughput_flops"].get<double>(),
                   d["bandwidth_bytes_per_s"].get<double>()});
  }
  try {
    validate_devices(out);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return out;
}

// Profiles for a quantized model: 2 FLOPs per weight per token, post-policy
// weight bytes, and an fp16 activation vector at each boundary. Linear
// weights are stored [out, in]; embeddings are [vocab, hidden].
inline std::vector<LayerProfile> profiles_from_manifest(const ModelManifest& manifest, const PrecisionPolicy& policy) {
  const auto plan = apply_policy(manifest, policy);
  std::vector<LayerProfile> out;
  for (std::size_t i = 0; i < manifest.layers.size(); ++i) {
    const auto& spec = manifest.layers[i];
    const double width = static_cast<double>(spec.layer_class == LayerClass::kEmbedding ? spec.shape.back()
                                                                                        : spec.shape.front());
    out.push_back({spec.name, i, 2.0 * static_cast<double>(spec.params()),
                   static_cast<double>(plan.layers[i].total_bytes()), 2.0 * width});
  }
  return out;
}

}  // namespace medlite
