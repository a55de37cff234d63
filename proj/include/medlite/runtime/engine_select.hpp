// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/query/category.hpp"

namespace medlite {

struct HardwareEnv {
  double accelerator_memory = 0.0;  // bytes
  double host_memory = 0.0;         // bytes
  unsigned cores = 1;
  double disk_bandwidth = 0.0;  // bytes/s

  void validate() const {
    if (!(accelerator_memory > 0) || !(host_memory > 0) || cores == 0 || !(disk_bandwidth > 0)) {
      throw ConfigError("hardware environment values must be positive");
    }
  }
};

struct WorkloadProfile {
  double request_rate = 1.0;  // req/s
  double mean_prompt_tokens = 64.0;
  std::array<double, kCategoryCount> category_mix = {0.2, 0.2, 0.2, 0.2, 0.2};
  double mean_output_tokens = 128.0;

  void validate() const {
    if (!(request_rate > 0) || !(mean_prompt_tokens > 0) || !(mean_output_tokens > 0)) {
      throw ConfigError("workload rates and lengths must be positive");
    }
    double sum = 0.0;
    for (double p : category_mix) {
      if (!(p >= 0.0)) throw ConfigError("category proportions must be non-negative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("category proportions must sum to 1");
  }
};

struct EngineProfile {
  std::string id;
  std::vector<int> supported_bits = {4, 8, 16};
  double base_rate = 0.0;     // generated tokens/s
  double overhead_s = 0.0;    // fixed per-request cost
  double memory_bytes = 0.0;  // resident requirement

  void validate() const {
    if (id.empty()) throw ConfigError("engine id must be non-empty");
    if (!(base_rate > 0) || !(overhead_s >= 0) || !(memory_bytes >= 0)) {
      throw ConfigError("engine '" + id + "' needs a positive base rate and non-negative overhead and memory");
    }
  }

  bool supports(int bits) const { return std::find(supported_bits.begin(), supported_bits.end(), bits) != supported_bits.end(); }
};

struct ScoreCoefficients {
  double a = 1.0;  // throughput
  double b = 0.5;  // p50 latency
  double c = 0.2;  // memory fraction
};

// Linear perf model: p50 latency = overhead + mean_output / base_rate;
// throughput is generated tokens per second of that latency.
struct EngineEstimate {
  double throughput = 0.0;
  double p50_latency = 0.0;
  double memory_fraction = 0.0;
};

inline EngineEstimate estimate_engine(const EngineProfile& e, const HardwareEnv& h, const WorkloadProfile& l) {
  EngineEstimate est;
  est.p50_latency = e.overhead_s + l.mean_output_tokens / e.base_rate;
  est.throughput = l.mean_output_tokens / est.p50_latency;
  est.memory_fraction = e.memory_bytes / h.accelerator_memory;
  return est;
}

inline double score_estimate(const EngineEstimate& est, const ScoreCoefficients& k = {}) {
  return k.a * est.throughput - k.b * est.p50_latency - k.c * est.memory_fraction;
}

inline bool engine_fits(const EngineProfile& e, const HardwareEnv& h) { return e.memory_bytes <= h.accelerator_memory; }

// -inf when the engine does not fit in accelerator memory.
inline double score_engine(const EngineProfile& e, const HardwareEnv& h, const WorkloadProfile& l,
                           const ScoreCoefficients& k = {}) {
  if (!engine_fits(e, h)) return -std::numeric_limits<double>::infinity();
  return score_estimate(estimate_engine(e, h, l), k);
}

class NoFeasibleEngine : public Error {
 public:
  using Error::Error;
};

// Highest score; ties go to the lexicographically smallest id. When
// required_bits is non-zero, engines lacking that width are skipped.
inline std::string select_engine(std::span<const EngineProfile> engines, const HardwareEnv& h,
                                 const WorkloadProfile& l, const ScoreCoefficients& k = {}, int required_bits = 0) {
  const EngineProfile* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& e : engines) {
    if (required_bits != 0 && !e.supports(required_bits)) continue;
    const double s = score_engine(e, h, l, k);
    if (std::isinf(s) && s < 0) continue;
    if (!best || s > best_score || (s == best_score && e.id < best->id)) {
      best = &e;
      best_score = s;
    }
  }
  if (!best) throw NoFeasibleEngine("no engine fits the hardware environment");
  return best->id;
}

}  // namespace medlite
