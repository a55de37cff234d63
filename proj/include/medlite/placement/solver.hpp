// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "medlite/placement/model.hpp"

namespace medlite {

enum class PlacementMode { kExact, kGreedy };

struct PlacementPlan {
  std::vector<std::size_t> assignment;  // layer -> device index
  bool feasible = false;
  double latency = 0.0;  // seconds per token
  std::vector<double> memory_used;  // per device
  PlacementMode mode = PlacementMode::kExact;
  bool proven_optimal = false;
};

struct SolverOptions {
  std::size_t exact_max_layers = 20;
  std::size_t exact_max_devices = 3;
  std::uint64_t node_budget = 20'000'000;
};

inline bool use_exact_mode(std::size_t layers, std::size_t devices, const SolverOptions& opt = {}) {
  return layers <= opt.exact_max_layers || devices <= opt.exact_max_devices;
}

namespace detail {

inline void check_total_capacity(const std::vector<LayerProfile>& layers, const std::vector<DeviceSpec>& devices) {
  double need = 0.0, have = 0.0;
  for (const auto& l : layers) need += l.weight_bytes;
  for (const auto& d : devices) have += d.memory_bytes;
  if (need > have) {
    throw InfeasiblePlacement("layers need " + std::to_string(need) + " bytes but devices hold " + std::to_string(have));
  }
}

inline PlacementPlan finish_plan(std::vector<std::size_t> assignment, const std::vector<LayerProfile>& layers,
                                 const std::vector<DeviceSpec>& devices, PlacementMode mode, bool proven) {
  PlacementPlan p;
  p.memory_used.assign(devices.size(), 0.0);
  for (std::size_t l = 0; l < layers.size(); ++l) p.memory_used[assignment[l]] += layers[l].weight_bytes;
  p.latency = estimate_latency(assignment, layers, devices);
  p.assignment = std::move(assignment);
  p.feasible = true;
  p.mode = mode;
  p.proven_optimal = proven;
  return p;
}

// Depth-first branch and bound over layers in order. The bound is the
// memory-free optimum of the remaining layers (a suffix DP), which is
// admissible and usually tight. Children are tried in ascending bound order,
// equal bounds by ascending device index. An optional incumbent (the greedy
// plan) seeds the search so an exhausted budget never returns worse.
class BranchAndBound {
 public:
  BranchAndBound(const std::vector<LayerProfile>& layers, const std::vector<DeviceSpec>& devices,
                 std::uint64_t budget)
      : layers_(layers), devices_(devices), budget_(budget), n_(layers.size()), m_(devices.size()) {
    compute_.assign(n_ * m_, 0.0);
    for (std::size_t l = 0; l < n_; ++l) {
      for (std::size_t d = 0; d < m_; ++d) compute_[l * m_ + d] = layers[l].flops / devices[d].throughput;
    }
    // suffix_[l * m + d]: best cost of layers l..n-1 with layer l on d.
    suffix_.assign((n_ + 1) * m_, 0.0);
    for (std::size_t l = n_; l-- > 0;) {
      for (std::size_t d = 0; d < m_; ++d) {
        double best = INFINITY;
        if (l + 1 == n_) {
          best = 0.0;
        } else {
          for (std::size_t e = 0; e < m_; ++e) {
            const double hop = d == e ? 0.0 : transfer_seconds(layers[l], devices[d], devices[e]);
            best = std::min(best, hop + suffix_[(l + 1) * m_ + e]);
          }
        }
        suffix_[l * m_ + d] = compute_[l * m_ + d] + best;
      }
    }
    weight_suffix_.assign(n_ + 1, 0.0);
    for (std::size_t l = n_; l-- > 0;) weight_suffix_[l] = weight_suffix_[l + 1] + layers[l].weight_bytes;
    free_.resize(m_);
    for (std::size_t d = 0; d < m_; ++d) free_[d] = devices[d].memory_bytes;
    current_.assign(n_, 0);
  }

  // Returns false if the node budget ran out before the search finished.
  bool run() {
    search(0, 0.0);
    return !exhausted_;
  }

  void seed(std::vector<std::size_t> assignment, double cost) {
    best_ = std::move(assignment);
    best_cost_ = cost;
  }

  bool found() const noexcept { return !best_.empty(); }
  const std::vector<std::size_t>& best() const noexcept { return best_; }

 private:
  void search(std::size_t l, double cost) {
    if (exhausted_) return;
    if (++nodes_ > budget_) {
      exhausted_ = true;
      return;
    }
    if (l == n_) {
      if (best_.empty() || cost < best_cost_ - tolerance()) {
        best_cost_ = cost;
        best_ = current_;
      }
      return;
    }
    double free_total = 0.0;
    for (double f : free_) free_total += f;
    if (weight_suffix_[l] > free_total) return;
    std::vector<std::pair<double, std::size_t>> children;
    children.reserve(m_);
    for (std::size_t d = 0; d < m_; ++d) {
      if (layers_[l].weight_bytes > free_[d]) continue;
      double step = 0.0;
      if (l > 0 && current_[l - 1] != d) step = transfer_seconds(layers_[l - 1], devices_[current_[l - 1]], devices_[d]);
      children.emplace_back(step, d);
    }
    std::stable_sort(children.begin(), children.end(), [&](const auto& a, const auto& b) {
      return a.first + suffix_[l * m_ + a.second] < b.first + suffix_[l * m_ + b.second];
    });
    for (const auto& [step, d] : children) {
      const double bound = cost + step + suffix_[l * m_ + d];
      if (!best_.empty() && bound >= best_cost_ - tolerance()) break;
      current_[l] = d;
      free_[d] -= layers_[l].weight_bytes;
      search(l + 1, cost + step + compute_[l * m_ + d]);
      free_[d] += layers_[l].weight_bytes;
    }
  }

  double tolerance() const noexcept { return 1e-12 * std::abs(best_cost_); }

  const std::vector<LayerProfile>& layers_;
  const std::vector<DeviceSpec>& devices_;
  std::uint64_t budget_;
  std::size_t n_, m_;
  std::vector<double> compute_, suffix_, weight_suffix_, free_;
  std::vector<std::size_t> current_, best_;
  double best_cost_ = INFINITY;
  std::uint64_t nodes_ = 0;
  bool exhausted_ = false;
};

}  // namespace detail

// Layers in order; each goes to its highest-affinity device that still has
// room, ties to the lowest device index.
inline PlacementPlan solve_greedy(const AffinityMatrix& affinity, const std::vector<LayerProfile>& layers,
                                  const std::vector<DeviceSpec>& devices) {
  validate_layers(layers);
  validate_devices(devices);
  if (affinity.rows() != layers.size() || affinity.cols() != devices.size()) {
    throw DimensionError("affinity matrix does not match layers x devices");
  }
  detail::check_total_capacity(layers, devices);
  std::vector<double> free(devices.size());
  for (std::size_t d = 0; d < devices.size(); ++d) free[d] = devices[d].memory_bytes;
  std::vector<std::size_t> assignment(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::size_t pick = devices.size();
    for (std::size_t d = 0; d < devices.size(); ++d) {
      if (layers[l].weight_bytes > free[d]) continue;
      if (pick == devices.size() || affinity(l, d) > affinity(l, pick)) pick = d;
    }
    if (pick == devices.size()) {
      throw InfeasiblePlacement("greedy placement found no device with room for layer '" + layers[l].id + "'");
    }
    free[pick] -= layers[l].weight_bytes;
    assignment[l] = pick;
  }
  return detail::finish_plan(std::move(assignment), layers, devices, PlacementMode::kGreedy, false);
}

// Latency-minimal feasible plan in exact mode, greedy otherwise. Throws
// InfeasiblePlacement when no plan fits. If the exact search hits its node
// budget, the best plan found is returned with proven_optimal = false.
inline PlacementPlan solve_placement(const AffinityMatrix& affinity, const std::vector<LayerProfile>& layers,
                                     const std::vector<DeviceSpec>& devices, const SolverOptions& opt = {}) {
  validate_layers(layers);
  validate_devices(devices);
  if (affinity.rows() != layers.size() || affinity.cols() != devices.size()) {
    throw DimensionError("affinity matrix does not match layers x devices");
  }
  detail::check_total_capacity(layers, devices);
  if (!use_exact_mode(layers.size(), devices.size(), opt)) return solve_greedy(affinity, layers, devices);

  detail::BranchAndBound bb(layers, devices, opt.node_budget);
  try {
    const auto greedy = solve_greedy(affinity, layers, devices);
    bb.seed(greedy.assignment, greedy.latency);
  } catch (const InfeasiblePlacement&) {
    // Greedy can fail where a packing still exists; search without a seed.
  }
  const bool complete = bb.run();
  if (!bb.found()) {
    if (complete) throw InfeasiblePlacement("no assignment satisfies every device's memory capacity");
    throw InfeasiblePlacement("search budget exhausted before any feasible assignment was found");
  }
  return detail::finish_plan(bb.best(), layers, devices, PlacementMode::kExact, complete);
}

inline PlacementPlan solve_placement(const std::vector<LayerProfile>& layers, const std::vector<DeviceSpec>& devices,
                                     const SolverOptions& opt = {}) {
  return solve_placement(build_affinity(layers, devices), layers, devices, opt);
}

// Plan document consumed by the runtime:
//   {"schema": "medlite.placement/1", "feasible": true, "mode": "exact",
//    "proven_optimal": true, "latency_s": 0.012,
//    "assignment": [{"layer": "...", "device": "..."}, ...],
//    "memory_used": {"gpu0": 123.0, ...}}
inline nlohmann::json plan_to_json(const PlacementPlan& plan, const std::vector<LayerProfile>& layers,
                                   const std::vector<DeviceSpec>& devices) {
  nlohmann::json assignment = nlohmann::json::array();
  for (std::size_t l = 0; l < plan.assignment.size(); ++l) {
    assignment.push_back({{"layer", layers[l].id}, {"device", devices[plan.assignment[l]].id}});
  }
  nlohmann::json memory = nlohmann::json::object();
  for (std::size_t d = 0; d < devices.size(); ++d) memory[devices[d].id] = plan.memory_used[d];
  return {{"schema", "medlite.placement/1"},
          {"feasible", plan.feasible},
          {"mode", plan.mode == PlacementMode::kExact ? "exact" : "greedy"},
          {"proven_optimal", plan.proven_optimal},
          {"latency_s", plan.latency},
          {"assignment", assignment},
          {"memory_used", memory}};
}

inline PlacementPlan plan_from_json(const nlohmann::json& doc, const std::vector<LayerProfile>& layers,
                                    const std::vector<DeviceSpec>& devices) {
  if (!doc.contains("assignment") || !doc["assignment"].is_array()) throw FormatError("plan: missing 'assignment'");
  const auto& rows = doc["assignment"];
  if (rows.size() != layers.size()) throw FormatError("plan does not cover every layer");
  std::vector<std::size_t> assignment(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (rows[l].value("layer", "") != layers[l].id) throw FormatError("plan layer order does not match profiles");
    const auto dev = rows[l].value("device", "");
    std::size_t idx = devices.size();
    for (std::size_t d = 0; d < devices.size(); ++d) {
      if (devices[d].id == dev) idx = d;
    }
    if (idx == devices.size()) throw FormatError("plan names unknown device '" + dev + "'");
    assignment[l] = idx;
  }
  const auto mode = doc.value("mode", "exact") == "greedy" ? PlacementMode::kGreedy : PlacementMode::kExact;
  return detail::finish_plan(std::move(assignment), layers, devices, mode, doc.value("proven_optimal", false));
}

// Holds the active plan and re-solves it when the workload profile changes.
// Calls are serialized.
class PlacementController {
 public:
  PlacementController(std::vector<LayerProfile> layers, std::vector<DeviceSpec> devices, SolverOptions opt = {})
      : layers_(std::move(layers)), devices_(std::move(devices)), opt_(opt),
        plan_(solve_placement(layers_, devices_, opt_)) {}

  PlacementPlan plan() const {
    std::lock_guard lock(mu_);
    return plan_;
  }

  // Returns true if the assignment changed.
  bool on_profile_change(std::vector<LayerProfile> layers) {
    std::lock_guard lock(mu_);
    auto next = solve_placement(layers, devices_, opt_);
    layers_ = std::move(layers);
    const bool changed = next.assignment != plan_.assignment;
    plan_ = std::move(next);
    return changed;
  }

 private:
  mutable std::mutex mu_;
  std::vector<LayerProfile> layers_;
  std::vector<DeviceSpec> devices_;
  SolverOptions opt_;
  PlacementPlan plan_;
};

}  // namespace medlite
