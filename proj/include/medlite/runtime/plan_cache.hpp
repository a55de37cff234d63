// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <span>
#include <utility>

#include "medlite/core/error.hpp"

namespace medlite {

struct ShapeKey {
  std::size_t seq_len = 0;  // bucketed
  std::size_t batch = 0;

  auto operator<=>(const ShapeKey&) const = default;
};

// Pads seq_len up to the next multiple of g.
inline ShapeKey shape_bucket(std::size_t seq_len, std::size_t batch, std::size_t g) {
  if (seq_len == 0) throw DomainError("sequence length must be at least 1");
  if (g == 0) throw DomainError("bucket granularity must be at least 1");
  return {(seq_len + g - 1) / g * g, batch};
}

struct PlanCacheStats {
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t builds = 0;
  std::size_t failures = 0;

  double hit_rate() const noexcept {
    const auto n = hits + misses;
    return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
  }
};

// Shape-keyed store of built plans. Concurrent misses on one key run the
// builder once; the other callers wait on the same result and count as hits.
// A failed build is not cached.
template <typename Plan>
class PlanCache {
 public:
  using Builder = std::function<Plan(const ShapeKey&)>;

  Plan get_or_build(const ShapeKey& key, const Builder& build) {
    std::shared_future<Plan> fut;
    std::promise<Plan> promise;
    bool owner = false;
    {
      std::lock_guard lock(mu_);
      if (auto it = plans_.find(key); it != plans_.end()) {
        fut = it->second;
        hits_.fetch_add(1, std::memory_order_relaxed);
      } else {
        fut = promise.get_future().share();
        plans_.emplace(key, fut);
        misses_.fetch_add(1, std::memory_order_relaxed);
        owner = true;
      }
    }
    if (owner) {
      builds_.fetch_add(1, std::memory_order_relaxed);
      try {
        promise.set_value(build(key));
      } catch (...) {
        failures_.fetch_add(1, std::memory_order_relaxed);
        {
          std::lock_guard lock(mu_);
          plans_.erase(key);
        }
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

  // Builds every listed shape ahead of traffic.
  void warm_up(std::span<const ShapeKey> shapes, const Builder& build) {
    for (const auto& key : shapes) get_or_build(key, build);
  }

  bool contains(const ShapeKey& key) const {
    std::lock_guard lock(mu_);
    return plans_.count(key) != 0;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return plans_.size();
  }

  PlanCacheStats stats() const {
    return {hits_.load(), misses_.load(), builds_.load(), failures_.load()};
  }

 private:
  mutable std::mutex mu_;
  std::map<ShapeKey, std::shared_future<Plan>> plans_;
  std::atomic<std::size_t> hits_{0}, misses_{0}, builds_{0}, failures_{0};
};

}  // namespace medlite
