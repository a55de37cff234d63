// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <mutex>
#include <set>
#include <string_view>
#include <vector>

#include "medlite/core/error.hpp"

namespace medlite {

struct GenRequest {
  std::size_t id = 0;
  double arrival = 0.0;  // seconds
  std::size_t output_tokens = 1;

  bool operator<(const GenRequest& o) const { return arrival != o.arrival ? arrival < o.arrival : id < o.id; }
};

// Many-producer request queue, served in (arrival, id) order.
class RequestQueue {
 public:
  void push(const GenRequest& r) {
    if (r.output_tokens == 0) throw DomainError("a request must generate at least one token");
    std::lock_guard lock(mu_);
    pending_.insert(r);
  }

  // Removes up to `n` requests that have arrived by `now`.
  std::vector<GenRequest> pop_arrived(double now, std::size_t n) {
    std::lock_guard lock(mu_);
    std::vector<GenRequest> out;
    while (out.size() < n && !pending_.empty() && pending_.begin()->arrival <= now) {
      out.push_back(*pending_.begin());
      pending_.erase(pending_.begin());
    }
    return out;
  }

  // Arrival time of the earliest request, or a negative value when empty.
  double next_arrival() const {
    std::lock_guard lock(mu_);
    return pending_.empty() ? -1.0 : pending_.begin()->arrival;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return pending_.size();
  }

 private:
  mutable std::mutex mu_;
  std::multiset<GenRequest> pending_;
};

enum class BatchPolicy { kContinuous, kStatic };

constexpr std::string_view to_string(BatchPolicy p) noexcept {
  return p == BatchPolicy::kContinuous ? "continuous" : "static";
}

struct BatchStep {
  std::vector<std::size_t> batch;     // ids that produced a token this tick
  std::vector<std::size_t> finished;  // ids that completed this tick
};

// One token-generation tick at a time. Continuous: free slots are refilled
// from the queue every tick. Static: a new batch forms only once the
// previous one has fully drained. Owned by a single scheduling thread.
class BatchScheduler {
 public:
  BatchScheduler(std::size_t capacity, BatchPolicy policy) : capacity_(capacity), policy_(policy) {
    if (capacity == 0) throw DomainError("batch capacity must be at least 1");
  }

  BatchStep step(RequestQueue& queue, double now) {
    if (policy_ == BatchPolicy::kContinuous || active_.empty()) {
      for (const auto& r : queue.pop_arrived(now, capacity_ - active_.size())) active_.push_back({r.id, r.output_tokens});
    }
    BatchStep out;
    for (auto& a : active_) {
      out.batch.push_back(a.id);
      if (--a.remaining == 0) out.finished.push_back(a.id);
    }
    std::erase_if(active_, [](const Active& a) { return a.remaining == 0; });
    return out;
  }

  std::size_t active() const noexcept { return active_.size(); }

 private:
  struct Active {
    std::size_t id;
    std::size_t remaining;
  };
  std::size_t capacity_;
  BatchPolicy policy_;
  std::vector<Active> active_;
};

struct TickCostModel {
  double base = 2e-3;      // seconds per tick
  double per_seq = 5e-4;   // seconds per active sequence
};

struct BatchSimResult {
  double makespan = 0.0;
  std::size_t ticks = 0;
  std::vector<double> completion;          // by request id
  std::vector<std::size_t> completion_tick;  // 1-based tick index, by request id
  std::vector<double> latency;             // completion - arrival, by request id
};

// Runs a scheduler to completion on synthetic time. Request ids must be
// 0..n-1.
inline BatchSimResult simulate_batching(const std::vector<GenRequest>& requests, std::size_t capacity,
                                        BatchPolicy policy, const TickCostModel& cost = {}) {
  const std::size_t n = requests.size();
  RequestQueue queue;
  std::vector<bool> seen(n, false);
  for (const auto& r : requests) {
    if (r.id >= n || seen[r.id]) throw DomainError("request ids must be unique and in 0..n-1");
    seen[r.id] = true;
    queue.push(r);
  }
  BatchScheduler sched(capacity, policy);
  BatchSimResult res;
  res.completion.assign(n, 0.0);
  res.completion_tick.assign(n, 0);
  res.latency.assign(n, 0.0);
  double now = 0.0;
  std::size_t done = 0;
  while (done < n) {
    if (sched.active() == 0) now = std::max(now, queue.next_arrival());
    const auto step = sched.step(queue, now);
    if (step.batch.empty()) continue;
    now += cost.base + cost.per_seq * static_cast<double>(step.batch.size());
    ++res.ticks;
    for (auto id : step.finished) {
      res.completion[id] = now;
      res.completion_tick[id] = res.ticks;
      ++done;
    }
  }
  res.makespan = now;
  for (const auto& r : requests) res.latency[r.id] = res.completion[r.id] - r.arrival;
  return res;
}

}  // namespace medlite
