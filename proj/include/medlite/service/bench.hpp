// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <system_error>
#include <unistd.h>
#include <vector>

#include "medlite/core/random.hpp"
#include "medlite/runtime/attention.hpp"
#include "medlite/runtime/batching.hpp"
#include "medlite/service/service.hpp"

namespace medlite {

struct BenchSpec {
  std::size_t requests = 200;
  std::uint64_t seed = 42;
  double duplicate_fraction = 0.3;
  double mock_delay_ms = 50.0;
  std::size_t batch_capacity = 8;
  std::size_t attention_tile = 16;

  void validate() const {
    if (requests == 0) throw ConfigError("bench needs at least one request");
    if (!(duplicate_fraction >= 0 && duplicate_fraction <= 1)) throw ConfigError("duplicate fraction must be in [0, 1]");
    if (mock_delay_ms < 0) throw ConfigError("mock delay must be non-negative");
    if (batch_capacity == 0 || attention_tile == 0) throw ConfigError("batch capacity and tile must be positive");
  }
};

struct BenchResult {
  BenchSpec spec;
  std::string engine_id;
  DeploymentMode mode = DeploymentMode::kMerged;
  std::vector<double> latency_ms;
  std::vector<bool> hit;
  std::size_t answer_tokens = 0;
  double total_ms = 0.0;
  std::size_t memory_hits = 0, disk_hits = 0;
  std::size_t plan_builds = 0, plan_hits = 0;
  double continuous_makespan = 0.0, static_makespan = 0.0;
  double attention_max_diff = 0.0;
  std::size_t naive_scores = 0, tiled_scores = 0;
};

// Nearest-rank percentile.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

// Seeded query stream over lexicon keywords. Each request repeats an earlier
// query with probability duplicate_fraction.
inline std::vector<std::string> bench_workload(const KeywordLexicon& lexicon, const BenchSpec& spec) {
  static constexpr const char* kPatterns[] = {"what is the %s for %s", "how do i handle %s with %s",
                                              "is %s related to %s", "%s and %s in older adults",
                                              "guidance on %s after %s"};
  std::vector<std::string> words;
  for (MedicalCategory c : kAllCategories) {
    for (const auto& w : lexicon.keywords(c)) words.push_back(w);
  }
  Rng rng(spec.seed);
  std::vector<std::string> out;
  char buf[256];
  for (std::size_t i = 0; i < spec.requests; ++i) {
    if (!out.empty() && rng.uniform() < spec.duplicate_fraction) {
      out.push_back(out[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(out.size()) - 1))]);
      continue;
    }
    const auto* pat = kPatterns[rng.uniform_int(0, 4)];
    const auto& a = words[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(words.size()) - 1))];
    const auto& b = words[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(words.size()) - 1))];
    std::snprintf(buf, sizeof buf, pat, a.c_str(), b.c_str());
    out.emplace_back(buf);
  }
  return out;
}

inline std::size_t count_words(const std::string& s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char ch : s) {
    const bool space = ch == ' ' || ch == '\n' || ch == '\t';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

// Replays the workload through a service on a virtual clock with the mock
// engine and a throwaway cache directory, then runs the batching and
// attention comparisons on seeded synthetic data.
inline BenchResult run_bench(ServiceConfig cfg, const BenchSpec& spec) {
  spec.validate();
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("medlite-bench-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  cfg.cache.directory = dir.string();
  struct Cleanup {
    std::filesystem::path p;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove_all(p, ec);
    }
  } cleanup{dir};

  BenchResult r;
  r.spec = spec;
  std::vector<std::size_t> gen_lengths;
  {
    auto clock = std::make_shared<VirtualClock>();
    MedService service(cfg, clock, std::make_unique<MockEngine>(spec.seed, spec.mock_delay_ms, clock));
    const auto d = service.deployment();
    r.engine_id = d.engine_id;
    r.mode = d.mode;
    const double start = clock->now_ms();
    for (const auto& q : bench_workload(load_lexicon(cfg.lexicon_path), spec)) {
      const auto resp = service.handle_query(q);
      r.latency_ms.push_back(resp.latency_ms);
      r.hit.push_back(resp.cache != "miss");
      const auto words = count_words(resp.answer);
      r.answer_tokens += words;
      if (resp.cache == "miss") gen_lengths.push_back(words);
    }
    r.total_ms = clock->now_ms() - start;
    const auto cs = service.cache().stats();
    r.memory_hits = cs.memory_hits;
    r.disk_hits = cs.disk_hits;
    r.plan_builds = service.plans().stats().builds;
    r.plan_hits = service.plans().stats().hits;
  }

  std::vector<GenRequest> reqs;
  for (std::size_t i = 0; i < gen_lengths.size(); ++i) reqs.push_back({i, 0.0, gen_lengths[i]});
  if (!reqs.empty()) {
    r.continuous_makespan = simulate_batching(reqs, spec.batch_capacity, BatchPolicy::kContinuous).makespan;
    r.static_makespan = simulate_batching(reqs, spec.batch_capacity, BatchPolicy::kStatic).makespan;
  }

  Rng rng(spec.seed ^ 0xa77e5ULL);
  const auto q = Matrix::random_normal(64, 32, rng);
  const auto k = Matrix::random_normal(256, 32, rng);
  const auto v = Matrix::random_normal(256, 32, rng);
  AttentionStats ns, ts;
  const auto ref = naive_attention(q, k, v, &ns);
  const auto tiled = tiled_attention(q, k, v, spec.attention_tile, &ts);
  for (std::size_t i = 0; i < ref.rows(); ++i) {
    for (std::size_t j = 0; j < ref.cols(); ++j) r.attention_max_diff = std::max(r.attention_max_diff, std::abs(ref(i, j) - tiled(i, j)));
  }
  r.naive_scores = ns.score_buffer_elements;
  r.tiled_scores = ts.score_buffer_elements;
  return r;
}

inline std::string format_bench_report(const BenchResult& r) {
  std::vector<double> cached, uncached;
  std::size_t hits_after_first = 0;
  for (std::size_t i = 0; i < r.latency_ms.size(); ++i) {
    (r.hit[i] ? cached : uncached).push_back(r.latency_ms[i]);
    if (i > 0 && r.hit[i]) ++hits_after_first;
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  const double n = static_cast<double>(r.latency_ms.size());
  const double secs = r.total_ms / 1000.0;
  std::string out;
  char line[256];
  auto add = [&](const char* fmt, auto... args) {
    std::snprintf(line, sizeof line, fmt, args...);
    out += line;
    out += '\n';
  };
  out += "medlite bench report\n";
  add("requests: %zu", r.spec.requests);
  add("seed: %llu", static_cast<unsigned long long>(r.spec.seed));
  add("duplicate_fraction: %.3f", r.spec.duplicate_fraction);
  add("mock_mean_delay_ms: %.3f", r.spec.mock_delay_ms);
  add("engine: %s", r.engine_id.c_str());
  add("mode: %s", std::string(to_string(r.mode)).c_str());
  add("latency_p50_ms: %.3f", percentile(r.latency_ms, 0.50));
  add("latency_p95_ms: %.3f", percentile(r.latency_ms, 0.95));
  add("latency_mean_ms: %.3f", mean(r.latency_ms));
  add("latency_mean_cached_ms: %.3f", mean(cached));
  add("latency_mean_uncached_ms: %.3f", mean(uncached));
  if (!uncached.empty() && mean(uncached) > 0) {
    add("cached_to_uncached_ratio: %.4f", mean(cached) / mean(uncached));
  } else {
    out += "cached_to_uncached_ratio: n/a\n";
  }
  if (secs > 0) {
    add("throughput_req_per_s: %.3f", n / secs);
    add("throughput_tok_per_s: %.3f", static_cast<double>(r.answer_tokens) / secs);
  } else {
    out += "throughput_req_per_s: n/a\n";
    out += "throughput_tok_per_s: n/a\n";
  }
  add("cache_hit_rate: %.4f", static_cast<double>(cached.size()) / n);
  add("cache_hit_rate_after_first: %.4f",
      r.latency_ms.size() > 1 ? static_cast<double>(hits_after_first) / (n - 1) : 0.0);
  add("cache_memory_hits: %zu", r.memory_hits);
  add("cache_disk_hits: %zu", r.disk_hits);
  add("plan_cache_builds: %zu", r.plan_builds);
  add("plan_cache_hits: %zu", r.plan_hits);
  add("batching_capacity: %zu", r.spec.batch_capacity);
  add("batching_continuous_makespan_s: %.6f", r.continuous_makespan);
  add("batching_static_makespan_s: %.6f", r.static_makespan);
  if (r.continuous_makespan > 0) {
    add("batching_static_over_continuous: %.4f", r.static_makespan / r.continuous_makespan);
  } else {
    out += "batching_static_over_continuous: n/a\n";
  }
  out += "attention_shape: 64x256x32\n";
  add("attention_tile: %zu", r.spec.attention_tile);
  add("attention_max_abs_diff: %.3e", r.attention_max_diff);
  add("attention_naive_score_elements: %zu", r.naive_scores);
  add("attention_tiled_score_elements: %zu", r.tiled_scores);
  return out;
}

}  // namespace medlite
