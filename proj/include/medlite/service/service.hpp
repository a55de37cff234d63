// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "json.hpp"
#include "medlite/cache/two_level_cache.hpp"
#include "medlite/query/classifier.hpp"
#include "medlite/query/prompt.hpp"
#include "medlite/runtime/deployment.hpp"
#include "medlite/runtime/engine_select.hpp"
#include "medlite/runtime/plan_cache.hpp"
#include "medlite/service/config.hpp"
#include "medlite/service/engines.hpp"

namespace medlite {

// Carries the HTTP status the failure maps to.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& msg) : Error(msg), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct QueryResponse {
  std::string answer;
  MedicalCategory category = kFallbackCategory;
  std::string cache;  // "memory", "disk" or "miss"
  double latency_ms = 0.0;
  std::string engine_id;
  DeploymentMode mode = DeploymentMode::kMerged;
};

inline nlohmann::json to_json(const QueryResponse& r) {
  return {{"answer", r.answer},       {"category", to_string(r.category)}, {"cache", r.cache},
          {"latency_ms", r.latency_ms}, {"engine", r.engine_id},           {"mode", to_string(r.mode)}};
}

struct DeploymentChoice {
  std::string engine_id;
  DeploymentMode mode = DeploymentMode::kMerged;
  ModeCandidate adapter;
  ModeCandidate merged;
};

// P: selected engine throughput relative to the best feasible engine,
// reduced by the adapter overhead in adapter mode. F: configured fit per
// mode. C: resident memory fraction, with adapter weights added in adapter
// mode.
inline DeploymentChoice choose_deployment(const ServiceConfig& cfg) {
  std::vector<EngineProfile> profiles;
  for (const auto& e : cfg.engines) profiles.push_back(e.profile);
  DeploymentChoice out;
  out.engine_id = select_engine(profiles, cfg.hardware, cfg.workload, cfg.score);
  double best_tp = 0.0, chosen_tp = 0.0, chosen_mem = 0.0;
  for (const auto& p : profiles) {
    if (!engine_fits(p, cfg.hardware)) continue;
    const auto est = estimate_engine(p, cfg.hardware, cfg.workload);
    best_tp = std::max(best_tp, est.throughput);
    if (p.id == out.engine_id) {
      chosen_tp = est.throughput;
      chosen_mem = p.memory_bytes;
    }
  }
  const double p_merged = best_tp > 0 ? chosen_tp / best_tp : 0.0;
  const double mem = cfg.hardware.accelerator_memory;
  out.merged = {DeploymentMode::kMerged, p_merged, cfg.decision.merged_fit, chosen_mem / mem};
  out.adapter = {DeploymentMode::kAdapter, p_merged * (1.0 - cfg.decision.adapter_overhead), cfg.decision.adapter_fit,
                 (chosen_mem + cfg.decision.adapter_memory_bytes) / mem};
  out.mode = decide_mode(out.adapter, out.merged, cfg.decision.weights);
  return out;
}

// classify -> prompt -> cache lookup -> engine -> cache insert. Safe for
// concurrent calls: the cache is internally synchronized and everything
// else is immutable or atomic.
class MedService {
 public:
  MedService(ServiceConfig cfg, std::shared_ptr<Clock> clock,
             std::unique_ptr<TextEngine> engine_override = nullptr)
      : cfg_(std::move(cfg)),
        clock_(std::move(clock)),
        lexicon_(load_lexicon(cfg_.lexicon_path)),
        templates_(load_templates(cfg_.templates_path)),
        cache_(cache_options(cfg_)) {
    for (MedicalCategory c : kAllCategories) {
      if (!templates_.suffixes.count(c)) {
        throw ConfigError("templates have no suffix for '" + std::string(to_string(c)) + "'");
      }
    }
    override_ = std::move(engine_override);
    apply_decision(cfg_);
    plans_.warm_up(cfg_.warmup_shapes, plan_builder());
  }

  // Re-evaluates engine selection and deployment mode.
  void reload_decision() {
    std::lock_guard reload(reload_mu_);
    apply_decision(decision_inputs());
  }

  // Takes engines, hardware, workload, score and decision settings from
  // `updated`; the pipeline settings (lexicon, cache, buckets) stay as loaded.
  void reload_decision(const ServiceConfig& updated) {
    updated.validate();
    std::lock_guard reload(reload_mu_);
    auto inputs = decision_inputs();
    inputs.engines = updated.engines;
    inputs.hardware = updated.hardware;
    inputs.workload = updated.workload;
    inputs.score = updated.score;
    inputs.decision = updated.decision;
    apply_decision(inputs);
  }

  QueryResponse handle_query(std::string_view text) {
    const double start = clock_->now_ms();
    requests_.fetch_add(1, std::memory_order_relaxed);
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
      bad_requests_.fetch_add(1, std::memory_order_relaxed);
      throw ServiceError(400, "query text must be non-empty");
    }
    const auto classified = classify(text, lexicon_);
    category_counts_[index_of(classified.category)].fetch_add(1, std::memory_order_relaxed);
    const auto prompt = build_prompt(classified, templates_);

    const auto [engine_id, mode] = current_choice();
    QueryResponse out;
    out.category = classified.category;
    out.engine_id = engine_id;
    out.mode = mode;

    if (auto hit = cache_.lookup(text)) {
      out.answer = hit->response;
      out.category = hit->category;
      out.cache = std::string(to_string(hit->tier));
      out.latency_ms = clock_->now_ms() - start;
      return out;
    }

    // Shape-bucketed plan for the prompt, built once per bucket.
    plans_.get_or_build(shape_bucket(std::max<std::size_t>(1, tokenize(prompt).size()), 1, cfg_.bucket_granularity),
                        plan_builder());
    std::string answer;
    try {
      answer = engine()->generate({prompt, classified.category});
    } catch (const RemoteEngineError& e) {
      engine_errors_.fetch_add(1, std::memory_order_relaxed);
      throw ServiceError(502, "engine '" + engine_id + "' failed (" + std::string(to_string(e.kind())) +
                                  "): " + e.what());
    } catch (const std::exception& e) {
      engine_errors_.fetch_add(1, std::memory_order_relaxed);
      throw ServiceError(502, "engine '" + engine_id + "' failed: " + e.what());
    }
    cache_.insert(text, answer, classified.category);
    out.answer = std::move(answer);
    out.cache = "miss";
    out.latency_ms = clock_->now_ms() - start;
    return out;
  }

  nlohmann::json metrics() const {
    const auto cs = cache_.stats();
    const auto ps = plans_.stats();
    nlohmann::json cats = nlohmann::json::object();
    for (MedicalCategory c : kAllCategories) cats[std::string(to_string(c))] = category_counts_[index_of(c)].load();
    const auto [engine_id, mode] = current_choice();
    return {{"requests", requests_.load()},
            {"bad_requests", bad_requests_.load()},
            {"engine_errors", engine_errors_.load()},
            {"cache",
             {{"memory_hits", cs.memory_hits},
              {"disk_hits", cs.disk_hits},
              {"misses", cs.misses},
              {"hit_rate", cs.hit_rate()},
              {"memory_entries", cs.memory_entries},
              {"disk_entries", cs.disk_entries},
              {"degraded", cs.degraded}}},
            {"categories", cats},
            {"plan_cache", {{"hits", ps.hits}, {"misses", ps.misses}, {"builds", ps.builds}}},
            {"engine", engine_id},
            {"mode", to_string(mode)}};
  }

  DeploymentChoice deployment() const {
    std::lock_guard lock(decision_mu_);
    return choice_;
  }

  const ServiceConfig& config() const noexcept { return cfg_; }
  TwoLevelCache& cache() noexcept { return cache_; }
  const PlanCache<std::string>& plans() const noexcept { return plans_; }

 private:
  static CacheOptions cache_options(const ServiceConfig& cfg) {
    CacheOptions o;
    o.memory_capacity = cfg.cache.memory_capacity;
    o.directory = cfg.cache.directory;
    o.similarity = cfg.cache.similarity;
    return o;
  }

  static PlanCache<std::string>::Builder plan_builder() {
    return [](const ShapeKey& k) { return "plan:" + std::to_string(k.seq_len) + "x" + std::to_string(k.batch); };
  }

  ServiceConfig decision_inputs() const {
    std::lock_guard lock(decision_mu_);
    return decision_cfg_;
  }

  void apply_decision(const ServiceConfig& inputs) {
    auto choice = choose_deployment(inputs);
    const auto it = std::find_if(inputs.engines.begin(), inputs.engines.end(),
                                 [&](const EngineConfig& e) { return e.profile.id == choice.engine_id; });
    std::shared_ptr<TextEngine> engine = override_ ? override_ : make_engine(*it, inputs.seed, clock_);
    std::lock_guard lock(decision_mu_);
    decision_cfg_ = inputs;
    choice_ = std::move(choice);
    engine_ = std::move(engine);
  }

  std::pair<std::string, DeploymentMode> current_choice() const {
    std::lock_guard lock(decision_mu_);
    return {choice_.engine_id, choice_.mode};
  }

  std::shared_ptr<TextEngine> engine() const {
    std::lock_guard lock(decision_mu_);
    return engine_;
  }

  ServiceConfig cfg_;
  std::shared_ptr<Clock> clock_;
  KeywordLexicon lexicon_;
  PromptTemplate templates_;
  TwoLevelCache cache_;
  PlanCache<std::string> plans_;

  std::mutex reload_mu_;
  mutable std::mutex decision_mu_;
  ServiceConfig decision_cfg_;
  DeploymentChoice choice_;
  std::shared_ptr<TextEngine> engine_;
  std::shared_ptr<TextEngine> override_;  // test double replacing the configured engine

  std::atomic<std::uint64_t> requests_{0}, bad_requests_{0}, engine_errors_{0};
  std::array<std::atomic<std::uint64_t>, kCategoryCount> category_counts_{};
};

}  // namespace medlite
