// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "medlite/adapters/lora.hpp"
#include "medlite/cache/similarity.hpp"
#include "medlite/core/error.hpp"
#include "medlite/distill/schedule.hpp"
#include "medlite/query/classifier.hpp"
#include "medlite/query/prompt.hpp"
#include "medlite/quant/policy.hpp"
#include "medlite/runtime/deployment.hpp"
#include "medlite/runtime/engine_select.hpp"
#include "medlite/runtime/plan_cache.hpp"

namespace medlite {

inline constexpr const char* kConfigSchema = "medlite.config/1";

struct CacheSettings {
  std::size_t memory_capacity = 1024;
  SimilarityConfig similarity;
  std::string directory;  // empty: memory only
};

struct RemoteEndpoint {
  std::string base_url;  // scheme://host:port
  std::string path = "/v1/chat/completions";
  std::string model;
  int timeout_ms = 10000;
  int retry_backoff_ms = 200;
  int max_tokens = 512;
};

enum class EngineKind { kMock, kRemote };

struct EngineConfig {
  EngineProfile profile;
  EngineKind kind = EngineKind::kMock;
  double mock_mean_delay_ms = 0.0;
  RemoteEndpoint remote;
};

// Inputs to the startup deployment-mode decision.
struct DecisionSettings {
  DecisionWeights weights;
  double adapter_overhead = 0.1;       // fractional throughput loss of runtime adapters
  double adapter_memory_bytes = 2e8;   // extra resident bytes for adapter weights
  double adapter_fit = 0.9;
  double merged_fit = 0.7;
};

struct TrainingDefaults {
  double lr_min = kDefaultEtaMin;
  double lr_max = kDefaultEtaMax;
  std::size_t batch_size = 64;
  std::size_t epochs = 3;
};

struct ServerSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t threads = 8;
};

struct ServiceConfig {
  std::string lexicon_path;
  std::string templates_path;
  CacheSettings cache;
  PrecisionPolicy quantization;
  std::vector<EngineConfig> engines;
  HardwareEnv hardware{16e9, 64e9, 8, 2e9};
  WorkloadProfile workload;
  ScoreCoefficients score;
  DecisionSettings decision;
  std::size_t lora_rank = kDefaultLoraRank;
  double lora_alpha = kDefaultLoraAlpha;
  TrainingDefaults training;
  ServerSettings server;
  std::size_t bucket_granularity = 32;
  std::vector<ShapeKey> warmup_shapes;
  std::uint64_t seed = 42;

  void validate() const;
};

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ConfigError("config: missing required key '" + where + (where.empty() ? "" : ".") + key + "'");
  }
  return obj.at(key);
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: key '") + key + "' has the wrong type");
  }
}

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

inline EngineConfig engine_from_json(const nlohmann::json& e) {
  EngineConfig cfg;
  cfg.profile.id = require_key(e, "id", "engines[]").get<std::string>();
  const auto where = "engines[" + cfg.profile.id + "]";
  const auto kind = get_or<std::string>(e, "kind", "mock");
  if (kind == "mock") {
    cfg.kind = EngineKind::kMock;
  } else if (kind == "remote") {
    cfg.kind = EngineKind::kRemote;
  } else {
    throw ConfigError("config: " + where + ".kind must be 'mock' or 'remote'");
  }
  cfg.profile.base_rate = require_key(e, "base_rate", where).get<double>();
  cfg.profile.overhead_s = get_or(e, "overhead_s", 0.0);
  cfg.profile.memory_bytes = require_key(e, "memory_bytes", where).get<double>();
  cfg.profile.supported_bits = get_or(e, "supported_bits", std::vector<int>{4, 8, 16});
  cfg.mock_mean_delay_ms = get_or(e, "mean_delay_ms", 0.0);
  if (cfg.mock_mean_delay_ms < 0) throw ConfigError("config: " + where + ".mean_delay_ms must be >= 0");
  if (cfg.kind == EngineKind::kRemote) {
    const auto& r = require_key(e, "endpoint", where);
    cfg.remote.base_url = require_key(r, "url", where + ".endpoint").get<std::string>();
    cfg.remote.path = get_or<std::string>(r, "path", cfg.remote.path);
    cfg.remote.model = get_or<std::string>(r, "model", "");
    cfg.remote.timeout_ms = get_or(r, "timeout_ms", cfg.remote.timeout_ms);
    cfg.remote.retry_backoff_ms = get_or(r, "retry_backoff_ms", cfg.remote.retry_backoff_ms);
    cfg.remote.max_tokens = get_or(r, "max_tokens", cfg.remote.max_tokens);
    if (cfg.remote.timeout_ms <= 0) throw ConfigError("config: " + where + ".endpoint.timeout_ms must be positive");
  }
  cfg.profile.validate();
  return cfg;
}

}  // namespace detail

inline void ServiceConfig::validate() const {
  if (engines.empty()) throw ConfigError("config: 'engines' must list at least one engine");
  for (const auto& e : engines) e.profile.validate();
  cache.similarity.validate();
  if (cache.memory_capacity == 0) throw ConfigError("config: cache.memory_capacity must be positive");
  quantization.validate();
  hardware.validate();
  workload.validate();
  decision.weights.validate();
  if (lora_rank == 0 || !(lora_alpha > 0)) throw ConfigError("config: lora rank and alpha must be positive");
  if (!(training.lr_min > 0) || training.lr_min > training.lr_max) {
    throw ConfigError("config: training learning-rate range is invalid");
  }
  if (bucket_granularity == 0) throw ConfigError("config: bucket_granularity must be positive");
  if (server.port < 0 || server.port > 65535) throw ConfigError("config: server.port out of range");
}

// Relative paths inside the document resolve against `base_dir`.
inline ServiceConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  using detail::get_or;
  using detail::require_key;
  const auto schema = require_key(doc, "schema", "").get<std::string>();
  if (schema != kConfigSchema) throw ConfigError("config: unsupported schema '" + schema + "'");

  ServiceConfig c;
  try {
    c.lexicon_path = detail::resolve_path(require_key(doc, "lexicon", "").get<std::string>(), base_dir);
    c.templates_path = detail::resolve_path(require_key(doc, "templates", "").get<std::string>(), base_dir);
    for (const auto& e : require_key(doc, "engines", "")) c.engines.push_back(detail::engine_from_json(e));

    if (doc.contains("cache")) {
      const auto& k = doc["cache"];
      c.cache.memory_capacity = get_or(k, "memory_capacity", c.cache.memory_capacity);
      c.cache.similarity.alpha = get_or(k, "alpha", c.cache.similarity.alpha);
      c.cache.similarity.threshold = get_or(k, "threshold", c.cache.similarity.threshold);
      c.cache.directory = detail::resolve_path(get_or<std::string>(k, "directory", ""), base_dir);
    }
    if (doc.contains("quantization")) c.quantization = policy_from_json(doc["quantization"]);
    if (doc.contains("hardware")) {
      const auto& h = doc["hardware"];
      c.hardware.accelerator_memory = get_or(h, "accelerator_memory", c.hardware.accelerator_memory);
      c.hardware.host_memory = get_or(h, "host_memory", c.hardware.host_memory);
      c.hardware.cores = get_or(h, "cores", c.hardware.cores);
      c.hardware.disk_bandwidth = get_or(h, "disk_bandwidth", c.hardware.disk_bandwidth);
    }
    if (doc.contains("workload")) {
      const auto& w = doc["workload"];
      c.workload.request_rate = get_or(w, "request_rate", c.workload.request_rate);
      c.workload.mean_prompt_tokens = get_or(w, "mean_prompt_tokens", c.workload.mean_prompt_tokens);
      c.workload.mean_output_tokens = get_or(w, "mean_output_tokens", c.workload.mean_output_tokens);
      if (w.contains("category_mix")) {
        for (const auto& [name, p] : w["category_mix"].items()) {
          auto cat = category_from_string(name);
          if (!cat) throw ConfigError("config: workload.category_mix has unknown category '" + name + "'");
          c.workload.category_mix[index_of(*cat)] = p.get<double>();
        }
      }
    }
    if (doc.contains("score")) {
      const auto& s = doc["score"];
      c.score.a = get_or(s, "a", c.score.a);
      c.score.b = get_or(s, "b", c.score.b);
      c.score.c = get_or(s, "c", c.score.c);
    }
    if (doc.contains("decision")) {
      const auto& d = doc["decision"];
      if (d.contains("weights")) {
        c.decision.weights.w1 = get_or(d["weights"], "w1", 1.0);
        c.decision.weights.w2 = get_or(d["weights"], "w2", 1.0);
        c.decision.weights.w3 = get_or(d["weights"], "w3", 1.0);
      }
      c.decision.adapter_overhead = get_or(d, "adapter_overhead", c.decision.adapter_overhead);
      c.decision.adapter_memory_bytes = get_or(d, "adapter_memory_bytes", c.decision.adapter_memory_bytes);
      c.decision.adapter_fit = get_or(d, "adapter_fit", c.decision.adapter_fit);
      c.decision.merged_fit = get_or(d, "merged_fit", c.decision.merged_fit);
    }
    if (doc.contains("lora")) {
      c.lora_rank = get_or(doc["lora"], "rank", c.lora_rank);
      c.lora_alpha = get_or(doc["lora"], "alpha", c.lora_alpha);
    }
    if (doc.contains("training")) {
      const auto& t = doc["training"];
      c.training.lr_min = get_or(t, "lr_min", c.training.lr_min);
      c.training.lr_max = get_or(t, "lr_max", c.training.lr_max);
      c.training.batch_size = get_or(t, "batch_size", c.training.batch_size);
      c.training.epochs = get_or(t, "epochs", c.training.epochs);
    }
    if (doc.contains("server")) {
      const auto& s = doc["server"];
      c.server.host = get_or<std::string>(s, "host", c.server.host);
      c.server.port = get_or(s, "port", c.server.port);
      c.server.threads = get_or(s, "threads", c.server.threads);
    }
    c.bucket_granularity = get_or(doc, "bucket_granularity", c.bucket_granularity);
    if (doc.contains("warmup_shapes")) {
      for (const auto& s : doc["warmup_shapes"]) {
        c.warmup_shapes.push_back(shape_bucket(s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(),
                                               c.bucket_granularity));
      }
    }
    c.seed = get_or(doc, "seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ServiceConfig load_config(const std::string& path) {
  const auto doc = detail::read_json_file(path, "config");
  return config_from_json(doc, std::filesystem::absolute(path).parent_path());
}

}  // namespace medlite
