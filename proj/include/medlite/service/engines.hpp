// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "medlite/core/error.hpp"
#include "medlite/core/hash.hpp"
#include "medlite/core/random.hpp"
#include "medlite/query/category.hpp"
#include "medlite/service/config.hpp"

namespace medlite {

// Time source for latency accounting. The virtual clock only advances when
// something sleeps on it, which keeps benchmark output reproducible.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_ms() = 0;
  virtual void sleep_ms(double ms) = 0;
};

class SteadyClock final : public Clock {
 public:
  double now_ms() override {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
  }
  void sleep_ms(double ms) override {
    if (ms > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
  }
};

class VirtualClock final : public Clock {
 public:
  double now_ms() override {
    std::lock_guard lock(mu_);
    return now_;
  }
  void sleep_ms(double ms) override {
    std::lock_guard lock(mu_);
    if (ms > 0) now_ += ms;
  }
  void advance(double ms) { sleep_ms(ms); }

 private:
  std::mutex mu_;
  double now_ = 0.0;
};

struct GenerationRequest {
  std::string prompt;
  MedicalCategory category = kFallbackCategory;
};

class TextEngine {
 public:
  virtual ~TextEngine() = default;
  virtual std::string generate(const GenerationRequest& req) = 0;
};

// ---- mock engine ----

inline std::uint64_t mock_prompt_hash(std::string_view prompt, std::uint64_t seed) {
  return fnv1a64(prompt, kFnvOffset64 ^ mix64(seed));
}

// Deterministic answer text: category tag, prompt digest, and 10..200 filler
// words picked by hash so answer lengths vary like real outputs.
inline std::string mock_engine_generate(std::string_view prompt, MedicalCategory category, std::uint64_t seed) {
  static constexpr const char* kWords[] = {"assess", "monitor", "consult", "clinician", "evidence", "guideline",
                                           "review", "history", "risk", "benefit", "follow-up", "symptoms",
                                           "standard", "care", "patient", "safety"};
  const std::uint64_t h = mock_prompt_hash(prompt, seed);
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(h));
  std::string out = "[" + std::string(to_string(category)) + "] mock answer " + digest + ":";
  std::uint64_t state = h;
  const std::size_t words = 10 + static_cast<std::size_t>(h % 191);
  for (std::size_t i = 0; i < words; ++i) {
    state = mix64(state);
    out += ' ';
    out += kWords[state % 16];
  }
  return out;
}

// Seeded exponential delay with the given mean; zero mean means no delay.
inline double mock_engine_delay_ms(std::string_view prompt, std::uint64_t seed, double mean_ms) {
  if (mean_ms <= 0) return 0.0;
  Rng rng(mock_prompt_hash(prompt, seed) ^ 0x5bd1e995ULL);
  return rng.exponential(mean_ms);
}

class MockEngine final : public TextEngine {
 public:
  MockEngine(std::uint64_t seed, double mean_delay_ms, std::shared_ptr<Clock> clock)
      : seed_(seed), mean_delay_ms_(mean_delay_ms), clock_(std::move(clock)) {}

  std::string generate(const GenerationRequest& req) override {
    clock_->sleep_ms(mock_engine_delay_ms(req.prompt, seed_, mean_delay_ms_));
    return mock_engine_generate(req.prompt, req.category, seed_);
  }

 private:
  std::uint64_t seed_;
  double mean_delay_ms_;
  std::shared_ptr<Clock> clock_;
};

// ---- remote engine ----

enum class RemoteErrorKind { kTimeout, kHttpStatus, kMalformedBody, kConnection };

constexpr std::string_view to_string(RemoteErrorKind k) noexcept {
  switch (k) {
    case RemoteErrorKind::kTimeout: return "timeout";
    case RemoteErrorKind::kHttpStatus: return "http_status";
    case RemoteErrorKind::kMalformedBody: return "malformed_body";
    case RemoteErrorKind::kConnection: return "connection";
  }
  return "unknown";
}

class RemoteEngineError : public Error {
 public:
  RemoteEngineError(RemoteErrorKind kind, const std::string& msg, int status = 0)
      : Error(msg), kind_(kind), status_(status) {}
  RemoteErrorKind kind() const noexcept { return kind_; }
  int status() const noexcept { return status_; }

 private:
  RemoteErrorKind kind_;
  int status_;
};

inline std::string extract_chat_content(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw RemoteEngineError(RemoteErrorKind::kMalformedBody, "engine response is not JSON");
  }
  try {
    const auto& choice = doc.at("choices").at(0);
    if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
    return choice.at("text").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw RemoteEngineError(RemoteErrorKind::kMalformedBody, "engine response lacks choices[0].message.content");
  }
}

// OpenAI-style chat-completions client. Each attempt is bounded by the
// configured timeout; timeouts, connection failures and 5xx/429 get one
// retry after the backoff.
class RemoteEngine final : public TextEngine {
 public:
  explicit RemoteEngine(RemoteEndpoint endpoint) : ep_(std::move(endpoint)) {}

  std::string generate(const GenerationRequest& req) override {
    try {
      return attempt(req);
    } catch (const RemoteEngineError& e) {
      if (!retryable(e)) throw;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(ep_.retry_backoff_ms));
    return attempt(req);
  }

 private:
  static bool retryable(const RemoteEngineError& e) {
    switch (e.kind()) {
      case RemoteErrorKind::kTimeout:
      case RemoteErrorKind::kConnection: return true;
      case RemoteErrorKind::kHttpStatus: return e.status() >= 500 || e.status() == 429;
      case RemoteErrorKind::kMalformedBody: return false;
    }
    return false;
  }

  std::string attempt(const GenerationRequest& req) {
    httplib::Client cli(ep_.base_url);
    const auto timeout = std::chrono::milliseconds(ep_.timeout_ms);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    const nlohmann::json body = {{"model", ep_.model},
                                 {"messages", {{{"role", "user"}, {"content", req.prompt}}}},
                                 {"max_tokens", ep_.max_tokens},
                                 {"temperature", 0}};
    const auto start = std::chrono::steady_clock::now();
    auto res = cli.Post(ep_.path, body.dump(), "application/json");
    if (!res) {
      const auto elapsed = std::chrono::steady_clock::now() - start;
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || elapsed >= timeout) {
        throw RemoteEngineError(RemoteErrorKind::kTimeout,
                                "engine did not answer within " + std::to_string(ep_.timeout_ms) + " ms");
      }
      throw RemoteEngineError(RemoteErrorKind::kConnection, "engine request failed: " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300) {
      throw RemoteEngineError(RemoteErrorKind::kHttpStatus, "engine returned HTTP " + std::to_string(res->status),
                              res->status);
    }
    return extract_chat_content(res->body);
  }

  RemoteEndpoint ep_;
};

inline std::unique_ptr<TextEngine> make_engine(const EngineConfig& cfg, std::uint64_t seed,
                                               std::shared_ptr<Clock> clock) {
  if (cfg.kind == EngineKind::kRemote) return std::make_unique<RemoteEngine>(cfg.remote);
  return std::make_unique<MockEngine>(seed, cfg.mock_mean_delay_ms, std::move(clock));
}

}  // namespace medlite
