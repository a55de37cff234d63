// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <list>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "medlite/cache/disk_log.hpp"
#include "medlite/cache/similarity.hpp"
#include "medlite/core/error.hpp"
#include "medlite/query/category.hpp"

namespace medlite {

struct CacheEntry {
  std::string query;
  TokenSet tokens;
  Embedding embedding{};
  std::string response;
  MedicalCategory category = kFallbackCategory;
  std::int64_t timestamp_ms = 0;
  std::uint64_t hit_count = 0;
};

enum class CacheTier { kMemory, kDisk };

constexpr std::string_view to_string(CacheTier t) noexcept { return t == CacheTier::kMemory ? "memory" : "disk"; }

struct CacheHit {
  std::string response;
  MedicalCategory category = kFallbackCategory;
  CacheTier tier = CacheTier::kMemory;
  double similarity = 0.0;
  std::string matched_query;
};

struct CacheStats {
  std::uint64_t memory_hits = 0;
  std::uint64_t disk_hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t inserts = 0;
  std::uint64_t disk_records = 0;  // records in the log, including superseded ones
  std::size_t memory_entries = 0;
  std::size_t disk_entries = 0;
  bool degraded = false;

  double hit_rate() const noexcept {
    const auto total = memory_hits + disk_hits + misses;
    return total == 0 ? 0.0 : static_cast<double>(memory_hits + disk_hits) / static_cast<double>(total);
  }
};

struct CacheOptions {
  std::size_t memory_capacity = 1024;
  std::filesystem::path directory;  // empty: memory tier only
  SimilarityConfig similarity;
  std::function<std::int64_t()> clock_ms;  // defaults to the system clock
  std::function<void(const std::string&)> on_warning;
};

// Memory LRU in front of an append-only disk log. Every insert is written to
// the log by a background thread; the memory tier holds the hot subset.
// Lookups scan under a shared lock and take the exclusive lock only to
// promote. Inserts are serialized, and log order matches insert order.
class TwoLevelCache {
 public:
  static constexpr const char* kLogName = "cache.log";

  explicit TwoLevelCache(CacheOptions opt) : opt_(std::move(opt)) {
    opt_.similarity.validate();
    if (opt_.memory_capacity == 0) throw ConfigError("cache memory capacity must be positive");
    if (!opt_.clock_ms) {
      opt_.clock_ms = [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
      };
    }
    if (!opt_.directory.empty()) open_disk();
    if (disk_enabled_) writer_ = std::thread([this] { writer_loop(); });
  }

  ~TwoLevelCache() {
    {
      std::lock_guard lock(queue_mu_);
      stop_ = true;
    }
    queue_cv_.notify_all();
    if (writer_.joinable()) writer_.join();
  }

  TwoLevelCache(const TwoLevelCache&) = delete;
  TwoLevelCache& operator=(const TwoLevelCache&) = delete;

  std::optional<CacheHit> lookup(std::string_view query) {
    const std::string key(query);
    const auto tokens = token_set(query);
    const auto emb = embed(query);

    Candidate c;
    {
      std::shared_lock lock(mu_);
      c = find_candidate(key, tokens, emb);
    }
    if (!c.found) {
      misses_.fetch_add(1, std::memory_order_relaxed);
      return std::nullopt;
    }
    if (c.tier == CacheTier::kDisk && !c.response) {
      try {
        c.response = read_record_response(log_path_, c.offset);
      } catch (const Error& e) {
        enter_degraded(e.what());
        misses_.fetch_add(1, std::memory_order_relaxed);
        return std::nullopt;
      }
    }

    CacheHit hit{*c.response, c.category, c.tier, c.similarity, c.key};
    {
      std::unique_lock lock(mu_);
      promote(c, hit);
    }
    (c.tier == CacheTier::kMemory ? memory_hits_ : disk_hits_).fetch_add(1, std::memory_order_relaxed);
    return hit;
  }

  // Returns once the memory tier holds the entry; the log append happens in
  // the background. Re-inserting an identical (query, response) pair writes
  // nothing new.
  void insert(std::string_view query, std::string_view response, MedicalCategory category) {
    CacheEntry e{std::string(query), token_set(query), embed(query), std::string(response), category,
                 opt_.clock_ms(), 0};
    std::unique_lock lock(mu_);
    if (is_duplicate(e.query, e.response, category)) {
      put_memory(e);
      return;
    }
    inserts_.fetch_add(1, std::memory_order_relaxed);
    if (disk_enabled_) {
      DiskEntry d{e.tokens, e.embedding, category, e.timestamp_ms, ++seq_, 0, e.response};
      disk_[e.query] = d;
      const auto bytes = encode_record({e.query, e.response, category, e.embedding, e.timestamp_ms});
      {
        std::lock_guard q(queue_mu_);
        queue_.push_back({e.query, d.seq, bytes});
      }
      queue_cv_.notify_one();
    }
    put_memory(e);
  }

  // Blocks until every acknowledged insert is on disk.
  void flush() {
    std::unique_lock lock(queue_mu_);
    flushed_cv_.wait(lock, [this] { return (queue_.empty() && !writing_) || !writer_running(); });
  }

  CacheStats stats() const {
    CacheStats s;
    s.memory_hits = memory_hits_.load();
    s.disk_hits = disk_hits_.load();
    s.misses = misses_.load();
    s.inserts = inserts_.load();
    s.disk_records = disk_records_.load();
    s.degraded = degraded_.load();
    std::shared_lock lock(mu_);
    s.memory_entries = lru_.size();
    s.disk_entries = disk_.size();
    return s;
  }

  bool degraded() const noexcept { return degraded_.load(); }

  std::vector<std::string> warnings() const {
    std::lock_guard lock(warn_mu_);
    return warnings_;
  }

  std::uint64_t hit_count(std::string_view query) const {
    std::shared_lock lock(mu_);
    auto it = hit_counts_.find(std::string(query));
    return it == hit_counts_.end() ? 0 : it->second;
  }

  bool in_memory(std::string_view query) const {
    std::shared_lock lock(mu_);
    return mem_index_.count(std::string(query)) != 0;
  }

  const std::filesystem::path& log_path() const noexcept { return log_path_; }

 private:
  struct DiskEntry {
    TokenSet tokens;
    Embedding embedding{};
    MedicalCategory category = kFallbackCategory;
    std::int64_t timestamp_ms = 0;
    std::uint64_t seq = 0;
    std::uint64_t offset = 0;
    std::optional<std::string> pending;  // response not yet on disk
  };

  struct Candidate {
    bool found = false;
    std::string key;
    CacheTier tier = CacheTier::kMemory;
    double similarity = 0.0;
    std::optional<std::string> response;
    MedicalCategory category = kFallbackCategory;
    std::uint64_t offset = 0;
    std::uint64_t seq = 0;
  };

  struct PendingWrite {
    std::string query;
    std::uint64_t seq;
    std::vector<std::uint8_t> bytes;
  };

  Candidate from_memory(const CacheEntry& e, double sim) const {
    return {true, e.query, CacheTier::kMemory, sim, e.response, e.category, 0, 0};
  }

  Candidate from_disk(const std::string& key, const DiskEntry& d, double sim) const {
    return {true, key, CacheTier::kDisk, sim, d.pending, d.category, d.offset, d.seq};
  }

  // Exact text in memory, then on disk; otherwise the best semantic match at
  // or above the threshold, memory before disk. Memory ties go to the most
  // recently used entry, disk ties to the oldest record.
  Candidate find_candidate(const std::string& key, const TokenSet& tokens, const Embedding& emb) const {
    if (auto it = mem_index_.find(key); it != mem_index_.end()) return from_memory(*it->second, 1.0);
    if (auto it = disk_.find(key); it != disk_.end()) return from_disk(key, it->second, 1.0);

    const double tau = opt_.similarity.threshold;
    const CacheEntry* best_mem = nullptr;
    double best = -1.0;
    for (const auto& e : lru_) {
      const double s = similarity(tokens, emb, e.tokens, e.embedding, opt_.similarity);
      if (s > best) {
        best = s;
        best_mem = &e;
      }
    }
    if (best_mem && best >= tau) return from_memory(*best_mem, best);

    const std::string* best_key = nullptr;
    const DiskEntry* best_disk = nullptr;
    best = -1.0;
    for (const auto& [k, d] : disk_) {
      if (mem_index_.count(k)) continue;
      const double s = similarity(tokens, emb, d.tokens, d.embedding, opt_.similarity);
      if (s > best || (s == best && d.seq < best_disk->seq)) {
        best = s;
        best_key = &k;
        best_disk = &d;
      }
    }
    if (best_disk && best >= tau) return from_disk(*best_key, *best_disk, best);
    return {};
  }

  void promote(const Candidate& c, const CacheHit& hit) {
    ++hit_counts_[c.key];
    if (auto it = mem_index_.find(c.key); it != mem_index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return;
    }
    auto d = disk_.find(c.key);
    if (d == disk_.end()) return;  // dropped by a concurrent degrade
    put_memory({c.key, d->second.tokens, d->second.embedding, hit.response, hit.category, d->second.timestamp_ms, 0});
  }

  // Caller holds the exclusive lock.
  void put_memory(const CacheEntry& e) {
    if (auto it = mem_index_.find(e.query); it != mem_index_.end()) {
      it->second->response = e.response;
      it->second->category = e.category;
      lru_.splice(lru_.begin(), lru_, it->second);
      return;
    }
    lru_.push_front(e);
    mem_index_[e.query] = lru_.begin();
    if (lru_.size() > opt_.memory_capacity) {
      mem_index_.erase(lru_.back().query);
      lru_.pop_back();
    }
  }

  bool is_duplicate(const std::string& query, const std::string& response, MedicalCategory category) const {
    if (auto it = mem_index_.find(query); it != mem_index_.end()) {
      if (it->second->response == response && it->second->category == category) return true;
      if (!disk_enabled_) return false;
    }
    if (!disk_enabled_) return false;
    auto d = disk_.find(query);
    if (d == disk_.end() || d->second.category != category) return false;
    if (d->second.pending) return *d->second.pending == response;
    try {
      return read_record_response(log_path_, d->second.offset) == response;
    } catch (const Error&) {
      return false;
    }
  }

  void open_disk() {
    std::error_code ec;
    std::filesystem::create_directories(opt_.directory, ec);
    log_path_ = opt_.directory / kLogName;
    if (!std::filesystem::exists(log_path_)) {
      write_fresh_header();
      return;
    }
    std::vector<std::uint8_t> bytes;
    try {
      bytes = read_file_bytes(log_path_);
    } catch (const Error& e) {
      enter_degraded(e.what(), false);
      return;
    }
    const auto scan = scan_cache_log(bytes);
    if (scan.damage == LogDamage::kCorrupt) {
      enter_degraded(scan.detail + "; continuing with the memory tier only", false);
      return;
    }
    if (scan.damage == LogDamage::kTornTail) {
      warn(scan.detail + "; truncated to the last intact record");
      if (scan.valid_bytes == 0) {
        write_fresh_header();
        return;
      }
      std::filesystem::resize_file(log_path_, scan.valid_bytes, ec);
      if (ec) {
        enter_degraded("cannot truncate torn cache log: " + ec.message(), false);
        return;
      }
    }
    for (const auto& r : scan.records) {
      disk_[r.record.query] = {token_set(r.record.query), r.record.embedding, r.record.category,
                               r.record.timestamp_ms, ++seq_, r.offset, std::nullopt};
    }
    disk_records_ = scan.records.size();
    file_size_ = scan.valid_bytes;
    disk_enabled_ = true;
  }

  void write_fresh_header() {
    std::ofstream out(log_path_, std::ios::binary | std::ios::trunc);
    const auto header = cache_log_header();
    out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    if (!out) {
      enter_degraded("cannot create cache log '" + log_path_.string() + "'", false);
      return;
    }
    file_size_ = header.size();
    disk_enabled_ = true;
  }

  void writer_loop() {
    std::ofstream out(log_path_, std::ios::binary | std::ios::app);
    for (;;) {
      std::deque<PendingWrite> batch;
      {
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if (queue_.empty() && stop_) break;
        batch.swap(queue_);
        writing_ = true;
      }
      std::vector<std::pair<const PendingWrite*, std::uint64_t>> written;
      bool ok = static_cast<bool>(out);
      for (const auto& w : batch) {
        if (!ok) break;
        out.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
        ok = static_cast<bool>(out);
        if (ok) {
          written.emplace_back(&w, file_size_);
          file_size_ += w.bytes.size();
        }
      }
      out.flush();
      ok = ok && static_cast<bool>(out);
      {
        std::unique_lock lock(mu_);
        for (const auto& [w, offset] : written) {
          auto it = disk_.find(w->query);
          if (it != disk_.end() && it->second.seq == w->seq) {
            it->second.offset = offset;
            it->second.pending.reset();
          }
        }
        disk_records_ += written.size();
      }
      if (!ok) enter_degraded("cache log append failed; continuing with the memory tier only");
      {
        std::lock_guard lock(queue_mu_);
        writing_ = false;
        if (!ok) {
          queue_.clear();
          writer_stopped_ = true;
        }
      }
      flushed_cv_.notify_all();
      if (!ok) return;
    }
    {
      std::lock_guard lock(queue_mu_);
      writer_stopped_ = true;
    }
    flushed_cv_.notify_all();
  }

  bool writer_running() const { return writer_.joinable() && !writer_stopped_; }

  void warn(const std::string& msg) {
    {
      std::lock_guard lock(warn_mu_);
      warnings_.push_back(msg);
    }
    if (opt_.on_warning) opt_.on_warning(msg);
  }

  // Disk tier off; entries held only on disk are dropped.
  // The constructor passes take_lock = false; nothing else can see the
  // object yet.
  void enter_degraded(const std::string& why, bool take_lock = true) {
    if (degraded_.exchange(true)) return;
    warn(why);
    std::unique_lock lock(mu_, std::defer_lock);
    if (take_lock) lock.lock();
    disk_enabled_ = false;
    disk_.clear();
  }

  CacheOptions opt_;
  std::filesystem::path log_path_;

  mutable std::shared_mutex mu_;
  std::list<CacheEntry> lru_;
  std::unordered_map<std::string, std::list<CacheEntry>::iterator> mem_index_;
  std::unordered_map<std::string, DiskEntry> disk_;
  std::unordered_map<std::string, std::uint64_t> hit_counts_;
  std::uint64_t seq_ = 0;
  bool disk_enabled_ = false;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable flushed_cv_;
  std::deque<PendingWrite> queue_;
  bool writing_ = false;
  bool stop_ = false;
  bool writer_stopped_ = false;
  std::uint64_t file_size_ = 0;
  std::thread writer_;

  std::atomic<std::uint64_t> memory_hits_{0}, disk_hits_{0}, misses_{0}, inserts_{0}, disk_records_{0};
  std::atomic<bool> degraded_{false};
  mutable std::mutex warn_mu_;
  std::vector<std::string> warnings_;
};

}  // namespace medlite
