// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "medlite/cache/similarity.hpp"
#include "medlite/core/binary_io.hpp"
#include "medlite/core/error.hpp"
#include "medlite/core/hash.hpp"
#include "medlite/query/category.hpp"

namespace medlite {

// Cache log layout (little-endian):
//   file header: "MLCACHE\0" then u32 version (1)
//   record:      u32 payload length
//                payload: u32 + bytes query, u32 + bytes response,
//                         u8 category, 64 x f32 embedding, i64 timestamp (ms)
//                u64 FNV-1a 64 of the payload
inline constexpr char kCacheLogMagic[8] = {'M', 'L', 'C', 'A', 'C', 'H', 'E', '\0'};
inline constexpr std::uint32_t kCacheLogVersion = 1;
inline constexpr std::size_t kCacheLogHeaderSize = sizeof(kCacheLogMagic) + sizeof(std::uint32_t);

struct CacheRecord {
  std::string query;
  std::string response;
  MedicalCategory category = kFallbackCategory;
  Embedding embedding{};
  std::int64_t timestamp_ms = 0;
};

inline std::vector<std::uint8_t> cache_log_header() {
  ByteWriter w;
  for (char c : kCacheLogMagic) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
  w.put<std::uint32_t>(kCacheLogVersion);
  return std::move(w.bytes());
}

inline std::vector<std::uint8_t> encode_record(const CacheRecord& r) {
  ByteWriter payload;
  payload.put_string(r.query);
  payload.put_string(r.response);
  payload.put<std::uint8_t>(static_cast<std::uint8_t>(index_of(r.category)));
  for (float v : r.embedding) payload.put<float>(v);
  payload.put<std::int64_t>(r.timestamp_ms);
  ByteWriter out;
  out.put<std::uint32_t>(static_cast<std::uint32_t>(payload.bytes().size()));
  out.put_bytes(payload.bytes());
  out.put<std::uint64_t>(fnv1a64(std::span<const std::uint8_t>(payload.bytes())));
  return std::move(out.bytes());
}

inline CacheRecord decode_payload(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  CacheRecord rec;
  rec.query = r.get_string();
  rec.response = r.get_string();
  const auto cat = r.get<std::uint8_t>();
  if (cat >= kCategoryCount) throw FormatError("cache record has an unknown category");
  rec.category = kAllCategories[cat];
  for (auto& v : rec.embedding) v = r.get<float>();
  rec.timestamp_ms = r.get<std::int64_t>();
  if (r.remaining() != 0) throw FormatError("cache record payload has trailing bytes");
  return rec;
}

struct ScannedRecord {
  CacheRecord record;
  std::uint64_t offset = 0;  // of the length prefix
};

enum class LogDamage { kNone, kTornTail, kCorrupt };

struct LogScan {
  std::vector<ScannedRecord> records;
  std::uint64_t valid_bytes = 0;  // header + every intact record
  LogDamage damage = LogDamage::kNone;
  std::string detail;
};

// Walks the log. A short or checksum-failing record that ends the file is a
// torn tail (an interrupted append); anything bad before the end is
// corruption.
inline LogScan scan_cache_log(std::span<const std::uint8_t> bytes) {
  LogScan scan;
  const auto header = cache_log_header();
  if (bytes.size() < header.size()) {
    if (!std::equal(bytes.begin(), bytes.end(), header.begin())) {
      scan.damage = LogDamage::kCorrupt;
      scan.detail = "cache log header is damaged";
    } else if (!bytes.empty()) {
      scan.damage = LogDamage::kTornTail;
      scan.detail = "cache log header is incomplete";
    }
    return scan;
  }
  if (!std::equal(header.begin(), header.end(), bytes.begin())) {
    scan.damage = LogDamage::kCorrupt;
    scan.detail = "not a medlite cache log";
    return scan;
  }
  std::uint64_t pos = header.size();
  scan.valid_bytes = pos;
  while (pos < bytes.size()) {
    const std::uint64_t left = bytes.size() - pos;
    if (left < 4) {
      scan.damage = LogDamage::kTornTail;
      break;
    }
    ByteReader len_reader(bytes.subspan(pos, 4));
    const std::uint64_t len = len_reader.get<std::uint32_t>();
    const std::uint64_t total = 4 + len + 8;
    if (left < total) {
      scan.damage = LogDamage::kTornTail;
      break;
    }
    const auto payload = bytes.subspan(pos + 4, len);
    ByteReader sum_reader(bytes.subspan(pos + 4 + len, 8));
    const bool at_end = left == total;
    bool ok = sum_reader.get<std::uint64_t>() == fnv1a64(payload);
    CacheRecord rec;
    if (ok) {
      try {
        rec = decode_payload(payload);
      } catch (const FormatError&) {
        ok = false;
      }
    }
    if (!ok) {
      scan.damage = at_end ? LogDamage::kTornTail : LogDamage::kCorrupt;
      if (!at_end) scan.detail = "cache log record at offset " + std::to_string(pos) + " fails its checksum";
      break;
    }
    scan.records.push_back({std::move(rec), pos});
    pos += total;
    scan.valid_bytes = pos;
  }
  if (scan.damage == LogDamage::kTornTail && scan.detail.empty()) {
    scan.detail = "cache log tail torn at offset " + std::to_string(scan.valid_bytes);
  }
  return scan;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Response text of the record at `offset`.
inline std::string read_record_response(const std::filesystem::path& path, std::uint64_t offset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read cache log");
  in.seekg(static_cast<std::streamoff>(offset));
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 4);
  std::vector<std::uint8_t> payload(len);
  in.read(reinterpret_cast<char*>(payload.data()), len);
  std::uint64_t sum = 0;
  in.read(reinterpret_cast<char*>(&sum), 8);
  if (!in || sum != fnv1a64(std::span<const std::uint8_t>(payload))) {
    throw FormatError("cache log record at offset " + std::to_string(offset) + " is unreadable");
  }
  return decode_payload(payload).response;
}

}  // namespace medlite
