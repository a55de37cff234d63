// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "medlite/core/error.hpp"
#include "medlite/query/category.hpp"
#include "medlite/query/tokenize.hpp"

namespace medlite {

// Keyword sets per category. Keywords are stored lowercase; a keyword may
// appear under several categories.
class KeywordLexicon {
 public:
  KeywordLexicon() = default;

  // Throws ConfigError unless every category has at least one keyword.
  explicit KeywordLexicon(std::map<MedicalCategory, std::set<std::string>> keywords)
      : keywords_(std::move(keywords)) {
    for (MedicalCategory c : kAllCategories) {
      auto it = keywords_.find(c);
      if (it == keywords_.end()) {
        throw ConfigError("lexicon is missing category '" + std::string(to_string(c)) + "'");
      }
      if (it->second.empty()) {
        throw ConfigError("lexicon category '" + std::string(to_string(c)) + "' has no keywords");
      }
    }
  }

  const std::set<std::string>& keywords(MedicalCategory c) const { return keywords_.at(c); }

  bool contains(MedicalCategory c, const std::string& word) const { return keywords_.at(c).count(word) != 0; }

 private:
  std::map<MedicalCategory, std::set<std::string>> keywords_;
};

struct ClassifiedQuery {
  std::string text;
  std::vector<std::string> tokens;
  MedicalCategory category = kFallbackCategory;
  std::array<std::size_t, kCategoryCount> scores{};
};

// Picks the winning category for a score vector: the highest score, ties
// resolved by kTieBreakOrder, all-zero -> kFallbackCategory.
inline MedicalCategory argmax_category(const std::array<std::size_t, kCategoryCount>& scores) noexcept {
  MedicalCategory best = kFallbackCategory;
  std::size_t best_score = 0;
  for (MedicalCategory c : kTieBreakOrder) {
    if (scores[index_of(c)] > best_score) {
      best_score = scores[index_of(c)];
      best = c;
    }
  }
  return best;
}

// Every token occurrence contributes one point to each category whose
// keyword set contains it (whole-word match, no stemming).
inline ClassifiedQuery classify(std::string_view query, const KeywordLexicon& lexicon) {
  ClassifiedQuery out;
  out.text = std::string(query);
  out.tokens = tokenize(query);
  for (MedicalCategory c : kAllCategories) {
    const auto& keywords = lexicon.keywords(c);
    std::size_t score = 0;
    for (const auto& token : out.tokens) score += keywords.count(token);
    out.scores[index_of(c)] = score;
  }
  out.category = argmax_category(out.scores);
  return out;
}

namespace detail {

inline std::string lowercase_ascii(std::string s) {
  for (char& ch : s) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return s;
}

inline nlohmann::json read_json_file(const std::string& path, std::string_view what) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + std::string(what) + " file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse " + std::string(what) + " file '" + path + "': " + e.what());
  }
}

}  // namespace detail

// Lexicon document:
//   {"schema": "medlite.lexicon/1",
//    "categories": {"medication": ["dose", ...], ..., "emergency": [...]}}
// Keywords are lowercased; duplicates collapse.
inline KeywordLexicon lexicon_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("categories") || !doc["categories"].is_object()) {
    throw ConfigError("lexicon: missing required key 'categories'");
  }
  std::map<MedicalCategory, std::set<std::string>> keywords;
  for (const auto& [name, words] : doc["categories"].items()) {
    auto category = category_from_string(name);
    if (!category) throw ConfigError("lexicon: unknown category '" + name + "'");
    if (!words.is_array()) throw ConfigError("lexicon: category '" + name + "' must be an array of strings");
    auto& set = keywords[*category];
    for (const auto& w : words) {
      if (!w.is_string()) throw ConfigError("lexicon: category '" + name + "' contains a non-string keyword");
      set.insert(detail::lowercase_ascii(w.get<std::string>()));
    }
  }
  if (keywords.empty()) throw ConfigError("lexicon: no categories defined");
  return KeywordLexicon(std::move(keywords));
}

inline KeywordLexicon load_lexicon(const std::string& path) {
  return lexicon_from_json(detail::read_json_file(path, "lexicon"));
}

}  // namespace medlite
