// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "json.hpp"
#include "medlite/core/error.hpp"
#include "medlite/query/category.hpp"
#include "medlite/query/classifier.hpp"

namespace medlite {

struct PromptTemplate {
  std::string base;
  std::map<MedicalCategory, std::string> suffixes;
};

// base + "\n" + suffix(category) + "\n" + query text.
inline std::string build_prompt(const ClassifiedQuery& classified, const PromptTemplate& templates) {
  auto it = templates.suffixes.find(classified.category);
  if (it == templates.suffixes.end()) {
    throw ConfigError("prompt templates have no suffix for category '" +
                      std::string(to_string(classified.category)) + "'");
  }
  std::string prompt;
  prompt.reserve(templates.base.size() + it->second.size() + classified.text.size() + 2);
  prompt.append(templates.base).append(1, '\n').append(it->second).append(1, '\n').append(classified.text);
  return prompt;
}

// Template document:
//   {"schema": "medlite.templates/1", "base": "...",
//    "suffixes": {"medication": "...", ..., "emergency": "..."}}
inline PromptTemplate templates_from_json(const nlohmann::json& doc) {
  PromptTemplate t;
  if (!doc.is_object() || !doc.contains("base") || !doc["base"].is_string()) {
    throw ConfigError("templates: missing required key 'base'");
  }
  t.base = doc["base"].get<std::string>();
  if (t.base.empty()) throw ConfigError("templates: 'base' must not be empty");
  if (!doc.contains("suffixes") || !doc["suffixes"].is_object()) {
    throw ConfigError("templates: missing required key 'suffixes'");
  }
  for (const auto& [name, text] : doc["suffixes"].items()) {
    auto category = category_from_string(name);
    if (!category) throw ConfigError("templates: unknown category '" + name + "'");
    if (!text.is_string()) throw ConfigError("templates: suffix for '" + name + "' must be a string");
    t.suffixes[*category] = text.get<std::string>();
  }
  for (MedicalCategory c : kAllCategories) {
    if (!t.suffixes.count(c)) {
      throw ConfigError("templates: missing suffix for category '" + std::string(to_string(c)) + "'");
    }
  }
  return t;
}

inline PromptTemplate load_templates(const std::string& path) {
  return templates_from_json(detail::read_json_file(path, "templates"));
}

}  // namespace medlite
