// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace medlite {

// The five query categories. Enumerator order is the layout of every
// per-category score vector.
enum class MedicalCategory : std::size_t {
  kMedication = 0,
  kDiagnosis = 1,
  kTreatment = 2,
  kPrevention = 3,
  kEmergency = 4,
};

inline constexpr std::size_t kCategoryCount = 5;

inline constexpr std::array<MedicalCategory, kCategoryCount> kAllCategories = {
    MedicalCategory::kMedication, MedicalCategory::kDiagnosis, MedicalCategory::kTreatment,
    MedicalCategory::kPrevention, MedicalCategory::kEmergency};

// Priority used when several categories share the top score.
inline constexpr std::array<MedicalCategory, kCategoryCount> kTieBreakOrder = {
    MedicalCategory::kEmergency, MedicalCategory::kMedication, MedicalCategory::kDiagnosis,
    MedicalCategory::kTreatment, MedicalCategory::kPrevention};

// Returned when no keyword matches at all.
inline constexpr MedicalCategory kFallbackCategory = MedicalCategory::kDiagnosis;

constexpr std::size_t index_of(MedicalCategory c) noexcept { return static_cast<std::size_t>(c); }

constexpr std::string_view to_string(MedicalCategory c) noexcept {
  switch (c) {
    case MedicalCategory::kMedication: return "medication";
    case MedicalCategory::kDiagnosis: return "diagnosis";
    case MedicalCategory::kTreatment: return "treatment";
    case MedicalCategory::kPrevention: return "prevention";
    case MedicalCategory::kEmergency: return "emergency";
  }
  return "unknown";
}

constexpr std::optional<MedicalCategory> category_from_string(std::string_view name) noexcept {
  for (MedicalCategory c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

}  // namespace medlite
