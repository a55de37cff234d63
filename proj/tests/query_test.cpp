// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "medlite/core/random.hpp"
#include "medlite/query/classifier.hpp"
#include "medlite/query/prompt.hpp"
#include "medlite/query/tokenize.hpp"
#include "test_util.hpp"

using namespace medlite;
using Scores = std::array<std::size_t, kCategoryCount>;

namespace {

KeywordLexicon make_lexicon(std::map<MedicalCategory, std::set<std::string>> extra = {}) {
  std::map<MedicalCategory, std::set<std::string>> kw = {
      {MedicalCategory::kMedication, {"ibuprofen", "dose"}},
      {MedicalCategory::kDiagnosis, {"symptom"}},
      {MedicalCategory::kTreatment, {"therapy"}},
      {MedicalCategory::kPrevention, {"vaccine"}},
      {MedicalCategory::kEmergency, {"bleeding", "chest"}},
  };
  for (auto& [c, words] : extra) kw[c].insert(words.begin(), words.end());
  return KeywordLexicon(kw);
}

}  // namespace

TEST(Tokenize, LowercasesAndStripsPunctuation) {
  EXPECT_EQ(tokenize("Chest pain, dizzy!"), (std::vector<std::string>{"chest", "pain", "dizzy"}));
}

TEST(Tokenize, EmptyTextGivesNoTokens) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, KeepsDuplicates) {
  EXPECT_EQ(tokenize("Aspirin aspirin"), (std::vector<std::string>{"aspirin", "aspirin"}));
}

TEST(Tokenize, KeepsUtf8Bytes) {
  EXPECT_EQ(tokenize("Fièvre  élevée?"), (std::vector<std::string>{"fièvre", "élevée"}));
}

TEST(Classify, CountsEveryOccurrence) {
  const auto lex = make_lexicon();
  const auto q = classify("ibuprofen dose dose", lex);
  EXPECT_EQ(q.category, MedicalCategory::kMedication);
  EXPECT_EQ(q.scores, (Scores{3, 0, 0, 0, 0}));
}

TEST(Classify, NoMatchFallsBackToDiagnosis) {
  const auto q = classify("hello there", make_lexicon());
  EXPECT_EQ(q.category, MedicalCategory::kDiagnosis);
  EXPECT_EQ(q.scores, (Scores{0, 0, 0, 0, 0}));
}

TEST(Classify, EmergencyWinsTieWithMedication) {
  const auto q = classify("chest bleeding ibuprofen dose", make_lexicon());
  EXPECT_EQ(q.scores[index_of(MedicalCategory::kEmergency)], 2u);
  EXPECT_EQ(q.scores[index_of(MedicalCategory::kMedication)], 2u);
  EXPECT_EQ(q.category, MedicalCategory::kEmergency);
}

TEST(Classify, TieBreakTableIsTotal) {
  // Every score vector over {0,1,2}^5 yields exactly the first category of
  // the priority list among those holding the maximum.
  Scores s{};
  for (int code = 0; code < 243; ++code) {
    int x = code;
    for (auto& v : s) {
      v = static_cast<std::size_t>(x % 3);
      x /= 3;
    }
    std::size_t best = *std::max_element(s.begin(), s.end());
    MedicalCategory expected = kFallbackCategory;
    if (best > 0) {
      for (MedicalCategory c : kTieBreakOrder) {
        if (s[index_of(c)] == best) {
          expected = c;
          break;
        }
      }
    }
    EXPECT_EQ(argmax_category(s), expected);
  }
}

TEST(Classify, ScoresMatchBruteForceOnRandomLexicons) {
  Rng rng(11);
  const std::vector<std::string> vocab = [] {
    std::vector<std::string> v;
    for (int i = 0; i < 40; ++i) v.push_back("w" + std::to_string(i));
    return v;
  }();
  for (int trial = 0; trial < 300; ++trial) {
    std::map<MedicalCategory, std::set<std::string>> kw;
    for (MedicalCategory c : kAllCategories) {
      const auto n = rng.uniform_int(1, 20);
      for (int i = 0; i < n; ++i) kw[c].insert(vocab[static_cast<std::size_t>(rng.uniform_int(0, 39))]);
    }
    const KeywordLexicon lex(kw);
    std::string text;
    std::vector<std::string> tokens;
    const auto len = rng.uniform_int(0, 30);
    for (int i = 0; i < len; ++i) {
      tokens.push_back(vocab[static_cast<std::size_t>(rng.uniform_int(0, 39))]);
      text += tokens.back() + " ";
    }
    const auto q = classify(text, lex);
    for (MedicalCategory c : kAllCategories) {
      std::size_t brute = 0;
      for (const auto& t : tokens) {
        for (const auto& k : kw[c]) brute += (t == k) ? 1 : 0;
      }
      EXPECT_EQ(q.scores[index_of(c)], brute);
    }
    EXPECT_EQ(classify(text, lex).category, q.category);
  }
}

TEST(Classify, AppendingExclusiveKeywordOnlyRaisesItsCategory) {
  const auto lex = make_lexicon();
  Rng rng(5);
  const std::vector<std::string> pool = {"ibuprofen", "symptom", "therapy", "vaccine", "chest", "other"};
  for (int trial = 0; trial < 100; ++trial) {
    std::string text;
    for (int i = 0; i < rng.uniform_int(0, 10); ++i) text += pool[static_cast<std::size_t>(rng.uniform_int(0, 5))] + " ";
    const auto before = classify(text, lex);
    const auto after = classify(text + " therapy", lex);
    for (MedicalCategory c : kAllCategories) {
      if (c == MedicalCategory::kTreatment) {
        EXPECT_EQ(after.scores[index_of(c)], before.scores[index_of(c)] + 1);
      } else {
        EXPECT_EQ(after.scores[index_of(c)], before.scores[index_of(c)]);
      }
    }
  }
}

TEST(Prompt, ConcatenatesWithNewlines) {
  PromptTemplate t{"B", {}};
  for (MedicalCategory c : kAllCategories) t.suffixes[c] = "";
  t.suffixes[MedicalCategory::kEmergency] = "E";
  ClassifiedQuery q;
  q.text = "q";
  q.category = MedicalCategory::kEmergency;
  EXPECT_EQ(build_prompt(q, t), "B\nE\nq");
  q.category = MedicalCategory::kTreatment;
  EXPECT_EQ(build_prompt(q, t), "B\n\nq");
}

TEST(Prompt, MissingSuffixIsConfigError) {
  PromptTemplate t{"B", {{MedicalCategory::kMedication, "M"}}};
  ClassifiedQuery q;
  q.text = "q";
  q.category = MedicalCategory::kEmergency;
  EXPECT_THROW(build_prompt(q, t), ConfigError);
}

TEST(Prompt, FixtureEmergencySuffixStressesTimeliness) {
  const auto t = load_templates(medlite::testing::data_path("templates.json"));
  const auto& e = t.suffixes.at(MedicalCategory::kEmergency);
  EXPECT_NE(e.find("Timeliness"), std::string::npos);
  EXPECT_NE(e.find("steps"), std::string::npos);
  const auto& m = t.suffixes.at(MedicalCategory::kMedication);
  EXPECT_NE(m.find("dose"), std::string::npos);
  EXPECT_NE(m.find("contraindications"), std::string::npos);
}

TEST(Lexicon, FixtureLoadsAllFiveCategories) {
  const auto lex = load_lexicon(medlite::testing::data_path("lexicon.json"));
  for (MedicalCategory c : kAllCategories) EXPECT_FALSE(lex.keywords(c).empty());
  EXPECT_TRUE(lex.contains(MedicalCategory::kMedication, "ibuprofen"));
}

TEST(Lexicon, MissingCategoryIsError) {
  const auto doc = nlohmann::json::parse(R"({"categories": {"medication": ["dose"], "diagnosis": ["x"],
      "treatment": ["t"], "prevention": ["p"]}})");
  EXPECT_THROW(lexicon_from_json(doc), ConfigError);
}

TEST(Lexicon, DuplicateKeywordsCollapse) {
  const auto doc = nlohmann::json::parse(R"({"categories": {"medication": ["Dose", "dose", "DOSE"],
      "diagnosis": ["x"], "treatment": ["t"], "prevention": ["p"], "emergency": ["e"]}})");
  const auto lex = lexicon_from_json(doc);
  EXPECT_EQ(lex.keywords(MedicalCategory::kMedication), (std::set<std::string>{"dose"}));
}

TEST(Lexicon, ParseErrorsAreConfigErrors) {
  medlite::testing::TempDir dir;
  const auto path = dir.str() + "/bad.json";
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(load_lexicon(path), ConfigError);
  EXPECT_THROW(load_lexicon(dir.str() + "/missing.json"), ConfigError);
  EXPECT_THROW(lexicon_from_json(nlohmann::json::parse(R"({"categories": {}})")), ConfigError);
}
