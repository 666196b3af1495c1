// Copyright 2026 The viva-cbt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "viva/exam_types.hpp"
#include "viva/text.hpp"

namespace viva {

/// What the speech engine heard. `raw` is kept verbatim.
struct Transcript {
  std::string raw;
  std::optional<double> engine_confidence;
};

enum class MatchMethod { ExactLetter, Homophone, OptionText };
enum class NoMatchReason { Empty, Unrecognized, Ambiguous };

inline std::string_view to_string(MatchMethod method) {
  switch (method) {
    case MatchMethod::ExactLetter: return "exact-letter";
    case MatchMethod::Homophone: return "homophone";
    case MatchMethod::OptionText: return "option-text";
  }
  return "?";
}

inline std::string_view to_string(NoMatchReason reason) {
  switch (reason) {
    case NoMatchReason::Empty: return "empty";
    case NoMatchReason::Unrecognized: return "unrecognized";
    case NoMatchReason::Ambiguous: return "ambiguous";
  }
  return "?";
}

inline std::optional<MatchMethod> parse_match_method(std::string_view text) {
  for (auto m : {MatchMethod::ExactLetter, MatchMethod::Homophone,
                 MatchMethod::OptionText}) {
    if (to_string(m) == text) return m;
  }
  return std::nullopt;
}

inline std::optional<NoMatchReason> parse_no_match_reason(std::string_view text) {
  for (auto r : {NoMatchReason::Empty, NoMatchReason::Unrecognized,
                 NoMatchReason::Ambiguous}) {
    if (to_string(r) == text) return r;
  }
  return std::nullopt;
}

struct Matched {
  OptionLabel label = OptionLabel::A;
  MatchMethod method = MatchMethod::ExactLetter;
  std::string matched_token;

  bool operator==(const Matched&) const = default;
};

struct NoMatch {
  NoMatchReason reason = NoMatchReason::Unrecognized;

  bool operator==(const NoMatch&) const = default;
};

using NormalizationResult = std::variant<Matched, NoMatch>;

inline const Matched* as_matched(const NormalizationResult& result) {
  return std::get_if<Matched>(&result);
}

inline std::string describe(const NormalizationResult& result) {
  if (const auto* m = as_matched(result)) {
    return to_string(m->label) + " (" + std::string(to_string(m->method)) + ")";
  }
  return "no match (" +
         std::string(to_string(std::get<NoMatch>(result).reason)) + ")";
}

class HomophoneTableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Recognizer tokens that sound like a letter, plus filler words dropped
/// before letter matching. Immutable once built.
class HomophoneTable {
 public:
  HomophoneTable() = default;

  /// Keys and fillers must already be single normalized tokens.
  HomophoneTable(std::map<std::string, OptionLabel> homophones,
                 std::vector<std::string> fillers)
      : homophones_(std::move(homophones)),
        fillers_(fillers.begin(), fillers.end()) {
    for (const auto& [key, label] : homophones_) {
      if (normalize_text(key) != std::vector<std::string>{key}) {
        throw HomophoneTableError("homophone key '" + key +
                                  "' is not a normalized token");
      }
    }
  }

  static const HomophoneTable& defaults() {
    static const HomophoneTable table(
        {
            {"a", OptionLabel::A},  {"hey", OptionLabel::A},
            {"ay", OptionLabel::A}, {"b", OptionLabel::B},
            {"bee", OptionLabel::B}, {"be", OptionLabel::B},
            {"c", OptionLabel::C},  {"see", OptionLabel::C},
            {"sea", OptionLabel::C}, {"d", OptionLabel::D},
            {"dee", OptionLabel::D}, {"e", OptionLabel::E},
            {"he", OptionLabel::E}, {"ee", OptionLabel::E},
            {"f", OptionLabel::F},  {"ef", OptionLabel::F},
            {"eff", OptionLabel::F}, {"g", OptionLabel::G},
            {"gee", OptionLabel::G}, {"jee", OptionLabel::G},
        },
        {"option", "answer", "its", "the", "letter", "is", "my", "i", "say"});
    return table;
  }

  /// `{ "homophones": { "see": "C" }, "fillers": ["option"] }`. Keys and
  /// fillers are normalized on load; both members are optional.
  static HomophoneTable from_json(std::string_view content) {
    using nlohmann::json;
    json root;
    try {
      root = json::parse(content);
    } catch (const json::parse_error& e) {
      throw HomophoneTableError(std::string("malformed JSON: ") + e.what());
    }
    if (!root.is_object()) throw HomophoneTableError("expected an object");
    std::map<std::string, OptionLabel> homophones;
    std::vector<std::string> fillers;
    for (const auto& [key, value] : root.items()) {
      if (key == "homophones") {
        if (!value.is_object()) {
          throw HomophoneTableError("'homophones' must be an object");
        }
        for (const auto& [word, label] : value.items()) {
          auto parsed = label.is_string()
                            ? parse_label(label.get<std::string>())
                            : std::nullopt;
          if (!parsed || label.get<std::string>() != to_string(*parsed)) {
            throw HomophoneTableError("homophone '" + word +
                                      "' maps to an invalid label");
          }
          auto tokens = normalize_text(word);
          if (tokens.size() != 1) {
            throw HomophoneTableError("homophone '" + word +
                                      "' must be a single token");
          }
          if (!homophones.emplace(tokens.front(), *parsed).second) {
            throw HomophoneTableError("duplicate homophone '" +
                                      tokens.front() + "'");
          }
        }
      } else if (key == "fillers") {
        if (!value.is_array()) {
          throw HomophoneTableError("'fillers' must be an array");
        }
        for (const auto& filler : value) {
          if (!filler.is_string()) {
            throw HomophoneTableError("fillers must be strings");
          }
          for (auto& token : normalize_text(filler.get<std::string>())) {
            fillers.push_back(std::move(token));
          }
        }
      } else {
        throw HomophoneTableError("unknown key '" + key + "'");
      }
    }
    return HomophoneTable(std::move(homophones), std::move(fillers));
  }

  static HomophoneTable from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw HomophoneTableError("cannot open " + path.string());
    std::string content{std::istreambuf_iterator<char>(in),
                        std::istreambuf_iterator<char>()};
    return from_json(content);
  }

  std::optional<OptionLabel> lookup(std::string_view token) const {
    auto it = homophones_.find(std::string(token));
    if (it == homophones_.end()) return std::nullopt;
    return it->second;
  }

  bool is_filler(const std::string& token) const {
    return fillers_.contains(token);
  }

  const std::map<std::string, OptionLabel>& homophones() const {
    return homophones_;
  }
  const std::set<std::string>& fillers() const { return fillers_; }

 private:
  std::map<std::string, OptionLabel> homophones_;
  std::set<std::string> fillers_;
};

namespace detail {

// Set of admissible labels, indexed by ordinal.
using LabelMask = std::array<bool, kLabelCount>;

inline LabelMask all_labels() {
  LabelMask mask{};
  mask.fill(true);
  return mask;
}

inline LabelMask labels_of(const Question& q) {
  LabelMask mask{};
  for (const auto& option : q.options) mask[ordinal(option.label)] = true;
  return mask;
}

// Outcome of one pipeline stage: nothing, one label, or a conflict.
struct StageHit {
  std::optional<Matched> match;
  bool ambiguous = false;

  void add(OptionLabel label, MatchMethod method, const std::string& token) {
    if (ambiguous) return;
    if (match && match->label != label) {
      ambiguous = true;
      match.reset();
      return;
    }
    if (!match) match = Matched{label, method, token};
  }
};

inline std::vector<std::string> strip_fillers(
    const std::vector<std::string>& tokens, const HomophoneTable& table) {
  std::vector<std::string> kept;
  for (const auto& token : tokens) {
    if (!table.is_filler(token)) kept.push_back(token);
  }
  return kept;
}

inline StageHit exact_letter_stage(const std::vector<std::string>& tokens,
                                   const LabelMask& allowed) {
  StageHit hit;
  for (const auto& token : tokens) {
    if (token.size() != 1 || token[0] < 'a' || token[0] > 'g') continue;
    auto label = *parse_label(token[0]);
    if (allowed[ordinal(label)]) hit.add(label, MatchMethod::ExactLetter, token);
  }
  return hit;
}

inline StageHit homophone_stage(const std::vector<std::string>& tokens,
                                const LabelMask& allowed,
                                const HomophoneTable& table) {
  StageHit hit;
  for (const auto& token : tokens) {
    auto label = table.lookup(token);
    if (label && allowed[ordinal(*label)]) {
      hit.add(*label, MatchMethod::Homophone, token);
    }
  }
  return hit;
}

inline bool contains_run(const std::vector<std::string>& haystack,
                         const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(),
                     needle.end()) != haystack.end();
}

inline StageHit option_text_stage(const std::vector<std::string>& tokens,
                                  const Question& q) {
  StageHit hit;
  for (const auto& option : q.options) {
    auto text = normalize_text(option.text);
    if (contains_run(tokens, text)) {
      hit.add(option.label, MatchMethod::OptionText, join_tokens(text));
    }
  }
  return hit;
}

// Runs letter stages in order; the first stage with any hit decides.
inline NormalizationResult run_letter_stages(const std::vector<std::string>& raw,
                                             const LabelMask& allowed,
                                             const HomophoneTable* table,
                                             StageHit* option_text) {
  auto tokens = table ? strip_fillers(raw, *table) : raw;
  if (tokens.empty()) return NoMatch{NoMatchReason::Empty};
  auto decide = [](const StageHit& hit) -> std::optional<NormalizationResult> {
    if (hit.ambiguous) return NoMatch{NoMatchReason::Ambiguous};
    if (hit.match) return *hit.match;
    return std::nullopt;
  };
  if (auto r = decide(exact_letter_stage(tokens, allowed))) return *r;
  if (table) {
    if (auto r = decide(homophone_stage(tokens, allowed, *table))) return *r;
  }
  if (option_text) {
    if (auto r = decide(*option_text)) return *r;
  }
  return NoMatch{NoMatchReason::Unrecognized};
}

}  // namespace detail

/// Maps a transcript to one of the question's options. Stages run in order,
/// first hit wins: a bare letter, then a homophone, then option text. Two
/// different labels within one stage abstain as ambiguous.
inline NormalizationResult normalize_answer(
    const Transcript& t, const Question& q,
    const HomophoneTable& table = HomophoneTable::defaults()) {
  auto tokens = normalize_text(t.raw);
  if (tokens.empty()) return NoMatch{NoMatchReason::Empty};
  auto text_hit = detail::option_text_stage(tokens, q);
  return detail::run_letter_stages(tokens, detail::labels_of(q), &table,
                                   &text_hit);
}

/// Letter-and-homophone stages over the full A-G label set, no question.
inline NormalizationResult normalize_letter(
    const Transcript& t,
    const HomophoneTable& table = HomophoneTable::defaults()) {
  return detail::run_letter_stages(normalize_text(t.raw), detail::all_labels(),
                                   &table, nullptr);
}

/// Bare-letter stage only. Homophones and fillers are ignored.
inline NormalizationResult exact_letter_only(const Transcript& t) {
  return detail::run_letter_stages(normalize_text(t.raw), detail::all_labels(),
                                   nullptr, nullptr);
}

}  // namespace viva
