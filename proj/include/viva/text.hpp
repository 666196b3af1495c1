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

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace viva {

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline bool is_ascii_punct(char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') ||
         (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

inline std::string_view trim(std::string_view text) {
  while (!text.empty() && is_ascii_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_ascii_space(text.back())) text.remove_suffix(1);
  return text;
}

/// Folds a transcript into lowercase tokens. Apostrophes are deleted
/// ("it's" -> "its"); any other ASCII punctuation or whitespace separates
/// tokens. Bytes outside ASCII pass through untouched.
inline std::vector<std::string> normalize_text(std::string_view raw) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (char c : raw) {
    if (c == '\'') continue;
    if (is_ascii_space(c) || is_ascii_punct(c)) {
      flush();
      continue;
    }
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    current.push_back(c);
  }
  flush();
  return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& token : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

/// Spoken digit word to digit character, or '\0'.
inline char spoken_digit(std::string_view token) {
  static constexpr std::array<std::pair<std::string_view, char>, 11> kDigits{{
      {"zero", '0'}, {"oh", '0'},  {"one", '1'}, {"two", '2'},
      {"three", '3'}, {"four", '4'}, {"five", '5'}, {"six", '6'},
      {"seven", '7'}, {"eight", '8'}, {"nine", '9'},
  }};
  for (const auto& [word, digit] : kDigits) {
    if (word == token) return digit;
  }
  return '\0';
}

/// Normalizes spoken login details. Runs of digit words (and digit tokens)
/// collapse into one number: "student one two three" -> "student 123".
inline std::string normalize_credential(std::string_view raw) {
  std::vector<std::string> merged;
  bool previous_numeric = false;
  for (auto& token : normalize_text(raw)) {
    std::string digits;
    if (char d = spoken_digit(token); d != '\0') {
      digits.assign(1, d);
    } else if (token.find_first_not_of("0123456789") == std::string::npos) {
      digits = token;
    }
    if (digits.empty()) {
      merged.push_back(std::move(token));
      previous_numeric = false;
    } else if (previous_numeric) {
      merged.back() += digits;
    } else {
      merged.push_back(std::move(digits));
      previous_numeric = true;
    }
  }
  return join_tokens(merged);
}

}  // namespace viva
