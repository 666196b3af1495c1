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
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace viva {

/// Multiple-choice option label. Exactly seven values, ordered A < B < ... < G.
enum class OptionLabel : std::uint8_t { A = 0, B, C, D, E, F, G };

inline constexpr std::size_t kLabelCount = 7;

inline constexpr std::array<OptionLabel, kLabelCount> kAllLabels = {
    OptionLabel::A, OptionLabel::B, OptionLabel::C, OptionLabel::D,
    OptionLabel::E, OptionLabel::F, OptionLabel::G};

constexpr std::size_t ordinal(OptionLabel label) {
  return static_cast<std::size_t>(label);
}

constexpr char to_char(OptionLabel label) {
  return static_cast<char>('A' + ordinal(label));
}

constexpr char to_lower_char(OptionLabel label) {
  return static_cast<char>('a' + ordinal(label));
}

inline std::string to_string(OptionLabel label) {
  return std::string(1, to_char(label));
}

constexpr std::optional<OptionLabel> label_from_ordinal(std::size_t index) {
  if (index >= kLabelCount) return std::nullopt;
  return static_cast<OptionLabel>(index);
}

/// Accepts a single letter a-g in either case.
constexpr std::optional<OptionLabel> parse_label(char c) {
  if (c >= 'a' && c <= 'g') return static_cast<OptionLabel>(c - 'a');
  if (c >= 'A' && c <= 'G') return static_cast<OptionLabel>(c - 'A');
  return std::nullopt;
}

constexpr std::optional<OptionLabel> parse_label(std::string_view text) {
  if (text.size() != 1) return std::nullopt;
  return parse_label(text.front());
}

}  // namespace viva
