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

#include <string>
#include <vector>

#include "viva/option_label.hpp"

namespace viva {

struct AnswerOption {
  OptionLabel label = OptionLabel::A;
  std::string text;

  bool operator==(const AnswerOption&) const = default;
};

struct Question {
  int number = 1;  // 1-based position within the exam
  std::string stem;
  std::vector<AnswerOption> options;
  OptionLabel correct = OptionLabel::A;

  bool has_option(OptionLabel label) const {
    for (const auto& option : options) {
      if (option.label == label) return true;
    }
    return false;
  }

  bool operator==(const Question&) const = default;
};

// Defaults reproduce the plain forward protocol: one attempt, answer read
// back, running score announced after every question.
struct ExamSettings {
  int retries_on_no_match = 0;
  bool read_back_answer = true;
  bool announce_running_score = true;

  bool operator==(const ExamSettings&) const = default;
};

struct ExamDefinition {
  std::string exam_id;
  std::string title;
  std::vector<Question> questions;
  ExamSettings settings;

  int question_count() const { return static_cast<int>(questions.size()); }

  /// Questions are numbered 1..N; callers check the range.
  const Question& question(int number) const {
    return questions.at(static_cast<std::size_t>(number - 1));
  }

  bool operator==(const ExamDefinition&) const = default;
};

struct StudentRecord {
  std::string student_id;
  std::string display_name;
  std::string spoken_credential;  // normalized form, see normalize_credential

  bool operator==(const StudentRecord&) const = default;
};

struct Bank {
  std::vector<ExamDefinition> exams;
  std::vector<StudentRecord> students;

  const ExamDefinition* find_exam(const std::string& exam_id) const {
    for (const auto& exam : exams) {
      if (exam.exam_id == exam_id) return &exam;
    }
    return nullptr;
  }

  bool operator==(const Bank&) const = default;
};

}  // namespace viva
