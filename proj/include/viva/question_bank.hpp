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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "viva/exam_types.hpp"
#include "viva/text.hpp"

namespace viva {

/// Malformed bank file: bad JSON, wrong types, unknown or missing keys.
class BankParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BankViolation {
  std::string exam_id;   // empty for student-level violations
  int question_number;   // 0 when not tied to a question
  std::string message;

  std::string describe() const {
    std::string out;
    if (!exam_id.empty()) out += "exam '" + exam_id + "'";
    if (question_number > 0) {
      out += (out.empty() ? "" : " ") + std::string("question ") +
             std::to_string(question_number);
    }
    if (!out.empty()) out += ": ";
    return out + message;
  }

  bool operator==(const BankViolation&) const = default;
};

/// Invariant violations found on load. The whole bank is rejected.
class BankValidationError : public std::runtime_error {
 public:
  explicit BankValidationError(std::vector<BankViolation> violations)
      : std::runtime_error(summarize(violations)),
        violations_(std::move(violations)) {}

  const std::vector<BankViolation>& violations() const { return violations_; }

 private:
  static std::string summarize(const std::vector<BankViolation>& violations) {
    std::string out = "invalid bank";
    for (const auto& v : violations) out += "; " + v.describe();
    return out;
  }

  std::vector<BankViolation> violations_;
};

namespace detail {

inline void check_question(const std::string& exam_id, std::size_t position,
                           const Question& q,
                           std::vector<BankViolation>& out) {
  auto report = [&](std::string message) {
    out.push_back({exam_id, q.number, std::move(message)});
  };
  if (q.number != static_cast<int>(position) + 1) {
    report("question number " + std::to_string(q.number) +
           " out of sequence, expected " + std::to_string(position + 1));
  }
  if (trim(q.stem).empty()) report("stem is empty");
  if (q.options.size() < 2 || q.options.size() > kLabelCount) {
    report("has " + std::to_string(q.options.size()) +
           " options, expected 2 to 7");
  }
  std::set<OptionLabel> seen;
  for (std::size_t i = 0; i < q.options.size(); ++i) {
    const auto& option = q.options[i];
    if (!seen.insert(option.label).second) {
      report("duplicate option label " + to_string(option.label));
    } else if (ordinal(option.label) != i) {
      report("option label " + to_string(option.label) + " at position " +
             std::to_string(i + 1) + " breaks the A, B, C... sequence");
    }
    if (trim(option.text).empty()) {
      report("option " + to_string(option.label) + " has empty text");
    }
  }
  if (!q.has_option(q.correct)) {
    report("correct label " + to_string(q.correct) +
           " is not among the options");
  }
}

}  // namespace detail

/// Checks every exam invariant and reports all violations. Never throws.
inline std::vector<BankViolation> validate_bank(
    std::span<const ExamDefinition> exams) {
  std::vector<BankViolation> out;
  std::set<std::string> ids;
  for (const auto& exam : exams) {
    if (exam.exam_id.empty()) out.push_back({exam.exam_id, 0, "empty exam_id"});
    if (!ids.insert(exam.exam_id).second) {
      out.push_back({exam.exam_id, 0, "duplicate exam_id"});
    }
    if (exam.questions.empty()) {
      out.push_back({exam.exam_id, 0, "exam has no questions"});
    }
    if (exam.settings.retries_on_no_match < 0) {
      out.push_back({exam.exam_id, 0, "retries_on_no_match is negative"});
    }
    for (std::size_t i = 0; i < exam.questions.size(); ++i) {
      detail::check_question(exam.exam_id, i, exam.questions[i], out);
    }
  }
  return out;
}

/// Exam checks plus student uniqueness and credential normal form.
inline std::vector<BankViolation> validate_bank(const Bank& bank) {
  auto out = validate_bank(std::span<const ExamDefinition>(bank.exams));
  std::set<std::string> ids;
  for (const auto& student : bank.students) {
    if (student.student_id.empty()) out.push_back({"", 0, "empty student_id"});
    if (!ids.insert(student.student_id).second) {
      out.push_back({"", 0, "duplicate student_id '" + student.student_id + "'"});
    }
    if (student.spoken_credential.empty() ||
        normalize_credential(student.spoken_credential) !=
            student.spoken_credential) {
      out.push_back({"", 0, "student '" + student.student_id +
                                "' spoken_credential is not normalized"});
    }
  }
  return out;
}

namespace detail {

using nlohmann::json;

inline void require_keys(const json& object, std::string_view where,
                         std::initializer_list<std::string_view> required,
                         std::initializer_list<std::string_view> optional = {}) {
  if (!object.is_object()) {
    throw BankParseError(std::string(where) + ": expected an object");
  }
  for (const auto& [key, value] : object.items()) {
    bool known = false;
    for (auto k : required) known = known || k == key;
    for (auto k : optional) known = known || k == key;
    if (!known) {
      throw BankParseError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
  for (auto k : required) {
    if (!object.contains(k)) {
      throw BankParseError(std::string(where) + ": missing key '" +
                           std::string(k) + "'");
    }
  }
}

template <typename T>
T get_field(const json& object, const char* key, const std::string& where) {
  try {
    return object.at(key).get<T>();
  } catch (const json::exception&) {
    throw BankParseError(where + ": field '" + key + "' has the wrong type");
  }
}

// nlohmann converts booleans and floats to int silently.
inline int get_int(const json& object, const char* key,
                   const std::string& where) {
  if (!object.at(key).is_number_integer()) {
    throw BankParseError(where + ": field '" + key + "' must be an integer");
  }
  return get_field<int>(object, key, where);
}

inline OptionLabel get_label(const json& object, const char* key,
                             const std::string& where) {
  auto text = get_field<std::string>(object, key, where);
  auto label = parse_label(text);
  if (!label || text != to_string(*label)) {
    throw BankParseError(where + ": '" + text + "' is not a label A-G");
  }
  return *label;
}

inline const json& get_array(const json& object, const char* key,
                             const std::string& where) {
  const auto& value = object.at(key);
  if (!value.is_array()) {
    throw BankParseError(where + ": field '" + key + "' must be an array");
  }
  return value;
}

inline Question parse_question(const json& j, const std::string& where) {
  require_keys(j, where, {"number", "stem", "options", "correct"});
  Question q;
  q.number = get_int(j, "number", where);
  q.stem = get_field<std::string>(j, "stem", where);
  q.correct = get_label(j, "correct", where);
  for (const auto& o : get_array(j, "options", where)) {
    std::string at = where + ".options";
    require_keys(o, at, {"label", "text"});
    q.options.push_back(
        {get_label(o, "label", at), get_field<std::string>(o, "text", at)});
  }
  return q;
}

inline ExamDefinition parse_exam(const json& j, std::size_t index) {
  std::string where = "exams[" + std::to_string(index) + "]";
  require_keys(j, where, {"exam_id", "title", "questions"}, {"settings"});
  ExamDefinition exam;
  exam.exam_id = get_field<std::string>(j, "exam_id", where);
  where += " (" + exam.exam_id + ")";
  exam.title = get_field<std::string>(j, "title", where);
  if (j.contains("settings")) {
    const auto& s = j.at("settings");
    std::string at = where + ".settings";
    require_keys(s, at, {},
                 {"retries_on_no_match", "read_back_answer",
                  "announce_running_score"});
    auto& settings = exam.settings;
    if (s.contains("retries_on_no_match")) {
      settings.retries_on_no_match = get_int(s, "retries_on_no_match", at);
    }
    if (s.contains("read_back_answer")) {
      settings.read_back_answer = get_field<bool>(s, "read_back_answer", at);
    }
    if (s.contains("announce_running_score")) {
      settings.announce_running_score =
          get_field<bool>(s, "announce_running_score", at);
    }
  }
  const auto& questions = get_array(j, "questions", where);
  for (std::size_t i = 0; i < questions.size(); ++i) {
    exam.questions.push_back(parse_question(
        questions[i], where + ".questions[" + std::to_string(i) + "]"));
  }
  return exam;
}

inline StudentRecord parse_student(const json& j, std::size_t index) {
  std::string where = "students[" + std::to_string(index) + "]";
  require_keys(j, where, {"student_id", "display_name", "spoken_credential"});
  return {get_field<std::string>(j, "student_id", where),
          get_field<std::string>(j, "display_name", where),
          get_field<std::string>(j, "spoken_credential", where)};
}

}  // namespace detail

/// Parses and fully validates a bank document. Throws BankParseError or
/// BankValidationError; nothing is returned from a partially valid file.
inline Bank parse_bank(std::string_view content) {
  using nlohmann::json;
  json root;
  try {
    root = json::parse(content);
  } catch (const json::parse_error& e) {
    throw BankParseError(std::string("malformed JSON: ") + e.what());
  }
  detail::require_keys(root, "bank", {"exams"}, {"students"});
  Bank bank;
  const auto& exams = detail::get_array(root, "exams", "bank");
  for (std::size_t i = 0; i < exams.size(); ++i) {
    bank.exams.push_back(detail::parse_exam(exams[i], i));
  }
  if (root.contains("students")) {
    const auto& students = detail::get_array(root, "students", "bank");
    for (std::size_t i = 0; i < students.size(); ++i) {
      bank.students.push_back(detail::parse_student(students[i], i));
    }
  }
  if (auto violations = validate_bank(bank); !violations.empty()) {
    throw BankValidationError(std::move(violations));
  }
  return bank;
}

inline Bank load_bank(std::istream& source) {
  std::string content{std::istreambuf_iterator<char>(source),
                      std::istreambuf_iterator<char>()};
  return parse_bank(content);
}

inline Bank load_bank_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BankParseError("cannot open bank file " + path.string());
  return load_bank(in);
}

inline nlohmann::json bank_to_json(const Bank& bank) {
  using nlohmann::json;
  json exams = json::array();
  for (const auto& exam : bank.exams) {
    json questions = json::array();
    for (const auto& q : exam.questions) {
      json options = json::array();
      for (const auto& o : q.options) {
        options.push_back({{"label", to_string(o.label)}, {"text", o.text}});
      }
      questions.push_back({{"number", q.number},
                           {"stem", q.stem},
                           {"options", std::move(options)},
                           {"correct", to_string(q.correct)}});
    }
    exams.push_back(
        {{"exam_id", exam.exam_id},
         {"title", exam.title},
         {"settings",
          {{"retries_on_no_match", exam.settings.retries_on_no_match},
           {"read_back_answer", exam.settings.read_back_answer},
           {"announce_running_score", exam.settings.announce_running_score}}},
         {"questions", std::move(questions)}});
  }
  json students = json::array();
  for (const auto& s : bank.students) {
    students.push_back({{"student_id", s.student_id},
                        {"display_name", s.display_name},
                        {"spoken_credential", s.spoken_credential}});
  }
  return {{"exams", std::move(exams)}, {"students", std::move(students)}};
}

inline std::string serialize_bank(const Bank& bank) {
  return bank_to_json(bank).dump(2) + "\n";
}

/// Replaces the bank file atomically: write a sibling temp file, then rename.
inline void save_bank_atomic(const std::filesystem::path& path,
                             const Bank& bank) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << serialize_bank(bank);
    out.flush();
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace viva
