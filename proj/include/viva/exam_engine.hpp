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

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "viva/exam_types.hpp"
#include "viva/normalizer.hpp"

namespace viva {

/// Operation requested in a state that does not allow it.
class InvalidStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace state {
struct Ready {
  bool operator==(const Ready&) const = default;
};
struct Asking {
  int question = 1;
  bool operator==(const Asking&) const = default;
};
struct AwaitingAnswer {
  int question = 1;
  int attempts_used = 0;
  bool operator==(const AwaitingAnswer&) const = default;
};
struct Finished {
  bool operator==(const Finished&) const = default;
};
}  // namespace state

using SessionState = std::variant<state::Ready, state::Asking,
                                  state::AwaitingAnswer, state::Finished>;

inline std::string describe(const SessionState& s) {
  struct Visitor {
    std::string operator()(const state::Ready&) const { return "Ready"; }
    std::string operator()(const state::Asking& a) const {
      return "Asking(" + std::to_string(a.question) + ")";
    }
    std::string operator()(const state::AwaitingAnswer& a) const {
      return "AwaitingAnswer(" + std::to_string(a.question) + ", " +
             std::to_string(a.attempts_used) + ")";
    }
    std::string operator()(const state::Finished&) const { return "Finished"; }
  };
  return std::visit(Visitor{}, s);
}

struct AnswerRecord {
  int question_number = 0;
  std::string raw_transcript;
  NormalizationResult result;
  bool correct = false;

  bool operator==(const AnswerRecord&) const = default;
};

struct ExamSession {
  std::string session_id;
  std::string student_id;
  std::string exam_id;
  SessionState state;
  std::vector<AnswerRecord> answers;
  int score = 0;

  bool finished() const {
    return std::holds_alternative<state::Finished>(state);
  }

  bool operator==(const ExamSession&) const = default;
};

enum class UtteranceKind { Question, Option, Instruction, Feedback, Score, Result };

inline std::string_view to_string(UtteranceKind kind) {
  switch (kind) {
    case UtteranceKind::Question: return "question";
    case UtteranceKind::Option: return "option";
    case UtteranceKind::Instruction: return "instruction";
    case UtteranceKind::Feedback: return "feedback";
    case UtteranceKind::Score: return "score";
    case UtteranceKind::Result: return "result";
  }
  return "?";
}

struct Utterance {
  std::string text;
  UtteranceKind kind = UtteranceKind::Instruction;

  bool operator==(const Utterance&) const = default;
};

/// Ordered speakable lines handed to the client for synthesis. Feedback
/// after an answer uses the same shape.
struct PromptScript {
  std::vector<Utterance> utterances;

  std::vector<std::string> texts() const {
    std::vector<std::string> out;
    for (const auto& u : utterances) out.push_back(u.text);
    return out;
  }

  bool operator==(const PromptScript&) const = default;
};

namespace lines {
inline constexpr std::string_view kSpeakNow = "Speak now...";
inline constexpr std::string_view kNotCaught = "Sorry, I didn't catch that.";
inline constexpr std::string_view kCorrect = "Correct!";
inline constexpr std::string_view kWrong = "Wrong!";
}  // namespace lines

/// 128 random bits as 32 lowercase hex characters.
inline std::string random_hex_id() {
  static thread_local std::random_device device;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (int word = 0; word < 4; ++word) {
    std::uint32_t bits = device();
    for (int nibble = 0; nibble < 8; ++nibble) {
      out.push_back(kHex[bits & 0xF]);
      bits >>= 4;
    }
  }
  return out;
}

inline ExamSession start_session(const ExamDefinition& exam,
                                 std::string student_id,
                                 std::string session_id) {
  if (exam.questions.empty()) {
    throw InvalidStateError("exam '" + exam.exam_id + "' has no questions");
  }
  ExamSession s;
  s.session_id = std::move(session_id);
  s.student_id = std::move(student_id);
  s.exam_id = exam.exam_id;
  s.state = state::Asking{1};
  return s;
}

inline ExamSession start_session(const ExamDefinition& exam,
                                 std::string student_id) {
  return start_session(exam, std::move(student_id), random_hex_id());
}

struct PromptOutcome {
  PromptScript script;
  ExamSession session;
};

/// Reads question k aloud. Asking(k) moves to AwaitingAnswer(k, 0); a
/// session already awaiting an answer gets the same script again unchanged.
inline PromptOutcome render_prompt(const ExamSession& s,
                                   const ExamDefinition& exam) {
  int k = 0;
  ExamSession next = s;
  if (const auto* asking = std::get_if<state::Asking>(&s.state)) {
    k = asking->question;
    next.state = state::AwaitingAnswer{k, 0};
  } else if (const auto* awaiting = std::get_if<state::AwaitingAnswer>(&s.state)) {
    k = awaiting->question;
  } else {
    throw InvalidStateError("cannot prompt in state " + describe(s.state));
  }
  const Question& q = exam.question(k);
  PromptScript script;
  script.utterances.push_back(
      {"Question " + std::to_string(k) + " " + q.stem, UtteranceKind::Question});
  for (const auto& option : q.options) {
    script.utterances.push_back(
        {to_string(option.label) + ": " + option.text, UtteranceKind::Option});
  }
  script.utterances.push_back(
      {std::string(lines::kSpeakNow), UtteranceKind::Instruction});
  return {std::move(script), std::move(next)};
}

struct SubmitOutcome {
  PromptScript feedback;
  ExamSession session;
  bool recorded = false;  // an AnswerRecord was appended
};

/// Applies an already-normalized answer to the awaiting question. This is
/// the whole grading transition; submit_transcript only adds normalization.
inline SubmitOutcome apply_answer(const ExamSession& s,
                                  const ExamDefinition& exam,
                                  std::string raw_transcript,
                                  NormalizationResult result) {
  const auto* awaiting = std::get_if<state::AwaitingAnswer>(&s.state);
  if (!awaiting) {
    throw InvalidStateError("cannot accept an answer in state " +
                            describe(s.state));
  }
  const int k = awaiting->question;
  const Question& q = exam.question(k);
  const auto& settings = exam.settings;

  SubmitOutcome out{{}, s, false};
  auto say = [&](std::string text, UtteranceKind kind) {
    out.feedback.utterances.push_back({std::move(text), kind});
  };

  const auto* matched = as_matched(result);
  if (!matched) {
    say(std::string(lines::kNotCaught), UtteranceKind::Feedback);
    if (awaiting->attempts_used < settings.retries_on_no_match) {
      say(std::string(lines::kSpeakNow), UtteranceKind::Instruction);
      out.session.state = state::AwaitingAnswer{k, awaiting->attempts_used + 1};
      return out;
    }
  } else if (settings.read_back_answer) {
    say("You said: " + std::string(1, to_lower_char(matched->label)),
        UtteranceKind::Feedback);
  }

  const bool correct = matched && matched->label == q.correct;
  say(std::string(correct ? lines::kCorrect : lines::kWrong),
      UtteranceKind::Feedback);
  out.session.answers.push_back(
      {k, std::move(raw_transcript), std::move(result), correct});
  if (correct) ++out.session.score;
  out.recorded = true;
  if (settings.announce_running_score) {
    say("Your score is " + std::to_string(out.session.score),
        UtteranceKind::Score);
  }

  if (k < exam.question_count()) {
    out.session.state = state::Asking{k + 1};
  } else {
    out.session.state = state::Finished{};
    say("You scored " + std::to_string(out.session.score) + " out of " +
            std::to_string(exam.question_count()),
        UtteranceKind::Result);
  }
  return out;
}

inline SubmitOutcome submit_transcript(
    const ExamSession& s, const ExamDefinition& exam, const Transcript& t,
    const HomophoneTable& table = HomophoneTable::defaults()) {
  const auto* awaiting = std::get_if<state::AwaitingAnswer>(&s.state);
  if (!awaiting) {
    throw InvalidStateError("cannot accept an answer in state " +
                            describe(s.state));
  }
  auto result = normalize_answer(t, exam.question(awaiting->question), table);
  return apply_answer(s, exam, t.raw, std::move(result));
}

struct ResultSummary {
  int score = 0;
  int total = 0;
  std::vector<AnswerRecord> answers;
};

inline ResultSummary result_summary(const ExamSession& s,
                                    const ExamDefinition& exam) {
  if (!s.finished()) {
    throw InvalidStateError("no result before the exam is finished (state " +
                            describe(s.state) + ")");
  }
  return {s.score, exam.question_count(), s.answers};
}

}  // namespace viva
