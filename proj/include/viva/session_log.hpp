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

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "viva/exam_engine.hpp"
#include "viva/exam_types.hpp"

namespace viva {

enum class EventKind { Started, Prompted, Answered, Finished };

inline std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Started: return "started";
    case EventKind::Prompted: return "prompted";
    case EventKind::Answered: return "answered";
    case EventKind::Finished: return "finished";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view text) {
  for (auto k : {EventKind::Started, EventKind::Prompted, EventKind::Answered,
                 EventKind::Finished}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

/// UTC timestamp with millisecond precision, e.g. 2026-10-17T08:30:00.125Z.
inline std::string rfc3339_now() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()) % 1000;
  const std::time_t secs = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  const auto len = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + len, sizeof buf - len, ".%03dZ",
                static_cast<int>(ms.count()));
  return buf;
}

// ---------------------------------------------------------------------------
// JSON forms shared by the log and the HTTP API

inline nlohmann::json to_json(const NormalizationResult& result) {
  if (const auto* m = as_matched(result)) {
    return {{"status", "matched"},
            {"label", to_string(m->label)},
            {"method", to_string(m->method)},
            {"token", m->matched_token}};
  }
  return {{"status", "no-match"},
          {"reason", to_string(std::get<NoMatch>(result).reason)}};
}

inline NormalizationResult result_from_json(const nlohmann::json& j) {
  const auto status = j.at("status").get<std::string>();
  if (status == "matched") {
    auto label = parse_label(j.at("label").get<std::string>());
    auto method = parse_match_method(j.at("method").get<std::string>());
    if (!label || !method) throw std::invalid_argument("bad matched result");
    return Matched{*label, *method, j.at("token").get<std::string>()};
  }
  if (status == "no-match") {
    auto reason = parse_no_match_reason(j.at("reason").get<std::string>());
    if (!reason) throw std::invalid_argument("bad no-match reason");
    return NoMatch{*reason};
  }
  throw std::invalid_argument("unknown result status '" + status + "'");
}

inline nlohmann::json to_json(const SessionState& s) {
  struct Visitor {
    nlohmann::json operator()(const state::Ready&) const {
      return {{"kind", "ready"}};
    }
    nlohmann::json operator()(const state::Asking& a) const {
      return {{"kind", "asking"}, {"question", a.question}};
    }
    nlohmann::json operator()(const state::AwaitingAnswer& a) const {
      return {{"kind", "awaiting_answer"},
              {"question", a.question},
              {"attempts_used", a.attempts_used}};
    }
    nlohmann::json operator()(const state::Finished&) const {
      return {{"kind", "finished"}};
    }
  };
  return std::visit(Visitor{}, s);
}

inline nlohmann::json to_json(const AnswerRecord& a) {
  return {{"question_number", a.question_number},
          {"transcript", a.raw_transcript},
          {"result", to_json(a.result)},
          {"correct", a.correct}};
}

inline nlohmann::json to_json(const PromptScript& script) {
  auto utterances = nlohmann::json::array();
  for (const auto& u : script.utterances) {
    utterances.push_back({{"text", u.text}, {"kind", to_string(u.kind)}});
  }
  return {{"utterances", std::move(utterances)}};
}

// ---------------------------------------------------------------------------
// Log entries

struct SessionLogEntry {
  std::uint64_t seq = 0;  // per session, from 1, gapless
  std::string session_id;
  EventKind kind = EventKind::Started;
  nlohmann::json payload = nlohmann::json::object();
  std::string ts;

  std::string to_line() const {
    nlohmann::json j = {{"seq", seq},
                        {"session_id", session_id},
                        {"kind", to_string(kind)},
                        {"payload", payload},
                        {"ts", ts}};
    return j.dump() + "\n";
  }

  static SessionLogEntry from_line(std::string_view line) {
    auto j = nlohmann::json::parse(line);
    SessionLogEntry e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.session_id = j.at("session_id").get<std::string>();
    auto kind = parse_event_kind(j.at("kind").get<std::string>());
    if (!kind) throw std::invalid_argument("unknown event kind");
    e.kind = *kind;
    e.payload = j.at("payload");
    if (!e.payload.is_object()) throw std::invalid_argument("payload not an object");
    e.ts = j.at("ts").get<std::string>();
    return e;
  }
};

namespace events {

inline nlohmann::json started(const ExamSession& s) {
  return {{"student_id", s.student_id}, {"exam_id", s.exam_id}};
}

inline nlohmann::json prompted(int question) {
  return {{"question_number", question}};
}

/// Every submission is logged, including retried no-matches that append no
/// AnswerRecord (`recorded` is false for those).
inline nlohmann::json answered(const ExamSession& before,
                               const SubmitOutcome& outcome,
                               const std::string& transcript,
                               const NormalizationResult& result) {
  const auto& awaiting = std::get<state::AwaitingAnswer>(before.state);
  nlohmann::json j = {{"question_number", awaiting.question},
                      {"attempt", awaiting.attempts_used},
                      {"transcript", transcript},
                      {"result", to_json(result)},
                      {"recorded", outcome.recorded},
                      {"score_delta", outcome.session.score - before.score},
                      {"score", outcome.session.score}};
  if (outcome.recorded) j["correct"] = outcome.session.answers.back().correct;
  return j;
}

inline nlohmann::json finished(const ExamSession& s, const ExamDefinition& exam) {
  return {{"score", s.score}, {"total", exam.question_count()}};
}

}  // namespace events

// ---------------------------------------------------------------------------
// Sinks

/// Destination for log lines. append() must not return before the batch is
/// durable; it throws on failure.
class LogSink {
 public:
  virtual ~LogSink() = default;
  virtual void append(std::string_view lines) = 0;
};

/// Keeps lines in memory. Useful for tests and dry runs.
class MemoryLogSink : public LogSink {
 public:
  void append(std::string_view lines) override {
    std::lock_guard lock(mutex_);
    content_ += lines;
  }

  std::string content() const {
    std::lock_guard lock(mutex_);
    return content_;
  }

 private:
  mutable std::mutex mutex_;
  std::string content_;
};

/// Append-only file, fsynced after every batch.
class FileLogSink : public LogSink {
 public:
  explicit FileLogSink(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) {
      throw std::system_error(errno, std::generic_category(),
                              "open " + path.string());
    }
    // A crash can leave a torn final line; start ours on a fresh one.
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (!ec && size > 0) {
      int rfd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
      char last = '\n';
      if (rfd >= 0) {
        if (::pread(rfd, &last, 1, static_cast<off_t>(size - 1)) != 1) last = '\n';
        ::close(rfd);
      }
      if (last != '\n') append("\n");
    }
  }

  FileLogSink(const FileLogSink&) = delete;
  FileLogSink& operator=(const FileLogSink&) = delete;

  ~FileLogSink() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void append(std::string_view lines) override {
    std::lock_guard lock(mutex_);
    while (!lines.empty()) {
      ssize_t n = ::write(fd_, lines.data(), lines.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        throw std::system_error(errno, std::generic_category(), "log write");
      }
      lines.remove_prefix(static_cast<std::size_t>(n));
    }
    if (::fsync(fd_) != 0) {
      throw std::system_error(errno, std::generic_category(), "log fsync");
    }
  }

 private:
  std::mutex mutex_;
  int fd_ = -1;
};

inline void append_entries(LogSink& sink,
                           std::span<const SessionLogEntry> entries) {
  std::string batch;
  for (const auto& e : entries) batch += e.to_line();
  sink.append(batch);
}

// ---------------------------------------------------------------------------
// Recovery

struct LogCorruption {
  std::size_t line = 0;
  std::string session_id;  // empty when the line itself is unreadable
  std::uint64_t seq = 0;   // first bad sequence number, 0 if unknown
  std::string message;

  std::string describe() const {
    std::string out = "line " + std::to_string(line);
    if (!session_id.empty()) out += " session " + session_id;
    if (seq > 0) out += " seq " + std::to_string(seq);
    return out + ": " + message;
  }
};

struct RecoveredSession {
  ExamSession session;
  std::uint64_t last_seq = 0;
};

struct RecoveryResult {
  std::map<std::string, RecoveredSession> sessions;
  std::vector<LogCorruption> errors;

  bool clean() const { return errors.empty(); }
};

namespace detail {

inline void replay_entry(RecoveredSession& slot, const SessionLogEntry& e,
                         const ExamDefinition& exam) {
  auto& s = slot.session;
  const auto& p = e.payload;
  switch (e.kind) {
    case EventKind::Started:
      throw std::invalid_argument("session started twice");
    case EventKind::Prompted: {
      const auto* asking = std::get_if<state::Asking>(&s.state);
      if (!asking || asking->question != p.at("question_number").get<int>()) {
        throw std::invalid_argument("prompt does not match state " +
                                    describe(s.state));
      }
      s = render_prompt(s, exam).session;
      break;
    }
    case EventKind::Answered: {
      const auto* awaiting = std::get_if<state::AwaitingAnswer>(&s.state);
      if (!awaiting ||
          awaiting->question != p.at("question_number").get<int>() ||
          awaiting->attempts_used != p.at("attempt").get<int>()) {
        throw std::invalid_argument("answer does not match state " +
                                    describe(s.state));
      }
      auto outcome = apply_answer(s, exam, p.at("transcript").get<std::string>(),
                                  result_from_json(p.at("result")));
      if (outcome.recorded != p.at("recorded").get<bool>() ||
          outcome.session.score != p.at("score").get<int>() ||
          (outcome.recorded &&
           outcome.session.answers.back().correct != p.at("correct").get<bool>())) {
        throw std::invalid_argument("answer payload disagrees with the exam");
      }
      s = std::move(outcome.session);
      break;
    }
    case EventKind::Finished:
      if (!s.finished() || s.score != p.at("score").get<int>()) {
        throw std::invalid_argument("finished event does not match state " +
                                    describe(s.state));
      }
      break;
  }
  slot.last_seq = e.seq;
}

}  // namespace detail

/// Rebuilds sessions by replaying the log through the engine. A session
/// whose entries go bad stops at its last valid entry and the first bad
/// sequence number is reported; other sessions are unaffected.
inline RecoveryResult recover(std::istream& log, const Bank& bank) {
  RecoveryResult out;
  std::map<std::string, bool> broken;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(log, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    SessionLogEntry e;
    try {
      e = SessionLogEntry::from_line(line);
    } catch (const std::exception& ex) {
      out.errors.push_back({line_number, "", 0,
                            std::string("unreadable entry: ") + ex.what()});
      continue;
    }
    if (broken[e.session_id]) continue;
    auto fail = [&](std::string message) {
      out.errors.push_back({line_number, e.session_id, e.seq, std::move(message)});
      broken[e.session_id] = true;
    };
    auto it = out.sessions.find(e.session_id);
    const std::uint64_t expected = it == out.sessions.end() ? 1 : it->second.last_seq + 1;
    if (e.seq != expected) {
      fail("expected seq " + std::to_string(expected));
      continue;
    }
    try {
      if (it == out.sessions.end()) {
        if (e.kind != EventKind::Started) {
          fail("first entry is not 'started'");
          continue;
        }
        const auto exam_id = e.payload.at("exam_id").get<std::string>();
        const auto* exam = bank.find_exam(exam_id);
        if (!exam) {
          fail("unknown exam '" + exam_id + "'");
          continue;
        }
        out.sessions.emplace(
            e.session_id,
            RecoveredSession{
                start_session(*exam, e.payload.at("student_id").get<std::string>(),
                              e.session_id),
                e.seq});
      } else {
        detail::replay_entry(it->second, e, *bank.find_exam(it->second.session.exam_id));
      }
    } catch (const std::exception& ex) {
      fail(ex.what());
    }
  }
  return out;
}

inline RecoveryResult recover(std::string_view log, const Bank& bank) {
  std::istringstream in{std::string(log)};
  return recover(in, bank);
}

}  // namespace viva
