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

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "viva/exam_engine.hpp"
#include "viva/normalizer.hpp"
#include "viva/question_bank.hpp"
#include "viva/session_log.hpp"

namespace viva {

struct ApiResponse {
  int status = 200;
  nlohmann::json body = nlohmann::json::object();
};

inline ApiResponse api_error(int status, std::string message) {
  return {status, {{"error", std::move(message)}}};
}

struct TokenGrant {
  std::string student_id;
  std::chrono::system_clock::time_point issued_at;
};

/// Exam API over an immutable bank. Sessions change only through the engine;
/// every state change is written to the log sink before it becomes visible.
/// State-changing requests on one session are serialized: an answer that
/// arrives while another is being applied is refused with 409.
class ExamService {
 public:
  ExamService(Bank bank, HomophoneTable table, LogSink& sink)
      : bank_(std::move(bank)), table_(std::move(table)), sink_(sink) {}

  /// Adopts sessions rebuilt from the log; sequence numbering continues.
  void restore(const RecoveryResult& recovered) {
    std::unique_lock lock(sessions_mutex_);
    for (const auto& [id, r] : recovered.sessions) {
      const auto* exam = bank_.find_exam(r.session.exam_id);
      if (!exam) continue;
      auto slot = std::make_shared<Slot>();
      slot->session = r.session;
      slot->exam = exam;
      slot->last_seq = r.last_seq;
      sessions_[id] = std::move(slot);
    }
  }

  const Bank& bank() const { return bank_; }

  /// POST /v1/login { "transcript": "..." }
  ApiResponse login(std::string_view body) {
    auto transcript = string_field(body, "transcript");
    if (!transcript) return api_error(400, "body must be JSON with string 'transcript'");
    const auto credential = normalize_credential(*transcript);
    const StudentRecord* match = nullptr;
    for (const auto& student : bank_.students) {
      if (credential.empty() || student.spoken_credential != credential) continue;
      if (match) return api_error(409, "credential matches more than one student");
      match = &student;
    }
    if (!match) return api_error(401, "login details not recognized");
    auto token = random_hex_id();
    {
      std::lock_guard lock(tokens_mutex_);
      tokens_[token] = {match->student_id, std::chrono::system_clock::now()};
    }
    return {200, {{"token", token},
                  {"student_id", match->student_id},
                  {"display_name", match->display_name}}};
  }

  /// POST /v1/exams/{exam_id}/sessions
  ApiResponse create_session(std::string_view authorization,
                             const std::string& exam_id) {
    auto student = authenticate(authorization);
    if (!student) return api_error(401, "missing or invalid token");
    const auto* exam = bank_.find_exam(exam_id);
    if (!exam) return api_error(404, "unknown exam '" + exam_id + "'");

    auto slot = std::make_shared<Slot>();
    slot->exam = exam;
    slot->session = start_session(*exam, *student);
    std::lock_guard slot_lock(slot->mutex);
    const auto& s = slot->session;
    if (auto failure = write(*slot, {{EventKind::Started, events::started(s)}})) {
      return *failure;
    }
    {
      std::unique_lock lock(sessions_mutex_);
      sessions_[s.session_id] = slot;
    }
    return {201, {{"session_id", s.session_id}, {"state", to_json(s.state)}}};
  }

  /// GET /v1/sessions/{id}/prompt
  ApiResponse prompt(std::string_view authorization,
                     const std::string& session_id) {
    auto access = open_session(authorization, session_id);
    if (!access.slot) return access.error;
    auto& slot = *access.slot;
    std::lock_guard lock(slot.mutex);
    PromptOutcome outcome;
    try {
      outcome = render_prompt(slot.session, *slot.exam);
    } catch (const InvalidStateError& e) {
      return api_error(409, e.what());
    }
    if (outcome.session != slot.session) {
      const int k = std::get<state::AwaitingAnswer>(outcome.session.state).question;
      if (auto failure = write(slot, {{EventKind::Prompted, events::prompted(k)}})) {
        return *failure;
      }
      slot.session = std::move(outcome.session);
    }
    auto body = to_json(outcome.script);
    body["state"] = to_json(slot.session.state);
    return {200, std::move(body)};
  }

  /// POST /v1/sessions/{id}/answers { "transcript": "...", "confidence": 0.9 }
  ApiResponse answer(std::string_view authorization,
                     const std::string& session_id, std::string_view body) {
    auto access = open_session(authorization, session_id);
    if (!access.slot) return access.error;
    auto transcript = string_field(body, "transcript");
    if (!transcript) return api_error(400, "body must be JSON with string 'transcript'");
    auto confidence = number_field(body, "confidence");
    if (!confidence) return api_error(400, "'confidence' must be a number");
    auto& slot = *access.slot;
    std::unique_lock lock(slot.mutex, std::try_to_lock);
    if (!lock.owns_lock()) return api_error(409, "another answer is being processed");

    const auto& before = slot.session;
    const auto* awaiting = std::get_if<state::AwaitingAnswer>(&before.state);
    if (!awaiting) {
      return api_error(409, "not awaiting an answer (state " + describe(before.state) + ")");
    }
    Transcript t{*transcript, *confidence};
    auto result = normalize_answer(t, slot.exam->question(awaiting->question), table_);
    auto outcome = apply_answer(before, *slot.exam, t.raw, result);

    std::vector<Pending> pending{
        {EventKind::Answered, events::answered(before, outcome, t.raw, result)}};
    if (outcome.session.finished()) {
      pending.push_back({EventKind::Finished, events::finished(outcome.session, *slot.exam)});
    }
    if (auto failure = write(slot, pending)) return *failure;
    slot.session = std::move(outcome.session);
    return {200, {{"feedback", to_json(outcome.feedback)},
                  {"state", to_json(slot.session.state)},
                  {"score", slot.session.score}}};
  }

  /// GET /v1/sessions/{id}/result
  ApiResponse result(std::string_view authorization,
                     const std::string& session_id) {
    auto access = open_session(authorization, session_id);
    if (!access.slot) return access.error;
    std::lock_guard lock(access.slot->mutex);
    ResultSummary summary;
    try {
      summary = result_summary(access.slot->session, *access.slot->exam);
    } catch (const InvalidStateError& e) {
      return api_error(409, e.what());
    }
    auto answers = nlohmann::json::array();
    for (const auto& a : summary.answers) answers.push_back(to_json(a));
    return {200, {{"score", summary.score},
                  {"total", summary.total},
                  {"answers", std::move(answers)}}};
  }

  std::optional<ExamSession> snapshot(const std::string& session_id) const {
    std::shared_ptr<Slot> slot;
    {
      std::shared_lock lock(sessions_mutex_);
      auto it = sessions_.find(session_id);
      if (it == sessions_.end()) return std::nullopt;
      slot = it->second;
    }
    std::lock_guard lock(slot->mutex);
    return slot->session;
  }

 private:
  struct Slot {
    mutable std::mutex mutex;
    ExamSession session;
    const ExamDefinition* exam = nullptr;
    std::uint64_t last_seq = 0;
  };

  struct Pending {
    EventKind kind;
    nlohmann::json payload;
  };

  struct Access {
    std::shared_ptr<Slot> slot;
    ApiResponse error;
  };

  static std::optional<std::string> string_field(std::string_view body,
                                                 const char* key) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains(key) ||
        !j.at(key).is_string()) {
      return std::nullopt;
    }
    return j.at(key).get<std::string>();
  }

  // Optional numeric field: nullopt if present with the wrong type,
  // an empty inner optional if absent.
  static std::optional<std::optional<double>> number_field(std::string_view body,
                                                           const char* key) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (!j.is_object() || !j.contains(key)) return std::optional<double>{};
    if (!j.at(key).is_number()) return std::nullopt;
    return std::optional<double>{j.at(key).get<double>()};
  }

  std::optional<std::string> authenticate(std::string_view authorization) const {
    constexpr std::string_view kBearer = "Bearer ";
    if (authorization.substr(0, kBearer.size()) != kBearer) return std::nullopt;
    const std::string token(trim(authorization.substr(kBearer.size())));
    std::lock_guard lock(tokens_mutex_);
    auto it = tokens_.find(token);
    if (it == tokens_.end()) return std::nullopt;
    return it->second.student_id;
  }

  Access open_session(std::string_view authorization,
                      const std::string& session_id) const {
    auto student = authenticate(authorization);
    if (!student) return {nullptr, api_error(401, "missing or invalid token")};
    std::shared_ptr<Slot> slot;
    {
      std::shared_lock lock(sessions_mutex_);
      auto it = sessions_.find(session_id);
      if (it != sessions_.end()) slot = it->second;
    }
    if (!slot) return {nullptr, api_error(404, "unknown session")};
    // student_id and exam are fixed at creation; no slot lock needed.
    if (slot->session.student_id != *student) {
      return {nullptr, api_error(403, "session belongs to another student")};
    }
    return {std::move(slot), {}};
  }

  // Caller holds slot.mutex. Sequence numbers advance only on success.
  std::optional<ApiResponse> write(Slot& slot, const std::vector<Pending>& pending) {
    std::vector<SessionLogEntry> entries;
    auto seq = slot.last_seq;
    const auto ts = rfc3339_now();
    for (const auto& p : pending) {
      entries.push_back({++seq, slot.session.session_id, p.kind, p.payload, ts});
    }
    try {
      append_entries(sink_, entries);
    } catch (const std::exception& e) {
      return api_error(500, std::string("session log unavailable: ") + e.what());
    }
    slot.last_seq = seq;
    return std::nullopt;
  }

  const Bank bank_;
  const HomophoneTable table_;
  LogSink& sink_;

  mutable std::shared_mutex sessions_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Slot>> sessions_;

  mutable std::mutex tokens_mutex_;
  std::unordered_map<std::string, TokenGrant> tokens_;
};

/// Registers the /v1 routes on an httplib server.
inline void mount_routes(httplib::Server& server, ExamService& service) {
  auto send = [](httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body.dump(), "application/json");
  };
  auto auth = [](const httplib::Request& req) {
    return req.get_header_value("Authorization");
  };
  server.Post("/v1/login", [&service, send](const httplib::Request& req,
                                            httplib::Response& res) {
    send(res, service.login(req.body));
  });
  server.Post(R"(/v1/exams/([^/]+)/sessions)",
              [&service, send, auth](const httplib::Request& req,
                                     httplib::Response& res) {
                send(res, service.create_session(auth(req), req.matches[1]));
              });
  server.Get(R"(/v1/sessions/([^/]+)/prompt)",
             [&service, send, auth](const httplib::Request& req,
                                    httplib::Response& res) {
               send(res, service.prompt(auth(req), req.matches[1]));
             });
  server.Post(R"(/v1/sessions/([^/]+)/answers)",
              [&service, send, auth](const httplib::Request& req,
                                     httplib::Response& res) {
                send(res, service.answer(auth(req), req.matches[1], req.body));
              });
  server.Get(R"(/v1/sessions/([^/]+)/result)",
             [&service, send, auth](const httplib::Request& req,
                                    httplib::Response& res) {
               send(res, service.result(auth(req), req.matches[1]));
             });
  server.set_exception_handler([send](const httplib::Request&,
                                      httplib::Response& res,
                                      std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    send(res, api_error(500, message));
  });
}

}  // namespace viva
