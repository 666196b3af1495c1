#pragma once

// Builds a session log straight from the engine (no service involved) and
// records the session as it stood after each entry.

#include <string>
#include <vector>

#include "viva/exam_engine.hpp"
#include "viva/session_log.hpp"

namespace viva::testing {

struct BuiltLog {
  std::vector<std::string> lines;      // one JSONL line each, '\n' included
  std::vector<ExamSession> after;      // session state after lines[i]

  std::string prefix(std::size_t n) const {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) out += lines[i];
    return out;
  }
};

inline BuiltLog build_log(const ExamDefinition& exam, const std::string& session_id,
                          const std::vector<std::string>& transcripts,
                          const HomophoneTable& table = HomophoneTable::defaults()) {
  BuiltLog log;
  std::uint64_t seq = 0;
  auto emit = [&](EventKind kind, nlohmann::json payload, const ExamSession& s) {
    log.lines.push_back(
        SessionLogEntry{++seq, session_id, kind, std::move(payload), "2026-10-17T00:00:00.000Z"}
            .to_line());
    log.after.push_back(s);
  };
  auto s = start_session(exam, "s-001", session_id);
  emit(EventKind::Started, events::started(s), s);
  for (const auto& t : transcripts) {
    if (s.finished()) break;
    if (const auto* asking = std::get_if<state::Asking>(&s.state)) {
      const int k = asking->question;
      s = render_prompt(s, exam).session;
      emit(EventKind::Prompted, events::prompted(k), s);
    }
    const auto before = s;
    const int k = std::get<state::AwaitingAnswer>(s.state).question;
    auto result = normalize_answer({t, std::nullopt}, exam.question(k), table);
    auto out = apply_answer(s, exam, t, result);
    s = out.session;
    emit(EventKind::Answered, events::answered(before, out, t, result), s);
    if (s.finished()) emit(EventKind::Finished, events::finished(s, exam), s);
  }
  return log;
}

}  // namespace viva::testing
