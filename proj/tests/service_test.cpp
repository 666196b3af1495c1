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

#include <gtest/gtest.h>

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <future>

#include "http_harness.hpp"
#include "test_support.hpp"
#include "viva/service.hpp"

namespace viva {
namespace {

using nlohmann::json;
using testing::demo_transcripts;
using testing::fixture_bank;

std::string body(const std::string& transcript) {
  return json{{"transcript", transcript}}.dump();
}

std::vector<std::string> texts(const json& script) {
  std::vector<std::string> out;
  for (const auto& u : script.at("utterances")) out.push_back(u.at("text"));
  return out;
}

struct ServiceFixture : ::testing::Test {
  MemoryLogSink sink;
  ExamService service{fixture_bank(), HomophoneTable::defaults(), sink};

  std::string login(const std::string& transcript = "student one two three") {
    auto r = service.login(body(transcript));
    EXPECT_EQ(r.status, 200) << r.body.dump();
    return "Bearer " + r.body.value("token", std::string());
  }

  std::string start(const std::string& auth) {
    auto r = service.create_session(auth, "cbt-demo");
    EXPECT_EQ(r.status, 201) << r.body.dump();
    return r.body.value("session_id", std::string());
  }

  std::vector<SessionLogEntry> entries() const {
    std::vector<SessionLogEntry> out;
    std::istringstream in(sink.content());
    std::string line;
    while (std::getline(in, line)) out.push_back(SessionLogEntry::from_line(line));
    return out;
  }
};

TEST_F(ServiceFixture, Login) {
  auto ok = service.login(body("Student one two three"));
  EXPECT_EQ(ok.status, 200);
  EXPECT_EQ(ok.body["student_id"], "s-001");
  EXPECT_EQ(ok.body["token"].get<std::string>().size(), 32u);
  EXPECT_NE(service.login(body("student one two three")).body["token"], ok.body["token"]);

  EXPECT_EQ(service.login(body("mary oh seven")).body["student_id"], "s-002");
  EXPECT_EQ(service.login(body("nobody")).status, 401);
  EXPECT_EQ(service.login(body("")).status, 401);
  EXPECT_EQ(service.login("").status, 400);
  EXPECT_EQ(service.login(R"({"transcript": 5})").status, 400);
  EXPECT_EQ(service.login("[]").status, 400);
}

TEST(ServiceLogin, SharedCredentialIsConflict) {
  Bank bank = fixture_bank();
  bank.students[1].spoken_credential = bank.students[0].spoken_credential;
  MemoryLogSink sink;
  ExamService service(bank, HomophoneTable::defaults(), sink);
  EXPECT_EQ(service.login(body("student one two three")).status, 409);
}

TEST_F(ServiceFixture, CreateSession) {
  auto auth = login();
  auto r = service.create_session(auth, "cbt-demo");
  ASSERT_EQ(r.status, 201);
  EXPECT_EQ(r.body["state"], (json{{"kind", "asking"}, {"question", 1}}));
  auto logged = entries();
  ASSERT_EQ(logged.size(), 1u);
  EXPECT_EQ(logged[0].kind, EventKind::Started);
  EXPECT_EQ(logged[0].seq, 1u);
  EXPECT_EQ(logged[0].session_id, r.body["session_id"]);

  EXPECT_EQ(service.create_session(auth, "missing").status, 404);
  EXPECT_EQ(service.create_session("", "cbt-demo").status, 401);
  EXPECT_EQ(service.create_session("Bearer nope", "cbt-demo").status, 401);
  EXPECT_NE(start(auth), start(auth));
}

TEST_F(ServiceFixture, PromptIsIdempotentAndLoggedOnce) {
  auto auth = login();
  auto id = start(auth);
  auto first = service.prompt(auth, id);
  ASSERT_EQ(first.status, 200);
  auto lines = texts(first.body);
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[0], "Question 1 What is the Capital of England");
  EXPECT_EQ(first.body["utterances"][0]["kind"], "question");
  auto again = service.prompt(auth, id);
  EXPECT_EQ(again.body, first.body);
  auto logged = entries();
  ASSERT_EQ(logged.size(), 2u);
  EXPECT_EQ(logged[1].kind, EventKind::Prompted);
  EXPECT_EQ(logged[1].seq, 2u);
  // Nothing in the prompt reveals the key.
  EXPECT_EQ(first.body.dump().find("correct"), std::string::npos);
}

TEST_F(ServiceFixture, SessionEndpointErrors) {
  auto auth = login();
  auto other = login("mary oh seven");
  auto id = start(auth);

  EXPECT_EQ(service.prompt(auth, "nope").status, 404);
  EXPECT_EQ(service.prompt("", id).status, 401);
  EXPECT_EQ(service.prompt(other, id).status, 403);
  EXPECT_EQ(service.answer(other, id, body("a")).status, 403);
  EXPECT_EQ(service.result(other, id).status, 403);

  // Answer before the prompt was fetched.
  EXPECT_EQ(service.answer(auth, id, body("a")).status, 409);
  service.prompt(auth, id);
  EXPECT_EQ(service.answer(auth, id, "{}").status, 400);
  EXPECT_EQ(service.answer(auth, id, "not json").status, 400);
  EXPECT_EQ(service.answer(auth, id, R"({"transcript": "a", "confidence": "high"})").status, 400);
  EXPECT_EQ(service.result(auth, id).status, 409);
  EXPECT_EQ(service.result(auth, "nope").status, 404);
}

TEST_F(ServiceFixture, DemoReplayAndResult) {
  auto auth = login();
  auto id = start(auth);
  std::vector<int> scores;
  json last;
  for (const auto& t : demo_transcripts()) {
    ASSERT_EQ(service.prompt(auth, id).status, 200);
    auto r = service.answer(auth, id, body(t));
    ASSERT_EQ(r.status, 200) << r.body.dump();
    scores.push_back(r.body["score"]);
    last = r.body;
  }
  EXPECT_EQ(scores, (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_EQ(texts(last["feedback"]),
            (std::vector<std::string>{"You said: d", "Correct!", "Your score is 4",
                                      "You scored 4 out of 5"}));
  EXPECT_EQ(last["state"]["kind"], "finished");
  EXPECT_EQ(service.prompt(auth, id).status, 409);
  EXPECT_EQ(service.answer(auth, id, body("a")).status, 409);

  auto result = service.result(auth, id);
  ASSERT_EQ(result.status, 200);
  EXPECT_EQ(result.body["score"], 4);
  EXPECT_EQ(result.body["total"], 5);
  ASSERT_EQ(result.body["answers"].size(), 5u);
  EXPECT_EQ(result.body["answers"][0]["result"]["reason"], "empty");

  auto logged = entries();
  ASSERT_EQ(logged.size(), 12u);
  EXPECT_EQ(logged.back().kind, EventKind::Finished);
  for (std::size_t i = 0; i < logged.size(); ++i) EXPECT_EQ(logged[i].seq, i + 1);
}

// Fails every append after `allow` successful ones.
class FailingSink : public LogSink {
 public:
  explicit FailingSink(int allow) : allow_(allow) {}
  void append(std::string_view lines) override {
    if (allow_-- <= 0) throw std::runtime_error("disk full");
    inner.append(lines);
  }
  MemoryLogSink inner;

 private:
  int allow_;
};

TEST(ServiceDurability, NothingChangesWhenTheLogFails) {
  FailingSink sink(2);  // started + prompted succeed
  ExamService service(fixture_bank(), HomophoneTable::defaults(), sink);
  auto token = "Bearer " + service.login(body("student one two three")).body["token"].get<std::string>();
  auto id = service.create_session(token, "cbt-demo").body["session_id"].get<std::string>();
  ASSERT_EQ(service.prompt(token, id).status, 200);
  const auto before = *service.snapshot(id);

  auto r = service.answer(token, id, body("a"));
  EXPECT_EQ(r.status, 500);
  EXPECT_EQ(*service.snapshot(id), before);
  EXPECT_EQ(sink.inner.content().find("answered"), std::string::npos);
}

TEST_F(ServiceFixture, AnsweredEntryIsWrittenBeforeResponse) {
  auto auth = login();
  auto id = start(auth);
  for (std::size_t k = 0; k < demo_transcripts().size(); ++k) {
    service.prompt(auth, id);
    auto r = service.answer(auth, id, body(demo_transcripts()[k]));
    ASSERT_EQ(r.status, 200);
    auto logged = entries();
    int answered = 0;
    for (const auto& e : logged) answered += e.kind == EventKind::Answered;
    EXPECT_EQ(answered, static_cast<int>(k) + 1);
    // The log alone reproduces what the client was just told.
    auto recovered = recover(sink.content(), fixture_bank());
    EXPECT_EQ(recovered.sessions.at(id).session.score, r.body["score"].get<int>());
  }
}

// Holds every append until released, so a request can be caught mid-write.
class GateSink : public LogSink {
 public:
  void append(std::string_view lines) override {
    std::unique_lock lock(mutex_);
    ++waiting_;
    changed_.notify_all();
    changed_.wait(lock, [&] { return open_; });
    content_ += lines;
  }
  void wait_for_writer() {
    std::unique_lock lock(mutex_);
    changed_.wait(lock, [&] { return waiting_ > 0; });
  }
  void open() {
    std::lock_guard lock(mutex_);
    open_ = true;
    changed_.notify_all();
  }

 private:
  std::mutex mutex_;
  std::condition_variable changed_;
  int waiting_ = 0;
  bool open_ = false;
  std::string content_;
};

TEST(ServiceConcurrency, DuplicateAnswerWhileInFlightIs409) {
  MemoryLogSink setup_sink;
  GateSink gate;
  ExamService setup(fixture_bank(), HomophoneTable::defaults(), setup_sink);
  auto token = "Bearer " + setup.login(body("student one two three")).body["token"].get<std::string>();
  auto id = setup.create_session(token, "cbt-demo").body["session_id"].get<std::string>();
  setup.prompt(token, id);

  // Same log content, now behind the gate.
  ExamService service(fixture_bank(), HomophoneTable::defaults(), gate);
  service.restore(recover(setup_sink.content(), fixture_bank()));
  token = "Bearer " + service.login(body("student one two three")).body["token"].get<std::string>();

  auto first = std::async(std::launch::async, [&] { return service.answer(token, id, body("a")); });
  gate.wait_for_writer();
  auto second = service.answer(token, id, body("a"));
  gate.open();
  EXPECT_EQ(second.status, 409);
  EXPECT_EQ(first.get().status, 200);
  EXPECT_EQ(service.snapshot(id)->answers.size(), 1u);
}

TEST_F(ServiceFixture, SessionsAreIsolated) {
  auto alice = login();
  auto bob = login("mary oh seven");
  auto a = start(alice);
  auto b = start(bob);
  const std::vector<std::string> other{"b", "", "c", "c", "a"};
  for (std::size_t k = 0; k < 5; ++k) {
    service.prompt(alice, a);
    service.prompt(bob, b);
    service.answer(alice, a, body(demo_transcripts()[k]));
    service.answer(bob, b, body(other[k]));
  }
  EXPECT_EQ(service.result(alice, a).body["score"], 4);
  EXPECT_EQ(service.result(bob, b).body["score"], 0);
}

TEST(ServiceRestart, ResumesFromFileLog) {
  auto path = std::filesystem::temp_directory_path() / "viva_service_restart.jsonl";
  std::filesystem::remove(path);
  std::string id;
  {
    FileLogSink sink(path);
    ExamService service(fixture_bank(), HomophoneTable::defaults(), sink);
    auto token = "Bearer " + service.login(body("student one two three")).body["token"].get<std::string>();
    id = service.create_session(token, "cbt-demo").body["session_id"].get<std::string>();
    for (int k = 0; k < 3; ++k) {
      service.prompt(token, id);
      service.answer(token, id, body(demo_transcripts()[k]));
    }
  }
  std::ifstream in(path);
  auto recovered = recover(in, fixture_bank());
  ASSERT_TRUE(recovered.clean());
  FileLogSink sink(path);
  ExamService service(fixture_bank(), HomophoneTable::defaults(), sink);
  service.restore(recovered);
  EXPECT_EQ(service.snapshot(id)->state, SessionState{state::Asking{4}});
  auto token = "Bearer " + service.login(body("student one two three")).body["token"].get<std::string>();
  for (int k = 3; k < 5; ++k) {
    ASSERT_EQ(service.prompt(token, id).status, 200);
    ASSERT_EQ(service.answer(token, id, body(demo_transcripts()[k])).status, 200);
  }
  EXPECT_EQ(service.result(token, id).body["score"], 4);

  std::ifstream again(path);
  auto full = recover(again, fixture_bank());
  EXPECT_TRUE(full.clean());
  EXPECT_TRUE(full.sessions.at(id).session.finished());
  std::filesystem::remove(path);
}

TEST(ServiceHttp, EndpointsOverTheWire) {
  MemoryLogSink sink;
  ExamService service(fixture_bank(), HomophoneTable::defaults(), sink);
  testing::HttpHarness harness(service);
  auto client = harness.client();

  auto bad = client.Post("/v1/login", "", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);

  auto login = client.Post("/v1/login", body("student one two three"), "application/json");
  ASSERT_TRUE(login);
  ASSERT_EQ(login->status, 200);
  auto token = json::parse(login->body)["token"].get<std::string>();

  auto missing = client.Post("/v1/exams/cbt-demo/sessions", "", "application/json");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 401);

  auto created = client.Post("/v1/exams/cbt-demo/sessions", testing::bearer(token), "",
                             "application/json");
  ASSERT_TRUE(created);
  ASSERT_EQ(created->status, 201);
  EXPECT_EQ(created->get_header_value("Content-Type"), "application/json");
  auto id = json::parse(created->body)["session_id"].get<std::string>();

  auto unknown = client.Post("/v1/exams/nope/sessions", testing::bearer(token), "",
                             "application/json");
  ASSERT_TRUE(unknown);
  EXPECT_EQ(unknown->status, 404);

  auto early = client.Post("/v1/sessions/" + id + "/answers", testing::bearer(token), body("a"),
                           "application/json");
  ASSERT_TRUE(early);
  EXPECT_EQ(early->status, 409);

  auto prompt = client.Get("/v1/sessions/" + id + "/prompt", testing::bearer(token));
  ASSERT_TRUE(prompt);
  ASSERT_EQ(prompt->status, 200);
  EXPECT_EQ(texts(json::parse(prompt->body)).size(), 6u);

  auto result = client.Get("/v1/sessions/" + id + "/result", testing::bearer(token));
  ASSERT_TRUE(result);
  EXPECT_EQ(result->status, 409);
}

}  // namespace
}  // namespace viva
