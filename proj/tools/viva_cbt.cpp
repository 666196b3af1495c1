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

// viva-cbt: serve the exam API, check banks, run evaluations, and try the
// answer normalizer from a shell.
//
// Exit codes: 0 success, 1 validation or metric error, 2 usage error.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "viva/viva.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

httplib::Server* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

std::string bank_from_env() {
  const char* value = std::getenv("VIVA_CBT_BANK");
  return value ? value : "";
}

viva::HomophoneTable load_table(const std::string& path) {
  if (path.empty()) return viva::HomophoneTable::defaults();
  return viva::HomophoneTable::from_file(path);
}

bool split_listen(const std::string& listen, std::string& host, int& port) {
  auto colon = listen.rfind(':');
  if (colon == std::string::npos) return false;
  host = listen.substr(0, colon);
  if (host.empty()) host = "0.0.0.0";
  try {
    std::size_t used = 0;
    port = std::stoi(listen.substr(colon + 1), &used);
    return used == listen.size() - colon - 1 && port >= 0 && port <= 65535;
  } catch (const std::exception&) {
    return false;
  }
}

int run_serve(const std::string& bank_path, const std::string& log_path,
              const std::string& listen, const std::string& table_path) {
  std::string host;
  int port = 0;
  if (!split_listen(listen, host, port)) {
    std::cerr << "error: --listen expects HOST:PORT, got '" << listen << "'\n";
    return kUsage;
  }
  auto bank = viva::load_bank_file(bank_path);
  auto table = load_table(table_path);

  viva::RecoveryResult recovered;
  if (std::filesystem::exists(log_path)) {
    std::ifstream in(log_path, std::ios::binary);
    recovered = viva::recover(in, bank);
    for (const auto& e : recovered.errors) {
      std::cerr << "warning: session log: " << e.describe() << "\n";
    }
  }
  viva::FileLogSink sink(log_path);
  viva::ExamService service(std::move(bank), std::move(table), sink);
  service.restore(recovered);

  httplib::Server server;
  viva::mount_routes(server, service);
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);

  if (port == 0) {
    port = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    port = -1;
  }
  if (port < 0) {
    std::cerr << "error: cannot listen on " << listen << "\n";
    return kFailed;
  }
  std::cout << "listening on " << host << ":" << port << " ("
            << recovered.sessions.size() << " sessions recovered)"
            << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return kOk;
}

int run_validate(const std::string& path) {
  viva::Bank bank;
  try {
    bank = viva::load_bank_file(path);
  } catch (const viva::BankValidationError& e) {
    for (const auto& v : e.violations()) std::cout << v.describe() << "\n";
    return kFailed;
  }
  std::cout << "OK\n";
  return kOk;
}

int run_eval(const std::string& dataset_path, const std::string& strategy_name,
             bool as_json, const std::string& reference_path,
             const std::string& chart_path, const std::string& table_path) {
  auto strategy = viva::parse_strategy(strategy_name);
  if (!strategy) {
    std::cerr << "error: --strategy must be exact or homophone\n";
    return kUsage;
  }
  std::ifstream in(dataset_path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open " << dataset_path << "\n";
    return kFailed;
  }
  auto records = viva::load_dataset(in);
  auto table = load_table(table_path);
  auto report = viva::evaluate(records, *strategy, table);

  std::vector<viva::Discrepancy> notes;
  if (!reference_path.empty()) {
    std::ifstream ref(reference_path, std::ios::binary);
    if (!ref) {
      std::cerr << "error: cannot open " << reference_path << "\n";
      return kFailed;
    }
    notes = viva::compare_with_reference(report, viva::load_reference(ref));
  }
  if (!chart_path.empty()) {
    std::ofstream chart(chart_path, std::ios::binary | std::ios::trunc);
    chart << viva::render_chart_csv(report);
    if (!chart) {
      std::cerr << "error: cannot write " << chart_path << "\n";
      return kFailed;
    }
  }
  if (as_json) {
    std::cout << viva::report_to_json(report, notes).dump(2) << "\n";
  } else {
    std::cout << viva::render_table(report);
    if (!reference_path.empty()) {
      std::cout << "\ndiscrepancies against " << reference_path << ": "
                << notes.size() << "\n";
      for (const auto& d : notes) std::cout << "  " << d.describe() << "\n";
    }
  }
  return kOk;
}

int run_normalize(const std::string& bank_path, const std::string& exam_id,
                  int question, const std::string& text,
                  const std::string& table_path) {
  auto bank = viva::load_bank_file(bank_path);
  const viva::ExamDefinition* exam =
      exam_id.empty() ? (bank.exams.empty() ? nullptr : &bank.exams.front())
                      : bank.find_exam(exam_id);
  if (!exam) {
    std::cerr << "error: exam not found\n";
    return kFailed;
  }
  if (question < 1 || question > exam->question_count()) {
    std::cerr << "error: exam '" << exam->exam_id << "' has questions 1.."
              << exam->question_count() << "\n";
    return kUsage;
  }
  auto table = load_table(table_path);
  auto result = viva::normalize_answer({text, std::nullopt},
                                       exam->question(question), table);
  std::cout << viva::describe(result) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech-driven computer-based test service"};
  app.require_subcommand(1);

  std::string bank_path = bank_from_env();
  std::string log_path = "sessions.jsonl";
  std::string listen = "127.0.0.1:8080";
  std::string table_path;
  auto* serve = app.add_subcommand("serve", "Run the HTTP exam API");
  serve->add_option("--bank", bank_path, "Bank JSON file (default $VIVA_CBT_BANK)");
  serve->add_option("--log", log_path, "Append-only session log (JSONL)");
  serve->add_option("--listen", listen, "HOST:PORT; port 0 picks a free port");
  serve->add_option("--homophones", table_path, "Homophone table JSON");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate-bank", "Check a bank file");
  validate->add_option("file", validate_path, "Bank JSON file")->required();

  std::string dataset_path;
  std::string strategy = "homophone";
  bool as_json = false;
  std::string reference_path;
  std::string chart_path;
  auto* eval = app.add_subcommand("eval", "Precision/recall/F1 over a labeled dataset");
  eval->add_option("--dataset", dataset_path, "CSV: person,response,label")->required();
  eval->add_option("--strategy", strategy, "exact | homophone");
  eval->add_flag("--json", as_json, "Print the report as JSON");
  eval->add_option("--reference", reference_path,
                   "Published counts CSV to compare against");
  eval->add_option("--chart", chart_path, "Write chart data CSV here");
  eval->add_option("--homophones", table_path, "Homophone table JSON");

  int question = 0;
  std::string exam_id;
  std::string text;
  auto* normalize = app.add_subcommand("normalize", "Map one transcript to an option");
  normalize->add_option("--question", question, "Question number")->required();
  normalize->add_option("--bank", bank_path, "Bank JSON file (default $VIVA_CBT_BANK)");
  normalize->add_option("--exam", exam_id, "Exam id (default: first exam)");
  normalize->add_option("--homophones", table_path, "Homophone table JSON");
  normalize->add_option("text", text, "Transcript text")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*serve || *normalize) {
      if (bank_path.empty()) {
        std::cerr << "error: no bank file; pass --bank or set VIVA_CBT_BANK\n";
        return kUsage;
      }
    }
    if (*serve) return run_serve(bank_path, log_path, listen, table_path);
    if (*validate) return run_validate(validate_path);
    if (*eval) {
      return run_eval(dataset_path, strategy, as_json, reference_path,
                      chart_path, table_path);
    }
    if (*normalize) {
      return run_normalize(bank_path, exam_id, question, text, table_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}
