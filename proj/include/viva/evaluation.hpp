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
#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "viva/normalizer.hpp"
#include "viva/option_label.hpp"

namespace viva {

// ---------------------------------------------------------------------------
// Labeled datasets

struct LabeledRecord {
  std::string person_id;
  std::string response;
  OptionLabel truth = OptionLabel::A;

  bool operator==(const LabeledRecord&) const = default;
};

/// Problem in a CSV input, with its 1-based line number.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t line, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace csv {

/// Splits one CSV line. Fields may be double-quoted with "" as an escaped
/// quote; quoted fields cannot span lines.
inline std::vector<std::string> split_line(std::string_view line,
                                           std::size_t line_number) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      if (!field.empty() || was_quoted) {
        throw DatasetError(line_number, "stray quote inside a field");
      }
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      if (was_quoted) {
        throw DatasetError(line_number, "text after a closing quote");
      }
      field.push_back(c);
    }
  }
  if (quoted) throw DatasetError(line_number, "unterminated quoted field");
  fields.push_back(std::move(field));
  return fields;
}

/// Reads lines, stripping CR and a UTF-8 BOM. Calls fn(line_number, fields)
/// for every non-blank line after the header, which must equal `header`.
template <typename Fn>
void for_each_row(std::istream& in, std::string_view header, Fn&& fn) {
  std::string line;
  std::size_t line_number = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_number == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    if (!seen_header) {
      if (trim(line) != header) {
        throw DatasetError(line_number,
                           "expected header '" + std::string(header) + "'");
      }
      seen_header = true;
      continue;
    }
    fn(line_number, split_line(line, line_number));
  }
  if (!seen_header) throw DatasetError(line_number + 1, "missing header");
}

}  // namespace csv

/// CSV with header `person,response,label`; one record per line, file order
/// kept. The response may be empty (silence).
inline std::vector<LabeledRecord> load_dataset(std::istream& source) {
  std::vector<LabeledRecord> records;
  csv::for_each_row(
      source, "person,response,label",
      [&](std::size_t line, std::vector<std::string> fields) {
        if (fields.size() != 3) {
          throw DatasetError(line, "expected 3 fields, got " +
                                       std::to_string(fields.size()));
        }
        auto label_text = std::string(trim(fields[2]));
        auto label = parse_label(label_text);
        if (!label || label_text != to_string(*label)) {
          throw DatasetError(line, "invalid label '" + label_text + "'");
        }
        records.push_back({std::move(fields[0]), std::move(fields[1]), *label});
      });
  return records;
}

// ---------------------------------------------------------------------------
// Confusion counts

enum class Strategy { ExactLetter, Homophone };

inline std::string_view to_string(Strategy strategy) {
  return strategy == Strategy::ExactLetter ? "exact-letter" : "homophone";
}

inline std::optional<Strategy> parse_strategy(std::string_view text) {
  if (text == "exact" || text == "exact-letter") return Strategy::ExactLetter;
  if (text == "homophone") return Strategy::Homophone;
  return std::nullopt;
}

struct LabelCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long n = 0;  // support: records whose truth is this label

  bool operator==(const LabelCounts&) const = default;
};

struct ConfusionCounts {
  std::array<LabelCounts, kLabelCount> labels{};

  LabelCounts& operator[](OptionLabel l) { return labels[ordinal(l)]; }
  const LabelCounts& operator[](OptionLabel l) const {
    return labels[ordinal(l)];
  }

  bool operator==(const ConfusionCounts&) const = default;
};

inline NormalizationResult predict(
    const LabeledRecord& record, Strategy strategy,
    const HomophoneTable& table = HomophoneTable::defaults()) {
  Transcript t{record.response, std::nullopt};
  return strategy == Strategy::ExactLetter ? exact_letter_only(t)
                                           : normalize_letter(t, table);
}

/// Multiclass tally with abstention. A wrong label costs fn for the truth
/// and fp for the predicted label; NoMatch costs fn only.
inline ConfusionCounts confusion(
    std::span<const LabeledRecord> records, Strategy strategy,
    const HomophoneTable& table = HomophoneTable::defaults()) {
  ConfusionCounts counts;
  for (const auto& record : records) {
    auto& truth = counts[record.truth];
    ++truth.n;
    auto result = predict(record, strategy, table);
    const auto* m = as_matched(result);
    if (m && m->label == record.truth) {
      ++truth.tp;
    } else {
      ++truth.fn;
      if (m) ++counts[m->label].fp;
    }
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricRow {
  OptionLabel label = OptionLabel::A;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool undefined_precision = false;  // tp + fp == 0
  bool undefined_recall = false;     // tp + fn == 0
  long support = 0;
};

/// Zero denominators give 0 with the matching flag set; f1 is 0 when
/// precision + recall is 0.
inline MetricRow metric_row(OptionLabel label, const LabelCounts& c) {
  MetricRow row;
  row.label = label;
  row.support = c.n;
  const long predicted = c.tp + c.fp;
  const long actual = c.tp + c.fn;
  row.undefined_precision = predicted == 0;
  row.undefined_recall = actual == 0;
  if (predicted > 0) row.precision = static_cast<double>(c.tp) / predicted;
  if (actual > 0) row.recall = static_cast<double>(c.tp) / actual;
  const double sum = row.precision + row.recall;
  if (sum > 0) row.f1 = 2.0 * row.precision * row.recall / sum;
  return row;
}

inline std::array<MetricRow, kLabelCount> metrics(const ConfusionCounts& c) {
  std::array<MetricRow, kLabelCount> rows;
  for (auto label : kAllLabels) rows[ordinal(label)] = metric_row(label, c[label]);
  return rows;
}

struct MacroAverages {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

class NoSupportedLabelsError : public std::domain_error {
 public:
  NoSupportedLabelsError()
      : std::domain_error("macro average needs at least one label with support") {}
};

/// Unweighted mean over rows with support > 0.
inline MacroAverages macro_average(std::span<const MetricRow> rows) {
  MacroAverages sum;
  int supported = 0;
  for (const auto& row : rows) {
    if (row.support <= 0) continue;
    sum.precision += row.precision;
    sum.recall += row.recall;
    sum.f1 += row.f1;
    ++supported;
  }
  if (supported == 0) throw NoSupportedLabelsError();
  return {sum.precision / supported, sum.recall / supported, sum.f1 / supported};
}

struct EvaluationReport {
  Strategy strategy = Strategy::ExactLetter;
  std::size_t dataset_size = 0;
  ConfusionCounts counts;
  std::array<MetricRow, kLabelCount> rows;
  std::optional<MacroAverages> macro;  // empty when no label has support
};

inline EvaluationReport evaluate(
    std::span<const LabeledRecord> records, Strategy strategy,
    const HomophoneTable& table = HomophoneTable::defaults()) {
  EvaluationReport report;
  report.strategy = strategy;
  report.dataset_size = records.size();
  report.counts = confusion(records, strategy, table);
  report.rows = metrics(report.counts);
  try {
    report.macro = macro_average(report.rows);
  } catch (const NoSupportedLabelsError&) {
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reference comparison
//
// A reference table holds externally published counts and 2-dp metrics.
// Three checks run against it: our counts vs its counts, our metrics vs its
// metrics, and its metrics vs what its own counts imply.

struct ReferenceRow {
  OptionLabel label = OptionLabel::A;
  LabelCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// CSV with header `label,tp,fp,fn,n,precision,recall,f1`.
inline std::vector<ReferenceRow> load_reference(std::istream& source) {
  std::vector<ReferenceRow> rows;
  csv::for_each_row(
      source, "label,tp,fp,fn,n,precision,recall,f1",
      [&](std::size_t line, const std::vector<std::string>& fields) {
        if (fields.size() != 8) throw DatasetError(line, "expected 8 fields");
        auto label_text = std::string(trim(fields[0]));
        auto label = parse_label(label_text);
        if (!label || label_text != to_string(*label)) {
          throw DatasetError(line, "invalid label '" + label_text + "'");
        }
        ReferenceRow row;
        row.label = *label;
        try {
          std::size_t used = 0;
          auto whole = [&](const std::string& f) {
            long v = std::stol(f, &used);
            if (used != f.size() || v < 0) throw std::invalid_argument(f);
            return v;
          };
          auto real = [&](const std::string& f) {
            double v = std::stod(f, &used);
            if (used != f.size()) throw std::invalid_argument(f);
            return v;
          };
          row.counts = {whole(fields[1]), whole(fields[2]), whole(fields[3]),
                        whole(fields[4])};
          row.precision = real(fields[5]);
          row.recall = real(fields[6]);
          row.f1 = real(fields[7]);
        } catch (const std::logic_error&) {
          throw DatasetError(line, "malformed number");
        }
        rows.push_back(row);
      });
  return rows;
}

enum class DiscrepancyKind {
  CountMismatch,       // our tally vs reference count
  MetricMismatch,      // our metric vs reference metric
  ReferenceInternal,   // reference metric vs its own counts
};

inline std::string_view to_string(DiscrepancyKind kind) {
  switch (kind) {
    case DiscrepancyKind::CountMismatch: return "count";
    case DiscrepancyKind::MetricMismatch: return "metric";
    case DiscrepancyKind::ReferenceInternal: return "reference-internal";
  }
  return "?";
}

struct Discrepancy {
  OptionLabel label = OptionLabel::A;
  DiscrepancyKind kind = DiscrepancyKind::CountMismatch;
  std::string field;  // tp, fp, fn, n, precision, recall, f1
  double computed = 0.0;
  double reference = 0.0;
  bool within_tolerance = false;

  std::string describe() const;
};

inline std::string format_fixed(double value, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

inline std::string Discrepancy::describe() const {
  const bool is_count = kind == DiscrepancyKind::CountMismatch;
  auto show = [&](double v) {
    return is_count ? std::to_string(static_cast<long>(v)) : format_fixed(v, 4);
  };
  std::string out = "row " + to_string(label) + " " + field + ": ";
  if (kind == DiscrepancyKind::ReferenceInternal) {
    out += "reference prints " + format_fixed(reference, 2) +
           " but its own counts give " + show(computed);
  } else {
    out += "computed " + show(computed) + " vs reference " +
           (is_count ? show(reference) : format_fixed(reference, 2));
  }
  if (!is_count) {
    out += within_tolerance ? " (within tolerance)" : " (exceeds tolerance)";
  }
  return out;
}

inline constexpr double kReferenceTolerance = 0.01;

namespace detail {

// A 2-dp reference value disagrees when the rounded computed value differs.
inline bool differs_at_2dp(double computed, double reference) {
  return std::abs(std::round(computed * 100.0) - std::round(reference * 100.0)) >
         0.5;
}

inline void compare_metrics(OptionLabel label, const MetricRow& computed,
                            const ReferenceRow& ref, DiscrepancyKind kind,
                            double tolerance, std::vector<Discrepancy>& out) {
  const std::array<std::pair<const char*, std::pair<double, double>>, 3> pairs{{
      {"precision", {computed.precision, ref.precision}},
      {"recall", {computed.recall, ref.recall}},
      {"f1", {computed.f1, ref.f1}},
  }};
  for (const auto& [field, values] : pairs) {
    const auto [mine, theirs] = values;
    if (!differs_at_2dp(mine, theirs)) continue;
    out.push_back({label, kind, field, mine, theirs,
                   std::abs(mine - theirs) <= tolerance + 1e-9});
  }
}

}  // namespace detail

inline std::vector<Discrepancy> compare_with_reference(
    const EvaluationReport& report, std::span<const ReferenceRow> reference,
    double tolerance = kReferenceTolerance) {
  std::vector<Discrepancy> out;
  for (const auto& ref : reference) {
    const auto& mine = report.counts[ref.label];
    const std::array<std::pair<const char*, std::pair<long, long>>, 4> counts{{
        {"tp", {mine.tp, ref.counts.tp}},
        {"fp", {mine.fp, ref.counts.fp}},
        {"fn", {mine.fn, ref.counts.fn}},
        {"n", {mine.n, ref.counts.n}},
    }};
    for (const auto& [field, values] : counts) {
      if (values.first != values.second) {
        out.push_back({ref.label, DiscrepancyKind::CountMismatch, field,
                       static_cast<double>(values.first),
                       static_cast<double>(values.second), false});
      }
    }
    detail::compare_metrics(ref.label, report.rows[ordinal(ref.label)], ref,
                            DiscrepancyKind::MetricMismatch, tolerance, out);
    detail::compare_metrics(ref.label, metric_row(ref.label, ref.counts), ref,
                            DiscrepancyKind::ReferenceInternal, tolerance, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

inline std::string flags_text(const MetricRow& row) {
  std::string out;
  if (row.undefined_precision) out += "undefined-precision";
  if (row.undefined_recall) {
    if (!out.empty()) out += ",";
    out += "undefined-recall";
  }
  return out;
}

/// Fixed-width table: LABEL TP FP FN N PRECISION RECALL F1_SCORE, values at
/// 2 dp, followed by the macro averages.
inline std::string render_table(const EvaluationReport& report) {
  std::ostringstream out;
  char line[160];
  out << "strategy: " << to_string(report.strategy)
      << "  records: " << report.dataset_size << "\n";
  std::snprintf(line, sizeof line, "%-6s %4s %4s %4s %4s %10s %8s %9s  %s\n",
                "LABEL", "TP", "FP", "FN", "N", "PRECISION", "RECALL",
                "F1_SCORE", "FLAGS");
  out << line;
  for (const auto& row : report.rows) {
    const auto& c = report.counts[row.label];
    std::snprintf(line, sizeof line,
                  "%-6c %4ld %4ld %4ld %4ld %10.2f %8.2f %9.2f  %s\n",
                  to_char(row.label), c.tp, c.fp, c.fn, c.n, row.precision,
                  row.recall, row.f1, flags_text(row).c_str());
    out << line;
  }
  if (report.macro) {
    std::snprintf(line, sizeof line, "%-6s %4s %4s %4s %4s %10.2f %8.2f %9.2f\n",
                  "MACRO", "", "", "", "", report.macro->precision,
                  report.macro->recall, report.macro->f1);
  } else {
    std::snprintf(line, sizeof line, "%-6s %4s %4s %4s %4s %10s %8s %9s\n",
                  "MACRO", "", "", "", "", "n/a", "n/a", "n/a");
  }
  out << line;
  return out.str();
}

/// `label,precision,recall,f1`, one row per label, 4 dp.
inline std::string render_chart_csv(const EvaluationReport& report) {
  std::string out = "label,precision,recall,f1\n";
  for (const auto& row : report.rows) {
    out += to_string(row.label) + "," + format_fixed(row.precision, 4) + "," +
           format_fixed(row.recall, 4) + "," + format_fixed(row.f1, 4) + "\n";
  }
  return out;
}

inline nlohmann::json report_to_json(
    const EvaluationReport& report,
    std::span<const Discrepancy> discrepancies = {}) {
  using nlohmann::json;
  auto round4 = [](double v) { return std::round(v * 10000.0) / 10000.0; };
  json rows = json::array();
  for (const auto& row : report.rows) {
    const auto& c = report.counts[row.label];
    json flags = json::array();
    if (row.undefined_precision) flags.push_back("undefined-precision");
    if (row.undefined_recall) flags.push_back("undefined-recall");
    rows.push_back({{"label", to_string(row.label)},
                    {"tp", c.tp},
                    {"fp", c.fp},
                    {"fn", c.fn},
                    {"n", c.n},
                    {"precision", round4(row.precision)},
                    {"recall", round4(row.recall)},
                    {"f1", round4(row.f1)},
                    {"flags", std::move(flags)}});
  }
  json out = {{"strategy", to_string(report.strategy)},
              {"dataset_size", report.dataset_size},
              {"rows", std::move(rows)}};
  if (report.macro) {
    out["macro"] = {{"precision", round4(report.macro->precision)},
                    {"recall", round4(report.macro->recall)},
                    {"f1", round4(report.macro->f1)}};
  } else {
    out["macro"] = nullptr;
  }
  if (!discrepancies.empty()) {
    json notes = json::array();
    for (const auto& d : discrepancies) {
      notes.push_back({{"label", to_string(d.label)},
                       {"kind", to_string(d.kind)},
                       {"field", d.field},
                       {"computed", round4(d.computed)},
                       {"reference", d.reference},
                       {"within_tolerance", d.within_tolerance},
                       {"note", d.describe()}});
    }
    out["discrepancies"] = std::move(notes);
  }
  return out;
}

}  // namespace viva
