// Copyright 2026 The gatedrag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gatedrag/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "gatedrag/calibration.hpp"
#include "gatedrag/error.hpp"
#include "text_util.hpp"

namespace gatedrag {

namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) ||
         (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

std::vector<std::string_view> answer_tokens(const std::string& normalized) {
  return detail::whitespace_tokens(normalized);
}

double f1_single(const std::vector<std::string_view>& pred,
                 const std::vector<std::string_view>& gold) {
  if (pred.empty() || gold.empty()) {
    return pred.empty() && gold.empty() ? 1.0 : 0.0;
  }
  std::map<std::string_view, std::size_t> counts;
  for (auto t : gold) ++counts[t];
  std::size_t common = 0;
  for (auto t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision =
      static_cast<double>(common) / static_cast<double>(pred.size());
  const double recall =
      static_cast<double>(common) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(s);
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

const std::vector<std::string> kMetricHeader = {
    "label", "tau", "em", "f1", "retrieval_rate", "delta_latency_s",
    "mean_tokens"};

double parse_number(std::string_view s, std::string_view column) {
  const auto v = detail::parse_double(s);
  GATEDRAG_REQUIRE(v.has_value(), ErrorCode::format,
                   "column '{}': '{}' is not a number", column, s);
  return *v;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_ascii_punct(c)) continue;
    cleaned += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
  }
  std::string out;
  for (auto tok : detail::whitespace_tokens(cleaned)) {
    if (tok == "a" || tok == "an" || tok == "the") continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

double exact_match(std::string_view prediction,
                   std::span<const std::string> golds) {
  const std::string p = normalize_answer(prediction);
  for (const auto& g : golds) {
    if (normalize_answer(g) == p) return 1.0;
  }
  return 0.0;
}

double f1_score(std::string_view prediction, std::span<const std::string> golds) {
  const std::string p = normalize_answer(prediction);
  const auto pred = answer_tokens(p);
  double best = 0.0;
  for (const auto& g : golds) {
    const std::string gn = normalize_answer(g);
    best = std::max(best, f1_single(pred, answer_tokens(gn)));
  }
  return best;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "md" || name == "markdown") return ReportFormat::markdown;
  fail(ErrorCode::invalid_config, "unknown report format '{}' (csv or md)",
       name);
}

MetricRow to_metric_row(std::string label, std::optional<double> tau,
                        const RunSummary& summary) {
  MetricRow row;
  row.label = std::move(label);
  row.tau = tau;
  row.em = summary.em;
  row.f1 = summary.f1;
  row.retrieval_rate = summary.retrieval_rate;
  row.delta_latency_s = summary.delta_latency_s;
  row.mean_tokens = summary.mean_tokens;
  return row;
}

OutcomeSet collect_outcomes(std::span<const Query> queries,
                            const PipelineOptions& options,
                            Generator& generator, Retriever* retriever) {
  GATEDRAG_REQUIRE(!options.gate.recheck_stride, ErrorCode::invalid_config,
                   "sweeps do not support the re-check stride");
  PipelineOptions scored = options;
  scored.policy = Policy::gate;
  scored.gate.tau = kNeverRetrieve;
  PipelineOptions never = options;
  never.policy = Policy::never;
  PipelineOptions always = options;
  always.policy = Policy::always;

  const auto g = run_dataset(queries, scored, generator, retriever);
  const auto n = run_dataset(queries, never, generator, retriever);
  const auto a = run_dataset(queries, always, generator, retriever);

  OutcomeSet set;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const RunRecord* failed = g.records[i].error   ? &g.records[i]
                              : n.records[i].error ? &n.records[i]
                              : a.records[i].error ? &a.records[i]
                                                   : nullptr;
    if (failed) {
      set.failures.push_back(*failed);
      continue;
    }
    QueryOutcomes q;
    q.query_id = queries[i].id;
    q.score = *g.records[i].score;
    q.gate_tokens.draft = g.records[i].tokens.draft;
    q.gate_tokens.samples = g.records[i].tokens.samples;
    q.never = n.records[i];
    q.always = a.records[i];
    set.outcomes.push_back(std::move(q));
  }
  return set;
}

std::vector<RunRecord> gated_records(std::span<const QueryOutcomes> outcomes,
                                     const PipelineOptions& options,
                                     double tau) {
  std::vector<RunRecord> out;
  out.reserve(outcomes.size());
  for (const auto& q : outcomes) {
    RunRecord r = decide(q.score, tau) ? q.always : q.never;
    r.score = q.score;
    r.tokens.draft = q.gate_tokens.draft;
    r.tokens.samples = q.gate_tokens.samples;
    r.latency_s = simulated_latency(options, r.tokens, r.retrieved);
    r.never_out_tokens = q.never.tokens.output;
    r.never_latency_s = q.never.latency_s;
    r.delta_latency_s = r.latency_s - q.never.latency_s;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<MetricRow> sweep(std::span<const QueryOutcomes> outcomes,
                             const PipelineOptions& options,
                             std::span<const double> tau_grid) {
  GATEDRAG_REQUIRE(!tau_grid.empty(), ErrorCode::invalid_config,
                   "threshold grid is empty");
  GATEDRAG_REQUIRE(!options.gate.recheck_stride, ErrorCode::invalid_config,
                   "sweeps do not support the re-check stride");
  std::vector<double> grid(tau_grid.begin(), tau_grid.end());
  for (double t : grid) {
    GATEDRAG_REQUIRE(!std::isnan(t), ErrorCode::invalid_config,
                     "threshold grid contains NaN");
  }
  std::sort(grid.begin(), grid.end());

  std::vector<RunRecord> never, always;
  for (const auto& q : outcomes) {
    never.push_back(q.never);
    always.push_back(q.always);
  }
  std::vector<MetricRow> rows;
  rows.push_back(to_metric_row("never", std::nullopt, summarize(never, options)));
  rows.push_back(
      to_metric_row("always", std::nullopt, summarize(always, options)));
  const std::string label(to_string(options.gate.kind));
  for (double tau : grid) {
    const auto records = gated_records(outcomes, options, tau);
    rows.push_back(to_metric_row(label, tau, summarize(records, options)));
  }
  return rows;
}

std::string render_csv(const Table& table) {
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += csv_field(fields[i]);
    }
    out += '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
  return out;
}

std::string render_markdown(const Table& table) {
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    out += '|';
    for (const auto& f : fields) {
      out += ' ';
      out += f;
      out += " |";
    }
    out += '\n';
  };
  line(table.header);
  out += '|';
  for (std::size_t i = 0; i < table.header.size(); ++i) out += " --- |";
  out += '\n';
  for (const auto& r : table.rows) line(r);
  return out;
}

Table parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool at_start = true;  // nothing consumed on the current line yet
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    at_start = false;
    if (c == '"') {
      GATEDRAG_REQUIRE(field.empty(), ErrorCode::format,
                       "quote inside an unquoted CSV field");
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      field.clear();
      lines.push_back(std::move(fields));
      fields.clear();
      at_start = true;
    } else if (c != '\r') {
      field += c;
    }
  }
  GATEDRAG_REQUIRE(!quoted, ErrorCode::format, "unterminated quoted CSV field");
  if (!at_start) {
    fields.push_back(std::move(field));
    lines.push_back(std::move(fields));
  }
  GATEDRAG_REQUIRE(!lines.empty(), ErrorCode::format, "CSV has no header");
  Table t;
  t.header = std::move(lines.front());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    GATEDRAG_REQUIRE(lines[i].size() == t.header.size(), ErrorCode::format,
                     "CSV line {} has {} fields, header has {}", i + 1,
                     lines[i].size(), t.header.size());
    t.rows.push_back(std::move(lines[i]));
  }
  return t;
}

std::string format_double(double v) { return fmt::format("{}", v); }

std::string emit_report(std::span<const MetricRow> rows, ReportFormat format) {
  Table t;
  if (format == ReportFormat::csv) {
    t.header = kMetricHeader;
    for (const auto& r : rows) {
      t.rows.push_back({r.label, r.tau ? format_double(*r.tau) : "",
                        format_double(r.em), format_double(r.f1),
                        format_double(r.retrieval_rate),
                        format_double(r.delta_latency_s),
                        format_double(r.mean_tokens)});
    }
    return render_csv(t);
  }
  t.header = {"Method", "tau", "EM / F1 (%)", "Retrieval Rate",
              "Delta Latency (s)", "Mean Tokens"};
  for (const auto& r : rows) {
    t.rows.push_back({r.label, r.tau ? format_double(*r.tau) : "--",
                      fmt::format("{:.1f} / {:.1f}", r.em, r.f1),
                      fmt::format("{:.3f}", r.retrieval_rate),
                      fmt::format("{:+.3f}", r.delta_latency_s),
                      fmt::format("{:.1f}", r.mean_tokens)});
  }
  return render_markdown(t);
}

std::vector<MetricRow> read_csv_report(std::string_view text) {
  const Table t = parse_csv(text);
  GATEDRAG_REQUIRE(t.header == kMetricHeader, ErrorCode::format,
                   "unexpected report header");
  std::vector<MetricRow> rows;
  for (const auto& f : t.rows) {
    MetricRow r;
    r.label = f[0];
    if (!f[1].empty()) r.tau = parse_number(f[1], "tau");
    r.em = parse_number(f[2], "em");
    r.f1 = parse_number(f[3], "f1");
    r.retrieval_rate = parse_number(f[4], "retrieval_rate");
    r.delta_latency_s = parse_number(f[5], "delta_latency_s");
    r.mean_tokens = parse_number(f[6], "mean_tokens");
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace gatedrag
