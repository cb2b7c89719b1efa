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

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gatedrag/pipeline.hpp"

namespace gatedrag {

/// SQuAD-style: lowercase, drop ASCII punctuation, drop the whole words
/// "a", "an", "the", collapse whitespace. Idempotent.
std::string normalize_answer(std::string_view text);

/// 1 iff the normalized prediction equals some normalized gold; 0 when
/// `golds` is empty.
double exact_match(std::string_view prediction,
                   std::span<const std::string> golds);

/// Multiset token F1 over normalized tokens, maximized over golds. Both
/// sides empty scores 1, one side empty scores 0.
double f1_score(std::string_view prediction, std::span<const std::string> golds);

enum class ReportFormat { csv, markdown };

/// Throws invalid_config for names other than "csv", "md" and "markdown".
ReportFormat parse_report_format(std::string_view name);

/// One operating point. Baseline rows have no tau.
struct MetricRow {
  std::string label;
  std::optional<double> tau;
  double em = 0.0;  // percent
  double f1 = 0.0;  // percent
  double retrieval_rate = 0.0;
  double delta_latency_s = 0.0;
  double mean_tokens = 0.0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

MetricRow to_metric_row(std::string label, std::optional<double> tau,
                        const RunSummary& summary);

/// Everything a sweep needs for one query, computed once: the gate score,
/// the drafting tokens it cost, and both answer branches.
struct QueryOutcomes {
  std::string query_id;
  double score = 0.0;
  TokenCounts gate_tokens;  // draft and samples only
  RunRecord never;
  RunRecord always;
};

/// Runs the gate and both branches per query. Failed queries are returned
/// in `failures` and left out of the outcomes.
struct OutcomeSet {
  std::vector<QueryOutcomes> outcomes;
  std::vector<RunRecord> failures;
};
OutcomeSet collect_outcomes(std::span<const Query> queries,
                            const PipelineOptions& options,
                            Generator& generator, Retriever* retriever);

/// Records of the gated policy at `tau`, assembled from stored outcomes.
std::vector<RunRecord> gated_records(std::span<const QueryOutcomes> outcomes,
                                     const PipelineOptions& options, double tau);

/// Never and Always baseline rows followed by one gated row per grid value
/// in ascending order. Throws invalid_config for an empty grid, NaN values,
/// or a configured re-check stride.
std::vector<MetricRow> sweep(std::span<const QueryOutcomes> outcomes,
                             const PipelineOptions& options,
                             std::span<const double> tau_grid);

/// Plain string table shared by all report emitters.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Comma-separated, CRLF-free, fields quoted only when they contain a comma,
/// quote or newline.
std::string render_csv(const Table& table);
std::string render_markdown(const Table& table);
/// Inverse of render_csv. Throws format on malformed input.
Table parse_csv(std::string_view text);

/// CSV columns: label,tau,em,f1,retrieval_rate,delta_latency_s,mean_tokens
/// with shortest round-trip numbers and an empty tau for baselines. The
/// markdown table rounds EM/F1 to one decimal and prints "--" for baseline
/// tau.
std::string emit_report(std::span<const MetricRow> rows, ReportFormat format);

/// Parses the CSV produced by emit_report.
std::vector<MetricRow> read_csv_report(std::string_view text);

/// Shortest representation that parses back to the same double; "inf",
/// "-inf" for infinities.
std::string format_double(double v);

}  // namespace gatedrag
