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

// Recorded model traces, one JSON object per line (schema version 1).
//
// Required fields:
//   schema_version       integer, must equal kTraceSchemaVersion
//   query_id             string, unique within a file
//   question             string
//   gold_answers         array of strings
//   steps                array of {"entropy_nats": number >= 0, "gap": number >= 0},
//                        one per drafted token, at least one
//   answer_no_ctx        string, answer decoded from the base prompt
//   answer_with_ctx      string, answer decoded with retrieved context
//   out_tokens_no_ctx    integer >= 0
//   out_tokens_with_ctx  integer >= 0
//
// Optional fields:
//   samples              N x k array of non-negative token ids (N >= 2)
//   sample_temperature   number > 0 (default 0.7)
//   raw_rows             k arrays of full-vocabulary logits reproducing `steps`
//   output_steps         per-token {"entropy_nats", "gap"} of the no-context
//                        answer; needed for the mid-generation re-check
//   ctx_tokens           integer, size of the context the answer_with_ctx
//                        branch saw; used when no index is configured
//   query_embedding      array of numbers, the query vector for dense search
//   prompt_template      string recorded by the producer
//
// Any other field is rejected.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gatedrag/gate.hpp"

namespace gatedrag {

inline constexpr int kTraceSchemaVersion = 1;

struct TraceRecord {
  std::string query_id;
  std::string question;
  std::vector<std::string> gold_answers;
  PrefixDraft draft;
  std::optional<StochasticPrefixSet> samples;
  std::string answer_no_ctx;
  std::string answer_with_ctx;
  std::size_t out_tokens_no_ctx = 0;
  std::size_t out_tokens_with_ctx = 0;
  std::vector<StepStats> output_steps;
  std::optional<std::size_t> ctx_tokens;
  std::vector<float> query_embedding;
  std::optional<std::string> prompt_template;
};

/// Parses and validates one line. Throws format on any schema violation.
TraceRecord parse_trace_line(std::string_view line);

/// Serializes one record as a single JSON line (no trailing newline).
/// Fields are emitted in schema order; optional fields only when present.
std::string emit_trace_line(const TraceRecord& record);

/// Reads a whole trace file; duplicate query ids are a data_integrity error.
std::vector<TraceRecord> read_trace_file(const std::filesystem::path& path);
void write_trace_file(const std::filesystem::path& path,
                      std::span<const TraceRecord> records);

}  // namespace gatedrag
