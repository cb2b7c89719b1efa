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

// Per-query gated inference: draft, score, decide, optionally retrieve and
// format context, then generate. Generators and retrievers are pluggable;
// the bundled generator replays recorded traces.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gatedrag/gate.hpp"
#include "gatedrag/retrieval.hpp"
#include "gatedrag/trace.hpp"

namespace gatedrag {

struct Query {
  std::string id;
  std::string question;
  std::vector<std::string> gold_answers;
  std::vector<float> embedding;  // empty when unavailable
};

/// Reads {"query_id", "question", "gold_answers"} JSON lines.
std::vector<Query> read_dataset(const std::filesystem::path& path);

struct PromptTemplate {
  std::string base =
      "Answer the question with a short answer.\nQuestion: {question}\nAnswer:";
  std::string with_context = "Context:\n{context}\n\n{prompt}";

  /// Substitutes every "{question}".
  std::string build(std::string_view question) const;
  /// Substitutes "{context}" and "{prompt}" in `with_context`.
  std::string build_with_context(std::string_view prompt,
                                 std::string_view context) const;
};

struct GenerateRequest {
  std::string_view query_id;
  std::string_view prompt;
  bool with_context = false;
  // Output tokens already emitted before a mid-generation retrieval.
  std::size_t resume_after = 0;
};

struct Generation {
  std::string answer;
  std::size_t out_tokens = 0;
  // Per-output-token statistics; may be empty if the generator has none.
  std::vector<StepStats> steps;
};

/// Generator contract. `query_id` is a lookup key for replaying generators;
/// live generators may ignore it. decode_prefix must be deterministic for a
/// fixed prompt and sample_prefixes for a fixed seed.
class Generator {
 public:
  virtual ~Generator() = default;

  virtual PrefixDraft decode_prefix(std::string_view query_id,
                                    std::string_view prompt, std::size_t k) = 0;
  virtual StochasticPrefixSet sample_prefixes(std::string_view query_id,
                                              std::string_view prompt,
                                              std::size_t k, std::size_t n,
                                              double temperature,
                                              std::uint64_t seed) = 0;
  virtual Generation generate(const GenerateRequest& request) = 0;
};

/// Serves recorded drafts, samples and both answer branches by query id.
class TraceReplayGenerator final : public Generator {
 public:
  /// Throws data_integrity on duplicate ids.
  explicit TraceReplayGenerator(std::span<const TraceRecord> records);

  PrefixDraft decode_prefix(std::string_view query_id, std::string_view prompt,
                            std::size_t k) override;
  /// Returns the first n recorded rows truncated to k columns. Throws
  /// data_integrity if the trace has no samples or too few of them.
  StochasticPrefixSet sample_prefixes(std::string_view query_id,
                                      std::string_view prompt, std::size_t k,
                                      std::size_t n, double temperature,
                                      std::uint64_t seed) override;
  Generation generate(const GenerateRequest& request) override;

 private:
  const TraceRecord& lookup(std::string_view query_id) const;

  std::unordered_map<std::string, TraceRecord> records_;
};

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual ContextBlock retrieve(const Query& query, std::size_t top_k,
                                std::size_t budget) = 0;
};

/// Exact dense search over a shared read-only index.
class DenseRetriever final : public Retriever {
 public:
  DenseRetriever(const EmbeddingIndex& index, const PassageStore& passages);
  /// Throws data_integrity if the query has no embedding.
  ContextBlock retrieve(const Query& query, std::size_t top_k,
                        std::size_t budget) override;

 private:
  const EmbeddingIndex& index_;
  const PassageStore& passages_;
};

/// Replays the context size recorded in traces (no text). Used when no
/// index is configured.
class RecordedContextRetriever final : public Retriever {
 public:
  explicit RecordedContextRetriever(std::span<const TraceRecord> records);
  /// Throws data_integrity if the trace has no ctx_tokens.
  ContextBlock retrieve(const Query& query, std::size_t top_k,
                        std::size_t budget) override;

 private:
  std::unordered_map<std::string, std::optional<std::size_t>> ctx_tokens_;
};

enum class Policy { gate, always, never };

std::string_view to_string(Policy policy) noexcept;
/// Throws invalid_config.
Policy parse_policy(std::string_view name);

struct PipelineOptions {
  GateConfig gate;
  Policy policy = Policy::gate;
  std::size_t top_k = 5;
  std::size_t ctx_budget = 1024;  // whitespace tokens
  double per_token_s = 0.0;
  double retrieval_overhead_s = 0.0;
  PromptTemplate prompt;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TokenCounts {
  std::size_t draft = 0;
  std::size_t samples = 0;  // variance-gate sampled prefixes, N * k
  std::size_t context = 0;
  std::size_t output = 0;

  std::size_t total() const noexcept {
    return draft + samples + context + output;
  }
};

struct RunRecord {
  std::string query_id;
  std::optional<double> score;  // absent for the always/never policies
  bool retrieved = false;
  bool recheck_fired = false;
  std::optional<std::size_t> recheck_token;
  std::string answer;
  TokenCounts tokens;
  double latency_s = 0.0;
  // Never-baseline fields, filled by run_dataset().
  std::optional<std::size_t> never_out_tokens;
  std::optional<double> never_latency_s;
  std::optional<double> delta_latency_s;
  double em = 0.0;
  double f1 = 0.0;
  std::optional<std::string> error;  // set for failed queries only

  /// One JSON object; fields in a fixed order.
  std::string to_json() const;
  /// Policy-independent outcome fields (id, decision, answer, metrics,
  /// context and output tokens) as JSON. Used to compare runs.
  std::string outcome_json() const;
};

/// Per-query seed derived from the master seed and the query id, so that a
/// query's randomness does not depend on its position in the dataset.
std::uint64_t query_seed(std::uint64_t master, std::string_view query_id);

/// Simulated latency: per_token_s * tokens.total(), plus the retrieval
/// overhead when retrieved.
double simulated_latency(const PipelineOptions& options,
                         const TokenCounts& tokens, bool retrieved);

/// Runs one query. With options.gate.recheck_stride set and no up-front
/// retrieval, the running output prefix is re-scored every m tokens past
/// the draft; on the first crossing of tau the query retrieves once and
/// generation continues with context. Never-baseline fields stay empty.
RunRecord run_query(const Query& query, const PipelineOptions& options,
                    Generator& generator, Retriever* retriever);

struct RunSummary {
  std::size_t queries = 0;
  std::size_t failures = 0;
  double em = 0.0;  // percent over successful queries
  double f1 = 0.0;
  double retrieval_rate = 0.0;
  double mean_tokens = 0.0;
  double mean_latency_s = 0.0;
  double mean_never_latency_s = 0.0;
  double delta_latency_s = 0.0;  // 0 unless every record has the baseline
  std::size_t rechecks_fired = 0;

  std::string to_json(const PipelineOptions& options) const;
};

struct RunResult {
  std::vector<RunRecord> records;
  RunSummary summary;
};

/// Aggregates successful records. Mean tokens and delta latency are built
/// from conditional means over retrieved and skipped queries, so with
/// uniform per-query token counts they coincide with expected_tokens() and
/// delta_latency() at the realized rate.
RunSummary summarize(std::span<const RunRecord> records,
                     const PipelineOptions& options);

/// Runs every query and a no-context pass for the Never baseline. Per-query
/// errors are recorded and excluded from aggregates.
RunResult run_dataset(std::span<const Query> queries,
                      const PipelineOptions& options, Generator& generator,
                      Retriever* retriever);

/// Queries (with gold answers and embeddings) taken from trace records.
std::vector<Query> queries_from_traces(std::span<const TraceRecord> records);

}  // namespace gatedrag
