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

#include "gatedrag/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gatedrag/calibration.hpp"
#include "gatedrag/error.hpp"
#include "gatedrag/eval.hpp"
#include "gatedrag/numeric.hpp"
#include "json.hpp"
#include "text_util.hpp"

namespace gatedrag {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

ordered_json optional_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json optional_json(const std::optional<std::size_t>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json threshold_json(double tau) {
  if (std::isinf(tau)) return tau > 0 ? "inf" : "-inf";
  return tau;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : pairwise_mean(v);
}

}  // namespace

std::vector<Query> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  GATEDRAG_REQUIRE(in.good(), ErrorCode::io, "cannot open dataset {}",
                   path.string());
  std::vector<Query> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      GATEDRAG_REQUIRE(j.is_object(), ErrorCode::format, "not a JSON object");
      for (const auto& [key, _] : j.items()) {
        GATEDRAG_REQUIRE(key == "query_id" || key == "question" ||
                             key == "gold_answers",
                         ErrorCode::format, "unknown field '{}'", key);
      }
      Query q;
      q.id = j.at("query_id").get<std::string>();
      q.question = j.at("question").get<std::string>();
      q.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
      out.push_back(std::move(q));
    } catch (const json::exception& e) {
      fail(ErrorCode::format, "{}:{}: {}", path.string(), line_no, e.what());
    } catch (const Error& e) {
      fail(e.code(), "{}:{}: {}", path.string(), line_no, e.what());
    }
  }
  return out;
}

std::string PromptTemplate::build(std::string_view question) const {
  std::string out = base;
  replace_all(out, "{question}", question);
  return out;
}

std::string PromptTemplate::build_with_context(std::string_view prompt,
                                               std::string_view context) const {
  // Substitute {prompt} last so braces inside the context are left alone.
  std::string out = with_context;
  const auto ppos = out.find("{prompt}");
  const auto cpos = out.find("{context}");
  std::string result;
  std::size_t i = 0;
  while (i < out.size()) {
    if (i == cpos) {
      result += context;
      i += 9;
    } else if (i == ppos) {
      result += prompt;
      i += 8;
    } else {
      result += out[i++];
    }
  }
  return result;
}

TraceReplayGenerator::TraceReplayGenerator(std::span<const TraceRecord> records) {
  for (const auto& r : records) {
    GATEDRAG_REQUIRE(records_.emplace(r.query_id, r).second,
                     ErrorCode::data_integrity, "duplicate query_id '{}'",
                     r.query_id);
  }
}

const TraceRecord& TraceReplayGenerator::lookup(std::string_view query_id) const {
  const auto it = records_.find(std::string(query_id));
  GATEDRAG_REQUIRE(it != records_.end(), ErrorCode::data_integrity,
                   "query '{}' is not in the trace", query_id);
  return it->second;
}

PrefixDraft TraceReplayGenerator::decode_prefix(std::string_view query_id,
                                                std::string_view, std::size_t k) {
  const auto& r = lookup(query_id);
  PrefixDraft d;
  const auto n = std::min(k, r.draft.steps.size());
  d.steps.assign(r.draft.steps.begin(), r.draft.steps.begin() + n);
  if (!r.draft.raw_rows.empty()) {
    d.raw_rows.assign(r.draft.raw_rows.begin(), r.draft.raw_rows.begin() + n);
  }
  return d;
}

StochasticPrefixSet TraceReplayGenerator::sample_prefixes(
    std::string_view query_id, std::string_view, std::size_t k, std::size_t n,
    double, std::uint64_t) {
  const auto& r = lookup(query_id);
  GATEDRAG_REQUIRE(r.samples.has_value(), ErrorCode::data_integrity,
                   "query '{}' has no recorded samples", query_id);
  GATEDRAG_REQUIRE(r.samples->n() >= n, ErrorCode::data_integrity,
                   "query '{}' has {} recorded samples, {} requested", query_id,
                   r.samples->n(), n);
  StochasticPrefixSet set;
  set.temperature = r.samples->temperature;
  const auto cols = std::min(k, r.samples->k());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = r.samples->samples[i];
    set.samples.emplace_back(row.begin(), row.begin() + cols);
  }
  return set;
}

Generation TraceReplayGenerator::generate(const GenerateRequest& request) {
  const auto& r = lookup(request.query_id);
  if (request.with_context) {
    return {r.answer_with_ctx, r.out_tokens_with_ctx, {}};
  }
  return {r.answer_no_ctx, r.out_tokens_no_ctx, r.output_steps};
}

DenseRetriever::DenseRetriever(const EmbeddingIndex& index,
                               const PassageStore& passages)
    : index_(index), passages_(passages) {}

ContextBlock DenseRetriever::retrieve(const Query& query, std::size_t top_k,
                                      std::size_t budget) {
  GATEDRAG_REQUIRE(!query.embedding.empty(), ErrorCode::data_integrity,
                   "query '{}' has no embedding", query.id);
  const auto unit = normalize(std::span<const float>(query.embedding));
  const auto hits = index_.search(unit, top_k);
  return format_context(hits, passages_, budget);
}

RecordedContextRetriever::RecordedContextRetriever(
    std::span<const TraceRecord> records) {
  for (const auto& r : records) ctx_tokens_.emplace(r.query_id, r.ctx_tokens);
}

ContextBlock RecordedContextRetriever::retrieve(const Query& query, std::size_t,
                                                std::size_t) {
  const auto it = ctx_tokens_.find(query.id);
  GATEDRAG_REQUIRE(it != ctx_tokens_.end() && it->second.has_value(),
                   ErrorCode::data_integrity,
                   "query '{}' has no recorded ctx_tokens and no index is "
                   "configured",
                   query.id);
  return {"", *it->second, false};
}

std::string_view to_string(Policy policy) noexcept {
  switch (policy) {
    case Policy::gate: return "gate";
    case Policy::always: return "always";
    case Policy::never: return "never";
  }
  return "unknown";
}

Policy parse_policy(std::string_view name) {
  if (name == "gate") return Policy::gate;
  if (name == "always") return Policy::always;
  if (name == "never") return Policy::never;
  fail(ErrorCode::invalid_config,
       "unknown policy '{}' (expected gate, always or never)", name);
}

void PipelineOptions::validate() const {
  gate.validate();
  GATEDRAG_REQUIRE(top_k >= 1, ErrorCode::invalid_config, "top_k must be >= 1");
  GATEDRAG_REQUIRE(std::isfinite(per_token_s) && per_token_s >= 0.0,
                   ErrorCode::invalid_config,
                   "per_token_s must be finite and non-negative");
  GATEDRAG_REQUIRE(
      std::isfinite(retrieval_overhead_s) && retrieval_overhead_s >= 0.0,
      ErrorCode::invalid_config,
      "retrieval_overhead_s must be finite and non-negative");
  GATEDRAG_REQUIRE(prompt.base.find("{question}") != std::string::npos,
                   ErrorCode::invalid_config,
                   "prompt template must contain {{question}}");
  GATEDRAG_REQUIRE(prompt.with_context.find("{context}") != std::string::npos &&
                       prompt.with_context.find("{prompt}") != std::string::npos,
                   ErrorCode::invalid_config,
                   "context template must contain {{context}} and {{prompt}}");
}

std::string RunRecord::to_json() const {
  ordered_json j;
  j["query_id"] = query_id;
  j["score"] = optional_json(score);
  j["retrieved"] = retrieved;
  j["recheck_fired"] = recheck_fired;
  j["recheck_token"] = optional_json(recheck_token);
  j["answer"] = answer;
  j["tokens"] = {{"draft", tokens.draft},
                 {"samples", tokens.samples},
                 {"context", tokens.context},
                 {"output", tokens.output},
                 {"total", tokens.total()}};
  j["latency_s"] = latency_s;
  j["never_out_tokens"] = optional_json(never_out_tokens);
  j["never_latency_s"] = optional_json(never_latency_s);
  j["delta_latency_s"] = optional_json(delta_latency_s);
  j["em"] = em;
  j["f1"] = f1;
  if (error) j["error"] = *error;
  return j.dump();
}

std::string RunRecord::outcome_json() const {
  ordered_json j;
  j["query_id"] = query_id;
  j["retrieved"] = retrieved;
  j["answer"] = answer;
  j["em"] = em;
  j["f1"] = f1;
  j["context_tokens"] = tokens.context;
  j["output_tokens"] = tokens.output;
  if (error) j["error"] = *error;
  return j.dump();
}

std::uint64_t query_seed(std::uint64_t master, std::string_view query_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : query_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(master ^ splitmix64(h));
}

double simulated_latency(const PipelineOptions& options,
                         const TokenCounts& tokens, bool retrieved) {
  return options.per_token_s * static_cast<double>(tokens.total()) +
         (retrieved ? options.retrieval_overhead_s : 0.0);
}

namespace {

double running_score(const GateConfig& gate, std::span<const StepStats> steps) {
  switch (gate.kind) {
    case GateKind::entropy: return entropy_score(steps);
    case GateKind::margin: return margin_score(steps, gate.beta);
    case GateKind::variance: break;
  }
  fail(ErrorCode::invalid_config, "re-check is not defined for the variance gate");
}

RunRecord run_query_impl(const Query& query, const PipelineOptions& options,
                         Generator& generator, Retriever* retriever,
                         std::optional<std::size_t>& no_ctx_out_tokens) {
  RunRecord rec;
  rec.query_id = query.id;
  const std::string prompt = options.prompt.build(query.question);
  const auto& gate = options.gate;

  bool retrieve = options.policy == Policy::always;
  if (options.policy == Policy::gate) {
    const PrefixDraft draft = generator.decode_prefix(query.id, prompt, gate.k);
    GATEDRAG_REQUIRE(draft.k() > 0, ErrorCode::data_integrity,
                     "generator returned an empty draft");
    rec.tokens.draft = std::min(draft.k(), gate.k);
    std::optional<StochasticPrefixSet> samples;
    if (gate.kind == GateKind::variance) {
      samples = generator.sample_prefixes(query.id, prompt, gate.k,
                                          gate.n_samples, gate.sample_temperature,
                                          query_seed(options.seed, query.id));
      rec.tokens.samples = samples->n() * std::min(samples->k(), gate.k);
    }
    const GateScore s = score(gate, draft, samples ? &*samples : nullptr);
    rec.score = s.value;
    retrieve = decide(s, gate.tau);
  }

  auto fetch_context = [&]() {
    GATEDRAG_REQUIRE(retriever != nullptr, ErrorCode::invalid_config,
                     "retrieval requested but no retriever is configured");
    return retriever->retrieve(query, options.top_k, options.ctx_budget);
  };

  Generation out;
  if (retrieve) {
    const ContextBlock ctx = fetch_context();
    const std::string full = options.prompt.build_with_context(prompt, ctx.text);
    out = generator.generate({query.id, full, true, 0});
    rec.retrieved = true;
    rec.tokens.context = ctx.token_count;
    rec.tokens.output = out.out_tokens;
  } else {
    out = generator.generate({query.id, prompt, false, 0});
    no_ctx_out_tokens = out.out_tokens;
    rec.tokens.output = out.out_tokens;
    if (options.policy == Policy::gate && gate.recheck_stride) {
      const std::size_t m = *gate.recheck_stride;
      GATEDRAG_REQUIRE(!out.steps.empty(), ErrorCode::data_integrity,
                       "re-check needs per-token output statistics");
      const std::size_t limit = std::min(out.steps.size(), out.out_tokens);
      // Checkpoints inside the draft are already covered by the decision.
      for (std::size_t j = m; j <= limit; j += m) {
        if (j <= rec.tokens.draft) continue;
        const double u = running_score(
            gate, std::span<const StepStats>(out.steps).first(j));
        if (!decide(u, gate.tau)) continue;
        const ContextBlock ctx = fetch_context();
        const std::string full =
            options.prompt.build_with_context(prompt, ctx.text);
        const Generation cont = generator.generate({query.id, full, true, j});
        out.answer = cont.answer;
        rec.retrieved = true;
        rec.recheck_fired = true;
        rec.recheck_token = j;
        rec.tokens.context = ctx.token_count;
        rec.tokens.output = j + cont.out_tokens;
        break;
      }
    }
  }
  rec.answer = std::move(out.answer);
  rec.em = exact_match(rec.answer, query.gold_answers);
  rec.f1 = f1_score(rec.answer, query.gold_answers);
  rec.latency_s = simulated_latency(options, rec.tokens, rec.retrieved);
  return rec;
}

}  // namespace

RunRecord run_query(const Query& query, const PipelineOptions& options,
                    Generator& generator, Retriever* retriever) {
  options.validate();
  std::optional<std::size_t> unused;
  try {
    return run_query_impl(query, options, generator, retriever, unused);
  } catch (const Error& e) {
    fail(e.code(), "query '{}': {}", query.id, e.what());
  }
}

RunSummary summarize(std::span<const RunRecord> records,
                     const PipelineOptions& options) {
  RunSummary s;
  s.queries = records.size();
  std::vector<double> em, f1, drafting, latency, never_latency;
  std::vector<double> ctx_r, out_r, never_out_r, out_skip, skip_diff;
  bool have_baseline = true;
  std::size_t retrieved = 0;
  for (const auto& r : records) {
    if (r.error) {
      ++s.failures;
      continue;
    }
    em.push_back(r.em);
    f1.push_back(r.f1);
    drafting.push_back(static_cast<double>(r.tokens.draft + r.tokens.samples));
    latency.push_back(r.latency_s);
    if (r.recheck_fired) ++s.rechecks_fired;
    have_baseline = have_baseline && r.never_out_tokens && r.never_latency_s;
    if (r.never_latency_s) never_latency.push_back(*r.never_latency_s);
    const double out = static_cast<double>(r.tokens.output);
    const double never_out =
        r.never_out_tokens ? static_cast<double>(*r.never_out_tokens) : 0.0;
    if (r.retrieved) {
      ++retrieved;
      ctx_r.push_back(static_cast<double>(r.tokens.context));
      out_r.push_back(out);
      never_out_r.push_back(never_out);
    } else {
      out_skip.push_back(out);
      skip_diff.push_back(out - never_out);
    }
  }
  const std::size_t ok = em.size();
  if (ok == 0) return s;

  s.em = 100.0 * pairwise_mean(em);
  s.f1 = 100.0 * pairwise_mean(f1);
  s.retrieval_rate = static_cast<double>(retrieved) / static_cast<double>(ok);
  s.mean_latency_s = pairwise_mean(latency);

  CostParams p;
  p.t_draft = pairwise_mean(drafting);
  p.t_ctx = mean_of(ctx_r);
  p.e_out0 = mean_of(out_skip);
  p.e_out1 = mean_of(out_r);
  p.per_token_cost = options.per_token_s;
  p.retrieval_overhead = options.retrieval_overhead_s;
  s.mean_tokens = expected_tokens(p, s.retrieval_rate);

  if (have_baseline) {
    s.mean_never_latency_s = pairwise_mean(never_latency);
    // Added cost of skipped queries is only drafting unless the generator
    // answered differently from the baseline pass.
    p.e_out0 = mean_of(never_out_r);
    s.delta_latency_s = delta_latency(p, s.retrieval_rate) +
                        (1.0 - s.retrieval_rate) * options.per_token_s *
                            mean_of(skip_diff);
  }
  return s;
}

std::string RunSummary::to_json(const PipelineOptions& options) const {
  ordered_json j;
  j["policy"] = to_string(options.policy);
  j["gate"] = {{"kind", to_string(options.gate.kind)},
               {"k", options.gate.k},
               {"beta", options.gate.beta},
               {"n_samples", options.gate.n_samples},
               {"temperature", options.gate.sample_temperature},
               {"tau", threshold_json(options.gate.tau)},
               {"recheck_stride", optional_json(options.gate.recheck_stride)}};
  j["seed"] = options.seed;
  j["queries"] = queries;
  j["failures"] = failures;
  j["em"] = em;
  j["f1"] = f1;
  j["retrieval_rate"] = retrieval_rate;
  j["mean_tokens"] = mean_tokens;
  j["mean_latency_s"] = mean_latency_s;
  j["mean_never_latency_s"] = mean_never_latency_s;
  j["delta_latency_s"] = delta_latency_s;
  j["rechecks_fired"] = rechecks_fired;
  return j.dump(2);
}

RunResult run_dataset(std::span<const Query> queries,
                      const PipelineOptions& options, Generator& generator,
                      Retriever* retriever) {
  options.validate();
  RunResult result;
  result.records.reserve(queries.size());
  for (const auto& q : queries) {
    RunRecord rec;
    try {
      std::optional<std::size_t> no_ctx_out;
      rec = run_query_impl(q, options, generator, retriever, no_ctx_out);
      if (!no_ctx_out) {
        const std::string prompt = options.prompt.build(q.question);
        no_ctx_out = generator.generate({q.id, prompt, false, 0}).out_tokens;
      }
      rec.never_out_tokens = *no_ctx_out;
      rec.never_latency_s =
          options.per_token_s * static_cast<double>(*no_ctx_out);
      rec.delta_latency_s = rec.latency_s - *rec.never_latency_s;
    } catch (const std::exception& e) {
      rec = RunRecord{};
      rec.query_id = q.id;
      rec.error = fmt::format("query '{}': {}", q.id, e.what());
    }
    result.records.push_back(std::move(rec));
  }
  result.summary = summarize(result.records, options);
  return result;
}

std::vector<Query> queries_from_traces(std::span<const TraceRecord> records) {
  std::vector<Query> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back({r.query_id, r.question, r.gold_answers, r.query_embedding});
  }
  return out;
}

}  // namespace gatedrag
