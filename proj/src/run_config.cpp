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

#include "gatedrag/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <unordered_map>

#include "gatedrag/calibration.hpp"
#include "gatedrag/error.hpp"
#include "gatedrag/trace.hpp"
#include "json.hpp"

namespace gatedrag {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

void reject_unknown(const json& j, std::initializer_list<std::string_view> keys,
                    std::string_view where) {
  GATEDRAG_REQUIRE(j.is_object(), ErrorCode::invalid_config,
                   "'{}' must be an object", where);
  for (const auto& [key, _] : j.items()) {
    GATEDRAG_REQUIRE(std::find(keys.begin(), keys.end(), key) != keys.end(),
                     ErrorCode::invalid_config, "unknown config key '{}{}'",
                     where.empty() ? "" : fmt::format("{}.", where), key);
  }
}

std::size_t get_size(const json& j, std::string_view name) {
  GATEDRAG_REQUIRE(j.is_number_unsigned() ||
                       (j.is_number_integer() && j.get<std::int64_t>() >= 0),
                   ErrorCode::invalid_config,
                   "'{}' must be a non-negative integer", name);
  return j.get<std::size_t>();
}

double get_threshold(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kNeverRetrieve;
    if (s == "-inf") return kAlwaysRetrieve;
    fail(ErrorCode::invalid_config, "tau string must be 'inf' or '-inf', got '{}'",
         s);
  }
  GATEDRAG_REQUIRE(j.is_number(), ErrorCode::invalid_config,
                   "tau must be a number or 'inf'/'-inf'");
  return j.get<double>();
}

ordered_json threshold_json(double tau) {
  if (std::isinf(tau)) return tau > 0 ? "inf" : "-inf";
  return tau;
}

std::optional<fs::path> get_path(const json& j, std::string_view name,
                                 const fs::path& base) {
  if (j.is_null()) return std::nullopt;
  GATEDRAG_REQUIRE(j.is_string(), ErrorCode::invalid_config,
                   "'{}' must be a path string or null", name);
  fs::path p(j.get<std::string>());
  GATEDRAG_REQUIRE(!p.empty(), ErrorCode::invalid_config, "'{}' is empty", name);
  if (p.is_relative() && !base.empty()) p = base / p;
  return fs::absolute(p).lexically_normal();
}

ordered_json path_json(const std::optional<fs::path>& p) {
  return p ? ordered_json(p->string()) : ordered_json(nullptr);
}

RunConfig parse(const json& j, const fs::path& base) {
  reject_unknown(j,
                 {"trace", "dataset", "out_dir", "policy", "seed", "gate",
                  "retrieval", "cost", "prompt"},
                 "");
  RunConfig c;
  GATEDRAG_REQUIRE(j.contains("trace"), ErrorCode::invalid_config,
                   "config needs a 'trace' path");
  auto trace = get_path(j.at("trace"), "trace", base);
  GATEDRAG_REQUIRE(trace.has_value(), ErrorCode::invalid_config,
                   "'trace' must not be null");
  c.trace = *trace;
  if (j.contains("dataset")) c.dataset = get_path(j.at("dataset"), "dataset", base);
  if (j.contains("out_dir")) c.out_dir = get_path(j.at("out_dir"), "out_dir", base);
  auto& o = c.options;
  if (j.contains("policy")) o.policy = parse_policy(j.at("policy").get<std::string>());
  if (j.contains("seed")) {
    GATEDRAG_REQUIRE(j.at("seed").is_number_unsigned() ||
                         (j.at("seed").is_number_integer() &&
                          j.at("seed").get<std::int64_t>() >= 0),
                     ErrorCode::invalid_config,
                     "'seed' must be a non-negative integer");
    o.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("gate")) {
    const auto& g = j.at("gate");
    reject_unknown(g,
                   {"kind", "k", "beta", "n_samples", "temperature", "tau",
                    "recheck_stride"},
                   "gate");
    if (g.contains("kind")) o.gate.kind = parse_gate_kind(g.at("kind").get<std::string>());
    if (g.contains("k")) o.gate.k = get_size(g.at("k"), "gate.k");
    if (g.contains("beta")) o.gate.beta = g.at("beta").get<double>();
    if (g.contains("n_samples")) {
      o.gate.n_samples = get_size(g.at("n_samples"), "gate.n_samples");
    }
    if (g.contains("temperature")) {
      o.gate.sample_temperature = g.at("temperature").get<double>();
    }
    if (g.contains("tau")) o.gate.tau = get_threshold(g.at("tau"));
    if (g.contains("recheck_stride") && !g.at("recheck_stride").is_null()) {
      o.gate.recheck_stride =
          get_size(g.at("recheck_stride"), "gate.recheck_stride");
    }
  }
  if (j.contains("retrieval")) {
    const auto& r = j.at("retrieval");
    reject_unknown(r, {"top_k", "ctx_budget", "index", "passages"}, "retrieval");
    if (r.contains("top_k")) o.top_k = get_size(r.at("top_k"), "retrieval.top_k");
    if (r.contains("ctx_budget")) {
      o.ctx_budget = get_size(r.at("ctx_budget"), "retrieval.ctx_budget");
    }
    if (r.contains("index")) c.index = get_path(r.at("index"), "retrieval.index", base);
    if (r.contains("passages")) {
      c.passages = get_path(r.at("passages"), "retrieval.passages", base);
    }
  }
  if (j.contains("cost")) {
    const auto& k = j.at("cost");
    reject_unknown(k, {"per_token_s", "retrieval_overhead_s"}, "cost");
    if (k.contains("per_token_s")) o.per_token_s = k.at("per_token_s").get<double>();
    if (k.contains("retrieval_overhead_s")) {
      o.retrieval_overhead_s = k.at("retrieval_overhead_s").get<double>();
    }
  }
  if (j.contains("prompt")) {
    const auto& p = j.at("prompt");
    reject_unknown(p, {"template", "context_template"}, "prompt");
    if (p.contains("template")) o.prompt.base = p.at("template").get<std::string>();
    if (p.contains("context_template")) {
      o.prompt.with_context = p.at("context_template").get<std::string>();
    }
  }
  c.validate();
  return c;
}

}  // namespace

RunConfig RunConfig::from_json(std::string_view text, const fs::path& base_dir) {
  try {
    return parse(json::parse(text), base_dir);
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_config, "run config: {}", e.what());
  }
}

std::string RunConfig::to_json() const {
  const auto& o = options;
  ordered_json j;
  j["trace"] = fs::absolute(trace).lexically_normal().string();
  j["dataset"] = path_json(dataset);
  j["out_dir"] = path_json(out_dir);
  j["policy"] = to_string(o.policy);
  j["seed"] = o.seed;
  j["gate"] = {{"kind", to_string(o.gate.kind)},
               {"k", o.gate.k},
               {"beta", o.gate.beta},
               {"n_samples", o.gate.n_samples},
               {"temperature", o.gate.sample_temperature},
               {"tau", threshold_json(o.gate.tau)},
               {"recheck_stride", o.gate.recheck_stride
                                      ? ordered_json(*o.gate.recheck_stride)
                                      : ordered_json(nullptr)}};
  j["retrieval"] = {{"top_k", o.top_k},
                    {"ctx_budget", o.ctx_budget},
                    {"index", path_json(index)},
                    {"passages", path_json(passages)}};
  j["cost"] = {{"per_token_s", o.per_token_s},
               {"retrieval_overhead_s", o.retrieval_overhead_s}};
  j["prompt"] = {{"template", o.prompt.base},
                 {"context_template", o.prompt.with_context}};
  return j.dump(2) + "\n";
}

void RunConfig::validate() const {
  options.validate();
  GATEDRAG_REQUIRE(index.has_value() == passages.has_value(),
                   ErrorCode::invalid_config,
                   "retrieval.index and retrieval.passages must be given together");
}

namespace {

// Everything a run needs, loaded once.
struct Environment {
  std::vector<TraceRecord> traces;
  std::vector<Query> queries;
  std::optional<EmbeddingIndex> index;
  PassageStore passages;
  std::unique_ptr<TraceReplayGenerator> generator;
  std::unique_ptr<Retriever> retriever;
};

std::unique_ptr<Environment> load_environment(const RunConfig& config) {
  config.validate();
  auto env = std::make_unique<Environment>();
  env->traces = read_trace_file(config.trace);
  if (config.dataset) {
    std::unordered_map<std::string, const TraceRecord*> by_id;
    for (const auto& t : env->traces) by_id.emplace(t.query_id, &t);
    env->queries = read_dataset(*config.dataset);
    for (auto& q : env->queries) {
      const auto it = by_id.find(q.id);
      if (it != by_id.end()) q.embedding = it->second->query_embedding;
    }
  } else {
    env->queries = queries_from_traces(env->traces);
  }
  env->generator = std::make_unique<TraceReplayGenerator>(env->traces);
  if (config.index) {
    env->index = EmbeddingIndex::load(*config.index);
    env->passages = PassageStore(read_passages(*config.passages));
    for (auto id : env->index->ids()) {
      GATEDRAG_REQUIRE(env->passages.find(id) != nullptr,
                       ErrorCode::data_integrity,
                       "index id {} has no passage in {}", id,
                       config.passages->string());
    }
    env->retriever = std::make_unique<DenseRetriever>(*env->index, env->passages);
  } else {
    env->retriever = std::make_unique<RecordedContextRetriever>(env->traces);
  }
  return env;
}

void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  GATEDRAG_REQUIRE(out.good(), ErrorCode::io, "cannot write {}", path.string());
  out << content;
  GATEDRAG_REQUIRE(out.good(), ErrorCode::io, "write to {} failed",
                   path.string());
}

}  // namespace

RunResult execute_run(const RunConfig& config) {
  auto env = load_environment(config);
  return run_dataset(env->queries, config.options, *env->generator,
                     env->retriever.get());
}

void write_run_outputs(const RunConfig& config, const RunResult& result,
                       const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  GATEDRAG_REQUIRE(!ec, ErrorCode::io, "cannot create {}: {}", dir.string(),
                   ec.message());
  std::string records;
  for (const auto& r : result.records) {
    records += r.to_json();
    records += '\n';
  }
  write_file(dir / "records.jsonl", records);
  write_file(dir / "summary.json", result.summary.to_json(config.options) + "\n");
  write_file(dir / "resolved_config.json", config.to_json());
}

SweepResult execute_sweep(const RunConfig& config,
                          std::span<const double> tau_grid) {
  GATEDRAG_REQUIRE(!tau_grid.empty(), ErrorCode::invalid_config,
                   "threshold grid is empty");
  auto env = load_environment(config);
  const auto set = collect_outcomes(env->queries, config.options,
                                    *env->generator, env->retriever.get());
  return {sweep(set.outcomes, config.options, tau_grid), set.failures.size()};
}

}  // namespace gatedrag
