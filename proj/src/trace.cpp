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

#include "gatedrag/trace.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <unordered_set>

#include "gatedrag/error.hpp"
#include "json.hpp"
#include "text_util.hpp"

namespace gatedrag {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::array<std::string_view, 16> kKnownFields = {
    "schema_version",   "query_id",          "question",
    "gold_answers",     "steps",             "samples",
    "sample_temperature", "raw_rows",        "answer_no_ctx",
    "answer_with_ctx",  "out_tokens_no_ctx", "out_tokens_with_ctx",
    "output_steps",     "ctx_tokens",        "query_embedding",
    "prompt_template"};

std::vector<StepStats> parse_steps(const json& j, std::string_view field) {
  GATEDRAG_REQUIRE(j.is_array(), ErrorCode::format, "'{}' must be an array",
                   field);
  std::vector<StepStats> out;
  out.reserve(j.size());
  for (const auto& s : j) {
    GATEDRAG_REQUIRE(s.is_object() && s.size() == 2 &&
                         s.contains("entropy_nats") && s.contains("gap"),
                     ErrorCode::format,
                     "each '{}' entry must be {{\"entropy_nats\", \"gap\"}}",
                     field);
    out.push_back({s.at("entropy_nats").get<double>(), s.at("gap").get<double>()});
  }
  return out;
}

ordered_json emit_steps(const std::vector<StepStats>& steps) {
  ordered_json arr = ordered_json::array();
  for (const auto& s : steps) {
    arr.push_back({{"entropy_nats", s.entropy_nats}, {"gap", s.gap}});
  }
  return arr;
}

std::size_t get_count(const json& j, std::string_view field) {
  GATEDRAG_REQUIRE(j.is_number_unsigned() ||
                       (j.is_number_integer() && j.get<std::int64_t>() >= 0),
                   ErrorCode::format, "'{}' must be a non-negative integer",
                   field);
  return j.get<std::size_t>();
}

TraceRecord parse_object(const json& j) {
  GATEDRAG_REQUIRE(j.is_object(), ErrorCode::format,
                   "trace line is not a JSON object");
  for (const auto& [key, _] : j.items()) {
    GATEDRAG_REQUIRE(std::find(kKnownFields.begin(), kKnownFields.end(), key) !=
                         kKnownFields.end(),
                     ErrorCode::format, "unknown trace field '{}'", key);
  }
  for (std::string_view req :
       {"schema_version", "query_id", "question", "gold_answers", "steps",
        "answer_no_ctx", "answer_with_ctx", "out_tokens_no_ctx",
        "out_tokens_with_ctx"}) {
    GATEDRAG_REQUIRE(j.contains(req), ErrorCode::format,
                     "missing required trace field '{}'", req);
  }
  const auto version = j.at("schema_version").get<int>();
  GATEDRAG_REQUIRE(version == kTraceSchemaVersion, ErrorCode::format,
                   "unsupported trace schema version {} (expected {})",
                   version, kTraceSchemaVersion);

  TraceRecord r;
  r.query_id = j.at("query_id").get<std::string>();
  GATEDRAG_REQUIRE(!r.query_id.empty(), ErrorCode::format,
                   "query_id must not be empty");
  r.question = j.at("question").get<std::string>();
  r.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
  r.draft.steps = parse_steps(j.at("steps"), "steps");
  if (j.contains("raw_rows")) {
    r.draft.raw_rows = j.at("raw_rows").get<std::vector<std::vector<double>>>();
  }
  if (j.contains("samples")) {
    StochasticPrefixSet set;
    set.samples = j.at("samples").get<std::vector<std::vector<std::int64_t>>>();
    set.temperature = j.value("sample_temperature", 0.7);
    r.samples = std::move(set);
  } else {
    GATEDRAG_REQUIRE(!j.contains("sample_temperature"), ErrorCode::format,
                     "sample_temperature given without samples");
  }
  r.answer_no_ctx = j.at("answer_no_ctx").get<std::string>();
  r.answer_with_ctx = j.at("answer_with_ctx").get<std::string>();
  r.out_tokens_no_ctx = get_count(j.at("out_tokens_no_ctx"), "out_tokens_no_ctx");
  r.out_tokens_with_ctx =
      get_count(j.at("out_tokens_with_ctx"), "out_tokens_with_ctx");
  if (j.contains("output_steps")) {
    r.output_steps = parse_steps(j.at("output_steps"), "output_steps");
  }
  if (j.contains("ctx_tokens")) {
    r.ctx_tokens = get_count(j.at("ctx_tokens"), "ctx_tokens");
  }
  if (j.contains("query_embedding")) {
    for (const auto& v : j.at("query_embedding")) {
      r.query_embedding.push_back(static_cast<float>(v.get<double>()));
    }
  }
  if (j.contains("prompt_template")) {
    r.prompt_template = j.at("prompt_template").get<std::string>();
  }

  // Domain invariants surface as format errors: the file is what is wrong.
  try {
    r.draft.validate();
    if (r.samples) r.samples->validate();
    if (!r.output_steps.empty()) {
      PrefixDraft out{r.output_steps, {}};
      out.validate();
    }
  } catch (const Error& e) {
    fail(ErrorCode::format, "query '{}': {}", r.query_id, e.what());
  }
  return r;
}

}  // namespace

TraceRecord parse_trace_line(std::string_view line) {
  try {
    return parse_object(json::parse(line));
  } catch (const json::exception& e) {
    fail(ErrorCode::format, "malformed trace line: {}", e.what());
  }
}

std::string emit_trace_line(const TraceRecord& r) {
  ordered_json j;
  j["schema_version"] = kTraceSchemaVersion;
  j["query_id"] = r.query_id;
  j["question"] = r.question;
  j["gold_answers"] = r.gold_answers;
  j["steps"] = emit_steps(r.draft.steps);
  if (!r.draft.raw_rows.empty()) j["raw_rows"] = r.draft.raw_rows;
  if (r.samples) {
    j["samples"] = r.samples->samples;
    j["sample_temperature"] = r.samples->temperature;
  }
  j["answer_no_ctx"] = r.answer_no_ctx;
  j["answer_with_ctx"] = r.answer_with_ctx;
  j["out_tokens_no_ctx"] = r.out_tokens_no_ctx;
  j["out_tokens_with_ctx"] = r.out_tokens_with_ctx;
  if (!r.output_steps.empty()) j["output_steps"] = emit_steps(r.output_steps);
  if (r.ctx_tokens) j["ctx_tokens"] = *r.ctx_tokens;
  if (!r.query_embedding.empty()) {
    ordered_json arr = ordered_json::array();
    for (float v : r.query_embedding) arr.push_back(static_cast<double>(v));
    j["query_embedding"] = std::move(arr);
  }
  if (r.prompt_template) j["prompt_template"] = *r.prompt_template;
  return j.dump();
}

std::vector<TraceRecord> read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  GATEDRAG_REQUIRE(in.good(), ErrorCode::io, "cannot open trace file {}",
                   path.string());
  std::vector<TraceRecord> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    TraceRecord r;
    try {
      r = parse_trace_line(line);
    } catch (const Error& e) {
      fail(e.code(), "{}:{}: {}", path.string(), line_no, e.what());
    }
    GATEDRAG_REQUIRE(seen.insert(r.query_id).second, ErrorCode::data_integrity,
                     "{}:{}: duplicate query_id '{}'", path.string(), line_no,
                     r.query_id);
    out.push_back(std::move(r));
  }
  return out;
}

void write_trace_file(const std::filesystem::path& path,
                      std::span<const TraceRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  GATEDRAG_REQUIRE(out.good(), ErrorCode::io, "cannot write trace file {}",
                   path.string());
  for (const auto& r : records) out << emit_trace_line(r) << '\n';
  GATEDRAG_REQUIRE(out.good(), ErrorCode::io, "write to {} failed",
                   path.string());
}

}  // namespace gatedrag
