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

#include "gatedrag/gatedrag.h"

#include <cmath>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "gatedrag/calibration.hpp"
#include "gatedrag/error.hpp"
#include "gatedrag/eval.hpp"
#include "gatedrag/gate.hpp"
#include "gatedrag/retrieval.hpp"
#include "gatedrag/run_config.hpp"
#include "gatedrag/simlab.hpp"
#include "gatedrag/trace.hpp"

struct grag_string {
  std::string value;
};

struct grag_score_file {
  std::vector<gatedrag::ScoreRow> rows;
  std::vector<double> scores, a0, a1;
};

struct grag_passages {
  gatedrag::PassageStore store;
};

struct grag_index {
  gatedrag::EmbeddingIndex index;
};

struct grag_trace_set {
  std::vector<gatedrag::TraceRecord> records;
};

struct grag_run {
  gatedrag::RunConfig config;
  gatedrag::RunResult result;
};

namespace {

using namespace gatedrag;

thread_local std::string g_last_error;

grag_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return GRAG_ERR_INVALID_INPUT;
    case ErrorCode::invalid_config: return GRAG_ERR_INVALID_CONFIG;
    case ErrorCode::io: return GRAG_ERR_IO;
    case ErrorCode::format: return GRAG_ERR_FORMAT;
    case ErrorCode::data_integrity: return GRAG_ERR_DATA_INTEGRITY;
    case ErrorCode::internal: return GRAG_ERR_INTERNAL;
  }
  return GRAG_ERR_INTERNAL;
}

template <typename F>
grag_status guard(F&& f) {
  try {
    f();
    return GRAG_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GRAG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GRAG_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return GRAG_ERR_INTERNAL;
  }
}

void require_ptr(const void* p, const char* name) {
  GATEDRAG_REQUIRE(p != nullptr, ErrorCode::invalid_input, "{} is NULL", name);
}

template <typename T>
std::span<const T> view(const T* data, std::size_t n, const char* name) {
  if (n > 0) require_ptr(data, name);
  return {data, n};
}

grag_string* make_string(std::string s) {
  return new grag_string{std::move(s)};
}

GateConfig from_c(const grag_gate_config& c) {
  GateConfig g;
  switch (c.kind) {
    case GRAG_GATE_ENTROPY: g.kind = GateKind::entropy; break;
    case GRAG_GATE_MARGIN: g.kind = GateKind::margin; break;
    case GRAG_GATE_VARIANCE: g.kind = GateKind::variance; break;
    default:
      fail(ErrorCode::invalid_config, "unknown gate kind {}",
           static_cast<int>(c.kind));
  }
  g.k = c.k;
  g.beta = c.beta;
  g.n_samples = c.n_samples;
  g.sample_temperature = c.temperature;
  g.tau = c.tau;
  if (c.recheck_stride > 0) g.recheck_stride = c.recheck_stride;
  return g;
}

CostParams from_c(const grag_cost_params& c) {
  return {c.t_draft,        c.t_ctx,
          c.e_out0,         c.e_out1,
          c.per_token_cost, c.retrieval_overhead};
}

std::filesystem::path base_path(const char* base_dir) {
  return base_dir ? std::filesystem::path(base_dir) : std::filesystem::path();
}

}  // namespace

extern "C" {

const char* grag_version(void) { return "0.1.0"; }

const char* grag_status_name(grag_status status) {
  switch (status) {
    case GRAG_OK: return "ok";
    case GRAG_ERR_INVALID_INPUT: return "invalid-input";
    case GRAG_ERR_INVALID_CONFIG: return "invalid-config";
    case GRAG_ERR_IO: return "io";
    case GRAG_ERR_FORMAT: return "format";
    case GRAG_ERR_DATA_INTEGRITY: return "data-integrity";
    case GRAG_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* grag_last_error(void) { return g_last_error.c_str(); }

const char* grag_string_data(const grag_string* s) {
  return s ? s->value.c_str() : "";
}
size_t grag_string_size(const grag_string* s) { return s ? s->value.size() : 0; }
void grag_string_destroy(grag_string* s) { delete s; }

void grag_gate_config_default(grag_gate_config* config) {
  if (!config) return;
  const GateConfig g;
  config->kind = GRAG_GATE_MARGIN;
  config->k = g.k;
  config->beta = g.beta;
  config->n_samples = g.n_samples;
  config->temperature = g.sample_temperature;
  config->tau = g.tau;
  config->recheck_stride = 0;
}

grag_status grag_parse_gate_kind(const char* name, grag_gate_kind* out) {
  return guard([&] {
    require_ptr(name, "name");
    require_ptr(out, "out");
    switch (parse_gate_kind(name)) {
      case GateKind::entropy: *out = GRAG_GATE_ENTROPY; break;
      case GateKind::margin: *out = GRAG_GATE_MARGIN; break;
      case GateKind::variance: *out = GRAG_GATE_VARIANCE; break;
    }
  });
}

grag_status grag_step_entropy(const double* probs, size_t n, double* out) {
  return guard([&] {
    require_ptr(out, "out");
    *out = step_entropy(view(probs, n, "probs"));
  });
}

grag_status grag_logit_gap(const double* logits, size_t n, double* out) {
  return guard([&] {
    require_ptr(out, "out");
    *out = logit_gap(view(logits, n, "logits"));
  });
}

grag_status grag_entropy_score(const double* entropies, size_t k, double* out) {
  return guard([&] {
    require_ptr(out, "out");
    std::vector<StepStats> steps;
    for (double h : view(entropies, k, "entropies")) steps.push_back({h, 0.0});
    *out = entropy_score(steps);
  });
}

grag_status grag_margin_score(const double* gaps, size_t k, double beta,
                              double* out) {
  return guard([&] {
    require_ptr(out, "out");
    std::vector<StepStats> steps;
    for (double g : view(gaps, k, "gaps")) steps.push_back({0.0, g});
    *out = margin_score(steps, beta);
  });
}

grag_status grag_variance_score(const int64_t* tokens, size_t n, size_t k,
                                double* out) {
  return guard([&] {
    require_ptr(out, "out");
    const auto flat = view(tokens, n * k, "tokens");
    std::vector<std::vector<std::int64_t>> rows(n);
    for (size_t i = 0; i < n; ++i) {
      rows[i].assign(flat.begin() + i * k, flat.begin() + (i + 1) * k);
    }
    *out = variance_score(rows, k);
  });
}

int grag_decide(double score, double tau) { return decide(score, tau) ? 1 : 0; }

grag_status grag_quantile_threshold(const double* scores, size_t n, double rho,
                                    double* tau) {
  return guard([&] {
    require_ptr(tau, "tau");
    *tau = quantile_threshold(view(scores, n, "scores"), rho);
  });
}

grag_status grag_realized_rate(const double* scores, size_t n, double tau,
                               double* rate) {
  return guard([&] {
    require_ptr(rate, "rate");
    *rate = realized_rate(view(scores, n, "scores"), tau);
  });
}

grag_status grag_accuracy_opt_threshold(const double* u, const double* a0,
                                        const double* a1, size_t n,
                                        const double* grid, size_t grid_size,
                                        double* tau) {
  return guard([&] {
    require_ptr(tau, "tau");
    const auto us = view(u, n, "u");
    const auto a0s = view(a0, n, "a0");
    const auto a1s = view(a1, n, "a1");
    std::vector<DevRecord> dev(n);
    for (size_t i = 0; i < n; ++i) dev[i] = {us[i], a0s[i], a1s[i]};
    *tau = accuracy_opt_threshold(dev, view(grid, grid_size, "grid"));
  });
}

grag_status grag_expected_tokens(const grag_cost_params* params, double pi,
                                 double* out) {
  return guard([&] {
    require_ptr(params, "params");
    require_ptr(out, "out");
    *out = expected_tokens(from_c(*params), pi);
  });
}

grag_status grag_delta_latency(const grag_cost_params* params, double pi,
                               double* out) {
  return guard([&] {
    require_ptr(params, "params");
    require_ptr(out, "out");
    *out = delta_latency(from_c(*params), pi);
  });
}

grag_status grag_score_file_load(const char* path, grag_score_file** out) {
  return guard([&] {
    require_ptr(path, "path");
    require_ptr(out, "out");
    auto f = std::make_unique<grag_score_file>();
    f->rows = read_score_file(path);
    for (const auto& r : f->rows) {
      f->scores.push_back(r.score);
      if (r.a0) {
        f->a0.push_back(*r.a0);
        f->a1.push_back(*r.a1);
      }
    }
    *out = f.release();
  });
}

size_t grag_score_file_size(const grag_score_file* f) {
  return f ? f->rows.size() : 0;
}
const char* grag_score_file_query_id(const grag_score_file* f, size_t i) {
  return f && i < f->rows.size() ? f->rows[i].query_id.c_str() : nullptr;
}
const double* grag_score_file_scores(const grag_score_file* f) {
  return f ? f->scores.data() : nullptr;
}
const double* grag_score_file_a0(const grag_score_file* f) {
  return f && !f->rows.empty() && f->a0.size() == f->rows.size() ? f->a0.data()
                                                                 : nullptr;
}
const double* grag_score_file_a1(const grag_score_file* f) {
  return f && !f->rows.empty() && f->a1.size() == f->rows.size() ? f->a1.data()
                                                                 : nullptr;
}
void grag_score_file_destroy(grag_score_file* f) { delete f; }

grag_status grag_scores_format(const char* const* query_ids,
                               const double* scores, const double* a0,
                               const double* a1, size_t n, grag_string** out) {
  return guard([&] {
    require_ptr(out, "out");
    GATEDRAG_REQUIRE((a0 == nullptr) == (a1 == nullptr),
                     ErrorCode::invalid_input,
                     "a0 and a1 must both be given or both be NULL");
    const auto ids = view(query_ids, n, "query_ids");
    const auto s = view(scores, n, "scores");
    std::string text;
    for (size_t i = 0; i < n; ++i) {
      require_ptr(ids[i], "query id");
      text += ids[i];
      text += '\t';
      text += format_double(s[i]);
      if (a0) {
        text += '\t';
        text += format_double(a0[i]);
        text += '\t';
        text += format_double(a1[i]);
      }
      text += '\n';
    }
    *out = make_string(std::move(text));
  });
}

grag_status grag_passages_chunk_corpus(const char* corpus_path, size_t size,
                                       size_t overlap, size_t min_chars,
                                       int64_t first_id, grag_passages** out) {
  return guard([&] {
    require_ptr(corpus_path, "corpus_path");
    require_ptr(out, "out");
    const auto articles = read_corpus(corpus_path);
    auto p = std::make_unique<grag_passages>();
    p->store = PassageStore(
        chunk_corpus(articles, ChunkOptions{size, overlap, min_chars}, first_id));
    *out = p.release();
  });
}

grag_status grag_passages_load(const char* path, grag_passages** out) {
  return guard([&] {
    require_ptr(path, "path");
    require_ptr(out, "out");
    auto p = std::make_unique<grag_passages>();
    p->store = PassageStore(read_passages(path));
    *out = p.release();
  });
}

grag_status grag_passages_save(const grag_passages* p, const char* path) {
  return guard([&] {
    require_ptr(p, "passages");
    require_ptr(path, "path");
    write_passages(path, p->store.passages());
  });
}

size_t grag_passages_size(const grag_passages* p) {
  return p ? p->store.size() : 0;
}

const char* grag_passages_title(const grag_passages* p, int64_t id) {
  if (!p) return nullptr;
  const auto* rec = p->store.find(id);
  return rec ? rec->title.c_str() : nullptr;
}

void grag_passages_destroy(grag_passages* p) { delete p; }

grag_status grag_index_create(size_t dim, grag_index** out) {
  return guard([&] {
    require_ptr(out, "out");
    *out = new grag_index{EmbeddingIndex(dim)};
  });
}

grag_status grag_index_add(grag_index* index, int64_t id, const float* vector,
                           size_t dim, int normalize) {
  return guard([&] {
    require_ptr(index, "index");
    const auto v = view(vector, dim, "vector");
    if (normalize) {
      index->index.add(id, gatedrag::normalize(v));
    } else {
      index->index.add(id, v);
    }
  });
}

grag_status grag_index_load(const char* path, size_t expected_dim,
                            grag_index** out) {
  return guard([&] {
    require_ptr(path, "path");
    require_ptr(out, "out");
    std::optional<std::size_t> dim;
    if (expected_dim > 0) dim = expected_dim;
    *out = new grag_index{EmbeddingIndex::load(path, dim)};
  });
}

grag_status grag_index_save(const grag_index* index, const char* path) {
  return guard([&] {
    require_ptr(index, "index");
    require_ptr(path, "path");
    index->index.save(path);
  });
}

size_t grag_index_size(const grag_index* index) {
  return index ? index->index.size() : 0;
}
size_t grag_index_dim(const grag_index* index) {
  return index ? index->index.dim() : 0;
}

grag_status grag_index_search(const grag_index* index, const float* query,
                              size_t dim, size_t k, int normalize,
                              grag_hit* hits, size_t* n_hits) {
  return guard([&] {
    require_ptr(index, "index");
    require_ptr(n_hits, "n_hits");
    if (k > 0) require_ptr(hits, "hits");
    const auto q = view(query, dim, "query");
    const auto found = normalize
                           ? index->index.search(gatedrag::normalize(q), k)
                           : index->index.search(q, k);
    for (size_t i = 0; i < found.size(); ++i) {
      hits[i] = {found[i].id, found[i].score};
    }
    *n_hits = found.size();
  });
}

grag_status grag_index_check_passages(const grag_index* index,
                                      const grag_passages* passages) {
  return guard([&] {
    require_ptr(index, "index");
    require_ptr(passages, "passages");
    for (auto id : index->index.ids()) {
      GATEDRAG_REQUIRE(passages->store.find(id) != nullptr,
                       ErrorCode::data_integrity,
                       "indexed id {} has no passage", id);
    }
  });
}

void grag_index_destroy(grag_index* index) { delete index; }

grag_status grag_format_context(const grag_hit* hits, size_t n,
                                const grag_passages* passages, size_t budget,
                                grag_string** text, size_t* token_count,
                                int* truncated) {
  return guard([&] {
    require_ptr(passages, "passages");
    require_ptr(text, "text");
    std::vector<SearchHit> h;
    for (const auto& hit : view(hits, n, "hits")) h.push_back({hit.id, hit.score});
    auto block = format_context(h, passages->store, budget);
    if (token_count) *token_count = block.token_count;
    if (truncated) *truncated = block.truncated ? 1 : 0;
    *text = make_string(std::move(block.text));
  });
}

grag_status grag_trace_set_load(const char* path, grag_trace_set** out) {
  return guard([&] {
    require_ptr(path, "path");
    require_ptr(out, "out");
    *out = new grag_trace_set{read_trace_file(path)};
  });
}

grag_status grag_trace_set_save(const grag_trace_set* t, const char* path) {
  return guard([&] {
    require_ptr(t, "trace set");
    require_ptr(path, "path");
    write_trace_file(path, t->records);
  });
}

size_t grag_trace_set_size(const grag_trace_set* t) {
  return t ? t->records.size() : 0;
}

const char* grag_trace_set_query_id(const grag_trace_set* t, size_t i) {
  return t && i < t->records.size() ? t->records[i].query_id.c_str() : nullptr;
}

grag_status grag_trace_set_score(const grag_trace_set* t,
                                 const grag_gate_config* config,
                                 double* scores) {
  return guard([&] {
    require_ptr(t, "trace set");
    require_ptr(config, "config");
    if (!t->records.empty()) require_ptr(scores, "scores");
    const GateConfig g = from_c(*config);
    g.validate();
    std::vector<double> out;
    out.reserve(t->records.size());
    for (const auto& r : t->records) {
      if (g.kind == GateKind::variance) {
        GATEDRAG_REQUIRE(r.samples.has_value(), ErrorCode::data_integrity,
                         "query '{}' has no samples for the variance gate",
                         r.query_id);
        GATEDRAG_REQUIRE(r.samples->n() >= g.n_samples,
                         ErrorCode::data_integrity,
                         "query '{}' has {} samples, {} required", r.query_id,
                         r.samples->n(), g.n_samples);
      }
      out.push_back(
          score(g, r.draft, r.samples ? &*r.samples : nullptr).value);
    }
    std::copy(out.begin(), out.end(), scores);
  });
}

void grag_trace_set_destroy(grag_trace_set* t) { delete t; }

grag_status grag_run_config_resolve(const char* config_json,
                                    const char* base_dir,
                                    grag_string** resolved) {
  return guard([&] {
    require_ptr(config_json, "config_json");
    require_ptr(resolved, "resolved");
    *resolved = make_string(
        RunConfig::from_json(config_json, base_path(base_dir)).to_json());
  });
}

grag_status grag_run_execute(const char* config_json, const char* base_dir,
                             grag_run** out) {
  return guard([&] {
    require_ptr(config_json, "config_json");
    require_ptr(out, "out");
    auto run = std::make_unique<grag_run>();
    run->config = RunConfig::from_json(config_json, base_path(base_dir));
    run->result = execute_run(run->config);
    *out = run.release();
  });
}

grag_status grag_run_save(const grag_run* run, const char* out_dir) {
  return guard([&] {
    require_ptr(run, "run");
    std::filesystem::path dir;
    if (out_dir) {
      dir = out_dir;
    } else {
      GATEDRAG_REQUIRE(run->config.out_dir.has_value(),
                       ErrorCode::invalid_config,
                       "no output directory configured");
      dir = *run->config.out_dir;
    }
    RunConfig config = run->config;
    config.out_dir = std::filesystem::absolute(dir).lexically_normal();
    write_run_outputs(config, run->result, dir);
  });
}

grag_status grag_run_records_jsonl(const grag_run* run, grag_string** out) {
  return guard([&] {
    require_ptr(run, "run");
    require_ptr(out, "out");
    std::string text;
    for (const auto& r : run->result.records) {
      text += r.to_json();
      text += '\n';
    }
    *out = make_string(std::move(text));
  });
}

grag_status grag_run_summary_json(const grag_run* run, grag_string** out) {
  return guard([&] {
    require_ptr(run, "run");
    require_ptr(out, "out");
    *out = make_string(run->result.summary.to_json(run->config.options));
  });
}

size_t grag_run_size(const grag_run* run) {
  return run ? run->result.records.size() : 0;
}

size_t grag_run_failure_count(const grag_run* run) {
  return run ? run->result.summary.failures : 0;
}

void grag_run_destroy(grag_run* run) { delete run; }

grag_status grag_sweep_execute(const char* config_json, const char* base_dir,
                               const double* grid, size_t grid_size,
                               const char* format, grag_string** report,
                               size_t* failures) {
  return guard([&] {
    require_ptr(config_json, "config_json");
    require_ptr(format, "format");
    require_ptr(report, "report");
    const auto fmt = parse_report_format(format);
    const auto config = RunConfig::from_json(config_json, base_path(base_dir));
    const auto result = execute_sweep(config, view(grid, grid_size, "grid"));
    if (failures) *failures = result.failures;
    *report = make_string(emit_report(result.rows, fmt));
  });
}

grag_status grag_simulate(const char* spec_json, const char* format,
                          int has_seed, uint64_t seed, grag_string** report,
                          int* passed) {
  return guard([&] {
    require_ptr(spec_json, "spec_json");
    require_ptr(format, "format");
    require_ptr(report, "report");
    std::optional<std::uint64_t> s;
    if (has_seed) s = seed;
    auto result = run_simulation(spec_json, parse_report_format(format), s);
    if (passed) *passed = result.passed ? 1 : 0;
    *report = make_string(std::move(result.text));
  });
}

}  // extern "C"
