/* Copyright 2026 The gatedrag Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef GATEDRAG_GATEDRAG_H_
#define GATEDRAG_GATEDRAG_H_

/* C interface to libgatedrag.
 *
 * Every fallible call returns a grag_status. On failure the message is
 * available from grag_last_error() until the next failing call on the same
 * thread. Objects are opaque handles owned by the caller and released with
 * the matching *_destroy function; destroy functions accept NULL. Output
 * pointers are written only on success.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(GATEDRAG_BUILDING_LIBRARY)
#define GRAG_API __attribute__((visibility("default")))
#else
#define GRAG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum grag_status {
  GRAG_OK = 0,
  GRAG_ERR_INVALID_INPUT = 1,
  GRAG_ERR_INVALID_CONFIG = 2,
  GRAG_ERR_IO = 3,
  GRAG_ERR_FORMAT = 4,
  GRAG_ERR_DATA_INTEGRITY = 5,
  GRAG_ERR_INTERNAL = 6
} grag_status;

GRAG_API const char* grag_version(void);
GRAG_API const char* grag_status_name(grag_status status);
/* Message of the last failure on the calling thread; "" if none. */
GRAG_API const char* grag_last_error(void);

/* ---- Strings ---------------------------------------------------------- */

typedef struct grag_string grag_string;

GRAG_API const char* grag_string_data(const grag_string* s);
GRAG_API size_t grag_string_size(const grag_string* s);
GRAG_API void grag_string_destroy(grag_string* s);

/* ---- Gate ------------------------------------------------------------- */

typedef enum grag_gate_kind {
  GRAG_GATE_ENTROPY = 0,
  GRAG_GATE_MARGIN = 1,
  GRAG_GATE_VARIANCE = 2
} grag_gate_kind;

typedef struct grag_gate_config {
  grag_gate_kind kind;
  size_t k;
  double beta;
  size_t n_samples;
  double temperature;
  double tau;
  size_t recheck_stride; /* 0 disables the re-check */
} grag_gate_config;

/* Margin gate, k = 20, beta = 1, N = 3, T = 0.7, tau = 0.5, no re-check. */
GRAG_API void grag_gate_config_default(grag_gate_config* config);
GRAG_API grag_status grag_parse_gate_kind(const char* name,
                                          grag_gate_kind* out);

GRAG_API grag_status grag_step_entropy(const double* probs, size_t n,
                                       double* out);
GRAG_API grag_status grag_logit_gap(const double* logits, size_t n,
                                    double* out);
GRAG_API grag_status grag_entropy_score(const double* entropies, size_t k,
                                        double* out);
GRAG_API grag_status grag_margin_score(const double* gaps, size_t k,
                                       double beta, double* out);
/* `tokens` is an n x k row-major matrix of sampled token ids. */
GRAG_API grag_status grag_variance_score(const int64_t* tokens, size_t n,
                                         size_t k, double* out);
/* 1 iff score > tau. */
GRAG_API int grag_decide(double score, double tau);

/* ---- Calibration ------------------------------------------------------ */

typedef struct grag_cost_params {
  double t_draft;
  double t_ctx;
  double e_out0;
  double e_out1;
  double per_token_cost;
  double retrieval_overhead;
} grag_cost_params;

GRAG_API grag_status grag_quantile_threshold(const double* scores, size_t n,
                                             double rho, double* tau);
GRAG_API grag_status grag_realized_rate(const double* scores, size_t n,
                                        double tau, double* rate);
GRAG_API grag_status grag_accuracy_opt_threshold(const double* u,
                                                 const double* a0,
                                                 const double* a1, size_t n,
                                                 const double* grid,
                                                 size_t grid_size,
                                                 double* tau);
GRAG_API grag_status grag_expected_tokens(const grag_cost_params* params,
                                          double pi, double* out);
GRAG_API grag_status grag_delta_latency(const grag_cost_params* params,
                                        double pi, double* out);

/* ---- Score and dev files ---------------------------------------------- */

typedef struct grag_score_file grag_score_file;

GRAG_API grag_status grag_score_file_load(const char* path,
                                          grag_score_file** out);
GRAG_API size_t grag_score_file_size(const grag_score_file* f);
GRAG_API const char* grag_score_file_query_id(const grag_score_file* f,
                                              size_t i);
GRAG_API const double* grag_score_file_scores(const grag_score_file* f);
/* NULL unless the file has a0/a1 columns. */
GRAG_API const double* grag_score_file_a0(const grag_score_file* f);
GRAG_API const double* grag_score_file_a1(const grag_score_file* f);
GRAG_API void grag_score_file_destroy(grag_score_file* f);

/* Renders a score file; a0 and a1 are both NULL or both non-NULL. */
GRAG_API grag_status grag_scores_format(const char* const* query_ids,
                                        const double* scores, const double* a0,
                                        const double* a1, size_t n,
                                        grag_string** out);

/* ---- Passages ---------------------------------------------------------- */

typedef struct grag_passages grag_passages;

GRAG_API grag_status grag_passages_chunk_corpus(const char* corpus_path,
                                                size_t size, size_t overlap,
                                                size_t min_chars,
                                                int64_t first_id,
                                                grag_passages** out);
GRAG_API grag_status grag_passages_load(const char* path, grag_passages** out);
GRAG_API grag_status grag_passages_save(const grag_passages* p,
                                        const char* path);
GRAG_API size_t grag_passages_size(const grag_passages* p);
/* Title of passage `id`, or NULL if unknown. */
GRAG_API const char* grag_passages_title(const grag_passages* p, int64_t id);
GRAG_API void grag_passages_destroy(grag_passages* p);

/* ---- Index ------------------------------------------------------------- */

typedef struct grag_index grag_index;

typedef struct grag_hit {
  int64_t id;
  double score;
} grag_hit;

GRAG_API grag_status grag_index_create(size_t dim, grag_index** out);
/* With normalize != 0 the vector is scaled to unit norm first. */
GRAG_API grag_status grag_index_add(grag_index* index, int64_t id,
                                    const float* vector, size_t dim,
                                    int normalize);
/* expected_dim == 0 accepts any stored dimension. */
GRAG_API grag_status grag_index_load(const char* path, size_t expected_dim,
                                     grag_index** out);
GRAG_API grag_status grag_index_save(const grag_index* index, const char* path);
GRAG_API size_t grag_index_size(const grag_index* index);
GRAG_API size_t grag_index_dim(const grag_index* index);
/* Writes min(k, size) hits into `hits` (capacity k), best first. */
GRAG_API grag_status grag_index_search(const grag_index* index,
                                       const float* query, size_t dim,
                                       size_t k, int normalize, grag_hit* hits,
                                       size_t* n_hits);
/* Data-integrity error if some indexed id has no passage. */
GRAG_API grag_status grag_index_check_passages(const grag_index* index,
                                               const grag_passages* passages);
GRAG_API void grag_index_destroy(grag_index* index);

GRAG_API grag_status grag_format_context(const grag_hit* hits, size_t n,
                                         const grag_passages* passages,
                                         size_t budget, grag_string** text,
                                         size_t* token_count, int* truncated);

/* ---- Traces ------------------------------------------------------------ */

typedef struct grag_trace_set grag_trace_set;

GRAG_API grag_status grag_trace_set_load(const char* path,
                                         grag_trace_set** out);
GRAG_API grag_status grag_trace_set_save(const grag_trace_set* t,
                                         const char* path);
GRAG_API size_t grag_trace_set_size(const grag_trace_set* t);
GRAG_API const char* grag_trace_set_query_id(const grag_trace_set* t,
                                             size_t i);
/* Scores every record; `scores` must hold grag_trace_set_size() values. */
GRAG_API grag_status grag_trace_set_score(const grag_trace_set* t,
                                          const grag_gate_config* config,
                                          double* scores);
GRAG_API void grag_trace_set_destroy(grag_trace_set* t);

/* ---- Runs and sweeps --------------------------------------------------- */

typedef struct grag_run grag_run;

/* `base_dir` (nullable) anchors relative paths in the config. */
GRAG_API grag_status grag_run_config_resolve(const char* config_json,
                                             const char* base_dir,
                                             grag_string** resolved);
GRAG_API grag_status grag_run_execute(const char* config_json,
                                      const char* base_dir, grag_run** out);
/* Writes records.jsonl, summary.json and resolved_config.json. A NULL
 * out_dir uses the configured one. */
GRAG_API grag_status grag_run_save(const grag_run* run, const char* out_dir);
GRAG_API grag_status grag_run_records_jsonl(const grag_run* run,
                                            grag_string** out);
GRAG_API grag_status grag_run_summary_json(const grag_run* run,
                                           grag_string** out);
GRAG_API size_t grag_run_size(const grag_run* run);
GRAG_API size_t grag_run_failure_count(const grag_run* run);
GRAG_API void grag_run_destroy(grag_run* run);

/* `format` is "csv" or "md". */
GRAG_API grag_status grag_sweep_execute(const char* config_json,
                                        const char* base_dir,
                                        const double* grid, size_t grid_size,
                                        const char* format, grag_string** report,
                                        size_t* failures);

/* ---- Simulation -------------------------------------------------------- */

/* Runs the checks in `spec_json`. `seed` overrides the spec seed when
 * has_seed != 0. `passed` receives 1 if no executed check failed. */
GRAG_API grag_status grag_simulate(const char* spec_json, const char* format,
                                   int has_seed, uint64_t seed,
                                   grag_string** report, int* passed);

#ifdef __cplusplus
}
#endif

#endif /* GATEDRAG_GATEDRAG_H_ */
