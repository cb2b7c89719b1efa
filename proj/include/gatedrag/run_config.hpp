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

// Declarative run configuration (JSON). Every key is optional except
// "trace"; unknown keys are rejected at every level.
//
//   {
//     "trace": "traces.jsonl",
//     "dataset": null,
//     "out_dir": null,
//     "policy": "gate",
//     "seed": 0,
//     "gate": {"kind": "margin", "k": 20, "beta": 1.0, "n_samples": 3,
//              "temperature": 0.7, "tau": 0.5, "recheck_stride": null},
//     "retrieval": {"top_k": 5, "ctx_budget": 1024, "index": null,
//                   "passages": null},
//     "cost": {"per_token_s": 0.0, "retrieval_overhead_s": 0.0},
//     "prompt": {"template": "...{question}...",
//                "context_template": "...{context}...{prompt}..."}
//   }
//
// "tau" also accepts the strings "inf" and "-inf". Relative paths resolve
// against the base directory given to from_json; the resolved form written
// next to run outputs uses absolute paths and reproduces the run.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "gatedrag/eval.hpp"
#include "gatedrag/pipeline.hpp"

namespace gatedrag {

struct RunConfig {
  std::filesystem::path trace;
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> index;
  std::optional<std::filesystem::path> passages;
  PipelineOptions options;

  /// Throws invalid_config.
  static RunConfig from_json(std::string_view text,
                             const std::filesystem::path& base_dir = {});
  /// Resolved configuration, pretty-printed with absolute paths.
  std::string to_json() const;

  void validate() const;
};

/// Loads trace, dataset, index and passages and runs the configured policy.
RunResult execute_run(const RunConfig& config);

/// Writes records.jsonl, summary.json and resolved_config.json into `dir`,
/// creating it if needed. Existing files are overwritten.
void write_run_outputs(const RunConfig& config, const RunResult& result,
                       const std::filesystem::path& dir);

struct SweepResult {
  std::vector<MetricRow> rows;
  std::size_t failures = 0;
};

SweepResult execute_sweep(const RunConfig& config,
                          std::span<const double> tau_grid);

}  // namespace gatedrag
