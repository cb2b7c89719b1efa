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

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gatedrag {

/// Threshold meaning "always retrieve": every finite score exceeds it.
inline constexpr double kAlwaysRetrieve = -std::numeric_limits<double>::infinity();
/// Threshold meaning "never retrieve".
inline constexpr double kNeverRetrieve = std::numeric_limits<double>::infinity();

/// One development-set query: gate score plus correctness (indicator or
/// probability) without and with retrieval.
struct DevRecord {
  double u = 0.0;
  double a0 = 0.0;
  double a1 = 0.0;

  double delta() const noexcept { return a1 - a0; }
};

/// Token and latency parameters of the per-query cost model. All
/// quantities are non-negative.
struct CostParams {
  double t_draft = 0.0;
  double t_ctx = 0.0;
  double e_out0 = 0.0;
  double e_out1 = 0.0;
  double per_token_cost = 0.0;      // seconds per token
  double retrieval_overhead = 0.0;  // seconds per retrieval call

  void validate() const;
};

/// Budget-targeted threshold: the lower empirical quantile at 1 - rho.
///
/// Returns the sample value tau for which the fraction of scores strictly
/// above tau is the largest achievable value not exceeding rho. rho == 0
/// yields max(scores); rho == 1 yields kAlwaysRetrieve. With tied scores the
/// realized rate can fall short of rho by more than 1/n.
double quantile_threshold(std::span<const double> scores, double rho);

/// Fraction of scores strictly greater than tau.
double realized_rate(std::span<const double> scores, double tau);

/// Mean of a0 + (a1 - a0) * [u > tau].
double gated_accuracy(std::span<const DevRecord> dev, double tau);

/// Grid value maximizing gated dev accuracy; ties go to the larger tau.
double accuracy_opt_threshold(std::span<const DevRecord> dev,
                              std::span<const double> grid);

/// Expected LM tokens per query at retrieval rate pi:
///   t_draft + (1 - pi) e_out0 + pi (t_ctx + e_out1)
double expected_tokens(const CostParams& params, double pi);

/// Added seconds per query over the never-retrieve baseline:
///   c t_draft + pi (overhead + c (t_ctx + e_out1 - e_out0))
double delta_latency(const CostParams& params, double pi);

/// A row of a score or dev file. Score files carry (query_id, score); dev
/// files add a0 and a1.
struct ScoreRow {
  std::string query_id;
  double score = 0.0;
  std::optional<double> a0;
  std::optional<double> a1;
};

/// Tab-separated, one record per line: `query_id<TAB>score[<TAB>a0<TAB>a1]`.
/// Blank lines and lines starting with '#' are ignored. All rows of a file
/// must have the same column count.
std::vector<ScoreRow> read_score_file(const std::filesystem::path& path);
void write_score_file(const std::filesystem::path& path,
                      std::span<const ScoreRow> rows);

std::vector<DevRecord> to_dev_records(std::span<const ScoreRow> rows);

}  // namespace gatedrag
