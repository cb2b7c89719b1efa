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

// Uncertainty scores computed from a short no-context prefix draft, and the
// retrieve/skip decision built on them.
//
// Three scores are supported, all averaged over the k drafted steps:
//   entropy   mean next-token entropy in nats
//   margin    mean of exp(-gap / beta), gap = top-1 minus top-2 logit
//   variance  mean disagreement (1 - mode frequency) across N sampled prefixes
// Larger is more uncertain for all three. Retrieval fires iff score > tau;
// a score equal to tau skips retrieval.
//
// All functions are pure and safe to call concurrently.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace gatedrag {

enum class GateKind { entropy, margin, variance };

std::string_view to_string(GateKind kind) noexcept;
/// Throws invalid_config for unknown names.
GateKind parse_gate_kind(std::string_view name);

/// Per-step statistics of one drafted token.
struct StepStats {
  double entropy_nats = 0.0;
  double gap = 0.0;

  friend bool operator==(const StepStats&, const StepStats&) = default;
};

/// Greedy k-token draft decoded from the base prompt. `steps` is the
/// canonical representation; `raw_rows` is optional and, when present, must
/// reproduce `steps`.
struct PrefixDraft {
  std::vector<StepStats> steps;
  std::vector<std::vector<double>> raw_rows;

  std::size_t k() const noexcept { return steps.size(); }

  /// Builds statistics from full logit rows and keeps the rows.
  static PrefixDraft from_logits(std::vector<std::vector<double>> rows);

  /// Throws invalid_input if any invariant is broken.
  void validate() const;
};

/// N sampled prefixes of identical length k.
struct StochasticPrefixSet {
  std::vector<std::vector<std::int64_t>> samples;
  double temperature = 0.7;

  std::size_t n() const noexcept { return samples.size(); }
  std::size_t k() const noexcept {
    return samples.empty() ? 0 : samples.front().size();
  }

  void validate() const;
};

struct GateConfig {
  GateKind kind = GateKind::margin;
  std::size_t k = 20;
  double beta = 1.0;
  std::size_t n_samples = 3;
  double sample_temperature = 0.7;
  double tau = 0.5;
  std::optional<std::size_t> recheck_stride;

  /// Throws invalid_config.
  void validate() const;
};

struct GateScore {
  double value = 0.0;
  GateKind kind = GateKind::margin;
  std::size_t k = 0;
};

std::vector<double> softmax(std::span<const double> logits);

/// Shannon entropy in nats. 0 log 0 is taken as 0.
double step_entropy(std::span<const double> probs);

/// Top-1 minus top-2 logit; 0 on a tie.
double logit_gap(std::span<const double> logits);

/// Margin link exp(-gap / beta).
double margin_link(double gap, double beta);

double entropy_score(std::span<const StepStats> steps);
double margin_score(std::span<const StepStats> steps, double beta);
/// `samples` holds N rows; only the first `k` columns are used.
double variance_score(std::span<const std::vector<std::int64_t>> samples,
                      std::size_t k);

GateScore entropy_gate_score(const PrefixDraft& draft);
GateScore margin_gate_score(const PrefixDraft& draft, double beta);
GateScore variance_gate_score(const StochasticPrefixSet& set);

/// Scores a draft under `config`, using at most `config.k` leading steps
/// (fewer when the draft stopped early). The variance gate reads `samples`
/// and uses its first `config.n_samples` rows.
GateScore score(const GateConfig& config, const PrefixDraft& draft,
                const StochasticPrefixSet* samples);

inline bool decide(double score, double tau) noexcept { return score > tau; }
inline bool decide(const GateScore& score, double tau) noexcept {
  return decide(score.value, tau);
}

}  // namespace gatedrag
