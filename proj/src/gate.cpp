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

#include "gatedrag/gate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gatedrag/error.hpp"
#include "gatedrag/numeric.hpp"

namespace gatedrag {

namespace {

constexpr double kRecomputeTolerance = 1e-9;
constexpr double kProbabilitySumTolerance = 1e-6;

void check_logit_row(std::span<const double> logits) {
  GATEDRAG_REQUIRE(logits.size() >= 2, ErrorCode::invalid_input,
                   "logit row needs at least 2 entries, got {}",
                   logits.size());
  for (double v : logits) {
    GATEDRAG_REQUIRE(std::isfinite(v), ErrorCode::invalid_input,
                     "logit row contains a non-finite value");
  }
}

void check_steps(std::span<const StepStats> steps) {
  GATEDRAG_REQUIRE(!steps.empty(), ErrorCode::invalid_input,
                   "prefix draft has no steps");
  for (const auto& s : steps) {
    GATEDRAG_REQUIRE(std::isfinite(s.entropy_nats) && s.entropy_nats >= 0.0,
                     ErrorCode::invalid_input,
                     "step entropy must be finite and >= 0, got {}",
                     s.entropy_nats);
    GATEDRAG_REQUIRE(std::isfinite(s.gap) && s.gap >= 0.0,
                     ErrorCode::invalid_input,
                     "step gap must be finite and >= 0, got {}", s.gap);
  }
}

}  // namespace

std::string_view to_string(GateKind kind) noexcept {
  switch (kind) {
    case GateKind::entropy: return "entropy";
    case GateKind::margin: return "margin";
    case GateKind::variance: return "variance";
  }
  return "unknown";
}

GateKind parse_gate_kind(std::string_view name) {
  if (name == "entropy") return GateKind::entropy;
  if (name == "margin") return GateKind::margin;
  if (name == "variance") return GateKind::variance;
  fail(ErrorCode::invalid_config,
       "unknown gate '{}' (expected entropy, margin or variance)", name);
}

PrefixDraft PrefixDraft::from_logits(std::vector<std::vector<double>> rows) {
  PrefixDraft draft;
  draft.steps.reserve(rows.size());
  for (const auto& row : rows) {
    draft.steps.push_back({step_entropy(softmax(row)), logit_gap(row)});
  }
  draft.raw_rows = std::move(rows);
  return draft;
}

void PrefixDraft::validate() const {
  check_steps(steps);
  if (raw_rows.empty()) return;
  GATEDRAG_REQUIRE(raw_rows.size() == steps.size(), ErrorCode::invalid_input,
                   "raw_rows has {} rows but draft has {} steps",
                   raw_rows.size(), steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const double h = step_entropy(softmax(raw_rows[t]));
    const double g = logit_gap(raw_rows[t]);
    GATEDRAG_REQUIRE(std::abs(h - steps[t].entropy_nats) <= kRecomputeTolerance &&
                         std::abs(g - steps[t].gap) <= kRecomputeTolerance,
                     ErrorCode::invalid_input,
                     "step {} statistics disagree with its raw logit row", t);
  }
}

void StochasticPrefixSet::validate() const {
  GATEDRAG_REQUIRE(samples.size() >= 2, ErrorCode::invalid_input,
                   "variance gate needs at least 2 samples, got {}",
                   samples.size());
  const std::size_t len = samples.front().size();
  GATEDRAG_REQUIRE(len >= 1, ErrorCode::invalid_input,
                   "sampled prefixes are empty");
  for (const auto& s : samples) {
    GATEDRAG_REQUIRE(s.size() == len, ErrorCode::invalid_input,
                     "ragged sampled prefixes ({} vs {} tokens)", s.size(),
                     len);
    for (auto tok : s) {
      GATEDRAG_REQUIRE(tok >= 0, ErrorCode::invalid_input,
                       "token ids must be non-negative, got {}", tok);
    }
  }
  GATEDRAG_REQUIRE(temperature > 0.0 && std::isfinite(temperature),
                   ErrorCode::invalid_input,
                   "sample temperature must be > 0, got {}", temperature);
}

void GateConfig::validate() const {
  GATEDRAG_REQUIRE(k >= 1, ErrorCode::invalid_config, "k must be >= 1");
  GATEDRAG_REQUIRE(beta > 0.0 && std::isfinite(beta), ErrorCode::invalid_config,
                   "beta must be > 0, got {}", beta);
  GATEDRAG_REQUIRE(n_samples >= 2, ErrorCode::invalid_config,
                   "n_samples must be >= 2, got {}", n_samples);
  GATEDRAG_REQUIRE(sample_temperature > 0.0 && std::isfinite(sample_temperature),
                   ErrorCode::invalid_config,
                   "sample temperature must be > 0, got {}",
                   sample_temperature);
  GATEDRAG_REQUIRE(!std::isnan(tau), ErrorCode::invalid_config,
                   "tau must not be NaN");
  if (recheck_stride) {
    GATEDRAG_REQUIRE(*recheck_stride > 0, ErrorCode::invalid_config,
                     "recheck stride must be > 0");
    GATEDRAG_REQUIRE(kind != GateKind::variance, ErrorCode::invalid_config,
                     "re-check is not defined for the variance gate");
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  check_logit_row(logits);
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
  }
  const double z = pairwise_sum(out);
  for (double& p : out) p /= z;
  return out;
}

double step_entropy(std::span<const double> probs) {
  GATEDRAG_REQUIRE(!probs.empty(), ErrorCode::invalid_input,
                   "empty probability vector");
  std::vector<double> terms(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    GATEDRAG_REQUIRE(std::isfinite(p) && p >= 0.0, ErrorCode::invalid_input,
                     "probability {} is negative or non-finite", p);
    terms[i] = p > 0.0 ? -p * std::log(p) : 0.0;
  }
  const double total = pairwise_sum(probs);
  GATEDRAG_REQUIRE(std::abs(total - 1.0) <= kProbabilitySumTolerance,
                   ErrorCode::invalid_input,
                   "probabilities sum to {}, not 1", total);
  const double h = pairwise_sum(terms);
  return std::clamp(h, 0.0, std::log(static_cast<double>(probs.size())));
}

double logit_gap(std::span<const double> logits) {
  check_logit_row(logits);
  double first = -std::numeric_limits<double>::infinity();
  double second = first;
  for (double v : logits) {
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  return first - second;
}

double margin_link(double gap, double beta) { return std::exp(-gap / beta); }

double entropy_score(std::span<const StepStats> steps) {
  check_steps(steps);
  std::vector<double> h(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) h[t] = steps[t].entropy_nats;
  return pairwise_mean(h);
}

double margin_score(std::span<const StepStats> steps, double beta) {
  GATEDRAG_REQUIRE(beta > 0.0 && std::isfinite(beta), ErrorCode::invalid_config,
                   "beta must be > 0, got {}", beta);
  check_steps(steps);
  std::vector<double> u(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    u[t] = margin_link(steps[t].gap, beta);
  }
  return pairwise_mean(u);
}

double variance_score(std::span<const std::vector<std::int64_t>> samples,
                      std::size_t k) {
  GATEDRAG_REQUIRE(samples.size() >= 2, ErrorCode::invalid_input,
                   "variance gate needs at least 2 samples, got {}",
                   samples.size());
  const std::size_t len = samples.front().size();
  for (const auto& s : samples) {
    GATEDRAG_REQUIRE(s.size() == len, ErrorCode::invalid_input,
                     "ragged sampled prefixes ({} vs {} tokens)", s.size(),
                     len);
  }
  GATEDRAG_REQUIRE(k >= 1 && k <= len, ErrorCode::invalid_input,
                   "cannot score {} steps from {}-token samples", k, len);

  // Disagreement counts are integers, so the mean is formed with a single
  // division and the all-distinct case lands exactly on (N-1)/N.
  const std::size_t n = samples.size();
  std::vector<std::int64_t> column(n);
  std::uint64_t disagreements = 0;
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t i = 0; i < n; ++i) column[i] = samples[i][t];
    std::sort(column.begin(), column.end());
    std::size_t mode = 1;
    std::size_t run = 1;
    for (std::size_t i = 1; i < n; ++i) {
      run = column[i] == column[i - 1] ? run + 1 : 1;
      mode = std::max(mode, run);
    }
    disagreements += n - mode;
  }
  return static_cast<double>(disagreements) / static_cast<double>(n * k);
}

GateScore entropy_gate_score(const PrefixDraft& draft) {
  return {entropy_score(draft.steps), GateKind::entropy, draft.k()};
}

GateScore margin_gate_score(const PrefixDraft& draft, double beta) {
  return {margin_score(draft.steps, beta), GateKind::margin, draft.k()};
}

GateScore variance_gate_score(const StochasticPrefixSet& set) {
  set.validate();
  return {variance_score(set.samples, set.k()), GateKind::variance, set.k()};
}

GateScore score(const GateConfig& config, const PrefixDraft& draft,
                const StochasticPrefixSet* samples) {
  switch (config.kind) {
    case GateKind::entropy:
    case GateKind::margin: {
      GATEDRAG_REQUIRE(draft.k() >= 1, ErrorCode::invalid_input,
                       "prefix draft has no steps");
      const std::size_t k = std::min(config.k, draft.k());
      std::span<const StepStats> steps(draft.steps.data(), k);
      const double v = config.kind == GateKind::entropy
                           ? entropy_score(steps)
                           : margin_score(steps, config.beta);
      return {v, config.kind, k};
    }
    case GateKind::variance: {
      GATEDRAG_REQUIRE(samples != nullptr, ErrorCode::invalid_input,
                       "variance gate requires sampled prefixes");
      samples->validate();
      GATEDRAG_REQUIRE(samples->n() >= config.n_samples,
                       ErrorCode::invalid_input,
                       "variance gate wants {} samples, only {} available",
                       config.n_samples, samples->n());
      const std::size_t k = std::min(config.k, samples->k());
      std::span<const std::vector<std::int64_t>> rows(samples->samples.data(),
                                                     config.n_samples);
      return {variance_score(rows, k), GateKind::variance, k};
    }
  }
  fail(ErrorCode::internal, "unhandled gate kind");
}

}  // namespace gatedrag
