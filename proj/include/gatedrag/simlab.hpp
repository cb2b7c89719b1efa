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

// Synthetic (u, a0, a1) populations and checks of the gated-accuracy
// identities, the two dominance statements and budget calibration.
//
// Dominance checks work on realized populations: they test the realized
// conditional signs of delta = a1 - a0 and compare exact population means.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gatedrag/calibration.hpp"
#include "gatedrag/eval.hpp"

namespace gatedrag {

/// Deterministic splitmix64 stream.
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed) noexcept : state_(seed) {}
  std::uint64_t next() noexcept;
  double uniform() noexcept;  // [0, 1)
  double normal() noexcept;   // Box-Muller, standard normal

 private:
  std::uint64_t state_;
};

struct Distribution {
  enum class Kind { point, uniform, normal, two_point };

  Kind kind = Kind::point;
  double a = 0.0;  // point value, lower bound, mean, or low value
  double b = 0.0;  // upper bound, stddev, or high value
  double p = 0.0;  // two_point: probability of b

  static Distribution point(double v);
  static Distribution uniform(double lo, double hi);
  static Distribution normal(double mean, double stddev);
  static Distribution two_point(double lo, double hi, double p_hi);

  double sample(SimRng& rng) const;
  double mean() const;
  double stddev() const;
  /// Infimum and supremum of the support (infinite for normal).
  double lower() const;
  double upper() const;
  bool has_atoms() const { return kind == Kind::point || kind == Kind::two_point; }

  /// Throws invalid_config.
  void validate() const;
};

enum class A0Mode { bernoulli, probability };

struct PopulationSpec {
  std::size_t n = 10000;
  double tau_star = 0.5;
  Distribution u = Distribution::uniform(0.0, 1.0);
  Distribution delta_low = Distribution::point(0.0);   // mean <= 0
  Distribution delta_high = Distribution::point(0.0);  // mean >= 0
  double a0_base = 0.5;
  A0Mode a0_mode = A0Mode::bernoulli;
  std::uint64_t seed = 0;

  /// Throws invalid_config for sign violations or infeasible clipping.
  void validate() const;
};

using PopulationRecord = DevRecord;

/// Draws u, then a0 (Bernoulli(a0_base) or the constant a0_base), then
/// delta from delta_low or delta_high by the side of tau_star, clipped so
/// that a1 = a0 + delta lies in [0, 1].
std::vector<PopulationRecord> generate_population(const PopulationSpec& spec);

struct PolicyAccuracy {
  double never = 0.0;
  double always = 0.0;
  double gate = 0.0;
  double pi = 0.0;
};

/// gate = mean(a0) + mean(delta * [u > tau]).
PolicyAccuracy evaluate_policies(std::span<const PopulationRecord> pop,
                                 double tau);

struct ConditionalDelta {
  std::size_t n_low = 0;
  std::size_t n_high = 0;
  double mean_low = 0.0;  // 0 when n_low == 0
  double mean_high = 0.0;
  double min_low = 0.0;
  double max_low = 0.0;
};

ConditionalDelta conditional_delta(std::span<const PopulationRecord> pop,
                                   double tau_star);

enum class CheckStatus { passed, failed, precondition_unmet };

std::string_view to_string(CheckStatus status) noexcept;

struct DominanceReport {
  std::string name;
  CheckStatus status = CheckStatus::passed;
  double gate = 0.0;
  double baseline = 0.0;
  double margin = 0.0;  // gate - baseline
  std::string detail;
};

inline constexpr double kDominanceTolerance = 1e-12;

/// Gate at tau_star against Never, given mean(delta | u > tau_star) >= 0.
DominanceReport check_weak_dominance(std::span<const PopulationRecord> pop,
                                     double tau_star);
/// Gate at tau_star against Always, given delta <= 0 on every record with
/// u <= tau_star.
DominanceReport check_always_dominance(std::span<const PopulationRecord> pop,
                                       double tau_star);

struct BudgetRow {
  double rho = 0.0;
  std::size_t trials = 0;
  std::size_t within_tolerance = 0;
  double max_abs_error = 0.0;
  double mean_rate = 0.0;
  bool degenerate = false;  // score distribution has atoms
  bool passed = false;
};

struct BudgetOptions {
  std::size_t n_calib = 10000;
  std::size_t n_eval = 10000;
  std::size_t trials = 100;
  double tolerance = 0.02;
  double min_pass_fraction = 0.95;
  std::uint64_t seed = 0;
};

/// For each rho and trial: calibrate on n_calib fresh draws, measure the
/// realized rate on n_eval fresh draws.
std::vector<BudgetRow> check_budget_consistency(const Distribution& u,
                                                std::span<const double> rhos,
                                                const BudgetOptions& options);

/// Full simulation described by a JSON document:
///
///   {"seed": 0,
///    "population": {"n", "tau_star", "u", "delta_low", "delta_high",
///                   "a0_base", "a0_mode": "bernoulli" | "probability"},
///    "budget": {"u", "rhos", "n_calib", "n_eval", "trials", "tolerance",
///               "min_pass_fraction"}}
///
/// Distributions are {"kind": "point", "value"}, {"kind": "uniform", "lo",
/// "hi"}, {"kind": "normal", "mean", "stddev"} or {"kind": "two_point",
/// "lo", "hi", "p_hi"}. Either section may be omitted; unknown keys are
/// rejected. `passed` is false if any executed check failed; unmet
/// preconditions and budget rows over atomic distributions do not count.
struct SimulationReport {
  std::string text;
  bool passed = true;
};
SimulationReport run_simulation(std::string_view spec_json, ReportFormat format,
                                std::optional<std::uint64_t> seed = {});

}  // namespace gatedrag
