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
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gatedrag/error.hpp"

namespace gatedrag {
namespace {

constexpr double kTol = 1e-9;

std::vector<StepStats> gaps_of(std::initializer_list<double> gaps) {
  std::vector<StepStats> out;
  for (double g : gaps) out.push_back({0.0, g});
  return out;
}

std::vector<StepStats> entropies_of(std::initializer_list<double> hs) {
  std::vector<StepStats> out;
  for (double h : hs) out.push_back({h, 0.0});
  return out;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::internal;
}

TEST(Softmax, UniformRow) {
  std::vector<double> row{0.0, 0.0, 0.0};
  auto p = softmax(row);
  for (double x : p) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  std::vector<double> a{0.3, -1.2, 2.5, 0.0};
  std::vector<double> b = a;
  for (double& x : b) x += 700.0;  // would overflow without max-subtraction
  auto pa = softmax(a);
  auto pb = softmax(b);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(pa[i], pb[i], 1e-12);
}

TEST(Softmax, LnTwoRow) {
  std::vector<double> row{std::log(2.0), 0.0, 0.0};
  auto p = softmax(row);
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
  EXPECT_NEAR(p[2], 0.25, 1e-15);
}

TEST(Softmax, RejectsNonFinite) {
  std::vector<double> row{0.0, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_EQ(code_of([&] { softmax(row); }), ErrorCode::invalid_input);
  std::vector<double> single{1.0};
  EXPECT_EQ(code_of([&] { softmax(single); }), ErrorCode::invalid_input);
}

TEST(StepEntropy, Examples) {
  std::vector<double> uniform(4, 0.25);
  EXPECT_NEAR(step_entropy(uniform), std::log(4.0), 1e-12);
  std::vector<double> one_hot{0.0, 1.0, 0.0};
  EXPECT_EQ(step_entropy(one_hot), 0.0);
  std::vector<double> mixed{0.5, 0.25, 0.25};
  EXPECT_NEAR(step_entropy(mixed), 1.5 * std::log(2.0), 1e-12);
}

TEST(StepEntropy, PermutationInvariant) {
  std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  const double h = step_entropy(p);
  std::sort(p.begin(), p.end());
  do {
    EXPECT_NEAR(step_entropy(p), h, 1e-12);
  } while (std::next_permutation(p.begin(), p.end()));
}

TEST(StepEntropy, RejectsBadVector) {
  std::vector<double> bad_sum{0.5, 0.4};
  EXPECT_EQ(code_of([&] { step_entropy(bad_sum); }), ErrorCode::invalid_input);
  std::vector<double> negative{1.2, -0.2};
  EXPECT_EQ(code_of([&] { step_entropy(negative); }), ErrorCode::invalid_input);
}

TEST(LogitGap, Examples) {
  std::vector<double> a{3.0, 1.0, 0.5};
  EXPECT_EQ(logit_gap(a), 2.0);
  std::vector<double> tie{5.0, 5.0};
  EXPECT_EQ(logit_gap(tie), 0.0);
  std::vector<double> neg{-1.0, -4.0, -1.5};
  EXPECT_EQ(logit_gap(neg), 0.5);
  std::vector<double> one{1.0};
  EXPECT_EQ(code_of([&] { logit_gap(one); }), ErrorCode::invalid_input);
}

TEST(LogitGap, ShiftInvariant) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> row(7);
    for (double& x : row) x = n(rng);
    std::vector<double> shifted = row;
    for (double& x : shifted) x += 3.5;
    EXPECT_NEAR(logit_gap(row), logit_gap(shifted), 1e-12);
    EXPECT_NEAR(step_entropy(softmax(row)), step_entropy(softmax(shifted)),
                1e-12);
  }
}

TEST(EntropyScore, Examples) {
  EXPECT_EQ(entropy_score(entropies_of({0.0, 0.0, 0.0})), 0.0);
  EXPECT_EQ(entropy_score(entropies_of({std::log(4.0)})), std::log(4.0));
  EXPECT_NEAR(entropy_score(entropies_of({1.0, 0.5, 0.3})), 0.6, kTol);
  std::vector<StepStats> empty;
  EXPECT_EQ(code_of([&] { entropy_score(empty); }), ErrorCode::invalid_input);
}

TEST(MarginScore, Examples) {
  EXPECT_EQ(margin_score(gaps_of({0.0, 0.0}), 1.0), 1.0);
  const double l2 = std::log(2.0);
  EXPECT_NEAR(margin_score(gaps_of({l2, l2, l2}), 1.0), 0.5, 1e-15);
  EXPECT_NEAR(margin_score(gaps_of({0.0, l2, std::log(4.0)}), 1.0),
              1.75 / 3.0, kTol);
  EXPECT_EQ(code_of([] { margin_score(gaps_of({1.0}), 0.0); }),
            ErrorCode::invalid_config);
  EXPECT_EQ(code_of([] { margin_score(gaps_of({1.0}), -1.0); }),
            ErrorCode::invalid_config);
}

TEST(MarginScore, CoordinatewiseMonotone) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<StepStats> steps(8);
    for (auto& s : steps) s.gap = u(rng);
    const double before = margin_score(steps, 1.0);
    steps[trial % 8].gap += 0.25;
    EXPECT_LT(margin_score(steps, 1.0), before);
  }
}

TEST(MarginScore, InUnitInterval) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<StepStats> steps(5);
    for (auto& s : steps) s.gap = u(rng);
    const double m = margin_score(steps, 0.5 + trial * 0.01);
    EXPECT_GT(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
}

TEST(VarianceScore, Examples) {
  std::vector<std::vector<std::int64_t>> same{{1, 2}, {1, 2}, {1, 2}};
  EXPECT_EQ(variance_score(same, 2), 0.0);
  std::vector<std::vector<std::int64_t>> distinct{{1, 4}, {2, 5}, {3, 6}};
  EXPECT_EQ(variance_score(distinct, 2), 2.0 / 3.0);
  std::vector<std::vector<std::int64_t>> mixed{{7, 9}, {7, 9}, {8, 9}};
  EXPECT_EQ(variance_score(mixed, 2), 1.0 / 6.0);
}

TEST(VarianceScore, RejectsRaggedAndSmall) {
  std::vector<std::vector<std::int64_t>> ragged{{1, 2}, {1}, {1, 2}};
  EXPECT_EQ(code_of([&] { variance_score(ragged, 2); }),
            ErrorCode::invalid_input);
  std::vector<std::vector<std::int64_t>> single{{1, 2}};
  EXPECT_EQ(code_of([&] { variance_score(single, 2); }),
            ErrorCode::invalid_input);
}

TEST(VarianceScore, TightUpperBoundForLargerN) {
  for (std::size_t n = 2; n <= 6; ++n) {
    std::vector<std::vector<std::int64_t>> rows(n, std::vector<std::int64_t>(4));
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t t = 0; t < 4; ++t) rows[r][t] = static_cast<std::int64_t>(r);
    }
    EXPECT_EQ(variance_score(rows, 4),
              static_cast<double>(n - 1) / static_cast<double>(n));
  }
}

TEST(Decide, StrictInequality) {
  EXPECT_FALSE(decide(0.5, 0.5));
  EXPECT_TRUE(decide(0.51, 0.5));
  const double l2 = std::log(2.0);
  EXPECT_TRUE(decide(margin_score(gaps_of({l2, l2}), 1.0), 0.4));
  EXPECT_TRUE(decide(-1e300, -std::numeric_limits<double>::infinity()));
  EXPECT_FALSE(decide(1e300, std::numeric_limits<double>::infinity()));
}

TEST(PrefixDraft, FromLogitsMatchesStoredStats) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.5);
  std::vector<std::vector<double>> rows(6, std::vector<double>(9));
  for (auto& row : rows) {
    for (double& x : row) x = n(rng);
  }
  PrefixDraft draft = PrefixDraft::from_logits(rows);
  ASSERT_EQ(draft.k(), 6u);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    // Independent recomputation: softmax by hand, then -sum p ln p.
    double mx = *std::max_element(rows[t].begin(), rows[t].end());
    double z = 0.0;
    for (double x : rows[t]) z += std::exp(x - mx);
    double h = 0.0;
    for (double x : rows[t]) {
      const double p = std::exp(x - mx) / z;
      h -= p * std::log(p);
    }
    std::vector<double> sorted = rows[t];
    std::sort(sorted.rbegin(), sorted.rend());
    EXPECT_NEAR(draft.steps[t].entropy_nats, h, kTol);
    EXPECT_NEAR(draft.steps[t].gap, sorted[0] - sorted[1], kTol);
  }
  EXPECT_NO_THROW(draft.validate());
}

TEST(PrefixDraft, ValidateRejectsInconsistentRawRows) {
  PrefixDraft draft = PrefixDraft::from_logits({{1.0, 0.0}, {2.0, 0.0}});
  draft.steps[0].gap = 0.25;
  EXPECT_EQ(code_of([&] { draft.validate(); }), ErrorCode::invalid_input);
  PrefixDraft negative;
  negative.steps = {{0.1, -1.0}};
  EXPECT_EQ(code_of([&] { negative.validate(); }), ErrorCode::invalid_input);
}

TEST(GateConfig, Validation) {
  GateConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.k, 20u);
  EXPECT_EQ(c.n_samples, 3u);
  EXPECT_EQ(c.sample_temperature, 0.7);
  EXPECT_EQ(c.beta, 1.0);
  c.k = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::invalid_config);
  c = GateConfig{};
  c.beta = 0.0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::invalid_config);
  c = GateConfig{};
  c.n_samples = 1;
  c.kind = GateKind::variance;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::invalid_config);
  c = GateConfig{};
  c.tau = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::invalid_config);
}

TEST(GateKind, ParseRoundTrip) {
  for (auto kind : {GateKind::entropy, GateKind::margin, GateKind::variance}) {
    EXPECT_EQ(parse_gate_kind(to_string(kind)), kind);
  }
  EXPECT_EQ(code_of([] { parse_gate_kind("bogus"); }), ErrorCode::invalid_config);
}

TEST(Score, UsesFirstKSteps) {
  PrefixDraft draft;
  draft.steps = gaps_of({0.0, 0.0, 100.0, 100.0});
  GateConfig c;
  c.k = 2;
  EXPECT_EQ(score(c, draft, nullptr).value, 1.0);
  EXPECT_EQ(score(c, draft, nullptr).k, 2u);
  c.k = 20;  // fewer recorded steps than k: all of them are used
  EXPECT_NEAR(score(c, draft, nullptr).value, 0.5, 1e-15);
}

TEST(Score, VarianceNeedsSamples) {
  PrefixDraft draft;
  draft.steps = gaps_of({0.0});
  GateConfig c;
  c.kind = GateKind::variance;
  EXPECT_EQ(code_of([&] { score(c, draft, nullptr); }), ErrorCode::invalid_input);
  StochasticPrefixSet set;
  set.samples = {{1, 2, 3}, {1, 2, 4}, {1, 5, 6}, {9, 9, 9}};
  c.n_samples = 3;
  c.k = 2;
  // First three rows, first two columns: disagreement 0 + 1 over 6.
  EXPECT_EQ(score(c, draft, &set).value, 1.0 / 6.0);
}

}  // namespace
}  // namespace gatedrag
