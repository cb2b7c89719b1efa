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

#include "gatedrag/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gatedrag/error.hpp"
#include "test_util.hpp"

namespace gatedrag {
namespace {

using testing::TempDir;
using testing::write_file;

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

std::size_t count_above(const std::vector<double>& s, double tau) {
  std::size_t c = 0;
  for (double x : s) c += x > tau ? 1 : 0;
  return c;
}

TEST(QuantileThreshold, TenPointExample) {
  std::vector<double> s;
  for (int i = 1; i <= 10; ++i) s.push_back(i / 10.0);
  const double tau = quantile_threshold(s, 0.2);
  EXPECT_EQ(tau, 0.8);
  EXPECT_EQ(count_above(s, tau), 2u);
}

TEST(QuantileThreshold, Endpoints) {
  std::vector<double> s{0.3, -1.0, 2.5, 0.7};
  EXPECT_EQ(quantile_threshold(s, 0.0), 2.5);
  EXPECT_EQ(realized_rate(s, quantile_threshold(s, 0.0)), 0.0);
  const double low = quantile_threshold(s, 1.0);
  EXPECT_LT(low, -1.0);
  EXPECT_EQ(realized_rate(s, low), 1.0);
}

TEST(QuantileThreshold, Errors) {
  std::vector<double> empty;
  EXPECT_EQ(code_of([&] { quantile_threshold(empty, 0.5); }),
            ErrorCode::invalid_input);
  std::vector<double> s{1.0};
  EXPECT_EQ(code_of([&] { quantile_threshold(s, -0.1); }),
            ErrorCode::invalid_config);
  EXPECT_EQ(code_of([&] { quantile_threshold(s, 1.5); }),
            ErrorCode::invalid_config);
  std::vector<double> nan{std::numeric_limits<double>::quiet_NaN()};
  EXPECT_EQ(code_of([&] { quantile_threshold(nan, 0.5); }),
            ErrorCode::invalid_input);
}

// Brute force over every candidate threshold taken from the sample.
TEST(QuantileThreshold, MatchesEnumerationOracle) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<double> s(n);
    // Small integer grid so ties are common.
    for (double& x : s) x = static_cast<double>(rng() % 8) / 4.0;
    const double rho = static_cast<double>(rng() % 101) / 100.0;
    const double tau = quantile_threshold(s, rho);
    const double rate = realized_rate(s, tau);
    EXPECT_LE(rate, rho);
    if (rho < 1.0) {
      // Oracle: best achievable rate <= rho over thresholds in the sample.
      double best = 0.0;
      for (double c : s) {
        const double r = static_cast<double>(count_above(s, c)) / n;
        if (r <= rho) best = std::max(best, r);
      }
      EXPECT_EQ(rate, best) << "n=" << n << " rho=" << rho;
      // Any smaller sample value would exceed the budget.
      for (double c : s) {
        if (c < tau) {
          EXPECT_GT(static_cast<double>(count_above(s, c)) / n, rho);
        }
      }
    }
  }
}

TEST(QuantileThreshold, DistinctScoresWithinOneOverN) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(1 + trial);
    for (double& x : s) x = u(rng);
    for (double rho : {0.05, 0.3, 0.77}) {
      const double rate = realized_rate(s, quantile_threshold(s, rho));
      EXPECT_LE(rate, rho);
      EXPECT_LT(rho - rate, 1.0 / static_cast<double>(s.size()) + 1e-15);
    }
  }
}

TEST(RealizedRate, Examples) {
  std::vector<double> s{0.1, 0.9};
  EXPECT_EQ(realized_rate(s, 0.5), 0.5);
  EXPECT_EQ(realized_rate(s, 0.0), 1.0);
  EXPECT_EQ(realized_rate(s, 0.9), 0.0);
  std::vector<double> empty;
  EXPECT_EQ(code_of([&] { realized_rate(empty, 0.5); }),
            ErrorCode::invalid_input);
}

TEST(RealizedRate, NonIncreasingInTau) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> s(500);
  for (double& x : s) x = u(rng);
  double prev = 1.0;
  for (double tau = -2.5; tau <= 2.5; tau += 0.01) {
    const double r = realized_rate(s, tau);
    EXPECT_LE(r, prev);
    prev = r;
  }
}

TEST(AccuracyOptThreshold, Examples) {
  std::vector<DevRecord> flat{{0.2, 1.0, 1.0}, {0.8, 0.0, 0.0}};
  std::vector<double> grid{0.1, 0.5, 0.9};
  EXPECT_EQ(accuracy_opt_threshold(flat, grid), 0.9);

  std::vector<DevRecord> two{{0.9, 0.0, 1.0}, {0.1, 1.0, 0.0}};
  std::vector<double> g2{0.0, 0.5};
  EXPECT_EQ(accuracy_opt_threshold(two, g2), 0.5);

  std::vector<DevRecord> one{{0.7, 0.0, 1.0}};
  std::vector<double> g3{0.6, 0.8};
  EXPECT_EQ(accuracy_opt_threshold(one, g3), 0.6);
}

TEST(AccuracyOptThreshold, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DevRecord> dev(30);
    for (auto& r : dev) r = {u(rng), static_cast<double>(rng() % 2),
                             static_cast<double>(rng() % 2)};
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
    double best_tau = 0.0;
    double best_acc = -1.0;
    for (double tau : grid) {
      double acc = 0.0;
      for (const auto& r : dev) acc += r.u > tau ? r.a1 : r.a0;
      // Ties go to the larger threshold; grid is ascending.
      if (acc >= best_acc) {
        best_acc = acc;
        best_tau = tau;
      }
    }
    EXPECT_EQ(accuracy_opt_threshold(dev, grid), best_tau);
  }
}

TEST(AccuracyOptThreshold, Errors) {
  std::vector<DevRecord> dev{{0.5, 0.0, 1.0}};
  std::vector<double> grid;
  EXPECT_EQ(code_of([&] { accuracy_opt_threshold(dev, grid); }),
            ErrorCode::invalid_input);
  std::vector<DevRecord> empty;
  std::vector<double> g{0.5};
  EXPECT_EQ(code_of([&] { accuracy_opt_threshold(empty, g); }),
            ErrorCode::invalid_input);
  std::vector<DevRecord> bad{{0.5, 1.5, 0.0}};
  EXPECT_EQ(code_of([&] { accuracy_opt_threshold(bad, g); }),
            ErrorCode::invalid_input);
}

TEST(ExpectedTokens, Examples) {
  CostParams p{20, 500, 50, 60, 0.0, 0.0};
  EXPECT_EQ(expected_tokens(p, 0.0), 70.0);
  EXPECT_EQ(expected_tokens(p, 1.0), 580.0);
  EXPECT_NEAR(expected_tokens(p, 0.3), 223.0, 1e-12);
  EXPECT_EQ(code_of([&] { expected_tokens(p, 1.5); }), ErrorCode::invalid_input);
  CostParams neg{-1, 0, 0, 0, 0, 0};
  EXPECT_EQ(code_of([&] { expected_tokens(neg, 0.5); }),
            ErrorCode::invalid_config);
  EXPECT_EQ(code_of([&] { delta_latency(neg, 0.5); }), ErrorCode::invalid_config);
}

TEST(ExpectedTokens, MonotoneWhenContextCostsMore) {
  CostParams p{20, 100, 40, 30, 0.0, 0.0};
  double prev = expected_tokens(p, 0.0);
  for (int i = 1; i <= 100; ++i) {
    const double v = expected_tokens(p, i / 100.0);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(DeltaLatency, Examples) {
  CostParams zero{};
  EXPECT_EQ(delta_latency(zero, 0.0), 0.0);
  CostParams draft_only{20, 0, 0, 0, 0.001, 0.0};
  EXPECT_NEAR(delta_latency(draft_only, 0.0), 0.02, 1e-15);
  CostParams full{20, 500, 50, 60, 0.001, 0.1};
  EXPECT_NEAR(delta_latency(full, 1.0), 0.63, 1e-12);
}

TEST(ScoreFile, RoundTripAndComments) {
  TempDir tmp;
  std::vector<ScoreRow> rows{{"a", 0.1, 1.0, 0.0}, {"b", 1.0 / 3.0, 0.0, 1.0}};
  write_score_file(tmp / "s.tsv", rows);
  auto back = read_score_file(tmp / "s.tsv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].query_id, "b");
  EXPECT_EQ(back[1].score, 1.0 / 3.0);
  EXPECT_EQ(*back[1].a1, 1.0);

  write_file(tmp / "c.tsv", "# header\nq1\t0.5\n\nq2\t-inf\n");
  auto c = read_score_file(tmp / "c.tsv");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_FALSE(c[0].a0.has_value());
  EXPECT_TRUE(std::isinf(c[1].score));
  EXPECT_EQ(code_of([&] { to_dev_records(c); }), ErrorCode::invalid_input);
}

TEST(ScoreFile, Errors) {
  TempDir tmp;
  EXPECT_EQ(code_of([&] { read_score_file(tmp / "missing.tsv"); }),
            ErrorCode::io);
  write_file(tmp / "bad.tsv", "q1\tabc\n");
  EXPECT_EQ(code_of([&] { read_score_file(tmp / "bad.tsv"); }),
            ErrorCode::format);
  write_file(tmp / "mixed.tsv", "q1\t0.5\nq2\t0.5\t1\t0\n");
  EXPECT_EQ(code_of([&] { read_score_file(tmp / "mixed.tsv"); }),
            ErrorCode::format);
}

TEST(ScoreFile, ReadsBundledDevFile) {
  auto rows = read_score_file(testing::data_dir() / "replay_dev.tsv");
  ASSERT_EQ(rows.size(), 50u);
  auto dev = to_dev_records(rows);
  EXPECT_EQ(dev.size(), 50u);
}

}  // namespace
}  // namespace gatedrag
