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

#include "gatedrag/simlab.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gatedrag/calibration.hpp"
#include "gatedrag/error.hpp"

namespace gatedrag {
namespace {

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

std::vector<PopulationRecord> two_point() {
  return {{0.9, 0.0, 1.0}, {0.1, 1.0, 0.0}};
}

TEST(Population, TwoPointPolicies) {
  auto acc = evaluate_policies(two_point(), 0.5);
  EXPECT_EQ(acc.never, 0.5);
  EXPECT_EQ(acc.always, 0.5);
  EXPECT_EQ(acc.gate, 1.0);
  EXPECT_EQ(acc.pi, 0.5);
  auto never = evaluate_policies(two_point(), kNeverRetrieve);
  EXPECT_EQ(never.gate, never.never);
  auto always = evaluate_policies(two_point(), kAlwaysRetrieve);
  EXPECT_EQ(always.gate, always.always);
}

TEST(Population, ZeroDeltaMakesPoliciesEqual) {
  PopulationSpec s;
  s.n = 2000;
  s.seed = 5;
  auto pop = generate_population(s);
  auto acc = evaluate_policies(pop, s.tau_star);
  EXPECT_EQ(acc.gate, acc.never);
  EXPECT_EQ(acc.always, acc.never);
}

TEST(Population, DeterministicAndClipped) {
  PopulationSpec s;
  s.n = 5000;
  s.seed = 17;
  s.delta_low = Distribution::normal(-0.3, 0.5);
  s.delta_high = Distribution::normal(0.3, 0.5);
  s.a0_mode = A0Mode::probability;
  s.a0_base = 0.4;
  auto a = generate_population(s);
  auto b = generate_population(s);
  ASSERT_EQ(a.size(), 5000u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].u, b[i].u);
    EXPECT_EQ(a[i].a1, b[i].a1);
    EXPECT_GE(a[i].a1, 0.0);
    EXPECT_LE(a[i].a1, 1.0);
    EXPECT_EQ(a[i].a0, 0.4);
  }
  s.seed = 18;
  auto c = generate_population(s);
  EXPECT_NE(a[0].u, c[0].u);
}

TEST(Population, ConditionalMeansWithinThreeStandardErrors) {
  PopulationSpec s;
  s.n = 100000;
  s.seed = 3;
  s.a0_mode = A0Mode::probability;
  s.a0_base = 0.5;
  // Supports inside [-0.5, 0.5] so clipping never binds.
  s.delta_low = Distribution::uniform(-0.4, 0.1);
  s.delta_high = Distribution::uniform(-0.1, 0.4);
  auto pop = generate_population(s);
  auto cd = conditional_delta(pop, s.tau_star);
  const double se_low = s.delta_low.stddev() / std::sqrt(double(cd.n_low));
  const double se_high = s.delta_high.stddev() / std::sqrt(double(cd.n_high));
  EXPECT_LE(std::abs(cd.mean_low - s.delta_low.mean()), 3 * se_low);
  EXPECT_LE(std::abs(cd.mean_high - s.delta_high.mean()), 3 * se_high);
}

TEST(Population, SpecValidation) {
  PopulationSpec s;
  s.delta_low = Distribution::point(0.1);
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::invalid_config);
  s = PopulationSpec{};
  s.delta_high = Distribution::point(-0.1);
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::invalid_config);
  s = PopulationSpec{};
  s.a0_base = 1.0;
  s.delta_high = Distribution::uniform(0.0, 0.2);
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::invalid_config);
  s = PopulationSpec{};
  s.a0_base = 0.0;
  s.delta_low = Distribution::uniform(-0.2, 0.0);
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::invalid_config);
  s = PopulationSpec{};
  s.n = 0;
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::invalid_config);
  EXPECT_EQ(code_of([] { Distribution::uniform(1.0, 1.0).validate(); }),
            ErrorCode::invalid_config);
  EXPECT_EQ(code_of([] { Distribution::two_point(0.0, 1.0, 1.5).validate(); }),
            ErrorCode::invalid_config);
}

TEST(Dominance, AlwaysMarginClosedForm) {
  // Delta = -0.2 below tau*, +0.1 above: margin over Always is 0.2 Pr(u <= tau*).
  std::vector<PopulationRecord> pop;
  for (int i = 0; i < 100; ++i) {
    const double u = (i + 0.5) / 100.0;
    pop.push_back(u > 0.3 ? PopulationRecord{u, 0.5, 0.6}
                          : PopulationRecord{u, 0.5, 0.3});
  }
  auto rep = check_always_dominance(pop, 0.3);
  EXPECT_EQ(rep.status, CheckStatus::passed);
  EXPECT_NEAR(rep.margin, 0.2 * 0.3, 1e-12);
  auto weak = check_weak_dominance(pop, 0.3);
  EXPECT_EQ(weak.status, CheckStatus::passed);
  EXPECT_NEAR(weak.margin, 0.1 * 0.7, 1e-12);
}

TEST(Dominance, ZeroDeltaBelowGivesEquality) {
  std::vector<PopulationRecord> pop{{0.1, 0.5, 0.5}, {0.9, 0.5, 0.7}};
  auto rep = check_always_dominance(pop, 0.5);
  EXPECT_EQ(rep.status, CheckStatus::passed);
  EXPECT_EQ(rep.margin, 0.0);
}

TEST(Dominance, MixedSignBelowIsPreconditionUnmet) {
  std::vector<PopulationRecord> pop{
      {0.1, 0.5, 0.7}, {0.2, 0.5, 0.1}, {0.9, 0.5, 0.7}};
  auto rep = check_always_dominance(pop, 0.5);
  EXPECT_EQ(rep.status, CheckStatus::precondition_unmet);
  EXPECT_EQ(to_string(rep.status), "precondition unmet");
  std::vector<PopulationRecord> neg_high{{0.9, 0.5, 0.2}, {0.1, 0.5, 0.5}};
  EXPECT_EQ(check_weak_dominance(neg_high, 0.5).status,
            CheckStatus::precondition_unmet);
}

TEST(Budget, UniformScoresStayWithinTolerance) {
  BudgetOptions o;
  o.trials = 20;
  o.seed = 11;
  std::vector<double> rhos{0.2};
  auto rows = check_budget_consistency(Distribution::uniform(0.0, 1.0), rhos, o);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].passed);
  EXPECT_FALSE(rows[0].degenerate);
  EXPECT_GE(rows[0].within_tolerance, 19u);
}

TEST(Budget, PointMassIsDegenerate) {
  BudgetOptions o;
  o.trials = 5;
  o.n_calib = 100;
  o.n_eval = 100;
  std::vector<double> rhos{0.5};
  auto rows = check_budget_consistency(Distribution::point(0.3), rhos, o);
  EXPECT_TRUE(rows[0].degenerate);
  EXPECT_FALSE(rows[0].passed);
  EXPECT_TRUE(rows[0].mean_rate == 0.0 || rows[0].mean_rate == 1.0);
}

TEST(Budget, ZeroBudgetRetrievesAlmostNothing) {
  BudgetOptions o;
  o.trials = 10;
  std::vector<double> rhos{0.0};
  auto rows = check_budget_consistency(Distribution::uniform(0.0, 1.0), rhos, o);
  // Fresh draws exceed the calibration maximum with probability 1/(n+1).
  EXPECT_LE(rows[0].max_abs_error, 0.002);
  EXPECT_TRUE(rows[0].passed);
}

TEST(Simulation, ReportAndOverride) {
  const std::string spec = R"({
    "seed": 4,
    "population": {"n": 1000, "tau_star": 0.5,
                   "u": {"kind": "uniform", "lo": 0, "hi": 1},
                   "delta_low": {"kind": "uniform", "lo": -0.3, "hi": 0},
                   "delta_high": {"kind": "uniform", "lo": 0, "hi": 0.3},
                   "a0_base": 0.5, "a0_mode": "probability"},
    "budget": {"rhos": [0.2, 0.5], "n_calib": 2000, "n_eval": 2000,
               "trials": 10, "tolerance": 0.05}
  })";
  auto rep = run_simulation(spec, ReportFormat::csv);
  EXPECT_TRUE(rep.passed) << rep.text;
  EXPECT_EQ(rep.text.substr(0, rep.text.find('\n')),
            "check,status,value,baseline,margin,detail");
  EXPECT_NE(rep.text.find("gate >= never,passed"), std::string::npos);
  EXPECT_NE(rep.text.find("budget rho=0.2,passed"), std::string::npos);
  EXPECT_EQ(run_simulation(spec, ReportFormat::csv).text, rep.text);
  EXPECT_NE(run_simulation(spec, ReportFormat::csv, 5).text, rep.text);
  auto md = run_simulation(spec, ReportFormat::markdown);
  EXPECT_EQ(md.text.rfind("| check |", 0), 0u);
}

TEST(Simulation, DegenerateBudgetDoesNotFail) {
  auto rep = run_simulation(
      R"({"budget": {"u": {"kind": "point", "value": 0.3}, "rhos": [0.5],
                     "n_calib": 50, "n_eval": 50, "trials": 3}})",
      ReportFormat::csv);
  EXPECT_TRUE(rep.passed);
  EXPECT_NE(rep.text.find(",degenerate,"), std::string::npos);
}

TEST(Simulation, RejectsBadSpecs) {
  EXPECT_EQ(code_of([] { run_simulation("{", ReportFormat::csv); }),
            ErrorCode::invalid_config);
  EXPECT_EQ(code_of([] { run_simulation(R"({"bogus": 1})", ReportFormat::csv); }),
            ErrorCode::invalid_config);
  EXPECT_EQ(code_of([] {
              run_simulation(R"({"population": {"u": {"kind": "cauchy"}}})",
                             ReportFormat::csv);
            }),
            ErrorCode::invalid_config);
  EXPECT_EQ(code_of([] {
              run_simulation(
                  R"({"population": {"delta_low": {"kind": "point", "value": 0.2}}})",
                  ReportFormat::csv);
            }),
            ErrorCode::invalid_config);
}

}  // namespace
}  // namespace gatedrag
