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

#include "gatedrag/eval.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gatedrag/calibration.hpp"
#include "gatedrag/error.hpp"
#include "gatedrag/trace.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace gatedrag {
namespace {

using testing::data_dir;
using testing::read_file;

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

TEST(NormalizeAnswer, Rules) {
  EXPECT_EQ(normalize_answer("The  Eiffel Tower!"), "eiffel tower");
  EXPECT_EQ(normalize_answer("an apple, a pear"), "apple pear");
  EXPECT_EQ(normalize_answer("Theater"), "theater");
  EXPECT_EQ(normalize_answer("  \t "), "");
  EXPECT_EQ(normalize_answer("U.S.A."), "usa");
  EXPECT_EQ(normalize_answer("café Über"), "café Über");
}

TEST(NormalizeAnswer, Idempotent) {
  for (const char* s : {"The A-Team!", " an  AN the x ", "Rock'n'Roll", ""}) {
    const auto once = normalize_answer(s);
    EXPECT_EQ(normalize_answer(once), once);
  }
}

TEST(ExactMatch, AliasesAndEmpty) {
  std::vector<std::string> golds{"Barack Obama", "Obama"};
  EXPECT_EQ(exact_match("obama.", golds), 1.0);
  EXPECT_EQ(exact_match("President Obama", golds), 0.0);
  std::vector<std::string> none;
  EXPECT_EQ(exact_match("x", none), 0.0);
  std::vector<std::string> empty_gold{""};
  EXPECT_EQ(exact_match("the", empty_gold), 1.0);
}

TEST(F1Score, Examples) {
  std::vector<std::string> g{"New York City"};
  EXPECT_NEAR(f1_score("New York", g), 2 * (1.0 * 2 / 3) / (1.0 + 2.0 / 3), 1e-15);
  EXPECT_EQ(f1_score("Boston", g), 0.0);
  std::vector<std::string> rep{"a b b"};  // "a" is dropped as an article
  EXPECT_EQ(f1_score("b", rep), 2 * (1.0 * 0.5) / 1.5);
  std::vector<std::string> empty_gold{""};
  EXPECT_EQ(f1_score("", empty_gold), 1.0);
  EXPECT_EQ(f1_score("x", empty_gold), 0.0);
  std::vector<std::string> none;
  EXPECT_EQ(f1_score("x", none), 0.0);
}

TEST(ReportFormat, Parse) {
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::csv);
  EXPECT_EQ(parse_report_format("md"), ReportFormat::markdown);
  EXPECT_EQ(parse_report_format("markdown"), ReportFormat::markdown);
  EXPECT_EQ(code_of([] { parse_report_format("xml"); }), ErrorCode::invalid_config);
}

TEST(Csv, QuotingAndRoundTrip) {
  Table t{{"a", "b"}, {{"x,y", "say \"hi\""}, {"plain", "multi\nline"}}};
  const auto text = render_csv(t);
  EXPECT_EQ(text, "a,b\n\"x,y\",\"say \"\"hi\"\"\"\nplain,\"multi\nline\"\n");
  auto back = parse_csv(text);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(code_of([] { parse_csv("a,b\n1\n"); }), ErrorCode::format);
  EXPECT_EQ(code_of([] { parse_csv("a\n\"open\n"); }), ErrorCode::format);
  EXPECT_EQ(code_of([] { parse_csv(""); }), ErrorCode::format);
}

TEST(Report, CsvRoundTripIsExact) {
  std::vector<MetricRow> rows{
      {"never", std::nullopt, 40.0, 45.5, 0.0, 0.0, 30.0},
      {"margin", 1.0 / 3.0, 41.2, 46.0, 0.123456789, 0.1 + 0.2, 100.0 / 7.0},
      {"margin", -1e-300, 0.0, 0.0, 1.0, -0.5, 0.0}};
  const auto csv = emit_report(rows, ReportFormat::csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "label,tau,em,f1,retrieval_rate,delta_latency_s,mean_tokens");
  EXPECT_EQ(read_csv_report(csv), rows);
  EXPECT_EQ(code_of([] { read_csv_report("x,y\n"); }), ErrorCode::format);
}

TEST(Report, MarkdownLayout) {
  std::vector<MetricRow> rows{{"never", std::nullopt, 40.04, 45.54, 0.0, 0.0, 30.0},
                              {"margin", 0.25, 41.26, 46.0, 0.1234, -0.0126, 99.96}};
  const auto md = emit_report(rows, ReportFormat::markdown);
  EXPECT_EQ(md,
            "| Method | tau | EM / F1 (%) | Retrieval Rate | Delta Latency (s) | "
            "Mean Tokens |\n"
            "| --- | --- | --- | --- | --- | --- |\n"
            "| never | -- | 40.0 / 45.5 | 0.000 | +0.000 | 30.0 |\n"
            "| margin | 0.25 | 41.3 / 46.0 | 0.123 | -0.013 | 100.0 |\n");
}

class ReplaySweep : public ::testing::Test {
 protected:
  void SetUp() override {
    records = read_trace_file(data_dir() / "replay_trace.jsonl");
    queries = queries_from_traces(records);
    oracle = nlohmann::json::parse(read_file(data_dir() / "replay_oracle.json"));
    options.per_token_s = 0.02;
    options.retrieval_overhead_s = 0.15;
  }
  std::vector<TraceRecord> records;
  std::vector<Query> queries;
  nlohmann::json oracle;
  PipelineOptions options;
};

TEST_F(ReplaySweep, RatesMatchCountingOracle) {
  TraceReplayGenerator gen(records);
  RecordedContextRetriever ret(records);
  auto set = collect_outcomes(queries, options, gen, &ret);
  ASSERT_TRUE(set.failures.empty());
  ASSERT_EQ(set.outcomes.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_NEAR(set.outcomes[i].score,
                oracle["queries"][i]["margin"].get<double>(), 1e-12);
  }
  auto grid = oracle["grid"].get<std::vector<double>>();
  auto rates = oracle["grid_rates"].get<std::vector<double>>();
  // Reverse order on input: sweep sorts the grid.
  std::vector<double> reversed(grid.rbegin(), grid.rend());
  auto rows = sweep(set.outcomes, options, reversed);
  ASSERT_EQ(rows.size(), grid.size() + 2);
  EXPECT_EQ(rows[0].label, "never");
  EXPECT_EQ(rows[0].retrieval_rate, 0.0);
  EXPECT_EQ(rows[1].label, "always");
  EXPECT_EQ(rows[1].retrieval_rate, 1.0);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto& r = rows[j + 2];
    EXPECT_EQ(r.label, "margin");
    EXPECT_EQ(*r.tau, grid[j]);
    EXPECT_EQ(r.retrieval_rate, rates[j]);
    if (j > 0) {
      EXPECT_LE(r.retrieval_rate, rows[j + 1].retrieval_rate);
    }
  }
}

TEST_F(ReplaySweep, EndpointsReproduceBaselines) {
  TraceReplayGenerator gen(records);
  RecordedContextRetriever ret(records);
  auto set = collect_outcomes(queries, options, gen, &ret);
  std::vector<double> grid{kAlwaysRetrieve, kNeverRetrieve};
  auto rows = sweep(set.outcomes, options, grid);
  EXPECT_EQ(rows[2].em, rows[1].em);
  EXPECT_EQ(rows[2].f1, rows[1].f1);
  EXPECT_EQ(rows[2].retrieval_rate, 1.0);
  EXPECT_EQ(rows[3].em, rows[0].em);
  EXPECT_EQ(rows[3].retrieval_rate, 0.0);

  // EM oracle from the fixture generator.
  double em0 = 0.0, em1 = 0.0;
  for (const auto& q : oracle["queries"]) {
    em0 += q["em_no_ctx"].get<double>();
    em1 += q["em_with_ctx"].get<double>();
  }
  EXPECT_NEAR(rows[0].em, 100.0 * em0 / 50.0, 1e-9);
  EXPECT_NEAR(rows[1].em, 100.0 * em1 / 50.0, 1e-9);
}

TEST_F(ReplaySweep, GatedRecordsMatchDirectRun) {
  TraceReplayGenerator gen(records);
  RecordedContextRetriever ret(records);
  auto set = collect_outcomes(queries, options, gen, &ret);
  options.gate.tau = 0.3;
  auto swept = gated_records(set.outcomes, options, 0.3);
  auto direct = run_dataset(queries, options, gen, &ret);
  ASSERT_EQ(swept.size(), direct.records.size());
  for (std::size_t i = 0; i < swept.size(); ++i) {
    EXPECT_EQ(swept[i].to_json(), direct.records[i].to_json());
  }
}

TEST_F(ReplaySweep, Errors) {
  std::vector<QueryOutcomes> none;
  std::vector<double> empty;
  EXPECT_EQ(code_of([&] { sweep(none, options, empty); }),
            ErrorCode::invalid_config);
  std::vector<double> nan{std::numeric_limits<double>::quiet_NaN()};
  EXPECT_EQ(code_of([&] { sweep(none, options, nan); }), ErrorCode::invalid_config);
  options.gate.recheck_stride = 4;
  std::vector<double> one{0.5};
  EXPECT_EQ(code_of([&] { sweep(none, options, one); }), ErrorCode::invalid_config);
}

}  // namespace
}  // namespace gatedrag
