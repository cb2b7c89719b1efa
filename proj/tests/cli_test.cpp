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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace {

using gatedrag::testing::data_dir;
using gatedrag::testing::read_file;
using gatedrag::testing::TempDir;
using gatedrag::testing::write_file;

struct Result {
  int code;
  std::string out;
};

// Runs the CLI with stdout captured and stderr discarded.
Result cli(const TempDir& tmp, const std::string& args) {
  const auto out = tmp / "stdout.txt";
  const std::string cmd = std::string("'") + GATEDRAG_CLI_PATH + "' " + args +
                          " > '" + out.string() + "' 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(out)};
}

std::string data(const char* name) {
  return "'" + (data_dir() / name).string() + "'";
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir tmp;
  EXPECT_EQ(cli(tmp, "").code, 2);
  EXPECT_EQ(cli(tmp, "bogus").code, 2);
  EXPECT_EQ(cli(tmp, "score --trace " + data("replay_trace.jsonl") +
                         " --gate oracle").code,
            2);
  EXPECT_EQ(cli(tmp, "calibrate --scores " + data("replay_dev.tsv") +
                         " --rho 1.5").code,
            2);
  EXPECT_EQ(cli(tmp, "run --trace " + data("replay_trace.jsonl") +
                         " --index " + data("replay_index.bin")).code,
            2);
}

TEST(Cli, DataErrorsExitThree) {
  TempDir tmp;
  EXPECT_EQ(cli(tmp, "score --trace /nonexistent/t.jsonl").code, 3);
  write_file(tmp / "bad.jsonl", "{\"query_id\": 1}\n");
  EXPECT_EQ(cli(tmp, "score --trace '" + (tmp / "bad.jsonl").string() + "'").code,
            3);
}

TEST(Cli, ScoreAndCalibrate) {
  TempDir tmp;
  const auto scores = tmp / "scores.tsv";
  auto r = cli(tmp, "score --trace " + data("replay_trace.jsonl") + " --out '" +
                        scores.string() + "'");
  ASSERT_EQ(r.code, 0);
  const auto text = read_file(scores);
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  EXPECT_EQ(lines, 50u);
  auto c = cli(tmp, "calibrate --scores '" + scores.string() + "' --rho 0.2");
  ASSERT_EQ(c.code, 0);
  EXPECT_FALSE(c.out.empty());
  auto d = cli(tmp, "calibrate --dev " + data("replay_dev.tsv") +
                        " --grid 0:1:0.1");
  EXPECT_EQ(d.code, 0);
}

TEST(Cli, RunWritesOutputs) {
  TempDir tmp;
  auto r = cli(tmp, "run --config " + data("replay_config.json") + " --out-dir '" +
                        (tmp / "out").string() + "'");
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(std::filesystem::exists(tmp / "out" / "records.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(tmp / "out" / "summary.json"));
  const auto resolved = tmp / "out" / "resolved_config.json";
  ASSERT_TRUE(std::filesystem::exists(resolved));
  const auto first = read_file(tmp / "out" / "records.jsonl");
  auto again = cli(tmp, "run --config '" + resolved.string() + "' --out-dir '" +
                            (tmp / "out2").string() + "'");
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(read_file(tmp / "out2" / "records.jsonl"), first);
}

TEST(Cli, Sweep) {
  TempDir tmp;
  auto r = cli(tmp, "sweep --config " + data("replay_config.json") +
                        " --grid 0.1,0.3 --format csv");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("label,tau,", 0), 0u);
  EXPECT_EQ(cli(tmp, "sweep --config " + data("replay_config.json") +
                         " --grid 0.1 --recheck-stride 4").code,
            2);
}

TEST(Cli, Simulate) {
  TempDir tmp;
  write_file(tmp / "spec.json",
             R"({"population": {"n": 2000,
                 "delta_low": {"kind": "uniform", "lo": -0.2, "hi": 0},
                 "delta_high": {"kind": "uniform", "lo": 0, "hi": 0.2},
                 "a0_mode": "probability"},
                 "budget": {"rhos": [0.1], "n_calib": 2000, "n_eval": 2000,
                            "trials": 5, "tolerance": 0.05}})");
  auto r = cli(tmp, "simulate --spec '" + (tmp / "spec.json").string() + "'");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("gate >= always"), std::string::npos);
  write_file(tmp / "bad.json", R"({"population": {"n": "many"}})");
  EXPECT_EQ(cli(tmp, "simulate --spec '" + (tmp / "bad.json").string() + "'").code,
            2);
  EXPECT_EQ(cli(tmp, "simulate --spec /nonexistent/spec.json").code, 3);
}

}  // namespace
