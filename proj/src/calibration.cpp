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
#include <charconv>
#include <cmath>
#include <fstream>

#include "gatedrag/error.hpp"
#include "gatedrag/numeric.hpp"
#include "text_util.hpp"

namespace gatedrag {

namespace {

void check_scores(std::span<const double> scores) {
  GATEDRAG_REQUIRE(!scores.empty(), ErrorCode::invalid_input,
                   "score sample is empty");
  for (double s : scores) {
    GATEDRAG_REQUIRE(std::isfinite(s), ErrorCode::invalid_input,
                     "score sample contains a non-finite value");
  }
}

void check_dev(std::span<const DevRecord> dev) {
  GATEDRAG_REQUIRE(!dev.empty(), ErrorCode::invalid_input, "dev set is empty");
  for (const auto& r : dev) {
    GATEDRAG_REQUIRE(std::isfinite(r.u), ErrorCode::invalid_input,
                     "dev score must be finite");
    GATEDRAG_REQUIRE(r.a0 >= 0.0 && r.a0 <= 1.0 && r.a1 >= 0.0 && r.a1 <= 1.0,
                     ErrorCode::invalid_input,
                     "dev correctness values must lie in [0, 1]");
  }
}

}  // namespace

void CostParams::validate() const {
  for (double v : {t_draft, t_ctx, e_out0, e_out1, per_token_cost,
                   retrieval_overhead}) {
    GATEDRAG_REQUIRE(std::isfinite(v) && v >= 0.0, ErrorCode::invalid_config,
                     "cost parameters must be finite and non-negative");
  }
}

double quantile_threshold(std::span<const double> scores, double rho) {
  check_scores(scores);
  GATEDRAG_REQUIRE(rho >= 0.0 && rho <= 1.0, ErrorCode::invalid_config,
                   "budget rho must lie in [0, 1], got {}", rho);
  const std::size_t n = scores.size();
  const double dn = static_cast<double>(n);

  // Largest m with m / n <= rho, using the same division realized_rate uses.
  auto m = static_cast<std::size_t>(std::floor(rho * dn));
  m = std::min(m, n);
  while (m < n && static_cast<double>(m + 1) / dn <= rho) ++m;
  while (m > 0 && static_cast<double>(m) / dn > rho) --m;
  if (m == n) return kAlwaysRetrieve;

  // tau is the (n - m)-th smallest score: at most m values lie above it,
  // and any smaller sample value would leave at least m + 1 above.
  std::vector<double> sorted(scores.begin(), scores.end());
  auto nth = sorted.begin() + static_cast<std::ptrdiff_t>(n - m - 1);
  std::nth_element(sorted.begin(), nth, sorted.end());
  return *nth;
}

double realized_rate(std::span<const double> scores, double tau) {
  GATEDRAG_REQUIRE(!scores.empty(), ErrorCode::invalid_input,
                   "score sample is empty");
  const auto above = std::count_if(scores.begin(), scores.end(),
                                   [tau](double s) { return s > tau; });
  return static_cast<double>(above) / static_cast<double>(scores.size());
}

double gated_accuracy(std::span<const DevRecord> dev, double tau) {
  check_dev(dev);
  std::vector<double> acc(dev.size());
  for (std::size_t i = 0; i < dev.size(); ++i) {
    acc[i] = dev[i].u > tau ? dev[i].a1 : dev[i].a0;
  }
  return pairwise_mean(acc);
}

double accuracy_opt_threshold(std::span<const DevRecord> dev,
                              std::span<const double> grid) {
  check_dev(dev);
  GATEDRAG_REQUIRE(!grid.empty(), ErrorCode::invalid_input,
                   "threshold grid is empty");
  constexpr double kTieTolerance = 1e-12;
  double best_tau = grid.front();
  double best_acc = -1.0;
  for (double tau : grid) {
    GATEDRAG_REQUIRE(!std::isnan(tau), ErrorCode::invalid_input,
                     "threshold grid contains NaN");
    const double acc = gated_accuracy(dev, tau);
    if (acc > best_acc + kTieTolerance ||
        (std::abs(acc - best_acc) <= kTieTolerance && tau > best_tau)) {
      best_acc = std::max(acc, best_acc);
      best_tau = tau;
    }
  }
  return best_tau;
}

double expected_tokens(const CostParams& p, double pi) {
  GATEDRAG_REQUIRE(pi >= 0.0 && pi <= 1.0, ErrorCode::invalid_input,
                   "retrieval rate must lie in [0, 1], got {}", pi);
  p.validate();
  return p.t_draft + (1.0 - pi) * p.e_out0 + pi * (p.t_ctx + p.e_out1);
}

double delta_latency(const CostParams& p, double pi) {
  GATEDRAG_REQUIRE(pi >= 0.0 && pi <= 1.0, ErrorCode::invalid_input,
                   "retrieval rate must lie in [0, 1], got {}", pi);
  p.validate();
  return p.per_token_cost * p.t_draft +
         pi * (p.retrieval_overhead +
               p.per_token_cost * (p.t_ctx + p.e_out1 - p.e_out0));
}

std::vector<ScoreRow> read_score_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  GATEDRAG_REQUIRE(in.good(), ErrorCode::io, "cannot open score file {}",
                   path.string());
  std::vector<ScoreRow> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto fields = detail::split(line, '\t');
    GATEDRAG_REQUIRE(fields.size() == 2 || fields.size() == 4,
                     ErrorCode::format,
                     "{}:{}: expected 2 or 4 tab-separated fields, got {}",
                     path.string(), line_no, fields.size());
    if (columns == 0) columns = fields.size();
    GATEDRAG_REQUIRE(fields.size() == columns, ErrorCode::format,
                     "{}:{}: inconsistent column count", path.string(),
                     line_no);
    ScoreRow row;
    row.query_id = std::string(fields[0]);
    auto num = [&](std::string_view f) {
      auto v = detail::parse_double(f);
      GATEDRAG_REQUIRE(v.has_value(), ErrorCode::format,
                       "{}:{}: '{}' is not a number", path.string(), line_no,
                       f);
      return *v;
    };
    row.score = num(fields[1]);
    if (columns == 4) {
      row.a0 = num(fields[2]);
      row.a1 = num(fields[3]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_score_file(const std::filesystem::path& path,
                      std::span<const ScoreRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  GATEDRAG_REQUIRE(out.good(), ErrorCode::io, "cannot write score file {}",
                   path.string());
  for (const auto& r : rows) {
    out << r.query_id << '\t' << fmt::format("{}", r.score);
    if (r.a0 && r.a1) {
      out << '\t' << fmt::format("{}", *r.a0) << '\t'
          << fmt::format("{}", *r.a1);
    }
    out << '\n';
  }
  GATEDRAG_REQUIRE(out.good(), ErrorCode::io, "write to {} failed",
                   path.string());
}

std::vector<DevRecord> to_dev_records(std::span<const ScoreRow> rows) {
  std::vector<DevRecord> dev;
  dev.reserve(rows.size());
  for (const auto& r : rows) {
    GATEDRAG_REQUIRE(r.a0 && r.a1, ErrorCode::invalid_input,
                     "record '{}' has no a0/a1 columns", r.query_id);
    dev.push_back({r.score, *r.a0, *r.a1});
  }
  return dev;
}

}  // namespace gatedrag
