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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gatedrag/error.hpp"
#include "gatedrag/numeric.hpp"
#include "json.hpp"

namespace gatedrag {

std::uint64_t SimRng::next() noexcept {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SimRng::uniform() noexcept { return unit_interval(next()); }

double SimRng::normal() noexcept {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Distribution Distribution::point(double v) { return {Kind::point, v, v, 0.0}; }
Distribution Distribution::uniform(double lo, double hi) {
  return {Kind::uniform, lo, hi, 0.0};
}
Distribution Distribution::normal(double mean, double stddev) {
  return {Kind::normal, mean, stddev, 0.0};
}
Distribution Distribution::two_point(double lo, double hi, double p_hi) {
  return {Kind::two_point, lo, hi, p_hi};
}

double Distribution::sample(SimRng& rng) const {
  switch (kind) {
    case Kind::point: return a;
    case Kind::uniform: return a + (b - a) * rng.uniform();
    case Kind::normal: return a + b * rng.normal();
    case Kind::two_point: return rng.uniform() < p ? b : a;
  }
  return a;
}

double Distribution::mean() const {
  switch (kind) {
    case Kind::point: return a;
    case Kind::uniform: return 0.5 * (a + b);
    case Kind::normal: return a;
    case Kind::two_point: return (1.0 - p) * a + p * b;
  }
  return a;
}

double Distribution::stddev() const {
  switch (kind) {
    case Kind::point: return 0.0;
    case Kind::uniform: return (b - a) / std::sqrt(12.0);
    case Kind::normal: return b;
    case Kind::two_point: return std::abs(b - a) * std::sqrt(p * (1.0 - p));
  }
  return 0.0;
}

double Distribution::lower() const {
  if (kind == Kind::normal) return -std::numeric_limits<double>::infinity();
  if (kind == Kind::two_point) {
    if (p >= 1.0) return b;
    if (p <= 0.0) return a;
    return std::min(a, b);
  }
  return a;
}

double Distribution::upper() const {
  if (kind == Kind::normal) return std::numeric_limits<double>::infinity();
  if (kind == Kind::two_point) {
    if (p >= 1.0) return b;
    if (p <= 0.0) return a;
    return std::max(a, b);
  }
  return kind == Kind::point ? a : b;
}

void Distribution::validate() const {
  GATEDRAG_REQUIRE(std::isfinite(a) && std::isfinite(b) && std::isfinite(p),
                   ErrorCode::invalid_config,
                   "distribution parameters must be finite");
  switch (kind) {
    case Kind::point: break;
    case Kind::uniform:
      GATEDRAG_REQUIRE(a < b, ErrorCode::invalid_config,
                       "uniform needs lo < hi, got [{}, {}]", a, b);
      break;
    case Kind::normal:
      GATEDRAG_REQUIRE(b > 0.0, ErrorCode::invalid_config,
                       "normal needs stddev > 0, got {}", b);
      break;
    case Kind::two_point:
      GATEDRAG_REQUIRE(p >= 0.0 && p <= 1.0, ErrorCode::invalid_config,
                       "two_point needs p_hi in [0, 1], got {}", p);
      break;
  }
}

void PopulationSpec::validate() const {
  GATEDRAG_REQUIRE(n >= 1, ErrorCode::invalid_config,
                   "population size must be >= 1");
  GATEDRAG_REQUIRE(std::isfinite(tau_star), ErrorCode::invalid_config,
                   "tau_star must be finite");
  u.validate();
  delta_low.validate();
  delta_high.validate();
  GATEDRAG_REQUIRE(delta_low.mean() <= 0.0, ErrorCode::invalid_config,
                   "delta_low mean {} must be <= 0", delta_low.mean());
  GATEDRAG_REQUIRE(delta_high.mean() >= 0.0, ErrorCode::invalid_config,
                   "delta_high mean {} must be >= 0", delta_high.mean());
  GATEDRAG_REQUIRE(a0_base >= 0.0 && a0_base <= 1.0, ErrorCode::invalid_config,
                   "a0_base must be in [0, 1], got {}", a0_base);
  const double hi = std::max(delta_low.upper(), delta_high.upper());
  const double lo = std::min(delta_low.lower(), delta_high.lower());
  GATEDRAG_REQUIRE(!(a0_base == 1.0 && hi > 0.0), ErrorCode::invalid_config,
                   "a0_base = 1 leaves no room for positive delta");
  GATEDRAG_REQUIRE(!(a0_base == 0.0 && lo < 0.0), ErrorCode::invalid_config,
                   "a0_base = 0 leaves no room for negative delta");
}

std::vector<PopulationRecord> generate_population(const PopulationSpec& spec) {
  spec.validate();
  SimRng rng(spec.seed);
  std::vector<PopulationRecord> pop;
  pop.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    PopulationRecord r;
    r.u = spec.u.sample(rng);
    r.a0 = spec.a0_mode == A0Mode::bernoulli
               ? (rng.uniform() < spec.a0_base ? 1.0 : 0.0)
               : spec.a0_base;
    const auto& dist = r.u > spec.tau_star ? spec.delta_high : spec.delta_low;
    const double delta = std::clamp(dist.sample(rng), -r.a0, 1.0 - r.a0);
    r.a1 = std::clamp(r.a0 + delta, 0.0, 1.0);
    pop.push_back(r);
  }
  return pop;
}

PolicyAccuracy evaluate_policies(std::span<const PopulationRecord> pop,
                                 double tau) {
  GATEDRAG_REQUIRE(!pop.empty(), ErrorCode::invalid_input, "empty population");
  GATEDRAG_REQUIRE(!std::isnan(tau), ErrorCode::invalid_input, "tau is NaN");
  std::vector<double> a0(pop.size()), a1(pop.size()), gain(pop.size());
  std::size_t fired = 0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    a0[i] = pop[i].a0;
    a1[i] = pop[i].a1;
    const bool r = decide(pop[i].u, tau);
    gain[i] = r ? pop[i].delta() : 0.0;
    fired += r ? 1 : 0;
  }
  PolicyAccuracy acc;
  acc.never = pairwise_mean(a0);
  acc.always = pairwise_mean(a1);
  acc.gate = acc.never + pairwise_mean(gain);
  acc.pi = static_cast<double>(fired) / static_cast<double>(pop.size());
  return acc;
}

ConditionalDelta conditional_delta(std::span<const PopulationRecord> pop,
                                   double tau_star) {
  std::vector<double> low, high;
  for (const auto& r : pop) (r.u > tau_star ? high : low).push_back(r.delta());
  ConditionalDelta c;
  c.n_low = low.size();
  c.n_high = high.size();
  if (!low.empty()) {
    c.mean_low = pairwise_mean(low);
    const auto [mn, mx] = std::minmax_element(low.begin(), low.end());
    c.min_low = *mn;
    c.max_low = *mx;
  }
  if (!high.empty()) c.mean_high = pairwise_mean(high);
  return c;
}

std::string_view to_string(CheckStatus status) noexcept {
  switch (status) {
    case CheckStatus::passed: return "passed";
    case CheckStatus::failed: return "failed";
    case CheckStatus::precondition_unmet: return "precondition unmet";
  }
  return "unknown";
}

DominanceReport check_weak_dominance(std::span<const PopulationRecord> pop,
                                     double tau_star) {
  const auto acc = evaluate_policies(pop, tau_star);
  const auto cd = conditional_delta(pop, tau_star);
  DominanceReport rep;
  rep.name = "gate >= never";
  rep.gate = acc.gate;
  rep.baseline = acc.never;
  rep.margin = acc.gate - acc.never;
  if (cd.mean_high < 0.0) {
    rep.status = CheckStatus::precondition_unmet;
    rep.detail = fmt::format("mean delta above tau* is {} < 0", cd.mean_high);
    return rep;
  }
  rep.status = rep.margin >= -kDominanceTolerance ? CheckStatus::passed
                                                  : CheckStatus::failed;
  rep.detail = fmt::format("mean delta above tau* = {} over {} records",
                           cd.mean_high, cd.n_high);
  return rep;
}

DominanceReport check_always_dominance(std::span<const PopulationRecord> pop,
                                       double tau_star) {
  const auto acc = evaluate_policies(pop, tau_star);
  const auto cd = conditional_delta(pop, tau_star);
  DominanceReport rep;
  rep.name = "gate >= always";
  rep.gate = acc.gate;
  rep.baseline = acc.always;
  rep.margin = acc.gate - acc.always;
  if (cd.n_low > 0 && cd.max_low > 0.0) {
    rep.status = CheckStatus::precondition_unmet;
    rep.detail = fmt::format("delta below tau* reaches {} > 0", cd.max_low);
    return rep;
  }
  rep.status = rep.margin >= -kDominanceTolerance ? CheckStatus::passed
                                                  : CheckStatus::failed;
  rep.detail = fmt::format("max delta below tau* = {} over {} records",
                           cd.max_low, cd.n_low);
  return rep;
}

std::vector<BudgetRow> check_budget_consistency(const Distribution& u,
                                                std::span<const double> rhos,
                                                const BudgetOptions& options) {
  u.validate();
  GATEDRAG_REQUIRE(options.n_calib >= 1 && options.n_eval >= 1 &&
                       options.trials >= 1,
                   ErrorCode::invalid_config,
                   "n_calib, n_eval and trials must be >= 1");
  GATEDRAG_REQUIRE(options.tolerance >= 0.0 && options.min_pass_fraction >= 0.0 &&
                       options.min_pass_fraction <= 1.0,
                   ErrorCode::invalid_config,
                   "tolerance must be >= 0 and min_pass_fraction in [0, 1]");
  const auto required = static_cast<std::size_t>(std::ceil(
      options.min_pass_fraction * static_cast<double>(options.trials) - 1e-9));
  std::vector<BudgetRow> rows;
  std::vector<double> calib(options.n_calib), eval(options.n_eval);
  for (std::size_t ri = 0; ri < rhos.size(); ++ri) {
    BudgetRow row;
    row.rho = rhos[ri];
    row.trials = options.trials;
    row.degenerate = u.has_atoms();
    std::vector<double> rates;
    for (std::size_t t = 0; t < options.trials; ++t) {
      SimRng rng(splitmix64(options.seed ^
                            splitmix64(ri * options.trials + t + 1)));
      for (auto& x : calib) x = u.sample(rng);
      for (auto& x : eval) x = u.sample(rng);
      const double tau = quantile_threshold(calib, row.rho);
      const double rate = realized_rate(eval, tau);
      const double err = std::abs(rate - row.rho);
      row.max_abs_error = std::max(row.max_abs_error, err);
      if (err <= options.tolerance) ++row.within_tolerance;
      rates.push_back(rate);
    }
    row.mean_rate = pairwise_mean(rates);
    row.passed = row.within_tolerance >= required;
    rows.push_back(row);
  }
  return rows;
}

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<std::string_view> keys,
                    std::string_view where) {
  GATEDRAG_REQUIRE(j.is_object(), ErrorCode::invalid_config,
                   "'{}' must be an object", where);
  for (const auto& [key, _] : j.items()) {
    GATEDRAG_REQUIRE(std::find(keys.begin(), keys.end(), key) != keys.end(),
                     ErrorCode::invalid_config, "unknown key '{}' in {}", key,
                     where);
  }
}

Distribution parse_distribution(const json& j, std::string_view where) {
  GATEDRAG_REQUIRE(j.is_object() && j.contains("kind"),
                   ErrorCode::invalid_config, "{} needs a 'kind'", where);
  const auto kind = j.at("kind").get<std::string>();
  Distribution d;
  if (kind == "point") {
    reject_unknown(j, {"kind", "value"}, where);
    d = Distribution::point(j.at("value").get<double>());
  } else if (kind == "uniform") {
    reject_unknown(j, {"kind", "lo", "hi"}, where);
    d = Distribution::uniform(j.at("lo").get<double>(), j.at("hi").get<double>());
  } else if (kind == "normal") {
    reject_unknown(j, {"kind", "mean", "stddev"}, where);
    d = Distribution::normal(j.at("mean").get<double>(),
                             j.at("stddev").get<double>());
  } else if (kind == "two_point") {
    reject_unknown(j, {"kind", "lo", "hi", "p_hi"}, where);
    d = Distribution::two_point(j.at("lo").get<double>(), j.at("hi").get<double>(),
                                j.at("p_hi").get<double>());
  } else {
    fail(ErrorCode::invalid_config, "unknown distribution kind '{}' in {}",
         kind, where);
  }
  d.validate();
  return d;
}

std::vector<std::string> check_row(std::string name, CheckStatus status,
                                   double value, double baseline, double margin,
                                   std::string detail) {
  return {std::move(name), std::string(to_string(status)), format_double(value),
          format_double(baseline), format_double(margin), std::move(detail)};
}

SimulationReport simulate(const json& spec, ReportFormat format,
                          std::optional<std::uint64_t> seed_override) {
  reject_unknown(spec, {"seed", "population", "budget"}, "simulation spec");
  const std::uint64_t seed =
      seed_override ? *seed_override : spec.value("seed", std::uint64_t{0});

  SimulationReport out;
  Table t;
  t.header = {"check", "status", "value", "baseline", "margin", "detail"};
  auto record = [&](std::vector<std::string> row, CheckStatus status) {
    if (status == CheckStatus::failed) out.passed = false;
    t.rows.push_back(std::move(row));
  };

  if (spec.contains("population")) {
    const auto& p = spec.at("population");
    reject_unknown(p,
                   {"n", "tau_star", "u", "delta_low", "delta_high", "a0_base",
                    "a0_mode"},
                   "population");
    PopulationSpec ps;
    ps.n = p.value("n", ps.n);
    ps.tau_star = p.value("tau_star", ps.tau_star);
    if (p.contains("u")) ps.u = parse_distribution(p.at("u"), "population.u");
    if (p.contains("delta_low")) {
      ps.delta_low = parse_distribution(p.at("delta_low"), "population.delta_low");
    }
    if (p.contains("delta_high")) {
      ps.delta_high =
          parse_distribution(p.at("delta_high"), "population.delta_high");
    }
    ps.a0_base = p.value("a0_base", ps.a0_base);
    const auto mode = p.value("a0_mode", std::string("bernoulli"));
    GATEDRAG_REQUIRE(mode == "bernoulli" || mode == "probability",
                     ErrorCode::invalid_config,
                     "a0_mode must be bernoulli or probability, got '{}'", mode);
    ps.a0_mode = mode == "bernoulli" ? A0Mode::bernoulli : A0Mode::probability;
    ps.seed = seed;

    const auto pop = generate_population(ps);
    const auto acc = evaluate_policies(pop, ps.tau_star);
    const auto cd = conditional_delta(pop, ps.tau_star);
    t.rows.push_back(
        {"conditional delta", "info", format_double(cd.mean_high),
         format_double(cd.mean_low), "",
         fmt::format("mean above tau* over {} records, mean below over {}",
                     cd.n_high, cd.n_low)});
    t.rows.push_back({"retrieval rate", "info", format_double(acc.pi), "", "",
                      fmt::format("tau* = {}", format_double(ps.tau_star))});

    std::vector<double> above, below;
    for (const auto& r : pop) {
      above.push_back(decide(r.u, ps.tau_star) ? r.delta() : 0.0);
      below.push_back(decide(r.u, ps.tau_star) ? 0.0 : r.delta());
    }
    const double id_never = (acc.gate - acc.never) - pairwise_mean(above);
    const double id_always = (acc.gate - acc.always) + pairwise_mean(below);
    auto identity = [&](std::string name, double residual) {
      const auto status = std::abs(residual) <= kDominanceTolerance
                              ? CheckStatus::passed
                              : CheckStatus::failed;
      record(check_row(std::move(name), status, residual, 0.0, residual,
                       "residual"),
             status);
    };
    identity("identity gate - never", id_never);
    identity("identity gate - always", id_always);
    for (const auto& rep : {check_weak_dominance(pop, ps.tau_star),
                            check_always_dominance(pop, ps.tau_star)}) {
      record(check_row(rep.name, rep.status, rep.gate, rep.baseline, rep.margin,
                       rep.detail),
             rep.status);
    }
  }

  if (spec.contains("budget")) {
    const auto& b = spec.at("budget");
    reject_unknown(b,
                   {"u", "rhos", "n_calib", "n_eval", "trials", "tolerance",
                    "min_pass_fraction"},
                   "budget");
    const Distribution u = b.contains("u")
                               ? parse_distribution(b.at("u"), "budget.u")
                               : Distribution::uniform(0.0, 1.0);
    const auto rhos = b.value("rhos", std::vector<double>{0.05, 0.1, 0.2, 0.5});
    BudgetOptions bo;
    bo.n_calib = b.value("n_calib", bo.n_calib);
    bo.n_eval = b.value("n_eval", bo.n_eval);
    bo.trials = b.value("trials", bo.trials);
    bo.tolerance = b.value("tolerance", bo.tolerance);
    bo.min_pass_fraction = b.value("min_pass_fraction", bo.min_pass_fraction);
    bo.seed = seed;
    for (const auto& row : check_budget_consistency(u, rhos, bo)) {
      const auto status =
          row.passed ? CheckStatus::passed : CheckStatus::failed;
      const std::string detail =
          fmt::format("{}/{} trials within {}{}", row.within_tolerance,
                      row.trials, format_double(bo.tolerance),
                      row.degenerate ? "; atomic score distribution" : "");
      auto r = check_row(fmt::format("budget rho={}", format_double(row.rho)),
                         status, row.mean_rate, row.rho, row.max_abs_error,
                         detail);
      // Atoms break quantile targeting; such rows are reported, not failed.
      if (row.degenerate && !row.passed) {
        r[1] = "degenerate";
        t.rows.push_back(std::move(r));
      } else {
        record(std::move(r), status);
      }
    }
  }

  out.text = format == ReportFormat::csv ? render_csv(t) : render_markdown(t);
  return out;
}

}  // namespace

SimulationReport run_simulation(std::string_view spec_json, ReportFormat format,
                                std::optional<std::uint64_t> seed) {
  try {
    return simulate(json::parse(spec_json), format, seed);
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_config, "simulation spec: {}", e.what());
  }
}

}  // namespace gatedrag
