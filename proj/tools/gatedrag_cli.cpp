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

// Command-line front end over the C API.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 I/O or data
// integrity error, 4 internal invariant violation (including failed
// simulation checks).

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gatedrag/gatedrag.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct CliFailure {
  int code;
  std::string message;
};

int exit_code(grag_status s) {
  switch (s) {
    case GRAG_OK: return kExitOk;
    case GRAG_ERR_INVALID_INPUT:
    case GRAG_ERR_INVALID_CONFIG: return kExitUsage;
    case GRAG_ERR_IO:
    case GRAG_ERR_FORMAT:
    case GRAG_ERR_DATA_INTEGRITY: return kExitData;
    case GRAG_ERR_INTERNAL: return kExitInternal;
  }
  return kExitInternal;
}

void check(grag_status s) {
  if (s != GRAG_OK) {
    throw CliFailure{exit_code(s), std::string(grag_status_name(s)) + ": " +
                                       grag_last_error()};
  }
}

[[noreturn]] void usage_error(const std::string& message) {
  throw CliFailure{kExitUsage, message};
}

template <typename T, void (*Destroy)(T*)>
struct Deleter {
  void operator()(T* p) const { Destroy(p); }
};
using StringPtr = std::unique_ptr<grag_string, Deleter<grag_string, grag_string_destroy>>;
using IndexPtr = std::unique_ptr<grag_index, Deleter<grag_index, grag_index_destroy>>;
using PassagesPtr =
    std::unique_ptr<grag_passages, Deleter<grag_passages, grag_passages_destroy>>;
using TracesPtr =
    std::unique_ptr<grag_trace_set, Deleter<grag_trace_set, grag_trace_set_destroy>>;
using ScoresPtr = std::unique_ptr<grag_score_file,
                                  Deleter<grag_score_file, grag_score_file_destroy>>;
using RunPtr = std::unique_ptr<grag_run, Deleter<grag_run, grag_run_destroy>>;

std::string text_of(const StringPtr& s) {
  return std::string(grag_string_data(s.get()), grag_string_size(s.get()));
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliFailure{kExitData, "cannot open " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to `path`, or to stdout when it is empty or "-".
void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw CliFailure{kExitData, "cannot write " + path};
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(std::string s) {
  if (!s.empty() && s.front() == '+') s.erase(0, 1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    usage_error("not a number: '" + s + "'");
  }
  return v;
}

// "a,b,c" or "start:stop:step" (inclusive of stop up to rounding).
std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) usage_error("range grid must be start:stop:step");
    const double start = parse_double(parts[0]);
    const double stop = parse_double(parts[1]);
    const double step = parse_double(parts[2]);
    if (!(step > 0.0) || !std::isfinite(start) || !std::isfinite(stop) ||
        stop < start) {
      usage_error("range grid needs finite start <= stop and step > 0");
    }
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) {
      out.push_back(start + static_cast<double>(i) * step);
    }
    return out;
  }
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ',');) out.push_back(parse_double(p));
  if (out.empty()) usage_error("empty grid");
  return out;
}

std::vector<float> parse_vector(const std::string& spec) {
  std::vector<float> out;
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ',');) {
    out.push_back(static_cast<float>(parse_double(p)));
  }
  if (out.empty()) usage_error("empty query vector");
  return out;
}

// Gate flags shared by score, run and sweep.
struct GateFlags {
  std::string gate;
  std::size_t k = 0;
  double beta = 0.0;
  std::size_t n_samples = 0;
  double temperature = 0.0;
  std::string tau;
  std::size_t recheck_stride = 0;
  CLI::Option* o_gate = nullptr;
  CLI::Option* o_k = nullptr;
  CLI::Option* o_beta = nullptr;
  CLI::Option* o_n = nullptr;
  CLI::Option* o_temp = nullptr;
  CLI::Option* o_tau = nullptr;
  CLI::Option* o_recheck = nullptr;

  void add(CLI::App* app, bool with_decision) {
    o_gate = app->add_option("--gate", gate, "Gate kind")
                 ->check(CLI::IsMember({"entropy", "margin", "variance"}));
    o_k = app->add_option("--k", k, "Draft length in tokens");
    o_beta = app->add_option("--beta", beta, "Margin temperature");
    o_n = app->add_option("--n-samples", n_samples, "Sampled prefixes (variance)");
    o_temp = app->add_option("--temperature", temperature, "Sampling temperature");
    if (with_decision) {
      o_tau = app->add_option("--tau", tau, "Threshold (number, inf or -inf)");
      o_recheck = app->add_option("--recheck-stride", recheck_stride,
                                  "Re-check every m output tokens");
    }
  }

  void apply(grag_gate_config& c) const {
    if (o_gate->count()) check(grag_parse_gate_kind(gate.c_str(), &c.kind));
    if (o_k->count()) c.k = k;
    if (o_beta->count()) c.beta = beta;
    if (o_n->count()) c.n_samples = n_samples;
    if (o_temp->count()) c.temperature = temperature;
  }

  void apply(json& g) const {
    if (o_gate->count()) g["kind"] = gate;
    if (o_k->count()) g["k"] = k;
    if (o_beta->count()) g["beta"] = beta;
    if (o_n->count()) g["n_samples"] = n_samples;
    if (o_temp->count()) g["temperature"] = temperature;
    if (o_tau && o_tau->count()) {
      const double t = parse_double(tau);
      if (std::isinf(t)) {
        g["tau"] = t > 0 ? "inf" : "-inf";
      } else {
        g["tau"] = t;
      }
    }
    if (o_recheck && o_recheck->count()) g["recheck_stride"] = recheck_stride;
  }
};

// Config file plus flag overrides for run and sweep.
struct RunFlags {
  std::string config;
  std::string trace, dataset, index, passages, policy;
  std::size_t topk = 0, ctx_budget = 0;
  double per_token_s = 0.0, overhead_s = 0.0;
  std::uint64_t seed = 0;
  GateFlags gate;
  CLI::Option *o_trace, *o_dataset, *o_index, *o_passages, *o_policy, *o_topk,
      *o_budget, *o_cost, *o_overhead, *o_seed;

  void add(CLI::App* app) {
    app->add_option("--config", config, "Run configuration (JSON)");
    o_trace = app->add_option("--trace", trace, "Trace file");
    o_dataset = app->add_option("--dataset", dataset, "Dataset file");
    o_index = app->add_option("--index", index, "Embedding index");
    o_passages = app->add_option("--passages", passages, "Passage file");
    o_policy = app->add_option("--policy", policy, "gate, always or never")
                   ->check(CLI::IsMember({"gate", "always", "never"}));
    o_topk = app->add_option("--topk", topk, "Passages retrieved");
    o_budget = app->add_option("--ctx-budget", ctx_budget,
                               "Context budget (whitespace tokens)");
    o_cost = app->add_option("--per-token-s", per_token_s, "Seconds per token");
    o_overhead = app->add_option("--overhead-s", overhead_s,
                                 "Seconds per retrieval call");
    o_seed = app->add_option("--seed", seed, "Master seed");
    gate.add(app, true);
  }

  static std::string absolute(const std::string& p) {
    return fs::absolute(p).lexically_normal().string();
  }

  // Returns the merged JSON and the directory relative paths resolve from.
  std::pair<std::string, std::string> resolve() const {
    json j = json::object();
    std::string base;
    if (!config.empty()) {
      try {
        j = json::parse(read_text(config));
      } catch (const json::exception& e) {
        usage_error(config + ": " + e.what());
      }
      base = fs::absolute(config).parent_path().string();
    }
    if (!j.is_object()) usage_error("run config must be a JSON object");
    if (o_trace->count()) j["trace"] = absolute(trace);
    if (o_dataset->count()) j["dataset"] = absolute(dataset);
    if (o_policy->count()) j["policy"] = policy;
    if (o_seed->count()) j["seed"] = seed;
    if (o_index->count()) j["retrieval"]["index"] = absolute(index);
    if (o_passages->count()) j["retrieval"]["passages"] = absolute(passages);
    if (o_topk->count()) j["retrieval"]["top_k"] = topk;
    if (o_budget->count()) j["retrieval"]["ctx_budget"] = ctx_budget;
    if (o_cost->count()) j["cost"]["per_token_s"] = per_token_s;
    if (o_overhead->count()) j["cost"]["retrieval_overhead_s"] = overhead_s;
    json g = j.contains("gate") ? j["gate"] : json::object();
    gate.apply(g);
    if (!g.empty()) j["gate"] = g;
    return {j.dump(), base};
  }
};

const char* base_or_null(const std::string& base) {
  return base.empty() ? nullptr : base.c_str();
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Uncertainty-gated retrieval for question answering"};
  app.require_subcommand(1);
  app.set_version_flag("--version", grag_version());

  // score
  auto* score_cmd = app.add_subcommand("score", "Score every query of a trace");
  std::string score_trace, score_out;
  GateFlags score_gate;
  score_cmd->add_option("--trace", score_trace, "Trace file")->required();
  score_cmd->add_option("--out", score_out, "Output score file (default stdout)");
  score_gate.add(score_cmd, false);

  // calibrate
  auto* cal_cmd = app.add_subcommand("calibrate", "Pick a threshold");
  std::string cal_scores, cal_dev, cal_grid, cal_out;
  double cal_rho = 0.0;
  auto* o_scores = cal_cmd->add_option("--scores", cal_scores, "Score file");
  auto* o_rho = cal_cmd->add_option("--rho", cal_rho, "Retrieval budget in [0, 1]");
  auto* o_dev = cal_cmd->add_option("--dev", cal_dev, "Dev file with a0, a1");
  auto* o_grid = cal_cmd->add_option("--grid", cal_grid,
                                     "Thresholds: a,b,c or start:stop:step");
  cal_cmd->add_option("--out", cal_out, "Also write tau to this file");
  o_scores->needs(o_rho);
  o_rho->needs(o_scores);
  o_dev->needs(o_grid);
  o_grid->needs(o_dev);
  o_scores->excludes(o_dev);

  // index
  auto* index_cmd = app.add_subcommand("index", "Chunk, build or search");
  index_cmd->require_subcommand(1);
  auto* chunk_cmd = index_cmd->add_subcommand("chunk", "Chunk a corpus into passages");
  std::string chunk_corpus, chunk_out;
  std::size_t chunk_size = 1000, chunk_overlap = 100, chunk_min = 200;
  std::int64_t chunk_first = 0;
  chunk_cmd->add_option("--corpus", chunk_corpus, "Corpus JSONL")->required();
  chunk_cmd->add_option("--out", chunk_out, "Passage JSONL")->required();
  chunk_cmd->add_option("--size", chunk_size, "Window size (code points)");
  chunk_cmd->add_option("--overlap", chunk_overlap, "Window overlap");
  chunk_cmd->add_option("--min-chars", chunk_min, "Shortest kept window");
  chunk_cmd->add_option("--first-id", chunk_first, "First passage id");

  auto* build_cmd = index_cmd->add_subcommand(
      "build", "Validate embeddings against passages and write an index");
  std::string build_passages, build_emb, build_out;
  std::size_t build_dim = 0;
  build_cmd->add_option("--passages", build_passages, "Passage JSONL")->required();
  build_cmd->add_option("--embeddings", build_emb, "Embedding file")->required();
  build_cmd->add_option("--out", build_out, "Index file")->required();
  build_cmd->add_option("--dim", build_dim, "Expected dimension");

  auto* search_cmd = index_cmd->add_subcommand("search", "Top-K search");
  std::string search_index, search_query, search_passages;
  std::size_t search_topk = 5, search_budget = 0;
  bool search_raw = false;
  search_cmd->add_option("--index", search_index, "Index file")->required();
  search_cmd->add_option("--query", search_query, "Comma-separated vector")
      ->required();
  search_cmd->add_option("--topk", search_topk, "Hits to return");
  search_cmd->add_option("--passages", search_passages, "Passage JSONL");
  auto* o_search_budget = search_cmd->add_option(
      "--ctx-budget", search_budget, "Print formatted context within budget");
  search_cmd->add_flag("--raw", search_raw, "Query is already unit norm");
  o_search_budget->needs(search_cmd->get_option("--passages"));

  // run
  auto* run_cmd = app.add_subcommand("run", "Run the gated pipeline");
  RunFlags run_flags;
  std::string run_out_dir;
  run_flags.add(run_cmd);
  run_cmd->add_option("--out-dir", run_out_dir, "Output directory");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep thresholds");
  RunFlags sweep_flags;
  std::string sweep_grid, sweep_format = "csv", sweep_out;
  sweep_flags.add(sweep_cmd);
  sweep_cmd->add_option("--grid", sweep_grid, "Thresholds: a,b,c or start:stop:step")
      ->required();
  sweep_cmd->add_option("--format", sweep_format, "csv or md")
      ->check(CLI::IsMember({"csv", "md"}));
  sweep_cmd->add_option("--out", sweep_out, "Report file (default stdout)");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Run simulation checks");
  std::string sim_spec, sim_format = "csv", sim_out;
  std::uint64_t sim_seed = 0;
  sim_cmd->add_option("--spec", sim_spec, "Simulation spec (JSON)")->required();
  sim_cmd->add_option("--format", sim_format, "csv or md")
      ->check(CLI::IsMember({"csv", "md"}));
  auto* o_sim_seed = sim_cmd->add_option("--seed", sim_seed, "Override the spec seed");
  sim_cmd->add_option("--out", sim_out, "Report file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  if (score_cmd->parsed()) {
    grag_gate_config cfg;
    grag_gate_config_default(&cfg);
    score_gate.apply(cfg);
    grag_trace_set* raw = nullptr;
    check(grag_trace_set_load(score_trace.c_str(), &raw));
    TracesPtr traces(raw);
    const std::size_t n = grag_trace_set_size(traces.get());
    std::vector<double> scores(n);
    check(grag_trace_set_score(traces.get(), &cfg, scores.data()));
    std::vector<const char*> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      ids[i] = grag_trace_set_query_id(traces.get(), i);
    }
    grag_string* text = nullptr;
    check(grag_scores_format(ids.data(), scores.data(), nullptr, nullptr, n, &text));
    emit(score_out, text_of(StringPtr(text)));
    return kExitOk;
  }

  if (cal_cmd->parsed()) {
    if (!o_scores->count() && !o_dev->count()) {
      usage_error("calibrate needs --scores with --rho, or --dev with --grid");
    }
    double tau = 0.0;
    grag_score_file* raw = nullptr;
    check(grag_score_file_load((o_scores->count() ? cal_scores : cal_dev).c_str(),
                               &raw));
    ScoresPtr file(raw);
    const std::size_t n = grag_score_file_size(file.get());
    if (o_scores->count()) {
      check(grag_quantile_threshold(grag_score_file_scores(file.get()), n, cal_rho,
                                    &tau));
    } else {
      const double* a0 = grag_score_file_a0(file.get());
      const double* a1 = grag_score_file_a1(file.get());
      if (!a0 || !a1) {
        throw CliFailure{kExitData, cal_dev + ": dev file needs a0 and a1 columns"};
      }
      const auto grid = parse_grid(cal_grid);
      check(grag_accuracy_opt_threshold(grag_score_file_scores(file.get()), a0, a1,
                                        n, grid.data(), grid.size(), &tau));
    }
    const std::string line = format_double(tau) + "\n";
    std::cout << line;
    if (!cal_out.empty()) emit(cal_out, line);
    return kExitOk;
  }

  if (chunk_cmd->parsed()) {
    grag_passages* raw = nullptr;
    check(grag_passages_chunk_corpus(chunk_corpus.c_str(), chunk_size,
                                     chunk_overlap, chunk_min, chunk_first, &raw));
    PassagesPtr passages(raw);
    check(grag_passages_save(passages.get(), chunk_out.c_str()));
    std::cerr << grag_passages_size(passages.get()) << " passages\n";
    return kExitOk;
  }

  if (build_cmd->parsed()) {
    grag_passages* praw = nullptr;
    check(grag_passages_load(build_passages.c_str(), &praw));
    PassagesPtr passages(praw);
    grag_index* iraw = nullptr;
    check(grag_index_load(build_emb.c_str(), build_dim, &iraw));
    IndexPtr index(iraw);
    check(grag_index_check_passages(index.get(), passages.get()));
    check(grag_index_save(index.get(), build_out.c_str()));
    std::cerr << grag_index_size(index.get()) << " vectors of dim "
              << grag_index_dim(index.get()) << "\n";
    return kExitOk;
  }

  if (search_cmd->parsed()) {
    grag_index* iraw = nullptr;
    check(grag_index_load(search_index.c_str(), 0, &iraw));
    IndexPtr index(iraw);
    PassagesPtr passages;
    if (!search_passages.empty()) {
      grag_passages* praw = nullptr;
      check(grag_passages_load(search_passages.c_str(), &praw));
      passages.reset(praw);
    }
    const auto query = parse_vector(search_query);
    std::vector<grag_hit> hits(search_topk);
    std::size_t n_hits = 0;
    check(grag_index_search(index.get(), query.data(), query.size(), search_topk,
                            search_raw ? 0 : 1, hits.data(), &n_hits));
    hits.resize(n_hits);
    std::string out;
    for (std::size_t i = 0; i < n_hits; ++i) {
      out += std::to_string(i + 1) + "\t" + std::to_string(hits[i].id) + "\t" +
             format_double(hits[i].score);
      if (passages) {
        const char* title = grag_passages_title(passages.get(), hits[i].id);
        if (!title) {
          throw CliFailure{kExitData, "hit " + std::to_string(hits[i].id) +
                                          " has no passage"};
        }
        out += std::string("\t") + title;
      }
      out += '\n';
    }
    if (o_search_budget->count()) {
      grag_string* text = nullptr;
      std::size_t tokens = 0;
      int truncated = 0;
      check(grag_format_context(hits.data(), hits.size(), passages.get(),
                                search_budget, &text, &tokens, &truncated));
      out += "\n" + text_of(StringPtr(text)) + "\n";
      std::cerr << tokens << " context tokens" << (truncated ? " (truncated)" : "")
                << "\n";
    }
    std::cout << out;
    return kExitOk;
  }

  if (run_cmd->parsed()) {
    auto [config, base] = run_flags.resolve();
    if (!run_out_dir.empty()) {
      json j = json::parse(config);
      j["out_dir"] = RunFlags::absolute(run_out_dir);
      config = j.dump();
    }
    grag_run* raw = nullptr;
    check(grag_run_execute(config.c_str(), base_or_null(base), &raw));
    RunPtr run(raw);
    const grag_status saved = grag_run_save(run.get(), nullptr);
    if (saved == GRAG_ERR_INVALID_CONFIG) {
      usage_error("run needs --out-dir or out_dir in the config");
    }
    check(saved);
    grag_string* summary = nullptr;
    check(grag_run_summary_json(run.get(), &summary));
    std::cout << text_of(StringPtr(summary)) << "\n";
    if (const auto failed = grag_run_failure_count(run.get()); failed > 0) {
      std::cerr << failed << " of " << grag_run_size(run.get())
                << " queries failed; see records.jsonl\n";
    }
    return kExitOk;
  }

  if (sweep_cmd->parsed()) {
    const auto [config, base] = sweep_flags.resolve();
    const auto grid = parse_grid(sweep_grid);
    grag_string* report = nullptr;
    std::size_t failures = 0;
    check(grag_sweep_execute(config.c_str(), base_or_null(base), grid.data(),
                             grid.size(), sweep_format.c_str(), &report,
                             &failures));
    emit(sweep_out, text_of(StringPtr(report)));
    if (failures > 0) std::cerr << failures << " queries failed and were skipped\n";
    return kExitOk;
  }

  if (sim_cmd->parsed()) {
    const std::string spec = read_text(sim_spec);
    grag_string* report = nullptr;
    int passed = 0;
    check(grag_simulate(spec.c_str(), sim_format.c_str(),
                        o_sim_seed->count() ? 1 : 0, sim_seed, &report, &passed));
    emit(sim_out, text_of(StringPtr(report)));
    if (!passed) {
      std::cerr << "simulation checks failed\n";
      return kExitInternal;
    }
    return kExitOk;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const CliFailure& f) {
    std::cerr << "gatedrag: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "gatedrag: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
