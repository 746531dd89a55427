// Command-line front end.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ta/analysis.h"
#include "ta/coldstart.h"
#include "ta/embedding.h"
#include "ta/formats.h"
#include "ta/service.h"

namespace ta {
namespace {

constexpr int kExitInvalid = 3;  // validate: some input violated the format

struct Globals {
  std::string scheme_path;
  std::string config_path;
  std::size_t jobs = 4;

  DelimiterScheme scheme() const {
    if (scheme_path.empty()) return DelimiterScheme::text_tags();
    return scheme_from_json(load_json_file(scheme_path));
  }
  json config() const {
    return config_path.empty() ? json::object() : load_json_file(config_path);
  }
  RewardConfig reward_config() const {
    RewardConfig cfg;
    cfg.scheme = scheme();
    auto c = config();
    if (c.contains("reward")) apply_reward_overrides(cfg, c["reward"]);
    return cfg;
  }
  ProfileRegistry profiles() const {
    auto c = config();
    return c.contains("profiles") ? profiles_from_json(c) : ProfileRegistry::with_defaults();
  }
  SandboxOptions sandbox_options() const {
    SandboxOptions s;
    s.workers = std::max<std::size_t>(1, jobs);
    return s;
  }
};

std::string read_all(const std::string& path) {
  if (path == "-") {
    std::ostringstream s;
    s << std::cin.rdbuf();
    return s.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMalformedInput, "cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<GenerationTrace> read_trace_file(const std::string& path) {
  std::istringstream in(read_all(path));
  return read_traces(in);
}

std::vector<CorpusRecord> read_corpus_file(const std::string& path, const DelimiterScheme& s) {
  std::istringstream in(read_all(path));
  return read_corpus(in, s);
}

void print(const json& j) { std::cout << dump_json(j, 2) << "\n"; }

json sequence_to_json(const MixedSequence& seq) {
  json segments = json::array();
  for (const auto& s : seq.segments) {
    const char* kind = s.kind == SegmentKind::kCode    ? "code"
                       : s.kind == SegmentKind::kThink ? "ta"
                                                       : "stray_think";
    segments.push_back({{"kind", kind}, {"text", s.text}});
  }
  json j = {{"leading", seq.leading}, {"segments", segments},
            {"ta_blocks", seq.think_block_count()}};
  j["upfront"] = seq.upfront ? json(*seq.upfront) : json(nullptr);
  return j;
}

json breakdown_to_json(const RewardBreakdown& b) {
  json verdicts = json::array();
  for (const auto& v : b.verdicts) {
    verdicts.push_back({{"status", to_string(v.status)},
                        {"wall_time_ms", v.wall_time.count()},
                        {"stdout", v.stdout_excerpt},
                        {"stderr", v.stderr_excerpt}});
  }
  json j = {{"r_struct", b.r_struct}, {"total", b.total},
            {"structure", structure_report_to_json(b.structure_report)},
            {"verdicts", verdicts}, {"code", b.code}};
  if (b.r_correct) j["r_correct"] = *b.r_correct;
  if (b.code_valid) j["code_valid"] = *b.code_valid;
  return j;
}

RewardService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int run(int argc, char** argv) {
  CLI::App app{"Mixed think/code sequence toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--scheme", g.scheme_path, "Delimiter scheme JSON file (default: text tags)");
  app.add_option("--config", g.config_path,
                 "JSON config with optional \"reward\", \"grpo\", \"profiles\" sections");
  app.add_option("--jobs", g.jobs, "Parallel workers")->check(CLI::PositiveNumber);

  int exit_code = 0;

  auto* parse = app.add_subcommand("parse", "Decompose a completion into blocks");
  std::string parse_in = "-";
  parse->add_option("input", parse_in, "Completion file, - for stdin");
  parse->callback([&] { print(sequence_to_json(parse_mixed_sequence(read_all(parse_in), g.scheme()))); });

  auto* validate = app.add_subcommand("validate", "Check structure rules; exit 3 on violations");
  std::string validate_in = "-";
  bool validate_jsonl = false;
  validate->add_option("input", validate_in, "Completion file, - for stdin");
  validate->add_flag("--jsonl", validate_jsonl, "Input is JSON lines with a \"raw\" field");
  validate->callback([&] {
    auto scheme = g.scheme();
    auto check = [&](const std::string& raw) {
      auto report = validate_structure(raw, scheme);
      if (!report.ok() || !report.has_initial_think || report.ta_block_count == 0) {
        exit_code = kExitInvalid;
      }
      return structure_report_to_json(report);
    };
    if (!validate_jsonl) {
      print(check(read_all(validate_in)));
      return;
    }
    std::istringstream in(read_all(validate_in));
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto j = json::parse(line);
      if (!j.contains("raw") || !j["raw"].is_string()) {
        throw Error(ErrorCode::kMalformedInput, "record without a \"raw\" string");
      }
      std::cout << dump_json(check(j["raw"].get<std::string>())) << "\n";
    }
  });

  auto* extract = app.add_subcommand("extract", "Print the code with all blocks removed");
  std::string extract_in = "-";
  bool extract_lenient = false;
  extract->add_option("input", extract_in, "Completion file, - for stdin");
  extract->add_flag("--lenient", extract_lenient, "Strip blocks even if the input does not parse");
  extract->callback([&] {
    auto raw = read_all(extract_in);
    std::cout << (extract_lenient ? code_for_execution(raw, g.scheme())
                                  : extract_code(parse_mixed_sequence(raw, g.scheme())));
  });

  auto* score = app.add_subcommand("score", "Structure and correctness reward for one completion");
  std::string score_in = "-", score_tests;
  bool score_structure_only = false;
  score->add_option("input", score_in, "Completion file, - for stdin");
  score->add_option("--tests", score_tests, "Test suite JSON file");
  score->add_flag("--structure-only", score_structure_only, "Skip execution; r_correct is omitted");
  score->callback([&] {
    auto cfg = g.reward_config();
    auto raw = read_all(score_in);
    if (score_structure_only) {
      print(breakdown_to_json(structure_only_reward(raw, cfg)));
      return;
    }
    if (score_tests.empty()) throw CLI::RequiredError("--tests (or --structure-only)");
    auto tests = test_suite_from_json(load_json_file(score_tests));
    Sandbox sandbox(g.profiles(), g.sandbox_options());
    print(breakdown_to_json(combined_reward(raw, tests, cfg, sandbox)));
  });

  auto* stats = app.add_subcommand("stats", "Inline block frequency and length over a corpus");
  std::string stats_in;
  stats->add_option("corpus", stats_in, "Corpus JSON lines")->required();
  stats->callback([&] {
    auto corpus = read_corpus_file(stats_in, g.scheme());
    std::vector<MixedSequence> seqs;
    std::vector<std::vector<std::size_t>> lens;
    bool counted = !corpus.empty();
    for (auto& r : corpus) {
      seqs.push_back(r.sequence);
      if (r.token_lens) {
        lens.push_back(*r.token_lens);
      } else {
        counted = false;
      }
    }
    auto s = block_stats(seqs, counted ? &lens : nullptr);
    print({{"sequences", seqs.size()},
           {"avg_freq", s.avg_freq},
           {"avg_len", s.avg_len},
           {"length_source", counted ? "token_lens" : "whitespace_words"}});
  });

  auto* build = app.add_subcommand("build-coldstart", "Generate and filter cold-start samples");
  std::string build_reqs, build_out = "-", build_backend = "scripted", build_url;
  std::size_t build_target = 0, build_max_calls = 0;
  std::uint64_t build_seed = 0;
  double build_rate = 0.1;
  int build_timeout_ms = 60000, build_max_tokens = 4096;
  double build_temperature = 0.7;
  build->add_option("--requirements", build_reqs, "One requirement per line")->required();
  build->add_option("--target", build_target, "Samples to keep")->required();
  build->add_option("--max-calls", build_max_calls, "Backend call budget (default 2x target)");
  build->add_option("--out", build_out, "Dataset JSON lines, - for stdout");
  build->add_option("--backend", build_backend, "scripted | http")
      ->check(CLI::IsMember({"scripted", "http"}));
  build->add_option("--url", build_url, "HTTP backend base URL; token from TA_BACKEND_TOKEN");
  build->add_option("--timeout-ms", build_timeout_ms, "HTTP request timeout");
  build->add_option("--seed", build_seed, "Scripted backend seed");
  build->add_option("--malformed-rate", build_rate, "Scripted backend malformed fraction");
  build->add_option("--max-tokens", build_max_tokens, "Generation length cap");
  build->add_option("--temperature", build_temperature, "Sampling temperature");
  build->callback([&] {
    std::vector<std::string> reqs;
    std::istringstream lines(read_all(build_reqs));
    for (std::string line; std::getline(lines, line);) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) reqs.push_back(line);
    }
    std::unique_ptr<GenerationBackend> backend;
    if (build_backend == "http") {
      HttpBackendConfig hc;
      if (build_url.empty()) throw CLI::RequiredError("--url");
      hc.base_url = build_url;
      hc.timeout = std::chrono::milliseconds(build_timeout_ms);
      backend = make_http_backend(hc);
    } else {
      backend = std::make_unique<ScriptedBackend>(build_seed, build_rate);
    }
    BuildOptions opt;
    opt.target_count = build_target;
    opt.max_calls = build_max_calls;
    opt.parallelism = g.jobs;
    opt.params = {build_max_tokens, build_temperature};
    opt.scheme = g.scheme();
    auto result = build_dataset(reqs, *backend, opt);
    if (build_out == "-") {
      write_dataset(std::cout, result.samples);
    } else {
      std::ofstream out(build_out);
      write_dataset(out, result.samples);
    }
    json dropped = json::object();
    for (const auto& [reason, n] : result.report.dropped) dropped[std::string(to_string(reason))] = n;
    std::cerr << dump_json({{"calls", result.report.calls},
                            {"kept", result.report.kept},
                            {"dropped", dropped},
                            {"exhausted", result.report.exhausted},
                            {"warnings", result.report.warnings}})
              << "\n";
    if (result.report.exhausted) exit_code = 2;
  });

  auto* embed = app.add_subcommand("init-embeddings", "Add trigger-token embeddings to a table");
  std::string embed_in, embed_out = "-";
  TriggerInitConfig tcfg;
  embed->add_option("--table", embed_in, "Embedding table (\"dim N\" header, name<TAB>values)")
      ->required();
  embed->add_option("--out", embed_out, "Output table, - for stdout");
  embed->add_option("--subwords", tcfg.subwords, "Source subword tokens");
  embed->add_option("--open-anchor", tcfg.open_anchor);
  embed->add_option("--close-anchor", tcfg.close_anchor);
  embed->add_option("--open-name", tcfg.open_name);
  embed->add_option("--close-name", tcfg.close_name);
  embed->callback([&] {
    auto table = EmbeddingTable::load(embed_in);
    auto issues = verify_table(table, table.dim(), tcfg);
    if (!issues.empty()) {
      for (const auto& i : issues) std::cerr << i.describe() << "\n";
      throw Error(ErrorCode::kMalformedInput, "embedding table failed verification");
    }
    auto out = with_trigger_embeddings(table, tcfg);
    if (embed_out == "-") {
      out.write(std::cout);
    } else {
      out.save(embed_out);
    }
  });

  auto* audit = app.add_subcommand("grpo-audit", "Recompute advantages and objective per group");
  std::string audit_in;
  audit->add_option("groups", audit_in, "Rollout group JSON lines")->required();
  audit->callback([&] {
    GrpoConfig cfg;
    auto c = g.config();
    if (c.contains("grpo")) apply_grpo_overrides(cfg, c["grpo"]);
    std::istringstream in(read_all(audit_in));
    for (const auto& group : read_rollout_groups(in)) {
      auto obj = grpo_objective(group, cfg);
      std::cout << dump_json({{"prompt_id", group.prompt_id},
                              {"objective", obj.objective},
                              {"advantages", obj.advantages},
                              {"per_rollout", obj.per_rollout},
                              {"clip_fraction", obj.clip_fraction}})
                << "\n";
    }
  });

  auto* entropy = app.add_subcommand("analyze-entropy",
                                     "Window entropy difference at inline block onsets");
  std::string ent_on, ent_off;
  std::size_t ent_n = 10;
  bool ent_details = false;
  entropy->add_option("--enabled", ent_on, "Traces with thinking enabled")->required();
  entropy->add_option("--disabled", ent_off, "Paired traces with thinking disabled")->required();
  entropy->add_option("--window", ent_n, "Window size in tokens")->check(CLI::PositiveNumber);
  entropy->add_flag("--details", ent_details, "Print every position");
  entropy->callback([&] {
    auto on = read_trace_file(ent_on);
    auto off = read_trace_file(ent_off);
    std::map<std::string, const GenerationTrace*> by_id;
    for (const auto& t : off) by_id[t.pairing_id] = &t;
    std::vector<EntropyDiff> all;
    json details = json::array();
    for (const auto& t : on) {
      auto it = by_id.find(t.pairing_id);
      if (it == by_id.end()) {
        throw Error(ErrorCode::kPairingMismatch, "no disabled trace for '" + t.pairing_id + "'");
      }
      for (const auto& d : entropy_diff(t, *it->second, ent_n)) {
        all.push_back(d);
        if (ent_details) {
          details.push_back({{"pairing_id", t.pairing_id},
                             {"enabled_position", d.enabled_position},
                             {"diff", d.diff ? json(*d.diff) : json(nullptr)}});
        }
      }
    }
    auto s = summarize_diffs(all);
    json out = {{"mapped", s.mapped},         {"unmappable", s.unmappable},
                {"positive", s.positive},     {"fraction_positive", s.fraction_positive},
                {"mean", s.mean},             {"bin_low", s.bin_low},
                {"bin_width", s.bin_width},   {"bins", s.bins},
                {"predominantly_positive", s.predominantly_positive()}};
    if (ent_details) out["positions"] = details;
    print(out);
  });

  auto* syntax = app.add_subcommand("analyze-syntax",
                                    "Histogram of syntax categories at inline block onsets");
  std::string syn_in, syn_grammar = "python-subset";
  std::size_t syn_top = 5;
  syntax->add_option("corpus", syn_in, "Corpus JSON lines")->required();
  syntax->add_option("--grammar", syn_grammar, "Syntax profile id");
  syntax->add_option("--top", syn_top, "Categories to report");
  syntax->callback([&] {
    std::vector<std::pair<MixedSequence, SyntaxProfile>> corpus;
    for (auto& r : read_corpus_file(syn_in, g.scheme())) {
      corpus.emplace_back(std::move(r.sequence), SyntaxProfile{syn_grammar});
    }
    auto h = syntax_histogram(corpus);
    json ranked = json::array();
    for (const auto& [name, n] : h.ranked) ranked.push_back({{"category", name}, {"count", n}});
    json top = json::array();
    for (const auto& [name, n] : h.top(syn_top)) top.push_back(name);
    print({{"total", h.total}, {"top", top}, {"ranked", ranked}});
  });

  auto* passk = app.add_subcommand("passk", "Unbiased pass@k");
  int pk_n = 0, pk_c = 0;
  std::vector<int> pk_k;
  std::string pk_in;
  passk->add_option("-n", pk_n, "Samples per problem");
  passk->add_option("-c", pk_c, "Correct samples");
  passk->add_option("-k", pk_k, "k values")->required();
  passk->add_option("--input", pk_in, "JSON lines of {\"n\", \"c\"}; reports the mean");
  passk->callback([&] {
    std::vector<std::pair<int, int>> problems;
    if (!pk_in.empty()) {
      std::istringstream in(read_all(pk_in));
      for (std::string line; std::getline(in, line);) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = json::parse(line);
        problems.emplace_back(j.at("n").get<int>(), j.at("c").get<int>());
      }
      if (problems.empty()) throw Error(ErrorCode::kEmptyCorpus, "no problems in input");
    } else {
      problems.emplace_back(pk_n, pk_c);
    }
    json out = json::object();
    for (int k : pk_k) {
      double sum = 0.0;
      for (auto [n, c] : problems) sum += pass_at_k(n, c, k);
      out["pass@" + std::to_string(k)] = sum / static_cast<double>(problems.size());
    }
    out["problems"] = problems.size();
    print(out);
  });

  auto* cost = app.add_subcommand("token-cost", "Mean token counts per block type");
  std::string cost_in;
  cost->add_option("traces", cost_in, "Trace JSON lines")->required();
  cost->callback([&] {
    auto traces = read_trace_file(cost_in);
    auto c = token_cost_breakdown(traces);
    print({{"upfront_mean", c.upfront_mean},
           {"ta_mean", c.ta_mean},
           {"code_mean", c.code_mean},
           {"total_mean", c.total_mean},
           {"ta_blocks_per_trace", c.ta_blocks_per_trace},
           {"ta_block_len_mean", c.ta_block_len_mean},
           {"reasoning", c.reasoning_summary()}});
  });

  auto* serve = app.add_subcommand("serve", "Run the reward service; logs go to TA_LOG_SINK");
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  std::size_t serve_workers = 4, serve_queue = 16, serve_cap = 64;
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port)->check(CLI::Range(0, 65535));
  serve->add_option("--workers", serve_workers, "Sandbox worker bound")->check(CLI::PositiveNumber);
  serve->add_option("--queue-depth", serve_queue, "Requests allowed to wait before 503");
  serve->add_option("--batch-cap", serve_cap, "Largest accepted batch")->check(CLI::PositiveNumber);
  serve->callback([&] {
    ServiceOptions o;
    o.workers = serve_workers;
    o.queue_depth = serve_queue;
    o.batch_cap = serve_cap;
    o.base_config = g.reward_config();
    if (const char* sink = std::getenv("TA_LOG_SINK")) o.log_sink = sink;
    RewardService svc(g.profiles(), o);
    int port = svc.bind(serve_host, serve_port);
    std::cerr << "listening on " << serve_host << ":" << port << "\n";
    g_service = &svc;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    svc.listen();
    g_service = nullptr;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  return exit_code;
}

}  // namespace
}  // namespace ta

int main(int argc, char** argv) {
  try {
    return ta::run(argc, argv);
  } catch (const ta::Error& e) {
    std::cerr << "error: " << ta::to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: MalformedInput: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
