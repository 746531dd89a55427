#include "ta/formats.h"

#include <fstream>
#include <limits>
#include <set>

namespace ta {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::kMalformedInput, what); }

const json& require(const json& j, const char* key) {
  if (!j.is_object()) bad(std::string("expected an object with '") + key + "'");
  auto it = j.find(key);
  if (it == j.end()) bad(std::string("missing field '") + key + "'");
  return *it;
}

std::string get_string(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) bad(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double get_number(const json& v, const char* key) {
  if (!v.is_number()) bad(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

int64_t get_int(const json& v, const char* key) {
  if (!v.is_number_integer()) bad(std::string("field '") + key + "' must be an integer");
  return v.get<int64_t>();
}

bool get_bool(const json& v, const char* key) {
  if (!v.is_boolean()) bad(std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

std::vector<std::string> get_string_list(const json& v, const char* key) {
  if (!v.is_array()) bad(std::string("field '") + key + "' must be a list of strings");
  std::vector<std::string> out;
  for (const auto& s : v) {
    if (!s.is_string()) bad(std::string("field '") + key + "' must be a list of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

std::vector<double> get_doubles(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_array()) bad(std::string("field '") + key + "' must be a list");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(get_number(x, key));
  return out;
}

void apply_limits(TestCase& t, const json& j) {
  if (auto it = j.find("time_limit_ms"); it != j.end()) {
    t.time_limit = std::chrono::milliseconds(get_int(*it, "time_limit_ms"));
  }
  if (auto it = j.find("memory_limit_bytes"); it != j.end()) {
    auto m = get_int(*it, "memory_limit_bytes");
    if (m <= 0) throw Error(ErrorCode::kInvalidTestCase, "memory_limit_bytes must be positive");
    t.memory_limit_bytes = static_cast<std::size_t>(m);
  }
}

}  // namespace

DelimiterScheme scheme_from_json(const json& j) {
  if (!j.is_object()) bad("scheme must be an object");
  DelimiterScheme s;
  std::string mode = j.contains("mode") ? get_string(j, "mode") : "text";
  if (mode == "ids") {
    s.mode = SchemeMode::kSingleTokenIds;
    s.open_think_id = static_cast<int32_t>(get_int(require(j, "open_think_id"), "open_think_id"));
    s.close_think_id =
        static_cast<int32_t>(get_int(require(j, "close_think_id"), "close_think_id"));
    s.open_ta_id = static_cast<int32_t>(get_int(require(j, "open_ta_id"), "open_ta_id"));
    s.close_ta_id = static_cast<int32_t>(get_int(require(j, "close_ta_id"), "close_ta_id"));
  } else if (mode != "text") {
    bad("scheme mode must be \"text\" or \"ids\"");
  }
  if (j.contains("open_think")) s.open_think = get_string(j, "open_think");
  if (j.contains("close_think")) s.close_think = get_string(j, "close_think");
  if (j.contains("open_ta")) s.open_ta = get_string(j, "open_ta");
  if (j.contains("close_ta")) s.close_ta = get_string(j, "close_ta");
  s.validate();
  return s;
}

json scheme_to_json(const DelimiterScheme& s) {
  json j = {{"mode", s.mode == SchemeMode::kTextTags ? "text" : "ids"},
            {"open_think", s.open_think},
            {"close_think", s.close_think},
            {"open_ta", s.open_ta},
            {"close_ta", s.close_ta}};
  if (s.mode == SchemeMode::kSingleTokenIds) {
    j["open_think_id"] = s.open_think_id;
    j["close_think_id"] = s.close_think_id;
    j["open_ta_id"] = s.open_ta_id;
    j["close_ta_id"] = s.close_ta_id;
  }
  return j;
}

TestCase test_from_json(const json& j) {
  std::string kind = get_string(j, "kind");
  TestCase t;
  if (kind == "io") {
    t = TestCase::io(get_string(j, "stdin"), get_string(j, "expected_stdout"));
  } else if (kind == "assert") {
    t = TestCase::assertion(get_string(j, "check_script"));
  } else {
    bad("test kind must be \"io\" or \"assert\", got \"" + kind + "\"");
  }
  apply_limits(t, j);
  t.validate();
  return t;
}

json test_to_json(const TestCase& t) {
  json j;
  if (const auto* io = std::get_if<IoTest>(&t.kind)) {
    j = {{"kind", "io"}, {"stdin", io->stdin_text}, {"expected_stdout", io->expected_stdout}};
  } else {
    j = {{"kind", "assert"}, {"check_script", std::get<AssertTest>(t.kind).check_script}};
  }
  j["time_limit_ms"] = t.time_limit.count();
  j["memory_limit_bytes"] = t.memory_limit_bytes;
  return j;
}

std::vector<TestCase> test_suite_from_json(const json& j) {
  const auto& list = require(j, "tests");
  if (!list.is_array()) bad("'tests' must be a list");
  std::vector<TestCase> out;
  for (const auto& item : list) {
    json merged = item;
    if (!merged.is_object()) bad("each test must be an object");
    for (const char* key : {"time_limit_ms", "memory_limit_bytes"}) {
      if (j.contains(key) && !merged.contains(key)) merged[key] = j[key];
    }
    out.push_back(test_from_json(merged));
  }
  return out;
}

ProfileRegistry profiles_from_json(const json& j) {
  auto registry = ProfileRegistry::with_defaults();
  const auto& profiles = require(j, "profiles");
  if (!profiles.is_object()) bad("'profiles' must be an object");
  for (const auto& [name, p] : profiles.items()) {
    LanguageProfile profile;
    profile.name = name;
    profile.run_command = get_string_list(require(p, "run"), "run");
    if (profile.run_command.empty()) bad("profile '" + name + "' has an empty run command");
    if (p.contains("compile")) profile.compile_command = get_string_list(p["compile"], "compile");
    if (p.contains("source_file")) profile.source_file = get_string(p, "source_file");
    if (p.contains("artifact_file")) profile.artifact_file = get_string(p, "artifact_file");
    if (p.contains("compile_time_limit_ms")) {
      profile.compile_time_limit =
          std::chrono::milliseconds(get_int(p["compile_time_limit_ms"], "compile_time_limit_ms"));
    }
    registry.add(std::move(profile));
  }
  return registry;
}

void apply_reward_overrides(RewardConfig& cfg, const json& o) {
  if (o.is_null()) return;
  if (!o.is_object()) bad("config must be an object");
  for (const auto& [key, v] : o.items()) {
    if (key == "alpha") {
      cfg.alpha = get_number(v, "alpha");
    } else if (key == "correct_coeff") {
      cfg.correct_coeff = get_number(v, "correct_coeff");
    } else if (key == "strict_code_validity") {
      cfg.strict_code_validity = get_bool(v, "strict_code_validity");
    } else if (key == "gated") {
      cfg.gated = get_bool(v, "gated");
    } else if (key == "profile") {
      if (!v.is_string()) bad("field 'profile' must be a string");
      cfg.profile = v.get<std::string>();
    } else {
      bad("unknown config field '" + key + "'");
    }
  }
}

void apply_grpo_overrides(GrpoConfig& cfg, const json& o) {
  if (o.is_null()) return;
  if (!o.is_object()) bad("grpo config must be an object");
  for (const auto& [key, v] : o.items()) {
    if (key == "epsilon") {
      cfg.epsilon = get_number(v, "epsilon");
    } else if (key == "beta") {
      cfg.beta = get_number(v, "beta");
    } else if (key == "std_floor") {
      cfg.std_floor = get_number(v, "std_floor");
    } else if (key == "ratio_level") {
      if (v == "token") {
        cfg.ratio_level = RatioLevel::kToken;
      } else if (v == "sequence") {
        cfg.ratio_level = RatioLevel::kSequence;
      } else {
        bad("ratio_level must be \"token\" or \"sequence\"");
      }
    } else {
      bad("unknown grpo config field '" + key + "'");
    }
  }
}

RolloutGroup rollout_group_from_json(const json& j) {
  RolloutGroup g;
  const auto& id = require(j, "prompt_id");
  g.prompt_id = id.is_string() ? id.get<std::string>() : id.dump();
  const auto& list = require(j, "rollouts");
  if (!list.is_array()) bad("'rollouts' must be a list");
  for (const auto& r : list) {
    Rollout out;
    if (r.contains("tokens")) {
      if (!r["tokens"].is_array()) bad("'tokens' must be a list");
      for (const auto& t : r["tokens"]) out.tokens.push_back(get_int(t, "tokens"));
    }
    out.logp_theta = get_doubles(r, "logp_theta");
    out.logp_old = get_doubles(r, "logp_old");
    out.logp_ref = get_doubles(r, "logp_ref");
    out.reward = get_number(require(r, "reward"), "reward");
    g.rollouts.push_back(std::move(out));
  }
  return g;
}

json rollout_group_to_json(const RolloutGroup& g) {
  json rollouts = json::array();
  for (const auto& r : g.rollouts) {
    rollouts.push_back({{"tokens", r.tokens},
                        {"logp_theta", r.logp_theta},
                        {"logp_old", r.logp_old},
                        {"logp_ref", r.logp_ref},
                        {"reward", r.reward}});
  }
  return {{"prompt_id", g.prompt_id}, {"rollouts", rollouts}};
}

namespace {

template <typename F>
void for_each_json_line(std::istream& in, F&& f) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      bad("line " + std::to_string(number) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(number) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<RolloutGroup> read_rollout_groups(std::istream& in) {
  std::vector<RolloutGroup> out;
  for_each_json_line(in, [&](const json& j) { out.push_back(rollout_group_from_json(j)); });
  return out;
}

CorpusRecord corpus_record_from_json(const json& j, const DelimiterScheme& default_scheme) {
  if (!j.is_object()) bad("corpus record must be an object");
  CorpusRecord rec;
  rec.scheme = j.contains("scheme") ? scheme_from_json(j["scheme"]) : default_scheme;
  if (j.contains("tokens") && rec.scheme.mode == SchemeMode::kSingleTokenIds) {
    std::vector<TokenPiece> pieces;
    if (!j["tokens"].is_array()) bad("'tokens' must be a list");
    for (const auto& t : j["tokens"]) {
      pieces.push_back({static_cast<int32_t>(get_int(require(t, "id"), "id")),
                        get_string(t, "text")});
    }
    rec.sequence = parse_token_pieces(pieces, rec.scheme);
    for (const auto& p : pieces) rec.raw += p.text;
  } else {
    rec.raw = get_string(j, "raw");
    rec.sequence = parse_mixed_sequence(rec.raw, rec.scheme);
  }
  if (j.contains("token_lens")) {
    const auto& lens = j["token_lens"];
    if (!lens.is_array()) bad("'token_lens' must be a list");
    std::vector<std::size_t> out;
    for (const auto& v : lens) {
      auto n = get_int(v, "token_lens");
      if (n < 0) bad("'token_lens' entries must be non-negative");
      out.push_back(static_cast<std::size_t>(n));
    }
    rec.token_lens = std::move(out);
  }
  return rec;
}

std::vector<CorpusRecord> read_corpus(std::istream& in, const DelimiterScheme& default_scheme) {
  std::vector<CorpusRecord> out;
  for_each_json_line(in, [&](const json& j) {
    out.push_back(corpus_record_from_json(j, default_scheme));
  });
  return out;
}

json structure_report_to_json(const StructureReport& r) {
  json violations = json::array();
  for (const auto& v : r.violations) {
    violations.push_back({{"kind", to_string(v.kind)}, {"byte_offset", v.byte_offset}});
  }
  return {{"ok", r.ok()},
          {"has_initial_think", r.has_initial_think},
          {"ta_block_count", r.ta_block_count},
          {"line_start_blocks", r.line_start_blocks},
          {"violations", violations}};
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    bad(path + ": " + e.what());
  }
}

std::string dump_json(const json& j, int indent) {
  return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

}  // namespace ta
