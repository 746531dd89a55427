#include "ta/coldstart.h"

#include <algorithm>
#include <cstdlib>
#include <future>

#include <httplib.h>
#include <json.hpp>

#include "ta/generated/template_asset.h"

namespace ta {

using nlohmann::json;

std::string_view coldstart_template() { return generated::kColdStartTemplate; }

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::optional<DropReason> reason_for(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kUnmatchedTag: return DropReason::kUnmatchedTag;
    case ViolationKind::kNestedBlock: return DropReason::kNestedBlock;
    case ViolationKind::kTaInsideThink: return DropReason::kTaInsideThink;
    case ViolationKind::kThinkAfterCode: return DropReason::kThinkAfterCode;
    case ViolationKind::kEmptyOutput: return DropReason::kEmptyOutput;
  }
  return std::nullopt;
}

}  // namespace

RenderedPrompt render_template(std::string_view requirement, const DelimiterScheme& scheme) {
  if (is_blank(requirement)) {
    throw Error(ErrorCode::kEmptyRequirement, "requirement is empty");
  }
  const std::string_view tmpl = coldstart_template();
  const auto at = tmpl.find(kPromptPlaceholder);
  RenderedPrompt out;
  out.text.reserve(tmpl.size() + requirement.size());
  out.text.append(tmpl.substr(0, at));
  out.text.append(requirement);
  out.text.append(tmpl.substr(at + kPromptPlaceholder.size()));
  for (const auto* d : {&scheme.open_think, &scheme.close_think, &scheme.open_ta, &scheme.close_ta}) {
    if (requirement.find(*d) != std::string_view::npos) {
      out.warnings.push_back("requirement contains delimiter " + *d + "; inserted verbatim");
    }
  }
  return out;
}

std::optional<std::string> extract_requirement(std::string_view rendered) {
  const std::string_view tmpl = coldstart_template();
  const auto at = tmpl.find(kPromptPlaceholder);
  const auto prefix = tmpl.substr(0, at);
  const auto suffix = tmpl.substr(at + kPromptPlaceholder.size());
  if (rendered.size() < prefix.size() + suffix.size() ||
      rendered.substr(0, prefix.size()) != prefix ||
      rendered.substr(rendered.size() - suffix.size()) != suffix) {
    return std::nullopt;
  }
  return std::string(
      rendered.substr(prefix.size(), rendered.size() - prefix.size() - suffix.size()));
}

std::string_view to_string(DropReason reason) {
  switch (reason) {
    case DropReason::kUnmatchedTag: return "UnmatchedTag";
    case DropReason::kNestedBlock: return "NestedBlock";
    case DropReason::kTaInsideThink: return "TaInsideThink";
    case DropReason::kThinkAfterCode: return "ThinkAfterCode";
    case DropReason::kEmptyOutput: return "EmptyOutput";
    case DropReason::kMissingInitialThink: return "MissingInitialThink";
    case DropReason::kNoInlineBlock: return "NoInlineBlock";
    case DropReason::kBackendError: return "BackendError";
  }
  return "Unknown";
}

FilterResult filter_sample(std::string_view completion, const DelimiterScheme& scheme) {
  const auto report = validate_structure(completion, scheme);
  FilterResult out;
  out.ta_blocks = report.ta_block_count;
  // Fixed priority so a sample with several problems always reports the same one.
  for (auto kind : {ViolationKind::kUnmatchedTag, ViolationKind::kNestedBlock,
                    ViolationKind::kTaInsideThink, ViolationKind::kThinkAfterCode,
                    ViolationKind::kEmptyOutput}) {
    if (report.has(kind)) {
      out.reason = reason_for(kind);
      return out;
    }
  }
  if (!report.has_initial_think) {
    out.reason = DropReason::kMissingInitialThink;
  } else if (report.ta_block_count == 0) {
    out.reason = DropReason::kNoInlineBlock;
  } else {
    out.keep = true;
  }
  return out;
}

// ---- scripted backend ----

ScriptedBackend::ScriptedBackend(std::uint64_t seed, double malformed_rate)
    : seed_(seed), malformed_rate_(malformed_rate) {
  if (!(malformed_rate >= 0.0 && malformed_rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "malformed_rate must lie in [0, 1]");
  }
}

std::uint64_t ScriptedBackend::mix(std::uint64_t call_index, std::uint64_t salt) const {
  return splitmix64(splitmix64(seed_ ^ (salt * 0x632be59bd9b4e019ull)) + call_index);
}

std::optional<DropReason> ScriptedBackend::planned_drop(std::uint64_t call_index) const {
  const double u = static_cast<double>(mix(call_index, 1) >> 11) * 0x1.0p-53;
  if (u >= malformed_rate_) return std::nullopt;
  static constexpr DropReason kKinds[] = {
      DropReason::kUnmatchedTag, DropReason::kNestedBlock, DropReason::kMissingInitialThink,
      DropReason::kNoInlineBlock, DropReason::kThinkAfterCode};
  return kKinds[mix(call_index, 2) % std::size(kKinds)];
}

bool ScriptedBackend::planned_wrong(std::uint64_t call_index) const {
  return (mix(call_index, 3) & 1) != 0;
}

std::vector<std::string> ScriptedBackend::solution_tests() {
  return {"assert add(2, 3) == 5", "assert add(-4, 4) == 0", "assert add(10, 0) == 10"};
}

std::string ScriptedBackend::generate(const GenerationRequest& request) {
  const auto i = request.call_index;
  const std::string plan = "<think>add the two arguments (draw " + std::to_string(i) + ")</think>";
  const std::string op = planned_wrong(i) ? "-" : "+";
  auto drop = planned_drop(i);
  if (!drop) {
    return plan + "def add(a, b):\n    return a " + op +
           "<thinkanywhere>both operands are ints</thinkanywhere> b\n";
  }
  switch (*drop) {
    case DropReason::kUnmatchedTag:
      return plan + "def add(a, b):\n    return a +<thinkanywhere>operands b\n";
    case DropReason::kNestedBlock:
      return "<think>plan<thinkanywhere>inner</thinkanywhere></think>def add(a, b):\n"
             "    return a +<thinkanywhere>x</thinkanywhere> b\n";
    case DropReason::kMissingInitialThink:
      return "def add(a, b):\n    return a +<thinkanywhere>ints</thinkanywhere> b\n";
    case DropReason::kNoInlineBlock:
      return plan + "def add(a, b):\n    return a + b\n";
    default:
      return plan + "def add(a, b):\n<think>late plan</think>    return a +"
                    "<thinkanywhere>ints</thinkanywhere> b\n";
  }
}

// ---- HTTP backend ----

namespace {

class HttpBackend : public GenerationBackend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (const char* token = std::getenv(cfg_.token_env.c_str())) token_ = token;
  }

  std::string generate(const GenerationRequest& request) override {
    httplib::Client client(cfg_.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    json body = {{"prompt", request.prompt},
                 {"max_tokens", request.params.max_tokens},
                 {"temperature", request.params.temperature},
                 {"seed", request.call_index}};
    auto res = client.Post(cfg_.path, headers, body.dump(-1, ' ', false, json::error_handler_t::replace),
                           "application/json");
    if (!res) {
      throw Error(ErrorCode::kBackendError,
                  "backend request failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kBackendError, "backend returned HTTP " + std::to_string(res->status));
    }
    try {
      auto reply = json::parse(res->body);
      if (reply.contains("completion")) return reply.at("completion").get<std::string>();
      return reply.at("choices").at(0).at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kBackendError, std::string("unexpected backend reply: ") + e.what());
    }
  }

 private:
  HttpBackendConfig cfg_;
  std::string token_;
};

}  // namespace

std::unique_ptr<GenerationBackend> make_http_backend(HttpBackendConfig cfg) {
  return std::make_unique<HttpBackend>(std::move(cfg));
}

// ---- dataset build ----

std::size_t BuildReport::dropped_total() const {
  std::size_t n = 0;
  for (const auto& [reason, count] : dropped) n += count;
  return n;
}

void BuildResult::require_complete() const {
  if (report.exhausted) {
    throw Error(ErrorCode::kBackendExhausted,
                "call budget spent after " + std::to_string(report.calls) + " calls with " +
                    std::to_string(report.kept) + " samples kept");
  }
}

BuildResult build_dataset(std::span<const std::string> requirements, GenerationBackend& backend,
                          const BuildOptions& options) {
  if (options.target_count == 0) throw Error(ErrorCode::kInvalidConfig, "target_count must be > 0");
  if (requirements.empty()) throw Error(ErrorCode::kEmptyRequirement, "no requirements given");
  options.scheme.validate();

  BuildResult result;
  std::vector<std::string> prompts;
  prompts.reserve(requirements.size());
  for (const auto& req : requirements) {
    auto rendered = render_template(req, options.scheme);
    for (auto& w : rendered.warnings) result.report.warnings.push_back(std::move(w));
    prompts.push_back(std::move(rendered.text));
  }

  const std::size_t budget = options.max_calls ? options.max_calls : 2 * options.target_count;
  const std::size_t parallelism = std::max<std::size_t>(1, options.parallelism);
  auto& report = result.report;

  struct Outcome {
    std::optional<std::string> completion;
  };

  while (report.kept < options.target_count && report.calls < budget) {
    // A wave never exceeds the number of samples still needed, so the calls
    // made are the same as in a sequential run.
    const std::size_t wave = std::min({parallelism, options.target_count - report.kept,
                                       budget - report.calls});
    std::vector<std::future<Outcome>> futures;
    for (std::size_t j = 0; j < wave; ++j) {
      const std::uint64_t index = report.calls + j;
      GenerationRequest request{prompts[index % prompts.size()], options.params, index};
      auto task = [&backend, request = std::move(request)]() -> Outcome {
        try {
          return {backend.generate(request)};
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kBackendError) throw;
          return {std::nullopt};
        }
      };
      futures.push_back(std::async(wave == 1 ? std::launch::deferred : std::launch::async,
                                   std::move(task)));
    }
    for (std::size_t j = 0; j < wave; ++j) {
      const std::uint64_t index = report.calls;
      Outcome outcome = futures[j].get();
      ++report.calls;
      if (!outcome.completion) {
        ++report.dropped[DropReason::kBackendError];
        continue;
      }
      auto verdict = filter_sample(*outcome.completion, options.scheme);
      if (!verdict.keep) {
        ++report.dropped[*verdict.reason];
        continue;
      }
      ColdStartSample sample;
      sample.requirement = requirements[index % requirements.size()];
      sample.prompt = prompts[index % prompts.size()];
      sample.completion = std::move(*outcome.completion);
      sample.structure_ok = true;
      sample.ta_blocks = verdict.ta_blocks;
      sample.call_index = index;
      result.samples.push_back(std::move(sample));
      ++report.kept;
    }
  }
  report.exhausted = report.kept < options.target_count;
  return result;
}

void write_dataset(std::ostream& out, std::span<const ColdStartSample> samples) {
  for (const auto& s : samples) {
    json line = {{"prompt", s.prompt},
                 {"completion", s.completion},
                 {"meta", {{"ta_blocks", s.ta_blocks}, {"structure_ok", s.structure_ok}}}};
    out << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

}  // namespace ta
