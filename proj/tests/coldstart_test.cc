#include <gtest/gtest.h>

#include <httplib.h>
#include <openssl/sha.h>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "ta/coldstart.h"

namespace ta {
namespace {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  char hex[2 * SHA256_DIGEST_LENGTH + 1];
  for (int i = 0; i < SHA256_DIGEST_LENGTH; ++i) std::snprintf(hex + 2 * i, 3, "%02x", digest[i]);
  return hex;
}

TEST(Template, ContentHashIsPinned) {
  EXPECT_EQ(sha256_hex(coldstart_template()),
            "75555d8acbb655b2a63c499c0fe406e83f72a4764ac65112c961838542cf6cc6");
}

TEST(Template, EmbeddedCopyMatchesAsset) {
  std::ifstream in(TA_TEMPLATE_PATH, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), coldstart_template());
}

TEST(Template, CarriesTheRules) {
  auto t = coldstart_template();
  for (const char* needle :
       {"First output <think>...</think> with brief reasoning",
        "1. You MUST use <thinkanywhere>...</thinkanywhere> tags",
        "2. <thinkanywhere>...</thinkanywhere> MUST be embedded within an existing program "
        "statement token sequence.",
        "3. The code must remain valid and executable after removing all",
        "User: {{PROMPT}}. Assistant:"}) {
    EXPECT_NE(t.find(needle), std::string_view::npos) << needle;
  }
}

TEST(RenderTemplate, SubstitutesOnce) {
  auto r = render_template("Sum two ints");
  EXPECT_TRUE(r.warnings.empty());
  auto first = r.text.find("Sum two ints");
  ASSERT_NE(first, std::string::npos);
  EXPECT_EQ(r.text.find("Sum two ints", first + 1), std::string::npos);
  EXPECT_EQ(r.text.find(kPromptPlaceholder), std::string::npos);
  EXPECT_NE(r.text.find("User: Sum two ints. Assistant:"), std::string::npos);
  EXPECT_EQ(render_template("Sum two ints").text, r.text);
}

TEST(RenderTemplate, DelimiterInRequirementIsVerbatimWithWarning) {
  const std::string req = "Explain <thinkanywhere> usage";
  auto r = render_template(req);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(extract_requirement(r.text), req);
}

TEST(RenderTemplate, PlaceholderTextInRequirementIsNotExpanded) {
  auto r = render_template("keep {{PROMPT}} literal");
  EXPECT_EQ(extract_requirement(r.text), "keep {{PROMPT}} literal");
}

TEST(RenderTemplate, EmptyRequirement) {
  for (const char* req : {"", "  \n"}) {
    try {
      render_template(req);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kEmptyRequirement);
    }
  }
}

TEST(FilterSample, Cases) {
  auto scheme = DelimiterScheme::text_tags();
  auto keep = filter_sample(
      "<think>p</think>x = 1<thinkanywhere>a</thinkanywhere>\ny = 2<thinkanywhere>b"
      "</thinkanywhere>\nz = 3<thinkanywhere>c</thinkanywhere>\n",
      scheme);
  EXPECT_TRUE(keep.keep);
  EXPECT_EQ(keep.ta_blocks, 3u);
  auto nested = filter_sample("<think>a<thinkanywhere>b</thinkanywhere></think>x=1", scheme);
  EXPECT_FALSE(nested.keep);
  EXPECT_EQ(nested.reason, DropReason::kNestedBlock);
  EXPECT_EQ(filter_sample("x = 1<thinkanywhere>a</thinkanywhere>", scheme).reason,
            DropReason::kMissingInitialThink);
  EXPECT_EQ(filter_sample("<think>p</think>x = 1", scheme).reason, DropReason::kNoInlineBlock);
  // Format-valid but wrong code: kept, since only format is judged.
  EXPECT_TRUE(filter_sample("<think>p</think>print(1 <thinkanywhere>x</thinkanywhere>/ 0)", scheme)
                  .keep);
}

TEST(ScriptedBackend, OutputsMatchPlannedVerdicts) {
  ScriptedBackend backend(42, 0.5);
  auto scheme = DelimiterScheme::text_tags();
  int malformed = 0;
  for (std::uint64_t i = 0; i < 400; ++i) {
    auto out = backend.generate({"p", {}, i});
    auto verdict = filter_sample(out, scheme);
    auto planned = backend.planned_drop(i);
    EXPECT_EQ(verdict.keep, !planned.has_value()) << out;
    if (planned) {
      EXPECT_EQ(verdict.reason, planned) << out;
      ++malformed;
    }
  }
  EXPECT_GT(malformed, 150);
  EXPECT_LT(malformed, 250);
}

TEST(BuildDataset, AlwaysValidBackend) {
  ScriptedBackend backend(1, 0.0);
  std::vector<std::string> reqs;
  for (int i = 0; i < 10; ++i) reqs.push_back("task " + std::to_string(i));
  auto result = build_dataset(reqs, backend, {.target_count = 10});
  EXPECT_EQ(result.samples.size(), 10u);
  EXPECT_EQ(result.report.dropped_total(), 0u);
  EXPECT_FALSE(result.report.exhausted);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(result.samples[i].requirement, reqs[i]);
}

TEST(BuildDataset, HalfMalformedReachesTarget) {
  ScriptedBackend backend(7, 0.5);
  std::vector<std::string> reqs{"a", "b", "c"};
  auto result = build_dataset(reqs, backend, {.target_count = 10, .max_calls = 100});
  EXPECT_EQ(result.samples.size(), 10u);
  EXPECT_EQ(result.report.kept + result.report.dropped_total(), result.report.calls);
  std::map<DropReason, std::size_t> expected;
  for (std::uint64_t i = 0; i < result.report.calls; ++i) {
    if (auto r = backend.planned_drop(i)) ++expected[*r];
  }
  EXPECT_EQ(result.report.dropped, expected);
  for (const auto& s : result.samples) {
    EXPECT_TRUE(filter_sample(s.completion, DelimiterScheme::text_tags()).keep);
  }
}

TEST(BuildDataset, ParallelismDoesNotChangeOutcome) {
  std::vector<std::string> reqs{"a", "b", "c", "d"};
  ScriptedBackend backend(99, 0.3);
  auto seq = build_dataset(reqs, backend, {.target_count = 40, .max_calls = 200});
  auto par = build_dataset(reqs, backend, {.target_count = 40, .max_calls = 200, .parallelism = 6});
  EXPECT_EQ(seq.report.calls, par.report.calls);
  EXPECT_EQ(seq.report.dropped, par.report.dropped);
  ASSERT_EQ(seq.samples.size(), par.samples.size());
  for (std::size_t i = 0; i < seq.samples.size(); ++i) {
    EXPECT_EQ(seq.samples[i].completion, par.samples[i].completion);
  }
}

TEST(BuildDataset, ExhaustedBudgetKeepsPartialDataset) {
  ScriptedBackend backend(5, 0.1);
  std::vector<std::string> reqs{"only"};
  auto result = build_dataset(reqs, backend, {.target_count = 500, .max_calls = 500});
  EXPECT_TRUE(result.report.exhausted);
  EXPECT_EQ(result.report.calls, 500u);
  std::size_t planned_kept = 0;
  for (std::uint64_t i = 0; i < 500; ++i) planned_kept += !backend.planned_drop(i).has_value();
  EXPECT_EQ(result.report.kept, planned_kept);
  EXPECT_EQ(result.samples.size(), planned_kept);
  try {
    result.require_complete();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBackendExhausted);
  }
}

TEST(BuildDataset, CorrectnessNeverFilters) {
  ScriptedBackend backend(3, 0.0);
  std::vector<std::string> reqs{"add"};
  auto result = build_dataset(reqs, backend, {.target_count = 50});
  std::size_t wrong = 0;
  for (const auto& s : result.samples) wrong += backend.planned_wrong(s.call_index);
  EXPECT_GT(wrong, 0u);
  EXPECT_EQ(result.samples.size(), 50u);
}

class FailingBackend : public GenerationBackend {
 public:
  std::string generate(const GenerationRequest& r) override {
    if (r.call_index % 3 == 0) throw Error(ErrorCode::kBackendError, "boom");
    return "<think>p</think>x = 1<thinkanywhere>a</thinkanywhere>";
  }
};

TEST(BuildDataset, BackendErrorsAreCountedDrops) {
  FailingBackend backend;
  std::vector<std::string> reqs{"r"};
  auto result = build_dataset(reqs, backend, {.target_count = 4, .max_calls = 10});
  EXPECT_EQ(result.report.kept, 4u);
  EXPECT_EQ(result.report.dropped.at(DropReason::kBackendError), 2u);
  EXPECT_EQ(result.report.calls, 6u);
}

TEST(BuildDataset, InvalidInput) {
  ScriptedBackend backend(1, 0.0);
  std::vector<std::string> none;
  EXPECT_THROW(build_dataset(none, backend, {.target_count = 1}), Error);
  std::vector<std::string> reqs{"x"};
  EXPECT_THROW(build_dataset(reqs, backend, {.target_count = 0}), Error);
}

TEST(WriteDataset, JsonLinesFormat) {
  ScriptedBackend backend(1, 0.0);
  std::vector<std::string> reqs{"x"};
  auto result = build_dataset(reqs, backend, {.target_count = 2});
  std::stringstream ss;
  write_dataset(ss, result.samples);
  std::string line;
  int n = 0;
  while (std::getline(ss, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("prompt"), result.samples[n].prompt);
    EXPECT_EQ(j.at("meta").at("ta_blocks"), 1);
    EXPECT_EQ(j.at("meta").at("structure_ok"), true);
    ++n;
  }
  EXPECT_EQ(n, 2);
}

TEST(HttpBackend, PostsPromptWithBearerToken) {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_auth;
  server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    seen_auth = req.get_header_value("Authorization");
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json reply = {{"choices", {{{"text", "echo:" + body.at("prompt").get<std::string>()}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  ::setenv("TA_TEST_BACKEND_TOKEN", "s3cret", 1);
  auto backend = make_http_backend({.base_url = "http://127.0.0.1:" + std::to_string(port),
                                    .token_env = "TA_TEST_BACKEND_TOKEN"});
  EXPECT_EQ(backend->generate({"hello", {}, 0}), "echo:hello");
  EXPECT_EQ(seen_auth, "Bearer s3cret");
  server.stop();
  t.join();
  try {
    backend->generate({"hello", {}, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBackendError);
  }
}

}  // namespace
}  // namespace ta
