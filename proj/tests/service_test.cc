#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <future>

#include <httplib.h>

#include "ta/service.h"

namespace ta {
namespace {

const char* kGood =
    "<think>add them</think>def add(a, b):\n    return a +<thinkanywhere>ints</thinkanywhere> b\n";
const char* kWrong =
    "<think>add them</think>def add(a, b):\n    return a -<thinkanywhere>ints</thinkanywhere> b\n";
const char* kGoodNoStruct = "def add(a, b):\n    return a + b\n";
const char* kWrongNoStruct = "def add(a, b):\n    return a - b\n";

json add_tests() {
  return json::array({{{"kind", "assert"}, {"check_script", "assert add(1, 2) == 3"}},
                      {{"kind", "io"}, {"stdin", ""}, {"expected_stdout", ""}}});
}

json request(const std::string& id, const std::string& completion) {
  return {{"id", id}, {"prompt", "add two numbers"}, {"completion", completion},
          {"tests", add_tests()}};
}

ServiceOptions small_options() {
  ServiceOptions o;
  o.workers = 2;
  o.queue_depth = 4;
  o.batch_cap = 16;
  return o;
}

RewardService& shared_service() {
  static RewardService svc(ProfileRegistry::with_defaults(), small_options());
  return svc;
}

TEST(RewardService, ValueMatrix) {
  auto& svc = shared_service();
  EXPECT_EQ(svc.score(request("a", kGood))["total"].get<double>(), 1.1);
  EXPECT_EQ(svc.score(request("b", kWrong))["total"].get<double>(), 0.1);
  EXPECT_EQ(svc.score(request("c", kGoodNoStruct))["total"].get<double>(), 1.0);
  EXPECT_EQ(svc.score(request("d", kWrongNoStruct))["total"].get<double>(), 0.0);
  auto r = svc.score(request("a", kGood));
  EXPECT_EQ(r["id"], "a");
  EXPECT_EQ(r["r_struct"], 1);
  EXPECT_EQ(r["r_correct"], 1);
  EXPECT_EQ(r["verdicts"], json::array({"Pass", "Pass"}));
  EXPECT_TRUE(r["wall_time_ms"].is_number_integer());
}

TEST(RewardService, MatchesLibrary) {
  auto& svc = shared_service();
  for (const char* completion : {kGood, kWrong, kGoodNoStruct, kWrongNoStruct}) {
    for (double alpha : {0.1, 0.37, 2.0}) {
      json req = request("x", completion);
      req["config"] = {{"alpha", alpha}};
      RewardConfig cfg;
      cfg.alpha = alpha;
      auto tests = request_tests(req);
      auto lib = combined_reward(completion, tests, cfg, svc.sandbox());
      EXPECT_EQ(svc.score(req)["total"].get<double>(), lib.total);
    }
  }
}

TEST(RewardService, StructureOnly) {
  auto& svc = shared_service();
  json req = {{"id", "s"}, {"completion", kGood}, {"tests", json::array()},
              {"structure_only", true}};
  auto r = svc.score(req);
  EXPECT_FALSE(r.contains("r_correct"));
  EXPECT_EQ(r["total"].get<double>(), structure_only_reward(kGood, RewardConfig{}).total);
  EXPECT_EQ(r["total"].get<double>(), 0.1);
  EXPECT_TRUE(r["verdicts"].empty());
}

TEST(RewardService, MalformedCompletionEchoesViolations) {
  auto r = shared_service().score(
      request("m", "<think>x</think>def add(a, b):\n    return a +<thinkanywhere> b\n"));
  EXPECT_EQ(r["r_struct"], 0);
  EXPECT_EQ(r["violations"], json::array({"UnmatchedTag"}));
}

TEST(RewardService, StrictMode) {
  json req = request("s", "<think>p</think>def add(a, b)\n    return a +<thinkanywhere>t</thinkanywhere> b\n");
  req["config"] = {{"strict_code_validity", true}};
  auto r = shared_service().score(req);
  EXPECT_EQ(r["r_struct"], 0);
  EXPECT_EQ(r["verdicts"][0], "CompileError");
}

TEST(RewardService, RejectsMalformedRequests) {
  auto& svc = shared_service();
  auto code_of = [&](const json& req) {
    try {
      svc.score(req);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kDomainError;
  };
  EXPECT_EQ(code_of({{"completion", kGood}, {"tests", add_tests()}}), ErrorCode::kMalformedInput);
  EXPECT_EQ(code_of({{"id", "x"}, {"tests", add_tests()}}), ErrorCode::kMalformedInput);
  EXPECT_EQ(code_of({{"id", "x"}, {"completion", kGood}}), ErrorCode::kInvalidTestCase);
  json bad_cfg = request("x", kGood);
  bad_cfg["config"] = {{"alpha", "high"}};
  EXPECT_EQ(code_of(bad_cfg), ErrorCode::kMalformedInput);
  bad_cfg["config"] = {{"temperature", 1}};
  EXPECT_EQ(code_of(bad_cfg), ErrorCode::kMalformedInput);
  bad_cfg["config"] = {{"alpha", -1}};
  EXPECT_EQ(code_of(bad_cfg), ErrorCode::kInvalidConfig);
  json bad_test = request("x", kGood);
  bad_test["tests"] = json::array({{{"kind", "fuzz"}}});
  EXPECT_EQ(code_of(bad_test), ErrorCode::kMalformedInput);
}

TEST(RewardService, BatchOrderAndIsolation) {
  auto& svc = shared_service();
  json batch = json::array();
  for (int i = 0; i < 8; ++i) {
    batch.push_back(request("r" + std::to_string(i), i % 2 ? kWrong : kGood));
  }
  auto out = svc.score_batch(batch);
  ASSERT_EQ(out.size(), 8u);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(out[i]["id"], "r" + std::to_string(i));
    EXPECT_EQ(out[i]["total"].get<double>(), i % 2 ? 0.1 : 1.1);
  }
  batch[3].erase("completion");
  out = svc.score_batch(batch);
  ASSERT_EQ(out.size(), 8u);
  EXPECT_EQ(out[3]["id"], "r3");
  EXPECT_EQ(out[3]["error"]["code"], "MalformedInput");
  EXPECT_FALSE(out[3].contains("total"));
  EXPECT_EQ(out[4]["total"].get<double>(), 1.1);
  EXPECT_EQ(svc.score_batch(json::array()), json::array());
}

TEST(RewardService, BatchTooLarge) {
  json batch = json::array();
  for (int i = 0; i < 17; ++i) batch.push_back(request("r", kGood));
  try {
    shared_service().score_batch(batch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBatchTooLarge);
  }
}

TEST(RewardService, HealthAndSaturation) {
  ServiceOptions o;
  o.workers = 1;
  o.queue_depth = 0;
  RewardService svc(ProfileRegistry::with_defaults(), o);
  auto h = svc.health();
  EXPECT_EQ(h["status"], "ok");
  EXPECT_EQ(h["sandbox_workers_free"], 1);
  EXPECT_EQ(h["version"], TA_EXPECTED_VERSION);

  json slow = request("slow", kGood);
  slow["tests"] = json::array({{{"kind", "assert"}, {"check_script", "import time\ntime.sleep(1.5)"}}});
  auto pending = std::async(std::launch::async, [&] { return svc.score(slow); });
  for (int i = 0; i < 200 && svc.health()["sandbox_workers_free"] != 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  EXPECT_EQ(svc.health()["status"], "busy");
  EXPECT_THROW(svc.score(request("late", kGood)), ServiceBusy);
  EXPECT_EQ(pending.get()["total"].get<double>(), 1.1);
  EXPECT_EQ(svc.health()["status"], "ok");
  EXPECT_EQ(svc.peak_in_flight(), 1u);
}

TEST(RewardService, LogSink) {
  auto path = std::filesystem::temp_directory_path() / "ta_service_log_test.jsonl";
  std::filesystem::remove(path);
  ServiceOptions o = small_options();
  o.log_sink = path.string();
  {
    RewardService svc(ProfileRegistry::with_defaults(), o);
    svc.score(request("l1", kGood));
    svc.score_batch(json::array({request("l2", kWrong), json{{"id", "l3"}}}));
  }
  std::ifstream in(path);
  std::string line;
  std::vector<json> entries;
  while (std::getline(in, line)) entries.push_back(json::parse(line));
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[0]["route"], "/score");
  EXPECT_EQ(entries[0]["response"]["id"], "l1");
  EXPECT_EQ(entries[2]["response"]["error"]["code"], "MalformedInput");
  std::filesystem::remove(path);
}

TEST(RewardService, Http) {
  RewardService svc(ProfileRegistry::with_defaults(), small_options());
  int port = svc.bind("127.0.0.1", 0);
  svc.start();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(30, 0);

  auto res = cli.Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["status"], "ok");

  res = cli.Post("/score", request("h", kGood).dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["total"].get<double>(), 1.1);

  res = cli.Post("/score", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["error"]["code"], "MalformedInput");

  res = cli.Post("/score", json{{"id", "x"}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  json big = json::array();
  for (int i = 0; i < 17; ++i) big.push_back(request("b", kGood));
  res = cli.Post("/score_batch", big.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 413);
  EXPECT_EQ(json::parse(res->body)["error"]["code"], "BatchTooLarge");

  res = cli.Post("/score_batch", "[]", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body), json::array());
  svc.stop();
}

TEST(RewardService, HttpBusyIs503) {
  ServiceOptions o;
  o.workers = 1;
  o.queue_depth = 0;
  RewardService svc(ProfileRegistry::with_defaults(), o);
  int port = svc.bind("127.0.0.1", 0);
  svc.start();
  json slow = request("slow", kGood);
  slow["tests"] = json::array({{{"kind", "assert"}, {"check_script", "import time\ntime.sleep(1.5)"}}});
  auto pending = std::async(std::launch::async, [&] {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c.Post("/score", slow.dump(), "application/json")->status;
  });
  for (int i = 0; i < 200 && svc.health()["sandbox_workers_free"] != 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Post("/score", request("late", kGood).dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 503);
  auto health = cli.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(json::parse(health->body)["status"], "busy");
  EXPECT_EQ(pending.get(), 200);
  svc.stop();
}

}  // namespace
}  // namespace ta
