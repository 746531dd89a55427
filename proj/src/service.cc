#include "ta/service.h"

#include <chrono>
#include <iostream>

#include <httplib.h>

#include "ta/generated/build_info.h"

namespace ta {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::kMalformedInput, what); }

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBatchTooLarge:
      return 413;
    case ErrorCode::kSandboxSpawnFailure:
      return 500;
    default:
      return 400;
  }
}

json error_object(ErrorCode code, const std::string& message) {
  return {{"code", to_string(code)}, {"message", message}};
}

std::string request_id(const json& request) {
  if (!request.is_object()) bad("request must be an object");
  auto it = request.find("id");
  if (it == request.end()) bad("missing field 'id'");
  if (!it->is_string()) bad("field 'id' must be a string");
  return it->get<std::string>();
}

bool structure_only(const json& request) {
  auto it = request.find("structure_only");
  if (it == request.end()) return false;
  if (!it->is_boolean()) bad("field 'structure_only' must be a boolean");
  return it->get<bool>();
}

long long now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

RewardConfig request_config(const json& request, const RewardConfig& base) {
  RewardConfig cfg = base;
  if (auto it = request.find("config"); it != request.end()) apply_reward_overrides(cfg, *it);
  cfg.validate();
  return cfg;
}

std::vector<TestCase> request_tests(const json& request) {
  auto it = request.find("tests");
  if (it == request.end() || it->is_null()) return {};
  if (!it->is_array()) bad("field 'tests' must be a list");
  std::vector<TestCase> tests;
  for (const auto& t : *it) tests.push_back(test_from_json(t));
  return tests;
}

class RewardService::Admission {
 public:
  explicit Admission(RewardService& svc) : svc_(svc) {
    std::size_t now = ++svc_.in_flight_;
    if (now > svc_.options_.workers + svc_.options_.queue_depth) {
      --svc_.in_flight_;
      throw ServiceBusy("sandbox pool saturated");
    }
    std::size_t peak = svc_.peak_in_flight_.load();
    while (now > peak && !svc_.peak_in_flight_.compare_exchange_weak(peak, now)) {
    }
  }
  ~Admission() { --svc_.in_flight_; }

 private:
  RewardService& svc_;
};

RewardService::RewardService(ProfileRegistry profiles, ServiceOptions options)
    : options_(std::move(options)),
      sandbox_(std::move(profiles), [&] {
        SandboxOptions s = options_.sandbox;
        s.workers = options_.workers;
        return s;
      }()) {
  if (options_.workers == 0) throw Error(ErrorCode::kInvalidConfig, "workers must be >= 1");
  if (options_.batch_cap == 0) throw Error(ErrorCode::kInvalidConfig, "batch cap must be >= 1");
  options_.base_config.validate();
  if (!options_.log_sink.empty() && options_.log_sink != "-") {
    log_file_.open(options_.log_sink, std::ios::app);
    if (!log_file_) {
      throw Error(ErrorCode::kInvalidConfig, "cannot open log sink '" + options_.log_sink + "'");
    }
  }
}

RewardService::~RewardService() { stop(); }

json RewardService::score_admitted(const json& request) {
  const auto start = std::chrono::steady_clock::now();
  std::string id = request_id(request);
  if (auto it = request.find("prompt"); it != request.end() && !it->is_string()) {
    bad("field 'prompt' must be a string");
  }
  auto completion = request.find("completion");
  if (completion == request.end() || !completion->is_string()) {
    bad("field 'completion' must be a string");
  }
  RewardConfig cfg = request_config(request, options_.base_config);
  auto tests = request_tests(request);
  bool only_structure = structure_only(request);
  if (!only_structure && tests.empty()) {
    throw Error(ErrorCode::kInvalidTestCase, "tests must be nonempty for correctness scoring");
  }

  const auto& raw = completion->get_ref<const std::string&>();
  RewardBreakdown b = only_structure ? structure_only_reward(raw, cfg)
                                     : combined_reward(raw, tests, cfg, sandbox_);

  json violations = json::array();
  for (const auto& v : b.structure_report.violations) violations.push_back(to_string(v.kind));
  json verdicts = json::array();
  for (const auto& v : b.verdicts) verdicts.push_back(to_string(v.status));
  json out = {{"id", id}, {"r_struct", b.r_struct}};
  if (b.r_correct) out["r_correct"] = *b.r_correct;
  out["total"] = b.total;
  out["violations"] = violations;
  out["verdicts"] = verdicts;
  out["wall_time_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return out;
}

json RewardService::score(const json& request) {
  Admission admission(*this);
  try {
    json out = score_admitted(request);
    log({{"ts_ms", now_ms()}, {"route", "/score"}, {"response", out}});
    return out;
  } catch (const Error& e) {
    log({{"ts_ms", now_ms()}, {"route", "/score"}, {"error", error_object(e.code(), e.what())}});
    throw;
  }
}

json RewardService::score_batch(const json& requests) {
  if (!requests.is_array()) bad("batch body must be a list of requests");
  if (requests.size() > options_.batch_cap) {
    throw Error(ErrorCode::kBatchTooLarge, "batch of " + std::to_string(requests.size()) +
                                               " exceeds cap " +
                                               std::to_string(options_.batch_cap));
  }
  Admission admission(*this);
  std::vector<json> results(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        results[i] = score_admitted(requests[i]);
      } catch (const Error& e) {
        json item = {{"error", error_object(e.code(), e.what())}};
        if (requests[i].is_object() && requests[i].contains("id")) item["id"] = requests[i]["id"];
        results[i] = std::move(item);
      }
    }
  };
  std::size_t threads = std::min(options_.workers, requests.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  if (threads > 0) worker();
  for (auto& t : pool) t.join();

  json out = json::array();
  for (auto& r : results) {
    log({{"ts_ms", now_ms()}, {"route", "/score_batch"}, {"response", r}});
    out.push_back(std::move(r));
  }
  return out;
}

json RewardService::health() const {
  std::size_t free = sandbox_.pool().free();
  bool busy = free == 0 || in_flight_.load() >= options_.workers + options_.queue_depth;
  return {{"status", busy ? "busy" : "ok"},
          {"sandbox_workers_free", free},
          {"version", generated::kVersion}};
}

void RewardService::log(const json& entry) {
  if (options_.log_sink.empty()) return;
  std::string line = dump_json(entry) + "\n";
  std::lock_guard lock(log_mu_);
  if (options_.log_sink == "-") {
    std::cerr << line << std::flush;
  } else {
    log_file_ << line << std::flush;
  }
}

int RewardService::bind(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  const std::size_t threads = options_.workers + options_.queue_depth + 4;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

  auto handle = [this](const httplib::Request& req, httplib::Response& res, auto&& body_fn) {
    try {
      json body = json::parse(req.body);
      res.set_content(dump_json(body_fn(body)), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(dump_json({{"error", error_object(ErrorCode::kMalformedInput, e.what())}}),
                      "application/json");
    } catch (const Error& e) {
      res.status = http_status(e.code());
      res.set_content(dump_json({{"error", error_object(e.code(), e.what())}}),
                      "application/json");
    } catch (const ServiceBusy& e) {
      res.status = 503;
      res.set_content(dump_json({{"error", {{"code", "ServiceBusy"}, {"message", e.what()}}}}),
                      "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(dump_json({{"error", {{"code", "Internal"}, {"message", e.what()}}}}),
                      "application/json");
    }
  };
  server_->Post("/score", [this, handle](const httplib::Request& req, httplib::Response& res) {
    handle(req, res, [this](const json& b) { return score(b); });
  });
  server_->Post("/score_batch",
                [this, handle](const httplib::Request& req, httplib::Response& res) {
                  handle(req, res, [this](const json& b) { return score_batch(b); });
                });
  server_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(dump_json(health()), "application/json");
  });

  if (port == 0) {
    int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kInvalidConfig, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::kInvalidConfig, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void RewardService::listen() {
  if (!server_) throw Error(ErrorCode::kInvalidConfig, "bind() before listen()");
  server_->listen_after_bind();
}

void RewardService::start() {
  if (!server_) throw Error(ErrorCode::kInvalidConfig, "bind() before start()");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void RewardService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace ta
