#pragma once

// HTTP front end for the reward engine: POST /score, POST /score_batch,
// GET /health. Stateless apart from the shared sandbox pool.

#include <atomic>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "ta/formats.h"

namespace httplib {
class Server;
}

namespace ta {

struct ServiceOptions {
  std::size_t workers = 4;
  // Requests allowed to wait for a worker; more than workers + queue_depth
  // concurrent scoring requests get 503.
  std::size_t queue_depth = 16;
  std::size_t batch_cap = 64;
  RewardConfig base_config;
  // Newline-JSON request log. Empty disables logging, "-" is stderr.
  std::string log_sink;
  SandboxOptions sandbox;
};

// Raised when the admission bound is exceeded; maps to 503.
class ServiceBusy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RewardService {
 public:
  RewardService(ProfileRegistry profiles, ServiceOptions options);
  ~RewardService();

  RewardService(const RewardService&) = delete;
  RewardService& operator=(const RewardService&) = delete;

  // Request/response bodies as JSON, without the transport. Throw Error for
  // malformed requests and ServiceBusy when saturated.
  json score(const json& request);
  json score_batch(const json& requests);
  json health() const;

  // Binds to host:port (0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  // listen() on a background thread.
  void start();
  void stop();

  const Sandbox& sandbox() const { return sandbox_; }
  // Most scoring requests in flight at once since construction.
  std::size_t peak_in_flight() const { return peak_in_flight_.load(); }

 private:
  class Admission;

  json score_admitted(const json& request);
  void log(const json& entry);

  ServiceOptions options_;
  Sandbox sandbox_;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_in_flight_{0};
  std::mutex log_mu_;
  std::ofstream log_file_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

// Parses a scoring request's "config" into cfg; exposed so in-process
// callers can reproduce the service's configuration exactly.
RewardConfig request_config(const json& request, const RewardConfig& base);

// The request's tests, validated. Empty when the request has none.
std::vector<TestCase> request_tests(const json& request);

}  // namespace ta
