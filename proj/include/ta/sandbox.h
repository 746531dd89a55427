#pragma once

// Process-isolated execution of candidate programs against test cases.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ta/error.h"

namespace ta {

inline constexpr std::chrono::milliseconds kDefaultTimeLimit{5000};
inline constexpr std::size_t kDefaultMemoryLimit = 256ull * 1024 * 1024;

struct IoTest {
  std::string stdin_text;
  std::string expected_stdout;
};

// The check script is appended to the candidate program; the test passes iff
// the combined program exits successfully.
struct AssertTest {
  std::string check_script;
};

struct TestCase {
  std::variant<IoTest, AssertTest> kind;
  std::chrono::milliseconds time_limit = kDefaultTimeLimit;
  std::size_t memory_limit_bytes = kDefaultMemoryLimit;

  static TestCase io(std::string stdin_text, std::string expected_stdout) {
    return {IoTest{std::move(stdin_text), std::move(expected_stdout)}};
  }
  static TestCase assertion(std::string check_script) {
    return {AssertTest{std::move(check_script)}};
  }

  bool is_io() const { return std::holds_alternative<IoTest>(kind); }
  // Throws Error(kInvalidTestCase) for non-positive limits.
  void validate() const;
};

enum class VerdictStatus {
  kPass,
  kWrongOutput,
  kRuntimeError,
  kTimeout,
  kMemoryExceeded,
  kCompileError,
};

std::string_view to_string(VerdictStatus status);

struct TestVerdict {
  VerdictStatus status = VerdictStatus::kRuntimeError;
  std::string stdout_excerpt;
  std::string stderr_excerpt;
  std::chrono::milliseconds wall_time{0};

  bool passed() const { return status == VerdictStatus::kPass; }
};

// Command templates may use "{src}" (the candidate source file) and "{bin}"
// (a build artifact produced by the compile command, copied into each test's
// working directory).
struct LanguageProfile {
  std::string name;
  std::vector<std::string> run_command;
  // Optional compile-first step. A non-zero exit marks every test CompileError.
  std::vector<std::string> compile_command;
  std::string source_file = "main.py";
  std::string artifact_file;  // the {bin} file name, if the compile step emits one
  std::chrono::milliseconds compile_time_limit{10000};
};

// Python 3 with a syntax-check pass before any test runs.
LanguageProfile python3_profile();

class ProfileRegistry {
 public:
  // Registry with the built-in "python3" profile.
  static ProfileRegistry with_defaults();

  void add(LanguageProfile profile);
  // Throws Error(kProfileNotConfigured).
  const LanguageProfile& find(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, LanguageProfile, std::less<>> profiles_;
};

// Counting semaphore with observability. Bounds the number of concurrently
// running child processes.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers);

  void acquire();
  void release();
  std::size_t total() const { return total_; }
  std::size_t free() const;
  std::size_t in_use() const;
  // Highest simultaneous in_use() value seen since construction.
  std::size_t peak() const;

  class Slot {
   public:
    explicit Slot(WorkerPool& pool) : pool_(&pool) { pool_->acquire(); }
    ~Slot() {
      if (pool_) pool_->release();
    }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    WorkerPool* pool_;
  };

 private:
  const std::size_t total_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_use_ = 0;
  std::size_t peak_ = 0;
};

struct SandboxOptions {
  std::size_t workers = 4;
  // Best effort: the child enters a fresh network namespace when the host
  // permits it.
  bool isolate_network = true;
  std::size_t excerpt_bytes = 4096;
  std::size_t output_limit_bytes = 64ull * 1024 * 1024;
  std::filesystem::path temp_root = std::filesystem::temp_directory_path();
};

class Sandbox {
 public:
  Sandbox(ProfileRegistry profiles, SandboxOptions options = {});

  // One verdict per test, in order. Throws Error(kProfileNotConfigured) for
  // unknown profiles, Error(kInvalidTestCase) for an empty or invalid suite,
  // and Error(kSandboxSpawnFailure) when a child cannot be started at all.
  std::vector<TestVerdict> run_tests(std::string_view code, std::span<const TestCase> tests,
                                     std::string_view profile) const;

  const ProfileRegistry& profiles() const { return profiles_; }
  const SandboxOptions& options() const { return options_; }
  WorkerPool& pool() const { return pool_; }

 private:
  ProfileRegistry profiles_;
  SandboxOptions options_;
  mutable WorkerPool pool_;
};

// True iff the texts are equal line by line after stripping trailing
// whitespace from every line and dropping trailing empty lines.
bool compare_io(std::string_view actual, std::string_view expected);

}  // namespace ta
