#include "ta/sandbox.h"

#include <fcntl.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <time.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

namespace ta {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

class ScopedTempDir {
 public:
  explicit ScopedTempDir(const fs::path& root) {
    std::string templ = (root / "ta-run-XXXXXX").string();
    if (::mkdtemp(templ.data()) == nullptr) {
      throw Error(ErrorCode::kSandboxSpawnFailure,
                  "mkdtemp under " + root.string() + ": " + std::strerror(errno));
    }
    path_ = templ;
  }
  ~ScopedTempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScopedTempDir(const ScopedTempDir&) = delete;
  ScopedTempDir& operator=(const ScopedTempDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) {
    throw Error(ErrorCode::kSandboxSpawnFailure, "cannot write " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string resolve_executable(const std::string& program) {
  if (program.find('/') != std::string::npos) return program;
  const char* path_env = std::getenv("PATH");
  std::string_view paths = path_env ? path_env : "/usr/local/bin:/usr/bin:/bin";
  while (!paths.empty()) {
    auto colon = paths.find(':');
    std::string dir(paths.substr(0, colon));
    paths = colon == std::string_view::npos ? std::string_view{} : paths.substr(colon + 1);
    if (dir.empty()) continue;
    std::string candidate = dir + "/" + program;
    if (::access(candidate.c_str(), X_OK) == 0) return candidate;
  }
  throw Error(ErrorCode::kSandboxSpawnFailure, "executable not found: " + program);
}

std::vector<std::string> expand(const std::vector<std::string>& templ, const fs::path& src,
                                const fs::path& bin) {
  std::vector<std::string> out;
  out.reserve(templ.size());
  for (std::string arg : templ) {
    for (auto [key, value] : {std::pair<std::string_view, std::string>{"{src}", src.string()},
                              {"{bin}", bin.string()}}) {
      for (std::size_t pos; (pos = arg.find(key)) != std::string::npos;) {
        arg.replace(pos, key.size(), value);
      }
    }
    out.push_back(std::move(arg));
  }
  return out;
}

struct ProcessLimits {
  std::chrono::milliseconds wall;
  std::size_t memory_bytes;
  std::size_t output_bytes;
  bool isolate_network;
};

struct ProcessResult {
  int exit_code = -1;
  int term_signal = 0;
  bool timed_out = false;
  std::chrono::milliseconds wall{0};
  long max_rss_kb = 0;
  std::string out;
  std::string err;
};

void set_limit(int resource, rlim_t value) {
  struct rlimit rl{value, value};
  ::setrlimit(resource, &rl);
}

// Runs argv inside workdir with stdin/stdout/stderr redirected to files.
// Everything the child needs is prepared before fork so that only
// async-signal-safe calls happen between fork and exec.
ProcessResult run_process(const std::vector<std::string>& args, const fs::path& workdir,
                          std::string_view stdin_text, const ProcessLimits& limits) {
  const std::string exe = resolve_executable(args.at(0));
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  const std::string home = "HOME=" + workdir.string();
  std::vector<std::string> env_storage{"PATH=/usr/local/bin:/usr/bin:/bin", home,
                                       "LANG=C.UTF-8", "PYTHONDONTWRITEBYTECODE=1",
                                       "PYTHONHASHSEED=0"};
  std::vector<char*> envp;
  for (auto& e : env_storage) envp.push_back(e.data());
  envp.push_back(nullptr);

  const fs::path in_path = workdir / ".stdin";
  const fs::path out_path = workdir / ".stdout";
  const fs::path err_path = workdir / ".stderr";
  write_file(in_path, stdin_text);
  const std::string in_s = in_path.string(), out_s = out_path.string(), err_s = err_path.string();
  const std::string dir_s = workdir.string();

  const rlim_t cpu_seconds =
      static_cast<rlim_t>((limits.wall.count() + 999) / 1000) + 1;

  int status_pipe[2];
  if (::pipe2(status_pipe, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::kSandboxSpawnFailure, std::string("pipe: ") + std::strerror(errno));
  }

  const auto start = Clock::now();
  pid_t pid = ::fork();
  if (pid < 0) {
    ::close(status_pipe[0]);
    ::close(status_pipe[1]);
    throw Error(ErrorCode::kSandboxSpawnFailure, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    if (limits.isolate_network) ::unshare(CLONE_NEWNET);
    int in_fd = ::open(in_s.c_str(), O_RDONLY);
    int out_fd = ::open(out_s.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    int err_fd = ::open(err_s.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    if (in_fd < 0 || out_fd < 0 || err_fd < 0 || ::dup2(in_fd, 0) < 0 || ::dup2(out_fd, 1) < 0 ||
        ::dup2(err_fd, 2) < 0 || ::chdir(dir_s.c_str()) != 0) {
      int e = errno;
      (void)!::write(status_pipe[1], &e, sizeof e);
      ::_exit(127);
    }
    for (int fd = 3; fd < 1024; ++fd) {
      if (fd != status_pipe[1]) ::close(fd);
    }
    set_limit(RLIMIT_AS, static_cast<rlim_t>(limits.memory_bytes));
    set_limit(RLIMIT_CPU, cpu_seconds);
    set_limit(RLIMIT_FSIZE, static_cast<rlim_t>(limits.output_bytes));
    set_limit(RLIMIT_CORE, 0);
    ::execve(exe.c_str(), argv.data(), envp.data());
    int e = errno;
    (void)!::write(status_pipe[1], &e, sizeof e);
    ::_exit(127);
  }

  ::close(status_pipe[1]);
  ProcessResult result;
  const auto deadline = start + limits.wall;
  int status = 0;
  struct rusage usage{};
  auto backoff = std::chrono::microseconds(200);
  for (;;) {
    pid_t r = ::wait4(pid, &status, WNOHANG, &usage);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) break;
    if (Clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::wait4(pid, &status, 0, &usage);
      result.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::min(backoff * 2, std::chrono::microseconds(5000));
  }
  result.wall = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
  // Reap anything the candidate left behind in its process group.
  ::kill(-pid, SIGKILL);

  int child_errno = 0;
  ssize_t n = ::read(status_pipe[0], &child_errno, sizeof child_errno);
  ::close(status_pipe[0]);
  if (n == static_cast<ssize_t>(sizeof child_errno)) {
    throw Error(ErrorCode::kSandboxSpawnFailure,
                "cannot start " + exe + ": " + std::strerror(child_errno));
  }

  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  if (WIFSIGNALED(status)) result.term_signal = WTERMSIG(status);
  result.max_rss_kb = usage.ru_maxrss;
  result.out = read_file(out_path);
  result.err = read_file(err_path);
  return result;
}

bool looks_like_oom(const ProcessResult& r, std::size_t limit_bytes) {
  static constexpr std::string_view kMarkers[] = {"MemoryError", "std::bad_alloc",
                                                  "Cannot allocate memory", "out of memory"};
  for (auto m : kMarkers) {
    if (r.err.find(m) != std::string::npos) return true;
  }
  return static_cast<std::size_t>(r.max_rss_kb) * 1024 >= limit_bytes;
}

std::string excerpt(const std::string& s, std::size_t limit) {
  return s.size() <= limit ? s : s.substr(0, limit);
}

}  // namespace

std::string_view to_string(VerdictStatus status) {
  switch (status) {
    case VerdictStatus::kPass: return "Pass";
    case VerdictStatus::kWrongOutput: return "WrongOutput";
    case VerdictStatus::kRuntimeError: return "RuntimeError";
    case VerdictStatus::kTimeout: return "Timeout";
    case VerdictStatus::kMemoryExceeded: return "MemoryExceeded";
    case VerdictStatus::kCompileError: return "CompileError";
  }
  return "Unknown";
}

void TestCase::validate() const {
  if (time_limit.count() <= 0) throw Error(ErrorCode::kInvalidTestCase, "time_limit_ms must be > 0");
  if (memory_limit_bytes == 0) {
    throw Error(ErrorCode::kInvalidTestCase, "memory_limit_bytes must be > 0");
  }
}

LanguageProfile python3_profile() {
  LanguageProfile p;
  p.name = "python3";
  p.source_file = "main.py";
  p.compile_command = {"python3", "-c",
                       "import ast, sys\n"
                       "ast.parse(open(sys.argv[1], encoding='utf-8').read(), sys.argv[1])",
                       "{src}"};
  p.run_command = {"python3", "-B", "{src}"};
  return p;
}

ProfileRegistry ProfileRegistry::with_defaults() {
  ProfileRegistry r;
  r.add(python3_profile());
  return r;
}

void ProfileRegistry::add(LanguageProfile profile) {
  if (profile.name.empty() || profile.run_command.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "profile needs a name and a run command");
  }
  std::string name = profile.name;
  profiles_.insert_or_assign(std::move(name), std::move(profile));
}

const LanguageProfile& ProfileRegistry::find(std::string_view name) const {
  auto it = profiles_.find(name);
  if (it == profiles_.end()) {
    throw Error(ErrorCode::kProfileNotConfigured,
                "language profile not configured: " + std::string(name));
  }
  return it->second;
}

bool ProfileRegistry::contains(std::string_view name) const {
  return profiles_.find(name) != profiles_.end();
}

std::vector<std::string> ProfileRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : profiles_) out.push_back(name);
  return out;
}

WorkerPool::WorkerPool(std::size_t workers) : total_(std::max<std::size_t>(workers, 1)) {}

void WorkerPool::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return in_use_ < total_; });
  ++in_use_;
  peak_ = std::max(peak_, in_use_);
}

void WorkerPool::release() {
  {
    std::lock_guard lock(mu_);
    --in_use_;
  }
  cv_.notify_one();
}

std::size_t WorkerPool::free() const {
  std::lock_guard lock(mu_);
  return total_ - in_use_;
}

std::size_t WorkerPool::in_use() const {
  std::lock_guard lock(mu_);
  return in_use_;
}

std::size_t WorkerPool::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

Sandbox::Sandbox(ProfileRegistry profiles, SandboxOptions options)
    : profiles_(std::move(profiles)), options_(std::move(options)), pool_(options_.workers) {}

std::vector<TestVerdict> Sandbox::run_tests(std::string_view code, std::span<const TestCase> tests,
                                            std::string_view profile_name) const {
  const LanguageProfile& profile = profiles_.find(profile_name);
  if (tests.empty()) throw Error(ErrorCode::kInvalidTestCase, "test suite is empty");
  for (const auto& t : tests) t.validate();

  std::vector<TestVerdict> verdicts;
  verdicts.reserve(tests.size());

  ScopedTempDir build_dir(options_.temp_root);
  const fs::path build_src = build_dir.path() / profile.source_file;
  const fs::path build_bin =
      profile.artifact_file.empty() ? fs::path{} : build_dir.path() / profile.artifact_file;
  write_file(build_src, code);

  if (!profile.compile_command.empty()) {
    ProcessResult compiled;
    {
      WorkerPool::Slot slot(pool_);
      compiled = run_process(expand(profile.compile_command, build_src, build_bin),
                             build_dir.path(), "",
                             {profile.compile_time_limit, std::max(tests[0].memory_limit_bytes,
                                                                   kDefaultMemoryLimit * 4),
                              options_.output_limit_bytes, options_.isolate_network});
    }
    if (compiled.timed_out || compiled.exit_code != 0) {
      for (std::size_t i = 0; i < tests.size(); ++i) {
        TestVerdict v;
        v.status = VerdictStatus::kCompileError;
        v.stdout_excerpt = excerpt(compiled.out, options_.excerpt_bytes);
        v.stderr_excerpt = excerpt(compiled.err, options_.excerpt_bytes);
        v.wall_time = compiled.wall;
        verdicts.push_back(std::move(v));
      }
      return verdicts;
    }
  }

  for (const TestCase& test : tests) {
    ScopedTempDir run_dir(options_.temp_root);
    const fs::path src = run_dir.path() / profile.source_file;
    fs::path bin;
    if (!profile.artifact_file.empty()) {
      bin = run_dir.path() / profile.artifact_file;
      std::error_code ec;
      fs::copy_file(build_bin, bin, ec);
    }

    std::string stdin_text;
    if (const auto* io = std::get_if<IoTest>(&test.kind)) {
      write_file(src, code);
      stdin_text = io->stdin_text;
    } else {
      std::string program(code);
      program += "\n\n";
      program += std::get<AssertTest>(test.kind).check_script;
      program += "\n";
      write_file(src, program);
    }

    ProcessResult r;
    {
      WorkerPool::Slot slot(pool_);
      r = run_process(expand(profile.run_command, src, bin), run_dir.path(), stdin_text,
                      {test.time_limit, test.memory_limit_bytes, options_.output_limit_bytes,
                       options_.isolate_network});
    }

    TestVerdict v;
    v.wall_time = r.wall;
    v.stdout_excerpt = excerpt(r.out, options_.excerpt_bytes);
    v.stderr_excerpt = excerpt(r.err, options_.excerpt_bytes);
    if (r.timed_out || r.term_signal == SIGXCPU) {
      v.status = VerdictStatus::kTimeout;
    } else if (r.exit_code != 0) {
      if (looks_like_oom(r, test.memory_limit_bytes)) {
        v.status = VerdictStatus::kMemoryExceeded;
      } else if (!test.is_io() && r.err.find("AssertionError") != std::string::npos) {
        v.status = VerdictStatus::kWrongOutput;
      } else {
        v.status = VerdictStatus::kRuntimeError;
      }
    } else if (const auto* io = std::get_if<IoTest>(&test.kind)) {
      v.status = compare_io(r.out, io->expected_stdout) ? VerdictStatus::kPass
                                                         : VerdictStatus::kWrongOutput;
    } else {
      v.status = VerdictStatus::kPass;
    }
    verdicts.push_back(std::move(v));
  }
  return verdicts;
}

namespace {

std::vector<std::string_view> normalized_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    std::size_t end = line.find_last_not_of(" \t\r\f\v");
    lines.push_back(end == std::string_view::npos ? std::string_view{} : line.substr(0, end + 1));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace

bool compare_io(std::string_view actual, std::string_view expected) {
  return normalized_lines(actual) == normalized_lines(expected);
}

}  // namespace ta
