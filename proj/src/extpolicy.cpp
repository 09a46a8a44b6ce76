#include "polrank/extpolicy.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include <nlohmann/json.hpp>

#include "polrank/error.hpp"

namespace polrank {

using ordered_json = nlohmann::ordered_json;

std::string to_string(ProtocolErrorKind kind) {
  switch (kind) {
    case ProtocolErrorKind::kSpawnFailed:
      return "spawn_failed";
    case ProtocolErrorKind::kTimeout:
      return "timeout";
    case ProtocolErrorKind::kMalformed:
      return "malformed";
    case ProtocolErrorKind::kOutOfRange:
      return "out_of_range";
    case ProtocolErrorKind::kChildExited:
      return "child_exited";
    case ProtocolErrorKind::kRemoteError:
      return "remote_error";
  }
  return "?";
}

std::string hello_message() { return R"({"type":"hello"})"; }

std::string reset_message(std::uint64_t seed) {
  ordered_json j;
  j["type"] = "reset";
  j["seed"] = seed;
  return j.dump();
}

std::string act_message(const Observation& obs) {
  ordered_json j;
  j["type"] = "act";
  if (obs.kind() == Observation::Kind::kReal) {
    auto r = obs.reals();
    j["obs"] = std::vector<double>(r.begin(), r.end());
  } else {
    auto v = obs.ints();
    j["obs"] = std::vector<int>(v.begin(), v.end());
  }
  return j.dump();
}

std::string shutdown_message() { return R"({"type":"shutdown"})"; }

namespace {

using Clock = std::chrono::steady_clock;

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

// Parses one reply line and checks its type tag.
ordered_json parse_reply(const std::string& line, const char* expected_type, ProtocolErrorKind& error_kind,
                         std::string& error) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const ordered_json::parse_error&) {
    error_kind = ProtocolErrorKind::kMalformed;
    error = "reply is not JSON: " + line;
    return {};
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    error_kind = ProtocolErrorKind::kMalformed;
    error = "reply has no type tag: " + line;
    return {};
  }
  const auto type = j["type"].get<std::string>();
  if (type == "error") {
    error_kind = ProtocolErrorKind::kRemoteError;
    error = "client reported an error: " + (j.contains("message") ? j["message"].dump() : line);
    return {};
  }
  if (type != expected_type) {
    error_kind = ProtocolErrorKind::kMalformed;
    error = std::string("expected a '") + expected_type + "' reply, got: " + line;
    return {};
  }
  error.clear();
  return j;
}

}  // namespace

std::unique_ptr<ProtocolHandle> ProtocolHandle::spawn(const std::vector<std::string>& argv,
                                                      int handshake_timeout_ms) {
  if (argv.empty()) throw ProtocolError(ProtocolErrorKind::kSpawnFailed, "spawn failed: empty command line");
  ::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(err_pipe, O_CLOEXEC) != 0) {
    throw ProtocolError(ProtocolErrorKind::kSpawnFailed, std::string("spawn failed: pipe: ") + std::strerror(errno));
  }
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    throw ProtocolError(ProtocolErrorKind::kSpawnFailed, std::string("spawn failed: fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::execvp(args[0], args.data());
    const std::string msg = std::string("exec ") + args[0] + ": " + std::strerror(errno) + "\n";
    [[maybe_unused]] auto n = ::write(STDERR_FILENO, msg.data(), msg.size());
    ::_exit(127);
  }

  std::unique_ptr<ProtocolHandle> h(new ProtocolHandle());
  h->pid_ = pid;
  h->to_child_ = in_pipe[1];
  h->from_child_ = out_pipe[0];
  h->child_err_ = err_pipe[0];
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  ::fcntl(h->child_err_, F_SETFL, ::fcntl(h->child_err_, F_GETFL) | O_NONBLOCK);

  try {
    h->send(hello_message());
    const std::string line = h->receive(handshake_timeout_ms);
    ProtocolErrorKind kind{};
    std::string error;
    auto j = parse_reply(line, "spec", kind, error);
    if (!error.empty()) h->fail(kind, "malformed handshake: " + error, line);
    if (!j.contains("actions") || !j["actions"].is_number_integer() || j["actions"].get<long long>() < 1) {
      h->fail(ProtocolErrorKind::kMalformed, "malformed handshake: spec needs an integer 'actions' >= 1: " + line, line);
    }
    h->action_count_ = j["actions"].get<int>();
  } catch (const ProtocolError& e) {
    const std::string err = h->stderr_text();
    throw ProtocolError(ProtocolErrorKind::kSpawnFailed,
                        std::string("spawn failed: ") + e.what() + (err.empty() ? "" : "; child stderr: " + err),
                        e.raw_reply());
  }
  return h;
}

ProtocolHandle::~ProtocolHandle() {
  if (!reaped_ && pid_ > 0) {
    if (!broken_) {
      try {
        shutdown();
      } catch (...) {
      }
    }
    terminate();
  }
  close_fd(to_child_);
  close_fd(from_child_);
  close_fd(child_err_);
}

void ProtocolHandle::fail(ProtocolErrorKind kind, const std::string& message, const std::string& raw) {
  broken_ = true;
  throw ProtocolError(kind, message, raw);
}

void ProtocolHandle::send(const std::string& line) {
  std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ProtocolErrorKind::kChildExited, "child closed its input (" + exit_description() + ")");
    }
    off += static_cast<std::size_t>(n);
  }
}

void ProtocolHandle::drain_stderr() {
  if (child_err_ < 0) return;
  char buf[4096];
  for (;;) {
    const ssize_t n = ::read(child_err_, buf, sizeof buf);
    if (n > 0) {
      err_buffer_.append(buf, static_cast<std::size_t>(n));
      continue;
    }
    if (n == 0) close_fd(child_err_);
    return;
  }
}

std::string ProtocolHandle::stderr_text() {
  drain_stderr();
  return err_buffer_;
}

std::string ProtocolHandle::receive(int timeout_ms) {
  const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
  for (;;) {
    const auto nl = out_buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = out_buffer_.substr(0, nl);
      out_buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) {
      terminate();
      fail(ProtocolErrorKind::kTimeout, "no reply within " + std::to_string(timeout_ms) + " ms", out_buffer_);
    }
    pollfd fds[2] = {{from_child_, POLLIN, 0}, {child_err_, POLLIN, 0}};
    const int rc = ::poll(fds, child_err_ >= 0 ? 2 : 1, static_cast<int>(left));
    if (rc < 0) {
      if (errno == EINTR) continue;
      fail(ProtocolErrorKind::kChildExited, std::string("poll: ") + std::strerror(errno));
    }
    if (child_err_ >= 0 && fds[1].revents != 0) drain_stderr();
    if (fds[0].revents != 0) {
      char buf[4096];
      const ssize_t n = ::read(from_child_, buf, sizeof buf);
      if (n > 0) {
        out_buffer_.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0) {
        const std::string partial = out_buffer_;
        fail(ProtocolErrorKind::kChildExited, "child closed its output (" + exit_description() + ")", partial);
      } else if (errno != EINTR) {
        fail(ProtocolErrorKind::kChildExited, std::string("read: ") + std::strerror(errno));
      }
    }
  }
}

std::string ProtocolHandle::exit_description() {
  if (!reaped_) {
    // Give a dying child a moment to be reaped so its status can be reported.
    for (int i = 0; i < 50 && !reaped_; ++i) {
      const pid_t r = ::waitpid(pid_, &wait_status_, WNOHANG);
      if (r == pid_) {
        reaped_ = true;
      } else {
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
      }
    }
  }
  if (!reaped_) return "child still running";
  if (WIFEXITED(wait_status_)) return "exit status " + std::to_string(WEXITSTATUS(wait_status_));
  if (WIFSIGNALED(wait_status_)) return "killed by signal " + std::to_string(WTERMSIG(wait_status_));
  return "child ended";
}

void ProtocolHandle::terminate() {
  if (reaped_ || pid_ <= 0) return;
  ::kill(pid_, SIGKILL);
  if (::waitpid(pid_, &wait_status_, 0) == pid_) reaped_ = true;
}

void ProtocolHandle::reset(std::uint64_t seed, int timeout_ms) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (broken_) throw ProtocolError(ProtocolErrorKind::kChildExited, "handle unusable after an earlier error");
  send(reset_message(seed));
  const std::string line = receive(timeout_ms);
  ProtocolErrorKind kind{};
  std::string error;
  parse_reply(line, "ok", kind, error);
  if (!error.empty()) fail(kind, error, line);
}

ActionId ProtocolHandle::act(const Observation& obs, int timeout_ms) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (broken_) throw ProtocolError(ProtocolErrorKind::kChildExited, "handle unusable after an earlier error");
  send(act_message(obs));
  const std::string line = receive(timeout_ms);
  ProtocolErrorKind kind{};
  std::string error;
  auto j = parse_reply(line, "action", kind, error);
  if (!error.empty()) fail(kind, error, line);
  if (!j.contains("id") || !j["id"].is_number_integer()) fail(ProtocolErrorKind::kMalformed, "action reply needs an integer 'id': " + line, line);
  const auto id = j["id"].get<long long>();
  if (id < 0 || id >= action_count_) {
    // The stream is still in lockstep, so the handle stays usable.
    throw ProtocolError(ProtocolErrorKind::kOutOfRange,
                        "action " + std::to_string(id) + " outside [0, " + std::to_string(action_count_) + ")", line);
  }
  return static_cast<ActionId>(id);
}

void ProtocolHandle::shutdown() {
  std::lock_guard<std::mutex> lock(mutex_);
  if (reaped_) return;
  if (!broken_) {
    try {
      send(shutdown_message());
    } catch (const ProtocolError&) {
    }
  }
  close_fd(to_child_);
  for (int i = 0; i < 500 && !reaped_; ++i) {
    if (::waitpid(pid_, &wait_status_, WNOHANG) == pid_) {
      reaped_ = true;
    } else {
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }
  terminate();
  broken_ = true;
}

ExternalPolicy::ExternalPolicy(std::unique_ptr<ProtocolHandle> handle, int act_timeout_ms, std::string name)
    : handle_(std::move(handle)), act_timeout_ms_(act_timeout_ms), name_(std::move(name)) {
  if (!handle_) throw ContractViolation("external policy: null protocol handle");
}

void ExternalPolicy::begin_episode(std::uint64_t seed) {
  step_ = 0;
  handle_->reset(seed, act_timeout_ms_);
}

ActionId ExternalPolicy::act(const Observation& obs) {
  const std::uint64_t step = step_++;
  try {
    return handle_->act(obs, act_timeout_ms_);
  } catch (const ProtocolError& e) {
    const std::string msg = "step " + std::to_string(step) + ": " + e.what();
    if (e.kind() == ProtocolErrorKind::kOutOfRange) throw ContractViolation(msg);
    throw ProtocolError(e.kind(), msg, e.raw_reply());
  }
}

PolicyHandle external_policy(std::unique_ptr<ProtocolHandle> handle, int act_timeout_ms) {
  return std::make_shared<ExternalPolicy>(std::move(handle), act_timeout_ms);
}

}  // namespace polrank
