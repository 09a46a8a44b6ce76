#pragma once

#include <sys/types.h>

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "polrank/core.hpp"
#include "polrank/policies.hpp"

namespace polrank {

inline constexpr int kDefaultHandshakeTimeoutMs = 5000;
inline constexpr int kDefaultActTimeoutMs = 1000;

enum class ProtocolErrorKind { kSpawnFailed, kTimeout, kMalformed, kOutOfRange, kChildExited, kRemoteError };

std::string to_string(ProtocolErrorKind kind);

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ProtocolErrorKind kind, const std::string& message, std::string raw_reply = {})
      : std::runtime_error(message), kind_(kind), raw_reply_(std::move(raw_reply)) {}

  ProtocolErrorKind kind() const { return kind_; }
  // The offending line as received, when there was one.
  const std::string& raw_reply() const { return raw_reply_; }

 private:
  ProtocolErrorKind kind_;
  std::string raw_reply_;
};

/// Host end of the newline-delimited JSON protocol over a child's stdin and
/// stdout. Single-owner: requests are serialized, and after a timeout or a
/// malformed reply the handle refuses further requests.
class ProtocolHandle {
 public:
  /// Starts argv[0] (PATH lookup) and completes the hello/spec handshake.
  /// Every handshake failure is reported as kSpawnFailed with the child's
  /// stderr appended.
  static std::unique_ptr<ProtocolHandle> spawn(const std::vector<std::string>& argv,
                                               int handshake_timeout_ms = kDefaultHandshakeTimeoutMs);

  ProtocolHandle(const ProtocolHandle&) = delete;
  ProtocolHandle& operator=(const ProtocolHandle&) = delete;
  ~ProtocolHandle();

  int action_count() const { return action_count_; }
  pid_t pid() const { return pid_; }

  void reset(std::uint64_t seed, int timeout_ms = kDefaultActTimeoutMs);
  ActionId act(const Observation& obs, int timeout_ms = kDefaultActTimeoutMs);
  // Sends shutdown and reaps the child; kills it if it does not exit promptly.
  void shutdown();

  // Child stderr captured so far.
  std::string stderr_text();

 private:
  ProtocolHandle() = default;

  void send(const std::string& line);
  std::string receive(int timeout_ms);
  void drain_stderr();
  void terminate();
  std::string exit_description();
  [[noreturn]] void fail(ProtocolErrorKind kind, const std::string& message, const std::string& raw = {});

  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  int child_err_ = -1;
  int action_count_ = 0;
  bool broken_ = false;
  bool reaped_ = false;
  int wait_status_ = 0;
  std::string out_buffer_;
  std::string err_buffer_;
  std::mutex mutex_;
};

/// Serialized messages, exactly as written to the wire (without the newline).
std::string hello_message();
std::string reset_message(std::uint64_t seed);
std::string act_message(const Observation& obs);
std::string shutdown_message();

/// A policy answered by a protocol child. begin_episode forwards the seed in
/// a reset message. Not shareable across concurrent episodes.
class ExternalPolicy : public Policy {
 public:
  explicit ExternalPolicy(std::unique_ptr<ProtocolHandle> handle, int act_timeout_ms = kDefaultActTimeoutMs,
                          std::string name = "external");

  std::string name() const override { return name_; }
  int action_count() const override { return handle_->action_count(); }
  // Protocol errors gain a "step N: " prefix. An out-of-range reply becomes a
  // ContractViolation.
  ActionId act(const Observation& obs) override;
  void begin_episode(std::uint64_t seed) override;
  bool shareable() const override { return false; }

  ProtocolHandle& handle() { return *handle_; }

 private:
  std::unique_ptr<ProtocolHandle> handle_;
  int act_timeout_ms_;
  std::string name_;
  std::uint64_t step_ = 0;
};

PolicyHandle external_policy(std::unique_ptr<ProtocolHandle> handle, int act_timeout_ms = kDefaultActTimeoutMs);

}  // namespace polrank
