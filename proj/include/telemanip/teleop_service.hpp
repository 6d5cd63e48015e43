#pragma once

#include <atomic>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>

#include "telemanip/run_config.hpp"
#include "telemanip/simulation.hpp"

namespace telemanip {

/// Single-slot handoff: store() overwrites, take() empties.
template <typename T>
class LatestValue {
 public:
  void store(T value) {
    std::lock_guard lock(mutex_);
    value_ = std::move(value);
  }

  std::optional<T> take() {
    std::lock_guard lock(mutex_);
    std::optional<T> out = std::move(value_);
    value_.reset();
    return out;
  }

  std::optional<T> peek() const {
    std::lock_guard lock(mutex_);
    return value_;
  }

 private:
  mutable std::mutex mutex_;
  std::optional<T> value_;
};

/// Bounded FIFO whose push() never waits: when full the oldest entry is
/// discarded and counted.
template <typename T>
class DropOldestQueue {
 public:
  explicit DropOldestQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  void push(T value) {
    std::lock_guard lock(mutex_);
    if (items_.size() == capacity_) {
      items_.pop_front();
      ++dropped_;
    }
    items_.push_back(std::move(value));
  }

  std::optional<T> pop() {
    std::lock_guard lock(mutex_);
    if (items_.empty()) return std::nullopt;
    T out = std::move(items_.front());
    items_.pop_front();
    return out;
  }

  void clear() {
    std::lock_guard lock(mutex_);
    items_.clear();
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }

  std::size_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }

  std::size_t capacity() const { return capacity_; }

 private:
  mutable std::mutex mutex_;
  std::deque<T> items_;
  std::size_t capacity_;
  std::size_t dropped_ = 0;
};

/// {"type": "target", "t", "device_x", "device_z", "clutch"}
struct TargetMessage {
  double t = 0.0;
  double device_x = 0.0;
  double device_z = 0.0;
  bool clutch = false;
};

/// {"type": "set_preset", "name"}; name is normalized to upper case.
struct SetPresetMessage {
  std::string name;
};

/// Reason an inbound frame was rejected. code is one of malformed,
/// unknown_type, invalid_field, unknown_preset.
struct InboundError {
  std::string code;
  std::string message;
};

using InboundMessage = std::variant<TargetMessage, SetPresetMessage, InboundError>;

InboundMessage parse_inbound(const std::string& text);

std::string make_state_message(const TickRecord& record, const std::string& preset);
std::string make_config_message(const RunConfig& config);
std::string make_error_message(const std::string& code, const std::string& message);

class TeleopError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TeleopOptions {
  /// Capacity of the outbound state-frame queue.
  std::size_t frame_queue = 8;
  std::string address = "127.0.0.1";
};

/// WebSocket endpoint at /teleop driving a ClosedLoop at the control rate.
/// One operator session at a time; further connections receive a
/// session_busy error and are closed. The loop ticks whether or not a
/// client is connected and never waits on the network: inbound targets go
/// through a latest-value slot, outbound state frames through a drop-oldest
/// queue. Every tick is appended to the session log.
class TeleopService {
 public:
  TeleopService(RunConfig config, TeleopOptions options = {});
  ~TeleopService();

  TeleopService(const TeleopService&) = delete;
  TeleopService& operator=(const TeleopService&) = delete;

  /// Binds config.port (0 picks a free port) and starts the network and
  /// control threads. Throws TeleopError if the port cannot be bound or the
  /// session log cannot be opened.
  void start();

  /// Closes the session, joins both threads and flushes the session log.
  /// Idempotent.
  void stop();

  unsigned short port() const { return port_; }
  std::size_t ticks() const { return ticks_.load(); }
  std::size_t frames_dropped() const { return frames_.dropped(); }
  std::string preset() const;
  bool session_active() const { return session_active_.load(); }

 private:
  struct Network;
  friend struct Network;

  void control_loop();

  RunConfig config_;
  TeleopOptions options_;
  std::unique_ptr<Network> net_;
  std::thread io_thread_;
  std::thread control_thread_;
  unsigned short port_ = 0;
  bool started_ = false;
  std::ofstream log_;

  LatestValue<TargetMessage> latest_target_;
  LatestValue<std::string> pending_preset_;
  DropOldestQueue<std::string> frames_;
  std::atomic<bool> running_{false};
  std::atomic<bool> flush_requested_{false};
  std::atomic<bool> session_active_{false};
  std::atomic<std::size_t> ticks_{0};
  mutable std::mutex preset_mutex_;
  std::string preset_;
};

}  // namespace telemanip
