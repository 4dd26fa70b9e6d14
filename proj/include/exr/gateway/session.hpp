#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "exr/gateway/protocol.hpp"

namespace exr::gateway {

enum class SessionState { AwaitingHello, Ready, Closed };
std::string_view to_string(SessionState s) noexcept;

class ClientSession;
/// Observes every frame queued toward any client.
using FrameTap = std::function<void(const ClientSession&, const Frame&)>;

/// One connected client: handshake state plus a FIFO of outgoing frames that
/// a transport writer drains. Frames pushed as a group are never interleaved
/// with other frames.
class ClientSession {
 public:
  ClientSession(std::string session_id, std::string peer, FrameTap tap = {});

  const std::string& id() const { return id_; }
  const std::string& peer() const { return peer_; }
  SessionState state() const;
  std::string device_id() const;
  bool closed() const;

  /// False when the session is closed; the frame is dropped.
  bool push(Frame frame);
  bool push_group(std::vector<Frame> frames);

  /// Blocks until a frame is available. nullopt once the session is closed
  /// and every queued frame has been taken, or when `timeout` elapses.
  std::optional<Frame> pop(std::optional<std::chrono::milliseconds> timeout = std::nullopt);
  /// Everything queued right now.
  std::vector<Frame> drain();

  /// Stops accepting frames. Frames already queued are still delivered.
  void close();

  /// Called, outside the session lock, after frames are queued or the
  /// session closes. Lets an event-driven transport schedule its writer.
  void set_wakeup(std::function<void()> wakeup);

 private:
  friend class Gateway;
  void mark_ready(std::string device_id);

  const std::string id_;
  const std::string peer_;
  FrameTap tap_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Frame> outbox_;
  std::function<void()> wakeup_;
  SessionState state_ = SessionState::AwaitingHello;
  std::string device_id_;
};

}  // namespace exr::gateway
