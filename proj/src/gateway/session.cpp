#include "exr/gateway/session.hpp"

namespace exr::gateway {

std::string_view to_string(SessionState s) noexcept {
  switch (s) {
    case SessionState::AwaitingHello: return "AwaitingHello";
    case SessionState::Ready: return "Ready";
    case SessionState::Closed: return "Closed";
  }
  return "Closed";
}

ClientSession::ClientSession(std::string session_id, std::string peer, FrameTap tap)
    : id_(std::move(session_id)), peer_(std::move(peer)), tap_(std::move(tap)) {}

SessionState ClientSession::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

std::string ClientSession::device_id() const {
  std::lock_guard lock(mu_);
  return device_id_;
}

bool ClientSession::closed() const {
  std::lock_guard lock(mu_);
  return state_ == SessionState::Closed;
}

bool ClientSession::push(Frame frame) {
  std::vector<Frame> one;
  one.push_back(std::move(frame));
  return push_group(std::move(one));
}

bool ClientSession::push_group(std::vector<Frame> frames) {
  std::function<void()> wakeup;
  {
    std::lock_guard lock(mu_);
    if (state_ == SessionState::Closed) return false;
    for (auto& f : frames) {
      if (tap_) tap_(*this, f);
      outbox_.push_back(std::move(f));
    }
    wakeup = wakeup_;
  }
  cv_.notify_all();
  if (wakeup) wakeup();
  return true;
}

std::optional<Frame> ClientSession::pop(std::optional<std::chrono::milliseconds> timeout) {
  std::unique_lock lock(mu_);
  auto ready = [&] { return !outbox_.empty() || state_ == SessionState::Closed; };
  if (timeout) {
    if (!cv_.wait_for(lock, *timeout, ready)) return std::nullopt;
  } else {
    cv_.wait(lock, ready);
  }
  if (outbox_.empty()) return std::nullopt;
  Frame f = std::move(outbox_.front());
  outbox_.pop_front();
  return f;
}

std::vector<Frame> ClientSession::drain() {
  std::lock_guard lock(mu_);
  std::vector<Frame> out(std::make_move_iterator(outbox_.begin()), std::make_move_iterator(outbox_.end()));
  outbox_.clear();
  return out;
}

void ClientSession::close() {
  std::function<void()> wakeup;
  {
    std::lock_guard lock(mu_);
    state_ = SessionState::Closed;
    wakeup = wakeup_;
  }
  cv_.notify_all();
  if (wakeup) wakeup();
}

void ClientSession::set_wakeup(std::function<void()> wakeup) {
  std::lock_guard lock(mu_);
  wakeup_ = std::move(wakeup);
}

void ClientSession::mark_ready(std::string device_id) {
  std::lock_guard lock(mu_);
  if (state_ == SessionState::Closed) return;
  state_ = SessionState::Ready;
  device_id_ = std::move(device_id);
}

}  // namespace exr::gateway
