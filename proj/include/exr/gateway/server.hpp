#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>

#include "exr/gateway/gateway.hpp"

namespace exr::gateway {

class Connection;

/// Network front end: raw TCP and WebSocket `/ws` listeners carrying the same
/// frames (one frame per binary WebSocket message). Each connection is one
/// session; its reads and writes run on one strand, and the next request is
/// read only after the previous one was handled.
class Server {
 public:
  /// Binds both listeners. Port 0 picks a free port. Throws Error{ConfigError}
  /// when a port cannot be bound.
  Server(Gateway& gateway, const std::string& bind_address, std::uint16_t tcp_port, std::uint16_t ws_port,
         std::size_t threads = 4);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t tcp_port() const { return tcp_port_; }
  std::uint16_t ws_port() const { return ws_port_; }

  /// Closes the listeners and every connection, then joins the I/O threads.
  void stop();

 private:
  void accept_tcp();
  void accept_ws();
  void track(const std::shared_ptr<Connection>& conn);

  Gateway& gateway_;
  boost::asio::io_context ioc_;
  boost::asio::ip::tcp::acceptor tcp_acceptor_;
  boost::asio::ip::tcp::acceptor ws_acceptor_;
  std::uint16_t tcp_port_ = 0;
  std::uint16_t ws_port_ = 0;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::vector<std::weak_ptr<Connection>> connections_;
  bool stopped_ = false;
};

}  // namespace exr::gateway
