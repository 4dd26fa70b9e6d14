#include "exr/gateway/server.hpp"

#include <deque>

#include <boost/asio/bind_executor.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/asio/write.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "exr/error.hpp"
#include "exr/gateway/log.hpp"

namespace exr::gateway {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using Strand = asio::strand<asio::io_context::executor_type>;

/// Shared write side: drains the session outbox one frame at a time and
/// closes the transport once the session is closed and drained.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(Gateway& gateway, Strand strand) : gateway_(gateway), strand_(std::move(strand)) {}
  virtual ~Connection() = default;

  virtual void start() = 0;

  /// Any thread.
  void close() {
    asio::post(strand_, [self = shared_from_this()] { self->finish(); });
  }

  /// Only once the I/O threads have stopped: drops the socket without any
  /// closing handshake.
  virtual void abort_transport() = 0;

 protected:
  void open_session(const std::string& peer) {
    session_ = gateway_.open_session(peer);
    std::weak_ptr<Connection> weak = shared_from_this();
    session_->set_wakeup([weak] {
      if (auto self = weak.lock()) asio::post(self->strand_, [self] { self->pump(); });
    });
    pump();
  }

  /// Strand only.
  void pump() {
    if (writing_ || done_ || !session_) return;
    auto frame = session_->pop(std::chrono::milliseconds(0));
    if (!frame) {
      if (session_->closed()) finish();
      return;
    }
    writing_ = true;
    auto bytes = std::make_shared<std::string>(encode_frame(*frame));
    write_bytes(bytes, [self = shared_from_this(), bytes](beast::error_code ec) {
      self->writing_ = false;
      if (ec) {
        self->finish();
        return;
      }
      self->pump();
    });
  }

  /// A failed read: the peer went away or broke framing.
  void read_failed(beast::error_code ec) {
    if (ec && ec != asio::error::eof && ec != asio::error::operation_aborted && ec != websocket::error::closed) {
      log(LogLevel::Debug, "read error: " + ec.message());
    }
    finish();
  }

  void dispatch(const Frame& frame) { gateway_.handle(session_, frame); }
  void reject(const Error& e) { gateway_.protocol_error(*session_, e); }
  bool session_closed() const { return !session_ || session_->closed(); }

  void finish() {
    if (done_) return;
    done_ = true;
    if (session_) {
      session_->set_wakeup({});
      gateway_.close_session(*session_);
    }
    shutdown_transport();
  }

  virtual void write_bytes(std::shared_ptr<std::string> bytes, std::function<void(beast::error_code)> done) = 0;
  virtual void shutdown_transport() = 0;

  Gateway& gateway_;
  Strand strand_;
  std::shared_ptr<ClientSession> session_;
  bool writing_ = false;
  bool done_ = false;
};

namespace {

std::string peer_name(const tcp::socket& s) {
  beast::error_code ec;
  const auto ep = s.remote_endpoint(ec);
  return ec ? std::string("unknown") : ep.address().to_string() + ":" + std::to_string(ep.port());
}

class TcpConnection final : public Connection {
 public:
  TcpConnection(Gateway& gateway, tcp::socket socket, Strand strand)
      : Connection(gateway, strand), socket_(std::move(socket)) {}

  void start() override {
    asio::post(strand_, [self = std::static_pointer_cast<TcpConnection>(shared_from_this())] {
      self->open_session(peer_name(self->socket_));
      self->read();
    });
  }

 private:
  void read() {
    if (done_ || session_closed()) return;
    socket_.async_read_some(asio::buffer(buf_),
                            asio::bind_executor(strand_, [self = std::static_pointer_cast<TcpConnection>(
                                                              shared_from_this())](beast::error_code ec, std::size_t n) {
                              self->on_read(ec, n);
                            }));
  }

  void on_read(beast::error_code ec, std::size_t n) {
    if (ec) return read_failed(ec);
    reader_.feed(std::string_view(buf_.data(), n));
    try {
      while (!session_closed()) {
        auto frame = reader_.next();
        if (!frame) break;
        dispatch(*frame);
      }
    } catch (const Error& e) {
      reject(e);
      return;
    }
    read();
  }

  void write_bytes(std::shared_ptr<std::string> bytes, std::function<void(beast::error_code)> done) override {
    asio::async_write(socket_, asio::buffer(*bytes),
                      asio::bind_executor(strand_, [done](beast::error_code ec, std::size_t) { done(ec); }));
  }

  void shutdown_transport() override {
    beast::error_code ec;
    socket_.shutdown(tcp::socket::shutdown_both, ec);
    socket_.close(ec);
  }

  void abort_transport() override { shutdown_transport(); }

  tcp::socket socket_;
  std::array<char, 64 * 1024> buf_{};
  FrameReader reader_;
};

class WsConnection final : public Connection {
 public:
  WsConnection(Gateway& gateway, tcp::socket socket, Strand strand)
      : Connection(gateway, strand), ws_(std::move(socket)) {}

  void start() override {
    asio::post(strand_, [self = shared()] { self->read_upgrade(); });
  }

 private:
  std::shared_ptr<WsConnection> shared() { return std::static_pointer_cast<WsConnection>(shared_from_this()); }

  void read_upgrade() {
    http::async_read(ws_.next_layer(), http_buf_, request_,
                     asio::bind_executor(strand_, [self = shared()](beast::error_code ec, std::size_t) {
                       if (ec) return self->read_failed(ec);
                       self->on_upgrade();
                     }));
  }

  void on_upgrade() {
    const bool is_ws = websocket::is_upgrade(request_);
    if (!is_ws || request_.target() != "/ws") {
      auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found, request_.version());
      res->set(http::field::content_type, "text/plain");
      res->body() = "websocket endpoint is /ws\n";
      res->prepare_payload();
      http::async_write(ws_.next_layer(), *res,
                        asio::bind_executor(strand_, [self = shared(), res](beast::error_code, std::size_t) {
                          self->done_ = true;
                          self->shutdown_transport();
                        }));
      return;
    }
    ws_.binary(true);
    ws_.read_message_max(kMaxPayloadBytes + kFrameHeaderBytes);
    ws_.async_accept(request_, asio::bind_executor(strand_, [self = shared()](beast::error_code ec) {
                       if (ec) return self->read_failed(ec);
                       self->open_session(peer_name(self->ws_.next_layer()));
                       self->read();
                     }));
  }

  void read() {
    if (done_ || session_closed()) return;
    ws_.async_read(msg_, asio::bind_executor(strand_, [self = shared()](beast::error_code ec, std::size_t) {
                     self->on_message(ec);
                   }));
  }

  void on_message(beast::error_code ec) {
    if (ec) return read_failed(ec);
    const auto data = beast::buffers_to_string(msg_.data());
    msg_.consume(msg_.size());
    try {
      if (!ws_.got_binary()) throw Error(Errc::BadMagic, "text messages are not frames");
      std::size_t used = 0;
      auto frame = decode_frame(data, &used);
      if (used != data.size()) throw Error(Errc::BadMagic, "one frame per WebSocket message");
      dispatch(frame);
    } catch (const Error& e) {
      reject(e);
      return;
    }
    read();
  }

  void write_bytes(std::shared_ptr<std::string> bytes, std::function<void(beast::error_code)> done) override {
    ws_.async_write(asio::buffer(*bytes),
                    asio::bind_executor(strand_, [done](beast::error_code ec, std::size_t) { done(ec); }));
  }

  void shutdown_transport() override {
    if (ws_.is_open() && !closing_) {
      closing_ = true;
      ws_.async_close(websocket::close_code::normal,
                      asio::bind_executor(strand_, [self = shared()](beast::error_code) {
                        beast::error_code ec;
                        self->ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
                        self->ws_.next_layer().close(ec);
                      }));
      return;
    }
    abort_transport();
  }

  void abort_transport() override {
    beast::error_code ec;
    ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
    ws_.next_layer().close(ec);
  }

  websocket::stream<tcp::socket> ws_;
  beast::flat_buffer http_buf_;
  http::request<http::string_body> request_;
  beast::flat_buffer msg_;
  bool closing_ = false;
};

tcp::acceptor make_acceptor(asio::io_context& ioc, const std::string& address, std::uint16_t port,
                            const char* what) {
  beast::error_code ec;
  const auto addr = asio::ip::make_address(address, ec);
  if (ec) throw Error(Errc::ConfigError, "bad bind address '" + address + "'");
  tcp::acceptor acc(ioc);
  const tcp::endpoint ep(addr, port);
  acc.open(ep.protocol(), ec);
  if (!ec) acc.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(ep, ec);
  if (!ec) acc.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error(Errc::ConfigError,
                std::string("cannot listen for ") + what + " on " + address + ":" + std::to_string(port) + ": " +
                    ec.message());
  }
  return acc;
}

}  // namespace

Server::Server(Gateway& gateway, const std::string& bind_address, std::uint16_t tcp_port, std::uint16_t ws_port,
               std::size_t threads)
    : gateway_(gateway),
      tcp_acceptor_(make_acceptor(ioc_, bind_address, tcp_port, "tcp")),
      ws_acceptor_(make_acceptor(ioc_, bind_address, ws_port, "websocket")) {
  tcp_port_ = tcp_acceptor_.local_endpoint().port();
  ws_port_ = ws_acceptor_.local_endpoint().port();
  accept_tcp();
  accept_ws();
  for (std::size_t i = 0; i < std::max<std::size_t>(1, threads); ++i) {
    threads_.emplace_back([this] { ioc_.run(); });
  }
}

Server::~Server() {
  stop();
}

void Server::track(const std::shared_ptr<Connection>& conn) {
  std::lock_guard lock(mu_);
  std::erase_if(connections_, [](const auto& w) { return w.expired(); });
  connections_.push_back(conn);
}

void Server::accept_tcp() {
  tcp_acceptor_.async_accept(ioc_, [this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    auto strand = asio::make_strand(ioc_);
    auto conn = std::make_shared<TcpConnection>(gateway_, std::move(socket), strand);
    track(conn);
    conn->start();
    accept_tcp();
  });
}

void Server::accept_ws() {
  ws_acceptor_.async_accept(ioc_, [this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    auto strand = asio::make_strand(ioc_);
    auto conn = std::make_shared<WsConnection>(gateway_, std::move(socket), strand);
    track(conn);
    conn->start();
    accept_ws();
  });
}

void Server::stop() {
  std::vector<std::shared_ptr<Connection>> open;
  {
    std::lock_guard lock(mu_);
    if (stopped_) return;
    stopped_ = true;
    for (auto& w : connections_) {
      if (auto c = w.lock()) open.push_back(std::move(c));
    }
    connections_.clear();
  }
  asio::post(ioc_, [this] {
    beast::error_code ec;
    tcp_acceptor_.close(ec);
    ws_acceptor_.close(ec);
  });
  for (auto& c : open) c->close();
  // Give closing handshakes a moment, then stop regardless.
  std::thread stopper([this] {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    ioc_.stop();
  });
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  stopper.join();
  // Peers that did not finish the closing handshake in time.
  for (auto& c : open) c->abort_transport();
}

}  // namespace exr::gateway
