/*
 Copyright 2026 The sharedctl Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#ifndef SHAREDCTL_SERVER_HPP
#define SHAREDCTL_SERVER_HPP

#include "sharedctl/session.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <csignal>
#include <chrono>
#include <deque>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace sharedctl {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

/**
 * One WebSocket client bound to one Session. Reads and writes run on the
 * connection's strand; the session's control thread ticks at t_s and posts
 * outbound lines onto that strand.
 */
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, SessionOptions opt, std::function<void(const std::string&)> log)
      : ws_(std::move(socket)), session_(std::move(opt)), log_(std::move(log)) {}

  ~Connection() { stop_control(); }

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(beast::bind_front_handler(&Connection::on_accept, shared_from_this()));
  }

  void shutdown() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      self->ws_.next_layer().close();
    });
    stop_control();
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return log_("handshake failed: " + ec.message());
    open_ = true;
    control_ = std::thread([self = shared_from_this()] { self->control_loop(); });
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      open_ = false;
      session_.connection_lost();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    for (std::string& reply : session_.receive(text)) send(std::move(reply));
    do_read();
  }

  void send(std::string line) {
    line.push_back('\n');
    net::post(ws_.get_executor(), [self = shared_from_this(), line = std::move(line)]() mutable {
      if (!self->open_) return;
      self->queue_.push_back(std::move(line));
      if (self->queue_.size() == 1) self->do_write();
    });
  }

  void do_write() {
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        self->queue_.clear();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->do_write();
    });
  }

  void control_loop() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(session_.options().setup.horizon.t_s));
    auto next = clock::now();
    while (!stop_) {
      next += period;
      std::this_thread::sleep_until(next);
      for (std::string& msg : session_.tick()) send(std::move(msg));
      // A closed connection keeps ticking only until its trial is aborted.
      if (!open_ && session_.phase() == SessionPhase::Idle) break;
    }
  }

  void stop_control() {
    stop_ = true;
    if (control_.joinable() && control_.get_id() != std::this_thread::get_id()) control_.join();
    if (control_.joinable()) control_.detach();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  Session session_;
  std::function<void(const std::string&)> log_;
  std::deque<std::string> queue_;
  std::atomic<bool> open_{false};
  std::atomic<bool> stop_{false};
  std::thread control_;
};

/// Accepts WebSocket clients and gives each its own session.
class Server {
 public:
  Server(SessionOptions base, unsigned short port, const std::string& address = "127.0.0.1",
         std::function<void(const std::string&)> log = [](const std::string&) {})
      : base_(std::move(base)), acceptor_(net::make_strand(ioc_)), log_(std::move(log)) {
    const tcp::endpoint ep(net::ip::make_address(address), port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen(net::socket_base::max_listen_connections);
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  /// Stops the server on SIGINT or SIGTERM.
  void stop_on_signals() {
    signals_.add(SIGINT);
    signals_.add(SIGTERM);
    signals_.async_wait([this](beast::error_code ec, int) {
      if (!ec) stop();
    });
  }

  /// Serves until stop(); blocks the calling thread.
  void run() {
    do_accept();
    ioc_.run();
  }

  void stop() {
    {
      std::lock_guard lock(mu_);
      for (auto& weak : connections_)
        if (auto c = weak.lock()) c->shutdown();
    }
    net::post(acceptor_.get_executor(), [this] {
      beast::error_code ec;
      acceptor_.close(ec);
    });
    ioc_.stop();
  }

 private:
  void do_accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      SessionOptions opt = base_;
      opt.id = base_.id + "-" + std::to_string(++count_);
      log_("session " + opt.id + " connected");
      auto conn = std::make_shared<Connection>(std::move(socket), std::move(opt), log_);
      {
        std::lock_guard lock(mu_);
        connections_.remove_if([](const auto& w) { return w.expired(); });
        connections_.push_back(conn);
      }
      conn->start();
      do_accept();
    });
  }

  SessionOptions base_;
  net::io_context ioc_{1};
  tcp::acceptor acceptor_;
  net::signal_set signals_{ioc_};
  std::function<void(const std::string&)> log_;
  std::mutex mu_;
  std::list<std::weak_ptr<Connection>> connections_;
  int count_ = 0;
};

}  // namespace sharedctl

#endif  // SHAREDCTL_SERVER_HPP
