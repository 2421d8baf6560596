#pragma once

// Live service: one thread owns the Simulation and steps it; an Asio thread
// runs the WebSocket sessions. Client commands reach the simulation only
// through the CommandQueue; snapshots go the other way as immutable strings,
// at most 30 per second of wall time.

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <deque>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "acat/gateway/protocol.hpp"
#include "acat/kernel.hpp"

namespace acat::gateway {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

struct ServeOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  double speed = 1.0;          // simulated seconds per wall second; <= 0 runs unpaced
  bool exit_on_complete = false;
  std::chrono::milliseconds snapshot_interval{34};  // just under 30 Hz
};

// Paces simulated time against the wall clock. The only wall-clock reader in
// the project; it never touches simulated timestamps.
class SpeedGovernor {
 public:
  explicit SpeedGovernor(double speed) : speed_(speed) {}

  void pace(SimTime sim_now) {
    if (speed_ <= 0) return;
    const auto wall = std::chrono::steady_clock::now();
    if (!anchored_) {
      anchored_ = true;
      wall_anchor_ = wall;
      sim_anchor_ = sim_now;
      return;
    }
    const auto target = wall_anchor_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                           std::chrono::duration<double, std::micro>(
                                               static_cast<double>((sim_now - sim_anchor_).count()) / speed_));
    if (target - wall > std::chrono::milliseconds(2)) std::this_thread::sleep_until(target);
  }

  // Call after an idle wait so the pause is not made up for later.
  void reanchor() { anchored_ = false; }

 private:
  double speed_;
  bool anchored_ = false;
  std::chrono::steady_clock::time_point wall_anchor_;
  SimTime sim_anchor_{0};
};

class Server;

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, Server& server) : ws_(std::move(socket)), server_(server) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(beast::bind_front_handler(&Session::on_accept, shared_from_this()));
  }

  // Thread-safe: hops onto the session's executor.
  void send(std::shared_ptr<const std::string> text, bool is_snapshot) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text), is_snapshot] {
      self->enqueue(std::move(text), is_snapshot);
    });
  }

  void close() {
    asio::post(ws_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      self->ws_.next_layer().socket().shutdown(tcp::socket::shutdown_both, ec);
      self->ws_.next_layer().socket().close(ec);
    });
  }

 private:
  void on_accept(beast::error_code ec);
  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&Session::on_read, shared_from_this()));
  }
  void on_read(beast::error_code ec, std::size_t);

  void enqueue(std::shared_ptr<const std::string> text, bool is_snapshot) {
    if (!open_) return;
    // A slow reader only ever has the newest snapshot waiting.
    if (is_snapshot && outbox_.size() > 1 && outbox_.back().second) outbox_.back().first = std::move(text);
    else outbox_.emplace_back(std::move(text), is_snapshot);
    if (outbox_.size() == 1) do_write();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(*outbox_.front().first),
                    beast::bind_front_handler(&Session::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      open_ = false;
      outbox_.clear();
      return;
    }
    outbox_.pop_front();
    if (!outbox_.empty()) do_write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Server& server_;
  beast::flat_buffer buffer_;
  std::deque<std::pair<std::shared_ptr<const std::string>, bool>> outbox_;
  bool open_ = false;
};

class Server {
 public:
  Server(sim::Scenario scenario, ServeOptions options)
      : sim_(std::move(scenario)), options_(std::move(options)), acceptor_(ioc_) {}

  ~Server() { shutdown(); }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts accepting. Throws IOError when the port is unavailable.
  void listen() {
    beast::error_code ec;
    const auto address = asio::ip::make_address(options_.host, ec);
    if (ec) throw IOError("bad listen address '" + options_.host + "'");
    const tcp::endpoint endpoint{address, options_.port};
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw IOError("cannot listen on " + options_.host + ":" + std::to_string(options_.port) + ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
  }

  unsigned short port() const { return port_; }

  // Runs the simulation on the calling thread until stop(), or until the run
  // rests when exit_on_complete is set. At rest it waits for commands.
  sim::RunResult run() {
    SpeedGovernor governor(options_.speed);
    auto last_publish = std::chrono::steady_clock::now() - options_.snapshot_interval;
    const auto publish = [&](bool force) {
      const auto wall = std::chrono::steady_clock::now();
      if (!force && wall - last_publish < options_.snapshot_interval) return;
      last_publish = wall;
      broadcast(std::make_shared<const std::string>(snapshot_json(sim_).dump()), true);
    };
    std::vector<sim::Injection> live;
    bool resting = false;
    while (!stop_requested_) {
      live.clear();
      for (auto& msg : commands_.drain()) live.push_back(to_injection(msg, sim_.next_tick()));
      if (resting && live.empty()) {
        if (options_.exit_on_complete) break;
        publish(false);
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        governor.reanchor();
        continue;
      }
      if (sim_.timed_out()) break;
      sim_.step(live);
      if (sim_.terminal()) {
        if (!resting) {
          sim_.finish();
          publish(true);
        }
        resting = true;
      } else {
        resting = false;
        publish(false);
      }
      governor.pace(sim_.now());
    }
    publish(true);
    return sim_.finish();
  }

  void stop() { stop_requested_ = true; }

  void shutdown() {
    stop_requested_ = true;
    if (!io_thread_.joinable()) return;
    asio::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      std::lock_guard lock(sessions_mutex_);
      for (auto& weak : sessions_)
        if (auto s = weak.lock()) s->close();
    });
    // Give the close handlers a moment, then stop the loop outright.
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    ioc_.stop();
    io_thread_.join();
  }

  const sim::Simulation& simulation() const { return sim_; }
  sim::EventLog& log() { return sim_.log(); }
  CommandQueue& commands() { return commands_; }

  // Session hooks.
  void on_open(const std::shared_ptr<Session>& s) {
    {
      std::lock_guard lock(sessions_mutex_);
      sessions_.insert(s);
    }
    std::shared_ptr<const std::string> latest;
    {
      std::lock_guard lock(latest_mutex_);
      latest = latest_snapshot_;
    }
    if (latest) s->send(latest, true);
  }

  void on_message(const std::shared_ptr<Session>& s, const std::string& text) {
    try {
      auto msg = parse_command(text);
      auto ack = std::make_shared<const std::string>(ack_reply(msg));
      commands_.push(std::move(msg));
      s->send(std::move(ack), false);
    } catch (const ProtocolError& e) {
      s->send(std::make_shared<const std::string>(error_reply(e.what())), false);
    }
  }

  void on_close(const std::shared_ptr<Session>& s) {
    std::lock_guard lock(sessions_mutex_);
    sessions_.erase(s);
  }

 private:
  void do_accept() {
    acceptor_.async_accept(asio::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<Session>(std::move(socket), *this)->start();
      do_accept();
    });
  }

  void broadcast(std::shared_ptr<const std::string> text, bool is_snapshot) {
    if (is_snapshot) {
      std::lock_guard lock(latest_mutex_);
      latest_snapshot_ = text;
    }
    std::lock_guard lock(sessions_mutex_);
    for (auto& weak : sessions_)
      if (auto s = weak.lock()) s->send(text, is_snapshot);
  }

  sim::Simulation sim_;
  ServeOptions options_;
  CommandQueue commands_;
  std::atomic<bool> stop_requested_{false};

  asio::io_context ioc_;
  tcp::acceptor acceptor_;
  std::thread io_thread_;
  unsigned short port_ = 0;

  std::mutex sessions_mutex_;
  std::set<std::weak_ptr<Session>, std::owner_less<std::weak_ptr<Session>>> sessions_;
  std::mutex latest_mutex_;
  std::shared_ptr<const std::string> latest_snapshot_;
};

inline void Session::on_accept(beast::error_code ec) {
  if (ec) return;
  open_ = true;
  server_.on_open(shared_from_this());
  do_read();
}

inline void Session::on_read(beast::error_code ec, std::size_t) {
  if (ec) {
    open_ = false;
    server_.on_close(shared_from_this());
    return;
  }
  const auto text = beast::buffers_to_string(buffer_.data());
  buffer_.consume(buffer_.size());
  if (!ws_.got_text()) {
    send(std::make_shared<const std::string>(error_reply("binary frames are not accepted")), false);
  } else {
    server_.on_message(shared_from_this(), text);
  }
  do_read();
}

}  // namespace acat::gateway
