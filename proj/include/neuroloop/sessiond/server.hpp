#pragma once

// HTTP + WebSocket front end for live sessions (Boost.Beast).
//
//   POST /sessions            {domain, condition, duration_s?, seed?} -> 201 status
//   GET  /sessions/{id}       status
//   GET  /demos/{id}          demonstration JSONL
//   GET  /sessions/{id}/ws    WebSocket upgrade; JSON text frames
//
// Each session is advanced by its own timer; ticks and client messages for
// one session are serialised by the session mutex.

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <csignal>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "../dataset.hpp"
#include "../optlabel.hpp"
#include "../policybank.hpp"
#include "session.hpp"

namespace neuroloop::sessiond {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  int tick_ms = 100;
  unsigned threads = 2;
  std::string out_dir;  // demonstrations are also written here when set
  std::uint64_t seed = 0;
  std::size_t bank_size = 10;
  SessionConfig defaults;  // domain/condition/duration/seed come per request
  double min_duration_s = kMinDurationS;
  double max_duration_s = kMaxDurationS;
  CalibrationOptions calibration;
};

class Server;

namespace server_detail {

inline nlohmann::json error_message(const std::string& what) { return {{"type", "error"}, {"message", what}}; }

class Socket;

/// A session plus the sockets watching it.
struct Live {
  std::mutex mu;
  std::unique_ptr<Session> session;
  std::unique_ptr<net::steady_timer> timer;
  std::chrono::steady_clock::time_point next_tick;
  std::vector<std::weak_ptr<Socket>> watchers;
};

class Socket : public std::enable_shared_from_this<Socket> {
 public:
  Socket(tcp::socket s, Server& server, std::shared_ptr<Live> live)
      : ws_(std::move(s)), server_(server), live_(std::move(live)) {}

  void accept(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&Socket::on_accept, shared_from_this()));
  }

  /// Thread-safe; frames are written in send order.
  void send(std::string text) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
      self->queue_.push_back(std::move(text));
      if (self->queue_.size() == 1) self->write_next();
    });
  }

  void send(const nlohmann::json& j) { send(j.dump()); }

 private:
  void on_accept(beast::error_code ec);
  void read_next() {
    ws_.async_read(buffer_, beast::bind_front_handler(&Socket::on_read, shared_from_this()));
  }
  void on_read(beast::error_code ec, std::size_t);
  void write_next() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->queue_.clear();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write_next();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  Server& server_;
  std::shared_ptr<Live> live_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket s, Server& server) : stream_(std::move(s)), server_(server) {}
  void run() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }
  void on_read(beast::error_code ec, std::size_t);

  beast::tcp_stream stream_;
  Server& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<http::response<http::string_body>> res_;
};

}  // namespace server_detail

class Server {
 public:
  explicit Server(ServerOptions opt) : opt_(std::move(opt)), ioc_(static_cast<int>(std::max(1u, opt_.threads))),
                                       acceptor_(ioc_) {
    if (opt_.tick_ms < 1) throw UsageError("tick interval must be at least 1 ms");
  }
  ~Server() { stop(); }

  /// Binds, listens and starts the worker threads.
  void start() {
    const tcp::endpoint ep(net::ip::make_address(opt_.address), opt_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    accept();
    for (unsigned i = 0; i < std::max(1u, opt_.threads); ++i) workers_.emplace_back([this] { ioc_.run(); });
  }

  void wait() {
    for (auto& t : workers_)
      if (t.joinable()) t.join();
  }

  void stop() {
    ioc_.stop();
    wait();
    workers_.clear();
  }

  /// SIGINT/SIGTERM stop the server; call before start().
  void stop_on_signals() {
    signals_ = std::make_unique<net::signal_set>(ioc_, SIGINT, SIGTERM);
    signals_->async_wait([this](beast::error_code ec, int) {
      if (!ec) ioc_.stop();
    });
  }

  unsigned short port() const { return port_; }
  const ServerOptions& options() const { return opt_; }

  /// Calibrated bank for a domain, built on first use.
  std::shared_ptr<const PolicyBank> bank(Domain d) {
    std::lock_guard lock(bank_mu_);
    auto& b = banks_[d];
    if (!b) {
      const std::uint64_t s = derive_seed(opt_.seed, 0xBA4BULL, static_cast<std::uint64_t>(d));
      auto bank = build_bank(d, opt_.bank_size, s, opt_.defaults.env);
      auto cal = opt_.calibration;
      cal.injection = opt_.defaults.injection;
      calibrate_bank(bank, derive_seed(s, 0xCA1ULL), opt_.defaults.env, cal);
      b = std::make_shared<const PolicyBank>(std::move(bank));
    }
    return b;
  }

  /// Pre-built banks (e.g. loaded from disk) replace lazily built ones.
  void set_bank(std::shared_ptr<const PolicyBank> b) {
    std::lock_guard lock(bank_mu_);
    banks_[b->domain] = std::move(b);
  }

  /// Creates a session from a POST /sessions body.
  nlohmann::json create(const nlohmann::json& body) {
    if (!body.is_object()) throw ProtocolError("request body must be a JSON object");
    SessionConfig cfg = opt_.defaults;
    try {
      cfg.domain = parse_domain(body.at("domain").get<std::string>());
      cfg.condition = parse_condition(body.at("condition").get<std::string>());
      if (body.contains("duration_s")) cfg.duration_s = body.at("duration_s").get<double>();
      if (body.contains("seed")) cfg.seed = body.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("bad session request: ") + e.what());
    } catch (const UsageError& e) {
      throw ProtocolError(e.what());
    }
    validate(cfg, opt_.min_duration_s, opt_.max_duration_s);
    std::string id;
    {
      std::lock_guard lock(mu_);
      const std::uint64_t n = counter_++;
      char buf[32];
      std::snprintf(buf, sizeof buf, "s%04llu-%08llx", static_cast<unsigned long long>(n),
                    static_cast<unsigned long long>(derive_seed(opt_.seed, 0x51DULL, n) & 0xffffffffULL));
      id = buf;
      if (!body.contains("seed")) cfg.seed = derive_seed(opt_.seed, 0x5EEDULL, n);
    }
    auto live = std::make_shared<server_detail::Live>();
    live->session = std::make_unique<Session>(id, cfg, bank(cfg.domain));
    auto status = live->session->status();
    status["ws"] = "/sessions/" + id + "/ws";
    std::lock_guard lock(mu_);
    sessions_[id] = std::move(live);
    return status;
  }

  std::shared_ptr<server_detail::Live> find(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  /// JSONL of a finalised session's demonstration, or nullopt.
  std::optional<std::string> demo_text(const std::string& demo_id) {
    std::lock_guard lock(mu_);
    auto it = demos_.find(demo_id);
    if (it == demos_.end()) return std::nullopt;
    return it->second;
  }

  /// Applies one client frame; replies go to `from`, broadcasts to watchers.
  void handle_frame(const std::shared_ptr<server_detail::Live>& live, const std::string& text,
                    const std::shared_ptr<server_detail::Socket>& from) {
    std::vector<nlohmann::json> out;
    {
      std::lock_guard lock(live->mu);
      try {
        const auto j = nlohmann::json::parse(text);
        const auto type = j.at("type").get<std::string>();
        auto& s = *live->session;
        if (type == "start") {
          out = s.start();
          schedule(live, true);
        } else if (type == "stop") {
          out = s.stop();
          if (live->timer) live->timer->cancel();
        } else if (type == "action") {
          const auto a = j.at("a").get<std::vector<double>>();
          const double t = j.contains("t") ? j.at("t").get<double>() : 0.0;
          s.submit_action(a, t);
        } else {
          throw ProtocolError("unknown message type '" + type + "'");
        }
      } catch (const nlohmann::json::exception& e) {
        from->send(server_detail::error_message(std::string("malformed message: ") + e.what()));
        return;
      } catch (const Error& e) {
        from->send(server_detail::error_message(e.what()));
        return;
      }
    }
    after(live, out);
  }

  void attach(const std::shared_ptr<server_detail::Live>& live, const std::shared_ptr<server_detail::Socket>& s) {
    std::lock_guard lock(live->mu);
    live->watchers.push_back(s);
    s->send(nlohmann::json{{"type", "phase"}, {"phase", to_string(live->session->phase())}});
  }

  http::response<http::string_body> respond(const http::request<http::string_body>& req) {
    auto reply = [&](http::status st, const std::string& body, const char* type = "application/json") {
      http::response<http::string_body> r{st, req.version()};
      r.set(http::field::content_type, type);
      r.set(http::field::access_control_allow_origin, "*");
      r.keep_alive(req.keep_alive());
      r.body() = body;
      r.prepare_payload();
      return r;
    };
    const std::string target(req.target());
    const std::string path = target.substr(0, target.find('?'));
    try {
      if (req.method() == http::verb::post && path == "/sessions") {
        nlohmann::json body;
        try {
          body = nlohmann::json::parse(req.body());
        } catch (const nlohmann::json::exception&) {
          throw ProtocolError("request body is not JSON");
        }
        return reply(http::status::created, create(body).dump());
      }
      if (req.method() == http::verb::get && path.rfind("/sessions/", 0) == 0) {
        auto live = find(path.substr(10));
        if (!live) return reply(http::status::not_found, server_detail::error_message("unknown session").dump());
        std::lock_guard lock(live->mu);
        return reply(http::status::ok, live->session->status().dump());
      }
      if (req.method() == http::verb::get && path.rfind("/demos/", 0) == 0) {
        auto text = demo_text(path.substr(7));
        if (!text) return reply(http::status::not_found, server_detail::error_message("unknown demonstration").dump());
        return reply(http::status::ok, *text, "application/x-ndjson");
      }
      return reply(http::status::not_found, server_detail::error_message("no route for " + path).dump());
    } catch (const Error& e) {
      return reply(http::status::bad_request, server_detail::error_message(e.what()).dump());
    }
  }

 private:
  void accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket s) {
      if (ec) return;
      std::make_shared<server_detail::HttpConnection>(std::move(s), *this)->run();
      accept();
    });
  }

  // Called with live->mu held.
  void schedule(const std::shared_ptr<server_detail::Live>& live, bool first) {
    const auto period = std::chrono::milliseconds(opt_.tick_ms);
    if (!live->timer) live->timer = std::make_unique<net::steady_timer>(net::make_strand(ioc_));
    live->next_tick = first ? std::chrono::steady_clock::now() + period : live->next_tick + period;
    live->timer->expires_at(live->next_tick);
    live->timer->async_wait([this, live](beast::error_code ec) {
      if (ec) return;
      std::vector<nlohmann::json> out;
      {
        std::lock_guard lock(live->mu);
        auto& s = *live->session;
        if (s.phase() == Phase::ended) return;
        try {
          out = s.tick();
        } catch (const Error& e) {
          out.push_back(server_detail::error_message(e.what()));
        }
        if (s.phase() != Phase::ended) schedule(live, false);
      }
      after(live, out);
    });
  }

  /// Broadcasts messages and stores the demonstration once a session ends.
  void after(const std::shared_ptr<server_detail::Live>& live, const std::vector<nlohmann::json>& out) {
    if (out.empty()) return;
    std::vector<std::shared_ptr<server_detail::Socket>> targets;
    std::optional<std::pair<std::string, std::string>> stored;
    {
      std::lock_guard lock(live->mu);
      for (auto& w : live->watchers)
        if (auto s = w.lock()) targets.push_back(std::move(s));
      auto& s = *live->session;
      if (s.finalized()) {
        std::lock_guard lk(mu_);
        if (!demos_.count(s.demo_id())) {
          std::ostringstream os;
          write_demonstration(s.finalize(), os);
          stored.emplace(s.demo_id(), os.str());
          demos_[s.demo_id()] = os.str();
        }
      }
    }
    if (stored && !opt_.out_dir.empty()) {
      std::filesystem::create_directories(opt_.out_dir);
      std::ofstream f(std::filesystem::path(opt_.out_dir) / (stored->first + ".jsonl"), std::ios::binary);
      f << stored->second;
    }
    for (const auto& m : out) {
      const std::string text = m.dump();
      for (auto& t : targets) t->send(text);
    }
  }

  ServerOptions opt_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::unique_ptr<net::signal_set> signals_;
  unsigned short port_ = 0;
  std::vector<std::thread> workers_;
  std::mutex mu_, bank_mu_;
  std::uint64_t counter_ = 0;
  std::map<std::string, std::shared_ptr<server_detail::Live>> sessions_;
  std::map<std::string, std::string> demos_;
  std::map<Domain, std::shared_ptr<const PolicyBank>> banks_;
};

namespace server_detail {

inline void Socket::on_accept(beast::error_code ec) {
  if (ec) return;
  server_.attach(live_, shared_from_this());
  read_next();
}

inline void Socket::on_read(beast::error_code ec, std::size_t) {
  if (ec) return;
  const std::string text = beast::buffers_to_string(buffer_.data());
  buffer_.consume(buffer_.size());
  server_.handle_frame(live_, text, shared_from_this());
  read_next();
}

inline void HttpConnection::on_read(beast::error_code ec, std::size_t) {
  if (ec) return;
  const std::string target(req_.target());
  const std::string path = target.substr(0, target.find('?'));
  if (websocket::is_upgrade(req_)) {
    const std::string prefix = "/sessions/", suffix = "/ws";
    std::shared_ptr<Live> live;
    if (path.rfind(prefix, 0) == 0 && path.size() > prefix.size() + suffix.size() &&
        path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0)
      live = server_.find(path.substr(prefix.size(), path.size() - prefix.size() - suffix.size()));
    if (live) {
      stream_.expires_never();
      std::make_shared<Socket>(stream_.release_socket(), server_, live)->accept(std::move(req_));
      return;
    }
  }
  res_ = std::make_shared<http::response<http::string_body>>(server_.respond(req_));
  http::async_write(stream_, *res_, [self = shared_from_this()](beast::error_code ec2, std::size_t) {
    if (ec2) return;
    if (!self->res_->keep_alive()) {
      beast::error_code ignore;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignore);
      return;
    }
    self->read();
  });
}

}  // namespace server_detail

}  // namespace neuroloop::sessiond
