#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "captrack/errors.hpp"
#include "captrack/live.hpp"

namespace captrack {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

std::string_view mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

}  // namespace

struct LiveServer::Impl {
  class Connection;

  Impl(const Scenario& s, Estimator e, ServeOptions o)
      : options(std::move(o)), session(s, std::move(e), options.live), acceptor(ioc) {}

  ServeOptions options;
  LiveSession session;
  mutable std::mutex session_mutex;

  asio::io_context ioc;
  tcp::acceptor acceptor;
  std::thread net_thread;
  std::thread sim_thread;
  std::atomic<bool> stopping{false};
  bool started = false;
  std::mutex stop_mutex;
  std::condition_variable stop_cv;

  std::set<std::shared_ptr<Connection>> connections;  // touched on the io thread only

  void do_accept();
  void broadcast(std::string text);
  void sim_loop();
  bool known_scenario(const std::string& name) const {
    for (const auto& s : options.live.catalog)
      if (s.name == name) return true;
    return false;
  }
};

class LiveServer::Impl::Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(Impl& server, tcp::socket socket) : server_(server), stream_(std::move(socket)) {}

  void start() {
    auto self = shared_from_this();
    http::async_read(stream_, buffer_, request_, [self](beast::error_code ec, std::size_t) {
      if (ec) return self->drop();
      if (websocket::is_upgrade(self->request_)) return self->upgrade();
      self->serve_file();
    });
  }

  void send(std::shared_ptr<const std::string> text) {
    if (!ws_ || closing_) return;
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write_next();
  }

  void close_now() {
    if (ws_) {
      beast::error_code ec;
      beast::get_lowest_layer(*ws_).socket().close(ec);
    } else {
      beast::error_code ec;
      stream_.socket().close(ec);
    }
  }

 private:
  void drop() { server_.connections.erase(shared_from_this()); }

  void upgrade() {
    ws_.emplace(std::move(stream_));
    ws_->text(true);
    auto self = shared_from_this();
    ws_->async_accept(request_, [self](beast::error_code ec) {
      if (ec) return self->drop();
      {
        std::lock_guard lock(self->server_.session_mutex);
        self->send(std::make_shared<const std::string>(encode_state(self->server_.session.snapshot())));
      }
      self->read_next();
    });
  }

  void read_next() {
    auto self = shared_from_this();
    ws_->async_read(in_, [self](beast::error_code ec, std::size_t) {
      if (ec) return self->drop();
      const std::string text = beast::buffers_to_string(self->in_.data());
      self->in_.consume(self->in_.size());
      try {
        InboundMessage m = decode_inbound(text);
        if (const auto* c = std::get_if<SessionControl>(&m); c && c->scenario && !self->server_.known_scenario(*c->scenario))
          throw ProtocolError("unknown scenario '" + *c->scenario + "'");
        self->server_.session.enqueue(std::move(m));
      } catch (const ProtocolError& e) {
        self->fail(e.what());
        return;
      }
      self->read_next();
    });
  }

  // Error frame, then a policy close. The simulation is not touched.
  void fail(const std::string& message) {
    send(std::make_shared<const std::string>(encode_error(message)));
    closing_ = true;
  }

  void write_next() {
    auto self = shared_from_this();
    ws_->async_write(asio::buffer(*queue_.front()), [self](beast::error_code ec, std::size_t) {
      if (ec) return self->drop();
      self->queue_.pop_front();
      if (!self->queue_.empty()) return self->write_next();
      if (self->closing_) {
        self->ws_->async_close(websocket::close_reason(websocket::close_code::policy_error, "protocol error"),
                               [self](beast::error_code) { self->drop(); });
      }
    });
  }

  void serve_file() {
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(request_.version());
    res->keep_alive(false);
    const std::string target(request_.target());
    std::filesystem::path rel = target == "/" ? "index.html" : target.substr(1);
    const bool safe = rel.is_relative() && rel.string().find("..") == std::string::npos;
    std::ifstream in;
    if (server_.options.ui_dir && safe && request_.method() == http::verb::get)
      in.open(*server_.options.ui_dir / rel, std::ios::binary);
    if (in) {
      std::ostringstream ss;
      ss << in.rdbuf();
      res->result(http::status::ok);
      res->set(http::field::content_type, std::string(mime_type(rel)));
      res->body() = ss.str();
    } else {
      res->result(http::status::not_found);
      res->set(http::field::content_type, "text/plain");
      res->body() = "not found\n";
    }
    res->prepare_payload();
    auto self = shared_from_this();
    http::async_write(stream_, *res, [self, res](beast::error_code, std::size_t) {
      beast::error_code ec;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      self->drop();
    });
  }

  Impl& server_;
  beast::tcp_stream stream_;
  std::optional<websocket::stream<beast::tcp_stream>> ws_;
  beast::flat_buffer buffer_;
  beast::flat_buffer in_;
  http::request<http::string_body> request_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool closing_ = false;
};

void LiveServer::Impl::do_accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    auto conn = std::make_shared<Connection>(*this, std::move(socket));
    connections.insert(conn);
    conn->start();
    do_accept();
  });
}

void LiveServer::Impl::broadcast(std::string text) {
  auto shared = std::make_shared<const std::string>(std::move(text));
  asio::post(ioc, [this, shared] {
    for (const auto& c : connections) c->send(shared);
  });
}

void LiveServer::Impl::sim_loop() {
  using clock = std::chrono::steady_clock;
  auto next = clock::now();
  bool recorded = false;
  while (!stopping.load()) {
    std::optional<StateUpdate> update;
    bool idle = false;
    {
      std::lock_guard lock(session_mutex);
      update = session.tick();
      idle = !session.running() || session.finished();
      if (session.finished() && !recorded && options.record_dir) {
        record_session(session, *options.record_dir);
        recorded = true;
      }
      if (!session.finished()) recorded = false;
    }
    if (update) broadcast(encode_state(*update));
    if (options.realtime) {
      next += std::chrono::microseconds(static_cast<long long>(kSamplePeriod * 1e6));
      std::this_thread::sleep_until(next);
    } else if (idle) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  }
}

LiveServer::LiveServer(const Scenario& scenario, Estimator estimator, ServeOptions options)
    : impl_(std::make_unique<Impl>(scenario, std::move(estimator), std::move(options))) {}

LiveServer::~LiveServer() { stop(); }

void LiveServer::start() {
  Impl& s = *impl_;
  if (s.started) return;
  try {
    const tcp::endpoint ep(asio::ip::make_address(s.options.address), s.options.port);
    s.acceptor.open(ep.protocol());
    s.acceptor.set_option(asio::socket_base::reuse_address(true));
    s.acceptor.bind(ep);
    s.acceptor.listen();
  } catch (const boost::system::system_error& e) {
    throw BindError("cannot bind " + s.options.address + ":" + std::to_string(s.options.port) + ": " + e.what());
  }
  s.started = true;
  s.do_accept();
  s.net_thread = std::thread([&s] { s.ioc.run(); });
  s.sim_thread = std::thread([&s] { s.sim_loop(); });
}

void LiveServer::stop() {
  Impl& s = *impl_;
  if (!s.started || s.stopping.exchange(true)) return;
  if (s.sim_thread.joinable()) s.sim_thread.join();
  asio::post(s.ioc, [&s] {
    beast::error_code ec;
    s.acceptor.close(ec);
    for (const auto& c : s.connections) c->close_now();
  });
  // Let pending handlers observe the closed sockets, then stop.
  asio::post(s.ioc, [&s] { s.ioc.stop(); });
  if (s.net_thread.joinable()) s.net_thread.join();
  if (s.options.record_dir) {
    std::lock_guard lock(s.session_mutex);
    record_session(s.session, *s.options.record_dir);
  }
  {
    std::lock_guard lock(s.stop_mutex);
  }
  s.stop_cv.notify_all();
}

void LiveServer::wait() {
  Impl& s = *impl_;
  std::unique_lock lock(s.stop_mutex);
  s.stop_cv.wait(lock, [&s] { return s.stopping.load(); });
}

std::uint16_t LiveServer::port() const {
  beast::error_code ec;
  const auto ep = impl_->acceptor.local_endpoint(ec);
  return ec ? impl_->options.port : ep.port();
}

std::int64_t LiveServer::ticks() const {
  std::lock_guard lock(impl_->session_mutex);
  return impl_->session.ticks();
}

TrialLog LiveServer::log() const {
  std::lock_guard lock(impl_->session_mutex);
  return impl_->session.log();
}

}  // namespace captrack
