#include "dexforge/bridge.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>

namespace dexforge::bridge {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

using Clock = std::chrono::steady_clock;
constexpr auto kTickPeriod = std::chrono::nanoseconds(1'000'000'000 / data::kRecordHz);
// Snapshots are dropped rather than queued behind a slow client.
constexpr size_t kMaxQueuedSnapshots = 4;

std::string mime_type(const std::filesystem::path& p) {
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

struct Server::Impl {
  ServerOptions options;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::uint16_t port{0};
  Clock::time_point epoch{Clock::now()};
  std::atomic<int> next_id{0};
  mutable std::mutex mutex;
  std::vector<std::filesystem::path> recordings;

  explicit Impl(ServerOptions o) : options(std::move(o)) {
    const tcp::endpoint ep(asio::ip::make_address(options.address), options.port);
    acceptor.open(ep.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
    port = acceptor.local_endpoint().port();
  }

  double now() const { return std::chrono::duration<double>(Clock::now() - epoch).count(); }

  void log(const std::string& line) const {
    if (options.log) options.log(line);
  }

  void recorded(const std::filesystem::path& path) {
    int count = 0;
    {
      std::lock_guard lock(mutex);
      recordings.push_back(path);
      count = static_cast<int>(recordings.size());
    }
    log("recorded " + path.string());
    if (options.max_recordings > 0 && count >= options.max_recordings) {
      asio::post(io, [this] {
        beast::error_code ec;
        acceptor.close(ec);
        io.stop();
      });
    }
  }

  void accept();
};

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, Server::Impl& server)
      : server_(server),
        http_(std::move(socket)),
        timer_(server.io),
        session_("s" + std::to_string(server.next_id++), server.options.data_dir, server.options.lockstep) {}

  void start() {
    http_.expires_after(std::chrono::seconds(30));
    http::async_read(http_, buffer_, request_, [self = shared_from_this()](beast::error_code ec, size_t) {
      if (ec) return;
      self->on_request();
    });
  }

 private:
  void on_request() {
    if (websocket::is_upgrade(request_)) {
      http_.expires_never();
      ws_.emplace(http_.release_socket());
      ws_->set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws_->async_accept(request_, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->ws_->text(true);
        self->server_.log("session " + self->session_.state().id + " connected");
        if (!self->server_.options.lockstep) {
          self->next_tick_ = Clock::now() + kTickPeriod;
          self->schedule_tick();
        }
        self->read();
      });
      return;
    }
    serve_file();
  }

  void serve_file() {
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(request_.version());
    res->keep_alive(false);
    const std::string target(request_.target());
    const auto& ui = server_.options.ui_dir;
    std::filesystem::path file;
    bool ok = ui && request_.method() == http::verb::get && target.find("..") == std::string::npos &&
              !target.empty() && target.front() == '/';
    if (ok) {
      const std::string rel = target.substr(1, target.find('?') == std::string::npos ? std::string::npos
                                                                                      : target.find('?') - 1);
      file = *ui / (rel.empty() ? "index.html" : rel);
      ok = std::filesystem::is_regular_file(file);
    }
    if (ok) {
      std::ifstream in(file, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      res->result(http::status::ok);
      res->set(http::field::content_type, mime_type(file));
      res->body() = ss.str();
    } else {
      res->result(http::status::not_found);
      res->set(http::field::content_type, "text/plain");
      res->body() = "not found\n";
    }
    res->prepare_payload();
    http::async_write(http_, *res, [self = shared_from_this(), res](beast::error_code, size_t) {
      beast::error_code ec;
      self->http_.socket().shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  void read() {
    ws_->async_read(in_, [self = shared_from_this()](beast::error_code ec, size_t) {
      if (ec) {
        self->closed_ = true;
        self->timer_.cancel();
        self->server_.log("session " + self->session_.state().id + " closed");
        return;
      }
      const std::string text = beast::buffers_to_string(self->in_.data());
      self->in_.consume(self->in_.size());
      self->deliver(self->session_.on_message(text, self->server_.now()));
      self->read();
    });
  }

  void schedule_tick() {
    timer_.expires_at(next_tick_);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_) return;
      self->deliver(self->session_.on_tick(self->server_.now()));
      self->next_tick_ += kTickPeriod;
      // after a long stall resynchronise instead of bursting
      if (Clock::now() - self->next_tick_ > 5 * kTickPeriod) self->next_tick_ = Clock::now() + kTickPeriod;
      self->schedule_tick();
    });
  }

  void deliver(std::vector<std::string> messages) {
    for (auto& m : messages) {
      if (m.rfind("{\"type\":\"recorded\"", 0) == 0) {
        const auto paths = session_.recordings();
        if (!paths.empty()) server_.recorded(paths.back());
      }
      const bool snapshot = m.rfind("{\"type\":\"snapshot\"", 0) == 0;
      if (snapshot && queue_.size() >= kMaxQueuedSnapshots) continue;
      queue_.push_back(std::move(m));
    }
    if (!writing_) write();
  }

  void write() {
    if (queue_.empty() || closed_) {
      writing_ = false;
      return;
    }
    writing_ = true;
    ws_->async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, size_t) {
      if (ec) {
        self->closed_ = true;
        self->writing_ = false;
        return;
      }
      self->queue_.pop_front();
      self->write();
    });
  }

  Server::Impl& server_;
  beast::tcp_stream http_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
  std::optional<websocket::stream<tcp::socket>> ws_;
  beast::flat_buffer in_;
  asio::steady_timer timer_;
  Clock::time_point next_tick_;
  Session session_;
  std::deque<std::string> queue_;
  bool writing_{false};
  bool closed_{false};
};

}  // namespace

void Server::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<Connection>(std::move(socket), *this)->start();
    accept();
  });
}

Server::Server(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Server::~Server() = default;

std::uint16_t Server::port() const { return impl_->port; }

void Server::run() {
  impl_->log("listening on " + impl_->options.address + ":" + std::to_string(port()));
  impl_->accept();
  impl_->io.run();
}

void Server::stop() {
  asio::post(impl_->io, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
    impl_->io.stop();
  });
}

std::vector<std::filesystem::path> Server::recordings() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->recordings;
}

}  // namespace dexforge::bridge
