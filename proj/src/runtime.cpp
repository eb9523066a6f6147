#include <acn/runtime.hpp>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <exception>
#include <iostream>
#include <mutex>

namespace acn {

std::vector<double> evaluate_reply(const ObjectiveShard& shard, const Vector& x) {
  Vector g;
  const double f = shard.value_gradient(x, &g);
  std::vector<double> out(g.data(), g.data() + g.size());
  out.push_back(f);
  return out;
}

DistRuntime::DistRuntime(std::size_t m, Eigen::Index d, ObjectiveShard master_shard)
    : m_(m), d_(d), master_shard_(std::move(master_shard)) {}

GatherResult DistRuntime::gather(const Vector& x) {
  if (closed_) {
    throw Error(ErrorCode::RuntimeClosed, "gather: runtime is shut down");
  }
  require_dim(x.size(), d_, "gather: x");
  const std::uint64_t round_id = ++rounds_;
  std::vector<std::vector<double>> replies(m_);
  collect(round_id, x, replies);

  GatherResult out;
  out.round_id = round_id;
  out.grad_mean = Vector::Zero(d_);
  double f = 0;
  for (std::size_t k = 0; k < m_; ++k) {
    if (replies[k].size() != static_cast<std::size_t>(d_ + 1)) {
      throw Error(ErrorCode::MalformedMessage, "gather: reply of worker " + std::to_string(k + 1) +
                                                   " has wrong length");
    }
    out.grad_mean += Eigen::Map<const Vector>(replies[k].data(), d_);
    f += replies[k][static_cast<std::size_t>(d_)];
  }
  out.grad_mean /= double(m_);
  out.f_mean = f / double(m_);
  return out;
}

void DistRuntime::shutdown() {
  if (closed_) {
    return;
  }
  closed_ = true;
  try {
    close();
  } catch (const std::exception& e) {
    std::cerr << "shutdown: " << e.what() << '\n';
  }
}

TransportSpec TransportSpec::parse(const std::string& s) {
  TransportSpec t;
  if (s == "inproc") {
    return t;
  }
  if (s.rfind("tcp:", 0) == 0) {
    const auto rest = s.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::Config, "transport: expected tcp:HOST:PORT, got '" + s + "'");
    }
    t.kind = Kind::Tcp;
    t.host = rest.substr(0, colon);
    const int port = std::stoi(rest.substr(colon + 1));
    if (port < 0 || port > 65535) {
      throw Error(ErrorCode::Config, "transport: port out of range");
    }
    t.port = static_cast<std::uint16_t>(port);
    return t;
  }
  throw Error(ErrorCode::Config, "transport: unknown '" + s + "'");
}

// ---------------------------------------------------------------------------
// In-process transport

struct InprocRuntime::Pool {
  std::vector<std::thread> threads;
  std::mutex mu;
  std::condition_variable start_cv;
  std::condition_variable done_cv;
  std::uint64_t generation = 0;
  std::size_t remaining = 0;
  bool stop = false;
  const Vector* x = nullptr;
  std::vector<std::vector<double>>* replies = nullptr;
  std::exception_ptr error;
};

InprocRuntime::InprocRuntime(std::vector<ObjectiveShard> shards, const RuntimeOptions& opt)
    : DistRuntime(shards.size(), shards.empty() ? 0 : shards.front().dim(),
                  shards.at(opt.master_shard)),
      shards_(std::move(shards)) {
  unsigned threads = opt.threads;
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
  }
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, shards_.size()));
  if (threads <= 1) {
    return;
  }
  pool_ = std::make_unique<Pool>();
  for (unsigned t = 0; t < threads; ++t) {
    pool_->threads.emplace_back([this, t, threads] {
      Pool& p = *pool_;
      std::uint64_t seen = 0;
      for (;;) {
        std::unique_lock lock(p.mu);
        p.start_cv.wait(lock, [&] { return p.stop || p.generation != seen; });
        if (p.stop) {
          return;
        }
        seen = p.generation;
        lock.unlock();
        try {
          for (std::size_t k = t; k < shards_.size(); k += threads) {
            (*p.replies)[k] = evaluate_reply(shards_[k], *p.x);
          }
        } catch (...) {
          std::lock_guard g(p.mu);
          p.error = std::current_exception();
        }
        lock.lock();
        if (--p.remaining == 0) {
          p.done_cv.notify_one();
        }
      }
    });
  }
}

InprocRuntime::~InprocRuntime() { shutdown(); }

void InprocRuntime::collect(std::uint64_t, const Vector& x, std::vector<std::vector<double>>& replies) {
  if (!pool_) {
    for (std::size_t k = 0; k < shards_.size(); ++k) {
      replies[k] = evaluate_reply(shards_[k], x);
    }
    return;
  }
  std::unique_lock lock(pool_->mu);
  pool_->x = &x;
  pool_->replies = &replies;
  pool_->error = nullptr;
  pool_->remaining = pool_->threads.size();
  ++pool_->generation;
  pool_->start_cv.notify_all();
  pool_->done_cv.wait(lock, [&] { return pool_->remaining == 0; });
  if (pool_->error) {
    std::rethrow_exception(pool_->error);
  }
}

void InprocRuntime::close() {
  if (!pool_) {
    return;
  }
  {
    std::lock_guard lock(pool_->mu);
    pool_->stop = true;
  }
  pool_->start_cv.notify_all();
  for (auto& t : pool_->threads) {
    t.join();
  }
  pool_.reset();
}

// ---------------------------------------------------------------------------
// Socket helpers

namespace net {

namespace {

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  return static_cast<int>(std::clamp<std::int64_t>(left.count(), 0, 1 << 30));
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res);
  if (rc != 0 || res == nullptr) {
    throw Error(ErrorCode::Transport, "cannot resolve host '" + host + "': " + gai_strerror(rc));
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(port);
  return addr;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

void write_all(int fd, const std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    const ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Transport, "send: " + errno_text());
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

void read_exact(int fd, std::uint8_t* data, std::size_t size,
                std::chrono::steady_clock::time_point deadline) {
  while (size > 0) {
    pollfd pfd{fd, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, remaining_ms(deadline));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Transport, "poll: " + errno_text());
    }
    if (rc == 0) {
      throw Error(ErrorCode::Timeout, "timed out waiting for data");
    }
    const ssize_t n = ::recv(fd, data, size, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Transport, "recv: " + errno_text());
    }
    if (n == 0) {
      throw Error(ErrorCode::Transport, "connection closed by peer");
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

void send_message(int fd, const wire::Message& msg) {
  const auto bytes = wire::encode(msg);
  write_all(fd, bytes.data(), bytes.size());
}

bool recv_message(int fd, wire::Message* msg, std::chrono::steady_clock::time_point deadline) {
  std::vector<std::uint8_t> buf(wire::kHeaderSize);
  // Distinguish an orderly close at a frame boundary from a truncated frame.
  for (;;) {
    pollfd pfd{fd, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, remaining_ms(deadline));
    if (rc < 0 && errno == EINTR) continue;
    if (rc < 0) throw Error(ErrorCode::Transport, "poll: " + errno_text());
    if (rc == 0) throw Error(ErrorCode::Timeout, "timed out waiting for a frame");
    const ssize_t n = ::recv(fd, buf.data(), 1, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) throw Error(ErrorCode::Transport, "recv: " + errno_text());
    if (n == 0) return false;
    break;
  }
  read_exact(fd, buf.data() + 1, wire::kHeaderSize - 1, deadline);
  const auto header = wire::decode_header(buf);
  if (header.count > (std::uint64_t{1} << 28)) {
    throw Error(ErrorCode::MalformedMessage, "payload count too large");
  }
  buf.resize(wire::kHeaderSize + 8 * header.count);
  read_exact(fd, buf.data() + wire::kHeaderSize, 8 * header.count, deadline);
  *msg = wire::decode(buf);
  return true;
}

int connect_to(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
  const sockaddr_in addr = resolve(host, port);
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) {
    throw Error(ErrorCode::Transport, "socket: " + errno_text());
  }
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
  if (rc < 0 && errno != EINPROGRESS) {
    const std::string why = errno_text();
    ::close(fd);
    throw Error(ErrorCode::Transport, "connect " + host + ":" + std::to_string(port) + ": " + why);
  }
  if (rc < 0) {
    pollfd pfd{fd, POLLOUT, 0};
    rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc == 0) {
      ::close(fd);
      throw Error(ErrorCode::Timeout, "connect " + host + ":" + std::to_string(port) + ": timed out");
    }
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (rc < 0 || err != 0) {
      ::close(fd);
      throw Error(ErrorCode::Transport, "connect " + host + ":" + std::to_string(port) + ": " +
                                            std::strerror(err ? err : errno));
    }
  }
  ::fcntl(fd, F_SETFL, flags);
  set_nodelay(fd);
  return fd;
}

}  // namespace net

// ---------------------------------------------------------------------------
// TCP transport

int TcpRuntime::listen_on(const std::string& host, std::uint16_t port, std::uint16_t* bound_port) {
  const sockaddr_in addr = net::resolve(host, port);
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) {
    throw Error(ErrorCode::Transport, "socket: " + net::errno_text());
  }
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) < 0 ||
      ::listen(fd, SOMAXCONN) < 0) {
    const std::string why = net::errno_text();
    ::close(fd);
    throw Error(ErrorCode::Transport, "bind/listen " + host + ":" + std::to_string(port) + ": " + why);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  if (bound_port) {
    *bound_port = ntohs(bound.sin_port);
  }
  return fd;
}

TcpRuntime::TcpRuntime(std::vector<ObjectiveShard> shards, const std::string& host, std::uint16_t port,
                       const RuntimeOptions& opt, bool spawn_local_workers)
    : DistRuntime(shards.size(), shards.empty() ? 0 : shards.front().dim(),
                  shards.at(opt.master_shard)),
      timeout_(opt.timeout) {
  listen_fd_ = listen_on(host, port, &port_);
  try {
    if (spawn_local_workers) {
      for (std::size_t k = 0; k < shards.size(); ++k) {
        local_workers_.emplace_back([this, shard = shards[k], k, host] {
          try {
            run_worker(host, port_, shard, static_cast<std::uint32_t>(k + 1), timeout_);
          } catch (const std::exception& e) {
            std::cerr << "worker " << k + 1 << ": " << e.what() << '\n';
          }
        });
      }
    }
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (conns_.size() < shards.size()) {
      pollfd pfd{listen_fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, net::remaining_ms(deadline));
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) {
        throw Error(rc == 0 ? ErrorCode::Timeout : ErrorCode::Transport,
                    "waiting for workers: " + std::to_string(conns_.size()) + " of " +
                        std::to_string(shards.size()) + " connected");
      }
      const int c = ::accept(listen_fd_, nullptr, nullptr);
      if (c < 0) {
        throw Error(ErrorCode::Transport, "accept: " + net::errno_text());
      }
      net::set_nodelay(c);
      conns_.push_back(c);
    }
  } catch (...) {
    close();
    throw;
  }
}

TcpRuntime::~TcpRuntime() { shutdown(); }

void TcpRuntime::collect(std::uint64_t round_id, const Vector& x,
                         std::vector<std::vector<double>>& replies) {
  wire::Message req;
  req.tag = wire::Tag::EvalReq;
  req.round_id = round_id;
  req.payload.assign(x.data(), x.data() + x.size());
  const auto frame = wire::encode(req);
  for (int fd : conns_) {
    net::write_all(fd, frame.data(), frame.size());
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  std::vector<bool> seen(replies.size(), false);
  for (int fd : conns_) {
    wire::Message reply;
    if (!net::recv_message(fd, &reply, deadline)) {
      throw Error(ErrorCode::Transport, "worker closed connection during round " + std::to_string(round_id));
    }
    if (reply.tag != wire::Tag::EvalReply || reply.round_id != round_id) {
      throw Error(ErrorCode::MalformedMessage, "unexpected reply for round " + std::to_string(round_id));
    }
    const std::uint32_t id = reply.worker_id;
    if (id == 0 || id > replies.size() || seen[id - 1]) {
      throw Error(ErrorCode::MalformedMessage, "invalid or duplicate worker id " + std::to_string(id));
    }
    seen[id - 1] = true;
    replies[id - 1] = std::move(reply.payload);
  }
}

void TcpRuntime::close() {
  wire::Message bye;
  bye.tag = wire::Tag::Shutdown;
  for (int fd : conns_) {
    try {
      net::send_message(fd, bye);
    } catch (const std::exception&) {
      // peer already gone
    }
  }
  for (int fd : conns_) {
    ::close(fd);
  }
  conns_.clear();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  for (auto& t : local_workers_) {
    if (t.joinable()) t.join();
  }
}

void run_worker(const std::string& host, std::uint16_t port, const ObjectiveShard& shard,
                std::uint32_t worker_id, std::chrono::milliseconds connect_timeout) {
  const auto deadline = std::chrono::steady_clock::now() + connect_timeout;
  int fd = -1;
  for (;;) {
    try {
      fd = net::connect_to(host, port, connect_timeout);
      break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Transport || std::chrono::steady_clock::now() >= deadline) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  }
  try {
    for (;;) {
      wire::Message msg;
      const auto forever = std::chrono::steady_clock::time_point::max() - std::chrono::hours(24);
      if (!net::recv_message(fd, &msg, forever)) {
        break;
      }
      if (msg.tag == wire::Tag::Shutdown) {
        break;
      }
      if (msg.tag != wire::Tag::EvalReq) {
        throw Error(ErrorCode::MalformedMessage, "worker: unexpected tag");
      }
      require_dim(static_cast<Eigen::Index>(msg.payload.size()), shard.dim(), "worker: EVAL_REQ payload");
      const Vector x = Eigen::Map<const Vector>(msg.payload.data(), shard.dim());
      wire::Message reply;
      reply.tag = wire::Tag::EvalReply;
      reply.round_id = msg.round_id;
      reply.worker_id = worker_id;
      reply.payload = evaluate_reply(shard, x);
      net::send_message(fd, reply);
    }
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
}

std::unique_ptr<DistRuntime> start_workers(const SaaProblem& problem, const TransportSpec& transport,
                                           const RuntimeOptions& opt) {
  if (problem.shards.size() != problem.m || problem.m == 0) {
    throw Error(ErrorCode::InvalidParameter, "start_workers: shard count does not match m");
  }
  if (transport.kind == TransportSpec::Kind::Inproc) {
    return std::make_unique<InprocRuntime>(problem.shards, opt);
  }
  return std::make_unique<TcpRuntime>(problem.shards, transport.host, transport.port, opt, true);
}

}  // namespace acn
