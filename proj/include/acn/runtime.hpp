#pragma once

// Master/workers substrate. The master broadcasts a point, every worker
// replies with its local gradient and value, and the master averages the
// replies in ascending worker-id order. One gather is one communication round.

#include <acn/saa.hpp>
#include <acn/wire.hpp>

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace acn {

struct GatherResult {
  Vector grad_mean;
  double f_mean = 0;
  std::uint64_t round_id = 0;
};

/// Gradient followed by the value: the EVAL_REPLY payload of one worker.
std::vector<double> evaluate_reply(const ObjectiveShard& shard, const Vector& x);

class DistRuntime {
 public:
  DistRuntime(const DistRuntime&) = delete;
  DistRuntime& operator=(const DistRuntime&) = delete;
  virtual ~DistRuntime() = default;

  /// One communication round at x.
  GatherResult gather(const Vector& x);

  std::uint64_t comm_rounds() const { return rounds_; }

  /// Idempotent. Later gathers fail with RuntimeClosed.
  void shutdown();
  bool closed() const { return closed_; }

  std::size_t m() const { return m_; }
  Eigen::Index dim() const { return d_; }

  /// The shard the master preconditions with (worker 1 by default).
  const ObjectiveShard& master_shard() const { return master_shard_; }

 protected:
  DistRuntime(std::size_t m, Eigen::Index d, ObjectiveShard master_shard);

  /// Fills replies[k] with worker (k+1)'s payload for this round.
  virtual void collect(std::uint64_t round_id, const Vector& x,
                       std::vector<std::vector<double>>& replies) = 0;
  virtual void close() = 0;

 private:
  std::size_t m_;
  Eigen::Index d_;
  ObjectiveShard master_shard_;
  std::uint64_t rounds_ = 0;
  bool closed_ = false;
};

struct RuntimeOptions {
  std::size_t master_shard = 0;  ///< 0-based index, worker id master_shard + 1
  std::chrono::milliseconds timeout{30000};
  unsigned threads = 0;  ///< inproc evaluation threads, 0 = min(m, hardware)
};

struct TransportSpec {
  enum class Kind { Inproc, Tcp } kind = Kind::Inproc;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  ///< 0 picks an ephemeral port

  /// "inproc" or "tcp:HOST:PORT".
  static TransportSpec parse(const std::string& s);
};

/// Workers evaluated in this process by a fixed pool of threads.
class InprocRuntime final : public DistRuntime {
 public:
  InprocRuntime(std::vector<ObjectiveShard> shards, const RuntimeOptions& opt = {});
  ~InprocRuntime() override;

 protected:
  void collect(std::uint64_t round_id, const Vector& x,
               std::vector<std::vector<double>>& replies) override;
  void close() override;

 private:
  struct Pool;
  std::vector<ObjectiveShard> shards_;
  std::unique_ptr<Pool> pool_;
};

/// Workers reached over TCP with the framed wire format. The master listens;
/// workers connect and identify themselves by the worker id in their replies.
class TcpRuntime final : public DistRuntime {
 public:
  /// Listens on host:port and waits for m workers. With spawn_local_workers
  /// each shard is served by a thread of this process over loopback TCP;
  /// otherwise external `worker` processes are expected to connect.
  TcpRuntime(std::vector<ObjectiveShard> shards, const std::string& host, std::uint16_t port,
             const RuntimeOptions& opt = {}, bool spawn_local_workers = true);
  ~TcpRuntime() override;

  std::uint16_t port() const { return port_; }

  /// Binds and listens without waiting for workers. Returns the listening fd.
  static int listen_on(const std::string& host, std::uint16_t port, std::uint16_t* bound_port);

 protected:
  void collect(std::uint64_t round_id, const Vector& x,
               std::vector<std::vector<double>>& replies) override;
  void close() override;

 private:
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::vector<int> conns_;
  std::vector<std::thread> local_workers_;
  std::chrono::milliseconds timeout_;
};

std::unique_ptr<DistRuntime> start_workers(const SaaProblem& problem, const TransportSpec& transport,
                                           const RuntimeOptions& opt = {});

/// Serves one shard: connects to the master, answers EVAL_REQ frames until
/// SHUTDOWN or the connection closes.
void run_worker(const std::string& host, std::uint16_t port, const ObjectiveShard& shard,
                std::uint32_t worker_id,
                std::chrono::milliseconds connect_timeout = std::chrono::milliseconds(30000));

namespace net {
/// Blocking I/O on a socket with an absolute deadline.
void write_all(int fd, const std::uint8_t* data, std::size_t size);
void read_exact(int fd, std::uint8_t* data, std::size_t size,
                std::chrono::steady_clock::time_point deadline);
void send_message(int fd, const wire::Message& msg);
/// Returns false on orderly close before any byte of the frame.
bool recv_message(int fd, wire::Message* msg, std::chrono::steady_clock::time_point deadline);
int connect_to(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout);
}  // namespace net

}  // namespace acn
