#include <doctest.h>

#include <acn/runtime.hpp>

#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <future>
#include <thread>

using namespace acn;
using namespace std::chrono_literals;

namespace {

ObjectiveShard centered(double c) {
  return ObjectiveShard::quadratic_form(Matrix::Identity(1, 1), Vector::Constant(1, c));
}

SaaProblem logistic_problem(std::size_t m, std::size_t n, Eigen::Index d) {
  const Dataset ds = gen_synthetic(7, m * n, d, ObjectiveKind::Logistic, 1.0);
  SaaOptions opt;
  opt.m = m;
  return build_saa_problem(ds, opt);
}

std::uint16_t free_port() {
  std::uint16_t port = 0;
  const int fd = TcpRuntime::listen_on("127.0.0.1", 0, &port);
  ::close(fd);
  return port;
}

bool same_bits(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a(i)) != std::bit_cast<std::uint64_t>(b(i))) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("gather averages shard gradients") {
  InprocRuntime rt({centered(0), centered(2)});
  CHECK(rt.comm_rounds() == 0);
  const auto g = rt.gather(Vector::Zero(1));
  CHECK(g.grad_mean(0) == -1.0);
  CHECK(g.f_mean == doctest::Approx(1.0));
  CHECK(g.round_id == 1);
  CHECK(rt.comm_rounds() == 1);
  CHECK(rt.m() == 2);
  CHECK(rt.master_shard().quad_c()(0) == 0.0);
  CHECK_THROWS_AS(rt.gather(Vector::Zero(2)), Error);
}

TEST_CASE("single worker matches local evaluation") {
  const SaaProblem p = logistic_problem(1, 40, 5);
  auto rt = start_workers(p, TransportSpec::parse("inproc"));
  const Vector x = Vector::LinSpaced(5, -1, 1);
  const auto g = rt->gather(x);
  CHECK(same_bits(g.grad_mean, p.shards[0].gradient(x)));
  CHECK(g.f_mean == p.shards[0].value(x));
}

TEST_CASE("identical shards and repeated gathers") {
  const SaaProblem p = logistic_problem(1, 40, 5);
  InprocRuntime rt({p.shards[0], p.shards[0], p.shards[0]});
  const Vector x = Vector::Constant(5, 0.3);
  const auto a = rt.gather(x);
  const auto b = rt.gather(x);
  CHECK((a.grad_mean - p.shards[0].gradient(x)).norm() <= 1e-15);
  CHECK(same_bits(a.grad_mean, b.grad_mean));
  CHECK(b.round_id == 2);
}

TEST_CASE("thread count does not change results") {
  const SaaProblem p = logistic_problem(4, 32, 6);
  RuntimeOptions one;
  one.threads = 1;
  RuntimeOptions many;
  many.threads = 4;
  InprocRuntime a(p.shards, one), b(p.shards, many);
  const Vector x = Vector::LinSpaced(6, -2, 1);
  CHECK(same_bits(a.gather(x).grad_mean, b.gather(x).grad_mean));
}

TEST_CASE("shutdown is idempotent and closes the runtime") {
  InprocRuntime rt({centered(1)});
  rt.shutdown();
  CHECK(rt.closed());
  CHECK_NOTHROW(rt.shutdown());
  try {
    rt.gather(Vector::Zero(1));
    FAIL("expected runtime-closed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RuntimeClosed);
  }
  InprocRuntime fresh({centered(1)});
  CHECK_NOTHROW(fresh.shutdown());
}

TEST_CASE("transport spec parsing") {
  CHECK(TransportSpec::parse("inproc").kind == TransportSpec::Kind::Inproc);
  const auto t = TransportSpec::parse("tcp:127.0.0.1:5000");
  CHECK(t.kind == TransportSpec::Kind::Tcp);
  CHECK(t.host == "127.0.0.1");
  CHECK(t.port == 5000);
  CHECK_THROWS_AS(TransportSpec::parse("udp:1"), Error);
  CHECK_THROWS_AS(TransportSpec::parse("tcp:host:99999"), Error);
}

TEST_CASE("tcp and inproc gathers are bitwise identical") {
  const SaaProblem p = logistic_problem(4, 16, 5);
  InprocRuntime inproc(p.shards);
  auto tcp = start_workers(p, TransportSpec::parse("tcp:127.0.0.1:0"));
  Vector x = Vector::Zero(5);
  for (int k = 0; k < 10; ++k) {
    const auto a = inproc.gather(x);
    const auto b = tcp->gather(x);
    CHECK(same_bits(a.grad_mean, b.grad_mean));
    CHECK(std::bit_cast<std::uint64_t>(a.f_mean) == std::bit_cast<std::uint64_t>(b.f_mean));
    x -= 0.5 * a.grad_mean;
  }
  CHECK(tcp->comm_rounds() == 10);
  tcp->shutdown();
  CHECK_NOTHROW(tcp->shutdown());
  CHECK_THROWS_AS(tcp->gather(x), Error);
}

TEST_CASE("external workers connect in any order") {
  const SaaProblem p = logistic_problem(3, 8, 4);
  const std::uint16_t port = free_port();
  std::vector<std::thread> workers;
  for (std::size_t k = p.m; k-- > 0;) {
    workers.emplace_back([&, k] { run_worker("127.0.0.1", port, p.shards[k], std::uint32_t(k + 1), 10s); });
  }
  {
    TcpRuntime rt(p.shards, "127.0.0.1", port, {}, false);
    InprocRuntime ref(p.shards);
    const Vector x = Vector::Ones(4);
    CHECK(same_bits(rt.gather(x).grad_mean, ref.gather(x).grad_mean));
    rt.shutdown();
  }
  for (auto& w : workers) w.join();
}

TEST_CASE("connect to an unreachable address fails within the timeout") {
  const std::uint16_t port = free_port();
  const auto start = std::chrono::steady_clock::now();
  try {
    net::connect_to("127.0.0.1", port, 500ms);
    FAIL("expected transport error");
  } catch (const Error& e) {
    CHECK((e.code() == ErrorCode::Transport || e.code() == ErrorCode::Timeout));
  }
  CHECK(std::chrono::steady_clock::now() - start < 5s);
}

TEST_CASE("master times out when workers never arrive") {
  RuntimeOptions opt;
  opt.timeout = 200ms;
  try {
    TcpRuntime rt({centered(0)}, "127.0.0.1", 0, opt, false);
    FAIL("expected timeout");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Timeout);
  }
}

TEST_CASE("silent and misbehaving workers are detected") {
  RuntimeOptions opt;
  opt.timeout = 300ms;

  SUBCASE("no reply") {
    const std::uint16_t port = free_port();
    std::promise<void> done;
    std::thread silent([&] {
      const int fd = net::connect_to("127.0.0.1", port, 5s);
      done.get_future().wait();
      ::close(fd);
    });
    try {
      TcpRuntime rt({centered(0)}, "127.0.0.1", port, opt, false);
      rt.gather(Vector::Zero(1));
      FAIL("expected timeout");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Timeout);
    }
    done.set_value();
    silent.join();
  }

  SUBCASE("garbage reply") {
    const std::uint16_t port = free_port();
    std::thread liar([&] {
      const int fd = net::connect_to("127.0.0.1", port, 5s);
      wire::Message req;
      if (net::recv_message(fd, &req, std::chrono::steady_clock::now() + 5s)) {
        const std::uint8_t junk[32] = {'N', 'O', 'P', 'E'};
        net::write_all(fd, junk, sizeof(junk));
      }
      ::close(fd);
    });
    try {
      TcpRuntime rt({centered(0)}, "127.0.0.1", port, opt, false);
      rt.gather(Vector::Zero(1));
      FAIL("expected malformed reply");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedMessage);
    }
    liar.join();
  }

  SUBCASE("wrong round id") {
    const std::uint16_t port = free_port();
    std::thread stale([&] {
      const int fd = net::connect_to("127.0.0.1", port, 5s);
      wire::Message req;
      if (net::recv_message(fd, &req, std::chrono::steady_clock::now() + 5s)) {
        net::send_message(fd, wire::Message{wire::Tag::EvalReply, req.round_id + 5, 1, {0.0, 0.0}});
      }
      ::close(fd);
    });
    CHECK_THROWS_AS(
        [&] {
          TcpRuntime rt({centered(0)}, "127.0.0.1", port, opt, false);
          rt.gather(Vector::Zero(1));
        }(),
        Error);
    stale.join();
  }
}

TEST_CASE("evaluate_reply layout") {
  const auto r = evaluate_reply(centered(2), Vector::Zero(1));
  REQUIRE(r.size() == 2);
  CHECK(r[0] == -2.0);
  CHECK(r[1] == 2.0);
}
