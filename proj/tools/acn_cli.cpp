#include <acn/harness.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kBoundViolation = 3, kTransport = 4 };

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "JSON config file");
    app->add_option("--set", sets, "override, e.g. problem.N=512 (repeatable)");
  }

  acn::RunConfig load() const {
    nlohmann::json j = nlohmann::json::object();
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) {
        throw acn::Error(acn::ErrorCode::Config, "cannot open config " + file);
      }
      j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded()) {
        throw acn::Error(acn::ErrorCode::Config, "config " + file + " is not valid JSON");
      }
    }
    for (const auto& s : sets) {
      acn::apply_override(j, s);
    }
    return acn::config_from_json(j);
  }
};

int exit_code_for(acn::ErrorCode code) {
  switch (code) {
    case acn::ErrorCode::Config:
    case acn::ErrorCode::InvalidParameter:
    case acn::ErrorCode::IndivisibleN:
    case acn::ErrorCode::TooManyWorkers:
    case acn::ErrorCode::DimensionMismatch:
      return kConfig;
    case acn::ErrorCode::Transport:
    case acn::ErrorCode::Timeout:
    case acn::ErrorCode::MalformedMessage:
    case acn::ErrorCode::RuntimeClosed:
      return kTransport;
    default:
      return kFailure;
  }
}

template <typename T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if constexpr (std::is_same_v<T, acn::Method>) {
      out.push_back(acn::parse_method(item));
    } else {
      try {
        out.push_back(static_cast<T>(std::stoull(item)));
      } catch (const std::exception&) {
        throw acn::Error(acn::ErrorCode::Config, "bad list entry '" + item + "'");
      }
    }
  }
  return out;
}

std::ostream* open_or_stdout(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") {
    return &std::cout;
  }
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::filesystem::create_directories(p.parent_path());
  }
  file.open(p);
  if (!file) {
    throw acn::Error(acn::ErrorCode::Io, "cannot write " + path);
  }
  return &file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed accelerated cubic Newton experiments"};
  app.require_subcommand(1);

  ConfigArgs gen_cfg, ref_cfg, run_cfg, scale_cfg, beta_cfg;

  auto* gen = app.add_subcommand("gen", "generate a dataset and its shard files");
  gen_cfg.attach(gen);
  std::string gen_out = "data";
  gen->add_option("--out", gen_out, "output directory");

  auto* ref = app.add_subcommand("reference", "high-accuracy reference solution");
  ref_cfg.attach(ref);
  std::string ref_out = "reference.json";
  ref->add_option("--out", ref_out, "output JSON file");

  auto* run = app.add_subcommand("run", "run one method and check its guarantees");
  run_cfg.attach(run);
  bool strict = false;
  bool external = false;
  run->add_flag("--strict", strict, "exit 3 on any bound violation");
  run->add_flag("--external-workers", external, "with tcp transport, wait for worker processes");

  auto* scaling = app.add_subcommand("scaling", "rounds-to-target against N");
  scale_cfg.attach(scaling);
  std::string N_list = "1024,2048,4096,8192";
  std::string methods = "restarted_acn,agd";
  std::string scale_out;
  scaling->add_option("--N", N_list, "comma-separated sample sizes");
  scaling->add_option("--methods", methods, "comma-separated methods");
  scaling->add_option("--out", scale_out, "CSV path (default stdout)");

  auto* beta = app.add_subcommand("beta-study", "measured similarity against shard size");
  beta_cfg.attach(beta);
  std::string n_list = "16,64,256,1024";
  std::string beta_out;
  beta->add_option("--n", n_list, "comma-separated per-worker sample counts");
  beta->add_option("--out", beta_out, "CSV path (default stdout)");

  auto* worker = app.add_subcommand("worker", "serve one shard to a master over TCP");
  std::string connect;
  std::string shard_file;
  int connect_timeout_ms = 30000;
  worker->add_option("--connect", connect, "HOST:PORT of the master")->required();
  worker->add_option("--shard", shard_file, "shard JSON written by gen")->required();
  worker->add_option("--timeout-ms", connect_timeout_ms, "connect timeout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*gen) {
      acn::cmd_gen(gen_cfg.load(), gen_out);
      std::cout << "wrote " << gen_out << '\n';
    } else if (*ref) {
      const auto r = acn::cmd_reference_solve(ref_cfg.load(), ref_out);
      std::cout << "f_star " << std::setprecision(17) << r.f_star << " grad_norm " << r.grad_norm
                << " converged " << r.converged << '\n';
      return r.converged ? kOk : kFailure;
    } else if (*run) {
      const auto out = acn::cmd_run(run_cfg.load(), external);
      std::cout << out.summary.dump(2) << '\n';
      if (strict && out.bound_violations > 0) {
        std::cerr << "bound violations: " << out.bound_violations << '\n';
        return kBoundViolation;
      }
    } else if (*scaling) {
      std::ofstream file;
      std::ostream* csv = open_or_stdout(scale_out, file);
      const auto res = acn::cmd_scaling(scale_cfg.load(), parse_list<std::size_t>(N_list),
                                        parse_list<acn::Method>(methods), csv);
      for (const auto& [name, slope] : res.slopes) {
        std::cerr << name << " slope " << slope << '\n';
      }
    } else if (*beta) {
      std::ofstream file;
      std::ostream* csv = open_or_stdout(beta_out, file);
      const auto res = acn::cmd_beta_study(beta_cfg.load(), parse_list<std::size_t>(n_list), csv);
      std::cerr << "beta_hat slope " << res.slope << '\n';
    } else if (*worker) {
      const auto colon = connect.rfind(':');
      if (colon == std::string::npos) {
        throw acn::Error(acn::ErrorCode::Config, "--connect expects HOST:PORT");
      }
      const std::string host = connect.substr(0, colon);
      int port = 0;
      try {
        port = std::stoi(connect.substr(colon + 1));
      } catch (const std::exception&) {
        port = -1;
      }
      if (port <= 0 || port > 65535) {
        throw acn::Error(acn::ErrorCode::Config, "--connect: bad port");
      }
      std::ifstream in(shard_file);
      if (!in) {
        throw acn::Error(acn::ErrorCode::Config, "cannot open shard " + shard_file);
      }
      std::uint32_t id = 0;
      const auto shard = acn::shard_from_json(nlohmann::json::parse(in), &id);
      acn::run_worker(host, static_cast<std::uint16_t>(port), shard, id,
                      std::chrono::milliseconds(connect_timeout_ms));
    }
  } catch (const acn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
