#include <acn/harness.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace acn {

const char* to_string(Method m) {
  switch (m) {
    case Method::Acn: return "acn";
    case Method::RestartedAcn: return "restarted_acn";
    case Method::CubicNewton: return "cubic_newton";
    case Method::Agd: return "agd";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  if (s == "acn") return Method::Acn;
  if (s == "restarted_acn") return Method::RestartedAcn;
  if (s == "cubic_newton") return Method::CubicNewton;
  if (s == "agd") return Method::Agd;
  throw Error(ErrorCode::Config, "unknown method '" + s + "'");
}

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
  const int budgets = int(budget.t_max.has_value()) + int(budget.stages.has_value()) +
                      int(budget.target_gap.has_value()) + int(budget.target_rounds.has_value());
  if (budgets != 1) {
    throw Error(ErrorCode::Config, "config: exactly one budget criterion required, got " +
                                       std::to_string(budgets));
  }
  if (budget.stages && method != Method::RestartedAcn) {
    throw Error(ErrorCode::Config, "config: budget.stages applies to restarted_acn only");
  }
  if (problem.m == 0 || problem.N % problem.m != 0) {
    throw Error(ErrorCode::Config, "config: m must divide N");
  }
  if (problem.d <= 0 || problem.N == 0 || !(problem.feat_bound > 0) || !(problem.R > 0)) {
    throw Error(ErrorCode::Config, "config: N, d, feat_bound and R must be positive");
  }
}

namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) {
    out = j.at(key).get<T>();
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) {
    out = j.at(key).get<T>();
  }
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("problem")) {
      const auto& p = j.at("problem");
      if (p.contains("kind")) c.problem.kind = parse_objective_kind(p.at("kind").get<std::string>());
      read_opt(p, "N", c.problem.N);
      read_opt(p, "d", c.problem.d);
      read_opt(p, "m", c.problem.m);
      read_opt(p, "seed", c.problem.seed);
      read_opt(p, "feat_bound", c.problem.feat_bound);
      if (p.contains("mu_rule")) c.problem.mu_rule = parse_mu_rule(p.at("mu_rule").get<std::string>());
      read_opt(p, "mu_scale", c.problem.mu_scale);
      read_opt(p, "regularize", c.problem.regularize);
      read_opt(p, "ridge", c.problem.ridge);
      read_opt(p, "R", c.problem.R);
      read_opt(p, "beta_source", c.problem.beta_source);
      read_opt(p, "beta_scale", c.problem.beta_scale);
      read_opt(p, "label_noise", c.problem.label_noise);
      read_opt(p, "truth_norm", c.problem.truth_norm);
      read_opt(p, "probe_count", c.problem.probe_count);
    }
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("budget")) {
      const auto& b = j.at("budget");
      read_opt(b, "t_max", c.budget.t_max);
      read_opt(b, "stages", c.budget.stages);
      read_opt(b, "target_gap", c.budget.target_gap);
      read_opt(b, "target_rounds", c.budget.target_rounds);
    }
    if (j.contains("output")) {
      const auto& o = j.at("output");
      read_opt(o, "csv", c.output.csv);
      read_opt(o, "summary", c.output.summary);
      read_opt(o, "cache_dir", c.output.cache_dir);
    }
    read_opt(j, "transport", c.transport);
    read_opt(j, "max_rounds", c.max_rounds);
    read_opt(j, "R0", c.R0);
    if (j.contains("es_coef")) {
      const auto s = j.at("es_coef").get<std::string>();
      if (s == "A_t") c.es_coef = EsCoefRule::CurrentA;
      else if (s == "A_prev") c.es_coef = EsCoefRule::PreviousA;
      else throw Error(ErrorCode::Config, "es_coef must be A_t or A_prev");
    }
    read_opt(j, "scaling_C", c.scaling_C);
    read_opt(j, "beta_reps", c.beta_reps);
    read_opt(j, "threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string("config: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  const auto& p = c.problem;
  j["problem"] = {{"kind", to_string(p.kind)},   {"N", p.N},
                  {"d", p.d},                    {"m", p.m},
                  {"seed", p.seed},              {"feat_bound", p.feat_bound},
                  {"mu_rule", to_string(p.mu_rule)}, {"mu_scale", p.mu_scale},
                  {"regularize", p.regularize},  {"ridge", p.ridge},
                  {"R", p.R},                    {"beta_source", p.beta_source},
                  {"beta_scale", p.beta_scale},  {"label_noise", p.label_noise},
                  {"truth_norm", p.truth_norm},  {"probe_count", p.probe_count}};
  j["method"] = to_string(c.method);
  nlohmann::json b = nlohmann::json::object();
  if (c.budget.t_max) b["t_max"] = *c.budget.t_max;
  if (c.budget.stages) b["stages"] = *c.budget.stages;
  if (c.budget.target_gap) b["target_gap"] = *c.budget.target_gap;
  if (c.budget.target_rounds) b["target_rounds"] = *c.budget.target_rounds;
  j["budget"] = b;
  j["output"] = {{"csv", c.output.csv}, {"summary", c.output.summary}, {"cache_dir", c.output.cache_dir}};
  j["transport"] = c.transport;
  j["max_rounds"] = c.max_rounds;
  j["R0"] = c.R0 ? nlohmann::json(*c.R0) : nlohmann::json(nullptr);
  j["es_coef"] = c.es_coef == EsCoefRule::CurrentA ? "A_t" : "A_prev";
  j["scaling_C"] = c.scaling_C;
  j["beta_reps"] = c.beta_reps;
  j["threads"] = c.threads;
  return j;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::Config, "--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) {
    value = raw;
  }
  nlohmann::json* node = &j;
  std::stringstream path(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) {
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) {
      *node = nlohmann::json::object();
    }
    node = &(*node)[parts[i]];
  }
  if (!node->is_object()) {
    *node = nlohmann::json::object();
  }
  // A new budget criterion replaces the previous one.
  if (parts.size() == 2 && parts[0] == "budget") {
    *node = nlohmann::json::object();
  }
  (*node)[parts.back()] = value;
}

// ---------------------------------------------------------------------------
// Problems and reference solutions

double resolve_beta(const ProblemConfig& pc, const SaaProblem& problem, double beta_hat) {
  if (pc.beta_source == "empirical") {
    return std::max(beta_hat, 1e-12);
  }
  if (pc.beta_source == "theory") {
    return problem.beta_theory;
  }
  if (pc.beta_source.rfind("fixed:", 0) == 0) {
    try {
      return std::stod(pc.beta_source.substr(6));
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::Config, "beta_source must be empirical, theory or fixed:<value>");
}

PreparedProblem prepare_problem(const ProblemConfig& pc) {
  PreparedProblem out;
  GenOptions gen;
  gen.label_noise = pc.label_noise;
  gen.truth_norm = pc.truth_norm;
  out.dataset = gen_synthetic(pc.seed, pc.N, pc.d, pc.kind, pc.feat_bound, gen);
  out.truth = ground_truth(pc.seed, pc.d, gen);

  SaaOptions so;
  so.kind = pc.kind;
  so.m = pc.m;
  so.R = pc.R;
  so.mu_rule = pc.mu_rule;
  so.mu_scale = pc.mu_scale;
  so.beta_scale = pc.beta_scale;
  so.ridge = pc.ridge;
  so.regularize = pc.regularize;
  out.problem = build_saa_problem(out.dataset, so);

  const auto probes = default_probes(out.problem, pc.probe_count, 10.0 * pc.R, pc.seed);
  out.similarity = estimate_beta(out.problem, probes);
  out.problem.beta_hat = out.similarity.beta_hat;
  out.constants = out.problem.constants();
  out.beta_used = resolve_beta(pc, out.problem, out.similarity.beta_hat);
  return out;
}

ReferenceSolution reference_solve(const SaaProblem& problem, int max_iterations) {
  if (!(problem.strong_convexity() > 0)) {
    bool ok = false;
    if (problem.kind() == ObjectiveKind::Quadratic) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(problem.hessian(problem.x0), Eigen::EigenvaluesOnly);
      ok = eig.eigenvalues()(0) > 0;
    }
    if (!ok) {
      throw Error(ErrorCode::InvalidParameter,
                  "reference_solve: objective has no guaranteed strong convexity (mu = 0)");
    }
  }
  ReferenceSolution ref;
  Vector x = problem.x0;
  const double tol = 1e-12 * (1.0 + problem.gradient(x).norm());
  double best = std::numeric_limits<double>::infinity();
  Vector best_x = x;
  for (int it = 0; it <= max_iterations; ++it) {
    Vector g;
    double f = 0;
    {
      f = 0;
      g = Vector::Zero(problem.d());
      for (const auto& s : problem.shards) {
        Vector gk;
        f += s.value_gradient(x, &gk);
        g += gk;
      }
      f /= double(problem.m);
      g /= double(problem.m);
    }
    const double gn = g.norm();
    if (gn < best) {
      best = gn;
      best_x = x;
    }
    ref.iterations = it;
    if (gn <= tol) {
      ref.converged = true;
      break;
    }
    if (it == max_iterations) {
      break;
    }
    const Matrix H = problem.hessian(x);
    const Vector dx = -H.ldlt().solve(g);
    const double slope = g.dot(dx);
    double step = 1.0;
    if (-slope > 1e-14 * (1.0 + std::abs(f))) {
      while (step > 1e-12 && problem.value(x + step * dx) > f + 1e-4 * step * slope) {
        step *= 0.5;
      }
    }
    x += step * dx;
  }
  ref.x_star = best_x;
  ref.grad_norm = best;
  ref.f_star = problem.value(best_x);
  return ref;
}

std::uint64_t content_hash(const SaaProblem& problem) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  auto mix_d = [&](double v) { mix(&v, sizeof(v)); };
  auto mix_m = [&](const auto& m) { mix(m.data(), sizeof(double) * static_cast<std::size_t>(m.size())); };
  mix_d(problem.mu);
  mix_m(problem.x0);
  for (const auto& s : problem.shards) {
    const int kind = static_cast<int>(s.kind());
    mix(&kind, sizeof(kind));
    mix_m(s.features());
    mix_m(s.labels());
    mix_d(s.mu_reg());
    mix_d(s.ridge());
    mix_m(s.anchor());
    if (s.has_quadratic_term()) {
      mix_m(s.quad_Q());
      mix_m(s.quad_c());
    }
  }
  return h;
}

namespace {

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json to_json(const ReferenceSolution& r, std::uint64_t hash) {
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << hash;
  return {{"x_star", to_vec(r.x_star)}, {"f_star", r.f_star},         {"grad_norm", r.grad_norm},
          {"iterations", r.iterations}, {"converged", r.converged}, {"content_hash", hex.str()}};
}

ReferenceSolution reference_from_json(const nlohmann::json& j) {
  ReferenceSolution r;
  r.x_star = from_vec(j.at("x_star").get<std::vector<double>>());
  r.f_star = j.at("f_star").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  r.iterations = j.at("iterations").get<int>();
  r.converged = j.at("converged").get<bool>();
  return r;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::Io, "cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

}  // namespace

ReferenceSolution reference_cached(const SaaProblem& problem, const std::string& cache_dir) {
  if (cache_dir.empty()) {
    return reference_solve(problem);
  }
  const std::uint64_t hash = content_hash(problem);
  std::ostringstream name;
  name << "reference_" << std::hex << std::setw(16) << std::setfill('0') << hash << ".json";
  const auto path = std::filesystem::path(cache_dir) / name.str();
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    return reference_from_json(nlohmann::json::parse(in));
  }
  const auto ref = reference_solve(problem);
  write_json_file(path, to_json(ref, hash));
  return ref;
}

// ---------------------------------------------------------------------------
// Runs

void write_run_csv(const std::vector<RunRecord>& rows, std::ostream& out) {
  out << kRunCsvHeader << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.method << ',' << r.t << ',' << r.comm_rounds << ',' << r.f_gap << ',' << r.dist_to_opt << ','
        << r.wall_ms << ',' << r.beta_used << ',' << r.mu_used << '\n';
  }
}

double acn_gap_bound(double L, double beta, double D, int t) {
  const double tt = t;
  return 98.0 * L * D * D * D / (tt * tt * tt) + 48.0 * beta * D * D / (tt * tt);
}

RestartPlan make_restart_plan(const RunConfig& config, const PreparedProblem& prepared) {
  RestartPlan plan;
  plan.L = prepared.constants.L;
  plan.beta = prepared.beta_used;
  plan.mu = prepared.problem.strong_convexity();
  plan.es_coef = config.es_coef;
  if (!(plan.mu > 0)) {
    throw Error(ErrorCode::Config, "restarted_acn needs a strongly convex objective (mu > 0)");
  }
  plan.R0 = config.R0 ? *config.R0 : prepared.problem.gradient(prepared.problem.x0).norm() / plan.mu;
  if (!(plan.R0 > 0)) {
    plan.R0 = 1e-300;  // x0 is already optimal
  }
  return plan;
}

RunOutcome run_method(const RunConfig& config, const PreparedProblem& prepared, const ReferenceSolution& ref,
                      DistRuntime& runtime) {
  config.validate();
  const SaaProblem& problem = prepared.problem;
  const Vector& x0 = problem.x0;
  const double D = (x0 - ref.x_star).norm();
  const double L = prepared.constants.L;
  const double beta = prepared.beta_used;
  const double mu_sc = problem.strong_convexity();
  const double f_tol = 1e-12 * (1.0 + std::abs(ref.f_star));
  const std::string method = to_string(config.method);

  RunOutcome out;
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t base_rounds = runtime.comm_rounds();
  int global_t = 0;

  IterateObserver observer = [&](const IterateRecord& rec) {
    RunRecord row;
    row.method = method;
    row.t = config.method == Method::RestartedAcn ? ++global_t : rec.t;
    row.comm_rounds = rec.comm_rounds;
    row.f_gap = problem.value(rec.x) - ref.f_star;
    row.dist_to_opt = (rec.x - ref.x_star).norm();
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    row.beta_used = beta;
    row.mu_used = problem.mu;
    if (config.method == Method::Acn && row.f_gap > acn_gap_bound(L, beta, D, rec.t) + f_tol) {
      ++out.bound_violations;
    }
    if (config.budget.target_gap && !out.rounds_to_target && row.f_gap <= *config.budget.target_gap) {
      out.rounds_to_target = row.comm_rounds;
    }
    out.records.push_back(row);
    out.iterates.push_back(rec);
    if (config.budget.target_gap && out.rounds_to_target) return true;
    if (config.budget.target_rounds && row.comm_rounds >= *config.budget.target_rounds) return true;
    return row.comm_rounds >= config.max_rounds;
  };

  const int iter_cap = static_cast<int>(std::min<std::uint64_t>(config.max_rounds, 1u << 30));
  const int t_max = config.budget.t_max ? *config.budget.t_max : iter_cap;

  switch (config.method) {
    case Method::Acn: {
      const AcnParams params{L, beta, config.es_coef};
      acn_run(runtime, x0, params, t_max, false, observer);
      break;
    }
    case Method::RestartedAcn: {
      const RestartPlan plan = make_restart_plan(config, prepared);
      out.plan = plan;
      RestartOptions ro;
      ro.x_star = ref.x_star;
      ro.observer = observer;
      int stages = config.budget.stages ? *config.budget.stages : 100000;
      if (config.budget.t_max) {
        // Stages until the cumulative iteration count would exceed t_max.
        stages = 0;
        int used = 0;
        while (used + restart_iterations(plan, stages + 1) <= *config.budget.t_max) {
          used += restart_iterations(plan, ++stages);
        }
      }
      const auto res = run_restarted(runtime, x0, plan, stages, ro);
      out.restart_trace = res.trace;
      for (const auto& st : res.trace) {
        const double floor = 1e-11 * plan.R0;
        const double dist = st.dist_to_opt.value_or(0.0);
        if (dist > std::max(plan.R0 * std::ldexp(1.0, -st.s) * (1 + 1e-9), floor)) {
          ++out.bound_violations;
        }
      }
      break;
    }
    case Method::CubicNewton:
      cubic_newton_run(runtime, x0, L, beta, t_max, false, observer);
      break;
    case Method::Agd: {
      const double L1 = prepared.constants.L1;
      agd_run(runtime, x0, L1, std::min(mu_sc, L1), t_max, false, observer);
      break;
    }
  }
  out.total_rounds = runtime.comm_rounds() - base_rounds;

  nlohmann::json s;
  s["method"] = method;
  s["rounds"] = out.total_rounds;
  s["iterations"] = out.records.size();
  s["rounds_to_target"] = out.rounds_to_target ? nlohmann::json(*out.rounds_to_target) : nlohmann::json(nullptr);
  s["bound_violations"] = out.bound_violations;
  s["final_gap"] = out.records.empty() ? nlohmann::json(nullptr) : nlohmann::json(out.records.back().f_gap);
  s["f_star"] = ref.f_star;
  s["dist_x0_to_opt"] = D;
  s["beta_used"] = beta;
  s["beta_hat"] = prepared.similarity.beta_hat;
  s["beta_theory"] = problem.beta_theory;
  s["mu"] = problem.mu;
  s["strong_convexity"] = mu_sc;
  s["L0"] = prepared.constants.L0;
  s["L1"] = prepared.constants.L1;
  s["L"] = L;
  s["ground_truth"] = {{"truth_norm", config.problem.truth_norm},
                       {"label_noise", config.problem.label_noise},
                       {"w", to_vec(prepared.truth)}};
  if (out.plan) {
    s["restart_plan"] = {{"L", out.plan->L},       {"mu", out.plan->mu},     {"beta", out.plan->beta},
                         {"R0", out.plan->R0},     {"tau1", out.plan->tau1()}, {"tau2", out.plan->tau2()}};
    s["restart_trace"] = to_json(out.restart_trace);
  }
  s["config"] = to_json(config);
  out.summary = std::move(s);
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

nlohmann::json shard_to_json(const ObjectiveShard& shard, std::uint32_t worker_id) {
  nlohmann::json j;
  j["worker_id"] = worker_id;
  j["kind"] = to_string(shard.kind());
  j["d"] = shard.dim();
  j["mu_reg"] = shard.mu_reg();
  j["ridge"] = shard.ridge();
  j["domain_radius"] = shard.domain_radius();
  j["anchor"] = to_vec(shard.anchor());
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : shard.samples()) {
    std::vector<double> row{s.label};
    row.insert(row.end(), s.features.data(), s.features.data() + s.features.size());
    rows.push_back(row);
  }
  j["samples"] = rows;
  if (shard.has_quadratic_term()) {
    std::vector<std::vector<double>> Q;
    for (Eigen::Index i = 0; i < shard.quad_Q().rows(); ++i) {
      Q.push_back(to_vec(shard.quad_Q().row(i).transpose()));
    }
    j["Q"] = Q;
    j["c"] = to_vec(shard.quad_c());
  }
  return j;
}

ObjectiveShard shard_from_json(const nlohmann::json& j, std::uint32_t* worker_id) {
  try {
    const auto kind = parse_objective_kind(j.at("kind").get<std::string>());
    const auto d = j.at("d").get<Eigen::Index>();
    const Vector anchor = from_vec(j.at("anchor").get<std::vector<double>>());
    const double mu_reg = j.at("mu_reg").get<double>();
    if (worker_id) {
      *worker_id = j.at("worker_id").get<std::uint32_t>();
    }
    if (j.contains("Q")) {
      const auto rows = j.at("Q").get<std::vector<std::vector<double>>>();
      Matrix Q(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        Q.row(i) = from_vec(rows.at(static_cast<std::size_t>(i))).transpose();
      }
      return ObjectiveShard::quadratic_form(Q, from_vec(j.at("c").get<std::vector<double>>()), mu_reg, anchor);
    }
    std::vector<DataSample> samples;
    for (const auto& row : j.at("samples")) {
      const auto v = row.get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != d + 1) {
        throw Error(ErrorCode::Io, "shard file: sample row has wrong length");
      }
      samples.push_back({Eigen::Map<const Vector>(v.data() + 1, d), v[0]});
    }
    return ObjectiveShard::from_samples(kind, samples, d, mu_reg, anchor, j.value("ridge", 0.0))
        .with_domain_radius(j.value("domain_radius", 10.0));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, std::string("shard file: ") + e.what());
  }
}

void cmd_gen(const RunConfig& config, const std::filesystem::path& out_dir) {
  const auto& pc = config.problem;
  GenOptions gen;
  gen.label_noise = pc.label_noise;
  gen.truth_norm = pc.truth_norm;
  const Dataset ds = gen_synthetic(pc.seed, pc.N, pc.d, pc.kind, pc.feat_bound, gen);
  SaaOptions so;
  so.kind = pc.kind;
  so.m = pc.m;
  so.R = pc.R;
  so.mu_rule = pc.mu_rule;
  so.mu_scale = pc.mu_scale;
  so.beta_scale = pc.beta_scale;
  so.ridge = pc.ridge;
  so.regularize = pc.regularize;
  const SaaProblem problem = build_saa_problem(ds, so);

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / "dataset.csv");
    write_csv(ds, csv);
  }
  {
    const auto bytes = to_binary(ds);
    std::ofstream bin(out_dir / "dataset.bin", std::ios::binary);
    bin.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  for (std::size_t k = 0; k < problem.m; ++k) {
    write_json_file(out_dir / ("shard_" + std::to_string(k + 1) + ".json"),
                    shard_to_json(problem.shards[k], static_cast<std::uint32_t>(k + 1)));
  }
  write_json_file(out_dir / "problem.json", {{"N", ds.N()},
                                             {"d", ds.d},
                                             {"m", problem.m},
                                             {"n", problem.n},
                                             {"mu", problem.mu},
                                             {"beta_theory", problem.beta_theory},
                                             {"R", problem.R},
                                             {"x0", to_vec(problem.x0)},
                                             {"content_hash", content_hash(problem)},
                                             {"config", to_json(config)}});
}

ReferenceSolution cmd_reference_solve(const RunConfig& config, const std::filesystem::path& out_file) {
  const PreparedProblem prepared = prepare_problem(config.problem);
  const ReferenceSolution ref = reference_cached(prepared.problem, config.output.cache_dir);
  if (!out_file.empty()) {
    write_json_file(out_file, to_json(ref, content_hash(prepared.problem)));
  }
  return ref;
}

RunOutcome cmd_run(const RunConfig& config, bool external_workers) {
  config.validate();
  const PreparedProblem prepared = prepare_problem(config.problem);
  const ReferenceSolution ref = reference_cached(prepared.problem, config.output.cache_dir);
  RuntimeOptions ro;
  ro.threads = config.threads;
  const TransportSpec transport = TransportSpec::parse(config.transport);
  std::unique_ptr<DistRuntime> runtime;
  if (external_workers && transport.kind == TransportSpec::Kind::Tcp) {
    runtime = std::make_unique<TcpRuntime>(prepared.problem.shards, transport.host, transport.port, ro, false);
  } else {
    runtime = start_workers(prepared.problem, transport, ro);
  }
  RunOutcome out = run_method(config, prepared, ref, *runtime);
  runtime->shutdown();
  if (!config.output.csv.empty()) {
    const std::filesystem::path path(config.output.csv);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream csv(path);
    if (!csv) throw Error(ErrorCode::Io, "cannot write " + config.output.csv);
    write_run_csv(out.records, csv);
  }
  if (!config.output.summary.empty()) {
    write_json_file(config.output.summary, out.summary);
  }
  return out;
}

std::size_t workers_for(std::size_t N) {
  const double target = std::log(std::pow(double(N), 2.0 / 3.0));
  std::size_t best = 1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t m = 1; m <= N; ++m) {
    if (N % m != 0) continue;
    const double dist = std::abs(std::log(double(m)) - target);
    if (dist < best_dist - 1e-12) {
      best = m;
      best_dist = dist;
    }
  }
  return best;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::InvalidParameter, "loglog_slope: need >= 2 paired points");
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= double(x.size());
  my /= double(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

ScalingResult cmd_scaling(const RunConfig& tmpl, const std::vector<std::size_t>& N_list,
                          const std::vector<Method>& methods, std::ostream* csv) {
  if (N_list.size() < 4) {
    throw Error(ErrorCode::Config, "scaling: need at least 4 values of N");
  }
  ScalingResult result;
  if (csv) {
    *csv << "N,m,n,method,target_gap,rounds,reached,mu,beta\n" << std::setprecision(17);
  }
  for (std::size_t N : N_list) {
    RunConfig cfg = tmpl;
    cfg.problem.N = N;
    cfg.problem.m = workers_for(N);
    cfg.budget = {};
    const PreparedProblem prepared = prepare_problem(cfg.problem);
    const ReferenceSolution ref = reference_cached(prepared.problem, tmpl.output.cache_dir);
    // Statistical-error level C L0 R / sqrt(N), with L0 of the loss alone.
    const double loss_L0 = prepared.constants.L0 - prepared.problem.mu * 10.0 * cfg.problem.R -
                           prepared.problem.shards.front().ridge() *
                               (prepared.problem.x0.norm() + 10.0 * cfg.problem.R);
    const double target = tmpl.scaling_C * loss_L0 * cfg.problem.R / std::sqrt(double(N));
    cfg.budget.target_gap = target;
    for (Method method : methods) {
      cfg.method = method;
      RuntimeOptions ro;
      ro.threads = cfg.threads;
      auto runtime = start_workers(prepared.problem, TransportSpec::parse(cfg.transport), ro);
      const RunOutcome run = run_method(cfg, prepared, ref, *runtime);
      runtime->shutdown();
      ScalingRow row;
      row.N = N;
      row.m = cfg.problem.m;
      row.n = N / cfg.problem.m;
      row.method = to_string(method);
      row.target_gap = target;
      row.reached = run.rounds_to_target.has_value();
      row.rounds = run.rounds_to_target.value_or(run.total_rounds);
      row.mu = prepared.problem.mu;
      row.beta = prepared.beta_used;
      if (csv) {
        *csv << row.N << ',' << row.m << ',' << row.n << ',' << row.method << ',' << row.target_gap << ','
             << row.rounds << ',' << (row.reached ? 1 : 0) << ',' << row.mu << ',' << row.beta << '\n';
      }
      result.rows.push_back(row);
      if (!row.reached) {
        throw Error(ErrorCode::NonConvergence, "scaling: " + row.method + " did not reach the target at N = " +
                                                   std::to_string(N));
      }
    }
  }
  for (Method method : methods) {
    std::vector<double> xs, ys;
    for (const auto& r : result.rows) {
      if (r.method == to_string(method)) {
        xs.push_back(double(r.N));
        ys.push_back(double(std::max<std::uint64_t>(r.rounds, 1)));
      }
    }
    result.slopes.emplace_back(to_string(method), loglog_slope(xs, ys));
  }
  if (csv) {
    for (const auto& [name, slope] : result.slopes) {
      *csv << "# slope," << name << ',' << slope << '\n';
    }
  }
  return result;
}

BetaStudyResult cmd_beta_study(const RunConfig& tmpl, const std::vector<std::size_t>& n_list, std::ostream* csv) {
  if (n_list.size() < 4) {
    throw Error(ErrorCode::Config, "beta-study: need at least 4 values of n");
  }
  BetaStudyResult result;
  if (csv) {
    *csv << "n,rep,seed,beta_hat,beta_theory,control\n" << std::setprecision(17);
  }
  const std::size_t reps = std::max<std::size_t>(1, tmpl.beta_reps);
  for (std::size_t n : n_list) {
    std::vector<double> values;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      ProblemConfig pc = tmpl.problem;
      pc.N = pc.m * n;
      pc.seed = tmpl.problem.seed + rep;
      const PreparedProblem prepared = prepare_problem(pc);
      BetaStudyRow row{n, int(rep), pc.seed, prepared.similarity.beta_hat, prepared.problem.beta_theory, false};
      values.push_back(row.beta_hat);
      result.rows.push_back(row);
      if (rep == 0) {
        // Control: every worker holds the same samples.
        SaaProblem same = prepared.problem;
        for (auto& s : same.shards) {
          s = same.shards.front();
        }
        const auto probes = default_probes(same, pc.probe_count, 10.0 * pc.R, pc.seed);
        result.rows.push_back({n, 0, pc.seed, estimate_beta(same, probes).beta_hat, same.beta_theory, true});
      }
    }
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    result.medians.push_back(values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]));
  }
  if (csv) {
    for (const auto& r : result.rows) {
      *csv << r.n << ',' << r.rep << ',' << r.seed << ',' << r.beta_hat << ',' << r.beta_theory << ','
           << (r.control ? 1 : 0) << '\n';
    }
  }
  std::vector<double> ns(n_list.begin(), n_list.end());
  result.slope = loglog_slope(ns, result.medians);
  if (csv) {
    *csv << "# slope," << result.slope << '\n';
  }
  return result;
}

}  // namespace acn
