#pragma once

// Experiment orchestration behind the command-line tool: configuration,
// problem preparation, reference solves, method runs with guarantee checks,
// and the scaling and similarity studies.

#include <acn/baselines.hpp>
#include <acn/restart.hpp>
#include <acn/saa.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace acn {

enum class Method { Acn, RestartedAcn, CubicNewton, Agd };

const char* to_string(Method m);
Method parse_method(const std::string& s);

struct ProblemConfig {
  ObjectiveKind kind = ObjectiveKind::Logistic;
  std::size_t N = 256;
  Eigen::Index d = 20;
  std::size_t m = 4;
  std::uint64_t seed = 7;
  double feat_bound = 1.0;
  MuRule mu_rule = MuRule::LogNOverN;
  double mu_scale = 1.0;
  bool regularize = true;
  double ridge = 0.0;  ///< intrinsic per-sample strong convexity
  double R = 1.0;
  std::string beta_source = "empirical";  ///< empirical | theory | fixed:<value>
  double beta_scale = 1.0;
  double label_noise = 0.1;
  double truth_norm = 4.0;
  std::size_t probe_count = 10;
};

struct BudgetConfig {
  std::optional<int> t_max;
  std::optional<int> stages;
  std::optional<double> target_gap;
  std::optional<std::uint64_t> target_rounds;
};

struct OutputConfig {
  std::string csv;
  std::string summary;
  std::string cache_dir;
};

struct RunConfig {
  ProblemConfig problem;
  Method method = Method::Acn;
  BudgetConfig budget;
  OutputConfig output;
  std::string transport = "inproc";
  std::uint64_t max_rounds = 200000;
  std::optional<double> R0;  ///< restart radius; default ||grad F(x0)|| / mu
  EsCoefRule es_coef = EsCoefRule::CurrentA;
  double scaling_C = 1.0;    ///< target gap C L0 R / sqrt(N) in scaling runs
  std::size_t beta_reps = 5;
  unsigned threads = 0;

  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

/// Applies "a.b.c=value" to a JSON document; value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

struct PreparedProblem {
  Dataset dataset;
  SaaProblem problem;
  SimilarityReport similarity;  ///< on the initial probes
  LipschitzConstants constants;
  double beta_used = 0;
  Vector truth;
};

/// Builds the SAA problem and measures beta on x0 plus probe_count random
/// points of the domain ball.
PreparedProblem prepare_problem(const ProblemConfig& pc);

double resolve_beta(const ProblemConfig& pc, const SaaProblem& problem, double beta_hat);

struct ReferenceSolution {
  Vector x_star;
  double f_star = 0;
  double grad_norm = 0;
  int iterations = 0;
  bool converged = false;
};

/// Damped Newton with the exact global Hessian, run until
/// ||grad F|| <= 1e-12 (1 + ||grad F(x0)||). Refuses problems without a
/// guaranteed strong convexity modulus.
ReferenceSolution reference_solve(const SaaProblem& problem, int max_iterations = 200);

/// FNV-1a hash of the shards' data, regularization and anchor.
std::uint64_t content_hash(const SaaProblem& problem);

/// reference_solve with an on-disk cache keyed by content_hash.
ReferenceSolution reference_cached(const SaaProblem& problem, const std::string& cache_dir);

struct RunRecord {
  std::string method;
  int t = 0;
  std::uint64_t comm_rounds = 0;
  double f_gap = 0;
  double dist_to_opt = 0;
  double wall_ms = 0;
  double beta_used = 0;
  double mu_used = 0;
};

inline constexpr const char* kRunCsvHeader =
    "method,t,comm_rounds,f_gap,dist_to_opt,wall_ms,beta_used,mu_used";

void write_run_csv(const std::vector<RunRecord>& rows, std::ostream& out);

/// F(x_t) - F* <= 98 L D^3 / t^3 + 48 beta D^2 / t^2 with D = ||x0 - x*||.
double acn_gap_bound(double L, double beta, double D, int t);

struct RunOutcome {
  std::vector<RunRecord> records;
  std::optional<std::uint64_t> rounds_to_target;
  std::uint64_t total_rounds = 0;
  int bound_violations = 0;
  RestartTrace restart_trace;
  std::optional<RestartPlan> plan;
  nlohmann::json summary;
  std::vector<IterateRecord> iterates;
};

/// Runs the configured method on a live runtime and checks the applicable
/// convergence guarantees against the reference solution.
RunOutcome run_method(const RunConfig& config, const PreparedProblem& prepared,
                      const ReferenceSolution& ref, DistRuntime& runtime);

/// Restart plan from a prepared problem: mu = guaranteed strong convexity,
/// R0 from config or ||grad F(x0)|| / mu.
RestartPlan make_restart_plan(const RunConfig& config, const PreparedProblem& prepared);

// CLI subcommands.
void cmd_gen(const RunConfig& config, const std::filesystem::path& out_dir);
ReferenceSolution cmd_reference_solve(const RunConfig& config, const std::filesystem::path& out_file);
/// With external_workers and a tcp transport, waits for `worker` processes
/// instead of serving the shards from local threads.
RunOutcome cmd_run(const RunConfig& config, bool external_workers = false);

/// Number of workers for N: the divisor of N closest to N^{2/3} in log scale.
std::size_t workers_for(std::size_t N);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct ScalingRow {
  std::size_t N = 0;
  std::size_t m = 0;
  std::size_t n = 0;
  std::string method;
  double target_gap = 0;
  std::uint64_t rounds = 0;
  bool reached = false;
  double mu = 0;
  double beta = 0;
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  std::vector<std::pair<std::string, double>> slopes;  ///< per method
};

ScalingResult cmd_scaling(const RunConfig& tmpl, const std::vector<std::size_t>& N_list,
                          const std::vector<Method>& methods, std::ostream* csv = nullptr);

struct BetaStudyRow {
  std::size_t n = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  double beta_hat = 0;
  double beta_theory = 0;
  bool control = false;  ///< identical shards
};

struct BetaStudyResult {
  std::vector<BetaStudyRow> rows;
  std::vector<double> medians;  ///< per n, non-control rows
  double slope = 0;
};

BetaStudyResult cmd_beta_study(const RunConfig& tmpl, const std::vector<std::size_t>& n_list,
                               std::ostream* csv = nullptr);

// Shard files for the worker subcommand.
nlohmann::json shard_to_json(const ObjectiveShard& shard, std::uint32_t worker_id);
ObjectiveShard shard_from_json(const nlohmann::json& j, std::uint32_t* worker_id = nullptr);

}  // namespace acn
