#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "outerproj/oracle.hpp"
#include "outerproj/outerproj.hpp"

namespace outerproj::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr const char* kMetricsSchema = "outerproj.metrics/1";
constexpr const char* kManifestSchema = "outerproj.manifest/1";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ReplayMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Files, hashes and manifests

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fnv1a64(const fs::path& path) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : read_bytes(path)) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

fs::path resolve_out_dir(const std::string& flag) {
  fs::path dir = flag;
  if (dir.empty()) {
    const char* env = std::getenv(kOutDirEnv);
    dir = env != nullptr && *env != '\0' ? fs::path(env) : fs::path(".");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return fs::absolute(dir);
}

std::string absolute_input(const std::string& path) {
  return path.empty() ? path : fs::absolute(path).lexically_normal().string();
}

void write_json(const fs::path& path, const Json& value) { io::write_text(path, value.dump(2) + "\n"); }

/// Records one run. `parameters` holds every resolved flag (keys are flag
/// names without dashes), so that replay can rebuild the command line.
void write_manifest(const fs::path& dir, const std::string& command, const Json& parameters,
                    const Json& seeds, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  Json manifest;
  manifest["schema"] = kManifestSchema;
  manifest["command"] = command;
  manifest["version"] = kVersion;
  manifest["parameters"] = parameters;
  manifest["seeds"] = seeds;
  Json in = Json::object();
  for (const std::string& key : inputs) {
    const std::string path = parameters.at(key).get<std::string>();
    if (!path.empty()) in[key] = {{"path", path}, {"fnv1a64", fnv1a64(path)}};
  }
  manifest["inputs"] = in;
  manifest["outputs"] = outputs;
  manifest["created_utc"] = utc_timestamp();
  write_json(dir / "manifest.json", manifest);
}

// ---------------------------------------------------------------------------
// Small helpers

std::string csv_line(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) line += ',';
    line += fields[i];
  }
  return line + '\n';
}

Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& task) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Matrix read_auto(const std::string& path) { return io::read_matrix(path, io::has_header_row(path)); }

LossKind parse_loss(const std::string& name) {
  if (name == "logistic") return LossKind::Logistic;
  if (name == "matsusita") return LossKind::Matsusita;
  throw UsageError("unknown loss '" + name + "' (expected logistic or matsusita)");
}

Task parse_task(const std::string& name) {
  if (name == "regression") return Task::Regression;
  if (name == "classification") return Task::Classification;
  throw UsageError("unknown task '" + name + "' (expected regression or classification)");
}

ConstraintKind parse_kind(const std::string& name) {
  try {
    return parse_constraint_kind(name);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

/// Features and targets from either --data (label last) or --X/--y.
struct Inputs {
  std::string data;
  std::string X;
  std::string y;
};

void add_input_options(CLI::App& cmd, Inputs& in) {
  cmd.add_option("--data", in.data, "CSV with features followed by the target column");
  cmd.add_option("--X", in.X, "CSV feature matrix (one row per sample)");
  cmd.add_option("--y", in.y, "CSV target column");
}

void resolve_inputs(Inputs& in) {
  const bool split = !in.X.empty() || !in.y.empty();
  if (in.data.empty() == !split || (split && (in.X.empty() || in.y.empty()))) {
    throw UsageError("give either --data or both --X and --y");
  }
  in.data = absolute_input(in.data);
  in.X = absolute_input(in.X);
  in.y = absolute_input(in.y);
}

std::pair<Matrix, Vector> load_inputs(const Inputs& in) {
  if (!in.data.empty()) {
    const data::Dataset ds = io::load_csv(in.data, data::Kind::Responses, io::has_header_row(in.data));
    return {ds.X, ds.y};
  }
  Matrix X = read_auto(in.X);
  const Matrix Y = read_auto(in.y);
  if (Y.cols() != 1) throw DataError(in.y + ": expected a single column");
  if (Y.rows() != X.rows()) {
    throw DimensionError(in.y + ": expected " + std::to_string(X.rows()) + " rows, got " + std::to_string(Y.rows()));
  }
  return {std::move(X), Vector(Y.col(0))};
}

RiskModel make_model(Task task, LossKind loss, Matrix X, Vector y) {
  return task == Task::Regression ? RiskModel::regression(std::move(X), std::move(y))
                                  : RiskModel::classification(std::move(X), std::move(y), loss);
}

/// Graph-based constraints read one graph file; pairmax and pairdiff use it
/// with all signs set to +1.
ConstraintSpec make_constraint(ConstraintKind kind, const std::optional<FeatureGraph>& graph, double eta) {
  if (kind == ConstraintKind::L1) return ConstraintSpec::l1(eta);
  if (!graph) throw UsageError(std::string("constraint '") + constraint_kind_name(kind) + "' needs --graph");
  if (kind == ConstraintKind::SignedPairwiseDiff) return ConstraintSpec::with_graph(kind, *graph, eta);
  return ConstraintSpec::with_graph(kind, graph->unsigned_copy(), eta);
}

std::string eta_label(ConstraintKind kind, double eta) {
  return std::string(constraint_kind_name(kind)) + ":" + io::format_double(eta);
}

// ---------------------------------------------------------------------------
// synth

struct SynthParams {
  int example = 2;
  std::size_t samples = 200;
  std::size_t regulators = 10;
  std::size_t genes_per_regulator = 10;
  double correlation = 0.7;
  double noise_sigma = 2.0;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> response_seed;
  bool labels = false;
  std::string out;
};

void add_synth(CLI::App& app, SynthParams& p) {
  CLI::App* cmd = app.add_subcommand("synth", "Generate a synthetic regulatory-network dataset");
  cmd->add_option("--example", p.example, "True regressor: 1, 2 or 3")->check(CLI::Range(1, 3));
  cmd->add_option("--samples,--m", p.samples, "Number of samples");
  cmd->add_option("--regulators,--n-reg", p.regulators, "Number of regulators");
  cmd->add_option("--genes-per-regulator,--n-g", p.genes_per_regulator, "Genes per regulator");
  cmd->add_option("--correlation", p.correlation, "Regulator-gene correlation");
  cmd->add_option("--noise-sigma,--sigma", p.noise_sigma, "Response noise standard deviation");
  cmd->add_option("--seed", p.seed, "Seed of the feature matrix");
  cmd->add_option("--response-seed", p.response_seed, "Seed of the response noise (default: seed + 1)");
  cmd->add_flag("--labels", p.labels, "Write sign(y) as +-1 class labels instead of responses");
  cmd->add_option("--out", p.out, "Output directory");
}

int run_synth(SynthParams p, std::ostream& out) {
  const fs::path dir = resolve_out_dir(p.out);
  const std::uint64_t response_seed = p.response_seed.value_or(p.seed + 1);

  data::NetworkParams params;
  params.samples = p.samples;
  params.regulators = p.regulators;
  params.genes_per_regulator = p.genes_per_regulator;
  params.correlation = p.correlation;
  params.noise_sigma = p.noise_sigma;
  params.seed = p.seed;
  if (p.genes_per_regulator != data::kExampleGenes) {
    throw UsageError("the example regressors need --genes-per-regulator 10");
  }
  const auto example = static_cast<data::Example>(p.example);
  const data::Network net = data::generate_network(params);
  const Vector w = data::true_regressor(example, params.dim());
  Vector y = data::generate_response(net.X, w, params.noise_sigma, response_seed);
  if (p.labels) y = y.unaryExpr([](double v) { return v < 0.0 ? -1.0 : 1.0; });

  io::write_matrix(dir / "X.csv", net.X);
  io::write_vector(dir / "y.csv", y);
  io::write_vector(dir / "w_true.csv", w);
  io::write_graph(dir / "graph.tsv", data::signed_graph_for_example(example, params.dim()));

  Json parameters;
  parameters["example"] = p.example;
  parameters["samples"] = p.samples;
  parameters["regulators"] = p.regulators;
  parameters["genes-per-regulator"] = p.genes_per_regulator;
  parameters["correlation"] = p.correlation;
  parameters["noise-sigma"] = p.noise_sigma;
  parameters["seed"] = p.seed;
  parameters["response-seed"] = response_seed;
  parameters["labels"] = p.labels;
  write_manifest(dir, "synth", parameters, {{"features", p.seed}, {"response", response_seed}}, {},
                 {"X.csv", "y.csv", "w_true.csv", "graph.tsv"});
  out << "synth: m=" << params.samples << " d=" << params.dim() << " nonzeros=" << count_nonzeros(w, 0.0)
      << " -> " << dir.string() << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------------------
// solve

struct SolveParams {
  Inputs inputs;
  std::string task = "regression";
  std::string loss = "logistic";
  std::vector<std::string> constraints = {"l1"};
  std::string graph;
  std::vector<double> eta;
  std::optional<double> eta_min;
  std::optional<double> eta_max;
  std::size_t eta_count = 10;
  int max_inner_iters = ProjectionOptions{}.max_inner_iters;
  double feasibility_tolerance = ProjectionOptions{}.feasibility_tolerance;
  std::optional<double> distance_tolerance;
  int max_outer_iters = SolverConfig{}.max_outer_iters;
  double rel_change_tolerance = SolverConfig{}.rel_change_tolerance;
  std::optional<std::size_t> target_l0;
  double zero_threshold = SolverConfig{}.zero_threshold;
  double step_scale = 1.0;
  std::optional<double> fixed_step;
  bool strict = false;
  double strict_xi = ErrorSchedule{}.xi;
  double strict_exponent = ErrorSchedule{}.exponent;
  int strict_max_inner_iters = ErrorSchedule{}.max_inner_iters;
  bool no_restore = false;
  bool no_warm_start = false;
  std::size_t folds = 0;
  double train_fraction = 0.5;
  std::uint64_t split_seed = 0;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string out;
};

void add_solve(CLI::App& app, SolveParams& p) {
  CLI::App* cmd = app.add_subcommand("solve", "Minimize the empirical risk over one or more level sets");
  add_input_options(*cmd, p.inputs);
  cmd->add_option("--task", p.task, "regression or classification");
  cmd->add_option("--loss", p.loss, "Classification loss: logistic or matsusita");
  cmd->add_option("--constraint", p.constraints, "Comma list of l1, pairmax, pairdiff, signed")->delimiter(',');
  cmd->add_option("--graph", p.graph, "Feature graph (TSV) for the pairwise constraints");
  cmd->add_option("--eta", p.eta, "Bound or comma list of bounds, sorted")->delimiter(',');
  cmd->add_option("--eta-min", p.eta_min, "Smallest bound of a geometric grid");
  cmd->add_option("--eta-max", p.eta_max, "Largest bound of a geometric grid");
  cmd->add_option("--eta-count", p.eta_count, "Points of the geometric grid");
  cmd->add_option("--max-inner-iters", p.max_inner_iters, "Inner projection budget K");
  cmd->add_option("--feasibility-tolerance", p.feasibility_tolerance, "Violation accepted as feasible");
  cmd->add_option("--distance-tolerance", p.distance_tolerance, "Stop the inner loop once steps fall below this");
  cmd->add_option("--max-outer-iters", p.max_outer_iters, "Outer iteration budget");
  cmd->add_option("--rel-change-tolerance", p.rel_change_tolerance, "Relative step size for convergence");
  cmd->add_option("--target-l0", p.target_l0, "Stop once at most this many coefficients are nonzero");
  cmd->add_option("--zero-threshold", p.zero_threshold, "Coefficients at or below this magnitude count as zero");
  cmd->add_option("--step-scale", p.step_scale, "Step gamma = scale / beta");
  cmd->add_option("--fixed-step", p.fixed_step, "Fixed step gamma (overrides --step-scale)");
  cmd->add_flag("--strict", p.strict, "Drive the inner violation below xi / (n+1)^exponent");
  cmd->add_option("--strict-xi", p.strict_xi, "xi of the strict schedule");
  cmd->add_option("--strict-exponent", p.strict_exponent, "Exponent of the strict schedule");
  cmd->add_option("--strict-max-inner-iters", p.strict_max_inner_iters, "Inner budget of the strict schedule");
  cmd->add_flag("--no-restore", p.no_restore, "Return the last iterate without feasibility restoration");
  cmd->add_flag("--no-warm-start", p.no_warm_start, "Solve every grid point from zero");
  cmd->add_option("--folds", p.folds, "Random train/test splits for bound selection (0: fit all data)");
  cmd->add_option("--train-fraction", p.train_fraction, "Training share of each split");
  cmd->add_option("--split-seed", p.split_seed, "Seed of the splits");
  cmd->add_option("--threads", p.threads, "Worker threads (results do not depend on it)");
  cmd->add_option("--out", p.out, "Output directory");
}

SolverConfig solver_config(const SolveParams& p) {
  SolverConfig config;
  config.projection.max_inner_iters = p.max_inner_iters;
  config.projection.feasibility_tolerance = p.feasibility_tolerance;
  config.projection.distance_tolerance = p.distance_tolerance;
  config.max_outer_iters = p.max_outer_iters;
  config.rel_change_tolerance = p.rel_change_tolerance;
  config.target_l0 = p.target_l0;
  config.zero_threshold = p.zero_threshold;
  if (p.fixed_step) {
    config.step = FixedStep{*p.fixed_step};
  } else {
    config.step = ConstantOverBeta{p.step_scale};
  }
  if (p.strict) config.strict_schedule = ErrorSchedule{p.strict_xi, p.strict_exponent, p.strict_max_inner_iters};
  config.restore_feasibility = !p.no_restore;
  return config;
}

std::vector<double> resolve_grid(const SolveParams& p) {
  if (!p.eta.empty()) {
    if (p.eta_min || p.eta_max) throw UsageError("give either --eta or --eta-min/--eta-max");
    if (!std::is_sorted(p.eta.begin(), p.eta.end())) throw UsageError("--eta values must be ascending");
    return p.eta;
  }
  if (!p.eta_min || !p.eta_max) throw UsageError("give --eta or both --eta-min and --eta-max");
  if (!(*p.eta_min > 0.0 && *p.eta_max >= *p.eta_min)) throw UsageError("need 0 < eta-min <= eta-max");
  if (p.eta_count < 1) throw UsageError("--eta-count must be >= 1");
  std::vector<double> grid(p.eta_count);
  const double ratio = *p.eta_max / *p.eta_min;
  for (std::size_t i = 0; i < p.eta_count; ++i) {
    grid[i] = p.eta_count == 1 ? *p.eta_min
                               : *p.eta_min * std::pow(ratio, static_cast<double>(i) / static_cast<double>(p.eta_count - 1));
  }
  grid.back() = p.eta_count == 1 ? *p.eta_min : *p.eta_max;
  return grid;
}

/// Solutions for every bound of the grid; warm-started in order unless
/// warm starts are off, in which case each bound is an independent task.
std::vector<SolverResult> solve_grid(const RiskModel& model, const ConstraintSpec& constraint,
                                     const std::vector<double>& grid, const SolverConfig& config,
                                     bool warm_start) {
  std::vector<SolverResult> results;
  results.reserve(grid.size());
  if (warm_start) {
    for (PathPoint& point : solve_path(model, constraint, grid, config)) results.push_back(std::move(point.result));
  } else {
    for (double eta : grid) results.push_back(solve(model, constraint.with_bound(eta), config));
  }
  return results;
}

struct Run {
  ConstraintKind kind;
  double eta;
  SolverResult result;
};

Json run_summary(const Run& run, const RiskModel& model, const SolverConfig& config) {
  const Vector& w = run.result.weights;
  Json j;
  j["constraint"] = constraint_kind_name(run.kind);
  j["eta"] = run.eta;
  j["stop_reason"] = stop_reason_name(run.result.stop_reason);
  j["outer_iterations"] = run.result.outer_iterations();
  int inner = 0;
  for (const TraceRecord& r : run.result.trace) inner += r.inner_iterations;
  j["inner_iterations"] = inner;
  j["restoration_scale"] = number(run.result.restoration_scale);
  j["risk"] = number(model.value(w));
  j["nonzeros"] = count_nonzeros(w, config.zero_threshold);
  if (model.task() == Task::Regression) {
    j["train_mse"] = number(metrics::mse(model.targets(), model.scores(w)));
  } else {
    j["train_auc"] = number(metrics::auc_from_scores(model.loss(), model.targets(), model.scores(w)));
  }
  return j;
}

double test_metric(Task task, LossKind loss, const Matrix& X, const Vector& y, const Vector& w) {
  return task == Task::Regression ? metrics::mse(y, X * w) : metrics::auc_from_scores(loss, y, X * w);
}

void write_runs(const fs::path& dir, const std::vector<Run>& runs, Eigen::Index dim) {
  std::ostringstream w_csv;
  std::vector<std::string> header;
  for (const Run& run : runs) header.push_back(eta_label(run.kind, run.eta));
  w_csv << csv_line(header);
  Matrix W(dim, static_cast<Eigen::Index>(runs.size()));
  for (std::size_t c = 0; c < runs.size(); ++c) W.col(static_cast<Eigen::Index>(c)) = runs[c].result.weights;
  io::write_matrix(w_csv, W);
  io::write_text(dir / "w.csv", w_csv.str());

  std::ostringstream trace;
  trace << "constraint,eta,iteration,risk,constraint_value,violation,nonzeros,inner_iterations\n";
  for (const Run& run : runs) {
    const std::string prefix = std::string(constraint_kind_name(run.kind)) + ',' + io::format_double(run.eta) + ',';
    for (const TraceRecord& r : run.result.trace) {
      trace << prefix << r.iteration << ',' << io::format_double(r.risk) << ',' << io::format_double(r.constraint)
            << ',' << io::format_double(r.violation) << ',' << r.nonzeros << ',' << r.inner_iterations << '\n';
    }
  }
  io::write_text(dir / "trace.csv", trace.str());
}

Json solve_parameters(const SolveParams& p, const std::vector<double>& grid) {
  Json j;
  j["data"] = p.inputs.data;
  j["X"] = p.inputs.X;
  j["y"] = p.inputs.y;
  j["task"] = p.task;
  j["loss"] = p.loss;
  j["constraint"] = p.constraints;
  j["graph"] = p.graph;
  j["eta"] = grid;
  j["max-inner-iters"] = p.max_inner_iters;
  j["feasibility-tolerance"] = p.feasibility_tolerance;
  j["distance-tolerance"] = p.distance_tolerance ? Json(*p.distance_tolerance) : Json(nullptr);
  j["max-outer-iters"] = p.max_outer_iters;
  j["rel-change-tolerance"] = p.rel_change_tolerance;
  j["target-l0"] = p.target_l0 ? Json(*p.target_l0) : Json(nullptr);
  j["zero-threshold"] = p.zero_threshold;
  j["step-scale"] = p.step_scale;
  j["fixed-step"] = p.fixed_step ? Json(*p.fixed_step) : Json(nullptr);
  j["strict"] = p.strict;
  j["strict-xi"] = p.strict_xi;
  j["strict-exponent"] = p.strict_exponent;
  j["strict-max-inner-iters"] = p.strict_max_inner_iters;
  j["no-restore"] = p.no_restore;
  j["no-warm-start"] = p.no_warm_start;
  j["folds"] = p.folds;
  j["train-fraction"] = p.train_fraction;
  j["split-seed"] = p.split_seed;
  j["threads"] = p.threads;
  return j;
}

int run_solve(SolveParams p, std::ostream& out) {
  resolve_inputs(p.inputs);
  p.graph = absolute_input(p.graph);
  const Task task = parse_task(p.task);
  const LossKind loss = parse_loss(p.loss);
  std::vector<ConstraintKind> kinds;
  for (const std::string& name : p.constraints) kinds.push_back(parse_kind(name));
  if (kinds.empty()) throw UsageError("--constraint needs at least one kind");
  const std::vector<double> grid = resolve_grid(p);
  const SolverConfig config = solver_config(p);
  const bool warm_start = !p.no_warm_start;
  const fs::path dir = resolve_out_dir(p.out);

  auto [X, y] = load_inputs(p.inputs);
  std::optional<FeatureGraph> graph;
  if (!p.graph.empty()) graph = io::load_graph(p.graph, static_cast<std::size_t>(X.cols()));
  std::vector<ConstraintSpec> specs;
  for (ConstraintKind kind : kinds) specs.push_back(make_constraint(kind, graph, grid.front()));
  const RiskModel full = make_model(task, loss, X, y);

  Json metrics;
  metrics["schema"] = kMetricsSchema;
  metrics["task"] = p.task;
  if (task == Task::Classification) metrics["loss"] = p.loss;
  metrics["samples"] = X.rows();
  metrics["dim"] = X.cols();

  std::vector<Run> runs;
  if (p.folds == 0) {
    std::vector<std::vector<SolverResult>> per_kind(kinds.size());
    parallel_for(kinds.size(), p.threads, [&](std::size_t c) {
      per_kind[c] = solve_grid(full, specs[c], grid, config, warm_start);
    });
    for (std::size_t c = 0; c < kinds.size(); ++c) {
      for (std::size_t e = 0; e < grid.size(); ++e) runs.push_back({kinds[c], grid[e], std::move(per_kind[c][e])});
    }
  } else {
    const auto m = static_cast<std::size_t>(X.rows());
    const std::vector<data::Split> splits = data::random_splits(m, p.train_fraction, p.folds, p.split_seed);
    // scores[c][f][e]: test metric of constraint c, fold f, bound e.
    std::vector<std::vector<std::vector<double>>> scores(
        kinds.size(), std::vector<std::vector<double>>(p.folds, std::vector<double>(grid.size())));
    const std::size_t per_fold = warm_start ? 1 : grid.size();
    parallel_for(kinds.size() * p.folds * per_fold, p.threads, [&](std::size_t task_index) {
      const std::size_t c = task_index / (p.folds * per_fold);
      const std::size_t f = (task_index / per_fold) % p.folds;
      const data::Split& split = splits[f];
      const RiskModel model = make_model(task, loss, data::select_rows(X, split.train), data::select_rows(y, split.train));
      const Matrix X_test = data::select_rows(X, split.test);
      const Vector y_test = data::select_rows(y, split.test);
      if (warm_start) {
        const std::vector<SolverResult> results = solve_grid(model, specs[c], grid, config, true);
        for (std::size_t e = 0; e < grid.size(); ++e) {
          scores[c][f][e] = test_metric(task, loss, X_test, y_test, results[e].weights);
        }
      } else {
        const std::size_t e = task_index % per_fold;
        const SolverResult result = solve(model, specs[c].with_bound(grid[e]), config);
        scores[c][f][e] = test_metric(task, loss, X_test, y_test, result.weights);
      }
    });

    const bool lower_is_better = task == Task::Regression;
    Json cv;
    cv["folds"] = p.folds;
    cv["train_fraction"] = p.train_fraction;
    cv["split_seed"] = p.split_seed;
    cv["metric"] = lower_is_better ? "pmse" : "auc";
    cv["eta"] = grid;
    cv["constraints"] = Json::array();
    std::vector<double> best_etas(kinds.size());
    for (std::size_t c = 0; c < kinds.size(); ++c) {
      std::vector<double> mean(grid.size(), 0.0);
      for (std::size_t e = 0; e < grid.size(); ++e) {
        for (std::size_t f = 0; f < p.folds; ++f) mean[e] += scores[c][f][e];
        mean[e] /= static_cast<double>(p.folds);
      }
      std::size_t best = 0;
      for (std::size_t e = 1; e < grid.size(); ++e) {
        if (lower_is_better ? mean[e] < mean[best] : mean[e] > mean[best]) best = e;
      }
      best_etas[c] = grid[best];
      Json fold_scores = Json::array();
      for (std::size_t f = 0; f < p.folds; ++f) fold_scores.push_back(number(scores[c][f][best]));
      Json mean_json = Json::array();
      for (double v : mean) mean_json.push_back(number(v));
      cv["constraints"].push_back({{"constraint", constraint_kind_name(kinds[c])},
                                   {"mean_test", mean_json},
                                   {"best_eta", grid[best]},
                                   {"best_mean_test", number(mean[best])},
                                   {"fold_test_at_best", fold_scores}});
    }
    metrics["cross_validation"] = cv;

    std::vector<SolverResult> refits(kinds.size());
    parallel_for(kinds.size(), p.threads, [&](std::size_t c) {
      refits[c] = solve(full, specs[c].with_bound(best_etas[c]), config);
    });
    for (std::size_t c = 0; c < kinds.size(); ++c) runs.push_back({kinds[c], best_etas[c], std::move(refits[c])});
  }

  metrics["runs"] = Json::array();
  for (const Run& run : runs) metrics["runs"].push_back(run_summary(run, full, config));
  write_runs(dir, runs, X.cols());
  write_json(dir / "metrics.json", metrics);
  write_manifest(dir, "solve", solve_parameters(p, grid), {{"split", p.split_seed}}, {"data", "X", "y", "graph"},
                 {"w.csv", "trace.csv", "metrics.json"});

  for (const Json& run : metrics["runs"]) {
    out << run["constraint"].get<std::string>() << " eta=" << io::format_double(run["eta"].get<double>())
        << " stop=" << run["stop_reason"].get<std::string>() << " outer=" << run["outer_iterations"].get<int>()
        << " risk=" << io::format_double(run["risk"].get<double>())
        << " nonzeros=" << run["nonzeros"].get<std::size_t>() << '\n';
  }
  if (metrics.contains("cross_validation")) {
    for (const Json& c : metrics["cross_validation"]["constraints"]) {
      out << c["constraint"].get<std::string>() << " best_eta=" << io::format_double(c["best_eta"].get<double>())
          << " mean_" << metrics["cross_validation"]["metric"].get<std::string>() << '='
          << c["best_mean_test"].dump() << '\n';
    }
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------
// project

struct ProjectParams {
  std::string input;
  std::string constraint = "l1";
  std::string graph;
  std::optional<double> eta;
  int max_inner_iters = ProjectionOptions{}.max_inner_iters;
  double feasibility_tolerance = ProjectionOptions{}.feasibility_tolerance;
  std::optional<double> distance_tolerance;
  bool trace = false;
  std::string out;
};

void add_project(CLI::App& app, ProjectParams& p) {
  CLI::App* cmd = app.add_subcommand("project", "Project one vector onto a level set by outer approximation");
  cmd->add_option("--input", p.input, "Vector to project (one column or one row)")->required();
  cmd->add_option("--constraint", p.constraint, "l1, pairmax, pairdiff or signed");
  cmd->add_option("--graph", p.graph, "Feature graph (TSV) for the pairwise constraints");
  cmd->add_option("--eta", p.eta, "Bound of the level set")->required();
  cmd->add_option("--max-inner-iters", p.max_inner_iters, "Iteration budget K");
  cmd->add_option("--feasibility-tolerance", p.feasibility_tolerance, "Violation accepted as feasible");
  cmd->add_option("--distance-tolerance", p.distance_tolerance, "Stop once steps fall below this");
  cmd->add_flag("--trace", p.trace, "Write the distance of every iterate to projection_trace.csv");
  cmd->add_option("--out", p.out, "Output directory");
}

int run_project(ProjectParams p, std::ostream& out) {
  p.input = absolute_input(p.input);
  p.graph = absolute_input(p.graph);
  const ConstraintKind kind = parse_kind(p.constraint);
  if (*p.eta < 0.0) throw UsageError("--eta must be >= 0");
  const fs::path dir = resolve_out_dir(p.out);

  const Vector p0 = io::read_vector(p.input, io::has_header_row(p.input));
  std::optional<FeatureGraph> graph;
  if (!p.graph.empty()) graph = io::load_graph(p.graph, static_cast<std::size_t>(p0.size()));
  const ConstraintSpec constraint = make_constraint(kind, graph, *p.eta);
  ProjectionOptions opts;
  opts.max_inner_iters = p.max_inner_iters;
  opts.feasibility_tolerance = p.feasibility_tolerance;
  opts.distance_tolerance = p.distance_tolerance;

  std::optional<Vector> exact;
  if (kind == ConstraintKind::L1) exact = oracle::l1_ball_projection_exact(p0, *p.eta);
  std::ostringstream trace;
  trace << "iteration,distance_from_input,constraint_value,violation";
  trace << (exact ? ",distance_to_exact,relative_error\n" : "\n");
  const ProjectionResult result = project_level_set(constraint, p0, opts, [&](int k, const Vector& pk) {
    const double value = constraint.value(pk);
    trace << k << ',' << io::format_double((pk - p0).norm()) << ',' << io::format_double(value) << ','
          << io::format_double(std::max(value - *p.eta, 0.0));
    if (exact) {
      const double gap = (pk - *exact).norm();
      const double scale = exact->norm();
      trace << ',' << io::format_double(gap) << ',' << io::format_double(scale > 0.0 ? gap / scale : gap);
    }
    trace << '\n';
  });

  io::write_vector(dir / "projected.csv", result.point);
  Json status;
  status["schema"] = kMetricsSchema;
  status["constraint"] = p.constraint;
  status["eta"] = *p.eta;
  status["outcome"] = outcome_name(result.status.outcome);
  status["iterations"] = result.status.iterations_used;
  status["final_violation"] = number(result.status.final_violation);
  status["constraint_value"] = number(constraint.value(result.point));
  status["distance_from_input"] = number((result.point - p0).norm());
  if (exact) {
    const double gap = (result.point - *exact).norm();
    status["distance_to_exact"] = number(gap);
    status["relative_error"] = number(exact->norm() > 0.0 ? gap / exact->norm() : gap);
  }
  write_json(dir / "projection.json", status);
  std::vector<std::string> outputs = {"projected.csv", "projection.json"};
  if (p.trace) {
    io::write_text(dir / "projection_trace.csv", trace.str());
    outputs.push_back("projection_trace.csv");
  }

  Json parameters;
  parameters["input"] = p.input;
  parameters["constraint"] = p.constraint;
  parameters["graph"] = p.graph;
  parameters["eta"] = *p.eta;
  parameters["max-inner-iters"] = p.max_inner_iters;
  parameters["feasibility-tolerance"] = p.feasibility_tolerance;
  parameters["distance-tolerance"] = p.distance_tolerance ? Json(*p.distance_tolerance) : Json(nullptr);
  parameters["trace"] = p.trace;
  write_manifest(dir, "project", parameters, Json::object(), {"input", "graph"}, outputs);

  out << "outcome=" << outcome_name(result.status.outcome) << " iterations=" << result.status.iterations_used
      << " final_violation=" << io::format_double(result.status.final_violation) << '\n';
  if (result.status.outcome == ProjectionOutcome::InfeasibleConstraint) {
    throw InfeasibleConstraintError("the level set {" + p.constraint + " <= " + io::format_double(*p.eta) +
                                    "} is empty");
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------
// eval

struct EvalParams {
  Inputs inputs;
  std::string weights;
  std::size_t column = 0;
  std::string task = "regression";
  std::string loss = "logistic";
  std::string out;
};

void add_eval(CLI::App& app, EvalParams& p) {
  CLI::App* cmd = app.add_subcommand("eval", "Evaluate a weight vector on a dataset (MSE or AUC)");
  add_input_options(*cmd, p.inputs);
  cmd->add_option("--weights", p.weights, "Weights CSV, e.g. w.csv from solve")->required();
  cmd->add_option("--column", p.column, "Column of the weights file to use");
  cmd->add_option("--task", p.task, "regression or classification");
  cmd->add_option("--loss", p.loss, "Classification loss: logistic or matsusita");
  cmd->add_option("--out", p.out, "Output directory");
}

int run_eval(EvalParams p, std::ostream& out) {
  resolve_inputs(p.inputs);
  p.weights = absolute_input(p.weights);
  const Task task = parse_task(p.task);
  const LossKind loss = parse_loss(p.loss);
  const fs::path dir = resolve_out_dir(p.out);

  auto [X, y] = load_inputs(p.inputs);
  const Matrix W = read_auto(p.weights);
  if (p.column >= static_cast<std::size_t>(W.cols())) {
    throw UsageError("--column " + std::to_string(p.column) + " is out of range (" + std::to_string(W.cols()) +
                     " columns)");
  }
  const Vector w = W.col(static_cast<Eigen::Index>(p.column));
  const RiskModel model = make_model(task, loss, X, y);
  detail::require_dimension(w.size(), model.dim(), "weights");

  Json result;
  result["schema"] = kMetricsSchema;
  result["task"] = p.task;
  if (task == Task::Classification) result["loss"] = p.loss;
  result["samples"] = X.rows();
  result["risk"] = number(model.value(w));
  const std::string metric = task == Task::Regression ? "mse" : "auc";
  const double value = test_metric(task, loss, X, y, w);
  result[metric] = number(value);
  write_json(dir / "eval.json", result);

  Json parameters;
  parameters["data"] = p.inputs.data;
  parameters["X"] = p.inputs.X;
  parameters["y"] = p.inputs.y;
  parameters["weights"] = p.weights;
  parameters["column"] = p.column;
  parameters["task"] = p.task;
  parameters["loss"] = p.loss;
  write_manifest(dir, "eval", parameters, Json::object(), {"data", "X", "y", "weights"}, {"eval.json"});
  out << metric << '=' << io::format_double(value) << " risk=" << io::format_double(model.value(w)) << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------------------
// replay

struct ReplayParams {
  std::string manifest;
  std::string out;
  bool check = false;
};

void add_replay(CLI::App& app, ReplayParams& p) {
  CLI::App* cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  cmd->add_option("--manifest", p.manifest, "manifest.json written by an earlier run")->required();
  cmd->add_option("--out", p.out, "Output directory (default: <manifest dir>/replay)");
  cmd->add_flag("--check", p.check, "Compare every output byte for byte with the original run");
}

std::vector<std::string> manifest_args(const Json& manifest, const fs::path& out_dir) {
  std::vector<std::string> args = {manifest.at("command").get<std::string>()};
  for (const auto& [key, value] : manifest.at("parameters").items()) {
    const std::string flag = "--" + key;
    if (value.is_null()) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const Json& item : value) {
        if (!joined.empty()) joined += ',';
        joined += item.is_number_float() ? io::format_double(item.get<double>())
                                         : (item.is_string() ? item.get<std::string>() : item.dump());
      }
      if (!joined.empty()) args.insert(args.end(), {flag, joined});
    } else if (value.is_string()) {
      if (!value.get<std::string>().empty()) args.insert(args.end(), {flag, value.get<std::string>()});
    } else if (value.is_number_float()) {
      args.insert(args.end(), {flag, io::format_double(value.get<double>())});
    } else {
      args.insert(args.end(), {flag, value.dump()});
    }
  }
  args.insert(args.end(), {"--out", out_dir.string()});
  return args;
}

int run_replay(const ReplayParams& p, std::ostream& out, std::ostream& err) {
  const fs::path manifest_path = fs::absolute(p.manifest);
  Json manifest;
  try {
    manifest = Json::parse(read_bytes(manifest_path));
  } catch (const Json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  const std::string command = manifest.value("command", std::string());
  if (command != "synth" && command != "solve" && command != "project" && command != "eval") {
    throw DataError(manifest_path.string() + ": unknown command '" + command + "'");
  }
  const Json inputs = manifest.value("inputs", Json::object());
  for (const auto& [key, input] : inputs.items()) {
    const std::string path = input.at("path").get<std::string>();
    if (fnv1a64(path) != input.at("fnv1a64").get<std::string>()) {
      throw DataError("input '" + key + "' (" + path + ") changed since the manifest was written");
    }
  }
  const fs::path original = manifest_path.parent_path();
  const fs::path target = p.out.empty() ? original / "replay" : fs::absolute(p.out);
  if (fs::exists(target) && fs::equivalent(target, original)) {
    throw UsageError("replay output directory must differ from the original run");
  }
  const int code = run(manifest_args(manifest, target), out, err);
  if (code != kSuccess || !p.check) return code;

  bool identical = true;
  for (const Json& name : manifest.at("outputs")) {
    const std::string file = name.get<std::string>();
    const bool same = read_bytes(original / file) == read_bytes(target / file);
    identical = identical && same;
    out << (same ? "identical " : "differs ") << file << '\n';
  }
  if (!identical) throw ReplayMismatch("replayed outputs differ from " + original.string());
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Constrained risk minimization with outer-approximation projections", "outerproj");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  SynthParams synth;
  SolveParams solve_params;
  ProjectParams project;
  EvalParams eval;
  ReplayParams replay;
  add_synth(app, synth);
  add_solve(app, solve_params);
  add_project(app, project);
  add_eval(app, eval);
  add_replay(app, replay);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (app.got_subcommand("synth")) return run_synth(synth, out);
    if (app.got_subcommand("solve")) return run_solve(solve_params, out);
    if (app.got_subcommand("project")) return run_project(project, out);
    if (app.got_subcommand("eval")) return run_eval(eval, out);
    if (app.got_subcommand("replay")) return run_replay(replay, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const InconsistentHalfSpacesError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const InfeasibleConstraintError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const ReplayMismatch& e) {
    err << "replay mismatch: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsageError;
}

}  // namespace outerproj::cli
