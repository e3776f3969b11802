#pragma once

#include "tsbo/acquisition.hpp"
#include "tsbo/bilevel_loop.hpp"
#include "tsbo/objectives.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsbo {

enum class Method { TsboGaussian, TsboGev, TsboRandom, VanillaBo, Sobol };

std::string to_string(Method m);
Method parse_method(const std::string& name);
bool is_tsbo(Method m);

/// Bad configuration text, unknown keys or invalid values.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string objective = "ackley";
  int dim = 10;
  int n_init = 10;
  int n_query = 50;
  std::uint64_t seed = 0;
  Method method = Method::TsboGaussian;
  double label_noise_std = 0.0;
  double box_lo = -3.0;
  double box_hi = 3.0;

  int gp_fit_steps = 100;
  /// Adam steps for the warm-started refit after each new query.
  int gp_refit_steps = 30;
  double gp_lr = 0.05;
  int acq_restarts = 32;
  int acq_max_iter = 100;

  int teacher_width = 64;
  int teacher_layers = 5;
  TsConfig ts;

  int eval_points = 100;
  double local_std = 0.01;
  int ablation_seeds = 5;
  std::vector<double> lambda_sweep;

  std::string out_dir = "out";
  /// Write measured wall-clock times to the trace; zeros otherwise.
  bool record_wall_ms = true;

  BoundBox box() const { return BoundBox::cube(dim, box_lo, box_hi); }
  /// Throws ConfigError.
  void validate() const;
};

/// key = value lines; '#' starts a comment. Throws ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every configurable key with its current value, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg);

struct TraceRecord {
  int iteration = 0;
  Vector z;
  double y = 0.0;
  double best = 0.0;
  double teacher_nll = 0.0;
  double feedback_loss = 0.0;
  double unlabeled_nll = 0.0;
  long wall_ms = 0;
};

struct RunResult {
  std::vector<TraceRecord> trace;
  /// Every evaluated point with its observed (possibly noisy) label.
  LabeledSet data;
  /// Noise-free objective values for the rows of `data`.
  Vector true_y;
  double best = 0.0;
  Vector argmax;
  /// Noise-free objective value at `argmax`.
  double best_true = 0.0;
  long evaluations = 0;
  PseudoSet final_pseudo;
  std::optional<TsState> final_state;
  GpHyper final_hyper;
};

RunResult run_experiment(const RunConfig& cfg);

/// trace.csv, queries.csv and summary.json in `dir`.
void write_run_outputs(const RunConfig& cfg, const RunResult& result, const std::filesystem::path& dir);
void write_failure_summary(const RunConfig& cfg, const std::string& message, const std::filesystem::path& dir);

struct GeneralizationReport {
  double global_with = 0.0;
  double global_without = 0.0;
  double local_with = 0.0;
  double local_without = 0.0;
};

/// Query-GP test NLL with and without the final pseudo labels, on unit
/// Gaussian test points in the box and on points around the best query.
GeneralizationReport eval_generalization(const RunConfig& cfg, const RunResult& result);

struct AblationRow {
  std::string variant;
  std::vector<double> best;  // one entry per seed, noise-free values

  double mean() const;
  double stddev() const;
  double median() const;
};

/// Full TSBO, random sampler, no uncertainty awareness and no feedback over
/// the same seeds, plus one arm per lambda_sweep entry.
std::vector<AblationRow> run_ablation_suite(const RunConfig& base);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

double median(std::vector<double> values);

}  // namespace tsbo
