#include "tsbo/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

namespace tsbo {

std::string to_string(Method m) {
  switch (m) {
    case Method::TsboGaussian: return "tsbo-gaussian";
    case Method::TsboGev: return "tsbo-gev";
    case Method::TsboRandom: return "tsbo-random";
    case Method::VanillaBo: return "vanilla-bo";
    case Method::Sobol: return "sobol";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::TsboGaussian, Method::TsboGev, Method::TsboRandom, Method::VanillaBo, Method::Sobol}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method: " + name);
}

bool is_tsbo(Method m) { return m == Method::TsboGaussian || m == Method::TsboGev || m == Method::TsboRandom; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("invalid value for " + key + ": '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + text + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<double>(key, item));
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define TSBO_INT_FIELD(name, member) \
  Field { name, [](RunConfig& c, const std::string& v) { c.member = parse_number<int>(name, v); }, \
          [](const RunConfig& c) { return std::to_string(c.member); } }
#define TSBO_REAL_FIELD(name, member) \
  Field { name, [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(name, v); }, \
          [](const RunConfig& c) { return format_double(c.member); } }
#define TSBO_BOOL_FIELD(name, member) \
  Field { name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
          [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"objective", [](RunConfig& c, const std::string& v) { c.objective = v; },
            [](const RunConfig& c) { return c.objective; }},
      TSBO_INT_FIELD("dim", dim),
      TSBO_INT_FIELD("n_init", n_init),
      TSBO_INT_FIELD("n_query", n_query),
      Field{"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      Field{"method", [](RunConfig& c, const std::string& v) { c.method = parse_method(v); },
            [](const RunConfig& c) { return to_string(c.method); }},
      TSBO_REAL_FIELD("label_noise_std", label_noise_std),
      TSBO_REAL_FIELD("box_lo", box_lo),
      TSBO_REAL_FIELD("box_hi", box_hi),
      TSBO_INT_FIELD("gp_fit_steps", gp_fit_steps),
      TSBO_INT_FIELD("gp_refit_steps", gp_refit_steps),
      TSBO_REAL_FIELD("gp_lr", gp_lr),
      TSBO_INT_FIELD("acq_restarts", acq_restarts),
      TSBO_INT_FIELD("acq_max_iter", acq_max_iter),
      TSBO_INT_FIELD("teacher_width", teacher_width),
      TSBO_INT_FIELD("teacher_layers", teacher_layers),
      TSBO_INT_FIELD("steps_per_iter", ts.steps_per_iter),
      TSBO_INT_FIELD("warmup_steps", ts.warmup_steps),
      TSBO_REAL_FIELD("lambda", ts.lambda),
      TSBO_INT_FIELD("n_unlabeled", ts.n_unlabeled),
      TSBO_INT_FIELD("k_validation", ts.k_validation),
      TSBO_REAL_FIELD("lr_teacher", ts.lr_teacher),
      TSBO_REAL_FIELD("lr_student", ts.lr_student),
      TSBO_REAL_FIELD("lr_sampler", ts.lr_sampler),
      TSBO_BOOL_FIELD("uncertainty_aware", ts.uncertainty_aware),
      TSBO_BOOL_FIELD("feedback_enabled", ts.feedback_enabled),
      TSBO_INT_FIELD("batch_size", ts.batch_size),
      TSBO_BOOL_FIELD("warmup_teacher_only", ts.warmup_teacher_only),
      TSBO_REAL_FIELD("gev_fraction", ts.gev_fraction),
      TSBO_INT_FIELD("gev_min_count", ts.gev_min_count),
      TSBO_INT_FIELD("gev_fit_steps", ts.gev_fit_steps),
      TSBO_REAL_FIELD("gev_lr", ts.gev_lr),
      TSBO_INT_FIELD("mcmc_burn_in", ts.mcmc_burn_in),
      TSBO_INT_FIELD("mcmc_thin", ts.mcmc_thin),
      Field{"gev_fallback",
            [](RunConfig& c, const std::string& v) {
              try {
                c.ts.gev_fallback = parse_sampler_kind(v);
              } catch (const NumericError& e) {
                throw ConfigError(e.what());
              }
            },
            [](const RunConfig& c) { return to_string(c.ts.gev_fallback); }},
      TSBO_INT_FIELD("eval_points", eval_points),
      TSBO_REAL_FIELD("local_std", local_std),
      TSBO_INT_FIELD("ablation_seeds", ablation_seeds),
      Field{"lambda_sweep", [](RunConfig& c, const std::string& v) { c.lambda_sweep = parse_list("lambda_sweep", v); },
            [](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.lambda_sweep.size(); ++i) {
                out += (i ? "," : "") + format_double(c.lambda_sweep[i]);
              }
              return out;
            }},
      Field{"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
            [](const RunConfig& c) { return c.out_dir; }},
      TSBO_BOOL_FIELD("record_wall_ms", record_wall_ms),
  };
  return table;
}

#undef TSBO_INT_FIELD
#undef TSBO_REAL_FIELD
#undef TSBO_BOOL_FIELD

Rng stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return Rng(seq);
}

enum StreamId : std::uint32_t { kSobolStream = 1, kNoiseStream, kTsStream, kAcqStream, kTeacherStream, kEvalStream };

SamplerKind sampler_for(Method m) {
  switch (m) {
    case Method::TsboGev: return SamplerKind::Gev;
    case Method::TsboRandom: return SamplerKind::Random;
    default: return SamplerKind::Gaussian;
  }
}

GpHyper initial_hyper(const RunConfig& cfg, const LabeledSet& data) {
  GpHyper h;
  const double mean = data.y.mean();
  const double var = (data.y.array() - mean).square().mean();
  h.mean_const = mean;
  h.log_outputscale = std::log(std::max(var, 1e-12));
  h.log_lengthscale = std::log(0.25 * (cfg.box_hi - cfg.box_lo) * std::sqrt(static_cast<double>(cfg.dim)));
  h.log_noise = std::log(std::max(1e-4 * var, 1e-10));
  return h.clamped();
}

void append_row(LabeledSet& data, Vector& true_y, const Vector& x, double y, double truth) {
  const Eigen::Index n = data.z.rows();
  data.z.conservativeResize(n + 1, x.size());
  data.z.row(n) = x.transpose();
  data.y.conservativeResize(n + 1);
  data.y[n] = y;
  true_y.conservativeResize(n + 1);
  true_y[n] = truth;
}

/// Best EI among uniform probes, used when every L-BFGS restart fails.
Vector best_random_probe(const GpModel& model, double incumbent, const BoundBox& box, Rng& rng) {
  const Matrix probes = random_sample(box, 1000, rng);
  const Vector ei = expected_improvement(model.predict(probes), incumbent);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < ei.size(); ++i) {
    if (std::isfinite(ei[i]) && (!std::isfinite(ei[best]) || ei[i] > ei[best])) best = i;
  }
  return probes.row(best).transpose();
}

}  // namespace

void RunConfig::validate() const {
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (n_init < 2) throw ConfigError("n_init must be >= 2");
  if (n_query < 0) throw ConfigError("n_query must be >= 0");
  if (!(label_noise_std >= 0.0) || !std::isfinite(label_noise_std)) throw ConfigError("label_noise_std must be >= 0");
  if (!(box_lo <= box_hi) || !std::isfinite(box_lo) || !std::isfinite(box_hi)) throw ConfigError("need box_lo <= box_hi");
  if (gp_fit_steps < 0 || gp_refit_steps < 0 || !(gp_lr > 0.0)) throw ConfigError("invalid GP fit settings");
  if (acq_restarts < 1 || acq_max_iter < 0) throw ConfigError("invalid acquisition settings");
  if (teacher_width < 1 || teacher_layers < 1) throw ConfigError("invalid teacher architecture");
  if (eval_points < 1 || !(local_std > 0.0)) throw ConfigError("invalid generalization settings");
  if (ablation_seeds < 1) throw ConfigError("ablation_seeds must be >= 1");
  for (double l : lambda_sweep) {
    if (!(l >= 0.0)) throw ConfigError("lambda_sweep entries must be >= 0");
  }
  try {
    make_objective(objective, dim);
    TsConfig t = ts;
    t.box = box();
    t.validate();
  } catch (const NumericError& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    it->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

RunResult run_experiment(const RunConfig& cfg) {
  cfg.validate();
  const BoundBox box = cfg.box();
  CountingObjective objective(make_objective(cfg.objective, cfg.dim));
  ScrambledSobol sobol(cfg.dim, stream(cfg.seed, kSobolStream)());
  Rng noise_rng = stream(cfg.seed, kNoiseStream);
  Rng ts_rng = stream(cfg.seed, kTsStream);
  Rng acq_rng = stream(cfg.seed, kAcqStream);
  std::normal_distribution<double> normal(0.0, 1.0);

  RunResult res;
  res.data.z.resize(0, cfg.dim);
  res.data.y.resize(0);
  auto evaluate = [&](const Vector& x) {
    const double truth = objective(x);
    const double y = cfg.label_noise_std > 0.0 ? truth + cfg.label_noise_std * normal(noise_rng) : truth;
    append_row(res.data, res.true_y, x, y, truth);
    return y;
  };

  for (int i = 0; i < cfg.n_init; ++i) evaluate(sobol.next(box));

  TsConfig ts = cfg.ts;
  ts.box = box;
  ts.sampler_kind = sampler_for(cfg.method);
  if (is_tsbo(cfg.method)) {
    TeacherArch arch;
    arch.hidden_width = cfg.teacher_width;
    arch.hidden_layers = cfg.teacher_layers;
    res.final_state = warmup(make_ts_state(cfg.dim, stream(cfg.seed, kTeacherStream)(), arch), res.data, ts, ts_rng);
  }

  AcquisitionOptions acq;
  acq.restarts = cfg.acq_restarts;
  acq.lbfgs.max_iterations = cfg.acq_max_iter;
  GpHyper hyper = initial_hyper(cfg, res.data);
  res.final_pseudo = PseudoSet{Matrix(0, cfg.dim), Vector(0), Vector(0)};
  double best = res.data.y.maxCoeff();

  for (int it = 1; it <= cfg.n_query; ++it) {
    const auto start = std::chrono::steady_clock::now();
    TraceRecord rec;
    rec.iteration = it;
    if (cfg.method == Method::Sobol) {
      rec.z = sobol.next(box);
    } else {
      if (res.final_state) {
        RoundResult round = ts_train_round(std::move(*res.final_state), res.data, ts, ts_rng);
        res.final_state = std::move(round.state);
        res.final_pseudo = std::move(round.pseudo);
        rec.teacher_nll = round.stats.teacher_nll;
        rec.feedback_loss = round.stats.feedback_loss;
        rec.unlabeled_nll = round.stats.unlabeled_nll;
      }
      const auto [query_set, query_noise] = augment_query_set(res.data, res.final_pseudo);
      hyper = gp_fit(query_set, query_noise, hyper, it == 1 ? cfg.gp_fit_steps : cfg.gp_refit_steps, cfg.gp_lr);
      const GpModel model(hyper, query_set, query_noise);
      const double incumbent = res.data.y.maxCoeff();
      try {
        rec.z = maximize_acquisition(model, incumbent, box, acq_rng, acq);
      } catch (const NumericError& e) {
        if (e.kind() != ErrorKind::NonFinite) throw;
        rec.z = best_random_probe(model, incumbent, box, acq_rng);
      }
    }
    rec.y = evaluate(rec.z);
    best = std::max(best, rec.y);
    rec.best = best;
    if (cfg.record_wall_ms) {
      rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    }
    res.trace.push_back(std::move(rec));
  }

  Eigen::Index arg = 0;
  res.best = res.data.y.maxCoeff(&arg);
  res.argmax = res.data.z.row(arg).transpose();
  res.best_true = res.true_y[arg];
  res.evaluations = objective.count();
  res.final_hyper = hyper;
  return res;
}

void write_run_outputs(const RunConfig& cfg, const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream trace(dir / "trace.csv");
  trace << "iter,y,best,teacher_nll,feedback_loss,unlabeled_nll,wall_ms\n";
  for (const TraceRecord& r : result.trace) {
    trace << r.iteration << ',' << format_double(r.y) << ',' << format_double(r.best) << ','
          << format_double(r.teacher_nll) << ',' << format_double(r.feedback_loss) << ','
          << format_double(r.unlabeled_nll) << ',' << r.wall_ms << '\n';
  }
  std::ofstream queries(dir / "queries.csv");
  for (int j = 0; j < cfg.dim; ++j) queries << (j ? "," : "") << 'z' << j;
  queries << '\n';
  for (const TraceRecord& r : result.trace) {
    for (Eigen::Index j = 0; j < r.z.size(); ++j) queries << (j ? "," : "") << format_double(r.z[j]);
    queries << '\n';
  }

  nlohmann::ordered_json summary;
  summary["status"] = "ok";
  summary["objective"] = cfg.objective;
  summary["method"] = to_string(cfg.method);
  summary["seed"] = cfg.seed;
  summary["best"] = result.best;
  summary["best_true"] = result.best_true;
  summary["argmax"] = std::vector<double>(result.argmax.data(), result.argmax.data() + result.argmax.size());
  summary["evaluations"] = result.evaluations;
  nlohmann::ordered_json echo;
  for (const auto& [k, v] : config_entries(cfg)) echo[k] = v;
  summary["config"] = echo;
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
  if (!trace || !queries) throw std::runtime_error("failed to write outputs in " + dir.string());
}

void write_failure_summary(const RunConfig& cfg, const std::string& message, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json summary;
  summary["status"] = "numeric_failure";
  summary["error"] = message;
  summary["objective"] = cfg.objective;
  summary["method"] = to_string(cfg.method);
  summary["seed"] = cfg.seed;
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
}

GeneralizationReport eval_generalization(const RunConfig& cfg, const RunResult& result) {
  cfg.validate();
  const BoundBox box = cfg.box();
  const Objective objective = make_objective(cfg.objective, cfg.dim);
  Rng rng = stream(cfg.seed, kEvalStream);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto make_test = [&](const Vector& center, double spread) {
    LabeledSet test;
    test.z.resize(cfg.eval_points, cfg.dim);
    test.y.resize(cfg.eval_points);
    for (Eigen::Index i = 0; i < test.z.rows(); ++i) {
      Vector x(cfg.dim);
      for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = center[j] + spread * normal(rng);
      x = box.project(x);
      test.z.row(i) = x.transpose();
      test.y[i] = objective.eval(x);
    }
    return test;
  };
  const LabeledSet global = make_test(Vector::Zero(cfg.dim), 1.0);
  const LabeledSet local = make_test(result.argmax, cfg.local_std);

  const auto [with_set, with_noise] = augment_query_set(result.data, result.final_pseudo);
  const Vector no_noise = Vector::Zero(result.data.size());
  const GpHyper h_with = gp_fit(with_set, with_noise, result.final_hyper, cfg.gp_fit_steps, cfg.gp_lr);
  const GpHyper h_without = gp_fit(result.data, no_noise, result.final_hyper, cfg.gp_fit_steps, cfg.gp_lr);

  GeneralizationReport rep;
  rep.global_with = gp_nll(h_with, with_set, with_noise, global);
  rep.global_without = gp_nll(h_without, result.data, no_noise, global);
  rep.local_with = gp_nll(h_with, with_set, with_noise, local);
  rep.local_without = gp_nll(h_without, result.data, no_noise, local);
  return rep;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double AblationRow::mean() const {
  return best.empty() ? std::nan("") : std::accumulate(best.begin(), best.end(), 0.0) / static_cast<double>(best.size());
}

double AblationRow::stddev() const {
  if (best.size() < 2) return 0.0;
  const double m = mean();
  double ss = 0.0;
  for (double b : best) ss += (b - m) * (b - m);
  return std::sqrt(ss / static_cast<double>(best.size() - 1));
}

double AblationRow::median() const { return tsbo::median(best); }

std::vector<AblationRow> run_ablation_suite(const RunConfig& base) {
  base.validate();
  RunConfig full = base;
  if (!is_tsbo(full.method) || full.method == Method::TsboRandom) full.method = Method::TsboGaussian;
  full.ts.uncertainty_aware = true;
  full.ts.feedback_enabled = true;

  std::vector<std::pair<std::string, RunConfig>> arms;
  arms.emplace_back("full", full);
  RunConfig random_arm = full;
  random_arm.method = Method::TsboRandom;
  arms.emplace_back("random-sampler", random_arm);
  RunConfig no_ua = full;
  no_ua.ts.uncertainty_aware = false;
  arms.emplace_back("no-uncertainty", no_ua);
  RunConfig no_fb = full;
  no_fb.ts.feedback_enabled = false;
  arms.emplace_back("no-feedback", no_fb);
  for (double lambda : base.lambda_sweep) {
    RunConfig arm = full;
    arm.ts.lambda = lambda;
    arms.emplace_back("lambda=" + format_double(lambda), arm);
  }

  std::vector<AblationRow> rows;
  for (auto& [name, cfg] : arms) {
    AblationRow row{name, {}};
    for (int s = 0; s < base.ablation_seeds; ++s) {
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      row.best.push_back(run_experiment(cfg).best_true);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "variant,mean,std,median,seeds\n";
  for (const AblationRow& r : rows) {
    out << r.variant << ',' << format_double(r.mean()) << ',' << format_double(r.stddev()) << ','
        << format_double(r.median()) << ',' << r.best.size() << '\n';
  }
  return out.str();
}

}  // namespace tsbo
