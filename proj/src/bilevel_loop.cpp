#include "tsbo/bilevel_loop.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

namespace tsbo {

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::Gev: return "gev";
    case SamplerKind::Gaussian: return "gaussian";
    case SamplerKind::Random: return "random";
  }
  return "unknown";
}

SamplerKind parse_sampler_kind(const std::string& name) {
  if (name == "gev") return SamplerKind::Gev;
  if (name == "gaussian") return SamplerKind::Gaussian;
  if (name == "random") return SamplerKind::Random;
  throw NumericError(ErrorKind::InvalidArgument, "unknown sampler kind: " + name);
}

void TsConfig::validate() const {
  if (steps_per_iter < 0 || warmup_steps < 0 || n_unlabeled < 1 || k_validation < 1 || batch_size < 1 ||
      gev_min_count < 1 || gev_fit_steps < 0 || mcmc_burn_in < 0 || mcmc_thin < 1) {
    throw NumericError(ErrorKind::InvalidArgument, "ts config: invalid count");
  }
  if (!(lambda >= 0.0)) throw NumericError(ErrorKind::InvalidArgument, "ts config: lambda < 0");
  if (!(lr_teacher > 0.0) || !(lr_student > 0.0) || !(lr_sampler > 0.0) || !(gev_lr > 0.0)) {
    throw NumericError(ErrorKind::InvalidArgument, "ts config: learning rates must be positive");
  }
  if (!(gev_fraction > 0.0 && gev_fraction <= 1.0)) {
    throw NumericError(ErrorKind::InvalidArgument, "ts config: gev_fraction outside (0, 1]");
  }
  if (gev_fallback == SamplerKind::Gev) {
    throw NumericError(ErrorKind::InvalidArgument, "ts config: gev fallback cannot be gev");
  }
  box.validate();
}

TsState make_ts_state(Eigen::Index input_dim, std::uint64_t seed, const TeacherArch& arch) {
  TeacherArch a = arch;
  a.input_dim = input_dim;
  TsState state;
  state.teacher = make_teacher(a, seed);
  state.batch_rng = Rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return state;
}

LabelScaler LabelScaler::fit(const Vector& y) {
  if (y.size() == 0) throw NumericError(ErrorKind::InvalidArgument, "label scaler: no labels");
  LabelScaler s;
  s.mean = y.mean();
  const double var = (y.array() - s.mean).square().mean();
  s.scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  return s;
}

LabeledSet LabelScaler::apply(const LabeledSet& data) const {
  return {data.z, (data.y.array() - mean) / scale};
}

PseudoSet LabelScaler::invert(const PseudoSet& pseudo) const {
  return {pseudo.z_u, (pseudo.y_hat.array() * scale + mean).matrix(), pseudo.var_t * (scale * scale)};
}

LabeledSet select_validation(const LabeledSet& data, Eigen::Index k) {
  data.validate();
  if (k < 1) throw NumericError(ErrorKind::InvalidArgument, "select_validation: k < 1");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return data.y[a] > data.y[b]; });
  order.resize(static_cast<std::size_t>(std::min(k, data.size())));
  return {take_rows(data.z, order), take_rows(data.y, order)};
}

std::pair<double, TeacherGrads> teacher_minibatch_grads(const TeacherNet& net, const LabeledSet& data,
                                                        int batch_size, Rng& rng) {
  data.validate();
  if (batch_size < 1) throw NumericError(ErrorKind::InvalidArgument, "teacher_minibatch_grads: batch < 1");
  const Eigen::Index n = data.size();
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  if (n > batch_size) {
    // Partial Fisher-Yates: the first batch_size slots form the batch.
    for (int i = 0; i < batch_size; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
      std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(pick(rng))]);
    }
    rows.resize(static_cast<std::size_t>(batch_size));
  }
  const Matrix zb = take_rows(data.z, rows);
  const Vector yb = take_rows(data.y, rows);
  const GaussianNllGrad nll = gaussian_nll_with_grad(teacher_forward(net, zb), yb);
  return {nll.loss, teacher_backward(net, nll.d_mean, nll.d_var, zb).params};
}

void train_teacher_supervised(TeacherNet& net, AdamState& opt, const LabeledSet& data, int steps,
                              int batch_size, double lr, Rng& rng) {
  for (int s = 0; s < steps; ++s) {
    net = teacher_adam_step(net, teacher_minibatch_grads(net, data, batch_size, rng).second, lr, opt);
  }
}

namespace {

/// Per-round sampler preparation and draws.
class UnlabeledSource {
public:
  UnlabeledSource(SamplerState& sampler, const LabeledSet& data, const LabeledSet& val, const TsConfig& cfg)
      : sampler_(sampler), val_(val), cfg_(cfg), kind_(cfg.sampler_kind) {
    if (kind_ == SamplerKind::Gev) {
      try {
        const Vector top = extreme_labels(data.y, cfg.gev_fraction, cfg.gev_min_count);
        sampler_.gev = gev_fit(top, gev_moment_init(top), cfg.gev_fit_steps, cfg.gev_lr);
        sampler_.chain.current = val.z.row(0).transpose();
        burn_in_ = cfg.mcmc_burn_in;
      } catch (const NumericError&) {
        fall_back();
      }
    }
    seed_gaussian();
  }

  SamplerKind kind() const { return kind_; }
  bool fell_back() const { return fell_back_; }

  /// Draws Z_u; `noise` receives the Gaussian reparameterization noise.
  Matrix draw(const TeacherNet& teacher, Matrix& noise, Rng& rng) {
    if (kind_ == SamplerKind::Gev) {
      try {
        McmcOptions opts;
        opts.thin = cfg_.mcmc_thin;
        opts.bounds = cfg_.box;
        Matrix z = gev_mcmc_sample(sampler_.gev, teacher, sampler_.chain, burn_in_, cfg_.n_unlabeled, rng, opts);
        burn_in_ = 0;
        return z;
      } catch (const NumericError& e) {
        if (e.kind() != ErrorKind::ChainStuck) throw;
        fall_back();
      }
    }
    if (kind_ == SamplerKind::Gaussian) {
      GaussDraw d = gauss_sample(sampler_.gauss, cfg_.n_unlabeled, rng);
      noise = std::move(d.r);
      return std::move(d.z_u);
    }
    return random_sample(cfg_.box, cfg_.n_unlabeled, rng);
  }

private:
  /// A fresh Gaussian sampler is centered on the validation inputs.
  void seed_gaussian() {
    if (kind_ == SamplerKind::Gaussian && sampler_.gauss.mu.size() == 0) {
      sampler_.gauss.mu = val_.z.colwise().mean().transpose();
      sampler_.gauss.log_scale = Vector::Zero(val_.z.cols());
      sampler_.gauss_opt = AdamState();
    }
  }

  void fall_back() {
    fell_back_ = true;
    kind_ = cfg_.gev_fallback;
    seed_gaussian();
  }

  SamplerState& sampler_;
  const LabeledSet& val_;
  const TsConfig& cfg_;
  SamplerKind kind_;
  int burn_in_ = 0;
  bool fell_back_ = false;
};

PseudoSet make_pseudo(const TeacherNet& teacher, Matrix z_u, bool uncertainty_aware) {
  TeacherPrediction pred = teacher_forward(teacher, z_u);
  PseudoSet p;
  p.z_u = std::move(z_u);
  p.y_hat = std::move(pred.mean);
  p.var_t = uncertainty_aware ? std::move(pred.variance) : Vector(Vector::Zero(p.z_u.rows()));
  return p;
}

/// Runs `steps` alternating updates on standardized data and returns the last
/// unlabeled draw (or a fresh one when steps == 0).
Matrix alternate(TsState& state, const LabeledSet& std_data, const LabeledSet& val, const TsConfig& cfg,
                 int steps, Rng& rng, bool& fell_back) {
  UnlabeledSource source(state.sampler, std_data, val, cfg);
  Matrix z_u;
  Matrix noise;
  for (int step = 0; step < steps; ++step) {
    // (i) draw and (ii) pseudo-label
    z_u = source.draw(state.teacher, noise, rng);
    const PseudoSet pseudo = make_pseudo(state.teacher, z_u, cfg.uncertainty_aware);

    // (iii) student step on the unlabeled NLL
    state.student = student_fit_step(state.student, pseudo, cfg.lr_student, state.student_opt);

    // (iv) teacher step with the student frozen
    TeacherGrads grads = teacher_minibatch_grads(state.teacher, std_data, cfg.batch_size, state.batch_rng).second;
    const bool teacher_feedback = cfg.feedback_enabled && cfg.lambda > 0.0;
    const bool sampler_feedback = source.kind() == SamplerKind::Gaussian && noise.rows() == z_u.rows();
    if (teacher_feedback || sampler_feedback) {
      const FeedbackResult fb = feedback_backward(state.student, pseudo, val);
      // Without uncertainty awareness var_t is constant zero.
      const Vector d_var = cfg.uncertainty_aware ? fb.grads.d_vart : Vector(Vector::Zero(z_u.rows()));
      const TeacherBackward tb = teacher_backward(state.teacher, fb.grads.d_yhat, d_var, z_u);
      if (teacher_feedback) {
        TeacherGrads scaled = tb.params;
        scaled *= cfg.lambda;
        grads += scaled;
      }
      state.teacher = teacher_adam_step(state.teacher, grads, cfg.lr_teacher, state.teacher_opt);

      // (v) sampler step on the feedback loss, through the kernel and the teacher
      if (sampler_feedback) {
        state.sampler.gauss = gauss_update(state.sampler.gauss, fb.grads.d_zu + tb.inputs, noise,
                                           cfg.lr_sampler, state.sampler.gauss_opt);
      }
    } else {
      state.teacher = teacher_adam_step(state.teacher, grads, cfg.lr_teacher, state.teacher_opt);
    }
    noise.resize(0, 0);
  }
  if (steps == 0) z_u = source.draw(state.teacher, noise, rng);
  fell_back = source.fell_back();
  return z_u;
}

}  // namespace

RoundResult ts_train_round(TsState state, const LabeledSet& data, const TsConfig& cfg, Rng& rng) {
  cfg.validate();
  data.validate();
  if (data.size() < 1) throw NumericError(ErrorKind::InvalidArgument, "ts_train_round: empty data");
  const LabelScaler scaler = LabelScaler::fit(data.y);
  const LabeledSet std_data = scaler.apply(data);
  const LabeledSet val = select_validation(std_data, cfg.k_validation);

  RoundResult out;
  Matrix z_u = alternate(state, std_data, val, cfg, cfg.steps_per_iter, rng, out.stats.sampler_fallback);
  const PseudoSet std_pseudo = make_pseudo(state.teacher, std::move(z_u), cfg.uncertainty_aware);

  out.stats.teacher_nll = teacher_labeled_loss(state.teacher, std_data);
  out.stats.unlabeled_nll = student_unlabeled_nll(state.student, std_pseudo);
  out.stats.feedback_loss = feedback_loss(state.student, std_pseudo, val);
  out.pseudo = scaler.invert(std_pseudo);
  out.state = std::move(state);
  return out;
}

TsState warmup(TsState state, const LabeledSet& data, const TsConfig& cfg, Rng& rng) {
  cfg.validate();
  data.validate();
  if (data.size() < 1) throw NumericError(ErrorKind::InvalidArgument, "warmup: empty data");
  if (cfg.warmup_steps == 0) return state;
  const LabeledSet std_data = LabelScaler::fit(data.y).apply(data);
  if (cfg.warmup_teacher_only) {
    train_teacher_supervised(state.teacher, state.teacher_opt, std_data, cfg.warmup_steps, cfg.batch_size,
                             cfg.lr_teacher, state.batch_rng);
    return state;
  }
  const LabeledSet val = select_validation(std_data, cfg.k_validation);
  bool fell_back = false;
  alternate(state, std_data, val, cfg, cfg.warmup_steps, rng, fell_back);
  return state;
}

std::pair<LabeledSet, Vector> augment_query_set(const LabeledSet& data, const PseudoSet& pseudo) {
  data.validate();
  const Eigen::Index n = data.size();
  const Eigen::Index m = pseudo.size();
  if (m == 0) return {data, Vector::Zero(n)};
  pseudo.validate();
  require_same_cols(data.z, pseudo.z_u, "augment_query_set: pseudo width differs");
  LabeledSet out;
  out.z.resize(n + m, data.dim());
  out.z << data.z, pseudo.z_u;
  out.y.resize(n + m);
  out.y << data.y, pseudo.y_hat;
  Vector noise = Vector::Zero(n + m);
  noise.tail(m) = pseudo.var_t;
  return {std::move(out), std::move(noise)};
}

}  // namespace tsbo
