#include "tsbo/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tsbo {

namespace {

// Below this |xi| the Gumbel limit is used.
constexpr double kGumbelXi = 1e-8;
constexpr double kEulerGamma = 0.5772156649015329;

}  // namespace

bool GevParams::in_support(double y) const {
  if (std::abs(xi) < kGumbelXi) return true;
  return 1.0 + xi * (y - a) / b > 0.0;
}

double gev_logpdf(const GevParams& p, double y) {
  if (!(p.b > 0.0) || !std::isfinite(y)) return kLogZero;
  const double ybar = (y - p.a) / p.b;
  if (std::abs(p.xi) < kGumbelXi) return -ybar - std::exp(-ybar) - std::log(p.b);
  const double t = 1.0 + p.xi * ybar;
  if (!(t > 0.0)) return kLogZero;
  const double log_t = std::log(t);
  return -(1.0 + 1.0 / p.xi) * log_t - std::exp(-log_t / p.xi) - std::log(p.b);
}

double gev_cdf(const GevParams& p, double y) {
  const double ybar = (y - p.a) / p.b;
  if (std::abs(p.xi) < kGumbelXi) return std::exp(-std::exp(-ybar));
  const double t = 1.0 + p.xi * ybar;
  if (!(t > 0.0)) return p.xi > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::pow(t, -1.0 / p.xi));
}

double gev_quantile(const GevParams& p, double u) {
  const double w = -std::log(u);
  if (std::abs(p.xi) < kGumbelXi) return p.a - p.b * std::log(w);
  return p.a + p.b * (std::pow(w, -p.xi) - 1.0) / p.xi;
}

GevNllGrad gev_nll_with_grad(const GevParams& p, const Vector& labels) {
  GevNllGrad out;
  const double n = static_cast<double>(labels.size());
  const bool gumbel = std::abs(p.xi) < kGumbelXi;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const double ybar = (labels[i] - p.a) / p.b;
    double nll = std::log(p.b);
    double d_ybar = 0.0;
    double d_xi = 0.0;
    if (gumbel) {
      const double e = std::exp(-ybar);
      nll += ybar + e;
      d_ybar = 1.0 - e;
      d_xi = ybar - 0.5 * ybar * ybar + 0.5 * e * ybar * ybar;
    } else {
      const double t = 1.0 + p.xi * ybar;
      if (!(t > 0.0)) {
        out.value = std::numeric_limits<double>::infinity();
        return out;
      }
      const double log_t = std::log(t);
      const double pw = std::exp(-log_t / p.xi);  // t^(-1/xi)
      nll += (1.0 + 1.0 / p.xi) * log_t + pw;
      d_ybar = (1.0 + p.xi) / t - pw / t;
      d_xi = -log_t / (p.xi * p.xi) + (1.0 + 1.0 / p.xi) * ybar / t +
             pw * (log_t / (p.xi * p.xi) - ybar / (p.xi * t));
    }
    out.value += nll / n;
    out.grad[0] += d_ybar * (-1.0 / p.b) / n;
    out.grad[1] += (1.0 - d_ybar * ybar) / n;
    out.grad[2] += d_xi / n;
  }
  return out;
}

GevParams gev_moment_init(const Vector& labels) {
  const double mean = labels.mean();
  const double sd = std::sqrt((labels.array() - mean).square().mean());
  GevParams p;
  p.b = std::max(sd * std::sqrt(6.0) / M_PI, 1e-6);
  p.a = mean - kEulerGamma * p.b;
  p.xi = 0.0;
  return p;
}

GevParams gev_fit(const Vector& labels, const GevParams& init, int steps, double lr) {
  if (labels.size() < 3) throw NumericError(ErrorKind::InvalidArgument, "gev_fit: need at least 3 labels");
  require_finite(labels, "gev_fit: non-finite labels");
  if (steps < 0) throw NumericError(ErrorKind::InvalidArgument, "gev_fit: negative step count");
  const double spread = labels.maxCoeff() - labels.minCoeff();
  if (!(spread > 1e-12 * std::max(1.0, labels.cwiseAbs().maxCoeff()))) {
    throw NumericError(ErrorKind::DegenerateInput, "gev_fit: labels are identical");
  }
  if (steps == 0) return init;
  if (!(init.b > 0.0)) throw NumericError(ErrorKind::InvalidArgument, "gev_fit: init scale must be > 0");

  auto project = [&labels](GevParams p) {
    for (int k = 0; k < 64; ++k) {
      const bool ok = std::all_of(labels.begin(), labels.end(), [&](double y) { return p.in_support(y); });
      if (ok) return p;
      p.xi *= 0.5;
    }
    p.xi = 0.0;
    return p;
  };

  GevParams current = project(init);
  GevParams best = current;
  double best_nll = std::numeric_limits<double>::infinity();
  Vector params(3);
  AdamState state(3);
  for (int step = 0; step <= steps; ++step) {
    const GevNllGrad res = gev_nll_with_grad(current, labels);
    if (std::isfinite(res.value) && res.value < best_nll) {
      best_nll = res.value;
      best = current;
    }
    if (step == steps || !res.grad.allFinite()) break;
    params << current.a, std::log(current.b), current.xi;
    adam_step(params, Vector(res.grad), lr, state);
    current.a = params[0];
    current.b = std::exp(std::clamp(params[1], -30.0, 30.0));
    current.xi = params[2];
    current = project(current);
  }
  return best;
}

Vector extreme_labels(const Vector& labels, double fraction, Eigen::Index min_count) {
  std::vector<double> sorted(labels.begin(), labels.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto n = static_cast<Eigen::Index>(sorted.size());
  Eigen::Index k = static_cast<Eigen::Index>(std::ceil(fraction * static_cast<double>(n)));
  k = std::min(n, std::max(k, min_count));
  Vector out(k);
  for (Eigen::Index i = 0; i < k; ++i) out[i] = sorted[static_cast<std::size_t>(i)];
  return out;
}

Matrix mcmc_sample(const LogTarget& log_target, McmcChain& chain, int burn_in, int n, Rng& rng,
                   const McmcOptions& opts) {
  if (burn_in < 0 || n < 0 || opts.thin < 1) {
    throw NumericError(ErrorKind::InvalidArgument, "mcmc_sample: negative counts or thin < 1");
  }
  require_finite(chain.current, "mcmc_sample: non-finite chain state");
  if (!(chain.step_scale > 0.0)) throw NumericError(ErrorKind::InvalidArgument, "mcmc_sample: step_scale <= 0");
  const Eigen::Index d = chain.current.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  auto target = [&](const Vector& z) {
    if (opts.bounds && !opts.bounds->contains(z)) return kLogZero;
    return log_target(z);
  };

  double current_lp = target(chain.current);
  Vector proposal(d);
  auto transition = [&]() -> bool {
    for (Eigen::Index j = 0; j < d; ++j) proposal[j] = chain.current[j] + chain.step_scale * normal(rng);
    const double proposal_lp = target(proposal);
    const double u = uniform(rng);
    ++chain.proposed;
    // A -inf proposal is never accepted, even from a -inf state.
    if (proposal_lp == kLogZero || std::isnan(proposal_lp)) return false;
    if (current_lp == kLogZero || std::log(u) < proposal_lp - current_lp) {
      chain.current = proposal;
      current_lp = proposal_lp;
      ++chain.accepted;
      return true;
    }
    return false;
  };

  long burn_accepted = 0;
  int window_accepted = 0;
  int window_count = 0;
  for (int i = 0; i < burn_in; ++i) {
    const bool acc = transition();
    burn_accepted += acc ? 1 : 0;
    window_accepted += acc ? 1 : 0;
    if (++window_count == opts.adapt_window) {
      const double rate = static_cast<double>(window_accepted) / window_count;
      if (rate < opts.target_low) chain.step_scale *= 0.7;
      else if (rate > opts.target_high) chain.step_scale *= 1.4;
      window_accepted = 0;
      window_count = 0;
    }
  }
  if (burn_in > 0 && burn_accepted == 0) {
    throw NumericError(ErrorKind::ChainStuck, "mcmc_sample: no proposal accepted during burn-in");
  }

  Matrix out(n, d);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < opts.thin; ++t) transition();
    out.row(i) = chain.current.transpose();
  }
  return out;
}

Matrix gev_mcmc_sample(const GevParams& p, const TeacherNet& teacher, McmcChain& chain, int burn_in,
                       int n, Rng& rng, const McmcOptions& opts) {
  if (teacher.input_dim() != chain.current.size()) {
    throw NumericError(ErrorKind::DimensionMismatch, "gev_mcmc_sample: teacher width differs from chain");
  }
  Matrix row(1, chain.current.size());
  const LogTarget target = [&](const Vector& z) {
    row.row(0) = z.transpose();
    return gev_logpdf(p, teacher_forward(teacher, row).mean[0]);
  };
  return mcmc_sample(target, chain, burn_in, n, rng, opts);
}

void GaussSamplerParams::validate() const {
  if (mu.size() != log_scale.size() || mu.size() == 0) {
    throw NumericError(ErrorKind::DimensionMismatch, "gauss sampler: mu/log_scale size mismatch");
  }
  require_finite(mu, "gauss sampler: non-finite mu");
  require_finite(log_scale, "gauss sampler: non-finite log_scale");
}

Matrix gauss_transform(const GaussSamplerParams& p, const Matrix& r) {
  if (r.cols() != p.mu.size()) throw NumericError(ErrorKind::DimensionMismatch, "gauss_transform: width");
  Matrix z = r * p.log_scale.array().exp().matrix().asDiagonal();
  z.rowwise() += p.mu.transpose();
  return z;
}

GaussDraw gauss_sample(const GaussSamplerParams& p, Eigen::Index m, Rng& rng) {
  p.validate();
  if (m < 1) throw NumericError(ErrorKind::InvalidArgument, "gauss_sample: m must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  GaussDraw draw;
  draw.r.resize(m, p.mu.size());
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < p.mu.size(); ++j) draw.r(i, j) = normal(rng);
  draw.z_u = gauss_transform(p, draw.r);
  return draw;
}

GaussSamplerGrad gauss_param_grad(const GaussSamplerParams& p, const Matrix& d_zu, const Matrix& r) {
  if (d_zu.rows() != r.rows() || d_zu.cols() != r.cols() || r.cols() != p.mu.size()) {
    throw NumericError(ErrorKind::DimensionMismatch, "gauss_param_grad: shape mismatch");
  }
  GaussSamplerGrad g;
  g.d_mu = d_zu.colwise().sum().transpose();
  g.d_log_scale = ((d_zu.array() * r.array()).colwise().sum().transpose() * p.log_scale.array().exp()).matrix();
  return g;
}

GaussSamplerParams gauss_update(const GaussSamplerParams& p, const Matrix& d_zu, const Matrix& r,
                                double lr, AdamState& state) {
  p.validate();
  const GaussSamplerGrad g = gauss_param_grad(p, d_zu, r);
  const Eigen::Index d = p.mu.size();
  Vector params(2 * d);
  params << p.mu, p.log_scale;
  Vector grad(2 * d);
  grad << g.d_mu, g.d_log_scale;
  adam_step(params, grad, lr, state);
  GaussSamplerParams out;
  out.mu = params.head(d);
  out.log_scale = params.tail(d).cwiseMax(std::log(kMinSamplerScale)).cwiseMin(std::log(kMaxSamplerScale));
  return out;
}

Matrix random_sample(const BoundBox& box, Eigen::Index m, Rng& rng) {
  box.validate();
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Matrix out(m, box.dim());
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < box.dim(); ++j) {
      out(i, j) = box.lo[j] + (box.hi[j] - box.lo[j]) * uniform(rng);
    }
  }
  return out;
}

}  // namespace tsbo
