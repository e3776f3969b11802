#pragma once

#include "tsbo/adam.hpp"
#include "tsbo/box.hpp"
#include "tsbo/numerics.hpp"
#include "tsbo/teacher.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <random>

namespace tsbo {

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Generalized extreme value distribution
// ---------------------------------------------------------------------------

struct GevParams {
  double a = 0.0;   // location
  double b = 1.0;   // scale, > 0
  double xi = 0.0;  // shape

  /// True when y lies inside the support (always true for xi == 0).
  bool in_support(double y) const;
};

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

/// Log density including the -ln(b) Jacobian. Outside the support this
/// returns kLogZero.
double gev_logpdf(const GevParams& p, double y);
double gev_cdf(const GevParams& p, double y);
/// Inverse CDF, u in (0, 1).
double gev_quantile(const GevParams& p, double u);

/// Mean NLL of the labels and its gradient with respect to (a, ln b, xi).
struct GevNllGrad {
  double value = 0.0;
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
};
GevNllGrad gev_nll_with_grad(const GevParams& p, const Vector& labels);

/// Method-of-moments Gumbel starting point.
GevParams gev_moment_init(const Vector& labels);

/// Maximum likelihood fit by Adam on (a, ln b, xi). When an update pushes a
/// label outside the support, xi is halved toward 0 until every label is
/// back inside. Throws DegenerateInput when the labels have no spread.
GevParams gev_fit(const Vector& extreme_labels, const GevParams& init, int steps, double lr);

/// The top fraction of labels (at least min_count, at most all of them).
Vector extreme_labels(const Vector& labels, double fraction = 0.2, Eigen::Index min_count = 10);

// ---------------------------------------------------------------------------
// Random-walk Metropolis-Hastings over latent space
// ---------------------------------------------------------------------------

struct McmcChain {
  Vector current;
  double step_scale = 0.5;
  long accepted = 0;
  long proposed = 0;

  double acceptance_rate() const {
    return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  }
};

struct McmcOptions {
  /// Keep one state out of every `thin` transitions.
  int thin = 1;
  /// Proposals per adaptation window during burn-in.
  int adapt_window = 50;
  double target_low = 0.30;
  double target_high = 0.45;
  /// Proposals leaving this box get log target -inf.
  std::optional<BoundBox> bounds;
};

/// Unnormalized log target evaluated on a single latent point.
using LogTarget = std::function<double(const Vector&)>;

/// Gaussian random-walk MH. Step scale is adapted during burn-in toward the
/// [target_low, target_high] acceptance band. Throws ChainStuck if nothing was
/// accepted during a non-empty burn-in.
Matrix mcmc_sample(const LogTarget& log_target, McmcChain& chain, int burn_in, int n, Rng& rng,
                   const McmcOptions& opts = {});

/// MH in latent space with log target gev_logpdf(p, teacher_mean(z)).
Matrix gev_mcmc_sample(const GevParams& p, const TeacherNet& teacher, McmcChain& chain, int burn_in,
                       int n, Rng& rng, const McmcOptions& opts = {});

// ---------------------------------------------------------------------------
// Reparameterized diagonal Gaussian sampler
// ---------------------------------------------------------------------------

inline constexpr double kMinSamplerScale = 1e-4;
inline constexpr double kMaxSamplerScale = 1e3;

struct GaussSamplerParams {
  Vector mu;
  Vector log_scale;

  void validate() const;
};

struct GaussDraw {
  Matrix z_u;  // mu + exp(log_scale) * r, row-wise
  Matrix r;    // standard normal noise
};

GaussDraw gauss_sample(const GaussSamplerParams& p, Eigen::Index m, Rng& rng);
/// Deterministic reparameterization for a given noise matrix.
Matrix gauss_transform(const GaussSamplerParams& p, const Matrix& r);

/// Gradient of a loss with respect to (mu, log_scale) given its gradient with
/// respect to the reparameterized samples.
struct GaussSamplerGrad {
  Vector d_mu;
  Vector d_log_scale;
};
GaussSamplerGrad gauss_param_grad(const GaussSamplerParams& p, const Matrix& d_zu, const Matrix& r);

/// One Adam step on (mu, log_scale); log_scale is clamped afterwards.
GaussSamplerParams gauss_update(const GaussSamplerParams& p, const Matrix& d_zu, const Matrix& r,
                                double lr, AdamState& state);

// ---------------------------------------------------------------------------
// Uniform baseline
// ---------------------------------------------------------------------------

Matrix random_sample(const BoundBox& box, Eigen::Index m, Rng& rng);

}  // namespace tsbo
