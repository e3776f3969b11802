#pragma once

#include "tsbo/numerics.hpp"

#include <cmath>

namespace tsbo {

/// Isotropic RBF kernel hyperparameters plus additive noise and a constant
/// prior mean. Positive quantities are stored in log space.
struct GpHyper {
  double log_outputscale = 0.0;
  double log_lengthscale = 0.0;
  double log_noise = std::log(1e-2);
  double mean_const = 0.0;

  double outputscale() const { return std::exp(log_outputscale); }
  double lengthscale() const { return std::exp(log_lengthscale); }
  double noise() const { return std::exp(log_noise); }

  /// Clamps the lengthscale into [1e-3, 1e3].
  GpHyper clamped() const;
};

inline constexpr double kMinLengthscale = 1e-3;
inline constexpr double kMaxLengthscale = 1e3;

/// Latent inputs (one row per point) with their scalar labels.
struct LabeledSet {
  Matrix z;
  Vector y;

  Eigen::Index size() const { return z.rows(); }
  Eigen::Index dim() const { return z.cols(); }
  void validate() const;
};

struct GpPosterior {
  Vector mean;
  Vector variance;
};

/// Posterior moments at a single point together with their gradients with
/// respect to the query location.
struct PointPrediction {
  double mean = 0.0;
  double variance = 0.0;
  Vector d_mean;
  Vector d_variance;
};

/// s * exp(-|a_i - b_j|^2 / (2 l^2)).
Matrix kernel_matrix(const GpHyper& h, const Matrix& a, const Matrix& b);

/// Exact GP conditioned on a training set. Training covariance is
/// K + noise * I + diag(per_point_noise); an empty per_point_noise means
/// homoscedastic.
class GpModel {
public:
  GpModel(const GpHyper& h, LabeledSet data, Vector per_point_noise = {});

  GpPosterior predict(const Matrix& query) const;
  PointPrediction predict_point(const Vector& x) const;

  /// Negative log marginal likelihood of the training labels.
  double neg_log_marginal() const;

  const GpHyper& hyper() const { return h_; }
  const LabeledSet& data() const { return data_; }

private:
  GpHyper h_;
  LabeledSet data_;
  CholeskyFactor chol_;
  Vector alpha_;
};

/// Training covariance K + noise * I + diag(per_point_noise).
Matrix training_covariance(const GpHyper& h, const Matrix& z, const Vector& per_point_noise);

struct GpNllResult {
  double value = 0.0;
  /// d/d(log_outputscale, log_lengthscale, log_noise, mean_const).
  Eigen::Vector4d grad = Eigen::Vector4d::Zero();
};

/// Exact negative log marginal likelihood and its hypergradient.
GpNllResult gp_marginal_nll(const GpHyper& h, const LabeledSet& data, const Vector& per_point_noise);

/// Adam on the exact marginal NLL. Labels are standardized internally and the
/// returned hyperparameters are expressed back in label units. Returns the
/// best parameters seen.
GpHyper gp_fit(const LabeledSet& data, const Vector& per_point_noise, const GpHyper& init,
               int steps, double lr);

GpPosterior gp_predict(const GpHyper& h, const LabeledSet& data, const Vector& per_point_noise,
                       const Matrix& query);

/// Mean pointwise Gaussian NLL of test labels under the posterior predictive
/// (posterior variance + noise).
double gp_nll(const GpHyper& h, const LabeledSet& data, const Vector& per_point_noise,
              const LabeledSet& test);

}  // namespace tsbo
