#include "tsbo/kernel_gp.hpp"

#include "tsbo/adam.hpp"

#include <algorithm>
#include <limits>

namespace tsbo {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // ln(2*pi)

// Bounds applied to the standardized-space fit.
const double kMinLogNoise = std::log(1e-6);
const double kMaxLogNoise = std::log(1e2);
const double kMinLogScale = std::log(1e-4);
const double kMaxLogScale = std::log(1e4);

bool has_noise(const Vector& per_point_noise) { return per_point_noise.size() > 0; }

void check_noise(const Vector& per_point_noise, Eigen::Index n) {
  if (!has_noise(per_point_noise)) return;
  if (per_point_noise.size() != n) {
    throw NumericError(ErrorKind::DimensionMismatch, "per_point_noise length does not match data");
  }
  if (!per_point_noise.allFinite() || (per_point_noise.array() < 0.0).any()) {
    throw NumericError(ErrorKind::InvalidArgument, "per_point_noise must be finite and nonnegative");
  }
}

}  // namespace

GpHyper GpHyper::clamped() const {
  GpHyper out = *this;
  out.log_lengthscale =
      std::clamp(log_lengthscale, std::log(kMinLengthscale), std::log(kMaxLengthscale));
  return out;
}

void LabeledSet::validate() const {
  if (z.rows() < 1) throw NumericError(ErrorKind::InvalidArgument, "labeled set is empty");
  if (z.rows() != y.size()) {
    throw NumericError(ErrorKind::DimensionMismatch, "labeled set: rows of z and y differ");
  }
  require_finite(z, "labeled set: non-finite inputs");
  require_finite(y, "labeled set: non-finite labels");
}

Matrix kernel_matrix(const GpHyper& h, const Matrix& a, const Matrix& b) {
  require_same_cols(a, b, "kernel_matrix: inputs have different widths");
  const double ell = h.lengthscale();
  return (h.outputscale() * (-squared_distances(a, b) / (2.0 * ell * ell)).array().exp()).matrix();
}

Matrix training_covariance(const GpHyper& h, const Matrix& z, const Vector& per_point_noise) {
  check_noise(per_point_noise, z.rows());
  Matrix k = kernel_matrix(h, z, z);
  k.diagonal().array() += h.noise();
  if (has_noise(per_point_noise)) k.diagonal() += per_point_noise;
  return k;
}

GpModel::GpModel(const GpHyper& h, LabeledSet data, Vector per_point_noise)
    : h_(h),
      data_(std::move(data)),
      chol_([&] {
        data_.validate();
        return cholesky(training_covariance(h_, data_.z, per_point_noise));
      }()) {
  alpha_ = solve_psd(chol_, Vector(data_.y.array() - h_.mean_const));
}

GpPosterior GpModel::predict(const Matrix& query) const {
  require_same_cols(query, data_.z, "gp_predict: query width differs from training inputs");
  const Matrix k_star = kernel_matrix(h_, data_.z, query);  // N x Q
  GpPosterior post;
  post.mean = (k_star.transpose() * alpha_).array() + h_.mean_const;
  const Matrix v = chol_.lower().triangularView<Eigen::Lower>().solve(k_star);
  post.variance = (h_.outputscale() - v.colwise().squaredNorm().array()).cwiseMax(0.0).matrix().transpose();
  return post;
}

PointPrediction GpModel::predict_point(const Vector& x) const {
  if (x.size() != data_.dim()) {
    throw NumericError(ErrorKind::DimensionMismatch, "predict_point: query width differs");
  }
  const Eigen::Index n = data_.size();
  const double inv_ell2 = 1.0 / (h_.lengthscale() * h_.lengthscale());
  Vector k(n);
  Matrix dk(n, x.size());  // row i: d k_i / dx
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector diff = x - data_.z.row(i).transpose();
    k[i] = h_.outputscale() * std::exp(-0.5 * diff.squaredNorm() * inv_ell2);
    dk.row(i) = (-k[i] * inv_ell2) * diff.transpose();
  }
  const Vector w = solve_psd(chol_, k);
  PointPrediction out;
  out.mean = h_.mean_const + k.dot(alpha_);
  const double raw_var = h_.outputscale() - k.dot(w);
  out.variance = std::max(raw_var, 0.0);
  out.d_mean = dk.transpose() * alpha_;
  out.d_variance = raw_var > 0.0 ? Vector(-2.0 * dk.transpose() * w) : Vector::Zero(x.size());
  return out;
}

double GpModel::neg_log_marginal() const {
  const Vector r = data_.y.array() - h_.mean_const;
  return 0.5 * r.dot(alpha_) + 0.5 * chol_.log_det() + 0.5 * static_cast<double>(data_.size()) * kLog2Pi;
}

GpNllResult gp_marginal_nll(const GpHyper& h, const LabeledSet& data, const Vector& per_point_noise) {
  data.validate();
  const Matrix dist = squared_distances(data.z, data.z);
  const double ell2 = h.lengthscale() * h.lengthscale();
  const Matrix kf = (h.outputscale() * (-dist / (2.0 * ell2)).array().exp()).matrix();
  check_noise(per_point_noise, data.size());
  Matrix cov = kf;
  cov.diagonal().array() += h.noise();
  if (has_noise(per_point_noise)) cov.diagonal() += per_point_noise;

  const CholeskyFactor chol = cholesky(cov);
  const Vector r = data.y.array() - h.mean_const;
  const Vector alpha = solve_psd(chol, r);

  GpNllResult out;
  out.value = 0.5 * r.dot(alpha) + 0.5 * chol.log_det() + 0.5 * static_cast<double>(data.size()) * kLog2Pi;
  const Matrix w = chol.inverse() - alpha * alpha.transpose();
  out.grad[0] = 0.5 * (w.array() * kf.array()).sum();
  out.grad[1] = 0.5 * (w.array() * kf.array() * dist.array()).sum() / ell2;
  out.grad[2] = 0.5 * h.noise() * w.trace();
  out.grad[3] = -alpha.sum();
  return out;
}

GpHyper gp_fit(const LabeledSet& data, const Vector& per_point_noise, const GpHyper& init,
               int steps, double lr) {
  data.validate();
  check_noise(per_point_noise, data.size());
  if (steps < 0) throw NumericError(ErrorKind::InvalidArgument, "gp_fit: negative step count");
  if (steps == 0) return init;

  const double center = data.y.mean();
  double scale = std::sqrt((data.y.array() - center).square().mean());
  if (!(scale > 1e-12)) scale = 1.0;
  const double log_scale2 = 2.0 * std::log(scale);

  LabeledSet std_data{data.z, (data.y.array() - center) / scale};
  Vector std_noise;
  if (has_noise(per_point_noise)) std_noise = per_point_noise / (scale * scale);

  auto clamp_std = [](GpHyper h) {
    h = h.clamped();
    h.log_noise = std::clamp(h.log_noise, kMinLogNoise, kMaxLogNoise);
    h.log_outputscale = std::clamp(h.log_outputscale, kMinLogScale, kMaxLogScale);
    return h;
  };

  GpHyper current = init;
  current.log_outputscale -= log_scale2;
  current.log_noise -= log_scale2;
  current.mean_const = (init.mean_const - center) / scale;
  current = clamp_std(current);

  Vector params(4);
  AdamState state(4);
  GpHyper best = current;
  double best_nll = std::numeric_limits<double>::infinity();
  for (int step = 0; step <= steps; ++step) {
    const GpNllResult res = gp_marginal_nll(current, std_data, std_noise);
    if (std::isfinite(res.value) && res.value < best_nll) {
      best_nll = res.value;
      best = current;
    }
    if (step == steps || !res.grad.allFinite()) break;
    params << current.log_outputscale, current.log_lengthscale, current.log_noise, current.mean_const;
    adam_step(params, Vector(res.grad), lr, state);
    current.log_outputscale = params[0];
    current.log_lengthscale = params[1];
    current.log_noise = params[2];
    current.mean_const = params[3];
    current = clamp_std(current);
  }

  GpHyper out = best;
  out.log_outputscale += log_scale2;
  out.log_noise += log_scale2;
  out.mean_const = center + scale * best.mean_const;
  return out;
}

GpPosterior gp_predict(const GpHyper& h, const LabeledSet& data, const Vector& per_point_noise,
                       const Matrix& query) {
  return GpModel(h, data, per_point_noise).predict(query);
}

double gp_nll(const GpHyper& h, const LabeledSet& data, const Vector& per_point_noise,
              const LabeledSet& test) {
  test.validate();
  const GpPosterior post = gp_predict(h, data, per_point_noise, test.z);
  const Vector var = post.variance.array() + h.noise();
  const Vector resid = test.y - post.mean;
  const Vector pointwise =
      0.5 * (kLog2Pi + var.array().log()) + resid.array().square() / (2.0 * var.array());
  return pointwise.mean();
}

}  // namespace tsbo
