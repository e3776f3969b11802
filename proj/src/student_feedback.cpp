#include "tsbo/student_feedback.hpp"

#include <algorithm>

namespace tsbo {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

const double kMinLogNoise = std::log(1e-6);
const double kMaxLogNoise = std::log(1e2);
const double kMinLogScale = std::log(1e-4);
const double kMaxLogScale = std::log(1e4);

}  // namespace

void PseudoSet::validate() const {
  if (z_u.rows() < 1) throw NumericError(ErrorKind::InvalidArgument, "pseudo set is empty");
  if (y_hat.size() != z_u.rows() || var_t.size() != z_u.rows()) {
    throw NumericError(ErrorKind::DimensionMismatch, "pseudo set: inconsistent lengths");
  }
  require_finite(z_u, "pseudo set: non-finite inputs");
  require_finite(y_hat, "pseudo set: non-finite pseudo labels");
  require_finite(var_t, "pseudo set: non-finite teacher variances");
  if ((var_t.array() < 0.0).any()) {
    throw NumericError(ErrorKind::InvalidArgument, "pseudo set: negative teacher variance");
  }
}

Matrix assemble_sigma_u(const GpHyper& h, const PseudoSet& pseudo) {
  pseudo.validate();
  Matrix sigma = kernel_matrix(h, pseudo.z_u, pseudo.z_u);
  sigma.diagonal().array() += h.noise();
  sigma.diagonal() += pseudo.var_t;
  return sigma;
}

double student_unlabeled_nll(const GpHyper& h, const PseudoSet& pseudo) {
  const CholeskyFactor chol = cholesky(assemble_sigma_u(h, pseudo));
  const Vector alpha = solve_psd(chol, pseudo.y_hat);
  return 0.5 * (pseudo.y_hat.dot(alpha) + chol.log_det() +
                static_cast<double>(pseudo.size()) * kLog2Pi);
}

StudentNllGrad student_unlabeled_nll_with_grad(const GpHyper& h, const PseudoSet& pseudo) {
  pseudo.validate();
  const Matrix dist = squared_distances(pseudo.z_u, pseudo.z_u);
  const double ell2 = h.lengthscale() * h.lengthscale();
  const Matrix kuu = (h.outputscale() * (-dist / (2.0 * ell2)).array().exp()).matrix();
  Matrix sigma = kuu;
  sigma.diagonal().array() += h.noise();
  sigma.diagonal() += pseudo.var_t;

  const CholeskyFactor chol = cholesky(sigma);
  const Vector alpha = solve_psd(chol, pseudo.y_hat);
  StudentNllGrad out;
  out.value = 0.5 * (pseudo.y_hat.dot(alpha) + chol.log_det() +
                     static_cast<double>(pseudo.size()) * kLog2Pi);
  const Matrix w = chol.inverse() - alpha * alpha.transpose();
  out.grad[0] = 0.5 * (w.array() * kuu.array()).sum();
  out.grad[1] = 0.5 * (w.array() * kuu.array() * dist.array()).sum() / ell2;
  out.grad[2] = 0.5 * h.noise() * w.trace();
  return out;
}

GpHyper student_fit_step(const GpHyper& h, const PseudoSet& pseudo, double lr, AdamState& state) {
  const StudentNllGrad res = student_unlabeled_nll_with_grad(h, pseudo);
  Vector params(3);
  params << h.log_outputscale, h.log_lengthscale, h.log_noise;
  adam_step(params, Vector(res.grad), lr, state);
  GpHyper out = h;
  out.log_outputscale = std::clamp(params[0], kMinLogScale, kMaxLogScale);
  out.log_lengthscale = params[1];
  out.log_noise = std::clamp(params[2], kMinLogNoise, kMaxLogNoise);
  return out.clamped();
}

Vector feedback_posterior_mean(const GpHyper& h, const PseudoSet& pseudo, const Matrix& z_val) {
  require_same_cols(z_val, pseudo.z_u, "feedback_posterior_mean: validation width differs");
  const CholeskyFactor chol = cholesky(assemble_sigma_u(h, pseudo));
  const Vector alpha = solve_psd(chol, pseudo.y_hat);
  return kernel_matrix(h, z_val, pseudo.z_u) * alpha;
}

double feedback_loss(const GpHyper& h, const PseudoSet& pseudo, const LabeledSet& val) {
  val.validate();
  const Vector mean = feedback_posterior_mean(h, pseudo, val.z);
  return (mean - val.y).squaredNorm() / static_cast<double>(val.size());
}

FeedbackResult feedback_backward(const GpHyper& h, const PseudoSet& pseudo, const LabeledSet& val) {
  pseudo.validate();
  val.validate();
  require_same_cols(val.z, pseudo.z_u, "feedback_backward: validation width differs");
  const Eigen::Index m = pseudo.size();
  const Eigen::Index n = val.size();
  const double ell2 = h.lengthscale() * h.lengthscale();

  const Matrix dist_uu = squared_distances(pseudo.z_u, pseudo.z_u);
  const Matrix dist_vu = squared_distances(val.z, pseudo.z_u);
  const Matrix kuu = (h.outputscale() * (-dist_uu / (2.0 * ell2)).array().exp()).matrix();
  const Matrix kvu = (h.outputscale() * (-dist_vu / (2.0 * ell2)).array().exp()).matrix();
  Matrix sigma = kuu;
  sigma.diagonal().array() += h.noise();
  sigma.diagonal() += pseudo.var_t;

  const CholeskyFactor chol = cholesky(sigma);
  const Vector alpha = solve_psd(chol, pseudo.y_hat);
  const Vector resid = kvu * alpha - val.y;

  FeedbackResult out;
  out.loss = resid.squaredNorm() / static_cast<double>(n);
  const Vector g = (2.0 / static_cast<double>(n)) * resid;  // dL / d mean
  const Vector beta = solve_psd(chol, Vector(kvu.transpose() * g));

  FeedbackGrads& grads = out.grads;
  grads.d_yhat = beta;
  // dL/dSigma = -beta alpha^T; var_t only touches the diagonal.
  grads.d_vart = -beta.cwiseProduct(alpha);

  // dL/dK_vu = g alpha^T, dL/dK_uu = -beta alpha^T (kernel block of Sigma_u).
  const Matrix gk_vu = (g * alpha.transpose()).cwiseProduct(kvu);
  const Matrix gsig = -beta * alpha.transpose();
  const Matrix gk_uu = (gsig + gsig.transpose()).cwiseProduct(kuu);

  grads.d_zu = Matrix::Zero(m, pseudo.z_u.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto zi = pseudo.z_u.row(i);
    for (Eigen::Index j = 0; j < n; ++j) grads.d_zu.row(i) += gk_vu(j, i) * (val.z.row(j) - zi);
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k != i) grads.d_zu.row(i) += gk_uu(i, k) * (pseudo.z_u.row(k) - zi);
    }
  }
  grads.d_zu /= ell2;

  grads.d_student_hyper[0] = gk_vu.sum() + (gsig.array() * kuu.array()).sum();
  grads.d_student_hyper[1] =
      ((gk_vu.array() * dist_vu.array()).sum() + (gsig.array() * kuu.array() * dist_uu.array()).sum()) /
      ell2;
  grads.d_student_hyper[2] = h.noise() * gsig.trace();
  return out;
}

}  // namespace tsbo
