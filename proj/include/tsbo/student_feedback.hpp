#pragma once

#include "tsbo/adam.hpp"
#include "tsbo/kernel_gp.hpp"
#include "tsbo/numerics.hpp"

namespace tsbo {

/// Unlabeled inputs with the teacher's pseudo labels and predictive
/// variances. var_t may be all zero when uncertainty awareness is off.
struct PseudoSet {
  Matrix z_u;
  Vector y_hat;
  Vector var_t;

  Eigen::Index size() const { return z_u.rows(); }
  void validate() const;
};

struct FeedbackGrads {
  Vector d_yhat;
  Vector d_vart;
  Matrix d_zu;
  /// d/d(log_outputscale, log_lengthscale, log_noise) of the feedback loss.
  /// Informational only; the student is frozen during feedback updates.
  Eigen::Vector3d d_student_hyper = Eigen::Vector3d::Zero();
};

/// kappa(Z_u, Z_u) + noise * I + diag(var_t).
Matrix assemble_sigma_u(const GpHyper& h, const PseudoSet& pseudo);

/// NLL of the pseudo labels under N(0, Sigma_u).
double student_unlabeled_nll(const GpHyper& h, const PseudoSet& pseudo);

struct StudentNllGrad {
  double value = 0.0;
  /// d/d(log_outputscale, log_lengthscale, log_noise), var_t held fixed.
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
};
StudentNllGrad student_unlabeled_nll_with_grad(const GpHyper& h, const PseudoSet& pseudo);

/// One Adam step of the student kernel hyperparameters on the unlabeled NLL.
GpHyper student_fit_step(const GpHyper& h, const PseudoSet& pseudo, double lr, AdamState& state);

/// Student posterior mean kappa(Z_val, Z_u) Sigma_u^{-1} y_hat (zero prior mean).
Vector feedback_posterior_mean(const GpHyper& h, const PseudoSet& pseudo, const Matrix& z_val);

/// Mean squared error of the student posterior mean on the validation set.
double feedback_loss(const GpHyper& h, const PseudoSet& pseudo, const LabeledSet& val);

struct FeedbackResult {
  double loss = 0.0;
  FeedbackGrads grads;
};

/// Feedback loss together with its exact gradients with respect to the pseudo
/// labels, the teacher variances and the unlabeled locations (through both
/// kernel blocks). Teacher-side chain rules are left to the caller.
FeedbackResult feedback_backward(const GpHyper& h, const PseudoSet& pseudo, const LabeledSet& val);

}  // namespace tsbo
