#pragma once

#include "tsbo/adam.hpp"
#include "tsbo/kernel_gp.hpp"
#include "tsbo/numerics.hpp"

#include <cstdint>
#include <vector>

namespace tsbo {

inline constexpr double kTeacherVarianceFloor = 1e-6;

/// Rectifier MLP with a two-unit output: column 0 is the mean head, column 1
/// the raw variance head (variance = softplus(raw) + floor).
///
/// weights[l] has shape (fan_out x fan_in); every layer but the last is
/// followed by a ReLU.
struct TeacherNet {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  Eigen::Index input_dim() const { return weights.front().cols(); }
  std::size_t hidden_layers() const { return weights.size() - 1; }
  Eigen::Index num_params() const;

  Vector flatten() const;
  /// Inverse of flatten(); the layer shapes of *this are kept.
  void assign(const Vector& flat);
  void validate() const;
};

struct TeacherArch {
  Eigen::Index input_dim = 1;
  Eigen::Index hidden_width = 64;
  int hidden_layers = 5;
};

/// He-style uniform fan-in initialization, zero biases.
TeacherNet make_teacher(const TeacherArch& arch, std::uint64_t seed);

struct TeacherPrediction {
  Vector mean;
  Vector variance;
};

TeacherPrediction teacher_forward(const TeacherNet& net, const Matrix& z);

/// Mean Gaussian NLL of labels under the teacher's predictive distribution.
double teacher_labeled_loss(const TeacherNet& net, const LabeledSet& data);

/// Gaussian NLL value and its gradient with respect to the predicted mean and
/// variance (already divided by the batch size).
struct GaussianNllGrad {
  double loss = 0.0;
  Vector d_mean;
  Vector d_var;
};
GaussianNllGrad gaussian_nll_with_grad(const TeacherPrediction& pred, const Vector& y);

struct TeacherGrads {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  Vector flatten() const;
  TeacherGrads& operator+=(const TeacherGrads& other);
  TeacherGrads& operator*=(double factor);
};

struct TeacherBackward {
  TeacherGrads params;
  Matrix inputs;  // same shape as z
};

/// Reverse-mode gradients of sum_i (g_mean_i * mean_i + g_var_i * var_i).
TeacherBackward teacher_backward(const TeacherNet& net, const Vector& upstream_mean_grad,
                                 const Vector& upstream_var_grad, const Matrix& z);

TeacherNet teacher_adam_step(const TeacherNet& net, const TeacherGrads& grads, double lr,
                             AdamState& state);

}  // namespace tsbo
