#include "tsbo/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tsbo {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer (batch x fan_in)
  std::vector<Matrix> pre;     // pre-activation of each layer
};

Matrix run_forward(const TeacherNet& net, const Matrix& z, ForwardCache* cache) {
  if (z.cols() != net.input_dim()) {
    throw NumericError(ErrorKind::DimensionMismatch, "teacher: input width does not match network");
  }
  require_finite(z, "teacher: non-finite inputs");
  net.validate();
  Matrix h = z;
  const std::size_t layers = net.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix a = h * net.weights[l].transpose();
    a.rowwise() += net.biases[l].transpose();
    if (cache) {
      cache->inputs.push_back(h);
      cache->pre.push_back(a);
    }
    h = (l + 1 < layers) ? Matrix(a.cwiseMax(0.0)) : std::move(a);
  }
  return h;
}

}  // namespace

Eigen::Index TeacherNet::num_params() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

Vector TeacherNet::flatten() const {
  Vector out(num_params());
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.segment(offset, weights[l].size()) = weights[l].reshaped();
    offset += weights[l].size();
    out.segment(offset, biases[l].size()) = biases[l];
    offset += biases[l].size();
  }
  return out;
}

void TeacherNet::assign(const Vector& flat) {
  if (flat.size() != num_params()) {
    throw NumericError(ErrorKind::DimensionMismatch, "teacher: flat parameter size mismatch");
  }
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l].reshaped() = flat.segment(offset, weights[l].size());
    offset += weights[l].size();
    biases[l] = flat.segment(offset, biases[l].size());
    offset += biases[l].size();
  }
}

void TeacherNet::validate() const {
  if (weights.empty() || weights.size() != biases.size()) {
    throw NumericError(ErrorKind::InvalidArgument, "teacher: malformed layer lists");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != biases[l].size() ||
        (l > 0 && weights[l].cols() != weights[l - 1].rows())) {
      throw NumericError(ErrorKind::DimensionMismatch, "teacher: layer shapes do not compose");
    }
    require_finite(weights[l], "teacher: non-finite weights");
    require_finite(biases[l], "teacher: non-finite biases");
  }
  if (weights.back().rows() != 2) {
    throw NumericError(ErrorKind::DimensionMismatch, "teacher: output layer must have 2 units");
  }
}

TeacherNet make_teacher(const TeacherArch& arch, std::uint64_t seed) {
  if (arch.input_dim < 1 || arch.hidden_width < 1 || arch.hidden_layers < 0) {
    throw NumericError(ErrorKind::InvalidArgument, "make_teacher: bad architecture");
  }
  std::mt19937_64 rng(seed);
  TeacherNet net;
  Eigen::Index fan_in = arch.input_dim;
  for (int l = 0; l <= arch.hidden_layers; ++l) {
    const Eigen::Index fan_out = (l == arch.hidden_layers) ? 2 : arch.hidden_width;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_out, fan_in);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(fan_out));
    fan_in = fan_out;
  }
  return net;
}

TeacherPrediction teacher_forward(const TeacherNet& net, const Matrix& z) {
  const Matrix out = run_forward(net, z, nullptr);
  TeacherPrediction pred;
  pred.mean = out.col(0);
  pred.variance = out.col(1).unaryExpr([](double r) { return softplus(r) + kTeacherVarianceFloor; });
  if (!pred.mean.allFinite() || !pred.variance.allFinite()) {
    throw NumericError(ErrorKind::NonFinite, "teacher_forward: non-finite output");
  }
  return pred;
}

GaussianNllGrad gaussian_nll_with_grad(const TeacherPrediction& pred, const Vector& y) {
  if (y.size() != pred.mean.size() || y.size() == 0) {
    throw NumericError(ErrorKind::DimensionMismatch, "gaussian_nll: label count mismatch");
  }
  const double n = static_cast<double>(y.size());
  const Eigen::ArrayXd var = pred.variance.array();
  const Eigen::ArrayXd resid = y.array() - pred.mean.array();
  GaussianNllGrad out;
  out.loss = (0.5 * (kLog2Pi + var.log()) + resid.square() / (2.0 * var)).mean();
  out.d_mean = (-resid / var / n).matrix();
  out.d_var = ((0.5 / var - resid.square() / (2.0 * var.square())) / n).matrix();
  if (!std::isfinite(out.loss)) throw NumericError(ErrorKind::NonFinite, "gaussian_nll: non-finite loss");
  return out;
}

double teacher_labeled_loss(const TeacherNet& net, const LabeledSet& data) {
  data.validate();
  return gaussian_nll_with_grad(teacher_forward(net, data.z), data.y).loss;
}

Vector TeacherGrads::flatten() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  Vector out(n);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.segment(offset, weights[l].size()) = weights[l].reshaped();
    offset += weights[l].size();
    out.segment(offset, biases[l].size()) = biases[l];
    offset += biases[l].size();
  }
  return out;
}

TeacherGrads& TeacherGrads::operator+=(const TeacherGrads& other) {
  if (weights.empty()) return *this = other;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

TeacherGrads& TeacherGrads::operator*=(double factor) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= factor;
    biases[l] *= factor;
  }
  return *this;
}

TeacherBackward teacher_backward(const TeacherNet& net, const Vector& upstream_mean_grad,
                                 const Vector& upstream_var_grad, const Matrix& z) {
  if (upstream_mean_grad.size() != z.rows() || upstream_var_grad.size() != z.rows()) {
    throw NumericError(ErrorKind::DimensionMismatch, "teacher_backward: upstream size mismatch");
  }
  ForwardCache cache;
  const Matrix out = run_forward(net, z, &cache);

  Matrix delta(z.rows(), 2);
  delta.col(0) = upstream_mean_grad;
  delta.col(1) = upstream_var_grad.cwiseProduct(out.col(1).unaryExpr(&sigmoid));

  const std::size_t layers = net.weights.size();
  TeacherBackward result;
  result.params.weights.resize(layers);
  result.params.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    result.params.weights[l] = delta.transpose() * cache.inputs[l];
    result.params.biases[l] = delta.colwise().sum().transpose();
    Matrix upstream = delta * net.weights[l];
    if (l > 0) {
      upstream.array() *= (cache.pre[l - 1].array() > 0.0).cast<double>();
      delta = std::move(upstream);
    } else {
      result.inputs = std::move(upstream);
    }
  }
  return result;
}

TeacherNet teacher_adam_step(const TeacherNet& net, const TeacherGrads& grads, double lr,
                             AdamState& state) {
  Vector params = net.flatten();
  const Vector flat_grad = grads.flatten();
  if (flat_grad.size() != params.size()) {
    throw NumericError(ErrorKind::DimensionMismatch, "teacher_adam_step: gradient shape mismatch");
  }
  if (state.m.size() != 0 && state.m.size() != params.size()) {
    throw NumericError(ErrorKind::DimensionMismatch, "teacher_adam_step: optimizer state shape mismatch");
  }
  adam_step(params, flat_grad, lr, state);
  TeacherNet out = net;
  out.assign(params);
  return out;
}

}  // namespace tsbo
