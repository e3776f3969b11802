#include "tsbo/adam.hpp"

#include <cmath>

namespace tsbo {

void adam_step(Vector& params, const Vector& grad, double lr, AdamState& state,
               const AdamConfig& cfg) {
  if (grad.size() != params.size()) {
    throw NumericError(ErrorKind::DimensionMismatch, "adam_step: gradient size mismatch");
  }
  if (!grad.allFinite()) throw NumericError(ErrorKind::NonFinite, "adam_step: non-finite gradient");
  if (state.m.size() != params.size()) state = AdamState(params.size());

  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const Vector m_hat = state.m / c1;
  const Vector v_hat = state.v / c2;
  params.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
}

}  // namespace tsbo
