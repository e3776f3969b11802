#pragma once

#include "tsbo/numerics.hpp"

namespace tsbo {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates for a flat parameter vector.
struct AdamState {
  Vector m;
  Vector v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(Eigen::Index n) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

/// One bias-corrected Adam descent step, in place. A zero gradient leaves the
/// parameters untouched when the moments are also zero.
void adam_step(Vector& params, const Vector& grad, double lr, AdamState& state,
               const AdamConfig& cfg = {});

}  // namespace tsbo
