#pragma once

#include "tsbo/box.hpp"
#include "tsbo/numerics.hpp"

#include <functional>

namespace tsbo {

struct LbfgsOptions {
  int max_iterations = 100;
  int memory = 10;
  /// Stop when the projected-gradient infinity norm falls below this.
  double grad_tol = 1e-6;
  int max_line_search = 40;
};

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
};

/// Objective returning f(x) and writing its gradient into `grad`.
using ValueAndGrad = std::function<double(const Vector& x, Vector& grad)>;

/// Limited-memory BFGS minimization with iterates projected into a box and a
/// weak Wolfe line search along the projected path.
LbfgsResult lbfgs_minimize_box(const ValueAndGrad& f, const Vector& x0, const BoundBox& box,
                               const LbfgsOptions& opts = {});

}  // namespace tsbo
