#include "tsbo/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace tsbo {

namespace {

struct CurvaturePair {
  Vector s;
  Vector y;
  double rho;
};

Vector two_loop(const std::deque<CurvaturePair>& memory, const Vector& grad) {
  Vector q = grad;
  std::vector<double> alpha(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    alpha[k] = memory[k].rho * memory[k].s.dot(q);
    q -= alpha[k] * memory[k].y;
  }
  if (!memory.empty()) {
    const auto& last = memory.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const double beta = memory[k].rho * memory[k].y.dot(q);
    q += (alpha[k] - beta) * memory[k].s;
  }
  return -q;
}

}  // namespace

LbfgsResult lbfgs_minimize_box(const ValueAndGrad& f, const Vector& x0, const BoundBox& box,
                               const LbfgsOptions& opts) {
  box.validate();
  if (x0.size() != box.dim()) throw NumericError(ErrorKind::DimensionMismatch, "lbfgs: start point width");
  LbfgsResult res;
  res.x = box.project(x0);
  Vector grad(res.x.size());
  res.value = f(res.x, grad);
  if (!std::isfinite(res.value) || !grad.allFinite()) {
    throw NumericError(ErrorKind::NonFinite, "lbfgs: non-finite objective at the start point");
  }

  std::deque<CurvaturePair> memory;
  Vector trial_grad(res.x.size());
  for (; res.iterations < opts.max_iterations; ++res.iterations) {
    const Vector pg = box.project(res.x - grad) - res.x;
    if (pg.lpNorm<Eigen::Infinity>() < opts.grad_tol) break;

    Vector dir = two_loop(memory, grad);
    // Components that would immediately leave the box carry no information.
    for (Eigen::Index j = 0; j < dir.size(); ++j) {
      if ((res.x[j] <= box.lo[j] && dir[j] < 0.0) || (res.x[j] >= box.hi[j] && dir[j] > 0.0)) dir[j] = 0.0;
    }
    if (!(grad.dot(dir) < 0.0)) {
      memory.clear();
      dir = -grad;
    }

    // Weak Wolfe search by bracketing along the projected path.
    double step = 1.0;
    double lo_step = 0.0;
    double hi_step = std::numeric_limits<double>::infinity();
    bool accepted = false;
    Vector trial;
    double trial_value = 0.0;
    Vector fallback;
    double fallback_value = res.value;
    Vector fallback_grad;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
      trial = box.project(res.x + step * dir);
      trial_value = f(trial, trial_grad);
      const Vector s = trial - res.x;
      const double gs = grad.dot(s);
      const bool finite = std::isfinite(trial_value) && trial_grad.allFinite();
      if (!finite || trial_value > res.value + 1e-4 * gs || !(gs < 0.0)) {
        hi_step = step;
      } else {
        if (trial_value < fallback_value) {
          fallback = trial;
          fallback_value = trial_value;
          fallback_grad = trial_grad;
        }
        const bool saturated = (s - (box.project(res.x + 2.0 * step * dir) - res.x)).squaredNorm() == 0.0;
        if (trial_grad.dot(s) >= 0.9 * gs || saturated) {
          accepted = true;
          break;
        }
        lo_step = step;
      }
      step = std::isinf(hi_step) ? 2.0 * step : 0.5 * (lo_step + hi_step);
    }
    if (!accepted && fallback.size() > 0) {
      trial = std::move(fallback);
      trial_value = fallback_value;
      trial_grad = fallback_grad;
      accepted = true;
    }
    if (!accepted) break;

    CurvaturePair pair{trial - res.x, trial_grad - grad, 0.0};
    const double sy = pair.s.dot(pair.y);
    if (sy > 1e-10 * pair.s.norm() * pair.y.norm()) {
      pair.rho = 1.0 / sy;
      memory.push_back(std::move(pair));
      if (static_cast<int>(memory.size()) > opts.memory) memory.pop_front();
    }
    res.x = std::move(trial);
    res.value = trial_value;
    grad = trial_grad;
  }
  return res;
}

}  // namespace tsbo
