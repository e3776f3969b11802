#pragma once

#include "tsbo/box.hpp"
#include "tsbo/kernel_gp.hpp"
#include "tsbo/lbfgs.hpp"
#include "tsbo/samplers.hpp"

namespace tsbo {

/// Expected improvement for maximization:
/// sigma * (gamma * Phi(gamma) + phi(gamma)), gamma = (mu - incumbent) / sigma,
/// falling back to max(mu - incumbent, 0) when sigma < 1e-12.
double expected_improvement(double mean, double variance, double incumbent);
Vector expected_improvement(const GpPosterior& post, double incumbent);

struct EiValueGrad {
  double value = 0.0;
  Vector grad;
};

/// EI of a fitted model at x, with its gradient chained through the posterior
/// mean and variance derivatives.
EiValueGrad expected_improvement_at(const GpModel& model, const Vector& x, double incumbent);

struct AcquisitionOptions {
  int restarts = 32;
  LbfgsOptions lbfgs{};
};

/// Multi-start projected L-BFGS ascent of EI. Start points are uniform in the
/// box, drawn up front in restart order. Throws NonFinite if every restart
/// fails.
Vector maximize_acquisition(const GpModel& model, double incumbent, const BoundBox& box, Rng& rng,
                            const AcquisitionOptions& opts = {});

Vector maximize_acquisition(const GpHyper& h, const LabeledSet& data, const Vector& per_point_noise,
                            double incumbent, const BoundBox& box, int restarts, Rng& rng);

}  // namespace tsbo
