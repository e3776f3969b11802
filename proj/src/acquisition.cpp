#include "tsbo/acquisition.hpp"

#include <cmath>
#include <limits>

namespace tsbo {

namespace {

constexpr double kMinSigma = 1e-12;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double expected_improvement(double mean, double variance, double incumbent) {
  const double sigma = std::sqrt(std::max(variance, 0.0));
  const double delta = mean - incumbent;
  if (sigma < kMinSigma) return std::max(delta, 0.0);
  const double gamma = delta / sigma;
  return std::max(delta * normal_cdf(gamma) + sigma * normal_pdf(gamma), 0.0);
}

Vector expected_improvement(const GpPosterior& post, double incumbent) {
  Vector out(post.mean.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = expected_improvement(post.mean[i], post.variance[i], incumbent);
  }
  return out;
}

EiValueGrad expected_improvement_at(const GpModel& model, const Vector& x, double incumbent) {
  const PointPrediction p = model.predict_point(x);
  EiValueGrad out;
  const double sigma = std::sqrt(p.variance);
  const double delta = p.mean - incumbent;
  if (sigma < kMinSigma) {
    out.value = std::max(delta, 0.0);
    out.grad = delta > 0.0 ? p.d_mean : Vector(Vector::Zero(x.size()));
    return out;
  }
  const double gamma = delta / sigma;
  const double cdf = normal_cdf(gamma);
  const double pdf = normal_pdf(gamma);
  out.value = delta * cdf + sigma * pdf;
  // dEI/dmu = Phi, dEI/dsigma = phi, dsigma = dvar / (2 sigma)
  out.grad = cdf * p.d_mean + (pdf / (2.0 * sigma)) * p.d_variance;
  return out;
}

Vector maximize_acquisition(const GpModel& model, double incumbent, const BoundBox& box, Rng& rng,
                            const AcquisitionOptions& opts) {
  box.validate();
  if (opts.restarts < 1) throw NumericError(ErrorKind::InvalidArgument, "maximize_acquisition: restarts < 1");
  const Matrix starts = random_sample(box, opts.restarts, rng);

  const ValueAndGrad neg_ei = [&](const Vector& x, Vector& grad) {
    const EiValueGrad ei = expected_improvement_at(model, x, incumbent);
    grad = -ei.grad;
    return -ei.value;
  };

  Vector best;
  double best_value = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < starts.rows(); ++r) {
    try {
      const LbfgsResult res = lbfgs_minimize_box(neg_ei, starts.row(r).transpose(), box, opts.lbfgs);
      if (-res.value > best_value) {
        best_value = -res.value;
        best = res.x;
      }
    } catch (const NumericError& e) {
      if (e.kind() != ErrorKind::NonFinite) throw;
    }
  }
  if (best.size() == 0) throw NumericError(ErrorKind::NonFinite, "maximize_acquisition: every restart failed");
  return best;
}

Vector maximize_acquisition(const GpHyper& h, const LabeledSet& data, const Vector& per_point_noise,
                            double incumbent, const BoundBox& box, int restarts, Rng& rng) {
  const GpModel model(h, data, per_point_noise);
  AcquisitionOptions opts;
  opts.restarts = restarts;
  return maximize_acquisition(model, incumbent, box, rng, opts);
}

}  // namespace tsbo
