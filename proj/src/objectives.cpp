#include "tsbo/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tsbo {

namespace {

constexpr double kTwoPi = 6.283185307179586;

}  // namespace

double sphere(const Vector& x) { return x.squaredNorm(); }

double ackley(const Vector& x) {
  const double d = static_cast<double>(x.size());
  const double r = std::sqrt(x.squaredNorm() / d);
  const double c = (kTwoPi * x.array()).cos().sum() / d;
  return -20.0 * std::exp(-0.2 * r) - std::exp(c) + 20.0 + std::exp(1.0);
}

double rastrigin(const Vector& x) {
  return 10.0 * static_cast<double>(x.size()) + (x.array().square() - 10.0 * (kTwoPi * x.array()).cos()).sum();
}

double branin(double x1, double x2) {
  const double b = 5.1 / (4.0 * M_PI * M_PI);
  const double c = 5.0 / M_PI;
  const double t = 1.0 / (8.0 * M_PI);
  const double q = x2 - b * x1 * x1 + c * x1 - 6.0;
  return q * q + 10.0 * (1.0 - t) * std::cos(x1) + 10.0;
}

Matrix branin_embedding(Eigen::Index dim) {
  if (dim < 2) throw NumericError(ErrorKind::InvalidArgument, "branin-embedded needs dim >= 2");
  std::mt19937_64 rng(20240501);
  std::normal_distribution<double> normal;
  Matrix g(dim, 2);
  for (Eigen::Index j = 0; j < 2; ++j)
    for (Eigen::Index i = 0; i < dim; ++i) g(i, j) = normal(rng);
  const Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(dim, 2);
}

std::vector<std::string> objective_names() { return {"sphere", "ackley", "rastrigin", "branin-embedded"}; }

Objective make_objective(const std::string& name, Eigen::Index dim) {
  if (dim < 1) throw NumericError(ErrorKind::InvalidArgument, "objective dimension must be >= 1");
  Objective obj;
  obj.name = name;
  obj.dim = dim;
  auto checked = [dim](double (*f)(const Vector&)) {
    return [dim, f](const Vector& x) {
      if (x.size() != dim) throw NumericError(ErrorKind::DimensionMismatch, "objective: input width");
      return -f(x);
    };
  };
  if (name == "sphere") {
    obj.eval = checked(sphere);
    obj.optimum = 0.0;
  } else if (name == "ackley") {
    obj.eval = checked(ackley);
    obj.optimum = 0.0;
  } else if (name == "rastrigin") {
    obj.eval = checked(rastrigin);
    obj.optimum = 0.0;
  } else if (name == "branin-embedded") {
    const Matrix a = branin_embedding(dim);
    obj.eval = [a, dim](const Vector& x) {
      if (x.size() != dim) throw NumericError(ErrorKind::DimensionMismatch, "objective: input width");
      const Eigen::Vector2d u = a.transpose() * x;
      return -branin(2.5 + 2.5 * u[0], 7.5 + 2.5 * u[1]);
    };
    obj.optimum = -kBraninMinimum;
  } else {
    throw NumericError(ErrorKind::InvalidArgument, "unknown objective: " + name);
  }
  return obj;
}

ScrambledSobol::ScrambledSobol(Eigen::Index dim, std::uint64_t seed)
    : engine_(static_cast<std::size_t>(std::max<Eigen::Index>(dim, 1))), shift_(static_cast<std::size_t>(dim)) {
  if (dim < 1) throw NumericError(ErrorKind::InvalidArgument, "sobol: dim must be >= 1");
  std::mt19937_64 rng(seed);
  for (auto& s : shift_) s = static_cast<std::uint32_t>(rng() >> 32);
}

Vector ScrambledSobol::next_unit() {
  Vector u(static_cast<Eigen::Index>(shift_.size()));
  // The engine starts at the second sequence point.
  const bool origin = !emitted_origin_;
  emitted_origin_ = true;
  for (std::size_t j = 0; j < shift_.size(); ++j) {
    const std::uint32_t v = (origin ? 0u : engine_()) ^ shift_[j];
    u[static_cast<Eigen::Index>(j)] = (static_cast<double>(v) + 0.5) * 0x1p-32;
  }
  return u;
}

Vector ScrambledSobol::next(const BoundBox& box) {
  if (box.dim() != static_cast<Eigen::Index>(shift_.size())) {
    throw NumericError(ErrorKind::DimensionMismatch, "sobol: box width");
  }
  return box.lo + (box.hi - box.lo).cwiseProduct(next_unit());
}

Matrix ScrambledSobol::draw(const BoundBox& box, Eigen::Index n) {
  Matrix out(n, box.dim());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = next(box).transpose();
  return out;
}

}  // namespace tsbo
