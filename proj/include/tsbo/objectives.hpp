#pragma once

#include "tsbo/box.hpp"
#include "tsbo/numerics.hpp"

#include <boost/random/sobol.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tsbo {

/// Black-box function to maximize. Built-ins are negated minimization
/// benchmarks, so their optimum is at most 0.
struct Objective {
  std::string name;
  Eigen::Index dim = 0;
  std::function<double(const Vector&)> eval;
  std::optional<double> optimum;
};

double sphere(const Vector& x);
double ackley(const Vector& x);
double rastrigin(const Vector& x);
/// Branin on its usual domain.
double branin(double x1, double x2);

inline constexpr double kBraninMinimum = 0.39788735772973816;

/// Fixed orthonormal d x 2 map used by the embedded Branin objective.
Matrix branin_embedding(Eigen::Index dim);

/// "sphere", "ackley", "rastrigin" or "branin-embedded" (dim >= 2).
Objective make_objective(const std::string& name, Eigen::Index dim);
std::vector<std::string> objective_names();

/// Wraps an objective and counts how often it is called.
class CountingObjective {
public:
  explicit CountingObjective(Objective obj) : obj_(std::move(obj)) {}

  double operator()(const Vector& x) {
    ++count_;
    return obj_.eval(x);
  }
  long count() const { return count_; }
  const Objective& objective() const { return obj_; }

private:
  Objective obj_;
  long count_ = 0;
};

/// Sobol sequence (starting at the origin) with a seeded random digital shift.
class ScrambledSobol {
public:
  ScrambledSobol(Eigen::Index dim, std::uint64_t seed);

  /// Next point in (0, 1)^dim.
  Vector next_unit();
  /// Next point mapped into the box.
  Vector next(const BoundBox& box);
  Matrix draw(const BoundBox& box, Eigen::Index n);

private:
  boost::random::sobol_engine<std::uint32_t, 32> engine_;
  bool emitted_origin_ = false;
  std::vector<std::uint32_t> shift_;
};

}  // namespace tsbo
