#pragma once

#include "tsbo/numerics.hpp"

namespace tsbo {

/// Axis-aligned search region, lo <= hi elementwise.
struct BoundBox {
  Vector lo;
  Vector hi;

  Eigen::Index dim() const { return lo.size(); }
  void validate() const;
  bool contains(const Vector& x) const;
  Vector project(const Vector& x) const;
  Vector center() const { return 0.5 * (lo + hi); }

  static BoundBox cube(Eigen::Index dim, double lo, double hi);
};

}  // namespace tsbo
