#include "tsbo/box.hpp"

namespace tsbo {

void BoundBox::validate() const {
  if (lo.size() != hi.size() || lo.size() == 0) {
    throw NumericError(ErrorKind::DimensionMismatch, "box: lo/hi size mismatch or empty");
  }
  if (!lo.allFinite() || !hi.allFinite()) throw NumericError(ErrorKind::NonFinite, "box: non-finite bounds");
  if ((lo.array() > hi.array()).any()) throw NumericError(ErrorKind::InvalidArgument, "box: lo > hi");
}

bool BoundBox::contains(const Vector& x) const {
  return x.size() == lo.size() && (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

Vector BoundBox::project(const Vector& x) const { return x.cwiseMax(lo).cwiseMin(hi); }

BoundBox BoundBox::cube(Eigen::Index dim, double lo, double hi) {
  BoundBox box{Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
  box.validate();
  return box;
}

}  // namespace tsbo
