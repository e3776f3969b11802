#include "tsbo/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tsbo {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::ChainStuck: return "ChainStuck";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

NumericError::NumericError(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

CholeskyFactor::CholeskyFactor(Matrix lower, double jitter)
    : lower_(std::move(lower)), jitter_(jitter) {}

double CholeskyFactor::log_det() const {
  return 2.0 * lower_.diagonal().array().log().sum();
}

Matrix CholeskyFactor::inverse() const {
  return solve_psd(*this, Matrix(Matrix::Identity(dim(), dim())));
}

namespace {

bool try_factor(const Matrix& a, double jitter, Matrix& out) {
  Matrix shifted = a;
  shifted.diagonal().array() += jitter;
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() != Eigen::Success) return false;
  out = llt.matrixL();
  // LLT only checks for non-positive pivots; guard tiny/NaN diagonals too.
  return (out.diagonal().array() > 0.0).all() && out.allFinite();
}

}  // namespace

CholeskyFactor cholesky(const Matrix& a, double jitter, const CholeskyOptions& opts) {
  if (a.rows() != a.cols()) {
    throw NumericError(ErrorKind::DimensionMismatch, "cholesky: matrix is not square");
  }
  if (!a.allFinite()) throw NumericError(ErrorKind::NonFinite, "cholesky: non-finite input");
  if (jitter < 0.0) throw NumericError(ErrorKind::InvalidArgument, "cholesky: negative jitter");
  if (a.rows() == 0) return {Matrix(0, 0), jitter};
  const double sym_tol = 1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > sym_tol) {
    throw NumericError(ErrorKind::InvalidArgument, "cholesky: matrix is not symmetric");
  }
  const double scale = a.rows() > 0 ? std::abs(a.diagonal().mean()) : 1.0;
  const double base = opts.base_relative_jitter * (scale > 0.0 ? scale : 1.0);
  double cap = opts.jitter_cap;
  if (cap < 0.0) cap = base * std::pow(10.0, opts.max_escalations);

  Matrix lower;
  if (try_factor(a, jitter, lower)) return {std::move(lower), jitter};
  double current = std::max(jitter * 10.0, base);
  while (current <= cap * (1.0 + 1e-12)) {
    if (try_factor(a, current, lower)) return {std::move(lower), current};
    current *= 10.0;
  }
  std::ostringstream msg;
  msg << "cholesky failed with jitter up to " << cap;
  throw NumericError(ErrorKind::NotPositiveDefinite, msg.str());
}

Matrix solve_psd(const CholeskyFactor& chol, const Matrix& b) {
  if (b.rows() != chol.dim()) {
    throw NumericError(ErrorKind::DimensionMismatch, "solve_psd: rhs rows do not match factor");
  }
  const auto l = chol.lower().triangularView<Eigen::Lower>();
  Matrix x = l.solve(b);
  l.transpose().solveInPlace(x);
  return x;
}

Vector solve_psd(const CholeskyFactor& chol, const Vector& b) {
  if (b.size() != chol.dim()) {
    throw NumericError(ErrorKind::DimensionMismatch, "solve_psd: rhs size does not match factor");
  }
  const auto l = chol.lower().triangularView<Eigen::Lower>();
  Vector x = l.solve(b);
  l.transpose().solveInPlace(x);
  return x;
}

Vector finite_diff_grad(const ScalarFunction& f, const Vector& x, double h) {
  if (!(h > 0.0)) throw NumericError(ErrorKind::InvalidArgument, "finite_diff_grad: h must be > 0");
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError(ErrorKind::NonFinite, "finite_diff_grad: non-finite evaluation");
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(ErrorKind::NonFinite, what);
}

void require_same_cols(const Matrix& a, const Matrix& b, const char* what) {
  if (a.cols() != b.cols()) throw NumericError(ErrorKind::DimensionMismatch, what);
}

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  require_same_cols(a, b, "squared_distances: column mismatch");
  // Direct differences: the |a|^2 + |b|^2 - 2ab expansion cancels badly for
  // nearby rows, which hurts finite-difference checks.
  Matrix d(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    }
  }
  return d;
}

Matrix take_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Vector take_rows(const Vector& v, const std::vector<Eigen::Index>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

}  // namespace tsbo
