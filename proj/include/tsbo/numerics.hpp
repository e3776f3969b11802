#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsbo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ErrorKind {
  NotPositiveDefinite,
  NonFinite,
  DimensionMismatch,
  DegenerateInput,
  ChainStuck,
  InvalidArgument,
};

const char* to_string(ErrorKind kind);

/// Numeric failure raised anywhere in the library. The kind lets callers pick
/// a fallback (e.g. a degenerate GEV fit falls back to the Gaussian sampler).
class NumericError : public std::runtime_error {
public:
  NumericError(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

struct CholeskyOptions {
  /// Jitter escalation starts at base_relative_jitter * mean(diag(a)).
  double base_relative_jitter = 1e-6;
  int max_escalations = 4;
  /// Absolute upper bound on the jitter; negative means "derived from the
  /// base jitter and max_escalations".
  double jitter_cap = -1.0;
};

/// Lower-triangular factor L with L * L^T = a + jitter * I.
class CholeskyFactor {
public:
  CholeskyFactor(Matrix lower, double jitter);

  const Matrix& lower() const noexcept { return lower_; }
  Eigen::Index dim() const noexcept { return lower_.rows(); }
  /// Jitter that was finally added to the diagonal.
  double jitter() const noexcept { return jitter_; }

  double log_det() const;
  /// Dense inverse of the factored matrix. Only for small systems that need
  /// the full inverse (trace terms of hypergradients).
  Matrix inverse() const;

private:
  Matrix lower_;
  double jitter_;
};

/// Factor a + jitter * I. On failure the jitter is escalated x10, starting
/// from the base jitter if the supplied one is smaller, until the cap.
CholeskyFactor cholesky(const Matrix& a, double jitter = 0.0, const CholeskyOptions& opts = {});

/// Solves A x = b for A = chol.lower() * chol.lower()^T.
Matrix solve_psd(const CholeskyFactor& chol, const Matrix& b);
Vector solve_psd(const CholeskyFactor& chol, const Vector& b);

using ScalarFunction = std::function<double(const Vector&)>;

/// Central-difference gradient.
Vector finite_diff_grad(const ScalarFunction& f, const Vector& x, double h = 1e-5);

bool all_finite(const Matrix& m);
void require_finite(const Matrix& m, const char* what);
void require_same_cols(const Matrix& a, const Matrix& b, const char* what);

/// Squared euclidean distances between rows of a and rows of b.
Matrix squared_distances(const Matrix& a, const Matrix& b);

/// Row-wise selection (rows in the given order).
Matrix take_rows(const Matrix& m, const std::vector<Eigen::Index>& rows);
Vector take_rows(const Vector& v, const std::vector<Eigen::Index>& rows);

}  // namespace tsbo
