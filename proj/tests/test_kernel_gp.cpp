#include "test_util.hpp"
#include "tsbo/kernel_gp.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace tsbo;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274;

GpHyper make_hyper(double s, double ell, double noise, double mean = 0.0) {
  GpHyper h;
  h.log_outputscale = std::log(s);
  h.log_lengthscale = std::log(ell);
  h.log_noise = std::log(noise);
  h.mean_const = mean;
  return h;
}

// Explicit-inverse posterior used as an oracle for the Cholesky path.
GpPosterior dense_posterior(const GpHyper& h, const LabeledSet& data, const Vector& noise,
                            const Matrix& query) {
  Matrix k(data.size(), data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i)
    for (Eigen::Index j = 0; j < data.size(); ++j)
      k(i, j) = h.outputscale() * std::exp(-(data.z.row(i) - data.z.row(j)).squaredNorm() /
                                           (2.0 * h.lengthscale() * h.lengthscale()));
  k.diagonal().array() += h.noise();
  if (noise.size() > 0) k.diagonal() += noise;
  const Matrix kinv = k.inverse();
  GpPosterior post;
  post.mean.resize(query.rows());
  post.variance.resize(query.rows());
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    Vector ks(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i)
      ks[i] = h.outputscale() * std::exp(-(data.z.row(i) - query.row(q)).squaredNorm() /
                                         (2.0 * h.lengthscale() * h.lengthscale()));
    post.mean[q] = h.mean_const + ks.dot(kinv * (data.y.array() - h.mean_const).matrix());
    post.variance[q] = h.outputscale() - ks.dot(kinv * ks);
  }
  return post;
}

LabeledSet random_set(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  return {test::random_matrix(n, d, rng, -2.0, 2.0), test::random_vector(n, rng, -1.0, 1.0)};
}

}  // namespace

TEST_CASE("kernel_matrix values") {
  const GpHyper h = make_hyper(1.0, 1.0, 0.1);
  Matrix a(1, 2);
  a << 0.3, -0.2;
  CHECK(kernel_matrix(h, a, a)(0, 0) == doctest::Approx(1.0));

  Matrix b(1, 2);
  b << 1.3, 0.8;  // distance sqrt(2)
  CHECK(kernel_matrix(h, a, b)(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(std::abs(std::exp(-1.0) - 0.36788) < 1e-5);

  Matrix far(1, 2);
  far << 1e3, 1e3;
  CHECK(kernel_matrix(h, a, far)(0, 0) < 1e-300);

  CHECK_THROWS_AS(kernel_matrix(h, a, Matrix::Zero(1, 3)), NumericError);
}

TEST_CASE("kernel_matrix is symmetric PSD") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix z = test::random_matrix(15, 3, rng, -1.0, 1.0);
    const GpHyper h = make_hyper(0.5 + trial, 0.2 + 0.3 * trial, 0.01);
    const Matrix k = kernel_matrix(h, z, z);
    CHECK((k - k.transpose()).norm() == 0.0);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * h.outputscale());
    CHECK_NOTHROW(cholesky(k));  // escalation stays under the cap
  }
}

TEST_CASE("gp_predict limits") {
  SUBCASE("far query reverts to the prior") {
    const GpHyper h = make_hyper(2.0, 0.5, 0.1, 3.0);
    LabeledSet data{Matrix::Zero(2, 1), Vector::Zero(2)};
    data.z(1, 0) = 0.2;
    data.y << 1.0, -1.0;
    const GpPosterior post = gp_predict(h, data, {}, Matrix::Constant(1, 1, 100.0));
    CHECK(post.mean[0] == doctest::Approx(3.0));
    CHECK(post.variance[0] == doctest::Approx(2.0));
  }
  SUBCASE("scalar shrinkage with one training point") {
    const GpHyper h = make_hyper(1.0, 1.0, 1.0, 0.0);
    LabeledSet data{Matrix::Constant(1, 2, 0.5), Vector::Constant(1, 3.0)};
    const GpPosterior post = gp_predict(h, data, {}, data.z);
    CHECK(post.mean[0] == doctest::Approx(1.5).epsilon(1e-12));
  }
}

TEST_CASE("gp_predict matches the dense-inverse oracle") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + trial;  // N <= 21
    const LabeledSet data = random_set(n, 3, rng);
    const GpHyper h = make_hyper(0.5 + 0.1 * trial, 0.7 + 0.05 * trial, 0.05, 0.2);
    Vector noise;
    if (trial % 2) noise = test::random_vector(n, rng, 0.0, 0.3);
    const Matrix query = test::random_matrix(7, 3, rng, -2.0, 2.0);
    const GpPosterior got = gp_predict(h, data, noise, query);
    const GpPosterior want = dense_posterior(h, data, noise, query);
    CHECK((got.mean - want.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((got.variance - want.variance.cwiseMax(0.0)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((got.variance.array() <= h.outputscale() + h.noise() + 1e-8).all());
  }
}

TEST_CASE("zero per-point noise is bitwise identical to the homoscedastic path") {
  std::mt19937_64 rng(5);
  const LabeledSet data = random_set(9, 2, rng);
  const GpHyper h = make_hyper(1.3, 0.6, 0.02, -0.4);
  const Matrix query = test::random_matrix(5, 2, rng);
  const GpPosterior a = gp_predict(h, data, {}, query);
  const GpPosterior b = gp_predict(h, data, Vector::Zero(9), query);
  CHECK(a.mean == b.mean);
  CHECK(a.variance == b.variance);
}

TEST_CASE("posterior is invariant under permutation of training rows") {
  std::mt19937_64 rng(8);
  const LabeledSet data = random_set(12, 3, rng);
  std::vector<Eigen::Index> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const LabeledSet shuffled{take_rows(data.z, perm), take_rows(data.y, perm)};
  const GpHyper h = make_hyper(0.8, 0.9, 0.05, 0.1);
  const Matrix query = test::random_matrix(6, 3, rng);
  const GpPosterior a = gp_predict(h, data, {}, query);
  const GpPosterior b = gp_predict(h, shuffled, {}, query);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((a.variance - b.variance).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gp_nll") {
  SUBCASE("zero residual with unit predictive variance") {
    // far from data: posterior variance = s, so s + noise = 1
    const GpHyper h = make_hyper(0.75, 0.1, 0.25, 2.0);
    const LabeledSet data{Matrix::Zero(1, 1), Vector::Constant(1, 5.0)};
    const LabeledSet test{Matrix::Constant(1, 1, 50.0), Vector::Constant(1, 2.0)};
    CHECK(gp_nll(h, data, {}, test) == doctest::Approx(kHalfLog2Pi).epsilon(1e-12));
  }
  SUBCASE("larger residual increases NLL") {
    const GpHyper h = make_hyper(0.75, 0.1, 0.25, 2.0);
    const LabeledSet data{Matrix::Zero(1, 1), Vector::Constant(1, 5.0)};
    const LabeledSet near{Matrix::Constant(1, 1, 50.0), Vector::Constant(1, 2.5)};
    const LabeledSet farther{Matrix::Constant(1, 1, 50.0), Vector::Constant(1, 3.0)};
    CHECK(gp_nll(h, data, {}, farther) > gp_nll(h, data, {}, near));
  }
  SUBCASE("matches a hand assembly from posterior terms") {
    std::mt19937_64 rng(31);
    const LabeledSet data = random_set(3, 2, rng);
    const LabeledSet test = random_set(3, 2, rng);
    const GpHyper h = make_hyper(1.1, 0.8, 0.07, 0.3);
    const GpPosterior post = dense_posterior(h, data, {}, test.z);
    double want = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double v = post.variance[i] + h.noise();
      const double r = test.y[i] - post.mean[i];
      want += 0.5 * std::log(2.0 * M_PI * v) + r * r / (2.0 * v);
    }
    CHECK(gp_nll(h, data, {}, test) == doctest::Approx(want / 3.0).epsilon(1e-10));
  }
}

TEST_CASE("marginal NLL matches the dense oracle and its gradient matches finite differences") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 3 + trial % 10;
    const LabeledSet data = random_set(n, 2, rng);
    const Vector noise = test::random_vector(n, rng, 0.0, 0.2);
    const GpHyper h = make_hyper(0.6 + 0.05 * trial, 0.5 + 0.04 * trial, 0.03, 0.1);

    Matrix k = training_covariance(h, data.z, noise);
    const Vector r = data.y.array() - h.mean_const;
    const double oracle = 0.5 * r.dot(k.inverse() * r) + 0.5 * std::log(k.determinant()) +
                          0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
    const GpNllResult res = gp_marginal_nll(h, data, noise);
    CHECK(res.value == doctest::Approx(oracle).epsilon(1e-8));

    const ScalarFunction f = [&](const Vector& p) {
      GpHyper q;
      q.log_outputscale = p[0];
      q.log_lengthscale = p[1];
      q.log_noise = p[2];
      q.mean_const = p[3];
      return gp_marginal_nll(q, data, noise).value;
    };
    Vector p(4);
    p << h.log_outputscale, h.log_lengthscale, h.log_noise, h.mean_const;
    CHECK(test::rel_error(Vector(res.grad), finite_diff_grad(f, p, 1e-5)) < 1e-4);
  }
}

TEST_CASE("predict_point gradients match finite differences") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    const LabeledSet data = random_set(8, 3, rng);
    const GpModel model(make_hyper(1.0, 0.9, 0.05, 0.2), data);
    const Vector x = test::random_vector(3, rng, -1.5, 1.5);
    const PointPrediction p = model.predict_point(x);
    const ScalarFunction mean = [&](const Vector& q) { return model.predict_point(q).mean; };
    const ScalarFunction var = [&](const Vector& q) { return model.predict_point(q).variance; };
    CHECK(test::rel_error(p.d_mean, finite_diff_grad(mean, x)) < 1e-4);
    CHECK(test::rel_error(p.d_variance, finite_diff_grad(var, x)) < 1e-4);
    const GpPosterior batch = model.predict(x.transpose());
    CHECK(batch.mean[0] == doctest::Approx(p.mean).epsilon(1e-12));
  }
}

TEST_CASE("gp_fit") {
  SUBCASE("zero steps returns init") {
    std::mt19937_64 rng(1);
    const GpHyper init = make_hyper(2.0, 0.3, 0.1, 0.5);
    const GpHyper out = gp_fit(random_set(5, 2, rng), {}, init, 0, 0.1);
    CHECK(out.log_outputscale == init.log_outputscale);
    CHECK(out.log_lengthscale == init.log_lengthscale);
    CHECK(out.log_noise == init.log_noise);
    CHECK(out.mean_const == init.mean_const);
  }
  SUBCASE("single point drives the constant mean to its label") {
    const LabeledSet data{Matrix::Zero(1, 2), Vector::Zero(1)};
    const GpHyper out = gp_fit(data, {}, make_hyper(1.0, 1.0, 0.1, 0.5), 500, 0.05);
    CHECK(std::abs(out.mean_const) < 1e-3);
  }
  SUBCASE("recovers the lengthscale of a sampled GP") {
    std::mt19937_64 rng(2024);
    const Eigen::Index n = 50;
    const Matrix z = test::random_matrix(n, 1, rng, 0.0, 5.0);
    const GpHyper truth = make_hyper(1.0, 0.5, 0.01);
    const CholeskyFactor chol = cholesky(training_covariance(truth, z, {}));
    std::normal_distribution<double> normal;
    Vector e(n);
    for (auto& v : e) v = normal(rng);
    const LabeledSet data{z, chol.lower() * e};
    const GpHyper fit = gp_fit(data, {}, make_hyper(1.0, 1.0, 0.1), 400, 0.05);
    CHECK(fit.lengthscale() > 0.25);
    CHECK(fit.lengthscale() < 1.0);
    CHECK(gp_marginal_nll(fit, data, {}).value <= gp_marginal_nll(make_hyper(1.0, 1.0, 0.1), data, {}).value);
  }
  SUBCASE("per-point noise length is checked") {
    std::mt19937_64 rng(3);
    CHECK_THROWS_AS(gp_fit(random_set(4, 1, rng), Vector::Zero(3), GpHyper{}, 5, 0.1), NumericError);
  }
}
