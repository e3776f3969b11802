#include "test_util.hpp"
#include "tsbo/bilevel_loop.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace tsbo;
using tsbo::test::random_matrix;

namespace {

LabeledSet fixture_data(Eigen::Index n, Eigen::Index dim, std::uint64_t seed) {
  Rng rng(seed);
  LabeledSet d;
  d.z = random_matrix(n, dim, rng, -2.0, 2.0);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) d.y[i] = std::cos(1.5 * d.z(i, 0)) - 0.2 * d.z.row(i).squaredNorm() + 3.0;
  return d;
}

TsConfig small_config(Eigen::Index dim) {
  TsConfig cfg;
  cfg.steps_per_iter = 5;
  cfg.warmup_steps = 0;
  cfg.n_unlabeled = 20;
  cfg.k_validation = 5;
  cfg.box = BoundBox::cube(dim, -2.0, 2.0);
  return cfg;
}

TeacherArch small_arch() {
  TeacherArch arch;
  arch.hidden_width = 16;
  arch.hidden_layers = 2;
  return arch;
}

bool same_state(const TsState& a, const TsState& b) {
  return a.teacher.flatten() == b.teacher.flatten() && a.student.log_outputscale == b.student.log_outputscale &&
         a.student.log_lengthscale == b.student.log_lengthscale && a.student.log_noise == b.student.log_noise &&
         a.sampler.gauss.mu == b.sampler.gauss.mu && a.sampler.gauss.log_scale == b.sampler.gauss.log_scale;
}

}  // namespace

TEST_CASE("select_validation keeps the largest labels") {
  LabeledSet d{(Matrix(3, 1) << 10, 20, 30).finished(), (Vector(3) << 3, 1, 2).finished()};
  const LabeledSet v = select_validation(d, 2);
  REQUIRE(v.size() == 2);
  CHECK(v.y[0] == 3);
  CHECK(v.y[1] == 2);
  CHECK(v.z(0, 0) == 10);
  CHECK(v.z(1, 0) == 30);
  CHECK(select_validation(d, 7).size() == 3);
  CHECK_THROWS_AS(select_validation(d, 0), NumericError);
  CHECK_THROWS_AS(select_validation(LabeledSet{Matrix(0, 1), Vector(0)}, 1), NumericError);
}

TEST_CASE("select_validation breaks ties by insertion order") {
  LabeledSet d{(Matrix(4, 1) << 0, 1, 2, 3).finished(), (Vector(4) << 1, 5, 5, 5).finished()};
  const LabeledSet v = select_validation(d, 2);
  CHECK(v.z(0, 0) == 1);
  CHECK(v.z(1, 0) == 2);
}

TEST_CASE("select_validation returns the k largest label multiset") {
  Rng rng(3);
  std::uniform_int_distribution<int> small(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    LabeledSet d;
    d.z = random_matrix(15, 2, rng);
    d.y.resize(15);
    for (Eigen::Index i = 0; i < 15; ++i) d.y[i] = small(rng);
    const Eigen::Index k = 1 + trial % 15;
    const LabeledSet v = select_validation(d, k);
    std::vector<double> sorted(d.y.data(), d.y.data() + d.y.size());
    std::sort(sorted.rbegin(), sorted.rend());
    std::vector<double> got(v.y.data(), v.y.data() + v.y.size());
    std::sort(got.rbegin(), got.rend());
    CHECK(got == std::vector<double>(sorted.begin(), sorted.begin() + k));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      bool found = false;
      for (Eigen::Index j = 0; j < d.size(); ++j) found |= d.z.row(j) == v.z.row(i) && d.y[j] == v.y[i];
      CHECK(found);
    }
  }
}

TEST_CASE("augment_query_set concatenates rows and noise") {
  const LabeledSet d = fixture_data(2, 3, 1);
  PseudoSet p{Matrix::Ones(3, 3), (Vector(3) << 7, 8, 9).finished(), (Vector(3) << 0.1, 0.2, 0.3).finished()};
  const auto [aug, noise] = augment_query_set(d, p);
  REQUIRE(aug.size() == 5);
  CHECK(aug.z.topRows(2) == d.z);
  CHECK(aug.z.bottomRows(3) == p.z_u);
  CHECK(aug.y.tail(3) == p.y_hat);
  CHECK(noise == (Vector(5) << 0, 0, 0.1, 0.2, 0.3).finished());

  const auto [same, zero] = augment_query_set(d, PseudoSet{Matrix(0, 3), Vector(0), Vector(0)});
  CHECK(same.z == d.z);
  CHECK(same.y == d.y);
  CHECK(zero == Vector::Zero(2));

  PseudoSet wrong{Matrix::Ones(3, 2), Vector::Zero(3), Vector::Zero(3)};
  CHECK_THROWS_AS(augment_query_set(d, wrong), NumericError);
}

TEST_CASE("label scaler round trip") {
  const LabeledSet d = fixture_data(9, 2, 4);
  const LabelScaler s = LabelScaler::fit(d.y);
  const LabeledSet t = s.apply(d);
  CHECK(std::abs(t.y.mean()) < 1e-12);
  CHECK(std::sqrt(t.y.squaredNorm() / 9.0) == doctest::Approx(1.0));
  const PseudoSet back = s.invert(PseudoSet{t.z, t.y, Vector::Ones(9)});
  CHECK((back.y_hat - d.y).norm() < 1e-12);
  CHECK(back.var_t[0] == doctest::Approx(s.scale * s.scale));
  CHECK(LabelScaler::fit(Vector::Constant(4, 2.5)).scale == 1.0);
}

TEST_CASE("zero steps leave the state unchanged and still emit a pseudo set") {
  const LabeledSet d = fixture_data(12, 2, 2);
  TsConfig cfg = small_config(2);
  cfg.steps_per_iter = 0;
  for (SamplerKind kind : {SamplerKind::Gaussian, SamplerKind::Random, SamplerKind::Gev}) {
    cfg.sampler_kind = kind;
    const TsState init = make_ts_state(2, 5, small_arch());
    Rng rng(1);
    const RoundResult r = ts_train_round(init, d, cfg, rng);
    CHECK(r.state.teacher.flatten() == init.teacher.flatten());
    CHECK(r.state.student.log_lengthscale == init.student.log_lengthscale);
    CHECK(r.pseudo.size() == cfg.n_unlabeled);
    const LabelScaler s = LabelScaler::fit(d.y);
    const TeacherPrediction pred = teacher_forward(init.teacher, r.pseudo.z_u);
    CHECK(((pred.mean.array() * s.scale + s.mean).matrix() - r.pseudo.y_hat).norm() < 1e-12);
    CHECK((pred.variance * s.scale * s.scale - r.pseudo.var_t).norm() < 1e-12);
  }
}

TEST_CASE("no feedback with a random sampler reduces to supervised regression") {
  const LabeledSet d = fixture_data(40, 3, 6);
  TsConfig cfg = small_config(3);
  cfg.steps_per_iter = 25;
  cfg.lambda = 0.0;
  cfg.sampler_kind = SamplerKind::Random;
  cfg.uncertainty_aware = false;
  const TsState init = make_ts_state(3, 9, small_arch());
  Rng rng(2);
  const RoundResult r = ts_train_round(init, d, cfg, rng);

  TsState ref = make_ts_state(3, 9, small_arch());
  train_teacher_supervised(ref.teacher, ref.teacher_opt, LabelScaler::fit(d.y).apply(d), cfg.steps_per_iter,
                           cfg.batch_size, cfg.lr_teacher, ref.batch_rng);
  CHECK(r.state.teacher.flatten() == ref.teacher.flatten());
  CHECK(r.state.teacher.flatten() != init.teacher.flatten());
  CHECK(r.pseudo.var_t == Vector::Zero(cfg.n_unlabeled));
}

TEST_CASE("with feedback disabled lambda has no effect") {
  const LabeledSet d = fixture_data(15, 2, 7);
  TsConfig a = small_config(2);
  a.feedback_enabled = false;
  a.lambda = 0.1;
  TsConfig b = a;
  b.lambda = 1.0;
  Rng ra(4), rb(4);
  const RoundResult x = ts_train_round(make_ts_state(2, 3, small_arch()), d, a, ra);
  const RoundResult y = ts_train_round(make_ts_state(2, 3, small_arch()), d, b, rb);
  CHECK(same_state(x.state, y.state));
  CHECK(x.pseudo.y_hat == y.pseudo.y_hat);
}

TEST_CASE("feedback changes the teacher trajectory") {
  const LabeledSet d = fixture_data(15, 2, 7);
  TsConfig on = small_config(2);
  TsConfig off = on;
  off.feedback_enabled = false;
  Rng ra(4), rb(4);
  const RoundResult x = ts_train_round(make_ts_state(2, 3, small_arch()), d, on, ra);
  const RoundResult y = ts_train_round(make_ts_state(2, 3, small_arch()), d, off, rb);
  CHECK(x.state.teacher.flatten() != y.state.teacher.flatten());
}

TEST_CASE("rounds are deterministic for every sampler") {
  const LabeledSet d = fixture_data(15, 2, 8);
  for (SamplerKind kind : {SamplerKind::Gaussian, SamplerKind::Random, SamplerKind::Gev}) {
    TsConfig cfg = small_config(2);
    cfg.sampler_kind = kind;
    cfg.mcmc_burn_in = 100;
    Rng ra(11), rb(11);
    const RoundResult x = ts_train_round(make_ts_state(2, 1, small_arch()), d, cfg, ra);
    const RoundResult y = ts_train_round(make_ts_state(2, 1, small_arch()), d, cfg, rb);
    CHECK(same_state(x.state, y.state));
    CHECK(x.pseudo.z_u == y.pseudo.z_u);
    CHECK(x.pseudo.y_hat == y.pseudo.y_hat);
    CHECK(x.stats.feedback_loss == y.stats.feedback_loss);
  }
}

TEST_CASE("the Gaussian sampler moves and starts at the validation mean") {
  const LabeledSet d = fixture_data(15, 2, 8);
  TsConfig cfg = small_config(2);
  cfg.steps_per_iter = 0;
  Rng rng(1);
  const RoundResult r0 = ts_train_round(make_ts_state(2, 1, small_arch()), d, cfg, rng);
  const LabeledSet val = select_validation(d, cfg.k_validation);
  CHECK((r0.state.sampler.gauss.mu - val.z.colwise().mean().transpose()).norm() < 1e-12);
  cfg.steps_per_iter = 5;
  const RoundResult r1 = ts_train_round(r0.state, d, cfg, rng);
  CHECK(r1.state.sampler.gauss.mu != r0.state.sampler.gauss.mu);
}

TEST_CASE("GEV sampler stays in the box and falls back on flat labels") {
  LabeledSet d = fixture_data(15, 2, 9);
  TsConfig cfg = small_config(2);
  cfg.sampler_kind = SamplerKind::Gev;
  cfg.mcmc_burn_in = 100;
  Rng rng(3);
  const RoundResult r = ts_train_round(make_ts_state(2, 2, small_arch()), d, cfg, rng);
  CHECK_FALSE(r.stats.sampler_fallback);
  for (Eigen::Index i = 0; i < r.pseudo.size(); ++i) CHECK(cfg.box.contains(r.pseudo.z_u.row(i).transpose()));

  d.y.setConstant(1.0);
  const RoundResult f = ts_train_round(make_ts_state(2, 2, small_arch()), d, cfg, rng);
  CHECK(f.stats.sampler_fallback);
  CHECK(f.state.sampler.gauss.mu.size() == 2);
}

TEST_CASE("warm-up lowers the teacher's labeled NLL") {
  const LabeledSet d = fixture_data(20, 2, 10);
  TsConfig cfg = small_config(2);
  cfg.warmup_steps = 300;
  const TsState init = make_ts_state(2, 4, small_arch());
  const LabeledSet std_d = LabelScaler::fit(d.y).apply(d);
  for (bool teacher_only : {false, true}) {
    cfg.warmup_teacher_only = teacher_only;
    Rng rng(5);
    const TsState w = warmup(init, d, cfg, rng);
    CHECK(teacher_labeled_loss(w.teacher, std_d) < teacher_labeled_loss(init.teacher, std_d));
  }
  cfg.warmup_steps = 0;
  Rng rng(5);
  CHECK(same_state(warmup(init, d, cfg, rng), init));
}

TEST_CASE("losses stay finite over long runs") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const LabeledSet d = fixture_data(12, 2, 100 + seed);
    TsConfig cfg = small_config(2);
    cfg.steps_per_iter = 400;
    TsState state = make_ts_state(2, seed, small_arch());
    Rng rng(seed);
    for (int round = 0; round < 5; ++round) {
      const RoundResult r = ts_train_round(state, d, cfg, rng);
      CHECK(std::isfinite(r.stats.teacher_nll));
      CHECK(std::isfinite(r.stats.feedback_loss));
      CHECK(std::isfinite(r.stats.unlabeled_nll));
      state = r.state;
    }
  }
}

TEST_CASE("config validation") {
  TsConfig cfg = small_config(2);
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), NumericError);
  cfg = small_config(2);
  cfg.gev_fallback = SamplerKind::Gev;
  CHECK_THROWS_AS(cfg.validate(), NumericError);
  CHECK(parse_sampler_kind("gev") == SamplerKind::Gev);
  CHECK_THROWS_AS(parse_sampler_kind("flow"), NumericError);
}
