#pragma once

#include "tsbo/adam.hpp"
#include "tsbo/box.hpp"
#include "tsbo/kernel_gp.hpp"
#include "tsbo/samplers.hpp"
#include "tsbo/student_feedback.hpp"
#include "tsbo/teacher.hpp"

#include <cstdint>
#include <string>
#include <utility>

namespace tsbo {

enum class SamplerKind { Gev, Gaussian, Random };

std::string to_string(SamplerKind kind);
/// Parses "gev", "gaussian" or "random"; throws InvalidArgument otherwise.
SamplerKind parse_sampler_kind(const std::string& name);

struct TsConfig {
  int steps_per_iter = 20;
  int warmup_steps = 2000;
  double lambda = 0.1;
  int n_unlabeled = 100;
  int k_validation = 10;
  double lr_teacher = 1e-3;
  double lr_student = 1e-2;
  double lr_sampler = 1e-2;
  SamplerKind sampler_kind = SamplerKind::Gaussian;
  bool uncertainty_aware = true;
  bool feedback_enabled = true;
  /// Labeled mini-batch size for the teacher step.
  int batch_size = 32;
  /// Warm-up trains the teacher on labeled data only.
  bool warmup_teacher_only = false;

  // GEV sampler
  double gev_fraction = 0.2;
  int gev_min_count = 10;
  int gev_fit_steps = 500;
  double gev_lr = 0.05;
  int mcmc_burn_in = 500;
  int mcmc_thin = 5;
  /// Used when the GEV fit or its chain fails.
  SamplerKind gev_fallback = SamplerKind::Gaussian;

  /// Region for the random sampler and the MCMC chain.
  BoundBox box;

  void validate() const;
};

struct SamplerState {
  GevParams gev;
  McmcChain chain;
  GaussSamplerParams gauss;  // empty until first use
  AdamState gauss_opt;
};

struct TsState {
  TeacherNet teacher;
  AdamState teacher_opt;
  GpHyper student;
  AdamState student_opt;
  SamplerState sampler;
  /// Stream for labeled mini-batches, kept apart from sampler draws.
  Rng batch_rng;
};

TsState make_ts_state(Eigen::Index input_dim, std::uint64_t seed, const TeacherArch& arch = {});

/// Affine label map y -> (y - mean) / scale.
struct LabelScaler {
  double mean = 0.0;
  double scale = 1.0;

  static LabelScaler fit(const Vector& y);
  LabeledSet apply(const LabeledSet& data) const;
  /// Pseudo labels and variances back to label units.
  PseudoSet invert(const PseudoSet& pseudo) const;
};

/// The k rows with the largest labels, in descending label order. Ties go to
/// the earlier row.
LabeledSet select_validation(const LabeledSet& data, Eigen::Index k);

/// Mean labeled NLL on one mini-batch and its parameter gradient. Uses every
/// row in order when the data fit in one batch.
std::pair<double, TeacherGrads> teacher_minibatch_grads(const TeacherNet& net, const LabeledSet& data,
                                                        int batch_size, Rng& rng);

/// Plain NLL regression of the teacher with the same mini-batch scheme.
void train_teacher_supervised(TeacherNet& net, AdamState& opt, const LabeledSet& data, int steps,
                              int batch_size, double lr, Rng& rng);

struct RoundStats {
  double teacher_nll = 0.0;
  double feedback_loss = 0.0;
  double unlabeled_nll = 0.0;
  /// True when the GEV sampler failed and the fallback sampler was used.
  bool sampler_fallback = false;
};

struct RoundResult {
  TsState state;
  PseudoSet pseudo;  // in label units
  RoundStats stats;
};

/// steps_per_iter alternating updates of student, teacher and sampler, then a
/// fresh teacher prediction on the last unlabeled draw.
RoundResult ts_train_round(TsState state, const LabeledSet& data, const TsConfig& cfg, Rng& rng);

/// The same alternating update run warmup_steps times (or supervised teacher
/// training when warmup_teacher_only is set).
TsState warmup(TsState state, const LabeledSet& data, const TsConfig& cfg, Rng& rng);

/// Labeled rows followed by pseudo rows, with zero noise for the real labels
/// and var_t for the pseudo labels.
std::pair<LabeledSet, Vector> augment_query_set(const LabeledSet& data, const PseudoSet& pseudo);

}  // namespace tsbo
