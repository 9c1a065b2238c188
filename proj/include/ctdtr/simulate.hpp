#pragma once

// Forward simulation of visits, doses, labs, and survival for a hypothetical
// patient under (theta, phi); cohort generation; reward computation; fixed
// interval baseline schedules.
//
// One rollout interleaves, per segment: sample the next visit gap from the
// intensity compensator, then test for a death inside the segment by
// inverse-transform on the cumulative hazard. The log-median-survival reward
// is the ln 2 crossing of the same cumulative hazard along the same path,
// extending visits/labs/doses past the sampled death when the crossing lies
// beyond it. Everything is deterministic given the stream.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ctdtr/common.hpp"
#include "ctdtr/joint.hpp"
#include "ctdtr/longitudinal.hpp"
#include "ctdtr/mtpp.hpp"
#include "ctdtr/parallel.hpp"
#include "ctdtr/patient.hpp"
#include "ctdtr/rng.hpp"
#include "ctdtr/survival.hpp"

namespace ctdtr {

enum class RewardKind { kLogMedianSurvival, kPenalizedVisits };

struct RewardSpec {
  RewardKind kind = RewardKind::kLogMedianSurvival;
  double eta0 = 0.0;  // per-visit term for kPenalizedVisits
};

struct Trajectory {
  std::vector<VisitEvent> events;  // visits up to the sampled death
  std::vector<double> labs;
  Vec3 b = Vec3::Zero();
  double T = 0.0;                // sampled survival time (== cap when capped)
  int J = 0;                     // post-baseline visit count at death
  double median_survival = 0.0;  // ln2 crossing of H(0, .) along the path
  double reward = 0.0;
  bool capped = false;
};

inline double compute_reward(double median_survival_days, int visit_count,
                             const RewardSpec& spec) {
  double r = std::log(median_survival_days);
  if (spec.kind == RewardKind::kPenalizedVisits) r += spec.eta0 * visit_count;
  return r;
}

namespace detail {

// Gap provider abstraction so MTPP-sampled and fixed-interval schedules share
// one rollout loop (and thereby one cumulative-hazard code path).
struct MtppGaps {
  const PolicyParams* theta;
  double operator()(double /*t_last*/, double alpha, RngStream& rng) const {
    return sample_next_visit(alpha, *theta, rng.uniform01());
  }
};

struct FixedGaps {
  double interval;
  double operator()(double /*t_last*/, double /*alpha*/, RngStream& /*rng*/) const {
    return interval;
  }
};

template <class GapFn>
Trajectory rollout(const GapFn& next_gap, const PolicyParams& theta,
                   const ObservationParams& phi, const Vec& x, double y0,
                   RngStream& rng, const RewardSpec& spec) {
  theta.validate();
  phi.validate();
  Trajectory traj;
  traj.events.push_back({0.0, rng.normal(dosage_mean(y0, x, theta.beta_d),
                                         std::sqrt(theta.sigma_d2))});
  traj.labs.push_back(y0);
  traj.b = sample_random_effects(phi.longitudinal.Sigma_b, rng);
  const RandomEffects re{traj.b};
  const double sigma_d = std::sqrt(theta.sigma_d2);
  const double sigma_l = std::sqrt(phi.longitudinal.sigma_l2);

  bool dead = false;
  bool crossed = false;
  double cum_hazard = 0.0;
  int death_visits = 0;

  for (;;) {
    const double t_last = traj.events.back().t;
    if (t_last >= kTimeCapDays) {
      traj.capped = true;
      break;
    }
    const double alpha = alpha_magnitude(traj.labs.back(), phi.visit);
    const double t_next = t_last + next_gap(t_last, alpha, rng);
    const double seg_end = std::min(t_next, kTimeCapDays);

    HazardContext ctx(traj.events, traj.labs, x, re, phi.longitudinal, phi.visit,
                      ModelVariant::kJoint);
    HazardEvaluator ev(ctx, phi.survival);
    const double h_seg = ev.cumulative(t_last, seg_end);

    if (!dead) {
      const double target = -std::log1p(-rng.uniform01());
      if (target <= h_seg) {
        traj.T = *ev.solve_crossing(t_last, seg_end, target);
        death_visits = static_cast<int>(traj.events.size()) - 1;
        dead = true;
      }
    }
    if (!crossed && M_LN2 - cum_hazard <= h_seg) {
      traj.median_survival = *ev.solve_crossing(t_last, seg_end, M_LN2 - cum_hazard);
      crossed = true;
    }
    cum_hazard += h_seg;
    if (dead && crossed) break;
    if (t_next >= kTimeCapDays) {
      traj.capped = true;
      break;
    }
    const double d_last = traj.events.back().d;
    const double y =
        rng.normal(latent_mean(t_next, d_last, x, phi.longitudinal, re), sigma_l);
    const double d = rng.normal(dosage_mean(y, x, theta.beta_d), sigma_d);
    traj.events.push_back({t_next, d});
    traj.labs.push_back(y);
  }

  if (!dead) {
    traj.T = kTimeCapDays;
    death_visits = static_cast<int>(traj.events.size()) - 1;
  }
  if (!crossed) traj.median_survival = kTimeCapDays;
  // Visits appended while chasing the ln2 crossing belong to the hazard path
  // extension, not to the realized trajectory.
  traj.J = death_visits;
  traj.events.resize(death_visits + 1);
  traj.labs.resize(death_visits + 1);
  traj.reward = compute_reward(traj.median_survival, traj.J, spec);
  return traj;
}

}  // namespace detail

inline Trajectory simulate_trajectory(const PolicyParams& theta,
                                      const ObservationParams& phi, const Vec& x,
                                      double y0, RngStream& rng,
                                      const RewardSpec& spec = {}) {
  return detail::rollout(detail::MtppGaps{&theta}, theta, phi, x, y0, rng, spec);
}

// Deterministic visits every `interval_days`; dosage marks still come from
// the policy's mark model; survival is sampled exactly as in the MTPP rollout.
inline Trajectory fixed_schedule_rollout(double interval_days,
                                         const PolicyParams& theta_dosage,
                                         const ObservationParams& phi, const Vec& x,
                                         double y0, RngStream& rng,
                                         const RewardSpec& spec = {}) {
  require(interval_days > 0.0, "fixed_schedule_rollout: interval must be > 0");
  return detail::rollout(detail::FixedGaps{interval_days}, theta_dosage, phi, x, y0,
                         rng, spec);
}

// ---------------------------------------------------------------------------
// Cohort generation
// ---------------------------------------------------------------------------

struct CovariateSpec {
  enum class Kind { kNormal, kBernoulli };
  std::string name;
  Kind kind = Kind::kNormal;
  double mean = 0.0;  // normal
  double sd = 1.0;
  double p = 0.5;           // bernoulli
  bool standardize = true;  // continuous columns are standardized by sample stats
};

struct CohortSpec {
  std::vector<CovariateSpec> covariates;
  double y0_mean = 5.0;
  double y0_sd = 0.1;
  double censor_shape = 3.0;
  double censor_scale = 8000.0;
};

// Simulation-study defaults: AgeD ~ Normal(52.5, 15.8^2) standardized,
// DGF ~ Bernoulli(0.4), BMI ~ Normal(24.3, 4.5^2) standardized,
// y0 ~ Normal(5, 0.1^2), censoring ~ Weibull(3, 8000).
inline CohortSpec default_cohort_spec() {
  CohortSpec s;
  s.covariates = {
      {"age_donor", CovariateSpec::Kind::kNormal, 52.5, 15.8, 0.0, true},
      {"dgf", CovariateSpec::Kind::kBernoulli, 0.0, 1.0, 0.4, false},
      {"bmi", CovariateSpec::Kind::kNormal, 24.3, 4.5, 0.0, true},
  };
  return s;
}

inline PolicyParams default_policy_truths() {
  PolicyParams p;
  p.nu1 = 2.5;
  p.nu2 = 1.5;
  p.mu = -4.8;
  p.beta_d = Vec(5);
  p.beta_d << 1.0, 0.2, 0.15, 0.2, 0.15;
  p.sigma_d2 = 0.09;
  return p;
}

inline ObservationParams default_observation_truths() {
  ObservationParams o;
  o.longitudinal.beta_l = Vec(7);
  o.longitudinal.beta_l << 5.3, 0.1, 0.3, 0.4, 0.25, -1e-4, 3e-8;
  o.longitudinal.sigma_l2 = 0.01;
  o.longitudinal.Sigma_b = Mat3::Zero();
  o.longitudinal.Sigma_b.diagonal() << 0.04, 0.0049, 1e-8;
  o.survival.omega = 1.05;
  o.survival.beta_s1 = 1.0;
  o.survival.beta_s2 = 0.9;
  o.survival.beta_s3 = -0.75;
  o.survival.beta_s4 = -5.0;
  o.survival.h0 = 5.0;
  o.survival.eta_tox = 50.0;
  o.visit.xi = 2.0;
  o.visit.beta_alpha << 9.5, -1.5;
  return o;
}

struct Cohort {
  std::vector<PatientRecord> records;  // x holds model-scale covariates
  Mat raw_covariates;                  // I x P, pre-standardization
  std::vector<std::string> covariate_names;
  std::vector<bool> covariate_standardized;
  Vec standardize_mean;
  Vec standardize_sd;
};

namespace detail {

inline void standardize_columns(const CohortSpec& spec, const Mat& raw,
                                Mat& model_x, Vec& means, Vec& sds) {
  const Eigen::Index I = raw.rows();
  const Eigen::Index P = raw.cols();
  model_x = raw;
  means = Vec::Zero(P);
  sds = Vec::Ones(P);
  for (Eigen::Index c = 0; c < P; ++c) {
    if (!spec.covariates[c].standardize) continue;
    const double m = raw.col(c).mean();
    double var = 0.0;
    for (Eigen::Index i = 0; i < I; ++i) {
      const double d = raw(i, c) - m;
      var += d * d;
    }
    const double sd = (I > 1) ? std::sqrt(var / static_cast<double>(I - 1)) : 1.0;
    means[c] = m;
    sds[c] = (sd > 0.0) ? sd : 1.0;
    for (Eigen::Index i = 0; i < I; ++i)
      model_x(i, c) = (raw(i, c) - means[c]) / sds[c];
  }
}

}  // namespace detail

// Draws I patients under the given truths: covariates and y0 per patient,
// one full trajectory each, then an independent administrative censoring
// time. Events are truncated at the observed follow-up T~ = min(T, C).
inline Cohort simulate_cohort(const PolicyParams& theta, const ObservationParams& phi,
                              int I, std::uint64_t seed,
                              const CohortSpec& spec = default_cohort_spec(),
                              unsigned threads = 1) {
  require(I >= 1, "simulate_cohort: needs I >= 1");
  const Eigen::Index P = static_cast<Eigen::Index>(spec.covariates.size());
  Cohort cohort;
  cohort.raw_covariates.resize(I, P);
  Vec y0s(I);
  for (const auto& cs : spec.covariates) {
    cohort.covariate_names.push_back(cs.name);
    cohort.covariate_standardized.push_back(cs.standardize);
  }

  for (int i = 0; i < I; ++i) {
    RngStream rng = RngStream::derive(seed, {fnv1a64("covariates"), static_cast<std::uint64_t>(i)});
    for (Eigen::Index c = 0; c < P; ++c) {
      const auto& cs = spec.covariates[c];
      cohort.raw_covariates(i, c) = (cs.kind == CovariateSpec::Kind::kNormal)
                                        ? rng.normal(cs.mean, cs.sd)
                                        : (rng.bernoulli(cs.p) ? 1.0 : 0.0);
    }
    y0s[i] = rng.normal(spec.y0_mean, spec.y0_sd);
  }

  Mat model_x;
  detail::standardize_columns(spec, cohort.raw_covariates, model_x,
                              cohort.standardize_mean, cohort.standardize_sd);

  cohort.records.resize(I);
  parallel_for(static_cast<std::size_t>(I), threads, [&](std::size_t i) {
    RngStream rng = RngStream::derive(seed, {fnv1a64("trajectory"), static_cast<std::uint64_t>(i)});
    const Vec x = model_x.row(static_cast<Eigen::Index>(i)).transpose();
    Trajectory traj = simulate_trajectory(theta, phi, x, y0s[static_cast<Eigen::Index>(i)], rng);
    RngStream crng = RngStream::derive(seed, {fnv1a64("censoring"), static_cast<std::uint64_t>(i)});
    const double censor = crng.weibull(spec.censor_shape, spec.censor_scale);

    PatientRecord rec;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sim-%06zu", i);
    rec.id = buf;
    rec.x = x;
    rec.t_tilde = std::min(traj.T, censor);
    rec.delta = (!traj.capped && traj.T <= censor) ? 1 : 0;
    for (std::size_t j = 0; j < traj.events.size(); ++j) {
      if (traj.events[j].t > rec.t_tilde) break;
      rec.events.push_back(traj.events[j]);
      rec.labs.push_back(traj.labs[j]);
    }
    rec.validate();
    cohort.records[i] = std::move(rec);
  });
  return cohort;
}

}  // namespace ctdtr
