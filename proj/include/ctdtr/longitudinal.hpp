#pragma once

// Linear mixed-effects model for the lab process: latent mean
// y*(t) = z(t) . beta_l + r(t) . b with z = (1, d_last, x, t, t^2) and
// r = (1, d_last, t), plus the Gaussian measurement likelihood.

#include <cmath>

#include "ctdtr/common.hpp"
#include "ctdtr/math/special.hpp"
#include "ctdtr/patient.hpp"
#include "ctdtr/rng.hpp"

namespace ctdtr {

struct LongitudinalParams {
  Vec beta_l;             // length 4 + P: (1, d, x..., t, t^2)
  double sigma_l2 = 1.0;  // measurement error variance
  Mat3 Sigma_b = Mat3::Identity();

  void validate() const {
    require(sigma_l2 > 0.0, "LongitudinalParams: sigma_l2 must be > 0");
    require(beta_l.size() >= 4, "LongitudinalParams: beta_l needs >= 4 entries");
    require((Sigma_b - Sigma_b.transpose()).norm() < 1e-9 * (1.0 + Sigma_b.norm()),
            "LongitudinalParams: Sigma_b must be symmetric");
  }
};

struct RandomEffects {
  Vec3 b = Vec3::Zero();
};

inline void design_vectors(double t, double d_last, const Vec& x, Vec& z, Vec3& r) {
  require(t >= 0.0, "design_vectors: requires t >= 0");
  z.resize(4 + x.size());
  z[0] = 1.0;
  z[1] = d_last;
  for (Eigen::Index i = 0; i < x.size(); ++i) z[2 + i] = x[i];
  z[2 + x.size()] = t;
  z[3 + x.size()] = t * t;
  r << 1.0, d_last, t;
}

inline double latent_mean(double t, double d_last, const Vec& x,
                          const LongitudinalParams& params, const RandomEffects& re) {
  Vec z;
  Vec3 r;
  design_vectors(t, d_last, x, z, r);
  require(z.size() == params.beta_l.size(), "latent_mean: beta_l size mismatch");
  return z.dot(params.beta_l) + r.dot(re.b);
}

// Likelihood of the observed labs given the random effects. Measurement j
// (j >= 1) is conditioned on the dose assigned at the previous visit; the
// initial lab y_0 is an input of the model, not a modeled outcome.
inline double long_loglik(const PatientRecord& rec, const LongitudinalParams& params,
                          const RandomEffects& re) {
  rec.validate();
  params.validate();
  double ll = 0.0;
  for (std::size_t j = 1; j < rec.events.size(); ++j) {
    const double mean =
        latent_mean(rec.events[j].t, rec.events[j - 1].d, rec.x, params, re);
    ll += normal_logpdf(rec.labs[j], mean, params.sigma_l2);
  }
  return ll;
}

inline double sample_measurement(double t, double d_last, const Vec& x,
                                 const LongitudinalParams& params,
                                 const RandomEffects& re, RngStream& rng) {
  return rng.normal(latent_mean(t, d_last, x, params, re), std::sqrt(params.sigma_l2));
}

// Cholesky factor of a symmetric PSD matrix with eigenvalues clamped at
// `floor` (>= 0). Handles the near-singular random-effects covariances that
// show up in practice (e.g. a 1e-8 variance component).
inline Mat3 clamped_cholesky(const Mat3& m, double floor = 0.0) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(m);
  Vec3 ev = es.eigenvalues().cwiseMax(floor);
  const Mat3 fixed =
      es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  Eigen::LLT<Mat3> llt(fixed);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  // Eigen square root when LLT rejects a semidefinite input (e.g. exact 0).
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

inline Vec3 sample_random_effects(const Mat3& Sigma_b, RngStream& rng) {
  const Mat3 L = clamped_cholesky(Sigma_b, 0.0);
  Vec3 z;
  z << rng.normal(), rng.normal(), rng.normal();
  return L * z;
}

}  // namespace ctdtr
