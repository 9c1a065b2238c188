#pragma once

// Full joint log-likelihood (decision + longitudinal + survival), conditional
// on a patient's random effects, plus WAIC over a pointwise log-likelihood
// matrix.

#include <cmath>

#include "ctdtr/common.hpp"
#include "ctdtr/longitudinal.hpp"
#include "ctdtr/mtpp.hpp"
#include "ctdtr/patient.hpp"
#include "ctdtr/survival.hpp"

namespace ctdtr {

// Observation parameters phi, fixed by the posterior during policy
// optimization: longitudinal block, survival block, and the shared visit
// magnitude block (xi, beta_alpha).
struct ObservationParams {
  LongitudinalParams longitudinal;
  SurvivalParams survival;
  SharedVisitParams visit;

  void validate() const {
    longitudinal.validate();
    survival.validate();
    visit.validate();
  }
};

// decision + longitudinal + survival, in that fixed order. Under the SLS
// variant the hazard sees the carried-forward observed lab instead of y*.
inline double joint_loglik(const PatientRecord& rec, const PolicyParams& theta,
                           const ObservationParams& phi, const RandomEffects& re,
                           ModelVariant variant = ModelVariant::kJoint) {
  rec.validate();
  const double dec = decision_loglik(rec.events, rec.labs, rec.x, rec.t_tilde,
                                     theta, phi.visit);
  const double lng = long_loglik(rec, phi.longitudinal, re);
  HazardContext ctx(rec.events, rec.labs, rec.x, re, phi.longitudinal, phi.visit,
                    variant);
  const double srv = survival_loglik(rec, ctx, phi.survival);
  return dec + lng + srv;
}

// WAIC = -2 sum_n [ log mean_k exp(ll_kn) - var_k(ll_kn) ], log-sum-exp
// stabilized, sample variance with denominator K - 1. Rows are posterior
// draws, columns are patients (the exchangeable pointwise unit).
inline double waic(const Mat& pointwise_loglik) {
  const Eigen::Index K = pointwise_loglik.rows();
  const Eigen::Index N = pointwise_loglik.cols();
  require(K >= 2, "waic: needs at least 2 posterior draws");
  double total = 0.0;
  for (Eigen::Index n = 0; n < N; ++n) {
    const auto col = pointwise_loglik.col(n);
    const double m = col.maxCoeff();
    double sum_exp = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) sum_exp += std::exp(col[k] - m);
    const double lppd = m + std::log(sum_exp / static_cast<double>(K));
    const double mean = col.mean();
    double var = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double d = col[k] - mean;
      var += d * d;
    }
    var /= static_cast<double>(K - 1);
    total += lppd - var;
  }
  return -2.0 * total;
}

}  // namespace ctdtr
