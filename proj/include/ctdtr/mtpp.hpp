#pragma once

// Marked temporal point process for clinical decisions: visit-timing
// intensity with a Gamma-density bump above a constant baseline, a Gaussian
// dosage mark model, their joint log-likelihood, its analytic gradient in
// the policy parameters, and inverse-transform sampling of visit gaps.

#include <cmath>
#include <span>
#include <vector>

#include "ctdtr/common.hpp"
#include "ctdtr/math/roots.hpp"
#include "ctdtr/math/special.hpp"

namespace ctdtr {

// Policy parameters: nu1 = log peak time (days), nu2 = log shape offset
// (shape kappa = exp(nu2) + 1), mu = log baseline intensity, beta_d =
// dosage regression on (1, current lab, baseline covariates), sigma_d2 =
// dosage error variance. kappa > 1 and rate gamma = exp(nu2 - nu1) > 0 hold
// by construction.
struct PolicyParams {
  double nu1 = 0.0;
  double nu2 = 0.0;
  double mu = 0.0;
  Vec beta_d;
  double sigma_d2 = 1.0;

  double kappa() const { return std::exp(nu2) + 1.0; }
  double gamma_rate() const { return std::exp(nu2 - nu1); }

  void validate() const {
    require(sigma_d2 > 0.0, "PolicyParams: sigma_d2 must be > 0");
    require(std::isfinite(nu1) && std::isfinite(nu2) && std::isfinite(mu),
            "PolicyParams: non-finite intensity parameter");
    require(beta_d.size() >= 2, "PolicyParams: beta_d needs >= 2 entries");
  }
};

// Peak-magnitude parameters shared with the survival model: ceiling xi and
// logistic coefficients beta_alpha on (1, lab).
struct SharedVisitParams {
  double xi = 1.0;
  Vec2 beta_alpha = Vec2::Zero();

  void validate() const { require(xi > 0.0, "SharedVisitParams: xi must be > 0"); }
};

struct VisitEvent {
  double t = 0.0;  // days since transplant
  double d = 0.0;  // log dose
};

// alpha = xi / (1 + exp((1, y) . beta_alpha)), in (0, xi). Evaluated on the
// numerically stable branch of the logistic for large |exponent|.
inline double alpha_magnitude(double y, const SharedVisitParams& shared) {
  const double e = shared.beta_alpha[0] + shared.beta_alpha[1] * y;
  if (e > 0.0) {
    const double z = std::exp(-e);
    return shared.xi * z / (1.0 + z);
  }
  return shared.xi / (1.0 + std::exp(e));
}

// Gamma(kappa, gamma) density of the elapsed time since the last visit.
inline double gamma_bump_logpdf(double elapsed, const PolicyParams& p) {
  const double kappa = p.kappa();
  const double gamma = p.gamma_rate();
  return (kappa - 1.0) * std::log(elapsed) - gamma * elapsed +
         kappa * std::log(gamma) - log_gamma(kappa);
}

// lambda(elapsed) = exp(mu) + alpha * GammaPdf(elapsed; kappa, gamma).
inline double intensity_at(double elapsed, double alpha, const PolicyParams& p) {
  if (!(elapsed > 0.0)) throw std::domain_error("intensity_at: requires elapsed > 0");
  return std::exp(p.mu) + alpha * std::exp(gamma_bump_logpdf(elapsed, p));
}

// Compensator over a gap of length delta:
// exp(mu) * delta + alpha * P(kappa, gamma * delta).
inline double intensity_integral(double delta, double alpha, const PolicyParams& p) {
  require(delta >= 0.0, "intensity_integral: requires delta >= 0");
  if (delta == 0.0) return 0.0;
  return std::exp(p.mu) * delta +
         alpha * reg_lower_gamma(p.kappa(), p.gamma_rate() * delta);
}

// Inverse-transform sample of the next visit gap: solves
// intensity_integral(delta) = -log(1 - u). The compensator is strictly
// increasing and unbounded (positive baseline), so bracketing by doubling
// from one day followed by bisection always terminates.
inline double sample_next_visit(double alpha, const PolicyParams& p, double u) {
  if (!(u > 0.0 && u < 1.0))
    throw std::domain_error("sample_next_visit: requires u in (0,1)");
  const double target = -std::log1p(-u);
  const auto f = [&](double delta) { return intensity_integral(delta, alpha, p); };
  return solve_increasing(f, target, 1.0, 4.0 * kTimeCapDays, kRootTolDays);
}

inline double dosage_mean(double y, const Vec& x, const Vec& beta_d) {
  require(beta_d.size() == 2 + x.size(), "dosage_mean: beta_d/covariate size mismatch");
  double m = beta_d[0] + beta_d[1] * y;
  for (Eigen::Index i = 0; i < x.size(); ++i) m += beta_d[2 + i] * x[i];
  return m;
}

inline double dosage_logpdf(double d, double y, const Vec& x, const PolicyParams& p) {
  return normal_logpdf(d, dosage_mean(y, x, p.beta_d), p.sigma_d2);
}

namespace detail {

inline void check_decision_inputs(std::span<const VisitEvent> events,
                                  std::span<const double> labs, double horizon) {
  require(!events.empty(), "decision_loglik: needs at least the t=0 event");
  require(events[0].t == 0.0, "decision_loglik: first event must be at t = 0");
  require(labs.size() == events.size(), "decision_loglik: one lab per event required");
  for (std::size_t j = 1; j < events.size(); ++j)
    require(events[j].t > events[j - 1].t, "decision_loglik: event times must increase");
  require(horizon >= events.back().t, "decision_loglik: horizon before last event");
}

}  // namespace detail

// Timing part of the decision log-likelihood: sum of log-intensities at the
// observed visits minus the compensator over [0, horizon]. The alpha of each
// inter-visit segment comes from the lab at the segment's opening visit.
inline double visit_timing_loglik(std::span<const VisitEvent> events,
                                  std::span<const double> labs, double horizon,
                                  const PolicyParams& p, const SharedVisitParams& shared) {
  detail::check_decision_inputs(events, labs, horizon);
  double ll = 0.0;
  const std::size_t n = events.size();
  for (std::size_t j = 0; j < n; ++j) {
    const double alpha = alpha_magnitude(labs[j], shared);
    const double seg_end = (j + 1 < n) ? events[j + 1].t : horizon;
    ll -= intensity_integral(seg_end - events[j].t, alpha, p);
    if (j + 1 < n)
      ll += std::log(intensity_at(events[j + 1].t - events[j].t, alpha, p));
  }
  return ll;
}

// Dosage part: sum over all visits (including t = 0) of the Gaussian mark
// log-density given the lab at the same visit.
inline double dosage_loglik(std::span<const VisitEvent> events,
                            std::span<const double> labs, const Vec& x,
                            const PolicyParams& p) {
  require(labs.size() == events.size(), "dosage_loglik: one lab per event required");
  double ll = 0.0;
  for (std::size_t j = 0; j < events.size(); ++j)
    ll += dosage_logpdf(events[j].d, labs[j], x, p);
  return ll;
}

inline double decision_loglik(std::span<const VisitEvent> events,
                              std::span<const double> labs, const Vec& x,
                              double horizon, const PolicyParams& p,
                              const SharedVisitParams& shared) {
  return dosage_loglik(events, labs, x, p) +
         visit_timing_loglik(events, labs, horizon, p, shared);
}

// Analytic gradient of decision_loglik with respect to
// (nu1, nu2, mu, beta_d..., log sigma_d2), in that order. The kappa
// derivative of the regularized incomplete gamma uses a guarded finite
// difference (see reg_lower_gamma_da); everything else is closed form.
inline Vec decision_loglik_grad(std::span<const VisitEvent> events,
                                std::span<const double> labs, const Vec& x,
                                double horizon, const PolicyParams& p,
                                const SharedVisitParams& shared) {
  detail::check_decision_inputs(events, labs, horizon);
  p.validate();
  const Eigen::Index n_beta = p.beta_d.size();
  Vec grad = Vec::Zero(3 + n_beta + 1);
  const double kappa = p.kappa();
  const double gamma = p.gamma_rate();
  const double expmu = std::exp(p.mu);
  const double psi_kappa = digamma(kappa);

  const std::size_t n = events.size();
  for (std::size_t j = 0; j < n; ++j) {
    // Dosage score terms.
    const double resid = events[j].d - dosage_mean(labs[j], x, p.beta_d);
    grad[3] += resid / p.sigma_d2;
    grad[4] += resid / p.sigma_d2 * labs[j];
    for (Eigen::Index i = 0; i < x.size(); ++i)
      grad[5 + i] += resid / p.sigma_d2 * x[i];
    grad[3 + n_beta] += -0.5 + resid * resid / (2.0 * p.sigma_d2);

    const double alpha = alpha_magnitude(labs[j], shared);
    const double seg_len = ((j + 1 < n) ? events[j + 1].t : horizon) - events[j].t;

    // Compensator: exp(mu) * len + alpha * P(kappa, gamma * len).
    grad[2] -= expmu * seg_len;
    if (seg_len > 0.0 && alpha > 0.0) {
      const double z = gamma * seg_len;
      const double dPdz = reg_lower_gamma_dx(kappa, z);
      const double dPdk = reg_lower_gamma_da(kappa, z);
      // dz/dnu1 = -z, dz/dnu2 = z, dkappa/dnu2 = kappa - 1.
      grad[0] -= alpha * dPdz * (-z);
      grad[1] -= alpha * (dPdk * (kappa - 1.0) + dPdz * z);
    }

    // Event intensity at the segment-closing visit.
    if (j + 1 < n) {
      const double elapsed = seg_len;
      const double bump = alpha * std::exp(gamma_bump_logpdf(elapsed, p));
      const double lambda = expmu + bump;
      grad[2] += expmu / lambda;
      grad[0] += bump * (gamma * elapsed - kappa) / lambda;
      grad[1] += bump *
                 ((kappa - 1.0) * (std::log(gamma * elapsed) - psi_kappa) +
                  (kappa - gamma * elapsed)) /
                 lambda;
    }
  }
  return grad;
}

}  // namespace ctdtr
