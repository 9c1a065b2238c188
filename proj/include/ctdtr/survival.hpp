#pragma once

// Weibull proportional-hazards model:
//   h(t) = exp(-(b1 y*(t) + b2 d(t) + b3 Tox(t) + b4 alpha(t) + h0)) w t^{w-1}
// with dose, alpha, and the latent lab trajectory carried forward piecewise
// between visits. Cumulative hazards are integrated per inter-visit segment
// (the integrand is smooth inside segments and only jumps at visit times).

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "ctdtr/common.hpp"
#include "ctdtr/longitudinal.hpp"
#include "ctdtr/math/quadrature.hpp"
#include "ctdtr/math/roots.hpp"
#include "ctdtr/mtpp.hpp"
#include "ctdtr/patient.hpp"

namespace ctdtr {

struct SurvivalParams {
  double omega = 1.0;  // Weibull shape
  double beta_s1 = 0.0;  // latent / observed lab effect
  double beta_s2 = 0.0;  // instantaneous dose effect
  double beta_s3 = 0.0;  // accumulated (toxicity) dose effect
  double beta_s4 = 0.0;  // visitation-intensity effect
  double h0 = 0.0;       // baseline offset
  double eta_tox = 1.0;  // toxicity decay scale, days

  void validate() const {
    require(omega > 0.0, "SurvivalParams: omega must be > 0");
    require(eta_tox > 0.0, "SurvivalParams: eta_tox must be > 0");
  }
};

// Exponentially weighted running dose integral with decay scale eta:
//   Tox(t) = int_0^t d(tau) (1/eta) exp(-(t - tau)/eta) dtau,
// so a sustained unit dose saturates Tox at 1. Closed form per dose segment
// [a, b]: d * (exp(-(t-b)/eta) - exp(-(t-a)/eta)). Continuous in t.
inline double toxicity(double t, std::span<const VisitEvent> events, double eta) {
  require(t >= 0.0, "toxicity: requires t >= 0");
  require(eta > 0.0, "toxicity: requires eta > 0");
  double tox = 0.0;
  for (std::size_t j = 0; j < events.size(); ++j) {
    const double a = events[j].t;
    if (a >= t) break;
    const double b = (j + 1 < events.size()) ? std::min(events[j + 1].t, t) : t;
    tox += events[j].d * (std::exp(-(t - b) / eta) - std::exp(-(t - a) / eta));
  }
  return tox;
}

// Piecewise path data the hazard depends on. Segment j covers
// (t_j, t_{j+1}]; the last segment extends past the last visit.
struct HazardContext {
  std::vector<double> seg_start;  // visit times t_0 .. t_J
  std::vector<double> dose;       // dose in force on segment j
  std::vector<double> alpha;      // alpha(y_j) on segment j
  std::vector<double> y_obs;      // observed lab at the opening visit
  std::vector<double> ystar_c0;   // per-segment constant of y*(t)
  double ystar_c1 = 0.0;          // linear coefficient of y*(t)
  double ystar_c2 = 0.0;          // quadratic coefficient of y*(t)
  ModelVariant variant = ModelVariant::kJoint;

  HazardContext() = default;

  HazardContext(std::span<const VisitEvent> events, std::span<const double> labs,
                const Vec& x, const RandomEffects& re,
                const LongitudinalParams& lp, const SharedVisitParams& shared,
                ModelVariant v = ModelVariant::kJoint)
      : variant(v) {
    require(!events.empty() && events[0].t == 0.0,
            "HazardContext: events must start at t = 0");
    require(labs.size() == events.size(), "HazardContext: labs/events misaligned");
    const Eigen::Index P = x.size();
    require(lp.beta_l.size() == 4 + P, "HazardContext: beta_l size mismatch");
    double xb = 0.0;
    for (Eigen::Index i = 0; i < P; ++i) xb += lp.beta_l[2 + i] * x[i];
    ystar_c1 = lp.beta_l[2 + P] + re.b[2];
    ystar_c2 = lp.beta_l[3 + P];
    const std::size_t n = events.size();
    seg_start.resize(n);
    dose.resize(n);
    alpha.resize(n);
    y_obs.resize(n);
    ystar_c0.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      seg_start[j] = events[j].t;
      dose[j] = events[j].d;
      alpha[j] = alpha_magnitude(labs[j], shared);
      y_obs[j] = labs[j];
      ystar_c0[j] = lp.beta_l[0] + lp.beta_l[1] * events[j].d + xb + re.b[0] +
                    re.b[1] * events[j].d;
    }
  }

  std::size_t segment_of(double t) const {
    // Segment j holds t iff seg_start[j] < t <= seg_start[j+1].
    std::size_t lo = 0, hi = seg_start.size();
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if (seg_start[mid] < t)
        lo = mid;
      else
        hi = mid;
    }
    return lo;
  }
};

// Binds a context to survival parameters; precomputes the toxicity state at
// each segment start so hazard evaluations inside quadrature stay O(1).
class HazardEvaluator {
 public:
  HazardEvaluator(const HazardContext& ctx, const SurvivalParams& sp)
      : ctx_(&ctx), sp_(sp) {
    sp_.validate();
    const std::size_t n = ctx.seg_start.size();
    tox_start_.resize(n);
    tox_start_[0] = 0.0;
    for (std::size_t j = 0; j + 1 < n; ++j) {
      const double gap = ctx.seg_start[j + 1] - ctx.seg_start[j];
      const double decay = std::exp(-gap / sp_.eta_tox);
      tox_start_[j + 1] = ctx.dose[j] + (tox_start_[j] - ctx.dose[j]) * decay;
    }
  }

  double tox_at(double t, std::size_t j) const {
    const double decay = std::exp(-(t - ctx_->seg_start[j]) / sp_.eta_tox);
    return ctx_->dose[j] + (tox_start_[j] - ctx_->dose[j]) * decay;
  }

  double linear_predictor(double t, std::size_t j) const {
    const double lab = (ctx_->variant == ModelVariant::kJoint)
                           ? ctx_->ystar_c0[j] + t * (ctx_->ystar_c1 + t * ctx_->ystar_c2)
                           : ctx_->y_obs[j];
    return sp_.beta_s1 * lab + sp_.beta_s2 * ctx_->dose[j] +
           sp_.beta_s3 * tox_at(t, j) + sp_.beta_s4 * ctx_->alpha[j] + sp_.h0;
  }

  double log_hazard(double t) const {
    if (!(t > 0.0)) throw std::domain_error("hazard: requires t > 0");
    const std::size_t j = ctx_->segment_of(t);
    return -linear_predictor(t, j) + std::log(sp_.omega) +
           (sp_.omega - 1.0) * std::log(t);
  }

  double hazard(double t) const { return std::exp(log_hazard(t)); }

  // Integral of the hazard over [a, b] within segment j, a > 0. Log-hazard
  // values beyond ~700 overflow exp and would make the adaptive recursion
  // chase an astronomical integral; they short-circuit to +inf so the
  // surrounding proposal is rejected immediately. When the toxicity decay
  // scale is much shorter than the segment, the integral splits at the end
  // of the transient so the adaptive rule resolves it locally.
  double segment_integral(double a, double b, std::size_t j) const {
    if (!(b > a)) return 0.0;
    const auto f = [this, j](double t) {
      const double lh = -linear_predictor(t, j) + (sp_.omega - 1.0) * std::log(t);
      if (lh > 700.0) return std::numeric_limits<double>::infinity();
      return sp_.omega * std::exp(lh);
    };
    const double seg_start = ctx_->seg_start[j];
    const double transient_end = seg_start + 10.0 * sp_.eta_tox;
    if (a < transient_end && transient_end < b) {
      const double head = adaptive_simpson(f, a, transient_end, 0.5 * kHazardQuadTol, 40);
      if (!std::isfinite(head)) return head;
      return head + adaptive_simpson(f, transient_end, b, 0.5 * kHazardQuadTol, 40);
    }
    return adaptive_simpson(f, a, b, kHazardQuadTol, 40);
  }

  // Integral over [0, b] within the first segment, via u = t^omega so the
  // t^{omega-1} factor never produces an endpoint singularity when omega < 1.
  double first_segment_integral(double b) const {
    if (!(b > 0.0)) return 0.0;
    const double inv_omega = 1.0 / sp_.omega;
    const auto f = [this, inv_omega](double u) {
      const double t = std::pow(u, inv_omega);
      const double nlp = -linear_predictor(t, 0);
      if (nlp > 700.0) return std::numeric_limits<double>::infinity();
      return std::exp(nlp);
    };
    const double transient_end = 10.0 * sp_.eta_tox;
    if (transient_end < b) {
      const double head = adaptive_simpson(
          f, 0.0, std::pow(transient_end, sp_.omega), 0.5 * kHazardQuadTol, 40);
      if (!std::isfinite(head)) return head;
      return head + segment_integral(transient_end, b, 0);
    }
    return adaptive_simpson(f, 0.0, std::pow(b, sp_.omega), kHazardQuadTol, 40);
  }

  // Cumulative hazard over [a, b], split at visit times.
  double cumulative(double a, double b) const {
    require(a >= 0.0 && b >= a, "cumulative_hazard: requires 0 <= a <= b");
    if (a == b) return 0.0;
    double total = 0.0;
    const auto& starts = ctx_->seg_start;
    const std::size_t n = starts.size();
    for (std::size_t j = 0; j < n; ++j) {
      const double seg_lo = starts[j];
      const double seg_hi = (j + 1 < n) ? starts[j + 1] : b;
      const double lo = std::max(a, seg_lo);
      const double hi = std::min(b, seg_hi);
      if (hi <= lo) {
        if (seg_lo >= b) break;
        continue;
      }
      if (j == 0 && lo == 0.0)
        total += first_segment_integral(hi);
      else
        total += segment_integral(lo, hi, j);
      if (!std::isfinite(total)) return total;
    }
    return total;
  }

  // Smallest T in (t_start, t_end] with cumulative(t_start, T) = target, or
  // nullopt when the whole interval accumulates less than target.
  std::optional<double> solve_crossing(double t_start, double t_end,
                                       double target) const {
    const double total = cumulative(t_start, t_end);
    if (!(total >= target)) return std::nullopt;
    const auto f = [this, t_start](double t) { return cumulative(t_start, t); };
    return bisect_increasing(f, t_start, t_end, target, kRootTolDays);
  }

 private:
  const HazardContext* ctx_;
  SurvivalParams sp_;
  std::vector<double> tox_start_;
};

inline double hazard(double t, const HazardContext& ctx, const SurvivalParams& sp) {
  return HazardEvaluator(ctx, sp).hazard(t);
}

inline double cumulative_hazard(double a, double b, const HazardContext& ctx,
                                const SurvivalParams& sp) {
  return HazardEvaluator(ctx, sp).cumulative(a, b);
}

// delta * log h(T~) - H(0, T~).
inline double survival_loglik(double t_tilde, int delta, const HazardContext& ctx,
                              const SurvivalParams& sp) {
  require(t_tilde > 0.0, "survival_loglik: requires t_tilde > 0");
  HazardEvaluator ev(ctx, sp);
  const double cum = ev.cumulative(0.0, t_tilde);
  if (!std::isfinite(cum)) return -std::numeric_limits<double>::infinity();
  double ll = -cum;
  if (delta) ll += ev.log_hazard(t_tilde);
  return ll;
}

inline double survival_loglik(const PatientRecord& rec, const HazardContext& ctx,
                              const SurvivalParams& sp) {
  return survival_loglik(rec.t_tilde, rec.delta, ctx, sp);
}

// Inverse-transform draw of a survival time inside [t_start, t_end]: solves
// H(t_start, T) = -log(1 - u), returning nullopt when the patient survives
// the segment. Shared with the median-survival crossing machinery.
inline std::optional<double> sample_survival_in_segment(
    double t_start, double t_end, const HazardContext& ctx,
    const SurvivalParams& sp, double u) {
  if (!(u > 0.0 && u < 1.0))
    throw std::domain_error("sample_survival_in_segment: requires u in (0,1)");
  require(t_start < t_end, "sample_survival_in_segment: requires t_start < t_end");
  return HazardEvaluator(ctx, sp).solve_crossing(t_start, t_end, -std::log1p(-u));
}

struct MedianSurvival {
  double t_hat = 0.0;
  bool capped = false;
};

// ln 2 crossing of the cumulative hazard along a fixed (non-extending) path,
// capped at `cap`. Trajectory simulation extends the path on demand and
// reuses the same solve_crossing code path.
inline MedianSurvival median_survival_on_path(const HazardContext& ctx,
                                              const SurvivalParams& sp,
                                              double cap = kTimeCapDays) {
  HazardEvaluator ev(ctx, sp);
  const auto t = ev.solve_crossing(0.0, cap, M_LN2);
  if (t) return {*t, false};
  return {cap, true};
}

}  // namespace ctdtr
