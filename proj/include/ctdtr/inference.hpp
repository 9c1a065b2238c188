#pragma once

// Metropolis-within-Gibbs over the full joint model.
//
// Sweep order: dosage block (conjugate Gibbs) -> longitudinal block
// (Metropolis with the exact longitudinal-conditional as proposal, accepted
// on the survival factor alone) -> per-patient random effects (same scheme)
// -> Sigma_b (flat-prior inverse-Wishart Gibbs) -> survival scalars
// (random-walk Metropolis; log walks for positive parameters) -> visitation
// scalars. Proposal scales adapt toward 0.4 acceptance during burn-in only.
//
// The time features of the longitudinal design are rescaled internally
// (days / 1000) so the conjugate normal equations stay well conditioned;
// chain state and emitted draws remain in per-day units throughout.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ctdtr/common.hpp"
#include "ctdtr/draws.hpp"
#include "ctdtr/joint.hpp"
#include "ctdtr/longitudinal.hpp"
#include "ctdtr/mtpp.hpp"
#include "ctdtr/parallel.hpp"
#include "ctdtr/patient.hpp"
#include "ctdtr/rng.hpp"
#include "ctdtr/survival.hpp"

namespace ctdtr {

struct Hyperparameters {
  Vec beta_d0;                  // empty => zeros
  double sigma_beta_d2 = 1e4;   // prior covariance 100^2 I
  double pi_d1 = 0.01, pi_d2 = 0.01;
  Vec beta_l0;                  // empty => zeros
  double sigma_beta_l2 = 1e4;
  double pi_l1 = 0.01, pi_l2 = 0.01;
  double beta_s0 = 0.0, sigma_s02 = 1e4;   // beta_s1..4, h0 ~ Normal
  double pi_s1 = 0.01, pi_s2 = 0.01;       // eta_tox ~ Gamma(shape, rate)
  double pi_s3 = 0.01, pi_s4 = 0.01;       // omega ~ Gamma(shape, rate)
  double beta_v0 = 0.0, sigma_v02 = 1e4;   // mu, nu1, nu2 ~ Normal
  Vec2 beta_alpha0 = Vec2::Zero();
  double sigma_beta_alpha2 = 1e4;
  double pi_v1 = 400.0, pi_v2 = 200.0;     // xi ~ Gamma(shape, rate)

  void validate() const {
    require(sigma_beta_d2 > 0 && sigma_beta_l2 > 0 && sigma_s02 > 0 &&
                sigma_v02 > 0 && sigma_beta_alpha2 > 0,
            "Hyperparameters: prior variances must be > 0");
    require(pi_d1 > 0 && pi_d2 > 0 && pi_l1 > 0 && pi_l2 > 0 && pi_s1 > 0 &&
                pi_s2 > 0 && pi_s3 > 0 && pi_s4 > 0 && pi_v1 > 0 && pi_v2 > 0,
            "Hyperparameters: shape/rate parameters must be > 0");
  }
};

struct McmcSettings {
  int iters = 20000;
  int burnin = 5000;
  int thin = 50;
  std::uint64_t seed = 1;
  ModelVariant variant = ModelVariant::kJoint;
  unsigned threads = 1;
  bool prior_only = false;  // likelihood switched off (sampler diagnostics)
  // The toxicity decay scale is unidentified until beta_s3 has moved off
  // zero; updating it too early lets it wander into a degenerate small-scale
  // basin. Its update is therefore held for the first part of burn-in
  // (burn-in-only scheduling, so the stationary target is untouched).
  // -1 = burnin / 2; 0 = never hold.
  int eta_freeze = -1;

  void validate() const {
    require(iters > burnin, "McmcSettings: iters must exceed burnin");
    require(burnin >= 0, "McmcSettings: burnin must be >= 0");
    require(thin >= 1, "McmcSettings: thin must be >= 1");
    require((iters - burnin) >= thin, "McmcSettings: no draws would be retained");
  }
};

struct ChainState {
  PolicyParams theta;
  ObservationParams obs;
  std::vector<Vec3> b;  // per-patient random effects
  long iter = 0;
};

class GibbsSampler {
 public:
  GibbsSampler(const std::vector<PatientRecord>& data, Hyperparameters hyper,
               McmcSettings settings)
      : data_(&data), hyper_(std::move(hyper)), settings_(settings) {
    settings_.validate();
    hyper_.validate();
    require(!data.empty(), "GibbsSampler: empty dataset");
    for (const auto& r : data) r.validate();
    n_cov_ = data.front().x.size();
    for (const auto& r : data)
      require(r.x.size() == n_cov_, "GibbsSampler: inconsistent covariate dims");
    precompute();
    init_state();
    refresh_all_caches();
  }

  const ChainState& state() const { return state_; }
  ChainState& state() { return state_; }
  const std::map<std::string, BlockStats>& blocks() const { return blocks_; }

  // --- individual update blocks (exposed for targeted tests) ---------------

  // beta_d | rest is a conjugate Gaussian regression update over all
  // (patient, visit) rows; sigma_d2 | rest is inverse-gamma on the residuals.
  void gibbs_update_dosage(RngStream& rng) {
    const Eigen::Index p = 2 + n_cov_;
    Vec prior_mean = hyper_.beta_d0.size() ? hyper_.beta_d0 : Vec::Zero(p);
    require(prior_mean.size() == p, "gibbs_update_dosage: beta_d0 size mismatch");
    Mat precision = Mat::Identity(p, p) / hyper_.sigma_beta_d2;
    Vec rhs = prior_mean / hyper_.sigma_beta_d2;
    if (!settings_.prior_only) {
      precision += dose_gram_ / state_.theta.sigma_d2;
      rhs += dose_cross_ / state_.theta.sigma_d2;
    }
    state_.theta.beta_d = sample_gaussian(precision, rhs, rng);

    double shape = hyper_.pi_d1;
    double rate = hyper_.pi_d2;
    if (!settings_.prior_only) {
      const Vec& bd = state_.theta.beta_d;
      double rss = dose_yy_ - 2.0 * bd.dot(dose_cross_) + bd.dot(dose_gram_ * bd);
      rss = std::max(rss, 0.0);
      shape += 0.5 * static_cast<double>(n_dose_rows_);
      rate += 0.5 * rss;
    }
    state_.theta.sigma_d2 = rng.inverse_gamma(shape, rate);
    mark_gibbs("beta_d");
    mark_gibbs("sigma_d2");
    if (!settings_.prior_only) refresh_dose_ll();
  }

  // Proposes (beta_l) from the exact longitudinal conditional given
  // (sigma_l2, b); the Metropolis ratio reduces to the survival factor.
  // sigma_l2 | beta_l, b has no survival term, so it is pure Gibbs.
  void mh_update_longitudinal(RngStream& rng) {
    const Eigen::Index p = 4 + n_cov_;
    Vec prior_mean = hyper_.beta_l0.size() ? hyper_.beta_l0 : Vec::Zero(p);
    require(prior_mean.size() == p, "mh_update_longitudinal: beta_l0 size mismatch");
    // Scaled-space prior: beta_tilde = D^{-1} beta with z_tilde = D z.
    Vec d_scale = Vec::Ones(p);
    d_scale[p - 2] = kTimeFeatureScale;
    d_scale[p - 1] = kTimeFeatureScale * kTimeFeatureScale;
    Mat precision = (d_scale.array().square() / hyper_.sigma_beta_l2)
                        .matrix()
                        .asDiagonal();
    Vec rhs = precision * (prior_mean.cwiseQuotient(d_scale));
    if (!settings_.prior_only) {
      precision += long_gram_ / state_.obs.longitudinal.sigma_l2;
      Vec cross = long_cross_y_;
      for (std::size_t i = 0; i < data_->size(); ++i)
        cross -= long_zr_[i] * scaled_b(i);
      rhs += cross / state_.obs.longitudinal.sigma_l2;
    }
    const Vec beta_scaled = sample_gaussian(precision, rhs, rng);
    Vec proposal = beta_scaled.cwiseProduct(d_scale);

    bool accept = true;
    std::vector<HazardContext> ctx_prop;
    std::vector<double> surv_prop;
    if (!settings_.prior_only && settings_.variant == ModelVariant::kJoint) {
      LongitudinalParams lp = state_.obs.longitudinal;
      lp.beta_l = proposal;
      build_contexts(lp, state_.obs.visit, ctx_prop);
      eval_surv(ctx_prop, state_.obs.survival, surv_prop);
      const double delta = sum_diff(surv_prop, surv_ll_);
      accept = std::log(rng.uniform01()) < delta;
    }
    auto& bl = blocks_["beta_l"];
    bl.proposed++;
    if (accept) {
      bl.accepted++;
      state_.obs.longitudinal.beta_l = std::move(proposal);
      if (!settings_.prior_only) {
        refresh_long_ll();
        if (settings_.variant == ModelVariant::kJoint) {
          contexts_ = std::move(ctx_prop);
          surv_ll_ = std::move(surv_prop);
        }
        // Under SLS the hazard reads observed labs, so contexts and the
        // survival cache are unaffected by beta_l.
      }
    }

    double shape = hyper_.pi_l1;
    double rate = hyper_.pi_l2;
    if (!settings_.prior_only) {
      shape += 0.5 * static_cast<double>(n_long_rows_);
      rate += 0.5 * std::max(long_rss(), 0.0);
    }
    state_.obs.longitudinal.sigma_l2 = rng.inverse_gamma(shape, rate);
    mark_gibbs("sigma_l2");
    if (!settings_.prior_only) refresh_long_ll();
  }

  // Per-patient b_i, conjugate longitudinal proposal, survival factor in the
  // ratio. Patients are conditionally independent given the global state;
  // each uses a stream derived from (seed, "b", iteration, patient), so the
  // result is identical at any concurrency level.
  void update_random_effects(long iter_for_stream) {
    const Mat3 Sigma_scaled = scaled_sigma_b();
    Eigen::LDLT<Mat3> prior_ldlt(Sigma_scaled);
    const bool coupled =
        !settings_.prior_only && settings_.variant == ModelVariant::kJoint;
    const std::size_t I = data_->size();
    std::vector<int> accepted(I, 0);
    std::vector<Vec3> new_b(I);
    std::vector<HazardContext> new_ctx(I);
    std::vector<double> new_surv(I);
    auto& bl = blocks_["random_effects"];
    parallel_for(I, settings_.threads, [&](std::size_t i) {
      RngStream rng = RngStream::derive(
          settings_.seed, {fnv1a64("re"), static_cast<std::uint64_t>(iter_for_stream),
                           static_cast<std::uint64_t>(i)});
      Mat3 precision = Mat3::Zero();
      // Solve against the prior covariance rather than forming its inverse.
      precision = prior_ldlt.solve(Mat3::Identity());
      Vec3 rhs = Vec3::Zero();
      if (!settings_.prior_only) {
        precision += re_gram_[i] / state_.obs.longitudinal.sigma_l2;
        rhs += (re_cross_y_[i] - re_rz_[i] * scaled_beta_l()) /
               state_.obs.longitudinal.sigma_l2;
      }
      Eigen::LLT<Mat3> llt(precision);
      const Vec3 mean = llt.solve(rhs);
      Vec3 z(rng.normal(), rng.normal(), rng.normal());
      const Vec3 prop_scaled = mean + llt.matrixL().transpose().solve(z);
      Vec3 prop = prop_scaled;
      prop[2] *= kTimeFeatureScale;  // back to per-day units

      bool accept = true;
      HazardContext ctx;
      double surv = 0.0;
      if (coupled) {
        const RandomEffects re{prop};
        ctx = HazardContext((*data_)[i].events, (*data_)[i].labs, (*data_)[i].x,
                            re, state_.obs.longitudinal, state_.obs.visit,
                            settings_.variant);
        surv = survival_loglik((*data_)[i], ctx, state_.obs.survival);
        accept = std::log(rng.uniform01()) < (surv - surv_ll_[i]);
      }
      accepted[i] = accept ? 1 : 0;
      if (accept) {
        new_b[i] = prop;
        if (coupled) {
          new_ctx[i] = std::move(ctx);
          new_surv[i] = surv;
        }
      }
    });
    for (std::size_t i = 0; i < I; ++i) {
      bl.proposed++;
      if (!accepted[i]) continue;
      bl.accepted++;
      state_.b[i] = new_b[i];
      if (coupled) {
        contexts_[i] = std::move(new_ctx[i]);
        surv_ll_[i] = new_surv[i];
      }
    }
    if (!settings_.prior_only) refresh_long_ll();
    // Under SLS the survival cache does not depend on b.
  }

  // Sigma_b | {b_i} ~ InverseWishart(I - p - 1, sum b b^T) under the flat
  // prior, sampled by Bartlett decomposition; scatter eigenvalues clamped at
  // 1e-12 to keep near-degenerate components (they do occur) sampleable.
  void update_sigma_b(RngStream& rng) {
    if (settings_.prior_only) return;  // flat prior: no proper marginal to sample
    const double I = static_cast<double>(data_->size());
    const double p = 3.0;
    // Propriety of IW(I - p - 1, scatter) needs I > 2p.
    require(I > 2.0 * p, "update_sigma_b: needs I > 2 * dim(b) patients");
    Mat3 scatter = Mat3::Zero();
    for (std::size_t i = 0; i < data_->size(); ++i) {
      const Vec3 bs = scaled_b(i);
      scatter += bs * bs.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
    const Vec3 ev = es.eigenvalues().cwiseMax(1e-12);
    scatter = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();

    const double df = I - p - 1.0;
    const Mat3 Ls = Eigen::LLT<Mat3>(scatter).matrixL();
    Mat3 A = Mat3::Zero();
    for (int k = 0; k < 3; ++k) A(k, k) = std::sqrt(rng.chi_square(df - k));
    A(1, 0) = rng.normal();
    A(2, 0) = rng.normal();
    A(2, 1) = rng.normal();
    // Sigma = Ls (A A^T)^{-1} Ls^T, a draw from IW(df, scatter).
    const Mat3 M = A.triangularView<Eigen::Lower>().solve(Ls.transpose()).transpose().eval();
    Mat3 sigma_scaled = M * M.transpose();
    Mat3 sigma = sigma_scaled;
    const double s = kTimeFeatureScale;
    sigma(0, 2) *= s; sigma(2, 0) *= s;
    sigma(1, 2) *= s; sigma(2, 1) *= s;
    sigma(2, 2) *= s * s;
    state_.obs.longitudinal.Sigma_b = 0.5 * (sigma + sigma.transpose());
    mark_gibbs("Sigma_b");
  }

  // Random-walk Metropolis over the survival scalars. Positive parameters
  // walk on the log scale (Jacobian included).
  void mh_update_survival(RngStream& rng) {
    auto& sp = state_.obs.survival;
    rw_scalar("beta_s1", sp.beta_s1, false, normal_logprior(hyper_.beta_s0, hyper_.sigma_s02),
              Touches::kSurvival, rng);
    rw_scalar("beta_s2", sp.beta_s2, false, normal_logprior(hyper_.beta_s0, hyper_.sigma_s02),
              Touches::kSurvival, rng);
    rw_scalar("beta_s3", sp.beta_s3, false, normal_logprior(hyper_.beta_s0, hyper_.sigma_s02),
              Touches::kSurvival, rng);
    rw_scalar("beta_s4", sp.beta_s4, false, normal_logprior(hyper_.beta_s0, hyper_.sigma_s02),
              Touches::kSurvival, rng);
    rw_scalar("h0", sp.h0, false, normal_logprior(hyper_.beta_s0, hyper_.sigma_s02),
              Touches::kSurvival, rng);
    rw_scalar("omega", sp.omega, true, gamma_logprior(hyper_.pi_s3, hyper_.pi_s4),
              Touches::kSurvival, rng);
    const int freeze = (settings_.eta_freeze < 0) ? settings_.burnin / 2
                                                  : settings_.eta_freeze;
    if (settings_.prior_only || state_.iter > freeze)
      rw_scalar("eta_tox", sp.eta_tox, true,
                gamma_logprior(hyper_.pi_s1, hyper_.pi_s2), Touches::kSurvival, rng);
  }

  // Visitation block: mu, nu1, nu2 touch only the timing likelihood;
  // beta_alpha and xi touch both timing and survival (alpha enters the
  // hazard).
  void mh_update_visit(RngStream& rng) {
    auto& th = state_.theta;
    auto& vis = state_.obs.visit;
    rw_scalar("mu", th.mu, false, normal_logprior(hyper_.beta_v0, hyper_.sigma_v02),
              Touches::kTiming, rng);
    rw_scalar("nu1", th.nu1, false, normal_logprior(hyper_.beta_v0, hyper_.sigma_v02),
              Touches::kTiming, rng);
    rw_scalar("nu2", th.nu2, false, normal_logprior(hyper_.beta_v0, hyper_.sigma_v02),
              Touches::kTiming, rng);
    rw_scalar("beta_alpha0", vis.beta_alpha[0], false,
              normal_logprior(hyper_.beta_alpha0[0], hyper_.sigma_beta_alpha2),
              Touches::kBoth, rng);
    rw_scalar("beta_alpha1", vis.beta_alpha[1], false,
              normal_logprior(hyper_.beta_alpha0[1], hyper_.sigma_beta_alpha2),
              Touches::kBoth, rng);
    rw_scalar("xi", vis.xi, true, gamma_logprior(hyper_.pi_v1, hyper_.pi_v2),
              Touches::kBoth, rng);
  }

  void sweep(long iter, RngStream& rng) {
    state_.iter = iter;
    adapting_ = iter <= settings_.burnin;
    gibbs_update_dosage(rng);
    mh_update_longitudinal(rng);
    update_random_effects(iter);
    update_sigma_b(rng);
    mh_update_survival(rng);
    mh_update_visit(rng);
  }

  double patient_loglik(std::size_t i) const {
    return dose_ll_[i] + timing_ll_[i] + long_ll_[i] + surv_ll_[i];
  }

  double total_loglik() const {
    double t = 0.0;
    for (std::size_t i = 0; i < data_->size(); ++i) t += patient_loglik(i);
    return t;
  }

  PosteriorDraws run() {
    PosteriorDraws out;
    out.variant = settings_.variant;
    out.seed = settings_.seed;
    out.iters = settings_.iters;
    out.burnin = settings_.burnin;
    out.thin = settings_.thin;
    const int n_draws = (settings_.iters - settings_.burnin) / settings_.thin;
    out.pointwise_loglik.resize(n_draws, static_cast<Eigen::Index>(data_->size()));
    out.draws.reserve(n_draws);
    RngStream rng = RngStream::derive(settings_.seed, {fnv1a64("chain")});
    int k = 0;
    for (int iter = 1; iter <= settings_.iters; ++iter) {
      sweep(iter, rng);
      if (iter > settings_.burnin && (iter - settings_.burnin) % settings_.thin == 0 &&
          k < n_draws) {
        check_state_valid();
        out.draws.push_back({state_.theta, state_.obs});
        for (std::size_t i = 0; i < data_->size(); ++i)
          out.pointwise_loglik(k, static_cast<Eigen::Index>(i)) =
              settings_.prior_only ? 0.0 : patient_loglik(i);
        ++k;
      }
    }
    for (const auto& [name, st] : blocks_) out.acceptance[name] = st;
    return out;
  }

  // Positivity and finiteness invariants; every retained state must satisfy
  // them.
  void check_state_valid() const {
    const auto& s = state_;
    require(s.theta.sigma_d2 > 0.0 && s.obs.longitudinal.sigma_l2 > 0.0 &&
                s.obs.survival.omega > 0.0 && s.obs.survival.eta_tox > 0.0 &&
                s.obs.visit.xi > 0.0,
            "chain state violates positivity constraints");
    if (!settings_.prior_only) {
      const double ll = total_loglik();
      require(std::isfinite(ll), "non-finite joint log-likelihood at retained state");
    }
  }

  // Resynchronizes the likelihood caches after direct mutation of state().
  void refresh_caches() { refresh_all_caches(); }

  double proposal_scale(const std::string& name) const {
    auto it = scales_.find(name);
    return it == scales_.end() ? 0.0 : it->second;
  }
  void set_proposal_scale(const std::string& name, double v) { scales_[name] = v; }
  void set_adapting(bool v) { adapting_ = v; }

 private:
  enum class Touches { kSurvival, kTiming, kBoth };

  static constexpr double kTimeFeatureScale = 1e-3;  // days -> kilodays

  std::function<double(double)> normal_logprior(double mean, double var) const {
    return [mean, var](double v) {
      const double d = v - mean;
      return -0.5 * d * d / var;
    };
  }
  std::function<double(double)> gamma_logprior(double shape, double rate) const {
    return [shape, rate](double v) { return (shape - 1.0) * std::log(v) - rate * v; };
  }

  Vec scaled_beta_l() const {
    Vec b = state_.obs.longitudinal.beta_l;
    const Eigen::Index p = b.size();
    b[p - 2] /= kTimeFeatureScale;
    b[p - 1] /= (kTimeFeatureScale * kTimeFeatureScale);
    return b;
  }
  Vec3 scaled_b(std::size_t i) const {
    Vec3 v = state_.b[i];
    v[2] /= kTimeFeatureScale;
    return v;
  }
  Mat3 scaled_sigma_b() const {
    Mat3 s = state_.obs.longitudinal.Sigma_b;
    const double inv = 1.0 / kTimeFeatureScale;
    s(0, 2) *= inv; s(2, 0) *= inv;
    s(1, 2) *= inv; s(2, 1) *= inv;
    s(2, 2) *= inv * inv;
    return s;
  }

  Vec sample_gaussian(const Mat& precision, const Vec& rhs, RngStream& rng) const {
    Eigen::LLT<Mat> llt(precision);
    require(llt.info() == Eigen::Success,
            "conjugate update: singular posterior precision");
    const Vec mean = llt.solve(rhs);
    Vec z(rhs.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return mean + llt.matrixL().transpose().solve(z);
  }

  void precompute() {
    const auto& data = *data_;
    const Eigen::Index pd = 2 + n_cov_;
    const Eigen::Index pl = 4 + n_cov_;
    dose_gram_ = Mat::Zero(pd, pd);
    dose_cross_ = Vec::Zero(pd);
    dose_yy_ = 0.0;
    n_dose_rows_ = 0;
    long_gram_ = Mat::Zero(pl, pl);
    long_cross_y_ = Vec::Zero(pl);
    n_long_rows_ = 0;
    long_rows_.resize(data.size());
    long_zr_.resize(data.size());
    re_gram_.resize(data.size());
    re_cross_y_.resize(data.size());
    re_rz_.resize(data.size());

    Vec w(pd), z(pl);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& rec = data[i];
      long_zr_[i] = Mat::Zero(pl, 3);
      re_gram_[i] = Mat3::Zero();
      re_cross_y_[i] = Vec3::Zero();
      re_rz_[i] = Mat::Zero(3, pl);
      for (std::size_t j = 0; j < rec.events.size(); ++j) {
        w[0] = 1.0;
        w[1] = rec.labs[j];
        for (Eigen::Index c = 0; c < n_cov_; ++c) w[2 + c] = rec.x[c];
        dose_gram_ += w * w.transpose();
        dose_cross_ += w * rec.events[j].d;
        dose_yy_ += rec.events[j].d * rec.events[j].d;
        ++n_dose_rows_;
        if (j == 0) continue;
        const double t = rec.events[j].t * kTimeFeatureScale;
        const double d_prev = rec.events[j - 1].d;
        z[0] = 1.0;
        z[1] = d_prev;
        for (Eigen::Index c = 0; c < n_cov_; ++c) z[2 + c] = rec.x[c];
        z[pl - 2] = t;
        z[pl - 1] = t * t;
        Vec3 r(1.0, d_prev, t);
        long_gram_ += z * z.transpose();
        long_cross_y_ += z * rec.labs[j];
        long_zr_[i] += z * r.transpose();
        re_gram_[i] += r * r.transpose();
        re_cross_y_[i] += r * rec.labs[j];
        re_rz_[i] += r * z.transpose();
        long_rows_[i].push_back(j);
        ++n_long_rows_;
      }
    }
  }

  void init_state() {
    const auto& data = *data_;
    const Eigen::Index pd = 2 + n_cov_;
    const Eigen::Index pl = 4 + n_cov_;
    state_.b.assign(data.size(), Vec3::Zero());

    // Dosage: ridge-stabilized least squares.
    {
      Mat a = dose_gram_ + 1e-8 * Mat::Identity(pd, pd);
      state_.theta.beta_d = a.ldlt().solve(dose_cross_);
      const Vec& bd = state_.theta.beta_d;
      const double rss =
          std::max(dose_yy_ - 2.0 * bd.dot(dose_cross_) + bd.dot(dose_gram_ * bd), 0.0);
      state_.theta.sigma_d2 =
          std::max(rss / std::max<long>(n_dose_rows_, 1), 1e-6);
    }
    // Longitudinal: least squares in scaled space, no random effects yet.
    {
      Mat a = long_gram_ + 1e-8 * Mat::Identity(pl, pl);
      Vec beta_scaled = a.ldlt().solve(long_cross_y_);
      Vec beta = beta_scaled;
      beta[pl - 2] *= kTimeFeatureScale;
      beta[pl - 1] *= kTimeFeatureScale * kTimeFeatureScale;
      state_.obs.longitudinal.beta_l = beta;
      state_.obs.longitudinal.sigma_l2 = 0.04;
      double rss = 0.0;
      long n = 0;
      for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t j : long_rows_[i]) {
          const auto& rec = data[i];
          const double mean = latent_mean(rec.events[j].t, rec.events[j - 1].d,
                                          rec.x, state_.obs.longitudinal, {});
          rss += (rec.labs[j] - mean) * (rec.labs[j] - mean);
          ++n;
        }
      if (n > 0) state_.obs.longitudinal.sigma_l2 = std::max(rss / n, 1e-8);
      state_.obs.longitudinal.Sigma_b = Mat3::Zero();
      state_.obs.longitudinal.Sigma_b.diagonal() << 0.1, 0.1, 1e-6;
    }
    // Survival and visitation: neutral, data-scale starting points.
    {
      double total_follow = 0.0;
      double total_gaps = 0.0;
      long n_events = 0, n_deaths = 0, n_gaps = 0;
      for (const auto& rec : data) {
        total_follow += rec.t_tilde;
        n_events += static_cast<long>(rec.events.size()) - 1;
        n_deaths += rec.delta;
        for (std::size_t j = 1; j < rec.events.size(); ++j) {
          total_gaps += rec.events[j].t - rec.events[j - 1].t;
          ++n_gaps;
        }
      }
      const double mean_gap = (n_gaps > 0) ? total_gaps / n_gaps : 60.0;
      auto& sp = state_.obs.survival;
      sp.omega = 1.0;
      sp.beta_s1 = sp.beta_s2 = sp.beta_s3 = sp.beta_s4 = 0.0;
      sp.h0 = std::log(total_follow / std::max<long>(n_deaths, 1));
      sp.eta_tox = mean_gap;
      auto& th = state_.theta;
      th.mu = std::log(std::max<long>(n_events, 1) / total_follow);
      th.nu1 = std::log(std::max(mean_gap * 0.5, 1.0));
      th.nu2 = 0.0;
      state_.obs.visit.xi = hyper_.pi_v1 / hyper_.pi_v2;
      state_.obs.visit.beta_alpha = hyper_.beta_alpha0;
    }
    for (const char* name :
         {"beta_s1", "beta_s2", "beta_s3", "beta_s4", "h0", "omega", "eta_tox",
          "mu", "nu1", "nu2", "beta_alpha0", "beta_alpha1", "xi"})
      scales_[name] = 0.1;
    state_.iter = 0;
  }

  void build_contexts(const LongitudinalParams& lp, const SharedVisitParams& vis,
                      std::vector<HazardContext>& out) const {
    const auto& data = *data_;
    out.resize(data.size());
    parallel_for(data.size(), settings_.threads, [&](std::size_t i) {
      const RandomEffects re{state_.b[i]};
      out[i] = HazardContext(data[i].events, data[i].labs, data[i].x, re, lp, vis,
                             settings_.variant);
    });
  }

  void eval_surv(const std::vector<HazardContext>& ctx, const SurvivalParams& sp,
                 std::vector<double>& out) const {
    const auto& data = *data_;
    out.resize(data.size());
    parallel_for(data.size(), settings_.threads, [&](std::size_t i) {
      out[i] = survival_loglik(data[i], ctx[i], sp);
    });
  }

  void eval_timing(const PolicyParams& th, const SharedVisitParams& vis,
                   std::vector<double>& out) const {
    const auto& data = *data_;
    out.resize(data.size());
    parallel_for(data.size(), settings_.threads, [&](std::size_t i) {
      out[i] = visit_timing_loglik(data[i].events, data[i].labs, data[i].t_tilde,
                                   th, vis);
    });
  }

  static double sum_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] - b[i];
    return s;
  }

  void refresh_dose_ll() {
    const auto& data = *data_;
    dose_ll_.resize(data.size());
    parallel_for(data.size(), settings_.threads, [&](std::size_t i) {
      dose_ll_[i] = dosage_loglik(data[i].events, data[i].labs, data[i].x,
                                  state_.theta);
    });
  }
  void refresh_long_ll() {
    const auto& data = *data_;
    long_ll_.resize(data.size());
    parallel_for(data.size(), settings_.threads, [&](std::size_t i) {
      long_ll_[i] = long_loglik(data[i], state_.obs.longitudinal,
                                RandomEffects{state_.b[i]});
    });
  }
  void rebuild_contexts_and_surv() {
    build_contexts(state_.obs.longitudinal, state_.obs.visit, contexts_);
    eval_surv(contexts_, state_.obs.survival, surv_ll_);
  }
  void refresh_timing_ll() { eval_timing(state_.theta, state_.obs.visit, timing_ll_); }

  void refresh_all_caches() {
    if (settings_.prior_only) {
      const std::size_t I = data_->size();
      dose_ll_.assign(I, 0.0);
      timing_ll_.assign(I, 0.0);
      long_ll_.assign(I, 0.0);
      surv_ll_.assign(I, 0.0);
      contexts_.resize(I);
      return;
    }
    refresh_dose_ll();
    refresh_long_ll();
    refresh_timing_ll();
    rebuild_contexts_and_surv();
  }

  double long_rss() const {
    const auto& data = *data_;
    const Vec beta = state_.obs.longitudinal.beta_l;
    double rss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const RandomEffects re{state_.b[i]};
      for (std::size_t j : long_rows_[i]) {
        const double mean = latent_mean(data[i].events[j].t, data[i].events[j - 1].d,
                                        data[i].x, state_.obs.longitudinal, re);
        const double resid = data[i].labs[j] - mean;
        rss += resid * resid;
      }
    }
    return rss;
  }

  void mark_gibbs(const std::string& name) {
    auto& b = blocks_[name];
    b.proposed++;
    b.accepted++;
  }

  // Shared random-walk Metropolis machinery for scalar blocks.
  void rw_scalar(const std::string& name, double& value, bool log_scale,
                 const std::function<double(double)>& log_prior, Touches touches,
                 RngStream& rng) {
    const double scale = scales_[name];
    const double old_value = value;
    const double proposal =
        log_scale ? old_value * std::exp(scale * rng.normal())
                  : old_value + scale * rng.normal();
    double log_ratio = log_prior(proposal) - log_prior(old_value);
    if (log_scale) log_ratio += std::log(proposal) - std::log(old_value);

    std::vector<double> surv_prop, timing_prop;
    std::vector<HazardContext> ctx_prop;
    if (!settings_.prior_only) {
      value = proposal;  // temporarily install to evaluate
      const bool context_changes = (touches == Touches::kBoth);
      if (touches == Touches::kSurvival) {
        eval_surv(contexts_, state_.obs.survival, surv_prop);
        log_ratio += sum_diff(surv_prop, surv_ll_);
      } else if (touches == Touches::kTiming) {
        eval_timing(state_.theta, state_.obs.visit, timing_prop);
        log_ratio += sum_diff(timing_prop, timing_ll_);
      } else {
        build_contexts(state_.obs.longitudinal, state_.obs.visit, ctx_prop);
        eval_surv(ctx_prop, state_.obs.survival, surv_prop);
        eval_timing(state_.theta, state_.obs.visit, timing_prop);
        log_ratio += sum_diff(surv_prop, surv_ll_) + sum_diff(timing_prop, timing_ll_);
      }
      value = old_value;
      (void)context_changes;
    }

    auto& bl = blocks_[name];
    bl.proposed++;
    const bool accept = std::log(rng.uniform01()) < log_ratio;
    if (accept) {
      bl.accepted++;
      value = proposal;
      if (!settings_.prior_only) {
        if (touches == Touches::kSurvival) {
          surv_ll_ = std::move(surv_prop);
        } else if (touches == Touches::kTiming) {
          timing_ll_ = std::move(timing_prop);
        } else {
          contexts_ = std::move(ctx_prop);
          surv_ll_ = std::move(surv_prop);
          timing_ll_ = std::move(timing_prop);
        }
      }
    }
    if (adapting_) {
      const double rate = std::min(1.0, std::exp(std::min(log_ratio, 0.0)));
      const double gain = 1.0 / std::pow(static_cast<double>(bl.proposed), 0.6);
      double ls = std::log(scales_[name]) + gain * (rate - 0.4);
      ls = std::clamp(ls, -14.0, 4.0);
      scales_[name] = std::exp(ls);
    }
    bl.scale = scales_[name];
  }

  const std::vector<PatientRecord>* data_;
  Hyperparameters hyper_;
  McmcSettings settings_;
  Eigen::Index n_cov_ = 0;
  ChainState state_;
  bool adapting_ = true;

  // Data summaries.
  Mat dose_gram_;
  Vec dose_cross_;
  double dose_yy_ = 0.0;
  long n_dose_rows_ = 0;
  Mat long_gram_;
  Vec long_cross_y_;
  long n_long_rows_ = 0;
  std::vector<std::vector<std::size_t>> long_rows_;
  std::vector<Mat> long_zr_;   // per patient: sum z r^T (scaled features)
  std::vector<Mat3> re_gram_;  // per patient: sum r r^T
  std::vector<Vec3> re_cross_y_;
  std::vector<Mat> re_rz_;     // per patient: sum r z^T

  // Likelihood caches.
  std::vector<double> dose_ll_, timing_ll_, long_ll_, surv_ll_;
  std::vector<HazardContext> contexts_;

  std::map<std::string, double> scales_;
  std::map<std::string, BlockStats> blocks_;
};

inline PosteriorDraws run_chain(const std::vector<PatientRecord>& data,
                                const Hyperparameters& hyper,
                                const McmcSettings& settings) {
  GibbsSampler sampler(data, hyper, settings);
  return sampler.run();
}

}  // namespace ctdtr
