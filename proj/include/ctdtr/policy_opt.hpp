#pragma once

// Score-function policy gradient over simulated trajectories, integrating
// over posterior draws of the observation parameters: one rollout per draw,
// reward-weighted gradients of the decision log-density with the mean reward
// subtracted as a baseline, and a windowed adaptive step size
//   s_m = step_scale / sqrt(sum over the last `window` squared gradients),
// read per coordinate by default (a config flag switches to the scalar
// squared-norm reading). The best iterate by mean reward is returned.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctdtr/common.hpp"
#include "ctdtr/draws.hpp"
#include "ctdtr/mtpp.hpp"
#include "ctdtr/parallel.hpp"
#include "ctdtr/rng.hpp"
#include "ctdtr/simulate.hpp"

namespace ctdtr {

enum class MaskKind { kBoth, kVisitsOnly, kDosageOnly };

inline MaskKind mask_from_string(const std::string& s) {
  if (s == "both") return MaskKind::kBoth;
  if (s == "visits") return MaskKind::kVisitsOnly;
  if (s == "dosage") return MaskKind::kDosageOnly;
  throw std::invalid_argument("unknown mask: " + s);
}

struct SgdConfig {
  int steps = 1000;    // M ascent steps; M+1 iterates get evaluated
  int rollouts = 0;    // K; 0 or == draw count means one rollout per draw
  double step_scale = 0.01;
  int window = 50;
  MaskKind mask = MaskKind::kBoth;
  std::uint64_t master_seed = 1;
  unsigned threads = 1;
  bool scalar_step = false;
  RewardSpec reward;

  void validate() const {
    require(steps >= 1, "SgdConfig: steps must be >= 1");
    require(window >= 1, "SgdConfig: window must be >= 1");
    require(rollouts == 0 || rollouts >= 2,
            "SgdConfig: baseline subtraction needs >= 2 rollouts");
  }
};

// Flat parameter layout used by the optimizer and the gradient:
// (nu1, nu2, mu, beta_d..., log sigma_d2).
inline Vec policy_to_vector(const PolicyParams& p) {
  Vec v(3 + p.beta_d.size() + 1);
  v[0] = p.nu1;
  v[1] = p.nu2;
  v[2] = p.mu;
  v.segment(3, p.beta_d.size()) = p.beta_d;
  v[3 + p.beta_d.size()] = std::log(p.sigma_d2);
  return v;
}

inline PolicyParams vector_to_policy(const Vec& v) {
  PolicyParams p;
  const Eigen::Index nb = v.size() - 4;
  require(nb >= 2, "vector_to_policy: vector too short");
  p.nu1 = v[0];
  p.nu2 = v[1];
  p.mu = v[2];
  p.beta_d = v.segment(3, nb);
  p.sigma_d2 = std::exp(v[3 + nb]);
  return p;
}

// true = coordinate is optimized under the mask.
inline std::vector<bool> mask_pattern(MaskKind mask, Eigen::Index dim) {
  std::vector<bool> live(dim, true);
  if (mask == MaskKind::kVisitsOnly)
    for (Eigen::Index i = 3; i < dim; ++i) live[i] = false;  // freeze dosage block
  if (mask == MaskKind::kDosageOnly)
    for (Eigen::Index i = 0; i < 3; ++i) live[i] = false;  // freeze visit block
  return live;
}

struct GradientEstimate {
  Vec grad;
  double mean_reward = 0.0;
  int used = 0;
  int capped = 0;
};

// One Monte Carlo gradient at theta: for each k, a trajectory under
// (theta, phi^(k)), its reward, and the decision-score gradient on the
// realized events up to the sampled death. Capped trajectories are excluded.
inline GradientEstimate estimate_gradient(
    const PolicyParams& theta, const std::vector<PosteriorDraw>& draws,
    const Vec& x, double y0, std::uint64_t master_seed, std::uint64_t patient_tag,
    std::uint64_t iteration, int rollouts, const RewardSpec& reward_spec,
    unsigned threads) {
  require(!draws.empty(), "estimate_gradient: no posterior draws");
  const int n_draws = static_cast<int>(draws.size());
  const int K = (rollouts == 0) ? n_draws : rollouts;
  require(K >= 2, "estimate_gradient: needs K >= 2 for baseline subtraction");
  const Eigen::Index dim = 3 + theta.beta_d.size() + 1;

  std::vector<double> rewards(K, 0.0);
  std::vector<char> ok(K, 0);
  std::vector<Vec> scores(K);
  parallel_for(static_cast<std::size_t>(K), threads, [&](std::size_t k) {
    RngStream rng = RngStream::derive(
        master_seed, {patient_tag, iteration, static_cast<std::uint64_t>(k)});
    const int idx = (K == n_draws)
                        ? static_cast<int>(k)
                        : static_cast<int>(rng.bits() % static_cast<std::uint64_t>(n_draws));
    const ObservationParams& phi = draws[idx].obs;
    Trajectory traj = simulate_trajectory(theta, phi, x, y0, rng, reward_spec);
    if (traj.capped) return;  // excluded from the estimate
    rewards[k] = traj.reward;
    scores[k] = decision_loglik_grad(traj.events, traj.labs, x, traj.T, theta,
                                     phi.visit);
    ok[k] = 1;
  });

  GradientEstimate est;
  est.grad = Vec::Zero(dim);
  double sum_r = 0.0;
  for (int k = 0; k < K; ++k) {
    if (!ok[k]) {
      est.capped++;
      continue;
    }
    est.used++;
    sum_r += rewards[k];
  }
  require(est.used >= 2, "estimate_gradient: fewer than 2 usable rollouts");
  est.mean_reward = sum_r / est.used;
  for (int k = 0; k < K; ++k)
    if (ok[k]) est.grad += (rewards[k] - est.mean_reward) * scores[k];
  // Normalizing the centered sum by (used - 1) — the sample covariance of
  // (reward, score) — makes the baseline-subtracted estimator exactly
  // unbiased; the 1/K normalization would carry a (1 - 1/K) scale factor.
  est.grad /= static_cast<double>(est.used - 1);
  return est;
}

// Windowed adaptive step. `history` holds past gradients (oldest first);
// only the trailing `window` entries count. With no usable history the step
// falls back to step_scale / (|g| + 1e-8).
inline Vec adaptive_step(const std::vector<Vec>& history, const Vec& current_grad,
                         double step_scale, int window, bool scalar_step) {
  const Eigen::Index dim = current_grad.size();
  Vec step(dim);
  const std::size_t n = history.size();
  const std::size_t lo = (n > static_cast<std::size_t>(window)) ? n - window : 0;
  if (scalar_step) {
    double sum = 0.0;
    for (std::size_t l = lo; l < n; ++l) sum += history[l].squaredNorm();
    const double denom =
        (sum > 0.0) ? std::sqrt(sum) : current_grad.norm() + 1e-8;
    step.setConstant(step_scale / denom);
    return step;
  }
  for (Eigen::Index j = 0; j < dim; ++j) {
    double sum = 0.0;
    for (std::size_t l = lo; l < n; ++l) sum += history[l][j] * history[l][j];
    const double denom =
        (sum > 0.0) ? std::sqrt(sum) : std::fabs(current_grad[j]) + 1e-8;
    step[j] = step_scale / denom;
  }
  return step;
}

struct OptIteration {
  Vec theta;
  double mean_reward = 0.0;
  double grad_norm = 0.0;
  int capped = 0;
};

struct OptResult {
  std::vector<OptIteration> iterations;
  int best_index = 0;  // argmax of mean reward
  Vec theta0;
  Vec best_theta;
  double best_reward = 0.0;
  long total_capped = 0;

  PolicyParams best_policy() const { return vector_to_policy(best_theta); }
};

// M ascent steps from theta0; the mean reward of every visited iterate
// (including the post-step final one) is recorded and the argmax wins.
// Masked coordinates have their gradient zeroed and are never moved.
inline OptResult optimize(const PolicyParams& theta0,
                          const std::vector<PosteriorDraw>& draws, const Vec& x,
                          double y0, const SgdConfig& cfg,
                          std::uint64_t patient_tag = 0) {
  cfg.validate();
  theta0.validate();
  OptResult out;
  out.theta0 = policy_to_vector(theta0);
  const Eigen::Index dim = out.theta0.size();
  const std::vector<bool> live = mask_pattern(cfg.mask, dim);

  Vec theta = out.theta0;
  std::vector<Vec> history;
  history.reserve(cfg.steps);
  for (int m = 1; m <= cfg.steps + 1; ++m) {
    GradientEstimate est = estimate_gradient(
        vector_to_policy(theta), draws, x, y0, cfg.master_seed, patient_tag,
        static_cast<std::uint64_t>(m), cfg.rollouts, cfg.reward, cfg.threads);
    for (Eigen::Index j = 0; j < dim; ++j)
      if (!live[j]) est.grad[j] = 0.0;
    out.iterations.push_back({theta, est.mean_reward, est.grad.norm(), est.capped});
    out.total_capped += est.capped;
    if (m > cfg.steps) break;
    const Vec step =
        adaptive_step(history, est.grad, cfg.step_scale, cfg.window, cfg.scalar_step);
    history.push_back(est.grad);
    Vec next = theta;
    for (Eigen::Index j = 0; j < dim; ++j)
      if (live[j]) next[j] += step[j] * est.grad[j];
    theta = next;
  }

  out.best_index = 0;
  for (std::size_t m = 1; m < out.iterations.size(); ++m)
    if (out.iterations[m].mean_reward > out.iterations[out.best_index].mean_reward)
      out.best_index = static_cast<int>(m);
  out.best_theta = out.iterations[out.best_index].theta;
  out.best_reward = out.iterations[out.best_index].mean_reward;
  return out;
}

struct EvalRollout {
  double reward = 0.0;
  double median_survival = 0.0;
  double survival = 0.0;
  int visits = 0;
  bool capped = false;
};

// Repeated rollouts of a policy (MTPP-driven, or a fixed visit schedule when
// `fixed_interval` is set) with observation draws resampled per repetition.
inline std::vector<EvalRollout> evaluate_policy_rollouts(
    const PolicyParams& theta, const std::vector<PosteriorDraw>& draws,
    const Vec& x, double y0, int reps, std::uint64_t seed,
    const RewardSpec& reward_spec, unsigned threads,
    std::optional<double> fixed_interval = std::nullopt) {
  require(reps >= 1, "evaluate_policy_rollouts: reps must be >= 1");
  require(!draws.empty(), "evaluate_policy_rollouts: no posterior draws");
  std::vector<EvalRollout> out(reps);
  parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
    RngStream rng = RngStream::derive(seed, {fnv1a64("eval"), r});
    const int idx =
        static_cast<int>(rng.bits() % static_cast<std::uint64_t>(draws.size()));
    const ObservationParams& phi = draws[idx].obs;
    Trajectory traj =
        fixed_interval
            ? fixed_schedule_rollout(*fixed_interval, theta, phi, x, y0, rng,
                                     reward_spec)
            : simulate_trajectory(theta, phi, x, y0, rng, reward_spec);
    out[r] = {traj.reward, traj.median_survival, traj.T, traj.J, traj.capped};
  });
  return out;
}

}  // namespace ctdtr
