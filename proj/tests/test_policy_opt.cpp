#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ctdtr/policy_opt.hpp"
#include "ctdtr/simulate.hpp"
#include "test_support.hpp"

using namespace ctdtr;

namespace {

// Analytically tractable rollout toy: visits never happen before death
// (mu very negative, xi ~ 0), the hazard depends only on the initial dose
// (beta_s2 = 1, omega = 1, h0 = c), and labs are noiseless. Then
//   T_hat = ln2 * exp(d0 + c),  R = log ln2 + c + d0,  d0 ~ N(m(theta), sigma_d2),
// so grad G = (0, 0, 0, 1, y0, x..., 0) exactly.
struct Toy {
  PolicyParams theta;
  ObservationParams phi;
  Vec x;
  double y0 = 5.0;
  Toy() : x(3) {
    x << 0.5, 1.0, -0.25;
    theta = default_policy_truths();
    theta.mu = -20.0;
    phi = default_observation_truths();
    phi.visit.xi = 1e-300;
    phi.longitudinal.Sigma_b = Mat3::Zero();
    phi.longitudinal.sigma_l2 = 1e-12;
    phi.longitudinal.beta_l = Vec::Zero(7);
    phi.survival = SurvivalParams{};
    phi.survival.omega = 1.0;
    phi.survival.beta_s2 = 1.0;
    phi.survival.h0 = 4.0;
  }
};

}  // namespace

TEST_CASE("gradient estimate is zero under a constant reward") {
  Toy toy;
  toy.phi.survival.beta_s2 = 0.0;  // hazard ignores the trajectory entirely
  std::vector<PosteriorDraw> draws(6, {toy.theta, toy.phi});
  const auto est = estimate_gradient(toy.theta, draws, toy.x, toy.y0, 42, 1, 1, 0,
                                     RewardSpec{}, 2);
  // The rewards agree to root-solve precision, so the baseline cancels the
  // estimate down to floating-point roundoff.
  REQUIRE(est.grad.norm() < 1e-9);
  REQUIRE(est.used == 6);
}

TEST_CASE("gradient estimate equals the reward-weighted score assembly") {
  // Replays the same derived streams and reassembles
  // sum (R_k - Rbar) g_k / (K - 1) by hand.
  Toy toy;
  std::vector<PosteriorDraw> draws(4, {toy.theta, toy.phi});
  const std::uint64_t master = 77, tag = 5, iter = 3;
  const auto est = estimate_gradient(toy.theta, draws, toy.x, toy.y0, master, tag,
                                     iter, 0, RewardSpec{}, 2);

  std::vector<double> rewards;
  std::vector<Vec> scores;
  for (std::uint64_t k = 0; k < 4; ++k) {
    RngStream rng = RngStream::derive(master, {tag, iter, k});
    Trajectory traj = simulate_trajectory(toy.theta, toy.phi, toy.x, toy.y0, rng);
    rewards.push_back(traj.reward);
    scores.push_back(decision_loglik_grad(traj.events, traj.labs, toy.x, traj.T,
                                          toy.theta, toy.phi.visit));
  }
  const double rbar = test_support::mean(rewards);
  Vec want = Vec::Zero(9);
  for (int k = 0; k < 4; ++k) want += (rewards[k] - rbar) * scores[k];
  want /= 3.0;
  REQUIRE((est.grad - want).norm() < 1e-12);
  REQUIRE(est.mean_reward == Catch::Approx(rbar).epsilon(1e-14));

  // Formula spot check with hand values: K = 2, R = (1, 3), g = ((1,0),(0,1))
  // gives ((1-2)*(1,0) + (3-2)*(0,1)) / (K-1) = (-1, 1); the mean-reward
  // weighting and centering below mirror that arithmetic.
  Vec g1(2), g2(2);
  g1 << 1, 0;
  g2 << 0, 1;
  const Vec hand = ((1.0 - 2.0) * g1 + (3.0 - 2.0) * g2) / 1.0;
  REQUIRE(hand[0] == -1.0);
  REQUIRE(hand[1] == 1.0);
}

TEST_CASE("baseline subtraction: unbiased mean, strictly smaller variance") {
  Toy toy;
  const int K = 8;
  const int reps = 10000;
  // True gradient coordinate for beta_d intercept is exactly 1.
  std::vector<double> with_b(reps), without_b(reps);
  for (int r = 0; r < reps; ++r) {
    std::vector<double> rewards(K);
    std::vector<double> score0(K);  // beta_d[0] coordinate = index 3
    for (int k = 0; k < K; ++k) {
      RngStream rng = RngStream::derive(1000, {static_cast<std::uint64_t>(r),
                                               static_cast<std::uint64_t>(k)});
      Trajectory traj = simulate_trajectory(toy.theta, toy.phi, toy.x, toy.y0, rng);
      rewards[k] = traj.reward;
      score0[k] = decision_loglik_grad(traj.events, traj.labs, toy.x, traj.T,
                                       toy.theta, toy.phi.visit)[3];
    }
    const double rbar = test_support::mean(rewards);
    double acc_with = 0.0, acc_without = 0.0;
    for (int k = 0; k < K; ++k) {
      acc_with += (rewards[k] - rbar) * score0[k];
      acc_without += rewards[k] * score0[k];
    }
    with_b[r] = acc_with / (K - 1);
    without_b[r] = acc_without / K;
  }
  const double m_with = test_support::mean(with_b);
  const double m_without = test_support::mean(without_b);
  const double v_with = test_support::sample_var(with_b);
  const double v_without = test_support::sample_var(without_b);
  const double se_combined = std::sqrt((v_with + v_without) / reps);
  REQUIRE(std::fabs(m_with - m_without) < 3.0 * se_combined);
  REQUIRE(v_with < v_without);
  // Both agree with the analytic gradient (= 1) within 4 standard errors.
  REQUIRE(std::fabs(m_with - 1.0) < 4.0 * std::sqrt(v_with / reps));
}

TEST_CASE("gradient expectation matches finite differences of the reward surface") {
  // Common-random-number finite difference of Gbar over the beta_d intercept:
  // with the toy's linear reward the FD is exactly 1 per replicate.
  Toy toy;
  const double h = 0.25;
  const int n = 4000;
  double fd_sum = 0.0;
  for (int r = 0; r < n; ++r) {
    RngStream rng_p = RngStream::derive(31, {static_cast<std::uint64_t>(r)});
    RngStream rng_m = RngStream::derive(31, {static_cast<std::uint64_t>(r)});
    PolicyParams tp = toy.theta, tm = toy.theta;
    tp.beta_d[0] += h;
    tm.beta_d[0] -= h;
    const double rp = simulate_trajectory(tp, toy.phi, toy.x, toy.y0, rng_p).reward;
    const double rm = simulate_trajectory(tm, toy.phi, toy.x, toy.y0, rng_m).reward;
    fd_sum += (rp - rm) / (2.0 * h);
  }
  const double fd = fd_sum / n;
  REQUIRE(fd == Catch::Approx(1.0).margin(1e-3));

  // Mean of score-function estimates agrees with the FD oracle within 3 SEs.
  std::vector<PosteriorDraw> draws(16, {toy.theta, toy.phi});
  std::vector<double> est(800);
  for (std::size_t r = 0; r < est.size(); ++r)
    est[r] = estimate_gradient(toy.theta, draws, toy.x, toy.y0, 999, 0, r, 0,
                               RewardSpec{}, 2)
                 .grad[3];
  const double m = test_support::mean(est);
  const double se = std::sqrt(test_support::sample_var(est) / est.size());
  REQUIRE(std::fabs(m - fd) < 3.0 * se);
}

TEST_CASE("adaptive step: window arithmetic and scale equivariance") {
  Vec g(2);
  g << 0.4, -2.0;
  // Constant gradient over a full window.
  std::vector<Vec> hist(50, g);
  const Vec s = adaptive_step(hist, g, 0.01, 50, false);
  REQUIRE(s[0] == Catch::Approx(0.01 / (std::sqrt(50.0) * 0.4)).epsilon(1e-12));
  REQUIRE(s[1] == Catch::Approx(0.01 / (std::sqrt(50.0) * 2.0)).epsilon(1e-12));

  // Doubling all past gradients halves the step.
  std::vector<Vec> hist2;
  for (const auto& v : hist) hist2.push_back(2.0 * v);
  const Vec s2 = adaptive_step(hist2, g, 0.01, 50, false);
  REQUIRE(s2[0] == Catch::Approx(0.5 * s[0]).epsilon(1e-12));
  REQUIRE(s2[1] == Catch::Approx(0.5 * s[1]).epsilon(1e-12));

  // Mixed history against a direct windowed-sum oracle; only the trailing
  // `window` entries count.
  std::vector<Vec> mixed;
  RngStream rng(3);
  for (int l = 0; l < 80; ++l) {
    Vec v(2);
    v << rng.normal(), 3.0 * rng.normal();
    mixed.push_back(v);
  }
  const Vec s3 = adaptive_step(mixed, g, 0.01, 50, false);
  for (int j = 0; j < 2; ++j) {
    double sum = 0.0;
    for (int l = 30; l < 80; ++l) sum += mixed[l][j] * mixed[l][j];
    REQUIRE(s3[j] == Catch::Approx(0.01 / std::sqrt(sum)).epsilon(1e-12));
  }

  // First step: no history, fall back to the current gradient.
  const Vec s4 = adaptive_step({}, g, 0.01, 50, false);
  REQUIRE(s4[0] == Catch::Approx(0.01 / (0.4 + 1e-8)).epsilon(1e-12));

  // Scalar variant divides by the windowed gradient norm.
  const Vec s5 = adaptive_step(hist, g, 0.01, 50, true);
  const double norm2 = 50.0 * g.squaredNorm();
  REQUIRE(s5[0] == Catch::Approx(0.01 / std::sqrt(norm2)).epsilon(1e-12));
  REQUIRE(s5[0] == s5[1]);
}

TEST_CASE("optimize: bookkeeping, masks, and determinism") {
  Toy toy;
  std::vector<PosteriorDraw> draws(8, {toy.theta, toy.phi});
  SgdConfig cfg;
  cfg.steps = 6;
  cfg.rollouts = 0;
  cfg.master_seed = 5;
  cfg.threads = 2;

  const OptResult res = optimize(toy.theta, draws, toy.x, toy.y0, cfg, 1);
  REQUIRE(res.iterations.size() == 7);  // M steps evaluate M + 1 iterates
  double best = res.iterations[0].mean_reward;
  for (const auto& it : res.iterations) best = std::max(best, it.mean_reward);
  REQUIRE(res.best_reward == best);
  REQUIRE(res.best_theta == res.iterations[res.best_index].theta);
  for (const auto& it : res.iterations)
    REQUIRE(std::exp(it.theta[8]) > 0.0);  // sigma_d2 positive throughout

  // Determinism.
  const OptResult res2 = optimize(toy.theta, draws, toy.x, toy.y0, cfg, 1);
  REQUIRE(res.best_theta == res2.best_theta);
  for (std::size_t m = 0; m < res.iterations.size(); ++m)
    REQUIRE(res.iterations[m].mean_reward == res2.iterations[m].mean_reward);

  // Masked coordinates are bitwise unchanged across iterations.
  SgdConfig visits_only = cfg;
  visits_only.mask = MaskKind::kVisitsOnly;
  const OptResult rv = optimize(toy.theta, draws, toy.x, toy.y0, visits_only, 1);
  const Vec t0 = policy_to_vector(toy.theta);
  for (const auto& it : rv.iterations)
    for (int j = 3; j < 9; ++j) REQUIRE(it.theta[j] == t0[j]);

  SgdConfig dosage_only = cfg;
  dosage_only.mask = MaskKind::kDosageOnly;
  const OptResult rd = optimize(toy.theta, draws, toy.x, toy.y0, dosage_only, 1);
  bool dosage_moved = false;
  for (const auto& it : rd.iterations) {
    for (int j = 0; j < 3; ++j) REQUIRE(it.theta[j] == t0[j]);
    if (it.theta.segment(3, 6) != t0.segment(3, 6)) dosage_moved = true;
  }
  REQUIRE(dosage_moved);

  // M = 1: both the start and the stepped point are recorded; the best of
  // the two wins.
  SgdConfig one = cfg;
  one.steps = 1;
  const OptResult r1 = optimize(toy.theta, draws, toy.x, toy.y0, one, 1);
  REQUIRE(r1.iterations.size() == 2);
  REQUIRE(r1.best_reward ==
          std::max(r1.iterations[0].mean_reward, r1.iterations[1].mean_reward));

  SgdConfig bad = cfg;
  bad.rollouts = 1;
  REQUIRE_THROWS_AS(optimize(toy.theta, draws, toy.x, toy.y0, bad, 1),
                    std::invalid_argument);
}

TEST_CASE("policy evaluation rollouts: determinism and fixed schedules") {
  Toy toy;
  std::vector<PosteriorDraw> draws(5, {toy.theta, toy.phi});
  const auto a = evaluate_policy_rollouts(toy.theta, draws, toy.x, toy.y0, 40, 11,
                                          RewardSpec{}, 1);
  const auto b = evaluate_policy_rollouts(toy.theta, draws, toy.x, toy.y0, 40, 11,
                                          RewardSpec{}, 2);
  REQUIRE(a.size() == 40);
  for (std::size_t r = 0; r < a.size(); ++r) {
    REQUIRE(a[r].reward == b[r].reward);
    REQUIRE(a[r].median_survival == b[r].median_survival);
  }
  // Fixed schedule rollouts visit on the grid.
  const auto fixed = evaluate_policy_rollouts(
      default_policy_truths(), {{default_policy_truths(), default_observation_truths()}},
      toy.x, toy.y0, 10, 13, RewardSpec{}, 2, 91.0);
  for (const auto& r : fixed) REQUIRE(r.visits >= 0);
}
