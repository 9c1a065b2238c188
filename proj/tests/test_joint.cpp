#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ctdtr/joint.hpp"
#include "ctdtr/rng.hpp"
#include "ctdtr/simulate.hpp"
#include "test_support.hpp"

using namespace ctdtr;

namespace {

PatientRecord toy_record() {
  PatientRecord rec;
  rec.id = "toy";
  rec.x = Vec(3);
  rec.x << 0.4, 1.0, -0.3;
  rec.events = {{0.0, 1.5}, {40.0, 2.4}, {120.0, 1.1}};
  rec.labs = {5.0, 5.6, 5.2};
  rec.t_tilde = 700.0;
  rec.delta = 1;
  return rec;
}

}  // namespace

TEST_CASE("joint log-likelihood is the exact ordered sum of its parts") {
  const PatientRecord rec = toy_record();
  const PolicyParams theta = default_policy_truths();
  const ObservationParams phi = default_observation_truths();
  RandomEffects re;
  re.b << 0.1, -0.05, 2e-5;

  for (ModelVariant v : {ModelVariant::kJoint, ModelVariant::kSls}) {
    const double dec =
        decision_loglik(rec.events, rec.labs, rec.x, rec.t_tilde, theta, phi.visit);
    const double lng = long_loglik(rec, phi.longitudinal, re);
    HazardContext ctx(rec.events, rec.labs, rec.x, re, phi.longitudinal, phi.visit, v);
    const double srv = survival_loglik(rec, ctx, phi.survival);
    // Bitwise equality: same summation order as the implementation.
    REQUIRE(joint_loglik(rec, theta, phi, re, v) == dec + lng + srv);
  }
}

TEST_CASE("joint and SLS coincide in the noiseless constant-process limit") {
  // With sigma_l2 -> 0, Sigma_b = 0, and a flat latent process, the observed
  // labs equal y*(t) everywhere and the two hazards are identical.
  PatientRecord rec = toy_record();
  const PolicyParams theta = default_policy_truths();
  ObservationParams phi = default_observation_truths();
  phi.longitudinal.sigma_l2 = 1e-12;
  phi.longitudinal.Sigma_b = Mat3::Zero();
  phi.longitudinal.beta_l = Vec::Zero(7);
  phi.longitudinal.beta_l[0] = 5.4;  // y* == 5.4 regardless of dose and time
  RandomEffects re;  // zero
  for (auto& lab : rec.labs) lab = 5.4;

  const double a = joint_loglik(rec, theta, phi, re, ModelVariant::kJoint);
  const double b = joint_loglik(rec, theta, phi, re, ModelVariant::kSls);
  REQUIRE(a == Catch::Approx(b).epsilon(1e-10));
}

TEST_CASE("waic: zero penalty, hand oracle, and permutation invariance") {
  // All draws identical: WAIC = -2 * sum ll.
  Mat pw(3, 2);
  pw << -1.0, -2.0, -1.0, -2.0, -1.0, -2.0;
  REQUIRE(waic(pw) == Catch::Approx(6.0).epsilon(1e-12));

  // 2x1 toy: lppd = log((1 + e^-1)/2), penalty 0.5.
  Mat toy(2, 1);
  toy << 0.0, -1.0;
  const double lppd = std::log((1.0 + std::exp(-1.0)) / 2.0);
  REQUIRE(waic(toy) == Catch::Approx(-2.0 * (lppd - 0.5)).epsilon(1e-12));
  REQUIRE(waic(toy) == Catch::Approx(1.7597709860834450).epsilon(1e-12));

  Mat one(1, 1);
  one << -1.0;
  REQUIRE_THROWS_AS(waic(one), std::invalid_argument);

  // Permuting patients and draws leaves WAIC unchanged.
  RngStream rng(5);
  Mat m(6, 4);
  for (int k = 0; k < 6; ++k)
    for (int n = 0; n < 4; ++n) m(k, n) = -5.0 + rng.normal();
  Mat perm_rows = m;
  perm_rows.row(0).swap(perm_rows.row(3));
  perm_rows.row(2).swap(perm_rows.row(5));
  Mat perm_cols = m;
  perm_cols.col(1).swap(perm_cols.col(2));
  REQUIRE(waic(m) == Catch::Approx(waic(perm_rows)).epsilon(1e-14));
  REQUIRE(waic(m) == Catch::Approx(waic(perm_cols)).epsilon(1e-14));
}
