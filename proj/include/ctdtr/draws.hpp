#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ctdtr/common.hpp"
#include "ctdtr/joint.hpp"
#include "ctdtr/mtpp.hpp"

namespace ctdtr {

struct PosteriorDraw {
  PolicyParams theta;
  ObservationParams obs;
};

struct BlockStats {
  long proposed = 0;
  long accepted = 0;
  double scale = 0.0;
  double rate() const {
    return proposed ? static_cast<double>(accepted) / proposed : 0.0;
  }
};

struct PosteriorDraws {
  std::vector<PosteriorDraw> draws;
  Mat pointwise_loglik;  // K x N, whole-patient joint log-likelihood
  std::map<std::string, BlockStats> acceptance;
  ModelVariant variant = ModelVariant::kJoint;
  std::uint64_t seed = 0;
  int iters = 0;
  int burnin = 0;
  int thin = 1;

  // Coordinate-wise posterior means of the policy block, the usual starting
  // point for optimization.
  PolicyParams posterior_mean_theta() const {
    require(!draws.empty(), "posterior_mean_theta: no draws");
    PolicyParams m = draws.front().theta;
    m.nu1 = m.nu2 = m.mu = 0.0;
    m.beta_d.setZero();
    m.sigma_d2 = 0.0;
    for (const auto& d : draws) {
      m.nu1 += d.theta.nu1;
      m.nu2 += d.theta.nu2;
      m.mu += d.theta.mu;
      m.beta_d += d.theta.beta_d;
      m.sigma_d2 += d.theta.sigma_d2;
    }
    const double k = static_cast<double>(draws.size());
    m.nu1 /= k;
    m.nu2 /= k;
    m.mu /= k;
    m.beta_d /= k;
    m.sigma_d2 /= k;
    return m;
  }
};

}  // namespace ctdtr
