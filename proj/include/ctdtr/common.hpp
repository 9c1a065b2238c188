#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ctdtr {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Hard cap on any simulated or root-solved time, in days. Trajectories or
// root searches reaching the cap are flagged as "survived to the cap".
inline constexpr double kTimeCapDays = 30000.0;

// Absolute tolerance (days) for inverse-transform root solves.
inline constexpr double kRootTolDays = 1e-6;

// Per-segment absolute tolerance for cumulative-hazard quadrature.
inline constexpr double kHazardQuadTol = 1e-8;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace ctdtr
