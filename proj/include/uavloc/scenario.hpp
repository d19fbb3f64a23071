#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "uavloc/channel.hpp"
#include "uavloc/em.hpp"
#include "uavloc/geometry.hpp"
#include "uavloc/measurement.hpp"
#include "uavloc/pipeline.hpp"
#include "uavloc/slam.hpp"

namespace uavloc {

enum class PlannerMode { kOptimized, kRandomRectangle, kStaticBsOnly };
enum class EstimatorMode { kFull, kRssOnly };

inline const char* to_string(PlannerMode m) {
  switch (m) {
    case PlannerMode::kOptimized: return "optimized";
    case PlannerMode::kRandomRectangle: return "random-rectangle";
    case PlannerMode::kStaticBsOnly: return "static-bs-only";
  }
  return "?";
}
inline const char* to_string(EstimatorMode m) {
  return m == EstimatorMode::kFull ? "full" : "rss-only";
}

// A complete experiment description. Defaults reproduce the dense-urban
// reference setting: 8 users, 3 BSs at 25 m, UAV at 80 m, 1000 m budget.
// Shadowing and odometry entries are variances in the quoted unit
// (sigma^2 = 2 dB, 5 dB; sigma_gps^2 = 5 m; sigma_vel^2 = 0.2 m/s) while the
// ToA entries are stds in meters (sigma_tau = 2 m LoS, 40 m NLoS).
struct Scenario {
  CityConfig city;
  std::uint64_t map_seed = 1;
  std::string map_file;  // when set, load the map instead of generating

  std::vector<Eigen::Vector3d> bs_sites{{100.0, 100.0, 25.0},
                                        {400.0, 130.0, 25.0},
                                        {150.0, 400.0, 25.0}};
  int n_users = 8;
  std::vector<Eigen::Vector2d> user_positions;  // when set, fixed placement

  ChannelParams channel = [] {
    ChannelParams p;
    p.los = {-22.0, -32.0, std::sqrt(2.0), 0.0, 2.0};
    p.nlos = {-32.0, -35.0, std::sqrt(5.0), 50.0, 40.0};
    p.pi_los = 0.5;
    return p;
  }();
  OdometryNoise odometry;

  double budget_m = 1000.0;
  int n_epochs = 100;
  double uav_altitude = 80.0;
  Eigen::Vector3d x_start{300.0, 400.0, 80.0};
  Eigen::Vector3d x_end{300.0, 400.0, 80.0};

  PlannerMode planner_mode = PlannerMode::kOptimized;
  EstimatorMode estimator_mode = EstimatorMode::kFull;
  LosPredictorParams predictor;
  double prior_fim_eps = 1e-4;

  EmConfig em;
  SolverConfig solver;
  int max_outer = 10;
  double outer_tol = 1e-3;
  double grid_pitch = 10.0;

  std::vector<std::uint64_t> seeds;  // optional embedded seed list

  double d_max() const { return budget_m / static_cast<double>(n_epochs); }

  Algorithm1Config estimator_config() const {
    Algorithm1Config cfg;
    cfg.em = em;
    cfg.solver = solver;
    cfg.noise = odometry;
    cfg.uav_altitude = uav_altitude;
    cfg.max_outer = max_outer;
    cfg.outer_tol = outer_tol;
    cfg.grid_pitch = grid_pitch;
    cfg.use_toa_blocks = estimator_mode == EstimatorMode::kFull;
    return cfg;
  }
};

// Rectangle of matched total length centered in the area, traversed
// counter-clockwise from the lower-left corner in equal steps.
inline std::vector<Eigen::Vector3d> rectangle_trajectory(const Rect& area,
                                                         double budget_m, int n_epochs,
                                                         double altitude) {
  const double side = budget_m / 4.0;
  const double cx = 0.5 * (area.x_min + area.x_max);
  const double cy = 0.5 * (area.y_min + area.y_max);
  const Eigen::Vector2d corner(cx - side / 2.0, cy - side / 2.0);

  auto point_at = [&](double arc) {
    arc = std::fmod(arc, 4.0 * side);
    if (arc < side) return Eigen::Vector2d(corner.x() + arc, corner.y());
    if (arc < 2.0 * side) return Eigen::Vector2d(corner.x() + side, corner.y() + arc - side);
    if (arc < 3.0 * side)
      return Eigen::Vector2d(corner.x() + side - (arc - 2.0 * side), corner.y() + side);
    return Eigen::Vector2d(corner.x(), corner.y() + side - (arc - 3.0 * side));
  };

  std::vector<Eigen::Vector3d> traj;
  traj.reserve(n_epochs);
  const double step = budget_m / static_cast<double>(n_epochs);
  for (int i = 0; i < n_epochs; ++i) {
    const Eigen::Vector2d p = point_at(i * step);
    traj.emplace_back(p.x(), p.y(), altitude);
  }
  return traj;
}

}  // namespace uavloc
