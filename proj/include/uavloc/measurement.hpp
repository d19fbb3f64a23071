#pragma once

#include <Eigen/Core>
#include <random>
#include <stdexcept>
#include <vector>

#include "uavloc/channel.hpp"
#include "uavloc/geometry.hpp"

namespace uavloc {

// One radio link sample: gain and ToA range drawn under the same LoS/NLoS
// state. true_los is simulation ground truth, hidden from estimators.
struct LinkMeasurement {
  double gain = 0.0;
  double toa_range = 0.0;
  bool true_los = true;
};

// Row-major rows x cols grid of link measurements.
struct LinkGrid {
  int rows = 0;
  int cols = 0;
  std::vector<LinkMeasurement> items;

  const LinkMeasurement& at(int r, int c) const { return items[r * cols + c]; }
  LinkMeasurement& at(int r, int c) { return items[r * cols + c]; }
  int count() const { return static_cast<int>(items.size()); }
  void append_row(const std::vector<LinkMeasurement>& row) {
    if (cols == 0) cols = static_cast<int>(row.size());
    if (static_cast<int>(row.size()) != cols)
      throw std::invalid_argument("LinkGrid: inconsistent row width");
    items.insert(items.end(), row.begin(), row.end());
    ++rows;
  }
};

struct OdometryNoise {
  double sigma_gps = std::sqrt(5.0);  // meters, per horizontal axis
  double sigma_vel = std::sqrt(0.2);  // meters/second, per horizontal axis
  double dt = 1.0;                    // seconds per time step
};

// The full measurement record of a mission: odometry plus the three link
// families. vel[i] is the velocity measured over step i -> i+1, so there
// are N-1 entries for N epochs.
struct MeasurementSet {
  std::vector<Eigen::Vector3d> gps;
  std::vector<Eigen::Vector2d> vel;
  LinkGrid uav_ue;  // N x K
  LinkGrid bs_uav;  // N x M
  LinkGrid bs_ue;   // M x K

  int n_epochs() const { return static_cast<int>(gps.size()); }
  int n_users() const { return uav_ue.rows > 0 ? uav_ue.cols : bs_ue.cols; }
  int n_bs() const { return bs_ue.rows > 0 ? bs_ue.rows : bs_uav.cols; }
};

// GPS fixes on the horizontal components; altitude is known exactly.
// Velocity is the per-step finite difference plus IMU noise.
inline std::pair<std::vector<Eigen::Vector3d>, std::vector<Eigen::Vector2d>>
sample_odometry(const OdometryNoise& noise,
                const std::vector<Eigen::Vector3d>& true_traj,
                std::mt19937_64& rng) {
  if (true_traj.size() < 2)
    throw std::invalid_argument("sample_odometry: trajectory shorter than 2");
  std::normal_distribution<double> gps_noise(0.0, noise.sigma_gps);
  std::normal_distribution<double> vel_noise(0.0, noise.sigma_vel);

  std::vector<Eigen::Vector3d> gps;
  gps.reserve(true_traj.size());
  for (const auto& x : true_traj) {
    Eigen::Vector3d g = x;
    if (noise.sigma_gps > 0.0) {
      g.x() += gps_noise(rng);
      g.y() += gps_noise(rng);
    }
    gps.push_back(g);
  }

  std::vector<Eigen::Vector2d> vel;
  vel.reserve(true_traj.size() - 1);
  for (std::size_t n = 1; n < true_traj.size(); ++n) {
    Eigen::Vector2d v =
        (true_traj[n].head<2>() - true_traj[n - 1].head<2>()) / noise.dt;
    if (noise.sigma_vel > 0.0) {
      v.x() += vel_noise(rng);
      v.y() += vel_noise(rng);
    }
    vel.push_back(v);
  }
  return {std::move(gps), std::move(vel)};
}

inline LinkMeasurement sample_link(const UrbanMap& map, const ChannelParams& params,
                                   const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                   std::mt19937_64& rng) {
  const bool los = is_los(map, a, b);
  const double d = (a - b).norm();
  LinkMeasurement m;
  m.true_los = los;
  m.gain = sample_gain(params, d, los, rng);
  m.toa_range = sample_toa_range(params, d, los, rng);
  return m;
}

// Synthesizes a whole mission: for every pair the true link state is looked
// up once and both gain and ToA are drawn under it.
inline MeasurementSet collect_mission(const UrbanMap& map, const ChannelParams& params,
                                      const OdometryNoise& noise,
                                      const std::vector<Eigen::Vector3d>& traj,
                                      const std::vector<Eigen::Vector2d>& users,
                                      std::mt19937_64& rng) {
  MeasurementSet set;
  const int n = static_cast<int>(traj.size());
  const int k = static_cast<int>(users.size());
  const int m = static_cast<int>(map.bs_sites.size());

  if (n >= 2) {
    auto [gps, vel] = sample_odometry(noise, traj, rng);
    set.gps = std::move(gps);
    set.vel = std::move(vel);
  } else if (n == 1) {
    set.gps.push_back(traj[0]);
    if (noise.sigma_gps > 0.0) {
      std::normal_distribution<double> gn(0.0, noise.sigma_gps);
      set.gps[0].x() += gn(rng);
      set.gps[0].y() += gn(rng);
    }
  }

  set.uav_ue.cols = k;
  set.bs_uav.cols = m;
  set.bs_ue.cols = k;
  for (int i = 0; i < n; ++i) {
    std::vector<LinkMeasurement> ue_row(k), bs_row(m);
    for (int j = 0; j < k; ++j) {
      const Eigen::Vector3d u(users[j].x(), users[j].y(), 0.0);
      ue_row[j] = sample_link(map, params, traj[i], u, rng);
    }
    for (int j = 0; j < m; ++j)
      bs_row[j] = sample_link(map, params, map.bs_sites[j], traj[i], rng);
    if (k > 0) set.uav_ue.append_row(ue_row);
    if (m > 0) set.bs_uav.append_row(bs_row);
  }
  for (int i = 0; i < m; ++i) {
    std::vector<LinkMeasurement> row(k);
    for (int j = 0; j < k; ++j) {
      const Eigen::Vector3d u(users[j].x(), users[j].y(), 0.0);
      row[j] = sample_link(map, params, map.bs_sites[i], u, rng);
    }
    if (k > 0) set.bs_ue.append_row(row);
  }
  return set;
}

}  // namespace uavloc
