#pragma once

#include <optional>
#include <random>
#include <vector>

#include "uavloc/pipeline.hpp"
#include "uavloc/planner.hpp"

namespace uavloc {

struct MissionEpoch {
  int n = 0;  // 1-based epoch index
  Eigen::Vector3d true_pos = Eigen::Vector3d::Zero();
  Eigen::Vector2d est_pos = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> user_ests;
  double crb_trace = 0.0;
};

struct MissionRecord {
  std::vector<Eigen::Vector3d> true_traj;
  std::vector<MissionEpoch> epochs;
  MeasurementSet measurements;
  Algorithm1Result estimate;  // final full-data estimate
  int solver_failures = 0;
};

namespace detail {

// Draws one epoch of measurements in place: GPS fix, velocity from the last
// step, and the UAV link rows. BS-user links are static and drawn once.
inline void append_epoch(MeasurementSet& set, const UrbanMap& map,
                         const ChannelParams& params, const OdometryNoise& noise,
                         const std::vector<Eigen::Vector3d>& traj,
                         const std::vector<Eigen::Vector2d>& users,
                         std::mt19937_64& rng) {
  const int n = static_cast<int>(traj.size());
  const Eigen::Vector3d& x = traj.back();
  std::normal_distribution<double> gps_noise(0.0, noise.sigma_gps);
  std::normal_distribution<double> vel_noise(0.0, noise.sigma_vel);

  Eigen::Vector3d g = x;
  if (noise.sigma_gps > 0.0) {
    g.x() += gps_noise(rng);
    g.y() += gps_noise(rng);
  }
  set.gps.push_back(g);
  if (n >= 2) {
    Eigen::Vector2d v = (traj[n - 1].head<2>() - traj[n - 2].head<2>()) / noise.dt;
    if (noise.sigma_vel > 0.0) {
      v.x() += vel_noise(rng);
      v.y() += vel_noise(rng);
    }
    set.vel.push_back(v);
  }

  const int k = static_cast<int>(users.size());
  const int m = static_cast<int>(map.bs_sites.size());
  set.uav_ue.cols = k;
  set.bs_uav.cols = m;
  set.bs_ue.cols = k;
  if (k > 0) {
    std::vector<LinkMeasurement> row(k);
    for (int j = 0; j < k; ++j)
      row[j] = sample_link(map, params,
                           x, Eigen::Vector3d(users[j].x(), users[j].y(), 0.0), rng);
    set.uav_ue.append_row(row);
  }
  if (m > 0) {
    std::vector<LinkMeasurement> row(m);
    for (int j = 0; j < m; ++j)
      row[j] = sample_link(map, params, map.bs_sites[j], x, rng);
    set.bs_uav.append_row(row);
  }
  if (n == 1 && k > 0 && m > 0) {
    for (int i = 0; i < m; ++i) {
      std::vector<LinkMeasurement> row(k);
      for (int j = 0; j < k; ++j)
        row[j] = sample_link(map, params, map.bs_sites[i],
                             Eigen::Vector3d(users[j].x(), users[j].y(), 0.0), rng);
      set.bs_ue.append_row(row);
    }
  }
}

// Information held at the current step: diagonal prior, the static BS-user
// links, and every UAV epoch so far, all evaluated at the current estimates
// with the classifier's hard labels.
inline FimState rebuild_fim(const MeasurementSet& set, const UrbanMap& map,
                            const Algorithm1Result& est, double prior_eps,
                            double min_distance) {
  const int k = est.state.n_users;
  FimState fim = FimState::prior(k, prior_eps);
  std::vector<Eigen::Matrix2d> contrib(k, Eigen::Matrix2d::Zero());
  for (int i = 0; i < set.bs_ue.rows; ++i)
    for (int j = 0; j < k; ++j) {
      const double w = est.labels.w_bs_ue[i * k + j] ? 1.0 : 0.0;
      contrib[j] += fim_contribution(map.bs_sites[i], est.state.user(j), w,
                                     est.params, min_distance);
    }
  for (int i = 0; i < set.uav_ue.rows; ++i)
    for (int j = 0; j < k; ++j) {
      const double w = est.labels.w_uav_ue[i * k + j] ? 1.0 : 0.0;
      contrib[j] += fim_contribution(est.state.uav3(i), est.state.user(j), w,
                                     est.params, min_distance);
    }
  fim = fim_accumulate(fim, contrib);
  fim.n = set.n_epochs();
  return fim;
}

}  // namespace detail

// Online mission: plan a step, fly it, collect measurements, re-estimate
// everything on all data so far, update the information state, repeat. The
// commanded trajectory is flown exactly; only the measurements are noisy.
inline MissionRecord run_mission_online(const UrbanMap& map,
                                        const std::vector<Eigen::Vector2d>& true_users,
                                        const ChannelParams& params_true,
                                        const OdometryNoise& noise,
                                        const LosPredictorParams& predictor,
                                        const PlannerConfig& planner_cfg,
                                        const Algorithm1Config& a1_cfg,
                                        std::mt19937_64& rng) {
  MissionRecord rec;
  rec.true_traj.push_back(planner_cfg.x_start);
  detail::append_epoch(rec.measurements, map, params_true, noise, rec.true_traj,
                       true_users, rng);

  std::optional<WarmStart> warm;
  rec.estimate = run_algorithm1(rec.measurements, map, a1_cfg, warm,
                                static_cast<int>(true_users.size()));
  warm = WarmStart{rec.estimate.state, rec.estimate.params};
  FimState fim = detail::rebuild_fim(rec.measurements, map, rec.estimate,
                                     planner_cfg.prior_fim_eps,
                                     a1_cfg.solver.min_distance);

  auto record_epoch = [&](int n) {
    MissionEpoch e;
    e.n = n;
    e.true_pos = rec.true_traj[n - 1];
    e.est_pos = rec.estimate.state.uav(n - 1);
    e.user_ests.resize(rec.estimate.state.n_users);
    for (int j = 0; j < rec.estimate.state.n_users; ++j)
      e.user_ests[j] = rec.estimate.state.user(j);
    e.crb_trace = fim.crb_trace();
    rec.epochs.push_back(e);
  };
  record_epoch(1);

  for (int n = 1; n < planner_cfg.n_total; ++n) {
    std::vector<Eigen::Vector2d> user_ests(rec.estimate.state.n_users);
    for (int j = 0; j < rec.estimate.state.n_users; ++j)
      user_ests[j] = rec.estimate.state.user(j);

    const Eigen::Vector3d next = greedy_step(rec.true_traj.back(), fim, user_ests,
                                             predictor, rec.estimate.params,
                                             planner_cfg);
    rec.true_traj.push_back(next);
    detail::append_epoch(rec.measurements, map, params_true, noise, rec.true_traj,
                         true_users, rng);

    try {
      rec.estimate = run_algorithm1(rec.measurements, map, a1_cfg, warm,
                                    static_cast<int>(true_users.size()));
      warm = WarmStart{rec.estimate.state, rec.estimate.params};
    } catch (const std::exception&) {
      // keep flying on the previous estimates; extend the state to the new node
      ++rec.solver_failures;
      rec.estimate.state = extend_state(rec.estimate.state, rec.measurements);
      warm = WarmStart{rec.estimate.state, rec.estimate.params};
      // labels must still cover the new measurements for downstream reporting
      PooledLinks pooled = pool_links(rec.measurements);
      std::vector<double> omega(pooled.size(), 0.5);
      rec.estimate.labels = scatter_labels(pooled, omega, rec.measurements);
    }
    fim = detail::rebuild_fim(rec.measurements, map, rec.estimate,
                              planner_cfg.prior_fim_eps, a1_cfg.solver.min_distance);
    record_epoch(n + 1);
  }
  return rec;
}

}  // namespace uavloc
