#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "uavloc/mission.hpp"
#include "uavloc/random.hpp"
#include "uavloc/scenario.hpp"
#include "uavloc/serialize.hpp"

namespace uavloc {

struct TrialResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::vector<double> user_errors;  // meters, per user
  double mean_user_error = 0.0;
  double uav_rmse = -1.0;  // negative when the mode has no UAV
  double cls_error_rate = 0.0;
  double runtime_s = 0.0;
  ChannelParams learned;
  MissionRecord mission;  // populated for UAV modes
};

namespace detail {

inline std::vector<Eigen::Vector2d> place_users(const Scenario& sc, const UrbanMap& map,
                                                std::mt19937_64& rng) {
  if (!sc.user_positions.empty()) return sc.user_positions;
  std::uniform_real_distribution<double> ux(map.area.x_min, map.area.x_max);
  std::uniform_real_distribution<double> uy(map.area.y_min, map.area.y_max);
  std::vector<Eigen::Vector2d> users;
  users.reserve(static_cast<std::size_t>(sc.n_users));
  int guard = 0;
  while (static_cast<int>(users.size()) < sc.n_users) {
    if (++guard > 10000 * std::max(sc.n_users, 1))
      throw std::runtime_error("place_users: no street space left for users");
    const double x = ux(rng), y = uy(rng);
    bool inside = false;
    for (const auto& b : map.buildings)
      if (b.footprint_contains(x, y)) { inside = true; break; }
    if (!inside) users.emplace_back(x, y);
  }
  return users;
}

inline double classification_error(const MeasurementSet& set,
                                   const ClassificationState& labels) {
  long total = 0, wrong = 0;
  auto tally = [&](const LinkGrid& grid, const std::vector<std::uint8_t>& w) {
    for (int i = 0; i < grid.count(); ++i) {
      ++total;
      if ((grid.items[i].true_los ? 1 : 0) != w[i]) ++wrong;
    }
  };
  tally(set.uav_ue, labels.w_uav_ue);
  tally(set.bs_uav, labels.w_bs_uav);
  tally(set.bs_ue, labels.w_bs_ue);
  return total > 0 ? static_cast<double>(wrong) / static_cast<double>(total) : 0.0;
}

}  // namespace detail

// One full experiment: build the world, fly (or skip) the mission, run the
// final estimation pass, and score against ground truth.
inline TrialResult run_trial(const Scenario& sc, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  TrialResult result;
  result.seed = seed;

  UrbanMap map =
      sc.map_file.empty() ? generate_city(sc.map_seed, sc.city) : load_map(sc.map_file);
  map.bs_sites = sc.bs_sites;

  std::mt19937_64 user_rng = make_rng(seed, 1);
  std::mt19937_64 meas_rng = make_rng(seed, 2);
  const std::vector<Eigen::Vector2d> users = detail::place_users(sc, map, user_rng);

  Algorithm1Config est_cfg = sc.estimator_config();
  Algorithm1Result estimate;
  MeasurementSet measurements;

  switch (sc.planner_mode) {
    case PlannerMode::kOptimized: {
      PlannerConfig pc;
      pc.d_max = sc.d_max();
      pc.n_total = sc.n_epochs;
      pc.x_start = sc.x_start;
      pc.x_end = sc.x_end;
      pc.neighbor_step = sc.d_max();
      pc.prior_fim_eps = sc.prior_fim_eps;
      result.mission = run_mission_online(map, users, sc.channel, sc.odometry,
                                          sc.predictor, pc, est_cfg, meas_rng);
      estimate = result.mission.estimate;
      measurements = result.mission.measurements;
      break;
    }
    case PlannerMode::kRandomRectangle: {
      const auto traj = rectangle_trajectory(map.area, sc.budget_m, sc.n_epochs,
                                             sc.uav_altitude);
      measurements =
          collect_mission(map, sc.channel, sc.odometry, traj, users, meas_rng);
      estimate = run_algorithm1(measurements, map, est_cfg, {},
                                static_cast<int>(users.size()));
      result.mission.true_traj = traj;
      result.mission.measurements = measurements;
      result.mission.estimate = estimate;
      break;
    }
    case PlannerMode::kStaticBsOnly: {
      measurements =
          collect_mission(map, sc.channel, sc.odometry, {}, users, meas_rng);
      estimate = run_algorithm1(measurements, map, est_cfg, {},
                                static_cast<int>(users.size()));
      break;
    }
  }

  // final full-data pass: escape any stuck per-user basins, then re-estimate
  reseed_user_basins(measurements, map, est_cfg, estimate, sc.grid_pitch);
  if (sc.planner_mode != PlannerMode::kStaticBsOnly)
    result.mission.estimate = estimate;

  result.user_errors.resize(users.size());
  double err_sum = 0.0;
  for (std::size_t k = 0; k < users.size(); ++k) {
    result.user_errors[k] = (estimate.state.user(static_cast<int>(k)) - users[k]).norm();
    err_sum += result.user_errors[k];
  }
  result.mean_user_error = users.empty() ? 0.0 : err_sum / users.size();

  if (sc.planner_mode != PlannerMode::kStaticBsOnly) {
    const auto& traj = result.mission.true_traj;
    double sq = 0.0;
    for (int i = 0; i < estimate.state.n_uav; ++i)
      sq += (estimate.state.uav(i) - traj[i].head<2>()).squaredNorm();
    result.uav_rmse = estimate.state.n_uav > 0
                          ? std::sqrt(sq / estimate.state.n_uav)
                          : -1.0;
  }

  result.cls_error_rate = detail::classification_error(measurements, estimate.labels);
  result.learned = estimate.params;
  result.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

struct BatchReport {
  std::vector<TrialResult> trials;
  std::vector<double> pooled_errors;  // sorted per-user errors across trials
  double rmse_user = 0.0;
  double rmse_uav = -1.0;
  double mean_cls_error = 0.0;
  double median_user_error = 0.0;
  int failures = 0;
};

inline double median_of_sorted(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Runs one trial per seed with trial-level isolation: a failed trial is
// recorded and excluded from the aggregates without aborting the batch.
inline BatchReport run_batch(const Scenario& sc,
                             const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("run_batch: no seeds");
  BatchReport report;
  report.trials.reserve(seeds.size());

  double user_sq = 0.0, uav_sq = 0.0, cls_sum = 0.0;
  long user_count = 0, uav_count = 0, ok_count = 0;
  for (const std::uint64_t seed : seeds) {
    TrialResult trial;
    try {
      trial = run_trial(sc, seed);
    } catch (const std::exception& e) {
      trial.seed = seed;
      trial.failed = true;
      trial.error = e.what();
      ++report.failures;
      report.trials.push_back(std::move(trial));
      continue;
    }
    ++ok_count;
    for (const double e : trial.user_errors) {
      report.pooled_errors.push_back(e);
      user_sq += e * e;
      ++user_count;
    }
    if (trial.uav_rmse >= 0.0) {
      uav_sq += trial.uav_rmse * trial.uav_rmse;
      ++uav_count;
    }
    cls_sum += trial.cls_error_rate;
    trial.mission = MissionRecord{};  // drop bulky per-epoch data in batch mode
    report.trials.push_back(std::move(trial));
  }

  std::sort(report.pooled_errors.begin(), report.pooled_errors.end());
  report.rmse_user = user_count > 0 ? std::sqrt(user_sq / user_count) : 0.0;
  report.rmse_uav = uav_count > 0 ? std::sqrt(uav_sq / uav_count) : -1.0;
  report.mean_cls_error = ok_count > 0 ? cls_sum / ok_count : 0.0;
  report.median_user_error = median_of_sorted(report.pooled_errors);
  return report;
}

}  // namespace uavloc
