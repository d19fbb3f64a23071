#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "uavloc/channel.hpp"
#include "uavloc/fim.hpp"
#include "uavloc/geometry.hpp"

namespace uavloc {

struct PlannerConfig {
  double d_max = 10.0;  // meters per step
  int n_total = 100;    // mission epochs N
  Eigen::Vector3d x_start{300.0, 400.0, 80.0};
  Eigen::Vector3d x_end{300.0, 400.0, 80.0};
  double neighbor_step = 10.0;  // action-ring radius, defaults to d_max
  double prior_fim_eps = 1e-4;
};

// Score of a candidate next position: the trace of the predicted estimation
// improvement, or -inf when the terminal point can no longer be reached from
// the candidate in the remaining steps. state.n is the current time step, so
// the candidate occupies step state.n + 1.
inline double greedy_objective(const Eigen::Vector3d& candidate, const FimState& state,
                               const std::vector<Eigen::Vector2d>& user_ests,
                               const LosPredictorParams& predictor,
                               const ChannelParams& params, const PlannerConfig& cfg) {
  const int steps_left_after = cfg.n_total - (state.n + 1);
  if (steps_left_after < 0) return -std::numeric_limits<double>::infinity();
  const double lambda = cfg.d_max * static_cast<double>(steps_left_after);
  if ((candidate - cfg.x_end).head<2>().norm() > lambda + 1e-9)
    return -std::numeric_limits<double>::infinity();

  std::vector<Eigen::Matrix2d> contributions(user_ests.size());
  for (std::size_t k = 0; k < user_ests.size(); ++k) {
    const double w = los_probability(predictor, candidate, user_ests[k]);
    contributions[k] = fim_contribution(candidate, user_ests[k], w, params);
  }
  return improvement_trace(improvement_matrix(state, contributions));
}

// The eight ring neighbors at 45-degree spacing plus "stay", enumerated
// E, NE, N, NW, W, SW, S, SE, stay; the first maximum wins ties.
inline std::vector<Eigen::Vector3d> candidate_moves(const Eigen::Vector3d& current,
                                                    double step) {
  std::vector<Eigen::Vector3d> moves;
  moves.reserve(9);
  for (int i = 0; i < 8; ++i) {
    const double angle = i * (M_PI / 4.0);
    moves.emplace_back(current.x() + step * std::cos(angle),
                       current.y() + step * std::sin(angle), current.z());
  }
  moves.push_back(current);
  return moves;
}

// One greedy planning step. When every candidate is infeasible the UAV heads
// for the terminal point by the remaining distance split over the remaining
// steps, which preserves per-step feasibility and lands exactly on x_end.
inline Eigen::Vector3d greedy_step(const Eigen::Vector3d& current, const FimState& state,
                                   const std::vector<Eigen::Vector2d>& user_ests,
                                   const LosPredictorParams& predictor,
                                   const ChannelParams& params,
                                   const PlannerConfig& cfg) {
  if (state.n >= cfg.n_total)
    throw std::logic_error("greedy_step: mission already complete");

  double best = -std::numeric_limits<double>::infinity();
  Eigen::Vector3d best_move = current;
  bool any_feasible = false;
  for (const auto& cand : candidate_moves(current, cfg.neighbor_step)) {
    const double score = greedy_objective(cand, state, user_ests, predictor, params, cfg);
    if (!std::isinf(score)) any_feasible = true;
    if (score > best) {
      best = score;
      best_move = cand;
    }
  }
  if (any_feasible) return best_move;

  const Eigen::Vector2d to_end = (cfg.x_end - current).head<2>();
  const double dist = to_end.norm();
  const int steps_left = cfg.n_total - state.n;
  if (dist < 1e-12 || steps_left <= 0) return current;
  const double move = dist / static_cast<double>(steps_left);
  const Eigen::Vector2d next = current.head<2>() + to_end / dist * move;
  return {next.x(), next.y(), current.z()};
}

}  // namespace uavloc
