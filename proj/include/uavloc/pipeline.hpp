#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "uavloc/em.hpp"
#include "uavloc/measurement.hpp"
#include "uavloc/slam.hpp"

namespace uavloc {

enum class LinkFamily { kUavUe = 0, kBsUav = 1, kBsUe = 2 };

// All link measurements of a mission flattened into one pool, with enough
// provenance to scatter learned responsibilities back per family.
struct PooledLinks {
  std::vector<double> gains;
  std::vector<double> toa_ranges;
  std::vector<LinkFamily> family;
  std::vector<int> row, col;
  std::vector<std::uint8_t> true_los;  // carried for scoring only

  std::size_t size() const { return gains.size(); }
};

inline PooledLinks pool_links(const MeasurementSet& set) {
  PooledLinks p;
  auto add = [&p](const LinkGrid& grid, LinkFamily fam) {
    for (int r = 0; r < grid.rows; ++r)
      for (int c = 0; c < grid.cols; ++c) {
        const LinkMeasurement& m = grid.at(r, c);
        p.gains.push_back(m.gain);
        p.toa_ranges.push_back(m.toa_range);
        p.family.push_back(fam);
        p.row.push_back(r);
        p.col.push_back(c);
        p.true_los.push_back(m.true_los ? 1 : 0);
      }
  };
  add(set.uav_ue, LinkFamily::kUavUe);
  add(set.bs_uav, LinkFamily::kBsUav);
  add(set.bs_ue, LinkFamily::kBsUe);
  return p;
}

// Link distances under the current state estimate.
inline std::vector<double> pooled_distances(const PooledLinks& pooled,
                                            const StateVector& state,
                                            const UrbanMap& map,
                                            double min_distance = 0.5) {
  std::vector<double> d(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    double dist = 0.0;
    switch (pooled.family[i]) {
      case LinkFamily::kUavUe: {
        const Eigen::Vector2d u = state.user(pooled.col[i]);
        dist = (state.uav3(pooled.row[i]) - Eigen::Vector3d(u.x(), u.y(), 0.0)).norm();
        break;
      }
      case LinkFamily::kBsUav:
        dist = (map.bs_sites[pooled.col[i]] - state.uav3(pooled.row[i])).norm();
        break;
      case LinkFamily::kBsUe: {
        const Eigen::Vector2d u = state.user(pooled.col[i]);
        dist = (map.bs_sites[pooled.row[i]] - Eigen::Vector3d(u.x(), u.y(), 0.0)).norm();
        break;
      }
    }
    d[i] = std::max(dist, min_distance);
  }
  return d;
}

inline ClassificationState scatter_labels(const PooledLinks& pooled,
                                          const std::vector<double>& omega,
                                          const MeasurementSet& set) {
  ClassificationState cls;
  cls.omega_uav_ue.resize(set.uav_ue.count());
  cls.omega_bs_uav.resize(set.bs_uav.count());
  cls.omega_bs_ue.resize(set.bs_ue.count());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    const int flat_cols = pooled.family[i] == LinkFamily::kUavUe ? set.uav_ue.cols
                          : pooled.family[i] == LinkFamily::kBsUav ? set.bs_uav.cols
                                                                   : set.bs_ue.cols;
    const int idx = pooled.row[i] * flat_cols + pooled.col[i];
    switch (pooled.family[i]) {
      case LinkFamily::kUavUe: cls.omega_uav_ue[idx] = omega[i]; break;
      case LinkFamily::kBsUav: cls.omega_bs_uav[idx] = omega[i]; break;
      case LinkFamily::kBsUe: cls.omega_bs_ue[idx] = omega[i]; break;
    }
  }
  cls.w_uav_ue = hard_classify(cls.omega_uav_ue);
  cls.w_bs_uav = hard_classify(cls.omega_bs_uav);
  cls.w_bs_ue = hard_classify(cls.omega_bs_ue);
  return cls;
}

// Generic urban starting point for the estimator; deliberately offset from
// any particular scenario's true channel.
inline ChannelParams default_estimator_prior() {
  ChannelParams p;
  p.los = {-25.0, -30.0, 3.0, 0.0, 5.0};
  p.nlos = {-30.0, -40.0, 6.0, 30.0, 30.0};
  p.pi_los = 0.5;
  return p;
}

struct Algorithm1Config {
  EmConfig em;
  SolverConfig solver;
  OdometryNoise noise;
  double uav_altitude = 80.0;
  int max_outer = 10;
  double outer_tol = 1e-3;  // meters, position-estimate change
  double grid_pitch = 10.0;
  bool use_gain_blocks = true;
  bool use_toa_blocks = true;
  ChannelParams prior = default_estimator_prior();
};

struct Algorithm1Result {
  StateVector state;
  ChannelParams params;
  ClassificationState labels;
  // weighted square loss per outer iteration, before and after the SLAM
  // phase, both under that iteration's labels and channel estimate
  std::vector<double> outer_losses_before;
  std::vector<double> outer_losses;
  int outer_iterations = 0;
  bool converged = false;
  bool em_surrogate_monotone = true;
};

struct WarmStart {
  StateVector state;
  ChannelParams params;
};

// Extends a previous solution to a grown measurement set: carried-over UAV
// nodes and users keep their estimates, new nodes seed from GPS.
inline StateVector extend_state(const StateVector& prev, const MeasurementSet& set) {
  StateVector s = StateVector::zeros(set.n_epochs(), prev.n_users, prev.uav_altitude);
  for (int i = 0; i < set.n_epochs(); ++i)
    s.set_uav(i, i < prev.n_uav ? prev.uav(i) : Eigen::Vector2d(set.gps[i].head<2>()));
  for (int kk = 0; kk < prev.n_users; ++kk) s.set_user(kk, prev.user(kk));
  return s;
}

// Alternates the EM learning/classification phase (positions fixed) with the
// least-squares SLAM phase (labels and channel fixed) until the position
// estimates stop moving.
inline Algorithm1Result run_algorithm1(const MeasurementSet& set, const UrbanMap& map,
                                       const Algorithm1Config& cfg,
                                       const std::optional<WarmStart>& warm = {},
                                       int n_users_hint = -1) {
  const int n_users = n_users_hint >= 0 ? n_users_hint : set.n_users();
  PooledLinks pooled = pool_links(set);

  Algorithm1Result res;
  res.params = cfg.prior;
  if (warm) {
    res.state = extend_state(warm->state, set);
    res.params = warm->params;
  } else {
    res.state = init_state_from_gps(set, n_users, cfg.uav_altitude);
    for (int kk = 0; kk < n_users; ++kk)
      res.state.set_user(kk, init_user_grid(set, map, kk, cfg.grid_pitch));
  }

  if (pooled.size() == 0) {
    // odometry-only problem: a single SLAM pass tracks the UAV
    Graph graph = build_graph(set, res.labels, res.params, cfg.noise, map,
                              cfg.uav_altitude, cfg.use_gain_blocks, cfg.use_toa_blocks);
    if (!graph.blocks.empty()) {
      SolveResult sol = solve_gauss_newton(graph, res.state, cfg.solver);
      res.state = sol.state;
      res.outer_losses.push_back(sol.loss);
    }
    res.converged = true;
    res.outer_iterations = 1;
    return res;
  }

  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    res.outer_iterations = outer + 1;

    // Phase 1: EM classification and channel learning at fixed positions.
    const std::vector<double> dists =
        pooled_distances(pooled, res.state, map, cfg.solver.min_distance);
    std::vector<double> phis(dists.size());
    for (std::size_t i = 0; i < dists.size(); ++i) phis[i] = std::log10(dists[i]);

    // Multi-start: the warm continuation can sit in a collapsed fixed point
    // (a near-zero-width component pinned to a couple of points), so a fresh
    // data-driven start competes with it. A run whose thinner side holds
    // fewer than a handful of effective points is degenerate; otherwise the
    // higher final bound wins.
    std::vector<GainMixture> starts;
    if (outer > 0 || warm.has_value()) starts.push_back(GainMixture::from(res.params));
    if (pooled.size() >= 4) {
      try {
        starts.push_back(init_gain_mixture(pooled.gains, phis, cfg.em));
      } catch (const std::exception&) {
        // split landed on a degenerate geometry; continuation still runs
      }
    }
    if (starts.empty()) starts.push_back(GainMixture::from(res.params));
    const double count = static_cast<double>(pooled.size());
    EmGainResult em;
    bool have = false, have_healthy = false;
    for (const GainMixture& start : starts) {
      EmGainResult cand = run_em_gain(cfg.em, start, pooled.gains, phis);
      double mass = 0.0;
      for (double o : cand.omega) mass += o;
      const bool healthy = std::min(mass, count - mass) >= 4.0;
      const bool better =
          !have || (healthy && !have_healthy) ||
          (healthy == have_healthy &&
           cand.surrogate.back() > em.surrogate.back());
      if (better) {
        em = std::move(cand);
        have = true;
        have_healthy = healthy;
      }
    }
    res.em_surrogate_monotone = res.em_surrogate_monotone && em.surrogate_monotone;
    em.mixture.write_into(res.params);
    const ToaFit toa = fit_toa_params(em.omega, pooled.toa_ranges, dists,
                                      cfg.prior.los, cfg.prior.nlos, cfg.em);
    res.params.los.mu_tau = toa.mu_los;
    res.params.los.sigma_tau = toa.sigma_los;
    res.params.nlos.mu_tau = toa.mu_nlos;
    res.params.nlos.sigma_tau = toa.sigma_nlos;
    res.labels = scatter_labels(pooled, em.omega, set);

    // Phase 2: least-squares SLAM at fixed labels and channel.
    Graph graph = build_graph(set, res.labels, res.params, cfg.noise, map,
                              cfg.uav_altitude, cfg.use_gain_blocks, cfg.use_toa_blocks);
    const StateVector prev = res.state;
    res.outer_losses_before.push_back(
        evaluate_loss(graph, prev, cfg.solver.min_distance).weighted_sq);
    SolveResult sol = solve_gauss_newton(graph, res.state, cfg.solver);
    res.state = sol.state;
    res.outer_losses.push_back(sol.loss);

    double change = 0.0;
    for (int i = 0; i < res.state.n_uav; ++i)
      change = std::max(change, (res.state.uav(i) - prev.uav(i)).norm());
    for (int kk = 0; kk < res.state.n_users; ++kk)
      change = std::max(change, (res.state.user(kk) - prev.user(kk)).norm());
    if (change < cfg.outer_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// Gauss-Newton is local, and a user seeded in the wrong trilateration basin
// stays there through every warm restart. This sweeps each user's own link
// blocks over a coarse grid with everything else fixed and re-seeds the user
// when a grid point beats its current restricted loss, then re-runs the
// EM/SLAM loop from the moved state. Returns whether anything moved.
inline bool reseed_user_basins(const MeasurementSet& set, const UrbanMap& map,
                               const Algorithm1Config& cfg, Algorithm1Result& est,
                               double pitch = 10.0) {
  if (est.state.n_users == 0) return false;
  const Graph graph =
      build_graph(set, est.labels, est.params, cfg.noise, map, cfg.uav_altitude,
                  cfg.use_gain_blocks, cfg.use_toa_blocks);
  std::vector<std::vector<std::size_t>> per_user(est.state.n_users);
  for (std::size_t i = 0; i < graph.blocks.size(); ++i)
    if (graph.blocks[i].user >= 0) per_user[graph.blocks[i].user].push_back(i);

  StateVector scratch = est.state;
  bool moved = false;
  for (int k = 0; k < est.state.n_users; ++k) {
    if (per_user[k].empty()) continue;
    auto restricted = [&](const Eigen::Vector2d& u) {
      scratch.set_user(k, u);
      double acc = 0.0;
      for (const std::size_t bi : per_user[k])
        acc += block_squared_error(graph.blocks[bi], scratch,
                                   cfg.solver.min_distance);
      return acc;
    };
    const Eigen::Vector2d current = est.state.user(k);
    const double current_loss = restricted(current);
    Eigen::Vector2d best_pt = current;
    double best = current_loss;
    for (double x = map.area.x_min; x <= map.area.x_max; x += pitch)
      for (double y = map.area.y_min; y <= map.area.y_max; y += pitch) {
        const double v = restricted({x, y});
        if (v < best) {
          best = v;
          best_pt = {x, y};
        }
      }
    scratch.set_user(k, current);
    if ((best_pt - current).norm() > pitch && best < current_loss * 0.999) {
      est.state.set_user(k, best_pt);
      scratch.set_user(k, best_pt);
      moved = true;
    }
  }
  if (moved)
    est = run_algorithm1(set, map, cfg, WarmStart{est.state, est.params},
                         est.state.n_users);
  return moved;
}

}  // namespace uavloc
