#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "uavloc/channel.hpp"
#include "uavloc/em.hpp"
#include "uavloc/geometry.hpp"
#include "uavloc/measurement.hpp"

namespace uavloc {

// Horizontal UAV positions for N epochs followed by K user positions,
// packed [x[1..N], u[1..K]], two entries each. Altitudes are fixed knowns.
struct StateVector {
  Eigen::VectorXd values;
  int n_uav = 0;
  int n_users = 0;
  double uav_altitude = 0.0;

  static StateVector zeros(int n_uav, int n_users, double altitude) {
    StateVector s;
    s.n_uav = n_uav;
    s.n_users = n_users;
    s.uav_altitude = altitude;
    s.values = Eigen::VectorXd::Zero(2 * (n_uav + n_users));
    return s;
  }

  int dim() const { return static_cast<int>(values.size()); }
  int uav_offset(int n) const { return 2 * n; }
  int user_offset(int k) const { return 2 * (n_uav + k); }

  Eigen::Vector2d uav(int n) const { return values.segment<2>(uav_offset(n)); }
  Eigen::Vector2d user(int k) const { return values.segment<2>(user_offset(k)); }
  void set_uav(int n, const Eigen::Vector2d& p) { values.segment<2>(uav_offset(n)) = p; }
  void set_user(int k, const Eigen::Vector2d& p) { values.segment<2>(user_offset(k)) = p; }
  Eigen::Vector3d uav3(int n) const {
    const Eigen::Vector2d p = uav(n);
    return {p.x(), p.y(), uav_altitude};
  }
};

enum class BlockKind { kGps, kVel, kGain, kToa };

// One weighted residual term of the mission negative log-likelihood.
// Endpoints are state indices (uav node / user) or a fixed BS anchor.
struct ResidualBlock {
  BlockKind kind;
  int uav_node = -1;
  int uav_node_prev = -1;  // vel blocks couple consecutive nodes
  int user = -1;
  bool has_anchor = false;
  Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
  Eigen::Vector2d obs2 = Eigen::Vector2d::Zero();  // gps / vel observation
  double obs = 0.0;                                // gain or toa_range
  double weight = 1.0;                             // inverse variance
  double bias = 0.0;                               // mu_tau for toa blocks
  double alpha = 0.0, beta = 0.0;                  // gain line of the label
  double dt = 1.0;
};

struct Graph {
  std::vector<ResidualBlock> blocks;
  // State-independent part of the negative log-likelihood: the
  // log-variance-ratio times the LoS label count, reported separately from
  // the weighted square sum.
  double label_constant = 0.0;
};

struct SolverConfig {
  int max_iters = 50;
  double step_tol = 1e-8;  // meters
  double lambda_init = 1e-6;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double lambda_max = 1e10;
  double min_distance = 0.5;  // floor inside log10 and divisions
};

namespace detail {

struct LinkGeom {
  double d = 0.0;          // 3D distance, clamped
  Eigen::Vector2d g_user;  // d(d)/d(user xy)
  Eigen::Vector2d g_uav;   // d(d)/d(uav xy)
  bool clamped = false;
};

// 3D endpoint geometry of a link block under the current state.
inline LinkGeom link_geometry(const ResidualBlock& b, const StateVector& s,
                              double min_distance) {
  Eigen::Vector3d pa, pb;  // pa: uav or anchor; pb: user or uav
  if (b.uav_node >= 0 && b.user >= 0) {
    pa = s.uav3(b.uav_node);
    pb = Eigen::Vector3d(s.user(b.user).x(), s.user(b.user).y(), 0.0);
  } else if (b.has_anchor && b.uav_node >= 0) {
    pa = b.anchor;
    pb = s.uav3(b.uav_node);
  } else if (b.has_anchor && b.user >= 0) {
    pa = b.anchor;
    pb = Eigen::Vector3d(s.user(b.user).x(), s.user(b.user).y(), 0.0);
  } else {
    throw std::logic_error("link_geometry: block without endpoints");
  }
  LinkGeom geom;
  double d = (pa - pb).norm();
  if (d < min_distance) {
    d = min_distance;
    geom.clamped = true;
  }
  geom.d = d;
  const Eigen::Vector2d diff = pb.head<2>() - pa.head<2>();
  if (b.uav_node >= 0 && b.user >= 0) {
    geom.g_user = diff / d;   // derivative w.r.t. user
    geom.g_uav = -diff / d;   // derivative w.r.t. uav
  } else if (b.uav_node >= 0) {
    geom.g_uav = diff / d;
  } else {
    geom.g_user = diff / d;
  }
  return geom;
}

}  // namespace detail

// Emits the full residual graph: GPS and velocity priors on UAV nodes plus
// gain and ToA blocks for the three link families, with the segment of each
// link block fixed by its hard label.
inline Graph build_graph(const MeasurementSet& set, const ClassificationState& labels,
                         const ChannelParams& params, const OdometryNoise& noise,
                         const UrbanMap& map, double uav_altitude,
                         bool use_gain_blocks = true, bool use_toa_blocks = true) {
  const int n = set.n_epochs();
  const int k = set.uav_ue.cols;
  const int m = static_cast<int>(map.bs_sites.size());

  if (static_cast<int>(labels.w_uav_ue.size()) != set.uav_ue.count() ||
      static_cast<int>(labels.w_bs_uav.size()) != set.bs_uav.count() ||
      static_cast<int>(labels.w_bs_ue.size()) != set.bs_ue.count())
    throw std::invalid_argument("build_graph: labels do not cover measurements");

  Graph graph;
  graph.blocks.reserve(static_cast<std::size_t>(
      n + std::max(n - 1, 0) + 2 * (set.uav_ue.count() + set.bs_uav.count() + set.bs_ue.count())));

  for (int i = 0; i < n; ++i) {
    ResidualBlock b;
    b.kind = BlockKind::kGps;
    b.uav_node = i;
    b.obs2 = set.gps[i].head<2>();
    b.weight = 1.0 / (noise.sigma_gps * noise.sigma_gps);
    graph.blocks.push_back(b);
  }
  for (int i = 1; i < n; ++i) {
    ResidualBlock b;
    b.kind = BlockKind::kVel;
    b.uav_node = i;
    b.uav_node_prev = i - 1;
    b.obs2 = set.vel[i - 1];
    b.weight = 1.0 / (noise.sigma_vel * noise.sigma_vel);
    b.dt = noise.dt;
    graph.blocks.push_back(b);
  }

  long los_labels = 0;
  auto push_link = [&](const LinkMeasurement& meas, std::uint8_t w, int uav_node,
                       int user, const Eigen::Vector3d* anchor) {
    const Segment s = w ? Segment::kLos : Segment::kNlos;
    const SegmentParams& sp = params.seg(s);
    los_labels += w ? 1 : 0;
    if (use_gain_blocks) {
      ResidualBlock b;
      b.kind = BlockKind::kGain;
      b.uav_node = uav_node;
      b.user = user;
      if (anchor) { b.has_anchor = true; b.anchor = *anchor; }
      b.obs = meas.gain;
      b.alpha = sp.alpha;
      b.beta = sp.beta;
      b.weight = 1.0 / (sp.sigma * sp.sigma);
      graph.blocks.push_back(b);
    }
    if (use_toa_blocks) {
      ResidualBlock b;
      b.kind = BlockKind::kToa;
      b.uav_node = uav_node;
      b.user = user;
      if (anchor) { b.has_anchor = true; b.anchor = *anchor; }
      b.obs = meas.toa_range;
      b.bias = sp.mu_tau;
      b.weight = 1.0 / (sp.sigma_tau * sp.sigma_tau);
      graph.blocks.push_back(b);
    }
  };

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j)
      push_link(set.uav_ue.at(i, j), labels.w_uav_ue[i * k + j], i, j, nullptr);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      push_link(set.bs_uav.at(i, j), labels.w_bs_uav[i * m + j], i, -1,
                &map.bs_sites[j]);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < set.bs_ue.cols; ++j)
      push_link(set.bs_ue.at(i, j), labels.w_bs_ue[i * set.bs_ue.cols + j], -1, j,
                &map.bs_sites[i]);

  const double var_ratio =
      (params.los.sigma * params.los.sigma * params.los.sigma_tau * params.los.sigma_tau) /
      (params.nlos.sigma * params.nlos.sigma * params.nlos.sigma_tau * params.nlos.sigma_tau);
  graph.label_constant = std::log(var_ratio) * static_cast<double>(los_labels);
  (void)uav_altitude;
  return graph;
}

struct LossValue {
  double weighted_sq = 0.0;   // sum e^T Q^-1 e
  double label_constant = 0.0;
  double total() const { return weighted_sq + label_constant; }
};

inline double block_squared_error(const ResidualBlock& b, const StateVector& s,
                                  double min_distance) {
  switch (b.kind) {
    case BlockKind::kGps: {
      const Eigen::Vector2d e = b.obs2 - s.uav(b.uav_node);
      return b.weight * e.squaredNorm();
    }
    case BlockKind::kVel: {
      const Eigen::Vector2d e =
          b.obs2 - (s.uav(b.uav_node) - s.uav(b.uav_node_prev)) / b.dt;
      return b.weight * e.squaredNorm();
    }
    case BlockKind::kGain: {
      const auto geom = detail::link_geometry(b, s, min_distance);
      const double e = b.obs - b.beta - b.alpha * std::log10(geom.d);
      return b.weight * e * e;
    }
    case BlockKind::kToa: {
      const auto geom = detail::link_geometry(b, s, min_distance);
      const double e = b.obs - geom.d - b.bias;
      return b.weight * e * e;
    }
  }
  return 0.0;
}

inline LossValue evaluate_loss(const Graph& graph, const StateVector& s,
                               double min_distance = 0.5) {
  LossValue v;
  v.label_constant = graph.label_constant;
  for (const auto& b : graph.blocks)
    v.weighted_sq += block_squared_error(b, s, min_distance);
  return v;
}

struct Linearization {
  Eigen::SparseMatrix<double> H;
  Eigen::VectorXd b;
  double loss = 0.0;
  bool any_clamped = false;
};

// H = sum J^T Q^-1 J, b = sum J^T Q^-1 e with closed-form Jacobians. Blocks
// are accumulated in deterministic order.
inline Linearization linearize(const Graph& graph, const StateVector& s,
                               double min_distance = 0.5) {
  const int dim = s.dim();
  Linearization lin;
  lin.b = Eigen::VectorXd::Zero(dim);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(graph.blocks.size() * 8);

  auto add_pair = [&](int ia, const Eigen::Vector2d& ja, int ib,
                      const Eigen::Vector2d& jb, double weight, double e) {
    // scalar residual with up to two 1x2 Jacobian pieces
    if (ia >= 0) {
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
          trips.emplace_back(ia + r, ia + c, weight * ja(r) * ja(c));
      lin.b.segment<2>(ia) += weight * ja * e;
    }
    if (ib >= 0) {
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
          trips.emplace_back(ib + r, ib + c, weight * jb(r) * jb(c));
      lin.b.segment<2>(ib) += weight * jb * e;
    }
    if (ia >= 0 && ib >= 0) {
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          trips.emplace_back(ia + r, ib + c, weight * ja(r) * jb(c));
          trips.emplace_back(ib + r, ia + c, weight * jb(r) * ja(c));
        }
    }
  };

  for (const auto& blk : graph.blocks) {
    switch (blk.kind) {
      case BlockKind::kGps: {
        const int i = s.uav_offset(blk.uav_node);
        const Eigen::Vector2d e = blk.obs2 - s.uav(blk.uav_node);
        // J = -I2
        for (int r = 0; r < 2; ++r) trips.emplace_back(i + r, i + r, blk.weight);
        lin.b.segment<2>(i) -= blk.weight * e;
        lin.loss += blk.weight * e.squaredNorm();
        break;
      }
      case BlockKind::kVel: {
        const int i = s.uav_offset(blk.uav_node);
        const int j = s.uav_offset(blk.uav_node_prev);
        const Eigen::Vector2d e =
            blk.obs2 - (s.uav(blk.uav_node) - s.uav(blk.uav_node_prev)) / blk.dt;
        const double a = 1.0 / blk.dt;
        // J_i = -I2/dt, J_j = +I2/dt
        for (int r = 0; r < 2; ++r) {
          trips.emplace_back(i + r, i + r, blk.weight * a * a);
          trips.emplace_back(j + r, j + r, blk.weight * a * a);
          trips.emplace_back(i + r, j + r, -blk.weight * a * a);
          trips.emplace_back(j + r, i + r, -blk.weight * a * a);
        }
        lin.b.segment<2>(i) -= blk.weight * a * e;
        lin.b.segment<2>(j) += blk.weight * a * e;
        lin.loss += blk.weight * e.squaredNorm();
        break;
      }
      case BlockKind::kGain: {
        const auto geom = detail::link_geometry(blk, s, min_distance);
        lin.any_clamped |= geom.clamped;
        const double e = blk.obs - blk.beta - blk.alpha * std::log10(geom.d);
        const double scale = -blk.alpha / (std::log(10.0) * geom.d);
        const int iu = blk.uav_node >= 0 ? s.uav_offset(blk.uav_node) : -1;
        const int ik = blk.user >= 0 ? s.user_offset(blk.user) : -1;
        add_pair(iu, scale * geom.g_uav, ik, scale * geom.g_user, blk.weight, e);
        lin.loss += blk.weight * e * e;
        break;
      }
      case BlockKind::kToa: {
        const auto geom = detail::link_geometry(blk, s, min_distance);
        lin.any_clamped |= geom.clamped;
        const double e = blk.obs - geom.d - blk.bias;
        const int iu = blk.uav_node >= 0 ? s.uav_offset(blk.uav_node) : -1;
        const int ik = blk.user >= 0 ? s.user_offset(blk.user) : -1;
        add_pair(iu, -geom.g_uav, ik, -geom.g_user, blk.weight, e);
        lin.loss += blk.weight * e * e;
        break;
      }
    }
  }

  lin.H.resize(dim, dim);
  lin.H.setFromTriplets(trips.begin(), trips.end());
  return lin;
}

struct IterationRecord {
  double loss = 0.0;
  double step_norm = 0.0;
  double lambda = 0.0;
  bool accepted = true;
};

struct SolveResult {
  StateVector state;
  double loss = 0.0;
  std::vector<IterationRecord> trace;
  bool converged = false;
};

// Levenberg-damped Gauss-Newton on the normal equations. Steps are accepted
// only when the loss decreases, so the returned loss never exceeds the
// initial one; lambda -> 0 recovers the plain Gauss-Newton update.
inline SolveResult solve_gauss_newton(const Graph& graph, const StateVector& init,
                                      const SolverConfig& cfg = {}) {
  SolveResult res;
  res.state = init;
  double loss = evaluate_loss(graph, res.state, cfg.min_distance).weighted_sq;
  if (!std::isfinite(loss))
    throw std::runtime_error("solve_gauss_newton: non-finite loss at initial state");
  double lambda = cfg.lambda_init;
  res.trace.push_back({loss, 0.0, lambda, true});

  Eigen::SparseMatrix<double> identity(res.state.dim(), res.state.dim());
  identity.setIdentity();

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const Linearization lin = linearize(graph, res.state, cfg.min_distance);
    bool stepped = false;
    while (true) {
      Eigen::SparseMatrix<double> damped = lin.H + lambda * identity;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
      if (solver.info() != Eigen::Success) {
        lambda *= cfg.lambda_up;
        if (lambda > cfg.lambda_max)
          throw std::runtime_error("solve_gauss_newton: singular system after damping escalation");
        continue;
      }
      const Eigen::VectorXd delta = solver.solve(-lin.b);
      const double step_norm = delta.norm();

      StateVector cand = res.state;
      cand.values += delta;
      const double cand_loss = evaluate_loss(graph, cand, cfg.min_distance).weighted_sq;
      if (!std::isfinite(cand_loss))
        throw std::runtime_error("solve_gauss_newton: non-finite loss during iteration");

      if (step_norm < cfg.step_tol) {
        if (cand_loss <= loss) {
          res.state = cand;
          loss = cand_loss;
        }
        res.trace.push_back({loss, step_norm, lambda, true});
        res.converged = true;
        res.loss = loss;
        return res;
      }

      if (cand_loss < loss) {
        res.state = cand;
        loss = cand_loss;
        lambda = std::max(lambda * cfg.lambda_down, 1e-12);
        res.trace.push_back({loss, step_norm, lambda, true});
        stepped = true;
        break;
      }
      lambda *= cfg.lambda_up;
      if (lambda > cfg.lambda_max) {
        // no descent direction left; treat as converged at a local minimum
        res.converged = true;
        res.loss = loss;
        return res;
      }
    }
    if (!stepped) break;
  }
  res.loss = loss;
  return res;
}

// UAV nodes seeded straight from the GPS fixes.
inline StateVector init_state_from_gps(const MeasurementSet& set, int n_users,
                                       double uav_altitude) {
  StateVector s = StateVector::zeros(set.n_epochs(), n_users, uav_altitude);
  for (int i = 0; i < set.n_epochs(); ++i) s.set_uav(i, set.gps[i].head<2>());
  return s;
}

// Coarse grid seed for one user: unweighted LoS ToA misfit over the BS links
// plus the first-epoch UAV link, minimized over the area at the given pitch.
inline Eigen::Vector2d init_user_grid(const MeasurementSet& set, const UrbanMap& map,
                                      int user, double grid_pitch = 10.0) {
  const int m = static_cast<int>(map.bs_sites.size());
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector2d best_pt(map.area.x_min, map.area.y_min);
  const int nx = std::max(1, static_cast<int>(map.area.width() / grid_pitch) + 1);
  const int ny = std::max(1, static_cast<int>(map.area.height() / grid_pitch) + 1);
  for (int ix = 0; ix < nx; ++ix) {
    for (int iy = 0; iy < ny; ++iy) {
      const Eigen::Vector3d u(map.area.x_min + ix * grid_pitch,
                              map.area.y_min + iy * grid_pitch, 0.0);
      double score = 0.0;
      for (int i = 0; i < m && i < set.bs_ue.rows; ++i) {
        const double e = set.bs_ue.at(i, user).toa_range - (map.bs_sites[i] - u).norm();
        score += e * e;
      }
      if (set.n_epochs() > 0 && set.uav_ue.rows > 0) {
        const double e =
            set.uav_ue.at(0, user).toa_range - (set.gps[0] - u).norm();
        score += e * e;
      }
      if (score < best) {
        best = score;
        best_pt = u.head<2>();
      }
    }
  }
  return best_pt;
}

}  // namespace uavloc
