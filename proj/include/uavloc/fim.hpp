#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "uavloc/channel.hpp"

namespace uavloc {

// Fisher information over the stacked user coordinates. Users share no
// parameters, so F stays block-diagonal with one 2x2 block per user and the
// inverse is maintained jointly blockwise.
struct FimState {
  std::vector<Eigen::Matrix2d> blocks;      // F, per user
  std::vector<Eigen::Matrix2d> inv_blocks;  // F^-1, per user
  int n = 0;                                // epochs accumulated

  static FimState prior(int n_users, double eps) {
    FimState s;
    s.blocks.assign(n_users, eps * Eigen::Matrix2d::Identity());
    s.inv_blocks.assign(n_users, (1.0 / eps) * Eigen::Matrix2d::Identity());
    return s;
  }

  int n_users() const { return static_cast<int>(blocks.size()); }

  Eigen::MatrixXd full() const {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(2 * n_users(), 2 * n_users());
    for (int k = 0; k < n_users(); ++k) f.block<2, 2>(2 * k, 2 * k) = blocks[k];
    return f;
  }
  Eigen::MatrixXd full_inverse() const {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(2 * n_users(), 2 * n_users());
    for (int k = 0; k < n_users(); ++k) f.block<2, 2>(2 * k, 2 * k) = inv_blocks[k];
    return f;
  }
  double crb_trace() const {
    double t = 0.0;
    for (const auto& b : inv_blocks) t += b.trace();
    return t;
  }
};

// Per-user ToA information of one measurement epoch: the LoS/NLoS mixture of
// (1/sigma_tau^2) g g^T with g the range gradient w.r.t. the user position.
// The constant NLoS bias carries no information about position.
inline Eigen::Matrix2d fim_contribution(const Eigen::Vector3d& uav,
                                        const Eigen::Vector2d& user_est, double w,
                                        const ChannelParams& params,
                                        double min_distance = 0.5) {
  const Eigen::Vector2d diff = user_est - uav.head<2>();
  const double d = std::sqrt(diff.squaredNorm() + uav.z() * uav.z());
  if (!(d > min_distance))
    throw std::domain_error("fim_contribution: degenerate link distance");
  if (w < 0.0 || w > 1.0)
    throw std::domain_error("fim_contribution: w outside [0,1]");
  const Eigen::Vector2d g = diff / d;
  const double scale = w / (params.los.sigma_tau * params.los.sigma_tau) +
                       (1.0 - w) / (params.nlos.sigma_tau * params.nlos.sigma_tau);
  return scale * (g * g.transpose());
}

// F_n = F_{n-1} + sum_k H_k[n], placed block-diagonally per user.
inline FimState fim_accumulate(const FimState& state,
                               const std::vector<Eigen::Matrix2d>& contributions) {
  if (static_cast<int>(contributions.size()) != state.n_users())
    throw std::invalid_argument("fim_accumulate: contribution count mismatch");
  FimState next = state;
  for (int k = 0; k < state.n_users(); ++k) {
    next.blocks[k] += contributions[k];
    next.inv_blocks[k] = next.blocks[k].inverse();
  }
  next.n = state.n + 1;
  return next;
}

namespace detail {

// Improvement of one user's 2x2 inverse-information. Uses the
// matrix-inversion-lemma form when H is invertible and the always-defined
// difference of inverses otherwise; the two agree where both exist.
inline Eigen::Matrix2d improvement_block(const Eigen::Matrix2d& f_inv,
                                         const Eigen::Matrix2d& h) {
  const double scale = h.cwiseAbs().maxCoeff();
  const double det = h.determinant();
  if (scale > 0.0 && det > 1e-9 * scale * scale) {
    const Eigen::Matrix2d inner = (h.inverse() + f_inv).inverse();
    return f_inv * inner * f_inv;
  }
  const Eigen::Matrix2d f = f_inv.inverse();
  return f_inv - (f + h).inverse();
}

}  // namespace detail

// R[n] per user block; satisfies F_n^-1 = F_{n-1}^-1 - R[n].
inline std::vector<Eigen::Matrix2d> improvement_matrix(
    const FimState& state, const std::vector<Eigen::Matrix2d>& contributions) {
  if (static_cast<int>(contributions.size()) != state.n_users())
    throw std::invalid_argument("improvement_matrix: contribution count mismatch");
  std::vector<Eigen::Matrix2d> r(state.n_users());
  for (int k = 0; k < state.n_users(); ++k)
    r[k] = detail::improvement_block(state.inv_blocks[k], contributions[k]);
  return r;
}

inline double improvement_trace(const std::vector<Eigen::Matrix2d>& r) {
  double t = 0.0;
  for (const auto& b : r) t += b.trace();
  return t;
}

}  // namespace uavloc
