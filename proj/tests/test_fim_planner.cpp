#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "uavloc/fim.hpp"
#include "uavloc/planner.hpp"
#include "uavloc/random.hpp"

using namespace uavloc;

namespace {

ChannelParams reference_params() {
  ChannelParams p;
  p.los = {-22.0, -32.0, std::sqrt(2.0), 0.0, 2.0};
  p.nlos = {-32.0, -35.0, std::sqrt(5.0), 50.0, 40.0};
  return p;
}

Eigen::Matrix2d random_spd(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::Matrix2d a;
  a << n(rng), n(rng), n(rng), n(rng);
  return a * a.transpose() + 1e-3 * scale * scale * Eigen::Matrix2d::Identity();
}

}  // namespace

TEST_CASE("fim_contribution axis-aligned geometry and mixture linearity") {
  const ChannelParams p = reference_params();
  const Eigen::Vector3d uav(0.0, 0.0, 80.0);
  const Eigen::Vector2d user(60.0, 0.0);  // due east of the ground point
  const double d = std::sqrt(60.0 * 60.0 + 80.0 * 80.0);
  const double r_over_d = 60.0 / d;

  const Eigen::Matrix2d h_los = fim_contribution(uav, user, 1.0, p);
  REQUIRE(h_los(0, 0) ==
          Catch::Approx(r_over_d * r_over_d / (p.los.sigma_tau * p.los.sigma_tau)));
  REQUIRE(h_los(0, 1) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(h_los(1, 1) == Catch::Approx(0.0).margin(1e-15));

  const Eigen::Matrix2d h_nlos = fim_contribution(uav, user, 0.0, p);
  const Eigen::Matrix2d h_half = fim_contribution(uav, user, 0.5, p);
  REQUIRE((h_half - 0.5 * (h_los + h_nlos)).norm() == Catch::Approx(0.0).margin(1e-15));

  REQUIRE_THROWS_AS(fim_contribution({0.0, 0.0, 0.0}, {0.0, 0.0}, 1.0, p),
                    std::domain_error);
  REQUIRE_THROWS_AS(fim_contribution(uav, user, 1.5, p), std::domain_error);
}

TEST_CASE("fim_contribution is PSD for every mixture weight") {
  const ChannelParams p = reference_params();
  auto rng = make_rng(91);
  std::uniform_real_distribution<double> coord(-300.0, 300.0);
  std::uniform_real_distribution<double> wdist(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Vector3d uav(coord(rng), coord(rng), 80.0);
    const Eigen::Vector2d user(coord(rng), coord(rng));
    const Eigen::Matrix2d h = fim_contribution(uav, user, wdist(rng), p);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(h);
    REQUIRE(eig.eigenvalues().minCoeff() >= -1e-15);
    REQUIRE((h - h.transpose()).norm() == Catch::Approx(0.0).margin(1e-15));
  }
}

TEST_CASE("analytic FIM matches the Monte-Carlo score outer product") {
  const ChannelParams p = reference_params();
  const Eigen::Vector3d uav(120.0, -40.0, 80.0);
  const Eigen::Vector2d user(10.0, 90.0);
  auto rng = make_rng(92);

  for (const bool los : {true, false}) {
    const SegmentParams& sp = los ? p.los : p.nlos;
    const Eigen::Matrix2d mc = oracles::mc_score_fim(sp, uav, user, 1000000, rng);
    const Eigen::Matrix2d analytic = fim_contribution(uav, user, los ? 1.0 : 0.0, p);
    REQUIRE((mc - analytic).norm() <= 0.02 * analytic.norm());
  }
}

TEST_CASE("fim_accumulate additivity and direct summation") {
  auto rng = make_rng(93);
  FimState state = FimState::prior(3, 1e-4);
  const FimState unchanged =
      fim_accumulate(state, std::vector<Eigen::Matrix2d>(3, Eigen::Matrix2d::Zero()));
  for (int k = 0; k < 3; ++k)
    REQUIRE((unchanged.blocks[k] - state.blocks[k]).norm() == 0.0);

  std::vector<std::vector<Eigen::Matrix2d>> steps;
  FimState acc = state;
  for (int step = 0; step < 10; ++step) {
    std::vector<Eigen::Matrix2d> contrib;
    for (int k = 0; k < 3; ++k) contrib.push_back(random_spd(rng, 0.3));
    steps.push_back(contrib);
    acc = fim_accumulate(acc, contrib);
  }
  for (int k = 0; k < 3; ++k) {
    Eigen::Matrix2d direct = 1e-4 * Eigen::Matrix2d::Identity();
    for (const auto& s : steps) direct += s[k];
    REQUIRE((acc.blocks[k] - direct).norm() < 1e-12 * direct.norm());
    REQUIRE((acc.blocks[k] * acc.inv_blocks[k] - Eigen::Matrix2d::Identity()).norm() <
            1e-6);
  }
  REQUIRE(acc.n == 10);

  // equal contributions twice: F = prior + 2 * sum
  FimState twice = fim_accumulate(fim_accumulate(state, steps[0]), steps[0]);
  for (int k = 0; k < 3; ++k)
    REQUIRE((twice.blocks[k] -
             (1e-4 * Eigen::Matrix2d::Identity() + 2.0 * steps[0][k])).norm() < 1e-12);
}

TEST_CASE("improvement matrix satisfies the inverse-FIM recursion") {
  auto rng = make_rng(94);
  for (int trial = 0; trial < 100; ++trial) {
    FimState state = FimState::prior(2, 1.0);
    state.blocks[0] = random_spd(rng, 2.0);
    state.blocks[1] = random_spd(rng, 0.5);
    state.inv_blocks[0] = state.blocks[0].inverse();
    state.inv_blocks[1] = state.blocks[1].inverse();

    std::vector<Eigen::Matrix2d> contrib(2);
    contrib[0] = random_spd(rng, 1.0);  // invertible path
    const Eigen::Vector2d g = Eigen::Vector2d(0.3, -0.8).normalized();
    contrib[1] = 0.7 * g * g.transpose();  // rank-1, fallback path

    const auto r = improvement_matrix(state, contrib);
    for (int k = 0; k < 2; ++k) {
      const Eigen::Matrix2d lhs = state.inv_blocks[k] - r[k];
      const Eigen::Matrix2d rhs = (state.blocks[k] + contrib[k]).inverse();
      REQUIRE((lhs - rhs).norm() <= 1e-8 * std::max(rhs.norm(), 1.0));
    }
  }
}

TEST_CASE("improvement matrix scalar identity and zero limit") {
  FimState state = FimState::prior(1, 1.0);
  state.blocks[0] = 4.0 * Eigen::Matrix2d::Identity();
  state.inv_blocks[0] = 0.25 * Eigen::Matrix2d::Identity();

  const auto r0 =
      improvement_matrix(state, {1e-14 * Eigen::Matrix2d::Identity()});
  REQUIRE(r0[0].norm() < 1e-12);

  const auto r = improvement_matrix(state, {2.0 * Eigen::Matrix2d::Identity()});
  // scalar lemma: 1/f - 1/(f+h) with f=4, h=2
  REQUIRE(r[0](0, 0) == Catch::Approx(0.25 - 1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("information accumulation never raises the CRB trace") {
  auto rng = make_rng(95);
  FimState state = FimState::prior(4, 1e-2);
  double prev = state.crb_trace();
  for (int step = 0; step < 50; ++step) {
    std::vector<Eigen::Matrix2d> contrib;
    for (int k = 0; k < 4; ++k) {
      const Eigen::Vector2d g(std::cos(0.3 * step + k), std::sin(0.3 * step + k));
      contrib.push_back(0.1 * g * g.transpose());
    }
    state = fim_accumulate(state, contrib);
    REQUIRE(state.crb_trace() <= prev + 1e-12);
    prev = state.crb_trace();
  }
}

TEST_CASE("greedy objective feasibility boundary") {
  PlannerConfig cfg;
  cfg.d_max = 10.0;
  cfg.n_total = 50;
  cfg.x_end = {300.0, 400.0, 80.0};
  const ChannelParams p = reference_params();
  const LosPredictorParams pred;
  const std::vector<Eigen::Vector2d> users{{350.0, 350.0}};
  FimState state = FimState::prior(1, 1e-2);

  state.n = cfg.n_total - 1;  // candidate occupies the final step
  REQUIRE(std::isfinite(
      greedy_objective(cfg.x_end, state, users, pred, p, cfg)));
  const Eigen::Vector3d nearby = cfg.x_end + Eigen::Vector3d(1e-3, 0.0, 0.0);
  REQUIRE(greedy_objective(nearby, state, users, pred, p, cfg) ==
          -std::numeric_limits<double>::infinity());

  state.n = 10;
  const double lambda = cfg.d_max * (cfg.n_total - state.n - 1);
  const Eigen::Vector3d at_edge =
      cfg.x_end + Eigen::Vector3d(lambda - 1e-6, 0.0, 0.0);
  const Eigen::Vector3d past_edge =
      cfg.x_end + Eigen::Vector3d(lambda + 1e-3, 0.0, 0.0);
  REQUIRE(std::isfinite(greedy_objective(at_edge, state, users, pred, p, cfg)));
  REQUIRE(greedy_objective(past_edge, state, users, pred, p, cfg) ==
          -std::numeric_limits<double>::infinity());
}

TEST_CASE("greedy objective orders candidates like the direct CRB trace") {
  PlannerConfig cfg;
  cfg.d_max = 10.0;
  cfg.n_total = 1000;  // feasibility never binds here
  cfg.x_end = {300.0, 300.0, 80.0};
  const ChannelParams p = reference_params();
  const LosPredictorParams pred;
  const std::vector<Eigen::Vector2d> users{{420.0, 300.0}, {180.0, 260.0}};

  auto rng = make_rng(96);
  FimState state = FimState::prior(2, 1e-3);
  state.blocks[0] = random_spd(rng, 0.2);
  state.blocks[1] = random_spd(rng, 0.2);
  state.inv_blocks[0] = state.blocks[0].inverse();
  state.inv_blocks[1] = state.blocks[1].inverse();
  state.n = 3;

  const Eigen::Vector3d current(300.0, 300.0, 80.0);
  auto direct_new_crb = [&](const Eigen::Vector3d& cand) {
    double tr = 0.0;
    for (std::size_t k = 0; k < users.size(); ++k) {
      const double w = los_probability(pred, cand, users[k]);
      const Eigen::Matrix2d f_new =
          state.blocks[k] + fim_contribution(cand, users[k], w, p);
      tr += f_new.inverse().trace();
    }
    return tr;
  };
  const auto moves = candidate_moves(current, cfg.neighbor_step);
  for (std::size_t i = 0; i < moves.size(); ++i)
    for (std::size_t j = i + 1; j < moves.size(); ++j) {
      const double si = greedy_objective(moves[i], state, users, pred, p, cfg);
      const double sj = greedy_objective(moves[j], state, users, pred, p, cfg);
      if (std::abs(si - sj) < 1e-15) continue;
      // bigger improvement must mean smaller resulting CRB
      REQUIRE((si > sj) == (direct_new_crb(moves[i]) < direct_new_crb(moves[j])));
    }
}

TEST_CASE("greedy step pulls toward an eastern user and matches exhaustive search") {
  PlannerConfig cfg;
  cfg.d_max = 10.0;
  cfg.neighbor_step = 10.0;
  cfg.n_total = 500;
  cfg.x_end = {300.0, 300.0, 80.0};
  const ChannelParams p = reference_params();
  const LosPredictorParams pred;
  const std::vector<Eigen::Vector2d> users{{500.0, 300.0}};
  FimState state = FimState::prior(1, 1e-2);
  state.n = 5;

  const Eigen::Vector3d current(300.0, 300.0, 80.0);
  const Eigen::Vector3d next = greedy_step(current, state, users, pred, p, cfg);
  REQUIRE(next.x() >= current.x());

  double best = -std::numeric_limits<double>::infinity();
  Eigen::Vector3d best_move = current;
  for (const auto& cand : candidate_moves(current, cfg.neighbor_step)) {
    const double s = greedy_objective(cand, state, users, pred, p, cfg);
    if (s > best) {
      best = s;
      best_move = cand;
    }
  }
  REQUIRE((next - best_move).norm() == 0.0);
}

TEST_CASE("greedy step falls back to homing when nothing is feasible") {
  PlannerConfig cfg;
  cfg.d_max = 10.0;
  cfg.neighbor_step = 10.0;
  cfg.n_total = 10;
  const ChannelParams p = reference_params();
  const LosPredictorParams pred;
  const std::vector<Eigen::Vector2d> users{{100.0, 100.0}};

  // terminal point 22.5 degrees off the action ring, at the feasibility edge
  const Eigen::Vector3d current(0.0, 0.0, 80.0);
  FimState state = FimState::prior(1, 1e-2);
  state.n = 5;
  const double dist = cfg.d_max * (cfg.n_total - state.n);
  const double ang = M_PI / 8.0;
  cfg.x_end = {dist * std::cos(ang), dist * std::sin(ang), 80.0};

  const Eigen::Vector3d next = greedy_step(current, state, users, pred, p, cfg);
  const double expected_move = dist / (cfg.n_total - state.n);
  const Eigen::Vector3d expected =
      current + (cfg.x_end - current) / dist * expected_move;
  REQUIRE((next - expected).norm() < 1e-9);
  REQUIRE((next - current).head<2>().norm() <= cfg.d_max + 1e-9);
}

TEST_CASE("forced homing reaches the terminal point exactly") {
  PlannerConfig cfg;
  cfg.d_max = 10.0;
  cfg.neighbor_step = 10.0;
  cfg.n_total = 40;
  cfg.x_start = {300.0, 400.0, 80.0};
  cfg.x_end = {300.0, 400.0, 80.0};
  const ChannelParams p = reference_params();
  const LosPredictorParams pred;
  const std::vector<Eigen::Vector2d> users{{430.0, 330.0}, {150.0, 480.0}};

  FimState fim = FimState::prior(2, 1e-2);
  std::vector<Eigen::Vector3d> traj{cfg.x_start};
  for (int n = 1; n < cfg.n_total; ++n) {
    fim.n = n;
    const Eigen::Vector3d next =
        greedy_step(traj.back(), fim, users, pred, p, cfg);
    REQUIRE((next - traj.back()).head<2>().norm() <= cfg.d_max + 1e-9);
    // feed the predicted contribution back so the planner explores
    std::vector<Eigen::Matrix2d> contrib;
    for (const auto& u : users)
      contrib.push_back(
          fim_contribution(next, u, los_probability(pred, next, u), p));
    fim = fim_accumulate(fim, contrib);
    traj.push_back(next);
  }
  REQUIRE(static_cast<int>(traj.size()) == cfg.n_total);
  REQUIRE((traj.back() - cfg.x_end).norm() <= cfg.neighbor_step / 2.0);

  // identical inputs, identical trajectory
  FimState fim2 = FimState::prior(2, 1e-2);
  std::vector<Eigen::Vector3d> traj2{cfg.x_start};
  for (int n = 1; n < cfg.n_total; ++n) {
    fim2.n = n;
    const Eigen::Vector3d next =
        greedy_step(traj2.back(), fim2, users, pred, p, cfg);
    std::vector<Eigen::Matrix2d> contrib;
    for (const auto& u : users)
      contrib.push_back(
          fim_contribution(next, u, los_probability(pred, next, u), p));
    fim2 = fim_accumulate(fim2, contrib);
    traj2.push_back(next);
  }
  for (std::size_t i = 0; i < traj.size(); ++i)
    REQUIRE((traj[i] - traj2[i]).norm() == 0.0);
}
