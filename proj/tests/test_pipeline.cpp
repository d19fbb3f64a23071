#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "uavloc/mission.hpp"
#include "uavloc/pipeline.hpp"
#include "uavloc/random.hpp"

using namespace uavloc;

namespace {

ChannelParams reference_params() {
  ChannelParams p;
  p.los = {-22.0, -32.0, std::sqrt(2.0), 0.0, 2.0};
  p.nlos = {-32.0, -35.0, std::sqrt(5.0), 50.0, 40.0};
  return p;
}

UrbanMap small_city(int buildings = 15) {
  CityConfig cfg;
  cfg.area = {0.0, 400.0, 0.0, 400.0};
  cfg.n_buildings = buildings;
  cfg.side_min = 20.0;
  cfg.side_max = 45.0;
  UrbanMap map = generate_city(23, cfg);
  map.bs_sites = {{60.0, 60.0, 25.0}, {340.0, 80.0, 25.0}, {150.0, 340.0, 25.0}};
  return map;
}

}  // namespace

TEST_CASE("pool_links flattens every family and scatter restores shape") {
  UrbanMap map = small_city(0);
  auto rng = make_rng(101);
  std::vector<Eigen::Vector3d> traj{{100.0, 100.0, 80.0}, {110.0, 100.0, 80.0}};
  std::vector<Eigen::Vector2d> users{{200.0, 150.0}, {50.0, 250.0}};
  const MeasurementSet set =
      collect_mission(map, reference_params(), OdometryNoise{}, traj, users, rng);
  const PooledLinks pooled = pool_links(set);
  REQUIRE(pooled.size() == static_cast<std::size_t>(2 * 2 + 2 * 3 + 3 * 2));

  std::vector<double> omega(pooled.size());
  for (std::size_t i = 0; i < omega.size(); ++i) omega[i] = i % 2 ? 0.9 : 0.1;
  const ClassificationState cls = scatter_labels(pooled, omega, set);
  REQUIRE(cls.omega_uav_ue.size() == 4);
  REQUIRE(cls.omega_bs_uav.size() == 6);
  REQUIRE(cls.omega_bs_ue.size() == 6);
  REQUIRE(cls.w_uav_ue.size() == 4);
  // every pooled entry landed somewhere exactly once
  double sum = 0.0;
  for (double o : cls.omega_uav_ue) sum += o;
  for (double o : cls.omega_bs_uav) sum += o;
  for (double o : cls.omega_bs_ue) sum += o;
  double expect = 0.0;
  for (double o : omega) expect += o;
  REQUIRE(sum == Catch::Approx(expect));
}

TEST_CASE("run_algorithm1 is a fixed point on noiseless data from the truth") {
  UrbanMap map = small_city(0);
  ChannelParams quiet = reference_params();
  quiet.los.sigma = quiet.nlos.sigma = 0.0;
  quiet.los.sigma_tau = quiet.nlos.sigma_tau = 0.0;
  OdometryNoise no_noise{0.0, 0.0, 1.0};

  std::vector<Eigen::Vector3d> traj;
  for (int i = 0; i < 12; ++i) traj.emplace_back(80.0 + 20.0 * i, 180.0, 80.0);
  std::vector<Eigen::Vector2d> users{{150.0, 90.0}};
  auto rng = make_rng(102);
  const MeasurementSet set = collect_mission(map, quiet, no_noise, traj, users, rng);

  Algorithm1Config cfg;
  cfg.noise = OdometryNoise{1.0, 1.0, 1.0};  // finite weights for the solver
  cfg.uav_altitude = 80.0;

  StateVector truth = StateVector::zeros(12, 1, 80.0);
  for (int i = 0; i < 12; ++i) truth.set_uav(i, traj[i].head<2>());
  truth.set_user(0, users[0]);
  ChannelParams warm_params = reference_params();
  const Algorithm1Result res =
      run_algorithm1(set, map, cfg, WarmStart{truth, warm_params});
  REQUIRE(res.converged);
  REQUIRE(res.outer_iterations == 1);
  REQUIRE((res.state.values - truth.values).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("run_algorithm1 outer losses match the oracle and do not increase") {
  UrbanMap map = small_city();
  const ChannelParams truth = reference_params();
  OdometryNoise noise;
  std::vector<Eigen::Vector3d> traj;
  for (int i = 0; i < 30; ++i)
    traj.emplace_back(60.0 + 9.0 * i, 120.0 + 60.0 * std::sin(0.4 * i), 80.0);
  std::vector<Eigen::Vector2d> users{{140.0, 90.0}, {260.0, 210.0}, {90.0, 300.0}};
  auto rng = make_rng(103);
  const MeasurementSet set = collect_mission(map, truth, noise, traj, users, rng);

  Algorithm1Config cfg;
  cfg.noise = noise;
  const Algorithm1Result res = run_algorithm1(set, map, cfg);
  REQUIRE_FALSE(res.outer_losses.empty());
  // every SLAM phase descends the objective it was handed; the raw values are
  // not comparable across iterations because the learned variances re-weight
  // the loss itself
  REQUIRE(res.outer_losses.size() == res.outer_losses_before.size());
  for (std::size_t i = 0; i < res.outer_losses.size(); ++i)
    REQUIRE(res.outer_losses[i] <=
            res.outer_losses_before[i] * (1.0 + 1e-6) + 1e-9);

  // recorded loss equals an independent termwise evaluation at the returned state
  const oracles::DirectLoss oracle = oracles::direct_mission_loss(
      set, res.labels, res.params, noise, map, res.state);
  REQUIRE(res.outer_losses.back() ==
          Catch::Approx(oracle.weighted_sq).epsilon(1e-9));

  // users land close to the truth on this well-conditioned instance
  for (std::size_t k = 0; k < users.size(); ++k)
    REQUIRE((res.state.user(static_cast<int>(k)) - users[k]).norm() < 10.0);
}

TEST_CASE("extend_state preserves estimates and seeds new nodes from GPS") {
  MeasurementSet set;
  set.gps = {{1.0, 2.0, 80.0}, {3.0, 4.0, 80.0}, {5.0, 6.0, 80.0}};
  StateVector prev = StateVector::zeros(2, 1, 80.0);
  prev.set_uav(0, {10.0, 10.0});
  prev.set_uav(1, {20.0, 20.0});
  prev.set_user(0, {30.0, 30.0});
  const StateVector ext = extend_state(prev, set);
  REQUIRE(ext.n_uav == 3);
  REQUIRE((ext.uav(0) - prev.uav(0)).norm() == 0.0);
  REQUIRE((ext.uav(1) - prev.uav(1)).norm() == 0.0);
  REQUIRE(ext.uav(2).x() == 5.0);
  REQUIRE((ext.user(0) - prev.user(0)).norm() == 0.0);
}

TEST_CASE("online mission with zero measurement noise localizes almost exactly") {
  UrbanMap map = small_city(8);
  ChannelParams quiet = reference_params();
  quiet.los.sigma = quiet.nlos.sigma = 0.0;
  quiet.los.sigma_tau = quiet.nlos.sigma_tau = 0.0;
  OdometryNoise no_noise{0.0, 0.0, 1.0};

  PlannerConfig pc;
  pc.d_max = 10.0;
  pc.neighbor_step = 10.0;
  pc.n_total = 30;
  pc.x_start = {200.0, 200.0, 80.0};
  pc.x_end = {200.0, 200.0, 80.0};

  Algorithm1Config cfg;
  cfg.noise = OdometryNoise{1.0, 1.0, 1.0};
  std::vector<Eigen::Vector2d> users{{120.0, 140.0}, {300.0, 260.0}};
  auto rng = make_rng(104);
  const MissionRecord rec = run_mission_online(map, users, quiet, no_noise, {}, pc,
                                               cfg, rng);
  REQUIRE(rec.solver_failures == 0);
  REQUIRE(static_cast<int>(rec.true_traj.size()) == pc.n_total);
  for (std::size_t k = 0; k < users.size(); ++k)
    REQUIRE((rec.estimate.state.user(static_cast<int>(k)) - users[k]).norm() < 0.5);
}

TEST_CASE("the planner steers toward the badly-conditioned user") {
  // one user enjoys open LoS next to the start, the other hides in a block
  // cluster far away; the informative trajectory must close in on the latter
  UrbanMap map;
  map.area = {0.0, 400.0, 0.0, 400.0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      map.buildings.push_back({290.0 + 36.0 * i, 316.0 + 36.0 * i,
                               40.0 + 36.0 * j, 66.0 + 36.0 * j, 38.0});
  map.bs_sites = {{60.0, 60.0, 25.0}, {340.0, 80.0, 25.0}, {150.0, 340.0, 25.0}};
  ChannelParams truth;
  truth.los = {-22.0, -32.0, std::sqrt(2.0), 0.0, 2.0};
  truth.nlos = {-32.0, -35.0, std::sqrt(5.0), 50.0, 40.0};
  OdometryNoise noise;
  const std::vector<Eigen::Vector2d> users{{110.0, 310.0}, {338.0, 90.0}};

  PlannerConfig pc;
  pc.d_max = 10.0;
  pc.neighbor_step = 10.0;
  pc.n_total = 90;
  pc.x_start = {120.0, 280.0, 80.0};
  pc.x_end = {120.0, 280.0, 80.0};
  Algorithm1Config cfg;
  cfg.noise = noise;
  auto rng = make_rng(106);
  const MissionRecord rec =
      run_mission_online(map, users, truth, noise, {}, pc, cfg, rng);

  const double start_dist = (pc.x_start.head<2>() - users[1]).norm();
  double closest = start_dist;
  for (const auto& x : rec.true_traj)
    closest = std::min(closest, (x.head<2>() - users[1]).norm());
  REQUIRE(closest < 0.7 * start_dist);
}

TEST_CASE("online mission respects motion constraints and beats BS-only") {
  UrbanMap map = small_city();
  const ChannelParams truth = reference_params();
  OdometryNoise noise;
  std::vector<Eigen::Vector2d> users{{110.0, 120.0}, {290.0, 180.0}, {200.0, 320.0}};

  PlannerConfig pc;
  pc.d_max = 12.0;
  pc.neighbor_step = 12.0;
  pc.n_total = 40;
  pc.x_start = {200.0, 200.0, 80.0};
  pc.x_end = {200.0, 200.0, 80.0};

  Algorithm1Config cfg;
  cfg.noise = noise;
  auto rng = make_rng(105);
  const MissionRecord rec =
      run_mission_online(map, users, truth, noise, {}, pc, cfg, rng);

  for (std::size_t i = 1; i < rec.true_traj.size(); ++i)
    REQUIRE((rec.true_traj[i] - rec.true_traj[i - 1]).head<2>().norm() <=
            pc.d_max + 1e-9);
  REQUIRE((rec.true_traj.back() - pc.x_end).norm() <= pc.neighbor_step / 2.0);
  REQUIRE(rec.epochs.size() == rec.true_traj.size());
  // CRB estimate shrinks as information accumulates
  REQUIRE(rec.epochs.back().crb_trace < rec.epochs.front().crb_trace);

  double mission_err = 0.0;
  for (std::size_t k = 0; k < users.size(); ++k)
    mission_err += (rec.estimate.state.user(static_cast<int>(k)) - users[k]).norm();

  // same world, BS links only
  auto rng2 = make_rng(105);
  const MeasurementSet bs_set =
      collect_mission(map, truth, noise, {}, users, rng2);
  const Algorithm1Result bs_est = run_algorithm1(bs_set, map, cfg, {},
                                                 static_cast<int>(users.size()));
  double bs_err = 0.0;
  for (std::size_t k = 0; k < users.size(); ++k)
    bs_err += (bs_est.state.user(static_cast<int>(k)) - users[k]).norm();
  REQUIRE(mission_err < bs_err);
}
