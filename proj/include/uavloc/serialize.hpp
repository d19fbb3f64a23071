#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "uavloc/em.hpp"
#include "uavloc/measurement.hpp"
#include "uavloc/scenario.hpp"
#include "uavloc/slam.hpp"

namespace uavloc {

using json = nlohmann::ordered_json;

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open for writing: " + path.string());
  out.precision(17);
  return out;
}

}  // namespace detail

// ---- urban map ----

inline json map_to_json(const UrbanMap& map) {
  json j;
  j["area"] = {{"x_min", map.area.x_min}, {"x_max", map.area.x_max},
               {"y_min", map.area.y_min}, {"y_max", map.area.y_max}};
  j["buildings"] = json::array();
  for (const auto& b : map.buildings)
    j["buildings"].push_back({{"x_min", b.x_min}, {"x_max", b.x_max},
                              {"y_min", b.y_min}, {"y_max", b.y_max},
                              {"height", b.height}});
  j["bs_sites"] = json::array();
  for (const auto& s : map.bs_sites) j["bs_sites"].push_back({s.x(), s.y(), s.z()});
  return j;
}

inline UrbanMap map_from_json(const json& j) {
  UrbanMap map;
  const auto& a = j.at("area");
  map.area = {a.at("x_min"), a.at("x_max"), a.at("y_min"), a.at("y_max")};
  for (const auto& b : j.at("buildings"))
    map.buildings.push_back({b.at("x_min"), b.at("x_max"), b.at("y_min"),
                             b.at("y_max"), b.at("height")});
  for (const auto& s : j.at("bs_sites"))
    map.bs_sites.emplace_back(s.at(0).get<double>(), s.at(1).get<double>(),
                              s.at(2).get<double>());
  return map;
}

inline void save_map(const UrbanMap& map, const std::filesystem::path& path) {
  detail::open_out(path) << map_to_json(map).dump(2) << "\n";
}

inline UrbanMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  detail::require(in.good(), "cannot open map file: " + path.string());
  json j;
  in >> j;
  return map_from_json(j);
}

// ---- scenario ----

inline json scenario_to_json(const Scenario& sc) {
  json j;
  j["city"] = {{"area",
                {{"x_min", sc.city.area.x_min}, {"x_max", sc.city.area.x_max},
                 {"y_min", sc.city.area.y_min}, {"y_max", sc.city.area.y_max}}},
               {"n_buildings", sc.city.n_buildings},
               {"height_scale", sc.city.height_scale},
               {"height_min", sc.city.height_min},
               {"height_max", sc.city.height_max},
               {"side_min", sc.city.side_min},
               {"side_max", sc.city.side_max}};
  j["map_seed"] = sc.map_seed;
  if (!sc.map_file.empty()) j["map_file"] = sc.map_file;
  j["bs_sites"] = json::array();
  for (const auto& s : sc.bs_sites) j["bs_sites"].push_back({s.x(), s.y(), s.z()});
  j["n_users"] = sc.n_users;
  if (!sc.user_positions.empty()) {
    j["user_positions"] = json::array();
    for (const auto& u : sc.user_positions) j["user_positions"].push_back({u.x(), u.y()});
  }
  auto seg = [](const SegmentParams& p) {
    return json{{"alpha", p.alpha}, {"beta", p.beta}, {"sigma", p.sigma},
                {"mu_tau", p.mu_tau}, {"sigma_tau", p.sigma_tau}};
  };
  // sigma fields are stds; the quoted scenario variances (2 dB / 5 dB
  // shadowing, 5 m gps, 0.2 m/s vel) enter here via their square roots
  j["channel"] = {{"los", seg(sc.channel.los)}, {"nlos", seg(sc.channel.nlos)},
                  {"pi_los", sc.channel.pi_los}};
  j["odometry"] = {{"sigma_gps", sc.odometry.sigma_gps},
                   {"sigma_vel", sc.odometry.sigma_vel},
                   {"dt", sc.odometry.dt}};
  j["mission"] = {{"budget_m", sc.budget_m},
                  {"n_epochs", sc.n_epochs},
                  {"uav_altitude", sc.uav_altitude},
                  {"x_start", {sc.x_start.x(), sc.x_start.y(), sc.x_start.z()}},
                  {"x_end", {sc.x_end.x(), sc.x_end.y(), sc.x_end.z()}}};
  j["planner_mode"] = to_string(sc.planner_mode);
  j["estimator_mode"] = to_string(sc.estimator_mode);
  j["predictor"] = {{"a", sc.predictor.a}, {"b", sc.predictor.b}};
  j["prior_fim_eps"] = sc.prior_fim_eps;
  j["em"] = {{"max_iters", sc.em.max_iters},
             {"tol", sc.em.tol},
             {"min_sigma", sc.em.min_sigma},
             {"responsibility_floor", sc.em.responsibility_floor},
             {"count_denominators", sc.em.count_denominators}};
  j["solver"] = {{"max_iters", sc.solver.max_iters},
                 {"step_tol", sc.solver.step_tol},
                 {"lambda_init", sc.solver.lambda_init},
                 {"min_distance", sc.solver.min_distance}};
  j["outer"] = {{"max_iters", sc.max_outer}, {"tol", sc.outer_tol},
                {"grid_pitch", sc.grid_pitch}};
  if (!sc.seeds.empty()) j["seeds"] = sc.seeds;
  return j;
}

inline Scenario scenario_from_json(const json& j) {
  Scenario sc;
  if (j.contains("city")) {
    const auto& c = j["city"];
    if (c.contains("area")) {
      const auto& a = c["area"];
      sc.city.area = {a.at("x_min"), a.at("x_max"), a.at("y_min"), a.at("y_max")};
    }
    if (c.contains("n_buildings")) sc.city.n_buildings = c["n_buildings"];
    if (c.contains("height_scale")) sc.city.height_scale = c["height_scale"];
    if (c.contains("height_min")) sc.city.height_min = c["height_min"];
    if (c.contains("height_max")) sc.city.height_max = c["height_max"];
    if (c.contains("side_min")) sc.city.side_min = c["side_min"];
    if (c.contains("side_max")) sc.city.side_max = c["side_max"];
  }
  if (j.contains("map_seed")) sc.map_seed = j["map_seed"];
  if (j.contains("map_file")) sc.map_file = j["map_file"];
  if (j.contains("bs_sites")) {
    sc.bs_sites.clear();
    for (const auto& s : j["bs_sites"])
      sc.bs_sites.emplace_back(s.at(0).get<double>(), s.at(1).get<double>(),
                               s.at(2).get<double>());
  }
  if (j.contains("n_users")) sc.n_users = j["n_users"];
  if (j.contains("user_positions"))
    for (const auto& u : j["user_positions"])
      sc.user_positions.emplace_back(u.at(0).get<double>(), u.at(1).get<double>());
  auto read_seg = [](const json& s, SegmentParams& p) {
    p.alpha = s.at("alpha");
    p.beta = s.at("beta");
    p.sigma = s.at("sigma");
    p.mu_tau = s.at("mu_tau");
    p.sigma_tau = s.at("sigma_tau");
  };
  if (j.contains("channel")) {
    read_seg(j["channel"].at("los"), sc.channel.los);
    read_seg(j["channel"].at("nlos"), sc.channel.nlos);
    sc.channel.pi_los = j["channel"].at("pi_los");
  }
  if (j.contains("odometry")) {
    sc.odometry.sigma_gps = j["odometry"].at("sigma_gps");
    sc.odometry.sigma_vel = j["odometry"].at("sigma_vel");
    sc.odometry.dt = j["odometry"].at("dt");
  }
  if (j.contains("mission")) {
    const auto& m = j["mission"];
    sc.budget_m = m.at("budget_m");
    sc.n_epochs = m.at("n_epochs");
    sc.uav_altitude = m.at("uav_altitude");
    const auto& xs = m.at("x_start");
    const auto& xe = m.at("x_end");
    sc.x_start = {xs.at(0).get<double>(), xs.at(1).get<double>(), xs.at(2).get<double>()};
    sc.x_end = {xe.at(0).get<double>(), xe.at(1).get<double>(), xe.at(2).get<double>()};
  }
  if (j.contains("planner_mode")) {
    const std::string m = j["planner_mode"];
    if (m == "optimized") sc.planner_mode = PlannerMode::kOptimized;
    else if (m == "random-rectangle") sc.planner_mode = PlannerMode::kRandomRectangle;
    else if (m == "static-bs-only") sc.planner_mode = PlannerMode::kStaticBsOnly;
    else throw std::runtime_error("unknown planner_mode: " + m);
  }
  if (j.contains("estimator_mode")) {
    const std::string m = j["estimator_mode"];
    if (m == "full") sc.estimator_mode = EstimatorMode::kFull;
    else if (m == "rss-only") sc.estimator_mode = EstimatorMode::kRssOnly;
    else throw std::runtime_error("unknown estimator_mode: " + m);
  }
  if (j.contains("predictor")) {
    sc.predictor.a = j["predictor"].at("a");
    sc.predictor.b = j["predictor"].at("b");
  }
  if (j.contains("prior_fim_eps")) sc.prior_fim_eps = j["prior_fim_eps"];
  if (j.contains("em")) {
    const auto& e = j["em"];
    if (e.contains("max_iters")) sc.em.max_iters = e["max_iters"];
    if (e.contains("tol")) sc.em.tol = e["tol"];
    if (e.contains("min_sigma")) sc.em.min_sigma = e["min_sigma"];
    if (e.contains("responsibility_floor"))
      sc.em.responsibility_floor = e["responsibility_floor"];
    if (e.contains("count_denominators"))
      sc.em.count_denominators = e["count_denominators"];
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    if (s.contains("max_iters")) sc.solver.max_iters = s["max_iters"];
    if (s.contains("step_tol")) sc.solver.step_tol = s["step_tol"];
    if (s.contains("lambda_init")) sc.solver.lambda_init = s["lambda_init"];
    if (s.contains("min_distance")) sc.solver.min_distance = s["min_distance"];
  }
  if (j.contains("outer")) {
    const auto& o = j["outer"];
    if (o.contains("max_iters")) sc.max_outer = o["max_iters"];
    if (o.contains("tol")) sc.outer_tol = o["tol"];
    if (o.contains("grid_pitch")) sc.grid_pitch = o["grid_pitch"];
  }
  if (j.contains("seeds")) sc.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  detail::require(in.good(), "cannot open scenario file: " + path.string());
  json j;
  in >> j;
  return scenario_from_json(j);
}

inline void save_scenario(const Scenario& sc, const std::filesystem::path& path) {
  detail::open_out(path) << scenario_to_json(sc).dump(2) << "\n";
}

// ---- measurements (columnar, one row per measurement) ----

inline void save_measurements(const MeasurementSet& set,
                              const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "type,n,k,m,v1,v2,v3\n";
  for (std::size_t i = 0; i < set.gps.size(); ++i)
    out << "gps," << i + 1 << ",,," << set.gps[i].x() << "," << set.gps[i].y() << ","
        << set.gps[i].z() << "\n";
  for (std::size_t i = 0; i < set.vel.size(); ++i)
    out << "vel," << i + 2 << ",,," << set.vel[i].x() << "," << set.vel[i].y() << ",\n";
  for (int r = 0; r < set.uav_ue.rows; ++r)
    for (int c = 0; c < set.uav_ue.cols; ++c)
      out << "uav_ue," << r + 1 << "," << c + 1 << ",," << set.uav_ue.at(r, c).gain
          << "," << set.uav_ue.at(r, c).toa_range << ",\n";
  for (int r = 0; r < set.bs_uav.rows; ++r)
    for (int c = 0; c < set.bs_uav.cols; ++c)
      out << "bs_uav," << r + 1 << ",," << c + 1 << "," << set.bs_uav.at(r, c).gain
          << "," << set.bs_uav.at(r, c).toa_range << ",\n";
  for (int r = 0; r < set.bs_ue.rows; ++r)
    for (int c = 0; c < set.bs_ue.cols; ++c)
      out << "bs_ue,," << c + 1 << "," << r + 1 << "," << set.bs_ue.at(r, c).gain
          << "," << set.bs_ue.at(r, c).toa_range << ",\n";
}

// Ground-truth link states, kept apart from the measurement file so that
// estimator replays cannot see them by accident.
inline void save_measurement_truth(const MeasurementSet& set,
                                   const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "type,n,k,m,los\n";
  for (int r = 0; r < set.uav_ue.rows; ++r)
    for (int c = 0; c < set.uav_ue.cols; ++c)
      out << "uav_ue," << r + 1 << "," << c + 1 << ",,"
          << (set.uav_ue.at(r, c).true_los ? 1 : 0) << "\n";
  for (int r = 0; r < set.bs_uav.rows; ++r)
    for (int c = 0; c < set.bs_uav.cols; ++c)
      out << "bs_uav," << r + 1 << ",," << c + 1 << ","
          << (set.bs_uav.at(r, c).true_los ? 1 : 0) << "\n";
  for (int r = 0; r < set.bs_ue.rows; ++r)
    for (int c = 0; c < set.bs_ue.cols; ++c)
      out << "bs_ue,," << c + 1 << "," << r + 1 << ","
          << (set.bs_ue.at(r, c).true_los ? 1 : 0) << "\n";
}

inline MeasurementSet load_measurements(const std::filesystem::path& path) {
  std::ifstream in(path);
  detail::require(in.good(), "cannot open measurement file: " + path.string());
  MeasurementSet set;
  std::string line;
  std::getline(in, line);  // header
  struct Row { int n = 0, k = 0, m = 0; double v1 = 0, v2 = 0, v3 = 0; };
  std::vector<std::pair<std::string, Row>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    Row r;
    std::getline(ss, field, ',');
    const std::string type = field;
    std::getline(ss, field, ',');
    r.n = field.empty() ? 0 : std::stoi(field);
    std::getline(ss, field, ',');
    r.k = field.empty() ? 0 : std::stoi(field);
    std::getline(ss, field, ',');
    r.m = field.empty() ? 0 : std::stoi(field);
    std::getline(ss, field, ',');
    r.v1 = field.empty() ? 0.0 : std::stod(field);
    std::getline(ss, field, ',');
    r.v2 = field.empty() ? 0.0 : std::stod(field);
    std::getline(ss, field, ',');
    r.v3 = field.empty() ? 0.0 : std::stod(field);
    rows.emplace_back(type, r);
  }
  int n = 0, k = 0, m = 0;
  for (const auto& [type, r] : rows) {
    if (type == "gps") n = std::max(n, r.n);
    if (type == "uav_ue") k = std::max(k, r.k);
    if (type == "bs_uav") m = std::max(m, r.m);
    if (type == "bs_ue") { k = std::max(k, r.k); m = std::max(m, r.m); }
  }
  set.gps.resize(n, Eigen::Vector3d::Zero());
  set.vel.resize(std::max(n - 1, 0), Eigen::Vector2d::Zero());
  auto size_grid = [](LinkGrid& g, int rows_, int cols_) {
    g.rows = rows_;
    g.cols = cols_;
    g.items.assign(static_cast<std::size_t>(rows_) * cols_, LinkMeasurement{});
  };
  size_grid(set.uav_ue, k > 0 ? n : 0, k);
  size_grid(set.bs_uav, m > 0 ? n : 0, m);
  size_grid(set.bs_ue, (m > 0 && k > 0) ? m : 0, k);
  for (const auto& [type, r] : rows) {
    if (type == "gps") set.gps[r.n - 1] = {r.v1, r.v2, r.v3};
    else if (type == "vel") set.vel[r.n - 2] = {r.v1, r.v2};
    else if (type == "uav_ue") set.uav_ue.at(r.n - 1, r.k - 1) = {r.v1, r.v2, false};
    else if (type == "bs_uav") set.bs_uav.at(r.n - 1, r.m - 1) = {r.v1, r.v2, false};
    else if (type == "bs_ue") set.bs_ue.at(r.m - 1, r.k - 1) = {r.v1, r.v2, false};
  }
  return set;
}

// ---- learned channel, labels, solver trace ----

inline json channel_to_json(const ChannelParams& p) {
  auto seg = [](const SegmentParams& s) {
    return json{{"alpha", s.alpha}, {"beta", s.beta}, {"sigma", s.sigma},
                {"mu_tau", s.mu_tau}, {"sigma_tau", s.sigma_tau}};
  };
  return json{{"los", seg(p.los)}, {"nlos", seg(p.nlos)}, {"pi_los", p.pi_los}};
}

inline void save_channel_params(const ChannelParams& p,
                                const std::filesystem::path& path) {
  detail::open_out(path) << channel_to_json(p).dump(2) << "\n";
}

// Classifier output, one row per link: hard label and LoS responsibility.
inline void save_labels(const ClassificationState& labels, const MeasurementSet& set,
                        const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "type,n,k,m,label,omega_los\n";
  for (int r = 0; r < set.uav_ue.rows; ++r)
    for (int c = 0; c < set.uav_ue.cols; ++c) {
      const int i = r * set.uav_ue.cols + c;
      out << "uav_ue," << r + 1 << "," << c + 1 << ",,"
          << static_cast<int>(labels.w_uav_ue[i]) << "," << labels.omega_uav_ue[i]
          << "\n";
    }
  for (int r = 0; r < set.bs_uav.rows; ++r)
    for (int c = 0; c < set.bs_uav.cols; ++c) {
      const int i = r * set.bs_uav.cols + c;
      out << "bs_uav," << r + 1 << ",," << c + 1 << ","
          << static_cast<int>(labels.w_bs_uav[i]) << "," << labels.omega_bs_uav[i]
          << "\n";
    }
  for (int r = 0; r < set.bs_ue.rows; ++r)
    for (int c = 0; c < set.bs_ue.cols; ++c) {
      const int i = r * set.bs_ue.cols + c;
      out << "bs_ue,," << c + 1 << "," << r + 1 << ","
          << static_cast<int>(labels.w_bs_ue[i]) << "," << labels.omega_bs_ue[i]
          << "\n";
    }
}

// Solver convergence trace for plotting: loss, step norm, damping.
inline void save_solver_trace(const std::vector<IterationRecord>& trace,
                              const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "iteration,loss,step_norm,lambda,accepted\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << i << "," << trace[i].loss << "," << trace[i].step_norm << ","
        << trace[i].lambda << "," << (trace[i].accepted ? 1 : 0) << "\n";
}

}  // namespace uavloc
