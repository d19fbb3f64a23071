#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace uavloc {

struct Rect {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
};

// Axis-aligned rectangular prism standing on the ground plane.
struct Building {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  double height = 0.0;

  bool footprint_contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
  bool overlaps(const Building& other) const {
    return x_min < other.x_max && other.x_min < x_max &&
           y_min < other.y_max && other.y_min < y_max;
  }
};

// Immutable after construction; safe to share across concurrent trials.
struct UrbanMap {
  Rect area;
  std::vector<Building> buildings;
  std::vector<Eigen::Vector3d> bs_sites;
};

struct CityConfig {
  Rect area{0.0, 500.0, 0.0, 500.0};
  int n_buildings = 30;
  double height_scale = 20.0;  // Rayleigh scale, meters
  double height_min = 5.0;
  double height_max = 40.0;
  double side_min = 25.0;  // footprint edge range, meters
  double side_max = 55.0;
  int max_attempts_per_building = 100;
};

// Non-overlapping rejection placement; heights Rayleigh(height_scale)
// clamped into [height_min, height_max]. Deterministic per seed.
inline UrbanMap generate_city(std::uint64_t seed, const CityConfig& cfg) {
  if (cfg.area.width() <= 0.0 || cfg.area.height() <= 0.0)
    throw std::invalid_argument("generate_city: degenerate area");
  if (cfg.n_buildings < 0)
    throw std::invalid_argument("generate_city: negative building count");
  if (!(cfg.height_min > 0.0 && cfg.height_min < cfg.height_max))
    throw std::invalid_argument("generate_city: invalid height range");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  UrbanMap map;
  map.area = cfg.area;
  map.buildings.reserve(static_cast<std::size_t>(cfg.n_buildings));

  const long budget =
      static_cast<long>(cfg.max_attempts_per_building) * std::max(cfg.n_buildings, 1);
  long attempts = 0;
  while (static_cast<int>(map.buildings.size()) < cfg.n_buildings) {
    if (++attempts > budget)
      throw std::runtime_error(
          "generate_city: placement failed, building density too high for area");

    const double sx = cfg.side_min + (cfg.side_max - cfg.side_min) * unit(rng);
    const double sy = cfg.side_min + (cfg.side_max - cfg.side_min) * unit(rng);
    if (sx > cfg.area.width() || sy > cfg.area.height()) continue;
    const double x0 = cfg.area.x_min + (cfg.area.width() - sx) * unit(rng);
    const double y0 = cfg.area.y_min + (cfg.area.height() - sy) * unit(rng);

    // Rayleigh via inverse CDF, clamped into the configured range.
    const double u = std::max(unit(rng), 1e-12);
    const double h_raw = cfg.height_scale * std::sqrt(-2.0 * std::log(u));
    const double h = std::clamp(h_raw, cfg.height_min, cfg.height_max);

    Building b{x0, x0 + sx, y0, y0 + sy, h};
    bool clash = false;
    for (const auto& other : map.buildings)
      if (b.overlaps(other)) { clash = true; break; }
    if (!clash) map.buildings.push_back(b);
  }
  return map;
}

// Segment/prism test via the slab method. Blocked only when the segment
// spends an interval of positive length inside the closed box, so grazing
// a face or corner does not count.
inline bool segment_hits_building(const Eigen::Vector3d& p, const Eigen::Vector3d& q,
                                  const Building& b) {
  const double lo[3] = {b.x_min, b.y_min, 0.0};
  const double hi[3] = {b.x_max, b.y_max, b.height};
  double t0 = 0.0, t1 = 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    const double d = q[axis] - p[axis];
    if (std::abs(d) < 1e-15) {
      if (p[axis] < lo[axis] || p[axis] > hi[axis]) return false;
      continue;
    }
    double ta = (lo[axis] - p[axis]) / d;
    double tb = (hi[axis] - p[axis]) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return false;
  }
  return true;
}

// True iff the open segment p->q intersects no building volume.
inline bool is_los(const UrbanMap& map, const Eigen::Vector3d& p,
                   const Eigen::Vector3d& q) {
  if ((p - q).squaredNorm() == 0.0)
    throw std::invalid_argument("is_los: coincident endpoints");
  for (const auto& b : map.buildings)
    if (segment_hits_building(p, q, b)) return false;
  return true;
}

// Sigmoid LoS-probability predictor in the elevation angle. Coefficients
// come from a city-dependent fit and are plain config inputs here; with
// a < 0 the probability increases toward overhead geometry.
struct LosPredictorParams {
  double a = -9.6;
  double b = 2.688;
};

inline double los_probability(const LosPredictorParams& params,
                              const Eigen::Vector3d& uav,
                              const Eigen::Vector2d& user) {
  const double r = (uav.head<2>() - user).norm();
  const double psi = (r > 0.0) ? std::atan2(uav.z(), r) : (M_PI / 2.0);
  return 1.0 / (1.0 + std::exp(params.a * psi + params.b));
}

}  // namespace uavloc
