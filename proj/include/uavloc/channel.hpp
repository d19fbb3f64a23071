#pragma once

#include <cmath>
#include <random>
#include <stdexcept>

namespace uavloc {

enum class Segment { kLos = 0, kNlos = 1 };

inline Segment segment_of(bool los) { return los ? Segment::kLos : Segment::kNlos; }

// Per-segment propagation parameters. ToA quantities are kept as ranges in
// meters (c * tau); the speed of light never appears past the I/O boundary.
struct SegmentParams {
  double alpha = 0.0;      // path-loss slope, dB per decade of distance
  double beta = 0.0;       // gain at 1 m, dB
  double sigma = 1.0;      // shadowing std, dB
  double mu_tau = 0.0;     // ToA bias, meters (zero for LoS)
  double sigma_tau = 1.0;  // ToA std, meters
};

struct ChannelParams {
  SegmentParams los;
  SegmentParams nlos;
  double pi_los = 0.5;

  const SegmentParams& seg(Segment s) const {
    return s == Segment::kLos ? los : nlos;
  }
  SegmentParams& seg(Segment s) { return s == Segment::kLos ? los : nlos; }
  double prior(Segment s) const {
    return s == Segment::kLos ? pi_los : 1.0 - pi_los;
  }
};

inline double mean_gain(const SegmentParams& p, double distance) {
  return p.beta + p.alpha * std::log10(distance);
}

inline double sample_gain(const ChannelParams& params, double distance,
                          bool los, std::mt19937_64& rng) {
  if (!(distance > 0.0)) throw std::domain_error("sample_gain: distance <= 0");
  const SegmentParams& p = params.seg(segment_of(los));
  std::normal_distribution<double> shadow(0.0, p.sigma);
  return mean_gain(p, distance) + (p.sigma > 0.0 ? shadow(rng) : 0.0);
}

inline double sample_toa_range(const ChannelParams& params, double distance,
                               bool los, std::mt19937_64& rng) {
  if (!(distance > 0.0)) throw std::domain_error("sample_toa_range: distance <= 0");
  const SegmentParams& p = params.seg(segment_of(los));
  std::normal_distribution<double> noise(0.0, p.sigma_tau);
  return distance + p.mu_tau + (p.sigma_tau > 0.0 ? noise(rng) : 0.0);
}

inline double gaussian_logpdf(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * M_PI);
}

inline double gain_loglik(const ChannelParams& params, double gain,
                          double distance, Segment s) {
  if (!(distance > 0.0)) throw std::domain_error("gain_loglik: distance <= 0");
  const SegmentParams& p = params.seg(s);
  return gaussian_logpdf(gain, mean_gain(p, distance), p.sigma);
}

inline double toa_loglik(const ChannelParams& params, double toa_range,
                         double distance, Segment s) {
  if (!(distance > 0.0)) throw std::domain_error("toa_loglik: distance <= 0");
  const SegmentParams& p = params.seg(s);
  return gaussian_logpdf(toa_range, distance + p.mu_tau, p.sigma_tau);
}

}  // namespace uavloc
