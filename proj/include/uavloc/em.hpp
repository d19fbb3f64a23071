#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "uavloc/channel.hpp"

namespace uavloc {

struct EmConfig {
  int max_iters = 50;
  double tol = 1e-6;                    // relative parameter-change threshold
  double min_sigma = 1e-3;              // floor on learned stds, dB / meters
  double responsibility_floor = 1e-12;  // clamp on omega
  // Denominator of the sigma/pi/mu updates. The count variant divides by the
  // total measurement count; the default divides by the segment's own
  // responsibility mass, which keeps the updates at the maximizer of the EM
  // bound. The count variant understates a segment's spread and bias by its
  // mass share, which measurably degrades classification and the learned ToA
  // bias at mission scale, so it is opt-in.
  bool count_denominators = false;
  bool fit_slope = true;  // false pins alpha at 0 (intercept-only mixture)
};

// Soft responsibilities (probability of LoS) and hard labels per link
// measurement, one flat array per link family.
struct ClassificationState {
  std::vector<double> omega_uav_ue, omega_bs_uav, omega_bs_ue;
  std::vector<std::uint8_t> w_uav_ue, w_bs_uav, w_bs_ue;
};

struct GainMixture {
  double alpha_los = 0.0, beta_los = 0.0, sigma_los = 1.0;
  double alpha_nlos = 0.0, beta_nlos = 0.0, sigma_nlos = 1.0;
  double pi_los = 0.5;

  static GainMixture from(const ChannelParams& p) {
    return {p.los.alpha, p.los.beta, p.los.sigma,
            p.nlos.alpha, p.nlos.beta, p.nlos.sigma, p.pi_los};
  }
  void write_into(ChannelParams& p) const {
    p.los.alpha = alpha_los;
    p.los.beta = beta_los;
    p.los.sigma = sigma_los;
    p.nlos.alpha = alpha_nlos;
    p.nlos.beta = beta_nlos;
    p.nlos.sigma = sigma_nlos;
    p.pi_los = pi_los;
  }
};

// Responsibilities of the LoS component. Computed in log space so that far
// outliers cannot underflow; if both component log-densities are non-finite
// the point is assigned to the nearer mean.
inline std::vector<double> e_step(const GainMixture& mix,
                                  const std::vector<double>& phis,
                                  const std::vector<double>& gains,
                                  double floor = 1e-12) {
  if (phis.size() != gains.size())
    throw std::invalid_argument("e_step: size mismatch");
  std::vector<double> omega(gains.size());
  const double log_pi_l = std::log(std::max(mix.pi_los, 0.0));
  const double log_pi_n = std::log(std::max(1.0 - mix.pi_los, 0.0));
  for (std::size_t i = 0; i < gains.size(); ++i) {
    const double mean_l = mix.beta_los + mix.alpha_los * phis[i];
    const double mean_n = mix.beta_nlos + mix.alpha_nlos * phis[i];
    const double ll = log_pi_l + gaussian_logpdf(gains[i], mean_l, mix.sigma_los);
    const double ln = log_pi_n + gaussian_logpdf(gains[i], mean_n, mix.sigma_nlos);
    double om;
    if (!std::isfinite(ll) && !std::isfinite(ln)) {
      om = std::abs(gains[i] - mean_l) <= std::abs(gains[i] - mean_n) ? 1.0 : 0.0;
    } else if (!std::isfinite(ll)) {
      om = 0.0;
    } else if (!std::isfinite(ln)) {
      om = 1.0;
    } else {
      const double m = std::max(ll, ln);
      const double el = std::exp(ll - m), en = std::exp(ln - m);
      om = el / (el + en);
    }
    omega[i] = std::clamp(om, floor, 1.0 - floor);
  }
  return omega;
}

struct MStepResult {
  double alpha = 0.0, beta = 0.0, sigma = 0.0;
  double pi = 0.0;
  double mass = 0.0;        // sum of responsibilities in the segment
  bool empty = false;       // no responsibility mass at all
  bool degenerate = false;  // mass present but a singular normal matrix
};

namespace detail {

// Weighted line fit of gain on phi for one segment via the 2x2 normal
// equations; sigma and pi keep the configured denominator.
inline MStepResult m_step_segment(const std::vector<double>& omega,
                                  const std::vector<double>& gains,
                                  const std::vector<double>& phis,
                                  const EmConfig& cfg, bool los_side) {
  const double count = static_cast<double>(gains.size());
  double s1 = 0.0, sp = 0.0, spp = 0.0, sg = 0.0, spg = 0.0;
  for (std::size_t i = 0; i < gains.size(); ++i) {
    const double w = los_side ? omega[i] : 1.0 - omega[i];
    s1 += w;
    sp += w * phis[i];
    spp += w * phis[i] * phis[i];
    sg += w * gains[i];
    spg += w * phis[i] * gains[i];
  }

  MStepResult r;
  r.mass = s1;
  r.pi = s1 / count;
  if (s1 <= count * 1e-9) {
    r.empty = true;
    r.sigma = cfg.min_sigma;
    return r;
  }

  if (cfg.fit_slope) {
    const double det = spp * s1 - sp * sp;
    const double scale = std::max(spp * s1, sp * sp);
    if (!(det > 1e-12 * std::max(scale, 1e-300))) {
      r.degenerate = true;
      return r;
    }
    r.alpha = (s1 * spg - sp * sg) / det;
    r.beta = (spp * sg - sp * spg) / det;
  } else {
    r.alpha = 0.0;
    r.beta = sg / s1;
  }

  double ssr = 0.0;
  for (std::size_t i = 0; i < gains.size(); ++i) {
    const double w = los_side ? omega[i] : 1.0 - omega[i];
    const double e = gains[i] - r.beta - r.alpha * phis[i];
    ssr += w * e * e;
  }
  const double denom = cfg.count_denominators ? count : s1;
  r.sigma = std::max(std::sqrt(ssr / denom), cfg.min_sigma);
  return r;
}

}  // namespace detail

// Closed-form M-step over both segments. Throws when a segment holds
// responsibility mass but its normal matrix is singular (all of the mass at
// a single distance); a segment with no mass comes back with pi ~ 0.
inline GainMixture m_step_gain(const std::vector<double>& omega,
                               const std::vector<double>& gains,
                               const std::vector<double>& phis,
                               const EmConfig& cfg = {}) {
  if (omega.size() != gains.size() || gains.size() != phis.size())
    throw std::invalid_argument("m_step_gain: size mismatch");
  const MStepResult l = detail::m_step_segment(omega, gains, phis, cfg, true);
  const MStepResult n = detail::m_step_segment(omega, gains, phis, cfg, false);
  if (l.degenerate)
    throw std::runtime_error("m_step_gain: LoS segment degenerate (needs >=2 distinct distances with responsibility)");
  if (n.degenerate)
    throw std::runtime_error("m_step_gain: NLoS segment degenerate (needs >=2 distinct distances with responsibility)");
  return {l.alpha, l.beta, l.sigma, n.alpha, n.beta, n.sigma, l.pi};
}

// Value of the EM lower bound sum_i sum_s omega_is [log(pi_s f_s(g_i)) - log omega_is].
inline double em_surrogate(const GainMixture& mix, const std::vector<double>& omega,
                           const std::vector<double>& gains,
                           const std::vector<double>& phis) {
  double value = 0.0;
  const double log_pi_l = std::log(std::max(mix.pi_los, 1e-300));
  const double log_pi_n = std::log(std::max(1.0 - mix.pi_los, 1e-300));
  for (std::size_t i = 0; i < gains.size(); ++i) {
    const double ol = omega[i], on = 1.0 - omega[i];
    const double ll = log_pi_l +
        gaussian_logpdf(gains[i], mix.beta_los + mix.alpha_los * phis[i], mix.sigma_los);
    const double ln = log_pi_n +
        gaussian_logpdf(gains[i], mix.beta_nlos + mix.alpha_nlos * phis[i], mix.sigma_nlos);
    if (ol > 0.0) value += ol * (ll - std::log(ol));
    if (on > 0.0) value += on * (ln - std::log(on));
  }
  return value;
}

// Deterministic data-driven initialization: split at the median residual of
// a single pooled line fit, stronger half seeds the LoS segment.
inline GainMixture init_gain_mixture(const std::vector<double>& gains,
                                     const std::vector<double>& phis,
                                     const EmConfig& cfg = {}) {
  if (gains.size() < 4)
    throw std::invalid_argument("init_gain_mixture: too few measurements");
  std::vector<double> ones(gains.size(), 1.0);
  EmConfig pooled_cfg = cfg;
  pooled_cfg.count_denominators = false;
  const MStepResult pooled =
      detail::m_step_segment(ones, gains, phis, pooled_cfg, true);
  if (pooled.degenerate)
    throw std::runtime_error("init_gain_mixture: all measurements at one distance");

  std::vector<double> resid(gains.size());
  for (std::size_t i = 0; i < gains.size(); ++i)
    resid[i] = gains[i] - pooled.beta - pooled.alpha * phis[i];
  std::vector<double> sorted = resid;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];

  std::vector<double> omega(gains.size());
  for (std::size_t i = 0; i < gains.size(); ++i)
    omega[i] = resid[i] > median ? 1.0 - cfg.responsibility_floor
                                 : cfg.responsibility_floor;
  GainMixture mix = m_step_gain(omega, gains, phis, pooled_cfg);
  mix.pi_los = 0.5;
  return mix;
}

struct EmGainResult {
  GainMixture mixture;
  std::vector<double> omega;      // final responsibilities (LoS)
  std::vector<double> surrogate;  // lower-bound value per iteration
  int iterations = 0;
  bool surrogate_monotone = true;  // test hook, 1e-9 relative tolerance
  bool swapped = false;            // segment identities canonicalized
};

// Alternates E and M steps until the relative parameter change drops below
// tol or max_iters is hit. A segment that loses essentially all mass keeps
// its previous line and variance (collapsed mixture, pi -> 0).
inline EmGainResult run_em_gain(const EmConfig& cfg, const GainMixture& init,
                                const std::vector<double>& gains,
                                const std::vector<double>& phis) {
  if (gains.size() != phis.size())
    throw std::invalid_argument("run_em_gain: size mismatch");
  if (!(init.sigma_los > 0.0 && init.sigma_nlos > 0.0))
    throw std::invalid_argument("run_em_gain: non-positive initial sigma");

  EmGainResult res;
  res.mixture = init;
  const double count = static_cast<double>(gains.size());

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    res.omega = e_step(res.mixture, phis, gains, cfg.responsibility_floor);
    res.surrogate.push_back(em_surrogate(res.mixture, res.omega, gains, phis));
    res.iterations = iter + 1;
    if (res.surrogate.size() >= 2) {
      const double prev = res.surrogate[res.surrogate.size() - 2];
      const double cur = res.surrogate.back();
      const double scale = std::max({std::abs(prev), std::abs(cur), 1.0});
      if (cur < prev - 1e-9 * scale) res.surrogate_monotone = false;
    }

    const MStepResult l = detail::m_step_segment(res.omega, gains, phis, cfg, true);
    const MStepResult n = detail::m_step_segment(res.omega, gains, phis, cfg, false);
    GainMixture next = res.mixture;
    if (!l.degenerate && !l.empty) {
      next.alpha_los = l.alpha;
      next.beta_los = l.beta;
      next.sigma_los = l.sigma;
    }
    if (!n.degenerate && !n.empty) {
      next.alpha_nlos = n.alpha;
      next.beta_nlos = n.beta;
      next.sigma_nlos = n.sigma;
    }
    next.pi_los = l.pi;

    const double change = std::max({std::abs(next.alpha_los - res.mixture.alpha_los),
                                    std::abs(next.beta_los - res.mixture.beta_los),
                                    std::abs(next.sigma_los - res.mixture.sigma_los),
                                    std::abs(next.alpha_nlos - res.mixture.alpha_nlos),
                                    std::abs(next.beta_nlos - res.mixture.beta_nlos),
                                    std::abs(next.sigma_nlos - res.mixture.sigma_nlos),
                                    std::abs(next.pi_los - res.mixture.pi_los)});
    const double scale = std::max({std::abs(res.mixture.beta_los),
                                   std::abs(res.mixture.beta_nlos), 1.0});
    res.mixture = next;
    if (change < cfg.tol * scale) break;
  }

  // Mixture components are exchangeable; keep LoS as the stronger channel so
  // the zero-bias ToA convention lands on the right segment. Strength is
  // compared at the mean log-distance of the data: the fitted lines can cross,
  // so the intercept at 1 m is extrapolated far outside the data and is not a
  // reliable discriminator. Skip the check when either side has collapsed.
  const double mass_l = [&] {
    double s = 0.0;
    for (double o : res.omega) s += o;
    return s;
  }();
  double phi_bar = 0.0;
  for (double ph : phis) phi_bar += ph;
  phi_bar /= std::max(count, 1.0);
  const double gain_l = res.mixture.beta_los + res.mixture.alpha_los * phi_bar;
  const double gain_n = res.mixture.beta_nlos + res.mixture.alpha_nlos * phi_bar;
  if (mass_l > 1e-6 * count && count - mass_l > 1e-6 * count && gain_l < gain_n) {
    std::swap(res.mixture.alpha_los, res.mixture.alpha_nlos);
    std::swap(res.mixture.beta_los, res.mixture.beta_nlos);
    std::swap(res.mixture.sigma_los, res.mixture.sigma_nlos);
    res.mixture.pi_los = 1.0 - res.mixture.pi_los;
    for (double& o : res.omega) o = 1.0 - o;
    res.swapped = true;
  }
  return res;
}

struct ToaFit {
  double mu_los = 0.0, sigma_los = 0.0;
  double mu_nlos = 0.0, sigma_nlos = 0.0;
  bool los_from_prior = false;  // segment had no responsibility mass
  bool nlos_from_prior = false;
};

// Weighted first and second moments of the range excess (toa_range - distance)
// using the final-iteration responsibilities; the LoS bias is clamped to zero
// afterwards per the channel model convention.
inline ToaFit fit_toa_params(const std::vector<double>& omega,
                             const std::vector<double>& toa_ranges,
                             const std::vector<double>& distances,
                             const SegmentParams& prior_los,
                             const SegmentParams& prior_nlos,
                             const EmConfig& cfg = {}) {
  if (omega.size() != toa_ranges.size() || toa_ranges.size() != distances.size())
    throw std::invalid_argument("fit_toa_params: size mismatch");
  const double count = static_cast<double>(omega.size());

  ToaFit fit;
  for (int side = 0; side < 2; ++side) {
    const bool los_side = side == 0;
    double mass = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < omega.size(); ++i) {
      const double w = los_side ? omega[i] : 1.0 - omega[i];
      mass += w;
      sum += w * (toa_ranges[i] - distances[i]);
    }
    double& mu = los_side ? fit.mu_los : fit.mu_nlos;
    double& sig = los_side ? fit.sigma_los : fit.sigma_nlos;
    if (mass <= count * 1e-9) {
      const SegmentParams& prior = los_side ? prior_los : prior_nlos;
      mu = prior.mu_tau;
      sig = prior.sigma_tau;
      (los_side ? fit.los_from_prior : fit.nlos_from_prior) = true;
      continue;
    }
    const double denom = cfg.count_denominators ? count : mass;
    mu = sum / denom;
    double ssr = 0.0;
    for (std::size_t i = 0; i < omega.size(); ++i) {
      const double w = los_side ? omega[i] : 1.0 - omega[i];
      const double e = toa_ranges[i] - distances[i] - mu;
      ssr += w * e * e;
    }
    sig = std::max(std::sqrt(ssr / denom), cfg.min_sigma);
  }
  fit.mu_los = 0.0;
  return fit;
}

// w = 1 iff the LoS responsibility strictly exceeds one half; ties go NLoS.
inline std::vector<std::uint8_t> hard_classify(const std::vector<double>& omega) {
  std::vector<std::uint8_t> w(omega.size());
  for (std::size_t i = 0; i < omega.size(); ++i) w[i] = omega[i] > 0.5 ? 1 : 0;
  return w;
}

}  // namespace uavloc
