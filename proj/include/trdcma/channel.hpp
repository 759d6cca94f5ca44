// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#ifndef TRDCMA_CHANNEL_HPP
#define TRDCMA_CHANNEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trdcma/rng.hpp"
#include "trdcma/sigcore.hpp"

namespace trdcma {

// Cluster/ray double-Poisson multipath parameters (Saleh-Valenzuela family).
// Defaults are the CM3 4-10 m non-line-of-sight indoor set.
template <typename Real>
struct BasicMultipathParams {
  Real cluster_rate_per_ns = Real(0.0667);  // Lambda
  Real ray_rate_per_ns = Real(2.1);         // lambda
  Real cluster_decay_ns = Real(14.0);       // Gamma
  Real ray_decay_ns = Real(7.9);            // gamma
  Real cluster_fade_db = Real(3.3941);      // sigma_1
  Real ray_fade_db = Real(3.3941);          // sigma_2
  Real shadowing_db = Real(3.0);            // sigma_x
  Real max_excess_delay_ns = Real(80.0);
  bool shadowing_enabled = false;

  static BasicMultipathParams cm3() { return BasicMultipathParams{}; }

  void validate() const {
    require(cluster_rate_per_ns > Real(0) && ray_rate_per_ns > Real(0),
            "MultipathParams: arrival rates must be > 0");
    require(cluster_decay_ns > Real(0) && ray_decay_ns > Real(0),
            "MultipathParams: decay constants must be > 0");
    require(cluster_fade_db >= Real(0) && ray_fade_db >= Real(0) &&
                shadowing_db >= Real(0),
            "MultipathParams: fading deviations must be >= 0");
    require(max_excess_delay_ns > cluster_decay_ns,
            "MultipathParams: max excess delay must exceed the cluster decay");
  }
};

using MultipathParams = BasicMultipathParams<double>;

template <typename Real>
struct Tap {
  Real delay = Real(0);  // seconds
  Real gain = Real(0);   // signed linear amplitude
};

// One drawn multipath realization: delay-sorted real taps with unit total
// tap energy (sum of gain^2 == 1).
template <typename Real>
struct BasicChannelRealization {
  std::vector<Tap<Real>> taps;
  std::uint64_t seed = 0;
  int resample_count = 0;

  Real tap_energy() const {
    Real e = Real(0);
    for (const auto& t : taps) e += t.gain * t.gain;
    return e;
  }
  Real max_delay() const {
    Real d = Real(0);
    for (const auto& t : taps) d = std::max(d, t.delay);
    return d;
  }
};

using ChannelRealization = BasicChannelRealization<double>;

namespace detail {

// Cluster arrival times in ns on [0, horizon); the first cluster sits at 0.
template <typename Real>
std::vector<Real> cluster_arrivals(const BasicMultipathParams<Real>& params,
                                   Real horizon_ns, Rng& rng) {
  std::vector<Real> arrivals;
  Real t = Real(0);
  while (t < horizon_ns) {
    arrivals.push_back(t);
    t += static_cast<Real>(
        rng.exponential(static_cast<double>(params.cluster_rate_per_ns)));
  }
  return arrivals;
}

template <typename Real>
bool try_draw(const BasicMultipathParams<Real>& params, Rng& rng,
              std::vector<Tap<Real>>& taps) {
  taps.clear();
  const Real horizon = params.max_excess_delay_ns;
  const Real sigma_tot_db = std::sqrt(
      params.cluster_fade_db * params.cluster_fade_db +
      params.ray_fade_db * params.ray_fade_db);
  const Real ln10 = static_cast<Real>(M_LN10);

  const auto clusters = cluster_arrivals(params, horizon, rng);
  for (const Real cluster_t : clusters) {
    Real ray_t = Real(0);  // first ray coincides with the cluster arrival
    while (cluster_t + ray_t < horizon) {
      // 10*log10(exp(-T/Gamma - tau/gamma)); the lognormal mean is shifted
      // below so that E[gain^2] matches this decay profile.
      const Real mean_pow_db =
          Real(-10) * (cluster_t / params.cluster_decay_ns +
                       ray_t / params.ray_decay_ns) /
          ln10;
      const Real mu_db =
          mean_pow_db - sigma_tot_db * sigma_tot_db * ln10 / Real(20);
      const Real amp_db =
          mu_db + sigma_tot_db * static_cast<Real>(rng.normal());
      const Real gain = static_cast<Real>(rng.sign()) *
                        std::pow(Real(10), amp_db / Real(20));
      taps.push_back({(cluster_t + ray_t) * Real(1e-9), gain});
      ray_t += static_cast<Real>(
          rng.exponential(static_cast<double>(params.ray_rate_per_ns)));
    }
  }

  if (params.shadowing_enabled) {
    const Real shadow = std::pow(
        Real(10),
        params.shadowing_db * static_cast<Real>(rng.normal()) / Real(20));
    for (auto& t : taps) t.gain *= shadow;
  }

  std::stable_sort(taps.begin(), taps.end(),
                   [](const Tap<Real>& a, const Tap<Real>& b) {
                     return a.delay < b.delay;
                   });

  Real e = Real(0);
  for (const auto& t : taps) e += t.gain * t.gain;
  return !taps.empty() && std::isfinite(e) && e > Real(0);
}

}  // namespace detail

// Deterministic function of (params, seed). Taps are truncated at the max
// excess delay and the total tap energy is normalized to 1. Degenerate draws
// resample with a derived sub-seed; the attempt count is reported on the
// realization.
template <typename Real>
BasicChannelRealization<Real> draw_multipath(
    const BasicMultipathParams<Real>& params, std::uint64_t seed) {
  params.validate();
  BasicChannelRealization<Real> ch;
  ch.seed = seed;
  for (int attempt = 0; attempt < 64; ++attempt) {
    Rng rng(derive_seed(seed, {seedtag::kResample,
                               static_cast<std::uint64_t>(attempt)}));
    if (detail::try_draw(params, rng, ch.taps)) {
      ch.resample_count = attempt;
      const Real scale = Real(1) / std::sqrt(ch.tap_energy());
      for (auto& t : ch.taps) t.gain *= scale;
      return ch;
    }
  }
  throw std::runtime_error("draw_multipath: no valid draw in 64 attempts");
}

// Band-limited deposition of the tap train onto a sample lattice: each tap
// contributes gain * sinc((t - delay)/dt) / dt, i.e. a Nyquist-rate impulse
// at a fractional delay. The result is rescaled so the discrete tap weights
// x_k*dt keep unit total energy, preserving the draw normalization.
template <typename Real>
BasicSignal<Real> discretize(const BasicChannelRealization<Real>& ch,
                             const SimGrid<Real>& grid) {
  grid.validate();
  require(!ch.taps.empty(), "discretize: realization has no taps");
  const Real dt = grid.dt();
  require(grid.origin_time <= ch.taps.front().delay + dt * Real(1e-6) &&
              grid.end_time() >= ch.max_delay() - dt * Real(1e-6),
          "discretize: grid does not cover the tap delays");

  BasicSignal<Real> out = BasicSignal<Real>::zeros(grid);
  const Real pi = static_cast<Real>(M_PI);
  for (const auto& tap : ch.taps) {
    const Real a = (tap.delay - grid.origin_time) / dt;
    const auto nearest = static_cast<Eigen::Index>(std::llround(a));
    if (std::abs(a - static_cast<Real>(nearest)) < Real(1e-9)) {
      out.samples[nearest] += std::complex<Real>(tap.gain / dt, Real(0));
      continue;
    }
    // sinc(k - a) = -(-1)^(k - floor(a)) sin(pi*frac(a)) / (pi*(k - a)):
    // one sine evaluation per tap.
    const Real s = std::sin(pi * (a - std::floor(a)));
    const auto ka = static_cast<Eigen::Index>(std::floor(a));
    for (Eigen::Index k = 0; k < grid.num_samples; ++k) {
      const Real sgn = ((k - ka) % 2 == 0) ? Real(-1) : Real(1);
      const Real sinc = sgn * s / (pi * (static_cast<Real>(k) - a));
      out.samples[k] += std::complex<Real>(tap.gain * sinc / dt, Real(0));
    }
  }

  const Real weight_energy = out.samples.squaredNorm() * dt * dt;
  out.samples *= Real(1) / std::sqrt(weight_energy);
  return out;
}

// Overall channel c = g * w: coding phaser composed with the wireless
// channel.
template <typename Real>
BasicSignal<Real> compose_channel(const BasicSignal<Real>& g,
                                  const BasicSignal<Real>& w) {
  return convolve(g, w);
}

// CSV persistence: columns delay_s,gain; seed and resample count travel in
// '#' metadata lines.
template <typename Real>
void write_channel_csv(
    const std::string& path, const BasicChannelRealization<Real>& ch,
    const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  std::ofstream out(path);
  require(out.good(), "write_channel_csv: cannot open " + path);
  out << "# seed=" << ch.seed << "\n";
  out << "# resample_count=" << ch.resample_count << "\n";
  for (const auto& [k, v] : meta) out << "# " << k << "=" << v << "\n";
  out << "delay_s,gain\n";
  for (const auto& t : ch.taps) {
    out << detail::format_g17(static_cast<double>(t.delay)) << ','
        << detail::format_g17(static_cast<double>(t.gain)) << "\n";
  }
}

inline ChannelRealization read_channel_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "read_channel_csv: cannot open " + path);
  ChannelRealization ch;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      if (key == "seed") ch.seed = std::stoull(line.substr(eq + 1));
      if (key == "resample_count") ch.resample_count = std::stoi(line.substr(eq + 1));
      continue;
    }
    if (!header_seen) {
      require(line.rfind("delay_s,gain", 0) == 0,
              "read_channel_csv: missing delay_s,gain header in " + path);
      header_seen = true;
      continue;
    }
    double d = 0, g = 0;
    require(std::sscanf(line.c_str(), "%lf,%lf", &d, &g) == 2,
            "read_channel_csv: malformed row in " + path);
    ch.taps.push_back({d, g});
  }
  require(header_seen && !ch.taps.empty(),
          "read_channel_csv: no taps in " + path);
  return ch;
}

}  // namespace trdcma

#endif  // TRDCMA_CHANNEL_HPP
