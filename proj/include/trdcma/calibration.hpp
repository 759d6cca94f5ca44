// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#ifndef TRDCMA_CALIBRATION_HPP
#define TRDCMA_CALIBRATION_HPP

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "trdcma/phaser.hpp"
#include "trdcma/sigcore.hpp"

namespace trdcma {

// Known probe waveform sent by each access point during calibration. The
// in-band spectral magnitude must stay bounded away from zero so the
// deconvolution division is well posed.
template <typename Real>
struct BasicBeacon {
  BasicSignal<Real> waveform;
  Real bandwidth = Real(0);
};

using Beacon = BasicBeacon<double>;

// Default beacon: band-limited impulse (flat unit-magnitude in-band
// spectrum) centered at t = 0.
template <typename Real>
BasicBeacon<Real> make_impulse_beacon(Real sample_rate, Real bandwidth,
                                      Real guard_periods = Real(192)) {
  const Real dt = Real(1) / sample_rate;
  const Real guard = guard_periods / bandwidth;
  const auto half = static_cast<Eigen::Index>(std::ceil(guard / dt));
  const SimGrid<Real> grid{sample_rate, 2 * half + 1,
                           -static_cast<Real>(half) * dt};
  BasicBeacon<Real> b;
  b.bandwidth = bandwidth;
  b.waveform = detail::synthesize_allpass_ir<Real>(
      bandwidth, [](Real) { return Real(0); }, grid, Real(0.999));
  return b;
}

class IllPosedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// What the router records when an access point sends the beacon through its
// overall channel c.
template <typename Real>
BasicSignal<Real> simulate_beacon_rx(const BasicBeacon<Real>& b,
                                     const BasicSignal<Real>& c) {
  return convolve(b.waveform, c);
}

// Regularized spectral deconvolution of the recorded beacon response:
// C_hat(f) = R(f) conj(B(f)) / (|B(f)|^2 + eps), evaluated on in-band bins
// only, zero out of band. epsilon_rel is relative to the peak in-band |B|^2.
template <typename Real>
BasicSignal<Real> estimate_channel(const BasicSignal<Real>& rx,
                                   const BasicBeacon<Real>& b,
                                   Real epsilon_rel) {
  require_same_rate(rx, b.waveform, "estimate_channel");
  require(epsilon_rel >= Real(0), "estimate_channel: epsilon must be >= 0");
  require(rx.size() >= b.waveform.size(),
          "estimate_channel: response shorter than the beacon");

  const Eigen::Index n = rx.size();
  const auto rx_spec = to_spectrum(rx);
  const auto beacon_spec = to_spectrum(pad_to(b.waveform, n));
  const Real df = rx_spec.bin_spacing();

  Real max_mag2 = Real(0);
  Real min_mag2 = std::numeric_limits<Real>::infinity();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!bin_in_band(signed_bin(j, n), df, b.bandwidth)) continue;
    const Real m2 = std::norm(beacon_spec.bins[j]);
    max_mag2 = std::max(max_mag2, m2);
    min_mag2 = std::min(min_mag2, m2);
  }
  if (!(max_mag2 > Real(0)) || std::sqrt(min_mag2 / max_mag2) < Real(0.1)) {
    throw IllPosedError(
        "estimate_channel: beacon in-band spectral floor below 0.1 of peak");
  }
  const Real eps_abs = epsilon_rel * max_mag2;

  BasicSpectrum<Real> est;
  est.grid = SimGrid<Real>{rx.grid.sample_rate, n,
                           rx.grid.origin_time - b.waveform.grid.origin_time};
  est.bins.setZero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!bin_in_band(signed_bin(j, n), df, b.bandwidth)) continue;
    est.bins[j] = rx_spec.bins[j] * std::conj(beacon_spec.bins[j]) /
                  (std::norm(beacon_spec.bins[j]) + eps_abs);
  }
  return from_spectrum(est);
}

// Truncated time-reversal matched filter built from a channel estimate.
template <typename Real>
struct BasicMatchedFilter {
  BasicSignal<Real> filter;        // conj-flipped truncated estimate
  Real captured_energy_fraction = Real(0);  // eta
  Real window_start_time = Real(0);
};

using MatchedFilter = BasicMatchedFilter<double>;

// Retains the length-T_c window of c_hat that captures the most energy
// (sliding placement), zeroes the rest, and conj-flips the result.
// T_c = infinity keeps the full estimate.
template <typename Real>
BasicMatchedFilter<Real> build_matched_filter(const BasicSignal<Real>& c_hat,
                                              Real window_seconds) {
  require(window_seconds > Real(0),
          "build_matched_filter: window must be > 0");
  const Eigen::Index n = c_hat.size();
  Eigen::Index w;
  if (std::isinf(window_seconds)) {
    w = n;
  } else {
    w = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::llround(window_seconds / c_hat.grid.dt())),
        1, n);
  }

  std::vector<Real> prefix(static_cast<std::size_t>(n) + 1, Real(0));
  for (Eigen::Index k = 0; k < n; ++k) {
    prefix[static_cast<std::size_t>(k) + 1] =
        prefix[static_cast<std::size_t>(k)] + std::norm(c_hat.samples[k]);
  }
  const Real total = prefix.back();
  Eigen::Index best = 0;
  Real best_sum = Real(-1);
  for (Eigen::Index i = 0; i + w <= n; ++i) {
    const Real sum = prefix[static_cast<std::size_t>(i + w)] -
                     prefix[static_cast<std::size_t>(i)];
    if (sum > best_sum) {
      best_sum = sum;
      best = i;
    }
  }
  if (!(best_sum > Real(0))) {
    throw CalibrationError("build_matched_filter: zero captured energy");
  }

  BasicSignal<Real> windowed;
  windowed.grid =
      SimGrid<Real>{c_hat.grid.sample_rate, w, c_hat.grid.time_at(best)};
  windowed.samples = c_hat.samples.segment(best, w);

  BasicMatchedFilter<Real> mf;
  mf.filter = time_reverse_conjugate(windowed);
  mf.captured_energy_fraction = best_sum / total;
  mf.window_start_time = c_hat.grid.time_at(best);
  return mf;
}

// Per-access-point matched filter bank, immutable after calibration.
template <typename Real>
struct BasicMatchedFilterBank {
  std::vector<BasicMatchedFilter<Real>> entries;
  Real window_seconds = Real(0);
  Real epsilon_rel = Real(0);
};

using MatchedFilterBank = BasicMatchedFilterBank<double>;

}  // namespace trdcma

#endif  // TRDCMA_CALIBRATION_HPP
