// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#ifndef TRDCMA_LINK_HPP
#define TRDCMA_LINK_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "trdcma/phaser.hpp"
#include "trdcma/sigcore.hpp"

namespace trdcma {

// One user's OOK payload: bit values, bit period and stream time offset.
template <typename Real>
struct BasicBitStream {
  std::vector<std::uint8_t> bits;
  Real bit_period = Real(0);   // T_b, seconds
  Real time_offset = Real(0);  // t_m, seconds

  void validate() const {
    require(!bits.empty(), "BitStream: empty bit vector");
    require(bit_period > Real(0), "BitStream: bit period must be > 0");
  }

  std::string to_ascii() const {
    std::string s;
    s.reserve(bits.size());
    for (auto b : bits) s.push_back(b ? '1' : '0');
    return s;
  }
};

using BitStream = BasicBitStream<double>;

// Multi-user link parameters. The routing map pairs uplink access point m
// with downlink access point routing[m]; it must be a permutation.
template <typename Real>
struct BasicLinkConfig {
  int num_users = 0;  // M
  std::vector<DispersionCode> code_set;
  std::vector<int> routing;        // 0-based permutation of {0..M-1}
  std::vector<Real> uplink_amps;   // alpha^U_m > 0
  std::vector<Real> downlink_amps; // alpha^D_m > 0
  Real bit_period = Real(0);
  std::vector<Real> time_offsets;  // t_m
  Real detector_threshold = Real(0.5);
  std::uint64_t master_seed = 0;

  void validate() const {
    require(num_users >= 1, "LinkConfig: need at least one user");
    const auto m = static_cast<std::size_t>(num_users);
    require(code_set.size() == m, "LinkConfig: code set size != M");
    validate_code_set(code_set);
    require(routing.size() == m, "LinkConfig: routing size != M");
    std::vector<bool> seen(m, false);
    for (int r : routing) {
      require(r >= 0 && r < num_users && !seen[static_cast<std::size_t>(r)],
              "LinkConfig: routing map is not a permutation");
      seen[static_cast<std::size_t>(r)] = true;
    }
    require(uplink_amps.size() == m && downlink_amps.size() == m,
            "LinkConfig: amplitude list size != M");
    for (Real a : uplink_amps) require(a > Real(0), "LinkConfig: alpha <= 0");
    for (Real a : downlink_amps) require(a > Real(0), "LinkConfig: alpha <= 0");
    require(bit_period > Real(0), "LinkConfig: bit period must be > 0");
    require(time_offsets.size() == m, "LinkConfig: offset list size != M");
    require(detector_threshold > Real(0) && detector_threshold < Real(1),
            "LinkConfig: detector threshold outside (0, 1)");
  }
};

using LinkConfig = BasicLinkConfig<double>;

// OOK pulse train: an impulse of weight 1/dt at t = l*T_b + t_m for every
// bit value 1. Impulse instants on the sample lattice deposit a single
// sample; a common fractional offset is applied as a spectral-domain delay;
// fully irregular instants fall back to direct full-support sinc kernels.
template <typename Real>
BasicSignal<Real> modulate_ook(const BasicBitStream<Real>& bs,
                               const SimGrid<Real>& grid) {
  bs.validate();
  grid.validate();
  const Real dt = grid.dt();
  const auto n_bits = static_cast<Eigen::Index>(bs.bits.size());
  require(grid.origin_time <= bs.time_offset + dt * Real(1e-6),
          "modulate_ook: grid starts after the stream offset");
  require(grid.end_time() + dt * Real(1e-6) >=
              bs.time_offset + static_cast<Real>(n_bits) * bs.bit_period,
          "modulate_ook: grid too short for the bit train");

  BasicSignal<Real> out = BasicSignal<Real>::zeros(grid);

  const Real offset_samples = (bs.time_offset - grid.origin_time) / dt;
  const Real period_samples = bs.bit_period / dt;
  const Real frac_offset =
      offset_samples - std::floor(offset_samples + Real(0.5));
  const Real frac_period =
      period_samples - std::floor(period_samples + Real(0.5));
  const Real tol = Real(1e-9);

  if (std::abs(frac_period) < tol) {
    // All impulses share one fractional residue. Deposit on the nearest
    // lattice points, then shift by the residue in the spectral domain.
    for (Eigen::Index l = 0; l < n_bits; ++l) {
      if (!bs.bits[static_cast<std::size_t>(l)]) continue;
      const auto k = static_cast<Eigen::Index>(
          std::llround(offset_samples + static_cast<Real>(l) * period_samples));
      out.samples[k] += std::complex<Real>(Real(1) / dt, Real(0));
    }
    if (std::abs(frac_offset) >= tol) {
      auto bins = fft_forward<Real>(out.samples);
      const Eigen::Index n = bins.size();
      for (Eigen::Index j = 0; j < n; ++j) {
        const Real f = static_cast<Real>(signed_bin(j, n)) / static_cast<Real>(n);
        bins[j] *= std::polar(Real(1), Real(-2) * static_cast<Real>(M_PI) * f *
                                           frac_offset);
      }
      out.samples = fft_inverse<Real>(bins);
    }
    return out;
  }

  const Real pi = static_cast<Real>(M_PI);
  for (Eigen::Index l = 0; l < n_bits; ++l) {
    if (!bs.bits[static_cast<std::size_t>(l)]) continue;
    const Real a = offset_samples + static_cast<Real>(l) * period_samples;
    const auto nearest = static_cast<Eigen::Index>(std::llround(a));
    if (std::abs(a - static_cast<Real>(nearest)) < tol) {
      out.samples[nearest] += std::complex<Real>(Real(1) / dt, Real(0));
      continue;
    }
    const Real s = std::sin(pi * (a - std::floor(a)));
    const auto ka = static_cast<Eigen::Index>(std::floor(a));
    for (Eigen::Index k = 0; k < grid.num_samples; ++k) {
      const Real sgn = ((k - ka) % 2 == 0) ? Real(-1) : Real(1);
      out.samples[k] +=
          std::complex<Real>(sgn * s / (pi * (static_cast<Real>(k) - a)) / dt,
                             Real(0));
    }
  }
  return out;
}

// alpha_k * (s_k convolved with filter_k) for every user; the building block
// for both the uplink superposition and the downlink predistortion sum.
template <typename Real>
std::vector<BasicSignal<Real>> per_user_products(
    const std::vector<BasicSignal<Real>>& signals,
    const std::vector<BasicSignal<Real>>& filters,
    const std::vector<Real>& amps) {
  require(signals.size() == filters.size() && signals.size() == amps.size(),
          "per_user_products: list length mismatch");
  require(!signals.empty(), "per_user_products: empty user list");
  std::vector<BasicSignal<Real>> products;
  products.reserve(signals.size());
  for (std::size_t k = 0; k < signals.size(); ++k) {
    products.push_back(scaled(convolve(signals[k], filters[k]),
                              std::complex<Real>(amps[k], Real(0))));
  }
  return products;
}

template <typename Real>
BasicSignal<Real> sum_signals(const std::vector<BasicSignal<Real>>& parts) {
  require(!parts.empty(), "sum_signals: empty list");
  BasicSignal<Real> acc = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) acc = add(acc, parts[k]);
  return acc;
}

// Signal received by the router: sum over users of alpha_m * s_m * c_m.
template <typename Real>
BasicSignal<Real> uplink_superpose(const std::vector<BasicSignal<Real>>& signals,
                                   const std::vector<BasicSignal<Real>>& channels,
                                   const std::vector<Real>& amps) {
  return sum_signals(per_user_products(signals, channels, amps));
}

// Router-side decoding: correlate the received mixture with user m's
// time-reversed channel template.
template <typename Real>
BasicSignal<Real> decode_uplink(const BasicSignal<Real>& r,
                                const BasicSignal<Real>& filter_m) {
  return convolve(r, filter_m);
}

// Split of the decoded signal into the matched (desired) component and the
// multiple-access interference from every other user, computed from the
// per-user products so that desired + mai reproduces the direct decode.
template <typename Real>
std::pair<BasicSignal<Real>, BasicSignal<Real>> split_from_products(
    const std::vector<BasicSignal<Real>>& products,
    const BasicSignal<Real>& filter, std::size_t m) {
  require(m < products.size(), "split: user index out of range");
  BasicSignal<Real> desired = convolve(products[m], filter);
  BasicSignal<Real> mai;
  if (products.size() == 1) {
    mai = BasicSignal<Real>::zeros(desired.grid);
  } else {
    bool first = true;
    BasicSignal<Real> others;
    for (std::size_t k = 0; k < products.size(); ++k) {
      if (k == m) continue;
      others = first ? products[k] : add(others, products[k]);
      first = false;
    }
    mai = convolve(others, filter);
  }
  return {desired, mai};
}

// Spec-shaped wrapper operating on raw per-user signal/channel lists.
template <typename Real>
std::pair<BasicSignal<Real>, BasicSignal<Real>> split_desired_mai(
    const std::vector<BasicSignal<Real>>& signals,
    const std::vector<BasicSignal<Real>>& channels,
    const std::vector<Real>& amps, const BasicSignal<Real>& filter_m,
    std::size_t m) {
  return split_from_products(per_user_products(signals, channels, amps),
                             filter_m, m);
}

// Rescales desired and MAI by 1/max|desired| so the desired peak is 1.
template <typename Real>
struct NormalizedPair {
  BasicSignal<Real> desired;
  BasicSignal<Real> mai;
  Real scale = Real(0);  // factor applied to both signals
};

template <typename Real>
NormalizedPair<Real> normalize_link(const BasicSignal<Real>& desired,
                                    const BasicSignal<Real>& mai) {
  const Real peak = peak_abs(desired).magnitude;
  require(peak > Real(0), "normalize_link: desired signal is zero");
  const std::complex<Real> s(Real(1) / peak, Real(0));
  return {scaled(desired, s), scaled(mai, s), Real(1) / peak};
}

class DetectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Real>
struct DetectMeta {
  Real bit_period = Real(0);
  Real time_offset = Real(0);
  int n_bits = 0;
};

template <typename Real>
struct DetectResult {
  BasicBitStream<Real> stream;
  Real sync_shift = Real(0);
  bool synced = false;
};

// Threshold detection on a normalized decoded signal. Timing recovery scans
// candidate lattice shifts within half a bit of the nominal grid and keeps
// the one maximizing the pulse energy summed over the whole train; the known
// leading '1' preamble bit then anchors the lock: its sample must clear the
// threshold (else DetectionError, or a zero-shift fallback with
// allow_unsynced) and its phase derotates the signal before the in-phase
// component of every bit instant is compared against the threshold.
template <typename Real>
DetectResult<Real> detect_bits(const BasicSignal<Real>& z,
                               const DetectMeta<Real>& meta, Real threshold,
                               bool allow_unsynced = false) {
  require(meta.n_bits > 0 && meta.bit_period > Real(0),
          "detect_bits: invalid meta");
  require(threshold > Real(0) && threshold < Real(1),
          "detect_bits: threshold outside (0, 1)");
  const Real dt = z.grid.dt();

  const auto sample_at = [&](Real t) -> std::complex<Real> {
    const auto k =
        static_cast<Eigen::Index>(std::llround((t - z.grid.origin_time) / dt));
    if (k < 0 || k >= z.size()) return {Real(0), Real(0)};
    return z.samples[k];
  };

  Real sync = Real(0);
  std::complex<Real> rot(Real(1), Real(0));
  bool synced = false;
  {
    const auto half = static_cast<Eigen::Index>(
        std::floor(meta.bit_period / Real(2) / dt));
    Real best_metric = Real(-1);
    Eigen::Index best_shift = 0;
    for (Eigen::Index s = -half; s <= half; ++s) {
      const Real u = static_cast<Real>(s) * dt;
      Real metric = Real(0);
      for (int l = 0; l < meta.n_bits; ++l) {
        metric += std::norm(sample_at(meta.time_offset + u +
                                      static_cast<Real>(l) * meta.bit_period));
      }
      if (metric > best_metric) {
        best_metric = metric;
        best_shift = s;
      }
    }
    const Real u = static_cast<Real>(best_shift) * dt;
    const std::complex<Real> preamble = sample_at(meta.time_offset + u);
    if (std::abs(preamble) > threshold) {
      synced = true;
      sync = u;
      rot = std::conj(preamble) / std::abs(preamble);
    } else if (!allow_unsynced) {
      throw DetectionError("detect_bits: no preamble peak above threshold");
    }
  }

  DetectResult<Real> res;
  res.sync_shift = sync;
  res.synced = synced;
  res.stream.bit_period = meta.bit_period;
  res.stream.time_offset = meta.time_offset;
  res.stream.bits.resize(static_cast<std::size_t>(meta.n_bits), 0);
  for (int l = 0; l < meta.n_bits; ++l) {
    const Real t =
        meta.time_offset + sync + static_cast<Real>(l) * meta.bit_period;
    const Real v = (sample_at(t) * rot).real();
    res.stream.bits[static_cast<std::size_t>(l)] = v > threshold ? 1 : 0;
  }
  return res;
}

// Router transmit signal: per-user streams predistorted with the
// time-reversed channel template of their routed access point, then summed.
template <typename Real>
BasicSignal<Real> downlink_precode(
    const std::vector<BasicSignal<Real>>& streams,
    const std::vector<BasicSignal<Real>>& filters_routed,
    const std::vector<Real>& amps) {
  return sum_signals(per_user_products(streams, filters_routed, amps));
}

// Receiver-side downlink decoding at access point n: the router signal
// passes the wireless channel w_n and the coding phaser g_n.
template <typename Real>
BasicSignal<Real> decode_downlink(const BasicSignal<Real>& router_signal,
                                  const BasicSignal<Real>& w_n,
                                  const BasicSignal<Real>& g_n) {
  return convolve(convolve(router_signal, w_n), g_n);
}

}  // namespace trdcma

#endif  // TRDCMA_LINK_HPP
