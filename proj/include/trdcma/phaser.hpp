// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#ifndef TRDCMA_PHASER_HPP
#define TRDCMA_PHASER_HPP

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "trdcma/sigcore.hpp"

namespace trdcma {

// Signed Chebyshev order assigned to one access point. The sign selects the
// mirrored delay profile: T_{-i} = -T_i.
struct DispersionCode {
  int signed_order = 3;

  int order() const { return signed_order < 0 ? -signed_order : signed_order; }
  int sign() const { return signed_order < 0 ? -1 : 1; }

  void validate() const {
    require(order() >= 3 && order() % 2 == 1,
            "DispersionCode: order must be odd and |i| >= 3");
  }
};

// All-pass phaser parameters: bandwidth, group-delay offset and swing.
template <typename Real>
struct BasicPhaserSpec {
  Real bandwidth = Real(10e9);     // Hz
  Real delay_offset = Real(6e-9);  // seconds, tau0
  Real delay_swing = Real(10e-9);  // seconds, peak-to-peak delta-tau

  void validate() const {
    require(bandwidth > Real(0), "PhaserSpec: bandwidth must be > 0");
    require(delay_swing >= Real(0), "PhaserSpec: delay swing must be >= 0");
    require(delay_offset >= delay_swing / Real(2),
            "PhaserSpec: group delay goes negative (tau0 < delta_tau/2)");
  }
};

using PhaserSpec = BasicPhaserSpec<double>;

// Chebyshev polynomial of the first kind via the stable three-term
// recurrence.
template <typename Real>
Real chebyshev_t(int n, Real x) {
  if (n == 0) return Real(1);
  Real tkm1 = Real(1);
  Real tk = x;
  for (int k = 1; k < n; ++k) {
    const Real tkp1 = Real(2) * x * tk - tkm1;
    tkm1 = tk;
    tk = tkp1;
  }
  return tk;
}

// Closed-form antiderivative: integral of T_n(u) du from -1 to x.
template <typename Real>
Real chebyshev_t_integral(int n, Real x) {
  if (n == 0) return x + Real(1);
  if (n == 1) return (x * x - Real(1)) / Real(2);
  const Real f = (chebyshev_t(n + 1, x) / Real(n + 1) -
                  chebyshev_t(n - 1, x) / Real(n - 1)) /
                 Real(2);
  const Real at_minus1 =
      ((n % 2 == 0) ? Real(1) : Real(-1)) / (Real(n) * Real(n) - Real(1));
  return f - at_minus1;
}

namespace detail {

template <typename Real>
Real band_coordinate(const BasicPhaserSpec<Real>& spec, Real f) {
  const Real half = spec.bandwidth / Real(2);
  require(std::abs(f) <= half * (Real(1) + Real(1e-9)),
          "frequency outside the phaser band");
  const Real x = f / half;
  return std::clamp(x, Real(-1), Real(1));
}

}  // namespace detail

// Group delay tau(f) = tau0 + (delta_tau/2) * sign(i) * T_|i|(f / (df/2)),
// f measured from band center.
template <typename Real>
Real chebyshev_delay(const DispersionCode& code,
                     const BasicPhaserSpec<Real>& spec, Real f) {
  code.validate();
  const Real x = detail::band_coordinate(spec, f);
  return spec.delay_offset + spec.delay_swing / Real(2) *
                                 static_cast<Real>(code.sign()) *
                                 chebyshev_t(code.order(), x);
}

// Transfer phase phi(f) = -2*pi * integral of tau from the lower band edge,
// evaluated with the closed-form Chebyshev antiderivative.
template <typename Real>
Real chebyshev_phase(const DispersionCode& code,
                     const BasicPhaserSpec<Real>& spec, Real f) {
  code.validate();
  const Real half = spec.bandwidth / Real(2);
  const Real x = detail::band_coordinate(spec, f);
  const Real cheb_part = static_cast<Real>(code.sign()) *
                         chebyshev_t_integral(code.order(), x);
  return Real(-2) * static_cast<Real>(M_PI) *
         (spec.delay_offset * (f + half) +
          spec.delay_swing / Real(2) * half * cheb_part);
}

// Raised when the requested synthesis window does not capture enough of the
// impulse-response energy.
class SynthesisError : public std::runtime_error {
 public:
  SynthesisError(const std::string& msg, double captured)
      : std::runtime_error(msg), captured_energy_fraction(captured) {}
  double captured_energy_fraction;
};

namespace detail {

// Unit-magnitude in-band spectrum with the given phase profile, zero out of
// band, on the bin lattice of the given grid.
template <typename Real>
BasicSpectrum<Real> allpass_spectrum(Real bandwidth,
                                     const std::function<Real(Real)>& phase_at,
                                     const SimGrid<Real>& grid) {
  BasicSpectrum<Real> sp;
  sp.grid = grid;
  sp.bins.setZero(grid.num_samples);
  const Real df = sp.bin_spacing();
  for (Eigen::Index j = 0; j < grid.num_samples; ++j) {
    const Eigen::Index js = signed_bin(j, grid.num_samples);
    if (!bin_in_band(js, df, bandwidth)) continue;
    const Real f = static_cast<Real>(js) * df;
    sp.bins[j] = std::polar(Real(1), phase_at(f));
  }
  return sp;
}

// Band-limited all-pass impulse response with an arbitrary in-band phase
// profile. Synthesized on an extended lattice so the energy captured by the
// requested window can be measured honestly, then cropped.
template <typename Real>
BasicSignal<Real> synthesize_allpass_ir(
    Real bandwidth, const std::function<Real(Real)>& phase_at,
    const SimGrid<Real>& grid, Real min_captured) {
  grid.validate();
  require(grid.sample_rate >= bandwidth,
          "synthesize: sample rate below the complex-baseband Nyquist rate");
  const Real dt = grid.dt();
  const auto guard = static_cast<Eigen::Index>(
      std::ceil(Real(256) / bandwidth / dt));
  const Eigen::Index next = next_pow2(grid.num_samples + 2 * guard);
  const Eigen::Index pad_lo = guard + (next - grid.num_samples - 2 * guard) / 2;

  const BasicSpectrum<Real> sp = allpass_spectrum<Real>(
      bandwidth, phase_at,
      SimGrid<Real>{grid.sample_rate, next,
                    grid.origin_time - static_cast<Real>(pad_lo) * dt});
  const BasicSignal<Real> ext = from_spectrum(sp);

  const Real total = energy(ext);
  const BasicSignal<Real> win = crop(ext, grid.origin_time, grid.end_time());
  const Real captured = energy(win) / total;
  if (captured < min_captured) {
    throw SynthesisError(
        "synthesize: window captures only " + std::to_string(captured) +
            " of the impulse-response energy (need " +
            std::to_string(min_captured) + ")",
        static_cast<double>(captured));
  }
  return win;
}

}  // namespace detail

// Time window that comfortably holds the phaser impulse response: the group
// delay support [0, tau0 + delta_tau/2] plus a sinc-tail guard on both sides,
// snapped outward to the sample lattice. The guard is sized so that the
// out-of-window tail energy of the band-edge discontinuities stays below the
// 0.1% synthesis budget (each tail carries about 1/(2*pi^2*G) of the energy
// for a guard of G band periods).
template <typename Real>
SimGrid<Real> default_ir_grid(const BasicPhaserSpec<Real>& spec,
                              Real sample_rate, Real guard_periods = 192) {
  spec.validate();
  const Real dt = Real(1) / sample_rate;
  const Real guard = guard_periods / spec.bandwidth;
  const Real t_lo = -guard;
  const Real t_hi = spec.delay_offset + spec.delay_swing / Real(2) + guard;
  const auto i_lo = static_cast<Eigen::Index>(std::floor(t_lo / dt));
  const auto i_hi = static_cast<Eigen::Index>(std::ceil(t_hi / dt));
  return SimGrid<Real>{sample_rate, i_hi - i_lo + 1,
                       static_cast<Real>(i_lo) * dt};
}

// Transfer function samples on the bin lattice of a grid: exactly unit
// magnitude inside [-bandwidth/2, +bandwidth/2), exactly zero outside.
template <typename Real>
BasicSpectrum<Real> phaser_spectrum(const DispersionCode& code,
                                    const BasicPhaserSpec<Real>& spec,
                                    const SimGrid<Real>& grid) {
  code.validate();
  spec.validate();
  grid.validate();
  return detail::allpass_spectrum<Real>(
      spec.bandwidth, [&](Real f) { return chebyshev_phase(code, spec, f); },
      grid);
}

// Phaser impulse response g(t): unit spectral magnitude inside
// [-bandwidth/2, +bandwidth/2), zero outside, phase from chebyshev_phase.
// Throws SynthesisError when the grid window captures less than min_captured
// of the response energy.
template <typename Real>
BasicSignal<Real> synthesize_phaser_ir(const DispersionCode& code,
                                       const BasicPhaserSpec<Real>& spec,
                                       const SimGrid<Real>& grid,
                                       Real min_captured = Real(0.999)) {
  code.validate();
  spec.validate();
  return detail::synthesize_allpass_ir<Real>(
      spec.bandwidth, [&](Real f) { return chebyshev_phase(code, spec, f); },
      grid, min_captured);
}

// First M entries of the alternating-sign odd order sequence
// 3, -3, 5, -5, 7, -7, ...
inline std::vector<DispersionCode> generate_code_set(int m) {
  require(m >= 1, "generate_code_set: need at least one code");
  std::vector<DispersionCode> codes;
  codes.reserve(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    const int order = 3 + 2 * (k / 2);
    codes.push_back({(k % 2 == 0) ? order : -order});
  }
  return codes;
}

// Config-level validation: every entry odd with |i| >= 3, all distinct.
inline void validate_code_set(const std::vector<DispersionCode>& codes) {
  require(!codes.empty(), "code set is empty");
  for (std::size_t i = 0; i < codes.size(); ++i) {
    codes[i].validate();
    for (std::size_t j = i + 1; j < codes.size(); ++j) {
      require(codes[i].signed_order != codes[j].signed_order,
              "code set entries must be pairwise distinct");
    }
  }
}

}  // namespace trdcma

#endif  // TRDCMA_PHASER_HPP
