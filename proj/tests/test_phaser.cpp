// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "trdcma/phaser.hpp"

using namespace trdcma;

namespace {

const PhaserSpec kSpec{10e9, 6e-9, 10e-9};

// Cumulative trapezoid integration of the group delay, refined between the
// comparison points and accumulated with Kahan compensation. Test-only
// oracle for the closed-form phase.
std::vector<double> phase_by_trapezoid(const DispersionCode& code,
                                       const PhaserSpec& spec, int n_points,
                                       int refine) {
  std::vector<double> phases(static_cast<std::size_t>(n_points) + 1);
  const double f_lo = -spec.bandwidth / 2.0;
  const double h =
      spec.bandwidth / (static_cast<double>(n_points) * refine);
  double sum = 0.0, comp = 0.0;
  double prev = chebyshev_delay(code, spec, f_lo);
  phases[0] = 0.0;
  for (int p = 0; p < n_points; ++p) {
    for (int r = 0; r < refine; ++r) {
      const double f = f_lo + h * (static_cast<double>(p) * refine + r + 1);
      const double cur = chebyshev_delay(code, spec, std::min(f, -f_lo));
      const double term = 0.5 * (prev + cur) * h;
      const double y = term - comp;
      const double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
      prev = cur;
    }
    phases[static_cast<std::size_t>(p) + 1] = -2.0 * M_PI * sum;
  }
  return phases;
}

}  // namespace

TEST_CASE("chebyshev delay hits the closed-form anchor points") {
  const DispersionCode c3{3};
  CHECK(chebyshev_delay(c3, kSpec, 0.0) == doctest::Approx(6e-9));
  CHECK(chebyshev_delay(c3, kSpec, 5e9) == doctest::Approx(11e-9));
  // T_3(0.5) = 4*(0.125) - 1.5 = -1
  CHECK(chebyshev_delay(c3, kSpec, 2.5e9) == doctest::Approx(1e-9));
  CHECK_THROWS_AS(chebyshev_delay(c3, kSpec, 5.1e9), std::invalid_argument);
}

TEST_CASE("negated code mirrors the delay deviation exactly") {
  const DispersionCode plus{5};
  const DispersionCode minus{-5};
  // with tau0 = 0 the deviation is the whole delay and the mirror is exact
  const PhaserSpec centered{10e9, 0.0, 10e-9};
  for (double f = -5e9; f <= 5e9; f += 0.311e9) {
    CHECK(chebyshev_delay(plus, centered, f) ==
          -chebyshev_delay(minus, centered, f));
    // with an offset the identity holds to rounding
    const double dp = chebyshev_delay(plus, kSpec, f) - kSpec.delay_offset;
    const double dm = chebyshev_delay(minus, kSpec, f) - kSpec.delay_offset;
    CHECK(dp == doctest::Approx(-dm).epsilon(1e-12));
  }
}

TEST_CASE("chebyshev phase closed form at the band anchors") {
  const DispersionCode c3{3};
  const double dw = 2.0 * M_PI * kSpec.bandwidth;

  CHECK(chebyshev_phase(c3, kSpec, -5e9) == doctest::Approx(0.0));
  // odd integrand: the full-band integral leaves only the tau0 term
  CHECK(chebyshev_phase(c3, kSpec, 5e9) ==
        doctest::Approx(-kSpec.delay_offset * dw).epsilon(1e-12));
  // integral of T_3 from -1 to 0 is 1/2
  const double expected_mid =
      -(kSpec.delay_offset * dw / 2.0 + (kSpec.delay_swing / 2.0) * dw / 4.0);
  CHECK(chebyshev_phase(c3, kSpec, 0.0) ==
        doctest::Approx(expected_mid).epsilon(1e-12));
  CHECK_THROWS_AS(chebyshev_phase(c3, kSpec, -5.2e9), std::invalid_argument);
}

TEST_CASE("closed-form phase matches refined trapezoid integration") {
  const int n_points = 4096;
  const int refine = 2048;
  for (int order : {3, -3, 5}) {
    const DispersionCode code{order};
    const auto oracle = phase_by_trapezoid(code, kSpec, n_points, refine);
    double worst = 0.0;
    for (int p = 0; p <= n_points; ++p) {
      const double f =
          -kSpec.bandwidth / 2.0 +
          kSpec.bandwidth * static_cast<double>(p) / n_points;
      const double closed =
          chebyshev_phase(code, kSpec, std::min(f, kSpec.bandwidth / 2.0));
      worst = std::max(worst,
                       std::abs(closed - oracle[static_cast<std::size_t>(p)]));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("phaser spectrum is exactly all-pass on the bin lattice") {
  const DispersionCode code{5};
  const SimGrid<double> grid{2.0 * kSpec.bandwidth, 2048, -12.8e-9};
  const auto sp = phaser_spectrum(code, kSpec, grid);
  const double df = sp.bin_spacing();
  Eigen::Index in_band = 0;
  for (Eigen::Index j = 0; j < sp.bins.size(); ++j) {
    const double mag = std::abs(sp.bins[j]);
    if (bin_in_band(signed_bin(j, sp.bins.size()), df, kSpec.bandwidth)) {
      CHECK(mag == doctest::Approx(1.0).epsilon(1e-15));
      ++in_band;
    } else {
      CHECK(mag == 0.0);
    }
  }
  // at twice the band rate exactly half the bins are in band, so the
  // spectral energy equals the bandwidth
  CHECK(in_band == sp.bins.size() / 2);
  CHECK(spectral_energy(sp) ==
        doctest::Approx(kSpec.bandwidth).epsilon(1e-6));
}

TEST_CASE("zero-swing synthesis gives the band-limited sinc") {
  const double rate = 20e9;
  PhaserSpec flat{10e9, 0.0, 0.0};
  const DispersionCode code{3};

  SimGrid<double> grid = default_ir_grid(flat, rate);
  const Signal g = synthesize_phaser_ir(code, flat, grid);
  // the half-open band edge leaves a one-bin O(1/N) grid artifact
  for (int k = -20; k <= 20; ++k) {
    const double t = static_cast<double>(k) / rate;
    const double x = flat.bandwidth * t;
    const double expected =
        flat.bandwidth * (k == 0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x));
    const auto i = static_cast<Eigen::Index>(
        std::llround((t - g.grid.origin_time) * rate));
    CHECK(std::abs(g.samples[i].real() - expected) < 2e-3 * flat.bandwidth);
    CHECK(std::abs(g.samples[i].imag()) < 2e-3 * flat.bandwidth);
  }

  // pure delay: the same sinc shifted by tau0
  PhaserSpec delayed{10e9, 5e-9, 0.0};
  const Signal gd =
      synthesize_phaser_ir(code, delayed, default_ir_grid(delayed, rate));
  CHECK(peak_abs(gd).time == doctest::Approx(5e-9));
  CHECK(peak_abs(gd).magnitude ==
        doctest::Approx(flat.bandwidth).epsilon(1e-3));
}

TEST_CASE("synthesis rejects windows that lose energy") {
  const double rate = 20e9;
  const DispersionCode code{3};
  // window much shorter than the delay support
  const SimGrid<double> tiny{rate, 16, 0.0};
  CHECK_THROWS_AS(synthesize_phaser_ir(code, kSpec, tiny), SynthesisError);
  try {
    synthesize_phaser_ir(code, kSpec, tiny);
  } catch (const SynthesisError& e) {
    CHECK(e.captured_energy_fraction < 0.999);
    CHECK(e.captured_energy_fraction >= 0.0);
  }
}

TEST_CASE("phaser autocorrelation collapses to the in-band delta") {
  const double rate = 20e9;
  for (int order : {3, -5, 7}) {
    const DispersionCode code{order};
    const Signal g =
        synthesize_phaser_ir(code, kSpec, default_ir_grid(kSpec, rate));
    const Signal z = convolve(g, time_reverse_conjugate(g));
    const auto p = peak_abs(z);
    CHECK(p.time == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(p.magnitude == doctest::Approx(kSpec.bandwidth).epsilon(2e-3));
    // compare against delta_f * sinc(delta_f * t) near the main lobe
    const auto i0 = static_cast<Eigen::Index>(
        std::llround((0.0 - z.grid.origin_time) * rate));
    for (int k = 1; k <= 8; ++k) {
      const double t = static_cast<double>(k) / rate;
      const double x = kSpec.bandwidth * t;
      const double expected = kSpec.bandwidth * std::sin(M_PI * x) / (M_PI * x);
      CHECK(std::abs(z.samples[i0 + k].real() - expected) <
            3e-3 * kSpec.bandwidth);
    }
  }
}

TEST_CASE("code set generation follows the alternating odd sequence") {
  const auto five = generate_code_set(5);
  REQUIRE(five.size() == 5);
  const int expected5[] = {3, -3, 5, -5, 7};
  for (int k = 0; k < 5; ++k) CHECK(five[k].signed_order == expected5[k]);

  const auto one = generate_code_set(1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].signed_order == 3);

  const auto four = generate_code_set(4);
  const int expected4[] = {3, -3, 5, -5};
  for (int k = 0; k < 4; ++k) CHECK(four[k].signed_order == expected4[k]);

  CHECK_THROWS_AS(generate_code_set(0), std::invalid_argument);
}

TEST_CASE("code validation rejects even and low orders and duplicates") {
  CHECK_THROWS_AS(DispersionCode{4}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(DispersionCode{1}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(DispersionCode{-1}.validate(), std::invalid_argument);
  CHECK_NOTHROW(DispersionCode{-9}.validate());

  std::vector<DispersionCode> dup{{3}, {5}, {3}};
  CHECK_THROWS_AS(validate_code_set(dup), std::invalid_argument);
}
