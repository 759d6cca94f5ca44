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
#include <complex>
#include <cstdio>

#include "trdcma/rng.hpp"
#include "trdcma/sigcore.hpp"

using namespace trdcma;

namespace {

Signal random_signal(Rng& rng, double rate, Eigen::Index n, double origin) {
  Signal s = Signal::zeros(SimGrid<double>{rate, n, origin});
  for (Eigen::Index k = 0; k < n; ++k) {
    s.samples[k] = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  }
  return s;
}

double max_abs_diff(const Signal& a, const Signal& b) {
  const Signal d = add(a, scaled(b, {-1.0, 0.0}));
  double m = 0.0;
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    m = std::max(m, std::abs(d.samples[k]));
  }
  return m;
}

double max_abs(const Signal& s) {
  double m = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    m = std::max(m, std::abs(s.samples[k]));
  }
  return m;
}

}  // namespace

TEST_CASE("convolution with a unit impulse is the identity") {
  Rng rng(11);
  const double rate = 20e9;
  const Signal s = random_signal(rng, rate, 257, 3e-9);
  const Signal d = unit_impulse(rate, 0.0);
  const Signal c = convolve(s, d);
  REQUIRE(c.size() == s.size());
  CHECK(c.grid.origin_time == doctest::Approx(s.grid.origin_time));
  CHECK(max_abs_diff(c, s) < 1e-12 * max_abs(s));
}

TEST_CASE("convolving two impulses shifts the impulse") {
  const double rate = 20e9;
  const double dt = 1.0 / rate;
  const Signal a = unit_impulse(rate, 4 * dt);
  const Signal b = unit_impulse(rate, -9 * dt);
  const Signal c = convolve(a, b);
  const auto p = peak_abs(c);
  CHECK(p.time == doctest::Approx(-5 * dt));
  CHECK(p.magnitude == doctest::Approx(rate));
}

TEST_CASE("convolution of two rects matches the continuous triangle") {
  // rect(T) * rect(T) is a triangle of base 2T peaking at T. The sampled
  // rectangle-rule convolution carries an O(dt) edge error, no more.
  const double rate = 20e9;
  const double dt = 1.0 / rate;
  const Eigen::Index k = 512;
  const double T = static_cast<double>(k) * dt;
  Signal r = Signal::zeros(SimGrid<double>{rate, k, 0.0});
  r.samples.setConstant({1.0, 0.0});
  const Signal tri = convolve(r, r);

  double worst = 0.0;
  for (Eigen::Index i = 0; i < tri.size(); ++i) {
    const double t = tri.grid.time_at(i);
    const double expected = std::max(0.0, T - std::abs(t - T));
    worst = std::max(worst, std::abs(tri.samples[i].real() - expected));
  }
  CHECK(worst <= dt * 1.000001);
  CHECK(peak_abs(tri).magnitude == doctest::Approx(T));
}

TEST_CASE("convolution is commutative and associative") {
  Rng rng(22);
  const double rate = 20e9;
  const Signal a = random_signal(rng, rate, 300, 0.0);
  const Signal b = random_signal(rng, rate, 150, -2e-9);
  const Signal c = random_signal(rng, rate, 75, 5e-9);

  const Signal ab = convolve(a, b);
  const Signal ba = convolve(b, a);
  CHECK(max_abs_diff(ab, ba) < 1e-10 * max_abs(ab));

  const Signal ab_c = convolve(ab, c);
  const Signal a_bc = convolve(a, convolve(b, c));
  CHECK(max_abs_diff(ab_c, a_bc) < 1e-10 * max_abs(ab_c));
}

TEST_CASE("mismatched sample rates are rejected") {
  Rng rng(3);
  const Signal a = random_signal(rng, 20e9, 16, 0.0);
  const Signal b = random_signal(rng, 10e9, 16, 0.0);
  CHECK_THROWS_AS(convolve(a, b), std::invalid_argument);
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("time reversal maps an impulse at t0 to -t0 and is an involution") {
  Rng rng(4);
  const double rate = 20e9;
  const double dt = 1.0 / rate;

  const Signal imp = unit_impulse(rate, 7 * dt);
  CHECK(peak_abs(time_reverse_conjugate(imp)).time ==
        doctest::Approx(-7 * dt));

  const Signal s = random_signal(rng, rate, 129, 2e-9);
  const Signal back = time_reverse_conjugate(time_reverse_conjugate(s));
  CHECK(back.grid.origin_time == doctest::Approx(s.grid.origin_time));
  CHECK(max_abs_diff(back, s) == 0.0);

  CHECK(energy(time_reverse_conjugate(s)) ==
        doctest::Approx(energy(s)).epsilon(1e-14));
}

TEST_CASE("time reversal conjugates the spectrum") {
  Rng rng(5);
  const Signal s = random_signal(rng, 20e9, 64, -3e-9);
  const auto sp = to_spectrum(s);
  const auto rp = to_spectrum(time_reverse_conjugate(s));
  const Eigen::Index n = s.size();
  for (Eigen::Index j = 0; j < n; ++j) {
    // bin at frequency f in one spectrum pairs with bin at f in the other
    CHECK(std::abs(rp.bins[j] - std::conj(sp.bins[j])) < 1e-9);
  }
}

TEST_CASE("matched-filter autocorrelation peaks at t=0 with the energy") {
  Rng rng(6);
  const Signal s = random_signal(rng, 20e9, 200, 4e-9);
  const Signal z = convolve(s, time_reverse_conjugate(s));

  // brute-force inner product as the oracle for the t=0 value
  std::complex<double> acc{0.0, 0.0};
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    acc += s.samples[k] * std::conj(s.samples[k]) * s.grid.dt();
  }
  const auto p = peak_abs(z);
  CHECK(p.time == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.magnitude == doctest::Approx(acc.real()).epsilon(1e-12));
  CHECK(p.magnitude == doctest::Approx(energy(s)).epsilon(1e-12));

  // conjugate symmetry about t = 0, real nonnegative peak
  const Eigen::Index mid = s.size() - 1;
  CHECK(z.samples[mid].imag() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(z.samples[mid].real() > 0.0);
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    CHECK(std::abs(z.samples[k] - std::conj(z.samples[2 * mid - k])) <
          1e-10 * p.magnitude);
  }
}

TEST_CASE("energy basics") {
  const double rate = 20e9;
  Signal zero = Signal::zeros(SimGrid<double>{rate, 64, 0.0});
  CHECK(energy(zero) == 0.0);

  const double dt = 1.0 / rate;
  CHECK(peak_abs(unit_impulse(rate, 5 * dt)).time == doctest::Approx(5 * dt));
  CHECK(peak_abs(unit_impulse(rate, 5 * dt)).magnitude ==
        doctest::Approx(1.0 / dt));

  // unit-amplitude complex exponential over duration T has energy T
  const Eigen::Index n = 4096;
  Signal exp_sig = Signal::zeros(SimGrid<double>{rate, n, 0.0});
  const double f0 = 1.25e9;
  for (Eigen::Index k = 0; k < n; ++k) {
    exp_sig.samples[k] = std::polar(1.0, 2.0 * M_PI * f0 * exp_sig.grid.time_at(k));
  }
  CHECK(energy(exp_sig) == doctest::Approx(n * dt).epsilon(1e-12));
}

TEST_CASE("Parseval ties time and spectral energy together") {
  Rng rng(7);
  const Signal s = random_signal(rng, 20e9, 1000, -1e-9);
  CHECK(spectral_energy(to_spectrum(s)) ==
        doctest::Approx(energy(s)).epsilon(1e-9));
}

TEST_CASE("spectrum round trip restores the signal") {
  Rng rng(8);
  const Signal s = random_signal(rng, 20e9, 321, -4e-9);
  const Signal back = from_spectrum(to_spectrum(s));
  CHECK(max_abs_diff(back, s) < 1e-10 * max_abs(s));
}

TEST_CASE("band filter keeps an in-band tone and passes everything at full band") {
  const double rate = 20e9;
  const Eigen::Index n = 1024;
  Signal tone = Signal::zeros(SimGrid<double>{rate, n, 0.0});
  const double f0 = 40.0 * rate / static_cast<double>(n);  // exact bin
  for (Eigen::Index k = 0; k < n; ++k) {
    tone.samples[k] = std::polar(1.0, 2.0 * M_PI * f0 * tone.grid.time_at(k));
  }
  const Signal kept = band_rect_filter(tone, 10e9);
  CHECK(max_abs_diff(kept, tone) < 1e-9);

  Rng rng(9);
  const Signal s = random_signal(rng, rate, 512, 0.0);
  const Signal ident = band_rect_filter(s, rate);
  CHECK(max_abs_diff(ident, s) < 1e-12 * max_abs(s));

  CHECK_THROWS_AS(band_rect_filter(s, 3.0 * rate), std::invalid_argument);
}

TEST_CASE("band filtering an impulse yields the band-limited sinc") {
  const double rate = 20e9;
  const double bw = 10e9;
  const Eigen::Index n = 4096;
  Signal imp = Signal::zeros(SimGrid<double>{rate, n, 0.0});
  const Eigen::Index k0 = n / 2;
  imp.samples[k0] = {rate, 0.0};
  imp.grid.origin_time = -imp.grid.dt() * static_cast<double>(k0);

  // the half-open band edge leaves a one-bin O(1/N) grid artifact
  const Signal out = band_rect_filter(imp, bw);
  for (Eigen::Index k = k0 - 40; k <= k0 + 40; ++k) {
    const double t = out.grid.time_at(k);
    const double x = bw * t;
    const double expected =
        bw * (std::abs(x) < 1e-12 ? 1.0 : std::sin(M_PI * x) / (M_PI * x));
    CHECK(std::abs(out.samples[k].real() - expected) < 1e-3 * bw);
    CHECK(std::abs(out.samples[k].imag()) < 1e-3 * bw);
  }
}

TEST_CASE("add aligns signals on the shared lattice") {
  const double rate = 20e9;
  const double dt = 1.0 / rate;
  Signal a = Signal::zeros(SimGrid<double>{rate, 8, 0.0});
  a.samples.setConstant({1.0, 0.0});
  Signal b = Signal::zeros(SimGrid<double>{rate, 4, 10 * dt});
  b.samples.setConstant({2.0, 0.0});
  const Signal c = add(a, b);
  CHECK(c.size() == 14);
  CHECK(c.samples[0].real() == doctest::Approx(1.0));
  CHECK(c.samples[9].real() == doctest::Approx(0.0));
  CHECK(c.samples[10].real() == doctest::Approx(2.0));

  Signal off = b;
  off.grid.origin_time += 0.4 * dt;
  CHECK_THROWS_AS(add(a, off), std::invalid_argument);
}

TEST_CASE("signal CSV round trip is lossless") {
  Rng rng(10);
  const Signal s = random_signal(rng, 20e9, 50, -2.5e-9);
  const std::string path = "sigcore_roundtrip_test.csv";
  write_signal_csv(path, s, {{"purpose", "test"}});
  const Signal back = read_signal_csv(path);
  std::remove(path.c_str());
  REQUIRE(back.size() == s.size());
  CHECK(back.grid.sample_rate == doctest::Approx(s.grid.sample_rate));
  CHECK(back.grid.origin_time == doctest::Approx(s.grid.origin_time));
  CHECK(max_abs_diff(back, s) == 0.0);
}
