// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#ifndef TRDCMA_SIGCORE_HPP
#define TRDCMA_SIGCORE_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "trdcma/fftops.hpp"

namespace trdcma {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Uniform sampling lattice shared by all signals of a pipeline. origin_time is
// the time of sample index 0 and may be negative (two-sided responses are
// centered on t = 0).
template <typename Real>
struct SimGrid {
  Real sample_rate = Real(0);  // samples per second
  Eigen::Index num_samples = 0;
  Real origin_time = Real(0);  // seconds

  Real dt() const { return Real(1) / sample_rate; }
  Real time_at(Eigen::Index k) const {
    return origin_time + static_cast<Real>(k) * dt();
  }
  Real end_time() const { return time_at(num_samples - 1); }
  Real duration() const { return static_cast<Real>(num_samples) * dt(); }

  void validate() const {
    require(sample_rate > Real(0), "SimGrid: sample_rate must be > 0");
    require(num_samples > 0, "SimGrid: num_samples must be > 0");
  }
};

// Complex-baseband sampled waveform. Signals at the same rate may have
// different lengths and origins; linear convolution grows the support.
template <typename Real>
struct BasicSignal {
  using Complex = std::complex<Real>;
  using Vector = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;

  SimGrid<Real> grid;
  Vector samples;

  Eigen::Index size() const { return samples.size(); }

  static BasicSignal zeros(const SimGrid<Real>& g) {
    g.validate();
    BasicSignal s;
    s.grid = g;
    s.samples = Vector::Zero(g.num_samples);
    return s;
  }
};

using Signal = BasicSignal<double>;

template <typename Real>
bool same_rate(const BasicSignal<Real>& a, const BasicSignal<Real>& b) {
  const Real ra = a.grid.sample_rate;
  const Real rb = b.grid.sample_rate;
  return std::abs(ra - rb) <= Real(1e-9) * std::max(std::abs(ra), std::abs(rb));
}

template <typename Real>
void require_same_rate(const BasicSignal<Real>& a, const BasicSignal<Real>& b,
                       const char* who) {
  require(same_rate(a, b), std::string(who) + ": sample rates differ");
}

// Discrete approximation of a unit Dirac impulse at time t0: a single sample
// of value 1/dt. t0 must land on the lattice implied by (sample_rate, t0).
template <typename Real>
BasicSignal<Real> unit_impulse(Real sample_rate, Real t0 = Real(0)) {
  BasicSignal<Real> s;
  s.grid = SimGrid<Real>{sample_rate, 1, t0};
  s.samples.resize(1);
  s.samples[0] = std::complex<Real>(sample_rate, Real(0));
  return s;
}

template <typename Real>
Real energy(const BasicSignal<Real>& s) {
  return s.samples.squaredNorm() * s.grid.dt();
}

template <typename Real>
struct PeakAbs {
  Real time = Real(0);
  Real magnitude = Real(0);
};

// Argmax and max of |x(t)|; ties resolve to the earliest time.
template <typename Real>
PeakAbs<Real> peak_abs(const BasicSignal<Real>& s) {
  require(s.size() > 0, "peak_abs: empty signal");
  Eigen::Index best = 0;
  Real best_sq = std::norm(s.samples[0]);
  for (Eigen::Index k = 1; k < s.size(); ++k) {
    const Real v = std::norm(s.samples[k]);
    if (v > best_sq) {
      best_sq = v;
      best = k;
    }
  }
  return {s.grid.time_at(best), std::sqrt(best_sq)};
}

// Linear (aperiodic) convolution scaled by dt, approximating the
// continuous-time convolution integral. Output origin is the sum of the
// input origins; output length is La + Lb - 1.
template <typename Real>
BasicSignal<Real> convolve(const BasicSignal<Real>& a,
                           const BasicSignal<Real>& b) {
  require_same_rate(a, b, "convolve");
  require(a.size() > 0 && b.size() > 0, "convolve: empty signal");
  using Vector = typename BasicSignal<Real>::Vector;
  const Eigen::Index la = a.size();
  const Eigen::Index lb = b.size();
  const Eigen::Index lout = la + lb - 1;
  const Real dt = a.grid.dt();

  BasicSignal<Real> out;
  out.grid = SimGrid<Real>{a.grid.sample_rate, lout,
                           a.grid.origin_time + b.grid.origin_time};

  if (std::min(la, lb) <= 8) {
    const auto& s = (la <= lb) ? a.samples : b.samples;
    const auto& l = (la <= lb) ? b.samples : a.samples;
    out.samples = Vector::Zero(lout);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      out.samples.segment(i, l.size()) += s[i] * dt * l;
    }
    return out;
  }

  const Eigen::Index nfft = next_pow2(lout);
  Vector pa = Vector::Zero(nfft);
  Vector pb = Vector::Zero(nfft);
  pa.head(la) = a.samples;
  pb.head(lb) = b.samples;
  Vector fa = fft_forward<Real>(pa);
  const Vector fb = fft_forward<Real>(pb);
  fa.array() *= fb.array() * std::complex<Real>(dt, Real(0));
  out.samples = fft_inverse<Real>(fa).head(lout);
  return out;
}

// Matched-filter template of s: t -> -t with complex conjugation, so the
// spectrum of the output is the conjugate of the spectrum of the input.
template <typename Real>
BasicSignal<Real> time_reverse_conjugate(const BasicSignal<Real>& s) {
  BasicSignal<Real> out;
  out.grid = SimGrid<Real>{s.grid.sample_rate, s.size(), -s.grid.end_time()};
  out.samples = s.samples.reverse().conjugate();
  return out;
}

// Zeroes every spectral bin outside [-bandwidth/2, +bandwidth/2) on the
// signal's own DFT lattice and leaves in-band bins untouched.
template <typename Real>
BasicSignal<Real> band_rect_filter(const BasicSignal<Real>& s, Real bandwidth) {
  require(bandwidth > Real(0), "band_rect_filter: bandwidth must be > 0");
  require(bandwidth <= s.grid.sample_rate * (Real(1) + Real(1e-12)),
          "band_rect_filter: bandwidth exceeds sample rate");
  const Eigen::Index n = s.size();
  const Real df = s.grid.sample_rate / static_cast<Real>(n);
  auto bins = fft_forward<Real>(s.samples);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!bin_in_band(signed_bin(j, n), df, bandwidth)) {
      bins[j] = std::complex<Real>(0, 0);
    }
  }
  BasicSignal<Real> out;
  out.grid = s.grid;
  out.samples = fft_inverse<Real>(bins);
  return out;
}

// Sample-wise sum of two signals on a shared lattice; origins may differ by
// an integer number of samples. The result spans the union of the supports.
template <typename Real>
BasicSignal<Real> add(const BasicSignal<Real>& a, const BasicSignal<Real>& b) {
  require_same_rate(a, b, "add");
  const Real dt = a.grid.dt();
  const Real off = (b.grid.origin_time - a.grid.origin_time) / dt;
  const auto k0 = static_cast<Eigen::Index>(std::llround(off));
  require(std::abs(off - static_cast<Real>(k0)) <= Real(1e-6),
          "add: signal origins are not on a common lattice");
  const Eigen::Index lo = std::min<Eigen::Index>(0, k0);
  const Eigen::Index hi = std::max(a.size(), k0 + b.size());
  BasicSignal<Real> out = BasicSignal<Real>::zeros(
      SimGrid<Real>{a.grid.sample_rate, hi - lo,
                    a.grid.origin_time + static_cast<Real>(lo) * dt});
  out.samples.segment(-lo, a.size()) = a.samples;
  out.samples.segment(k0 - lo, b.size()) += b.samples;
  return out;
}

template <typename Real>
BasicSignal<Real> scaled(const BasicSignal<Real>& s, std::complex<Real> c) {
  BasicSignal<Real> out;
  out.grid = s.grid;
  out.samples = s.samples * c;
  return out;
}

template <typename Real>
BasicSignal<Real> real_part(const BasicSignal<Real>& s) {
  BasicSignal<Real> out;
  out.grid = s.grid;
  out.samples = s.samples.real().template cast<std::complex<Real>>();
  return out;
}

// Restriction of s to [t0, t1] (inclusive at sample resolution).
template <typename Real>
BasicSignal<Real> crop(const BasicSignal<Real>& s, Real t0, Real t1) {
  require(t1 >= t0, "crop: t1 < t0");
  const Real dt = s.grid.dt();
  auto i0 = static_cast<Eigen::Index>(
      std::ceil((t0 - s.grid.origin_time) / dt - Real(1e-6)));
  auto i1 = static_cast<Eigen::Index>(
      std::floor((t1 - s.grid.origin_time) / dt + Real(1e-6)));
  i0 = std::max<Eigen::Index>(i0, 0);
  i1 = std::min(i1, s.size() - 1);
  require(i1 >= i0, "crop: window does not intersect signal support");
  BasicSignal<Real> out;
  out.grid = SimGrid<Real>{s.grid.sample_rate, i1 - i0 + 1, s.grid.time_at(i0)};
  out.samples = s.samples.segment(i0, i1 - i0 + 1);
  return out;
}

// Zero-extension of s to n samples (origin preserved).
template <typename Real>
BasicSignal<Real> pad_to(const BasicSignal<Real>& s, Eigen::Index n) {
  require(n >= s.size(), "pad_to: target shorter than signal");
  BasicSignal<Real> out = BasicSignal<Real>::zeros(
      SimGrid<Real>{s.grid.sample_rate, n, s.grid.origin_time});
  out.samples.head(s.size()) = s.samples;
  return out;
}

// Continuous-time Fourier transform samples of a signal, bin j holding
// S(f_j) with f_j = signed_bin(j, N) * sample_rate / N. The dt scaling and
// the origin-time phase make the values grid-placement invariant.
template <typename Real>
struct BasicSpectrum {
  SimGrid<Real> grid;  // the time grid the spectrum was computed on
  typename BasicSignal<Real>::Vector bins;

  Real bin_spacing() const {
    return grid.sample_rate / static_cast<Real>(bins.size());
  }
  Real frequency_at(Eigen::Index j) const {
    return static_cast<Real>(signed_bin(j, bins.size())) * bin_spacing();
  }
};

using Spectrum = BasicSpectrum<double>;

template <typename Real>
BasicSpectrum<Real> to_spectrum(const BasicSignal<Real>& s) {
  BasicSpectrum<Real> sp;
  sp.grid = s.grid;
  sp.bins = fft_forward<Real>(s.samples);
  const Eigen::Index n = sp.bins.size();
  const Real dt = s.grid.dt();
  const Real df = s.grid.sample_rate / static_cast<Real>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Real f = static_cast<Real>(signed_bin(j, n)) * df;
    const Real ph = Real(-2) * static_cast<Real>(M_PI) * f * s.grid.origin_time;
    sp.bins[j] *= std::polar(dt, ph);
  }
  return sp;
}

template <typename Real>
BasicSignal<Real> from_spectrum(const BasicSpectrum<Real>& sp) {
  const Eigen::Index n = sp.bins.size();
  require(n == sp.grid.num_samples, "from_spectrum: bin count != grid length");
  typename BasicSignal<Real>::Vector dft(n);
  const Real dt = sp.grid.dt();
  const Real df = sp.grid.sample_rate / static_cast<Real>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Real f = static_cast<Real>(signed_bin(j, n)) * df;
    const Real ph = Real(2) * static_cast<Real>(M_PI) * f * sp.grid.origin_time;
    dft[j] = sp.bins[j] * std::polar(Real(1) / dt, ph);
  }
  BasicSignal<Real> out;
  out.grid = sp.grid;
  out.samples = fft_inverse<Real>(dft);
  return out;
}

template <typename Real>
Real spectral_energy(const BasicSpectrum<Real>& sp) {
  return sp.bins.squaredNorm() * sp.bin_spacing();
}

// ---------------------------------------------------------------------------
// CSV persistence: columns t_seconds,re,im with a mandatory header row.
// Metadata travels in leading '#' comment lines as key=value pairs.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_signal_csv(
    const std::string& path, const Signal& s,
    const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  std::ofstream out(path);
  require(out.good(), "write_signal_csv: cannot open " + path);
  out << "# sample_rate_hz=" << detail::format_g17(s.grid.sample_rate) << "\n";
  out << "# origin_time_s=" << detail::format_g17(s.grid.origin_time) << "\n";
  for (const auto& [k, v] : meta) out << "# " << k << "=" << v << "\n";
  out << "t_seconds,re,im\n";
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    out << detail::format_g17(s.grid.time_at(k)) << ','
        << detail::format_g17(s.samples[k].real()) << ','
        << detail::format_g17(s.samples[k].imag()) << "\n";
  }
}

inline Signal read_signal_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "read_signal_csv: cannot open " + path);
  std::string line;
  std::map<std::string, std::string> meta;
  bool header_seen = false;
  std::vector<double> ts;
  std::vector<std::complex<double>> xs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        auto key = line.substr(1, eq - 1);
        key.erase(0, key.find_first_not_of(' '));
        meta[key] = line.substr(eq + 1);
      }
      continue;
    }
    if (!header_seen) {
      require(line.rfind("t_seconds,re,im", 0) == 0,
              "read_signal_csv: missing t_seconds,re,im header in " + path);
      header_seen = true;
      continue;
    }
    double t = 0, re = 0, im = 0;
    require(std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &re, &im) == 3,
            "read_signal_csv: malformed row in " + path);
    ts.push_back(t);
    xs.emplace_back(re, im);
  }
  require(header_seen && !xs.empty(), "read_signal_csv: no samples in " + path);

  Signal s;
  double rate = 0;
  if (auto it = meta.find("sample_rate_hz"); it != meta.end()) {
    rate = std::stod(it->second);
  } else {
    require(ts.size() >= 2, "read_signal_csv: cannot infer sample rate");
    rate = (static_cast<double>(ts.size()) - 1.0) / (ts.back() - ts.front());
  }
  double origin = ts.front();
  if (auto it = meta.find("origin_time_s"); it != meta.end()) {
    origin = std::stod(it->second);
  }
  s.grid = SimGrid<double>{rate, static_cast<Eigen::Index>(xs.size()), origin};
  s.samples.resize(static_cast<Eigen::Index>(xs.size()));
  for (Eigen::Index k = 0; k < s.samples.size(); ++k) {
    s.samples[k] = xs[static_cast<std::size_t>(k)];
    require(std::abs(ts[static_cast<std::size_t>(k)] - s.grid.time_at(k)) <=
                1e-6 / rate + 1e-12 * std::abs(ts[static_cast<std::size_t>(k)]),
            "read_signal_csv: non-uniform time column in " + path);
  }
  return s;
}

}  // namespace trdcma

#endif  // TRDCMA_SIGCORE_HPP
