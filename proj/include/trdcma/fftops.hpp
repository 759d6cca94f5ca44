// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#ifndef TRDCMA_FFTOPS_HPP
#define TRDCMA_FFTOPS_HPP

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <complex>

namespace trdcma {

inline Eigen::Index next_pow2(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

// One FFT object per thread; Eigen::FFT caches plans per length internally.
template <typename Real>
Eigen::FFT<Real>& fft_engine() {
  thread_local Eigen::FFT<Real> fft;
  return fft;
}

}  // namespace detail

// Unscaled DFT: X[j] = sum_k x[k] exp(-2*pi*i*j*k/N).
template <typename Real>
Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1> fft_forward(
    const Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>& x) {
  Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1> out;
  detail::fft_engine<Real>().fwd(out, x);
  return out;
}

// Inverse DFT scaled by 1/N, so fft_inverse(fft_forward(x)) == x.
template <typename Real>
Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1> fft_inverse(
    const Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>& x) {
  Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1> out;
  detail::fft_engine<Real>().inv(out, x);
  return out;
}

// Signed bin index for DFT bin j of an N-point transform: 0, 1, ..., N/2-1,
// then -N/2, ..., -1. Bin frequency is signed_bin(j, N) * sample_rate / N.
inline Eigen::Index signed_bin(Eigen::Index j, Eigen::Index n) {
  return (2 * j < n) ? j : j - n;
}

// Half-open in-band test [-bandwidth/2, +bandwidth/2) on a signed bin index.
// Index-based so bin counts are unambiguous across grid sizes.
template <typename Real>
bool bin_in_band(Eigen::Index js, Real bin_spacing, Real bandwidth) {
  const Real half_band_bins = bandwidth / (Real(2) * bin_spacing);
  const Real j = static_cast<Real>(js);
  return j >= -half_band_bins - Real(1e-9) && j < half_band_bins - Real(1e-9);
}

}  // namespace trdcma

#endif  // TRDCMA_FFTOPS_HPP
