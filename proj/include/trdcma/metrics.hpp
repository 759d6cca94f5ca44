// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#ifndef TRDCMA_METRICS_HPP
#define TRDCMA_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "trdcma/sigcore.hpp"

namespace trdcma {

// Standard normal tail Q(x) = P(N(0,1) > x).
template <typename Real>
Real q_function(Real x) {
  return std::erfc(x / std::sqrt(Real(2))) / Real(2);
}

template <typename Real>
Real normal_cdf(Real x, Real sigma) {
  return std::erfc(-x / (sigma * std::sqrt(Real(2)))) / Real(2);
}

template <typename Real>
Real to_db(Real linear) {
  return Real(10) * std::log10(linear);
}

// MAI average power over whole bit periods: the mean of |x|^2 over the first
// span*T_b of the signal, with the mean of x imposed as zero. The input must
// already be restricted to the steady-state window.
template <typename Real>
Real mai_variance(const BasicSignal<Real>& x, Real bit_period, int span) {
  require(bit_period > Real(0), "mai_variance: bit period must be > 0");
  require(span >= 1, "mai_variance: need at least one whole bit");
  const Real dt = x.grid.dt();
  const auto need = static_cast<Eigen::Index>(
      std::llround(static_cast<Real>(span) * bit_period / dt));
  require(need >= 1 && need <= x.size(),
          "mai_variance: window shorter than the requested bit span");
  const Real sum_sq = x.samples.head(need).squaredNorm();
  return sum_sq / static_cast<Real>(need);
}

// Asymptotic Kolmogorov survival function with Stephens' finite-sample
// correction applied by the caller.
template <typename Real>
Real kolmogorov_sf(Real t) {
  if (t < Real(0.3)) return Real(1);
  Real sum = Real(0);
  for (int j = 1; j <= 100; ++j) {
    const Real term = std::exp(Real(-2) * Real(j) * Real(j) * t * t);
    sum += (j % 2 == 1) ? term : -term;
    if (term < Real(1e-16)) break;
  }
  return std::clamp(Real(2) * sum, Real(0), Real(1));
}

template <typename Real>
struct KsResult {
  Real statistic = Real(0);
  Real p_value = Real(0);
};

// One-sample Kolmogorov-Smirnov test of the samples against N(0, sigma^2).
template <typename Real>
KsResult<Real> ks_test_normal(std::vector<Real> samples, Real sigma2) {
  require(!samples.empty(), "ks_test_normal: no samples");
  if (!(sigma2 > Real(0))) return {Real(1), Real(0)};
  const Real sigma = std::sqrt(sigma2);
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<Real>(samples.size());
  Real d = Real(0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Real cdf = normal_cdf(samples[i], sigma);
    const Real lo = static_cast<Real>(i) / n;
    const Real hi = static_cast<Real>(i + 1) / n;
    d = std::max({d, std::abs(cdf - lo), std::abs(cdf - hi)});
  }
  const Real sqrt_n = std::sqrt(n);
  const Real t = (sqrt_n + Real(0.12) + Real(0.11) / sqrt_n) * d;
  return {d, kolmogorov_sf(t)};
}

// Empirical MAI distribution summary: density-normalized histogram plus the
// normality check against N(0, variance).
template <typename Real>
struct BasicMaiStats {
  Real mean = Real(0);
  Real variance = Real(0);
  std::vector<Real> bin_edges;  // size bins+1
  std::vector<Real> densities;  // size bins
  Real ks_statistic = Real(0);
  Real ks_p_value = Real(0);
  bool degenerate = false;
};

using MaiStats = BasicMaiStats<double>;

namespace detail {

template <typename Real>
int freedman_diaconis_bins(std::vector<Real> sorted, Real lo, Real hi) {
  const std::size_t n = sorted.size();
  const Real q1 = sorted[n / 4];
  const Real q3 = sorted[(3 * n) / 4];
  const Real iqr = q3 - q1;
  if (!(iqr > Real(0)) || !(hi > lo)) return 1;
  const Real width = Real(2) * iqr / std::cbrt(static_cast<Real>(n));
  return static_cast<int>(
      std::clamp<Real>(std::ceil((hi - lo) / width), Real(1), Real(4096)));
}

}  // namespace detail

// Histogram + normality summary for steady-state MAI samples. The mean is
// imposed as zero; the variance defaults to the mean square of the samples
// unless the caller passes the bit-window variance explicitly. n_bins = 0
// chooses the bin count with the Freedman-Diaconis rule.
template <typename Real>
BasicMaiStats<Real> mai_pdf(const std::vector<Real>& samples, int n_bins = 0,
                            Real variance_override = Real(-1)) {
  require(samples.size() >= 1000, "mai_pdf: need at least 1000 samples");
  BasicMaiStats<Real> stats;
  stats.mean = Real(0);

  Real sum_sq = Real(0);
  Real lo = samples.front();
  Real hi = samples.front();
  for (Real v : samples) {
    sum_sq += v * v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  stats.variance = variance_override >= Real(0)
                       ? variance_override
                       : sum_sq / static_cast<Real>(samples.size());

  if (!(hi > lo) || !(stats.variance > Real(0))) {
    stats.degenerate = true;
    stats.bin_edges = {lo - Real(0.5), hi + Real(0.5)};
    stats.densities = {Real(1) / (stats.bin_edges[1] - stats.bin_edges[0])};
    stats.ks_statistic = Real(1);
    stats.ks_p_value = Real(0);
    return stats;
  }

  std::vector<Real> sorted(samples);
  std::sort(sorted.begin(), sorted.end());
  const int bins =
      n_bins > 0 ? n_bins : detail::freedman_diaconis_bins(sorted, lo, hi);
  const Real width = (hi - lo) / static_cast<Real>(bins);
  stats.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) {
    stats.bin_edges[static_cast<std::size_t>(b)] =
        lo + width * static_cast<Real>(b);
  }
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(bins), 0);
  for (Real v : samples) {
    auto b = static_cast<Eigen::Index>((v - lo) / width);
    b = std::clamp<Eigen::Index>(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  stats.densities.resize(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    stats.densities[static_cast<std::size_t>(b)] =
        static_cast<Real>(counts[static_cast<std::size_t>(b)]) /
        (static_cast<Real>(samples.size()) * width);
  }

  const auto ks = ks_test_normal(samples, stats.variance);
  stats.ks_statistic = ks.statistic;
  stats.ks_p_value = ks.p_value;
  return stats;
}

// Statistical SIR of a normalized link: the reciprocal of the MAI average
// power over the steady-state window, with the desired peak normalized to 1.
// A zero-MAI link (single user) maps to the +infinity sentinel.
template <typename Real>
Real sir_statistical(const BasicSignal<Real>& desired,
                     const BasicSignal<Real>& mai, Real bit_period, int span) {
  const Real peak = peak_abs(desired).magnitude;
  require(std::abs(peak - Real(1)) <= Real(1e-6),
          "sir_statistical: desired signal is not peak-normalized");
  const Real var = mai_variance(mai, bit_period, span);
  if (!(var > Real(0))) return std::numeric_limits<Real>::infinity();
  return Real(1) / var;
}

// Closed-form SIR: 2 * delta_f * T_b / (mean normalized interferer energy *
// (M - 1)), the interferer mean excluding the user itself.
template <typename Real>
Real sir_analytical(Real delta_f, Real bit_period, int num_users,
                    const std::vector<Real>& amps, std::size_t m) {
  require(num_users >= 2, "sir_analytical: undefined for fewer than 2 users");
  require(amps.size() == static_cast<std::size_t>(num_users),
          "sir_analytical: amplitude list size != M");
  require(m < amps.size(), "sir_analytical: user index out of range");
  require(delta_f > Real(0) && bit_period > Real(0),
          "sir_analytical: bandwidth and bit period must be > 0");
  for (Real a : amps) require(a > Real(0), "sir_analytical: alpha <= 0");
  Real alpha_bar_sq = Real(0);
  for (std::size_t k = 0; k < amps.size(); ++k) {
    if (k == m) continue;
    const Real ratio = amps[k] / amps[m];
    alpha_bar_sq += ratio * ratio;
  }
  alpha_bar_sq /= static_cast<Real>(num_users - 1);
  return Real(2) * delta_f * bit_period /
         (alpha_bar_sq * static_cast<Real>(num_users - 1));
}

// Gaussian-tail bit error probability Q(sqrt(SIR)/2) for OOK detection at
// half the normalized desired peak.
template <typename Real>
Real bep_from_sir(Real sir) {
  require(sir >= Real(0), "bep_from_sir: SIR must be >= 0");
  if (std::isinf(sir)) return Real(0);
  return q_function(std::sqrt(sir) / Real(2));
}

// Overall two-hop error probability: communication succeeds only when both
// the uplink and the downlink succeed.
template <typename Real>
Real bep_overall(Real bep_up, Real bep_down) {
  require(bep_up >= Real(0) && bep_up <= Real(0.5) && bep_down >= Real(0) &&
              bep_down <= Real(0.5),
          "bep_overall: per-hop BEP outside [0, 0.5]");
  return bep_up + bep_down - bep_up * bep_down;
}

// Small-BEP approximation reported alongside the exact form.
template <typename Real>
Real bep_overall_approx(Real bep_up, Real bep_down) {
  return bep_up + bep_down;
}

// Statistical vs analytical SIR comparison for one operating point.
template <typename Real>
struct BasicSirReport {
  Real statistical_sir = Real(0);  // linear
  Real analytical_sir = Real(0);   // linear
  Real deviation_db = Real(0);

  static BasicSirReport make(Real statistical, Real analytical) {
    BasicSirReport r;
    r.statistical_sir = statistical;
    r.analytical_sir = analytical;
    r.deviation_db = to_db(statistical) - to_db(analytical);
    return r;
  }
};

using SirReport = BasicSirReport<double>;

}  // namespace trdcma

#endif  // TRDCMA_METRICS_HPP
