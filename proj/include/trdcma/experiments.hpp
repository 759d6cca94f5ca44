// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#ifndef TRDCMA_EXPERIMENTS_HPP
#define TRDCMA_EXPERIMENTS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "trdcma/calibration.hpp"
#include "trdcma/channel.hpp"
#include "trdcma/config.hpp"
#include "trdcma/link.hpp"
#include "trdcma/metrics.hpp"
#include "trdcma/phaser.hpp"

namespace trdcma {

// Everything needed to stand up one 2M-access-point system: phaser band
// plan, code assignment, routing, wireless channel statistics, calibration
// settings and the master seed all derived artifacts hang off.
struct SystemParams {
  PhaserSpec phaser{10e9, 6e-9, 10e-9};
  double oversampling = 2.0;
  int num_users = 5;
  std::vector<DispersionCode> codes;      // empty: generate_code_set(M)
  std::vector<int> routing;               // empty: identity
  std::vector<double> uplink_amps;        // empty: all ones
  std::vector<double> downlink_amps;      // empty: all ones
  MultipathParams multipath;              // CM3 defaults
  bool los_channels = false;              // unit-impulse wireless paths
  bool reciprocal_channels = false;
  double calib_window = 0.0;              // 0: tau0 + dtau/2 + 40 ns
  double calib_epsilon = 0.0;
  double detector_threshold = 0.5;
  std::uint64_t master_seed = 1;

  double sample_rate() const { return oversampling * phaser.bandwidth; }
  double default_calib_window() const {
    return phaser.delay_offset + phaser.delay_swing / 2.0 + 40e-9;
  }

  static SystemParams defaults(int m);
  void finalize();        // fills the empty defaults
  void validate() const;  // throws std::invalid_argument
};

// Assembled and calibrated system: composite channels per access point and
// the matched-filter bank, immutable during the communication phase.
struct LinkAssembly {
  SystemParams params;
  std::vector<Signal> phaser_up, wireless_up, channel_up;
  std::vector<Signal> phaser_down, wireless_down, channel_down;
  MatchedFilterBank bank_up, bank_down;
  std::vector<double> offsets;  // t_m, lattice-quantized draws from [0, T_b)
};

// Draws channels, synthesizes phasers, runs the calibration phase and
// quantizes the per-user time offsets for the given bit period.
LinkAssembly assemble_link(const SystemParams& params, double bit_period);

// Per-user random stream offsets: uniform draws from [0, T_b) quantized to
// the sample lattice, seeded per user from the master seed.
std::vector<double> draw_time_offsets(const SystemParams& params,
                                      double bit_period);

// One user's decoded view of a transmission.
struct DecodedUser {
  int user = 0;
  Signal desired;  // normalized, peak 1
  Signal mai;      // normalized by the same factor
  double scale = 0.0;
  double mai_variance_inphase = 0.0;  // steady-state, in-phase component
  double sir_statistical = 0.0;
  int steady_span = 0;
  double steady_start = 0.0;
  std::vector<double> mai_samples;  // decimated in-phase steady-state values
  // one bit period of distinct in-phase values; the honest normality
  // ensemble when the worst-case interference is bit-periodic
  std::vector<double> mai_period_samples;
  DetectResult<double> detection;
};

struct TransmissionRun {
  std::vector<BitStream> sent;
  std::vector<DecodedUser> users;  // one per entry of analyze_users
};

// Worst-case or payload uplink: modulate, superpose over the uplink
// channels, decode per analyzed user with its calibration template.
TransmissionRun run_uplink(const LinkAssembly& link, double bit_period,
                           const std::vector<std::vector<std::uint8_t>>& bits,
                           const std::vector<int>& analyze_users);

// Downlink leg: the router regenerates clean impulse trains from the given
// streams, predistorts each with the matched filter of its routed access
// point, and every analyzed user is decoded at access point routing[m].
TransmissionRun run_downlink(const LinkAssembly& link, double bit_period,
                             const std::vector<BitStream>& router_streams,
                             const std::vector<int>& analyze_users);

// Uniformly thinned steady-state in-phase MAI samples, decimated to the
// band-period lattice where neighboring samples decorrelate.
std::vector<double> decimate_mai_samples(const Signal& steady_inphase,
                                         double sample_rate, double bandwidth,
                                         std::size_t max_samples);

// ---------------------------------------------------------------------------
// Scenario runners (CLI surface)
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string scenario;
  SystemParams sys;
  double bit_period = 10e-9;
  std::vector<double> bit_period_list;  // mai / sir sweeps
  std::vector<int> m_list;              // sir / bep sweeps
  std::vector<double> dftb_list;        // bep sweep
  int n_bits = 500;
  bool worst_case = true;
  int trace_bits = 20;
  int sessions = 1;
  std::string output_dir = "out";
  std::uint64_t config_hash = 0;

  static ExperimentConfig from_config(const Config& cfg,
                                      const std::string& scenario);
};

struct RunArtifacts {
  std::vector<std::string> files;
  bool thresholds_ok = true;
  std::string violation;
};

RunArtifacts run_mai_traces(const ExperimentConfig& cfg);
RunArtifacts run_sir_sweep(const ExperimentConfig& cfg);
RunArtifacts run_bep_sweep(const ExperimentConfig& cfg);
RunArtifacts run_end_to_end(const ExperimentConfig& cfg);
RunArtifacts run_calibrate(const ExperimentConfig& cfg);

}  // namespace trdcma

#endif  // TRDCMA_EXPERIMENTS_HPP
