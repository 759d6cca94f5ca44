// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <functional>
#include <string>

#include "trdcma/experiments.hpp"

namespace {

// exit codes: 0 success, 2 configuration error, 3 threshold violation
constexpr int kOk = 0;
constexpr int kInternalError = 1;
constexpr int kConfigError = 2;
constexpr int kThresholdViolation = 3;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void attach_common(CLI::App* sub, CommonOpts& opts) {
  sub->add_option("--config", opts.config_path, "configuration file")
      ->required();
  sub->add_option("--out", opts.out_dir, "output directory override");
  sub->add_option("--seed", opts.seed, "master seed override")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

int run_scenario(const CommonOpts& opts, const std::string& scenario,
                 trdcma::RunArtifacts (*runner)(const trdcma::ExperimentConfig&)) {
  trdcma::Config file_cfg = trdcma::Config::from_file(opts.config_path);
  if (opts.seed_set) file_cfg.set("master_seed", std::to_string(opts.seed));
  if (!opts.out_dir.empty()) file_cfg.set("output_dir", opts.out_dir);
  const auto cfg = trdcma::ExperimentConfig::from_config(file_cfg, scenario);
  const auto artifacts = runner(cfg);
  for (const auto& f : artifacts.files) {
    std::printf("wrote %s/%s\n", cfg.output_dir.c_str(), f.c_str());
  }
  if (!artifacts.thresholds_ok) {
    std::fprintf(stderr, "threshold violation: %s\n",
                 artifacts.violation.c_str());
    return kThresholdViolation;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "trdcma: baseband simulator for time-reversal routed dispersion code "
      "multiple access links"};
  app.require_subcommand(1);

  struct Scenario {
    const char* name;
    const char* help;
    trdcma::RunArtifacts (*runner)(const trdcma::ExperimentConfig&);
  };
  const Scenario scenarios[] = {
      {"mai", "interference traces and distribution statistics",
       trdcma::run_mai_traces},
      {"sir", "statistical vs analytical SIR sweep", trdcma::run_sir_sweep},
      {"bep", "closed-form bit error probability sweep",
       trdcma::run_bep_sweep},
      {"e2e", "end-to-end uplink/downlink Monte Carlo",
       trdcma::run_end_to_end},
      {"calibrate", "calibration phase artifacts", trdcma::run_calibrate},
  };

  CommonOpts opts[5];
  for (int i = 0; i < 5; ++i) {
    auto* sub = app.add_subcommand(scenarios[i].name, scenarios[i].help);
    attach_common(sub, opts[i]);
  }

  CLI11_PARSE(app, argc, argv);

  for (int i = 0; i < 5; ++i) {
    if (!app.get_subcommand(scenarios[i].name)->parsed()) continue;
    try {
      return run_scenario(opts[i], scenarios[i].name, scenarios[i].runner);
    } catch (const std::invalid_argument& e) {
      std::fprintf(stderr, "configuration error: %s\n", e.what());
      return kConfigError;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kInternalError;
    }
  }
  return kConfigError;
}
