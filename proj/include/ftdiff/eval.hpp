// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ftdiff/synthetic.hpp"
#include "ftdiff/tensor.hpp"

namespace ftdiff {

/// RMSE(pred, truth) over the population standard deviation of the truth.
/// Throws on constant ground truth.
double vrmse(const VectorXd& pred, const VectorXd& truth);

struct ReconstructionEval {
    double rmse = 0.0;
    double vrmse = 0.0;  // rmse over the population std of the true field
    std::vector<double> frame_rmse;
    std::vector<double> frame_vrmse;
};

/// Dense lattice comparison of decoded raw cores against the analytic field at
/// the core timestamps.
ReconstructionEval evaluate_reconstruction(const SyntheticField& field,
                                           const LatentFunctionSet& latents,
                                           const CoreSequence& raw_cores, int grid);

/// Mean Frobenius distance between consecutive cores; a roughness measure of
/// the sequence in time.
double adjacent_core_distance(const CoreSequence& cores);

/// Bootstrap estimate of Pr[mean(values) < 0] under resampling with
/// replacement. Near 1 means the mean is reliably negative.
double bootstrap_fraction_negative(const std::vector<double>& values, int resamples,
                                   std::uint64_t seed);

}  // namespace ftdiff
