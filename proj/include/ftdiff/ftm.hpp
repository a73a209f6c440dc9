// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ftdiff/data.hpp"
#include "ftdiff/tensor.hpp"

namespace ftdiff {

/// Functional Tucker training configuration. beta weighs the temporal
/// smoothness term in the mean-form loss; core refits convert it to the
/// raw-sum weight beta * N_total internally.
struct FTMConfig {
    std::vector<int> ranks = {4, 4};
    ModeFunctionArch arch{2, 64, 4, 15.0};
    double beta = 1e-5;
    double ridge = 1e-8;
    int epochs = 20;
    int latent_steps = 25;        // Adam steps on the latents per epoch
    int frames_per_batch = 8;     // (record, frame) groups per Adam step
    double lr = 1e-3;
    double holdout_fraction = 0.05;
    double divergence_factor = 50.0;
    std::uint64_t seed = 1;
};

/// Latent functions with one output head per requested rank.
LatentFunctionSet make_latent_set(const std::vector<int>& ranks, ModeFunctionArch arch, Rng& rng);

/// Mean squared residual over every observation in `records` plus
/// beta * sum over records of the summed squared adjacent-core differences.
double ftm_loss(const LatentFunctionSet& latents, const std::vector<ObservationSet>& records,
                const std::vector<CoreSequence>& cores, double beta);

/// Gradient of the mean squared residual with respect to the flat latent
/// parameter vector, cores held fixed. The smoothness term is constant in
/// the latents and contributes nothing.
VectorXd ftm_latent_gradient(const LatentFunctionSet& latents,
                             const std::vector<ObservationSet>& records,
                             const std::vector<CoreSequence>& cores);

/// Exact minimizer of
///   sum_m ||y_m - A_m vec(W_m)||^2
///   + tv_weight * sum_{m>=2} ||W_m - W_{m-1}||^2 + ridge * sum_m ||W_m||^2
/// over one core per timestamp, via a block-tridiagonal Cholesky sweep.
/// Frames with no observations are filled in by the smoothness coupling.
CoreSequence solve_core_sequence(const LatentFunctionSet& latents, const ObservationSet& obs,
                                 const std::vector<int>& ranks, double tv_weight, double ridge);

/// Core sequence for a new record under frozen latent functions; identical
/// objective to solve_core_sequence.
CoreSequence encode_observations(const LatentFunctionSet& latents, const ObservationSet& obs,
                                 const std::vector<int>& ranks, double tv_weight, double ridge);

struct TrainedFTM {
    LatentFunctionSet latents;
    std::vector<CoreSequence> cores;  // final per-record encodings
    CoreAffine standardize;           // fitted over all final core entries
    std::vector<double> train_loss;   // per epoch, mean-form objective
    std::vector<double> holdout_loss; // per epoch, pure MSE on held-out rows
    FTMConfig config;
};

/// Scalar affine fit over every core entry in the batch.
CoreAffine fit_core_affine(const std::vector<CoreSequence>& cores);

/// Alternating training: exact core refits interleaved with Adam steps on the
/// latent parameters over randomly drawn frame groups. Throws TrainingError
/// (with the loss trace) if the objective blows up or turns non-finite.
TrainedFTM train_ftm(const std::vector<ObservationSet>& records, const FTMConfig& cfg);

}  // namespace ftdiff
