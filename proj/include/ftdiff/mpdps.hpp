// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Cholesky>
#include <vector>

#include "ftdiff/ftm.hpp"
#include "ftdiff/gpsd.hpp"

namespace ftdiff {

/// How sampling consumes observations: ignore them, per-frame direct
/// guidance, or direct guidance plus cross-frame messages.
enum class GuidanceMode { none, dps, mpdps };

struct GuidanceConfig {
    double zeta = 3e-2;          // guidance step scale
    double epsilon = 0.05;       // observation noise std, in observation units
    double gamma = 50.0;         // kernel for the cross-frame regression
    double jitter = 1e-8;
    bool messages = true;        // false reduces to per-frame direct guidance
    bool exact_jacobian = true;  // false freezes the denoiser Jacobian to identity
};

/// Precomputed per-observed-frame quantities, all in standardized core space:
/// the observation operator, mean-adjusted targets, regression weights over
/// the other frames and the factored message covariance
/// epsilon^2 I + var * A A^T (diagonal floored at 1e-8).
struct FrameOperands {
    int frame = -1;         // column index into the target grid
    MatrixXd a;             // N x P
    VectorXd y;             // N
    VectorXd gpr_weights;   // over the M-1 residual frames, in grid order
    double gpr_variance = 0.0;
    Eigen::LLT<MatrixXd> sigma_llt;
};

struct GuidanceOperands {
    std::vector<double> times;  // full target grid
    std::vector<FrameOperands> frames;
    GuidanceConfig cfg;

    int num_steps() const { return static_cast<int>(times.size()); }
};

/// Builds the operands for one reconstruction problem. Every observation
/// timestamp must coincide with a target grid point; frames without
/// observations simply contribute no operand.
GuidanceOperands build_guidance_operands(const LatentFunctionSet& latents, const CoreAffine& aff,
                                         const ObservationSet& obs,
                                         const std::vector<double>& target_times,
                                         const std::vector<int>& ranks,
                                         const GuidanceConfig& cfg);

/// Per-frame direct guidance: column l gets
/// (2 / eps^2) * J_l^T A_l^T (y_l - A_l D(x_l)) where D runs on the length-1
/// sequence at frame l. Unobserved columns are zero.
MatrixXd dps_guidance(const DenoiserModel& den, const GuidanceOperands& ops, const MatrixXd& x,
                      double sigma);

/// Message from the observed frame ops.frames[operand_index] to every other
/// frame: the gradient of -1/2 r^T Sigma^{-1} r with
/// r = y_l - A_l sum_j w_j D_j(residual sequence). The column of the source
/// frame itself stays zero.
MatrixXd message_guidance(const DenoiserModel& den, const GuidanceOperands& ops,
                          int operand_index, const MatrixXd& x, double sigma);

/// Direct guidance plus, when cfg.messages is set, the sum of the messages
/// from every observed frame.
MatrixXd aggregate_guidance(const DenoiserModel& den, const GuidanceOperands& ops,
                            const MatrixXd& x, double sigma);

/// Largest stable guidance step for the given mode: damping divided by the
/// spectral norm of the guidance Hessian at the identity-denoiser quadratic
/// model (direct blocks plus, for the message mode, the coupled cross-frame
/// quadratic forms), estimated by power iteration. Returns 0 when there is
/// nothing to guide.
double stable_guidance_scale(const GuidanceOperands& ops, GuidanceMode mode,
                             double damping = 0.7);

/// Heun probability-flow sampling with guidance added after each step,
/// scaled by zeta. With zeta = 0 the trajectory is bitwise identical to
/// unconditional_sample under the same SampleConfig.
CoreSequence mpdps_sample(const DenoiserModel& den, const GuidanceOperands& ops,
                          const std::vector<int>& ranks, const SampleConfig& scfg);

/// End-to-end conditional reconstruction in raw core space: builds operands
/// from the trained encoder, samples standardized cores under the requested
/// mode and undoes the standardization.
CoreSequence reconstruct_cores(const TrainedFTM& ftm, const DenoiserModel& den,
                               const ObservationSet& obs, const std::vector<double>& target_times,
                               GuidanceMode mode, GuidanceConfig gcfg, const SampleConfig& scfg);

}  // namespace ftdiff
