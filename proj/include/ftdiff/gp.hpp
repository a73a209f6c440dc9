// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ftdiff/common.hpp"
#include "ftdiff/data.hpp"

namespace ftdiff {

/// RBF kernel parameters. gamma is the inverse squared length-scale; jitter is
/// added to kernel-matrix diagonals before factorization.
struct RBFKernelConfig {
    double gamma = 50.0;
    double jitter = 1e-8;
};

/// kappa(ti, tj) = exp(-gamma (ti - tj)^2), in (0, 1].
double rbf_kernel(double ti, double tj, double gamma);

/// Affine map sending [min(times), max(times)] to [0,1]. Kernel evaluations
/// normalize times through this map so gamma is comparable across sequence
/// lengths. Degenerate spans map everything to 0.
struct TimeNormalizer {
    double lo = 0.0;
    double scale = 0.0;  // 1/(hi-lo), or 0 when the span is degenerate

    static TimeNormalizer fit(const std::vector<double>& times);
    double operator()(double t) const { return (t - lo) * scale; }
};

/// Symmetric PSD kernel matrix over a normalized time grid.
struct KernelMatrix {
    std::vector<double> times;  // raw times
    MatrixXd matrix;            // jittered kernel
};

KernelMatrix build_kernel_matrix(const std::vector<double>& times, const RBFKernelConfig& cfg);

/// Noise source for sequence diffusion: temporally correlated GP draws or
/// plain iid Gaussian draws (the ablation / M=1 degenerate behaviour).
enum class NoiseKind { gp, iid };

/// Draw a core-sequence-shaped noise sample: each core element follows, across
/// the M timestamps, a zero-mean Gaussian with covariance sigma^2 K (unit
/// marginal variance before scaling). Deterministic given seed. On Cholesky
/// failure the jitter is doubled up to four times before raising.
CoreSequence sample_gp_noise(const std::vector<double>& times, const std::vector<int>& core_ranks,
                             double gamma, double marginal_std, std::uint64_t seed,
                             NoiseKind kind = NoiseKind::gp, double jitter = 1e-8);

/// GPR conditional of the value at target_time given values at rest_times,
/// under the unit-variance RBF prior: weights = k^T (K + jitter I)^{-1},
/// variance = 1 - k^T K^{-1} k (clamped to >= 0).
struct GPRConditional {
    VectorXd weights;
    double variance = 0.0;
};

GPRConditional gpr_conditional(double target_time, const std::vector<double>& rest_times,
                               double gamma, double jitter = 1e-8);

}  // namespace ftdiff
