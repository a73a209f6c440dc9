// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ftdiff/data.hpp"
#include "ftdiff/gp.hpp"

namespace ftdiff {

/// Warped noise level grid with sigma(0) = 0 and sigma(steps) = sigma_max;
/// interior levels interpolate sigma_min..sigma_max in 1/rho power space.
struct NoiseSchedule {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    int steps = 40;
    double rho = 7.0;

    double sigma(int i) const;
    std::vector<double> grid() const;  // sigma(0) .. sigma(steps)
};

/// Denoiser input/output/skip scalings at one noise level.
struct Precond {
    double c_skip = 1.0;
    double c_out = 0.0;
    double c_in = 1.0;
    double c_noise = 0.0;
};

Precond edm_precond(double sigma, double sigma_data);

/// Per-level loss weight (sigma^2 + sigma_data^2) / (sigma * sigma_data)^2.
double edm_loss_weight(double sigma, double sigma_data);

/// Log-normal noise level draw, exp(pmean + pstd * z).
double sample_sigma_lognormal(Rng& rng, double pmean = -1.2, double pstd = 1.2);

/// Fixed sinusoidal embedding with geometrically spaced frequencies.
VectorXd sin_embedding(double v, int dim);

/// Denoiser evaluated on a whole core sequence. Columns are sequence
/// positions, rows the vectorized core entries (standardized scale).
class DenoiserModel {
public:
    virtual ~DenoiserModel() = default;
    virtual MatrixXd denoise(const MatrixXd& x, double sigma,
                             const std::vector<double>& times) const = 0;

    /// Denoised value plus a pullback mapping d(loss)/d(output) to
    /// d(loss)/d(input) at the same evaluation point.
    struct Pullback {
        MatrixXd value;
        std::function<MatrixXd(const MatrixXd&)> vjp;
    };
    virtual Pullback denoise_pullback(const MatrixXd& x, double sigma,
                                      const std::vector<double>& times) const = 0;
};

struct DenoiserArch {
    int core_dim = 0;  // vectorized core length
    int hidden = 128;
};

/// Temporally augmented denoiser: a shared per-position residual MLP with two
/// width-3 convolutions across the sequence axis, conditioned on the noise
/// level and per-position timestamps through additive sinusoidal embeddings.
/// At sigma = 0 the preconditioning collapses to the identity and the network
/// is skipped.
class Denoiser : public DenoiserModel {
public:
    Denoiser() = default;
    Denoiser(const DenoiserArch& arch, double sigma_data, Rng& rng);

    const DenoiserArch& arch() const { return arch_; }
    double sigma_data() const { return sigma_data_; }
    const VectorXd& params() const { return theta_; }
    VectorXd& params() { return theta_; }
    static Eigen::Index num_params(const DenoiserArch& arch);

    MatrixXd denoise(const MatrixXd& x, double sigma,
                     const std::vector<double>& times) const override;
    Pullback denoise_pullback(const MatrixXd& x, double sigma,
                              const std::vector<double>& times) const override;

    struct Workspace {
        double sigma = 0.0;
        Precond pc;
        MatrixXd x, h0, h1, h2, h3, h4;  // pre-activation states
        VectorXd esig;
        MatrixXd etim;
    };
    const Workspace& forward(const MatrixXd& x, double sigma, const std::vector<double>& times,
                             Workspace& ws, MatrixXd& out) const;
    /// Accumulates parameter gradients and/or writes the input gradient.
    void backward(const Workspace& ws, const MatrixXd& grad_out, VectorXd* param_grad,
                  MatrixXd* input_grad) const;

private:
    DenoiserArch arch_;
    double sigma_data_ = 1.0;
    VectorXd theta_;
};

/// Weighted denoising score-matching loss evaluated at explicit noise levels
/// and unit-scale noise draws: mean over items of
/// weight(sigma_b) / M_b * ||D(clean_b + sigma_b n_b; sigma_b) - clean_b||_F^2.
double gpsd_loss(const Denoiser& den, const std::vector<CoreSequence>& clean,
                 const std::vector<double>& sigmas, const std::vector<CoreSequence>& noise);

struct GPSDConfig {
    int hidden = 128;
    double sigma_data = 1.0;
    double gamma = 50.0;
    NoiseKind noise = NoiseKind::gp;
    int steps = 3000;
    int batch = 16;
    int crop_len = 8;  // subsequence length drawn per item, >= 1
    double lr = 1e-3;
    double pmean = -1.2;
    double pstd = 1.2;
    double holdout_fraction = 0.1;
    int val_every = 100;
    double divergence_factor = 20.0;
    std::uint64_t seed = 1;
};

struct TrainedGPSD {
    Denoiser denoiser;
    GPSDConfig config;
    std::vector<double> train_loss;  // one entry per step
    std::vector<double> val_loss;    // fixed validation pairs, every val_every steps
};

/// Trains the denoiser on standardized core sequences with random subsequence
/// crops, log-normal noise levels and the configured noise source. Validation
/// noise pairs are frozen up front so the curve is comparable across steps.
TrainedGPSD train_gpsd(const std::vector<CoreSequence>& standardized, const GPSDConfig& cfg);

struct SampleConfig {
    NoiseSchedule schedule;
    NoiseKind noise = NoiseKind::gp;
    double gamma = 50.0;
    std::uint64_t seed = 7;
};

/// Second-order (Heun) probability-flow integration from sigma_max down to 0,
/// initialized with a correlated noise draw over the requested timestamps.
CoreSequence unconditional_sample(const DenoiserModel& den, const std::vector<double>& times,
                                  const std::vector<int>& ranks, const SampleConfig& cfg);

}  // namespace ftdiff
