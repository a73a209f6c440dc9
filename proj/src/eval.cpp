// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#include "ftdiff/eval.hpp"

#include <cmath>

namespace ftdiff {

double vrmse(const VectorXd& pred, const VectorXd& truth) {
    require(pred.size() == truth.size(), "vrmse: length mismatch");
    require(truth.size() >= 2, "vrmse: need at least two values");
    const double n = static_cast<double>(truth.size());
    const double mean = truth.mean();
    const double var = truth.squaredNorm() / n - mean * mean;
    require(var > 0.0, "vrmse: ground truth is constant");
    const double rmse = std::sqrt((pred - truth).squaredNorm() / n);
    return rmse / std::sqrt(var);
}

ReconstructionEval evaluate_reconstruction(const SyntheticField& field,
                                           const LatentFunctionSet& latents,
                                           const CoreSequence& raw_cores, int grid) {
    raw_cores.validate();
    require(!raw_cores.cores.empty(), "evaluate_reconstruction: empty core sequence");
    require(field.num_modes == latents.num_modes(),
            "evaluate_reconstruction: field and latent mode counts differ");

    const auto axis = lattice_coords(grid);
    VectorXd axis_vec = Eigen::Map<const VectorXd>(axis.data(), static_cast<Eigen::Index>(axis.size()));
    std::vector<MatrixXd> features;
    features.reserve(static_cast<std::size_t>(latents.num_modes()));
    for (int k = 0; k < latents.num_modes(); ++k) {
        features.push_back(latents.mode(k).forward(axis_vec));
    }

    ReconstructionEval ev;
    double err_sq = 0.0, truth_sum = 0.0, truth_sum_sq = 0.0;
    std::int64_t count = 0;
    for (std::size_t m = 0; m < raw_cores.cores.size(); ++m) {
        const VectorXd truth = field_on_lattice(field, grid, raw_cores.times[m]);
        const VectorXd recon = decode_on_grid(raw_cores.cores[m], features);
        require(truth.size() == recon.size(), "evaluate_reconstruction: lattice size mismatch");
        const double frame_err = (recon - truth).squaredNorm();
        const double n = static_cast<double>(truth.size());
        const double frame_mean = truth.mean();
        const double frame_var = std::max(truth.squaredNorm() / n - frame_mean * frame_mean, 0.0);
        ev.frame_rmse.push_back(std::sqrt(frame_err / n));
        ev.frame_vrmse.push_back(ev.frame_rmse.back() / std::sqrt(std::max(frame_var, 1e-300)));
        err_sq += frame_err;
        truth_sum += truth.sum();
        truth_sum_sq += truth.squaredNorm();
        count += truth.size();
    }
    const double total = static_cast<double>(count);
    const double mean = truth_sum / total;
    const double var = std::max(truth_sum_sq / total - mean * mean, 1e-300);
    ev.rmse = std::sqrt(err_sq / total);
    ev.vrmse = ev.rmse / std::sqrt(var);
    return ev;
}

double adjacent_core_distance(const CoreSequence& cores) {
    cores.validate();
    require(cores.cores.size() >= 2, "adjacent_core_distance: need at least two frames");
    double sum = 0.0;
    for (std::size_t m = 0; m + 1 < cores.cores.size(); ++m) {
        sum += (cores.cores[m + 1].data - cores.cores[m].data).norm();
    }
    return sum / static_cast<double>(cores.cores.size() - 1);
}

double bootstrap_fraction_negative(const std::vector<double>& values, int resamples,
                                   std::uint64_t seed) {
    require(!values.empty(), "bootstrap_fraction_negative: empty sample");
    require(resamples >= 1, "bootstrap_fraction_negative: resample count must be positive");
    Rng rng(seed);
    const auto n = values.size();
    int negative = 0;
    for (int r = 0; r < resamples; ++r) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
            sum += values[std::min(j, n - 1)];
        }
        if (sum < 0.0) ++negative;
    }
    return static_cast<double>(negative) / resamples;
}

}  // namespace ftdiff
