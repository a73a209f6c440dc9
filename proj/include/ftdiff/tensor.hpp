// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ftdiff/common.hpp"

namespace ftdiff {

/// K-mode core tensor stored vectorized. Flattening contract: mode-1 index is
/// slowest-varying, i.e. flat = ((r1*R2 + r2)*R3 + ...) + rK.
struct CoreTensor {
    VectorXd data;
    std::vector<int> ranks;

    CoreTensor() = default;
    CoreTensor(VectorXd d, std::vector<int> r);

    static CoreTensor zeros(const std::vector<int>& ranks);

    Eigen::Index size() const { return data.size(); }
    int num_modes() const { return static_cast<int>(ranks.size()); }
    Eigen::Index flat_index(const std::vector<int>& multi_index) const;
    void validate() const;
};

/// One spatiotemporal evaluation point: K spatial coordinates in [0,1] plus a
/// time stamp.
struct CoordinateTuple {
    std::vector<double> spatial;
    double time = 0.0;
};

/// Architecture of a per-mode coordinate function: an MLP with sine
/// activations. The input coordinate is mapped from [0,1] to [-1,1] before the
/// first layer; the first layer applies sin(omega0 * z).
struct ModeFunctionArch {
    int hidden_layers = 3;
    int width = 128;
    int output_dim = 4;
    double first_omega = 15.0;
};

/// Trainable map f_k: R -> R^{R_k}, parameters held in one flat vector so
/// optimizer steps and checkpoints operate on a single array.
class ModeFunction {
public:
    ModeFunction() = default;
    ModeFunction(const ModeFunctionArch& arch, Rng& rng);

    const ModeFunctionArch& arch() const { return arch_; }
    int output_dim() const { return arch_.output_dim; }

    const VectorXd& params() const { return theta_; }
    VectorXd& params() { return theta_; }

    /// Evaluate at a batch of scalar coordinates; row n is f(x[n]).
    MatrixXd forward(const VectorXd& inputs) const;

    /// Forward pass retaining activations for backward().
    struct Workspace {
        VectorXd inputs;
        std::vector<MatrixXd> pre;   // pre-activation per layer, N x width
        std::vector<MatrixXd> post;  // post-activation per layer, N x width
        MatrixXd output;             // N x output_dim
    };
    const MatrixXd& forward(const VectorXd& inputs, Workspace& ws) const;

    /// Accumulate d(loss)/d(theta) into grad given d(loss)/d(output).
    void backward(const Workspace& ws, const MatrixXd& grad_output, VectorXd& grad) const;

    Eigen::Index num_params() const { return theta_.size(); }
    static Eigen::Index num_params(const ModeFunctionArch& arch);

private:
    // Layout: [W0(width x 1), b0(width), {Wl(width x width), bl(width)} x (hidden_layers-1),
    //          Wout(output_dim x width), bout(output_dim)]
    ModeFunctionArch arch_;
    VectorXd theta_;

    friend class LatentFunctionSet;
};

/// The K shared coordinate functions of a functional Tucker model.
class LatentFunctionSet {
public:
    LatentFunctionSet() = default;
    LatentFunctionSet(std::vector<ModeFunctionArch> archs, Rng& rng);

    int num_modes() const { return static_cast<int>(modes_.size()); }
    std::vector<int> ranks() const;
    Eigen::Index feature_dim() const;

    const ModeFunction& mode(int k) const { return modes_.at(k); }
    ModeFunction& mode(int k) { return modes_.at(k); }

    /// Per-mode feature vectors at one coordinate tuple.
    std::vector<VectorXd> mode_features(const CoordinateTuple& coord) const;

    /// Concatenated flat parameter vector over all modes (copy in/out).
    VectorXd gather_params() const;
    void scatter_params(const VectorXd& flat);

private:
    std::vector<ModeFunction> modes_;
};

/// Kronecker-product feature vector of length prod_k R_k; ordering matches the
/// CoreTensor flattening contract (mode-1 outermost).
VectorXd kron_feature(const LatentFunctionSet& latents, const CoordinateTuple& coord);

/// Kronecker product of explicit per-mode feature vectors.
VectorXd kron_feature(const std::vector<VectorXd>& mode_features);

/// vec(core)^T kron_feature(latents, coord).
double decode_entry(const CoreTensor& core, const LatentFunctionSet& latents,
                    const CoordinateTuple& coord);

/// Brute-force nested sum over all core indices; the oracle decode path.
double naive_tucker_eval(const CoreTensor& core, const std::vector<VectorXd>& mode_features);

/// N x prod(R_k) matrix whose row n is kron_feature(latents, coords[n]).
MatrixXd design_matrix(const LatentFunctionSet& latents, const std::vector<CoordinateTuple>& coords);

/// Contract a core against per-mode feature matrices U_k (n_k x R_k), giving
/// the dense field on the tensor grid, flattened with mode-1 slowest.
VectorXd decode_on_grid(const CoreTensor& core, const std::vector<MatrixXd>& mode_feature_matrices);

}  // namespace ftdiff
