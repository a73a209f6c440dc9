// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ftdiff/gpsd.hpp"
#include "ftdiff/tensor.hpp"

namespace ftdiff::support {

/// Elementwise Gaussian prior N(mu, s0^2): the posterior mean under noise
/// level sigma has a closed form, handy as a ground-truth denoiser.
class GaussianPriorDenoiser : public DenoiserModel {
public:
    GaussianPriorDenoiser(double mu, double s0) : mu_(mu), s0_(s0) {}
    MatrixXd denoise(const MatrixXd& x, double sigma,
                     const std::vector<double>&) const override {
        const double s2 = s0_ * s0_;
        return (s2 * x.array() + sigma * sigma * mu_) / (s2 + sigma * sigma);
    }
    Pullback denoise_pullback(const MatrixXd& x, double sigma,
                              const std::vector<double>& t) const override {
        Pullback pb;
        pb.value = denoise(x, sigma, t);
        const double f = s0_ * s0_ / (s0_ * s0_ + sigma * sigma);
        pb.vjp = [f](const MatrixXd& g) { return (f * g).eval(); };
        return pb;
    }

private:
    double mu_, s0_;
};

inline ModeFunctionArch tiny_mode_arch(int width = 8, int hidden_layers = 2) {
    ModeFunctionArch a;
    a.hidden_layers = hidden_layers;
    a.width = width;
    return a;
}

}  // namespace ftdiff::support
