// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ftdiff/common.hpp"
#include "ftdiff/tensor.hpp"

namespace ftdiff {

/// One scattered observation of a spatiotemporal field.
struct Observation {
    std::vector<double> coords;  // one coordinate per tensor mode, in [0,1]
    double time = 0.0;
    double value = 0.0;
};

/// A set of off-grid observations grouped by timestamp. Timestamps are
/// strictly increasing; rows[m] holds the observations at times[m].
struct ObservationSet {
    std::vector<double> times;
    std::vector<std::vector<Observation>> rows;

    int num_steps() const { return static_cast<int>(times.size()); }
    std::size_t total_count() const;
    void validate(int num_modes) const;
};

/// A core tensor per timestamp, all sharing one rank tuple.
struct CoreSequence {
    std::vector<double> times;
    std::vector<CoreTensor> cores;

    int num_steps() const { return static_cast<int>(times.size()); }
    void validate() const;

    /// Stacks cores into an M x P matrix (one vectorized core per row).
    MatrixXd stacked() const;
    static CoreSequence from_stacked(const std::vector<double>& times,
                                     const std::vector<int>& ranks, const MatrixXd& stacked);
};

/// Scalar affine standardization applied elementwise to core entries.
/// encode: w -> (w - mean) / std, decode: z -> z * std + mean.
struct CoreAffine {
    double mean = 0.0;
    double std = 1.0;

    double encode(double w) const { return (w - mean) / std; }
    double decode(double z) const { return z * std + mean; }
    CoreSequence encode(const CoreSequence& seq) const;
    CoreSequence decode(const CoreSequence& seq) const;
};

}  // namespace ftdiff
