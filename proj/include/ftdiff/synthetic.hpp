// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ftdiff/data.hpp"

namespace ftdiff {

enum class FieldKind { traveling_pulse, separable_lowrank, advecting_mixture };

/// Analytic scalar field on [0,1]^K x [0,1], described by a flat parameter
/// vector so records serialize as plain numbers.
struct SyntheticField {
    FieldKind kind = FieldKind::traveling_pulse;
    int num_modes = 2;
    std::vector<double> params;

    double value(const std::vector<double>& coords, double t) const;

    /// Randomized instance of the given kind.
    static SyntheticField sample(FieldKind kind, int num_modes, Rng& rng);
    /// Sum of `terms` separable products with decaying amplitudes; terms = 2
    /// reproduces the separable_lowrank kind.
    static SyntheticField separable(int terms, int num_modes, Rng& rng);
};

/// Cell-center lattice coordinates (i + 0.5) / grid.
std::vector<double> lattice_coords(int grid);

/// Field evaluated on the full lattice at one time, flattened with mode 1
/// slowest (matching the core decoding layout).
VectorXd field_on_lattice(const SyntheticField& field, int grid, double t);

/// Population standard deviation of the field over the lattice and times.
double field_population_std(const SyntheticField& field, int grid,
                            const std::vector<double>& times);

/// ceil(rho * grid^K) lattice points per frame, drawn uniformly without
/// replacement and freshly per frame. Frames whose (0-based) index is odd are
/// left empty when drop_odd_frames is set; their timestamps stay on the grid.
ObservationSet mask_observations(const SyntheticField& field, const std::vector<double>& times,
                                 int grid, double rho, bool drop_odd_frames, Rng& rng);

enum class NoiseModel { gaussian, laplace, poisson };

/// Adds centered noise with standard deviation `std_abs` to every observation
/// value: Gaussian, Laplace (scale std_abs/sqrt(2)) or centered unit-rate
/// Poisson scaled by std_abs.
void add_observation_noise(ObservationSet& obs, NoiseModel model, double std_abs, Rng& rng);

struct DatasetConfig {
    FieldKind kind = FieldKind::traveling_pulse;
    int num_modes = 2;
    int grid = 64;
    int frames = 16;
    int records = 200;
    double keep = 0.10;          // observed fraction of lattice points per frame
    double noise_std = 0.0;      // relative to the field population std
    NoiseModel noise_model = NoiseModel::gaussian;
    bool drop_odd_frames = false;
    std::uint64_t seed = 1;
};

struct FieldRecord {
    SyntheticField field;
    ObservationSet obs;
    double field_std = 1.0;  // population std used to scale the noise
};

struct Dataset {
    DatasetConfig config;
    std::vector<double> times;
    std::vector<FieldRecord> records;
};

/// Deterministic corpus of independent field records.
Dataset generate_dataset(const DatasetConfig& cfg);

}  // namespace ftdiff
