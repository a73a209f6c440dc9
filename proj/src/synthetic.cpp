// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#include "ftdiff/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ftdiff {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

struct Pulse {
    double amp = 0.0;
    const double* width = nullptr;   // per mode
    const double* start = nullptr;   // per mode
    const double* velocity = nullptr;

    double eval(const std::vector<double>& coords, double t) const {
        double arg = 0.0;
        for (std::size_t k = 0; k < coords.size(); ++k) {
            const double c = start[k] + velocity[k] * t;
            const double d = coords[k] - c;
            arg += d * d / (2.0 * width[k] * width[k]);
        }
        return amp * std::exp(-arg);
    }
};

// Layout per pulse: amp, all widths, all starts, all velocities.
void sample_pulse(Rng& rng, int num_modes, double amp_lo, double amp_hi,
                  std::vector<double>& out) {
    out.push_back(uniform_in(rng, amp_lo, amp_hi));
    const std::size_t base = out.size();
    out.resize(base + 3 * static_cast<std::size_t>(num_modes));
    for (int k = 0; k < num_modes; ++k) {
        out[base + static_cast<std::size_t>(k)] = uniform_in(rng, 0.08, 0.15);
        const double start = uniform_in(rng, 0.15, 0.85);
        const double stop = uniform_in(rng, 0.15, 0.85);
        out[base + static_cast<std::size_t>(num_modes + k)] = start;
        out[base + static_cast<std::size_t>(2 * num_modes + k)] = stop - start;
    }
}

Pulse pulse_at(const std::vector<double>& params, std::size_t offset, int num_modes) {
    Pulse p;
    p.amp = params[offset];
    p.width = params.data() + offset + 1;
    p.start = params.data() + offset + 1 + num_modes;
    p.velocity = params.data() + offset + 1 + 2 * num_modes;
    return p;
}

constexpr std::size_t kPulseStride = 1;  // plus 3 per mode

std::size_t pulse_params(int num_modes) { return kPulseStride + 3 * static_cast<std::size_t>(num_modes); }

int poisson_unit(Rng& rng) {
    const double limit = std::exp(-1.0);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng.uniform();
    } while (p > limit);
    return k - 1;
}

}  // namespace

double SyntheticField::value(const std::vector<double>& coords, double t) const {
    require(static_cast<int>(coords.size()) == num_modes,
            "SyntheticField: coordinate count does not match the mode count");
    const int K = num_modes;
    switch (kind) {
        case FieldKind::traveling_pulse: {
            require(params.size() == 1 + pulse_params(K), "SyntheticField: bad parameter count");
            const Pulse p = pulse_at(params, 1, K);
            double background = params[0];
            for (int k = 0; k < K; ++k) background *= std::sin(kPi * coords[k]);
            return p.eval(coords, t) + background;
        }
        case FieldKind::separable_lowrank: {
            const auto terms = static_cast<std::size_t>(params.at(0));
            const std::size_t stride = 3 + 2 * static_cast<std::size_t>(K);
            require(params.size() == 1 + terms * stride, "SyntheticField: bad parameter count");
            double total = 0.0;
            for (std::size_t j = 0; j < terms; ++j) {
                const std::size_t o = 1 + j * stride;
                double term = params[o] * std::cos(kTwoPi * params[o + 1] * t + params[o + 2]);
                for (int k = 0; k < K; ++k) {
                    term *= std::sin(kPi * params[o + 3 + 2 * k] * coords[k] + params[o + 4 + 2 * k]);
                }
                total += term;
            }
            return total;
        }
        case FieldKind::advecting_mixture: {
            require(params.size() == 3 * pulse_params(K), "SyntheticField: bad parameter count");
            double total = 0.0;
            for (int j = 0; j < 3; ++j) total += pulse_at(params, j * pulse_params(K), K).eval(coords, t);
            return total;
        }
    }
    throw ContractError("SyntheticField: unknown kind");
}

SyntheticField SyntheticField::sample(FieldKind kind, int num_modes, Rng& rng) {
    require(num_modes >= 1, "SyntheticField: mode count must be positive");
    SyntheticField field;
    field.kind = kind;
    field.num_modes = num_modes;
    switch (kind) {
        case FieldKind::traveling_pulse: {
            field.params.push_back(uniform_in(rng, 0.10, 0.20));
            sample_pulse(rng, num_modes, 0.8, 1.2, field.params);
            break;
        }
        case FieldKind::separable_lowrank:
            return separable(2, num_modes, rng);
        case FieldKind::advecting_mixture: {
            sample_pulse(rng, num_modes, 0.7, 1.0, field.params);
            sample_pulse(rng, num_modes, -0.8, -0.5, field.params);
            sample_pulse(rng, num_modes, 0.4, 0.7, field.params);
            break;
        }
    }
    return field;
}

SyntheticField SyntheticField::separable(int terms, int num_modes, Rng& rng) {
    require(terms >= 1, "SyntheticField: term count must be positive");
    require(num_modes >= 1, "SyntheticField: mode count must be positive");
    SyntheticField field;
    field.kind = FieldKind::separable_lowrank;
    field.num_modes = num_modes;
    field.params.push_back(static_cast<double>(terms));
    for (int j = 0; j < terms; ++j) {
        field.params.push_back(uniform_in(rng, 0.5, 1.0) / (1.0 + j));
        field.params.push_back(uniform_in(rng, 0.4, 1.2));
        field.params.push_back(uniform_in(rng, 0.0, kTwoPi));
        for (int k = 0; k < num_modes; ++k) {
            field.params.push_back(uniform_in(rng, 0.5, 2.5));
            field.params.push_back(uniform_in(rng, 0.0, kTwoPi));
        }
    }
    return field;
}

std::vector<double> lattice_coords(int grid) {
    require(grid >= 1, "lattice_coords: grid must be positive");
    std::vector<double> coords(static_cast<std::size_t>(grid));
    for (int i = 0; i < grid; ++i) coords[static_cast<std::size_t>(i)] = (i + 0.5) / grid;
    return coords;
}

namespace {

std::vector<double> coords_of_flat(std::int64_t flat, int grid, int num_modes,
                                   const std::vector<double>& axis) {
    std::vector<double> coords(static_cast<std::size_t>(num_modes));
    for (int k = num_modes - 1; k >= 0; --k) {
        coords[static_cast<std::size_t>(k)] = axis[static_cast<std::size_t>(flat % grid)];
        flat /= grid;
    }
    return coords;
}

std::int64_t lattice_size(int grid, int num_modes) {
    std::int64_t n = 1;
    for (int k = 0; k < num_modes; ++k) n *= grid;
    return n;
}

}  // namespace

VectorXd field_on_lattice(const SyntheticField& field, int grid, double t) {
    const auto axis = lattice_coords(grid);
    const std::int64_t n = lattice_size(grid, field.num_modes);
    VectorXd out(n);
    for (std::int64_t i = 0; i < n; ++i) {
        out(i) = field.value(coords_of_flat(i, grid, field.num_modes, axis), t);
    }
    return out;
}

double field_population_std(const SyntheticField& field, int grid,
                            const std::vector<double>& times) {
    require(!times.empty(), "field_population_std: need at least one time");
    double sum = 0.0, sum_sq = 0.0;
    std::int64_t count = 0;
    for (double t : times) {
        const VectorXd frame = field_on_lattice(field, grid, t);
        sum += frame.sum();
        sum_sq += frame.squaredNorm();
        count += frame.size();
    }
    const double mean = sum / static_cast<double>(count);
    const double var = sum_sq / static_cast<double>(count) - mean * mean;
    return std::sqrt(std::max(var, 0.0));
}

ObservationSet mask_observations(const SyntheticField& field, const std::vector<double>& times,
                                 int grid, double rho, bool drop_odd_frames, Rng& rng) {
    require(grid >= 1, "mask_observations: grid must be positive");
    require(rho > 0.0 && rho <= 1.0, "mask_observations: keep fraction must lie in (0, 1]");
    const std::int64_t n = lattice_size(grid, field.num_modes);
    const auto n_keep = static_cast<std::int64_t>(std::ceil(rho * static_cast<double>(n)));
    const auto axis = lattice_coords(grid);

    ObservationSet obs;
    obs.times = times;
    obs.rows.resize(times.size());
    std::vector<std::int64_t> pool(static_cast<std::size_t>(n));
    for (std::size_t m = 0; m < times.size(); ++m) {
        if (drop_odd_frames && m % 2 == 1) continue;
        std::iota(pool.begin(), pool.end(), std::int64_t{0});
        std::vector<std::int64_t> chosen(static_cast<std::size_t>(n_keep));
        for (std::int64_t i = 0; i < n_keep; ++i) {
            const auto j = i + static_cast<std::int64_t>(rng.uniform() * static_cast<double>(n - i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(std::min(j, n - 1))]);
            chosen[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)];
        }
        std::sort(chosen.begin(), chosen.end());
        auto& row = obs.rows[m];
        row.reserve(chosen.size());
        for (std::int64_t flat : chosen) {
            Observation ob;
            ob.coords = coords_of_flat(flat, grid, field.num_modes, axis);
            ob.time = times[m];
            ob.value = field.value(ob.coords, times[m]);
            row.push_back(std::move(ob));
        }
    }
    return obs;
}

void add_observation_noise(ObservationSet& obs, NoiseModel model, double std_abs, Rng& rng) {
    require(std_abs >= 0.0, "add_observation_noise: noise std must be non-negative");
    if (std_abs == 0.0) return;
    for (auto& row : obs.rows) {
        for (auto& ob : row) {
            switch (model) {
                case NoiseModel::gaussian:
                    ob.value += std_abs * rng.normal();
                    break;
                case NoiseModel::laplace: {
                    const double u = rng.uniform() - 0.5;
                    const double mag = std::log(std::max(1.0 - 2.0 * std::abs(u), 1e-300));
                    ob.value += (u < 0.0 ? 1.0 : -1.0) * (std_abs / std::sqrt(2.0)) * mag;
                    break;
                }
                case NoiseModel::poisson:
                    ob.value += std_abs * static_cast<double>(poisson_unit(rng) - 1);
                    break;
            }
        }
    }
}

Dataset generate_dataset(const DatasetConfig& cfg) {
    require(cfg.num_modes >= 1, "generate_dataset: mode count must be positive");
    require(cfg.grid >= 2, "generate_dataset: grid must be at least 2");
    require(cfg.frames >= 2, "generate_dataset: need at least two frames");
    require(cfg.records >= 1, "generate_dataset: need at least one record");
    require(cfg.noise_std >= 0.0, "generate_dataset: noise std must be non-negative");

    Dataset ds;
    ds.config = cfg;
    ds.times.resize(static_cast<std::size_t>(cfg.frames));
    for (int m = 0; m < cfg.frames; ++m) {
        ds.times[static_cast<std::size_t>(m)] = static_cast<double>(m) / (cfg.frames - 1);
    }

    Rng root(cfg.seed);
    ds.records.reserve(static_cast<std::size_t>(cfg.records));
    for (int b = 0; b < cfg.records; ++b) {
        Rng field_rng = root.fork(3 * static_cast<std::uint64_t>(b));
        Rng mask_rng = root.fork(3 * static_cast<std::uint64_t>(b) + 1);
        Rng noise_rng = root.fork(3 * static_cast<std::uint64_t>(b) + 2);

        FieldRecord rec;
        rec.field = SyntheticField::sample(cfg.kind, cfg.num_modes, field_rng);
        rec.field_std = field_population_std(rec.field, cfg.grid, ds.times);
        rec.obs = mask_observations(rec.field, ds.times, cfg.grid, cfg.keep,
                                    cfg.drop_odd_frames, mask_rng);
        if (cfg.noise_std > 0.0) {
            add_observation_noise(rec.obs, cfg.noise_model, cfg.noise_std * rec.field_std, noise_rng);
        }
        rec.obs.validate(cfg.num_modes);
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

}  // namespace ftdiff
