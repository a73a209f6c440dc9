// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "ftdiff/eval.hpp"
#include "ftdiff/synthetic.hpp"
#include "support.hpp"

using namespace ftdiff;

namespace {

SyntheticField known_pulse() {
    SyntheticField f;
    f.kind = FieldKind::traveling_pulse;
    f.num_modes = 2;
    f.params = {0.15, 1.0, 0.1, 0.12, 0.3, 0.25, 0.4, 0.5};
    return f;
}

}  // namespace

TEST_CASE("traveling pulse matches frozen values") {
    const SyntheticField f = known_pulse();
    CHECK(f.value({0.5, 0.5}, 0.5) == doctest::Approx(1.15).epsilon(1e-12));
    CHECK(f.value({0.2, 0.7}, 0.25) == doctest::Approx(0.07478561442986434).epsilon(1e-12));
}

TEST_CASE("traveling pulse with zero velocity is static") {
    SyntheticField f = known_pulse();
    f.params[6] = 0.0;
    f.params[7] = 0.0;
    for (double t : {0.0, 0.3, 1.0}) {
        CHECK(f.value({0.37, 0.81}, t) == f.value({0.37, 0.81}, 0.0));
    }
}

TEST_CASE("separable field matches frozen value and term count") {
    SyntheticField f;
    f.kind = FieldKind::separable_lowrank;
    f.num_modes = 2;
    f.params = {1.0, 0.9, 0.8, 0.3, 1.5, 0.2, 2.0, 1.1};
    CHECK(f.value({0.3, 0.6}, 0.7) == doctest::Approx(0.6921915406146663).epsilon(1e-12));

    Rng rng(7);
    const SyntheticField sampled = SyntheticField::sample(FieldKind::separable_lowrank, 2, rng);
    CHECK(sampled.params.at(0) == doctest::Approx(2.0));
    const SyntheticField six = SyntheticField::separable(6, 3, rng);
    CHECK(six.params.size() == 1 + 6 * (3 + 2 * 3));
    CHECK(std::isfinite(six.value({0.1, 0.5, 0.9}, 0.2)));
}

TEST_CASE("advecting mixture sums three pulses with mixed signs") {
    Rng rng(11);
    const SyntheticField f = SyntheticField::sample(FieldKind::advecting_mixture, 2, rng);
    CHECK(f.params.size() == 3 * 7);
    CHECK(f.params[0] > 0.0);
    CHECK(f.params[7] < 0.0);
    CHECK(f.params[14] > 0.0);
    CHECK(std::isfinite(f.value({0.4, 0.6}, 0.9)));
}

TEST_CASE("lattice coords are cell centers") {
    const auto axis = lattice_coords(4);
    REQUIRE(axis.size() == 4);
    CHECK(axis[0] == doctest::Approx(0.125));
    CHECK(axis[3] == doctest::Approx(0.875));
}

TEST_CASE("field_on_lattice flattens with the first mode slowest") {
    const SyntheticField f = known_pulse();
    const int grid = 3;
    const auto axis = lattice_coords(grid);
    const VectorXd flat = field_on_lattice(f, grid, 0.4);
    REQUIRE(flat.size() == 9);
    for (int i1 = 0; i1 < grid; ++i1) {
        for (int i2 = 0; i2 < grid; ++i2) {
            const double direct = f.value({axis[static_cast<std::size_t>(i1)],
                                           axis[static_cast<std::size_t>(i2)]},
                                          0.4);
            CHECK(flat(i1 * grid + i2) == doctest::Approx(direct).epsilon(1e-14));
        }
    }
}

TEST_CASE("population std matches a direct two-pass computation") {
    const SyntheticField f = known_pulse();
    const std::vector<double> times{0.0, 0.5, 1.0};
    const int grid = 6;
    std::vector<double> all;
    for (double t : times) {
        const VectorXd frame = field_on_lattice(f, grid, t);
        for (Eigen::Index i = 0; i < frame.size(); ++i) all.push_back(frame(i));
    }
    double mean = 0.0;
    for (double v : all) mean += v;
    mean /= static_cast<double>(all.size());
    double var = 0.0;
    for (double v : all) var += (v - mean) * (v - mean);
    var /= static_cast<double>(all.size());
    CHECK(field_population_std(f, grid, times) == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
}

TEST_CASE("mask draws fresh lattice subsets per frame") {
    const SyntheticField f = known_pulse();
    const std::vector<double> times{0.0, 0.25, 0.5, 0.75, 1.0};
    const int grid = 8;
    Rng rng(3);
    const ObservationSet obs = mask_observations(f, times, grid, 0.3, false, rng);
    obs.validate(2);
    REQUIRE(obs.rows.size() == 5);
    const auto want = static_cast<std::size_t>(std::ceil(0.3 * 64));
    const auto axis = lattice_coords(grid);
    std::vector<std::set<std::pair<int, int>>> frames;
    for (const auto& row : obs.rows) {
        CHECK(row.size() == want);
        std::set<std::pair<int, int>> pts;
        for (const auto& ob : row) {
            int idx[2];
            for (int k = 0; k < 2; ++k) {
                const double pos = ob.coords[static_cast<std::size_t>(k)] * grid - 0.5;
                idx[k] = static_cast<int>(std::lround(pos));
                CHECK(std::abs(pos - idx[k]) < 1e-12);
            }
            pts.emplace(idx[0], idx[1]);
            CHECK(ob.value ==
                  doctest::Approx(f.value(ob.coords, ob.time)).epsilon(1e-14));
        }
        CHECK(pts.size() == want);
        frames.push_back(std::move(pts));
    }
    CHECK(frames[0] != frames[1]);

    Rng rng2(3);
    const ObservationSet again = mask_observations(f, times, grid, 0.3, false, rng2);
    CHECK(again.rows[2][5].value == obs.rows[2][5].value);
    CHECK(again.rows[2][5].coords == obs.rows[2][5].coords);

    Rng rng3(3);
    const ObservationSet dropped = mask_observations(f, times, grid, 0.3, true, rng3);
    CHECK(dropped.rows[0].size() == want);
    CHECK(dropped.rows[1].empty());
    CHECK(dropped.rows[2].size() == want);
    CHECK(dropped.rows[3].empty());
}

TEST_CASE("noise models have the requested scale and shape") {
    const SyntheticField f = known_pulse();
    std::vector<double> times(40);
    for (std::size_t m = 0; m < times.size(); ++m) {
        times[m] = static_cast<double>(m) / (times.size() - 1);
    }
    Rng mask_rng(5);
    const ObservationSet clean = mask_observations(f, times, 12, 0.5, false, mask_rng);

    auto deltas = [&](NoiseModel model, double std_abs, std::uint64_t seed) {
        ObservationSet noisy = clean;
        Rng rng(seed);
        add_observation_noise(noisy, model, std_abs, rng);
        std::vector<double> d;
        for (std::size_t m = 0; m < noisy.rows.size(); ++m) {
            for (std::size_t i = 0; i < noisy.rows[m].size(); ++i) {
                d.push_back(noisy.rows[m][i].value - clean.rows[m][i].value);
            }
        }
        return d;
    };
    auto moments = [](const std::vector<double>& d) {
        double mean = 0.0;
        for (double v : d) mean += v;
        mean /= static_cast<double>(d.size());
        double var = 0.0, fourth = 0.0;
        for (double v : d) {
            const double c = v - mean;
            var += c * c;
            fourth += c * c * c * c;
        }
        var /= static_cast<double>(d.size());
        fourth /= static_cast<double>(d.size());
        return std::tuple{mean, std::sqrt(var), fourth / (var * var) - 3.0};
    };

    ObservationSet untouched = clean;
    Rng zero_rng(9);
    add_observation_noise(untouched, NoiseModel::gaussian, 0.0, zero_rng);
    CHECK(untouched.rows[3][4].value == clean.rows[3][4].value);

    const auto dg = deltas(NoiseModel::gaussian, 0.2, 21);
    auto [gm, gs, gk] = moments(dg);
    CHECK(std::abs(gm) < 0.01);
    CHECK(gs == doctest::Approx(0.2).epsilon(0.05));
    CHECK(std::abs(gk) < 0.5);

    const auto dl = deltas(NoiseModel::laplace, 0.2, 22);
    auto [lm, ls, lk] = moments(dl);
    CHECK(std::abs(lm) < 0.01);
    CHECK(ls == doctest::Approx(0.2).epsilon(0.08));
    CHECK(lk > 1.5);

    const auto dp = deltas(NoiseModel::poisson, 0.2, 23);
    auto [pm, ps, pk] = moments(dp);
    (void)pk;
    CHECK(std::abs(pm) < 0.01);
    CHECK(ps == doctest::Approx(0.2).epsilon(0.08));
    for (double v : dp) {
        const double steps = v / 0.2;
        CHECK(std::abs(steps - std::lround(steps)) < 1e-9);
        CHECK(steps > -1.5);
    }
}

TEST_CASE("dataset generation is deterministic and scales noise per record") {
    DatasetConfig cfg;
    cfg.grid = 10;
    cfg.frames = 6;
    cfg.records = 3;
    cfg.keep = 0.2;
    cfg.seed = 17;
    const Dataset ds = generate_dataset(cfg);
    REQUIRE(ds.records.size() == 3);
    REQUIRE(ds.times.size() == 6);
    CHECK(ds.times.front() == doctest::Approx(0.0));
    CHECK(ds.times.back() == doctest::Approx(1.0));
    const auto want = static_cast<std::size_t>(std::ceil(0.2 * 100));
    for (const auto& rec : ds.records) {
        for (const auto& row : rec.obs.rows) CHECK(row.size() == want);
        CHECK(rec.field_std > 0.0);
    }
    CHECK(ds.records[0].field.params != ds.records[1].field.params);

    const Dataset again = generate_dataset(cfg);
    CHECK(again.records[1].obs.rows[2][3].value == ds.records[1].obs.rows[2][3].value);

    DatasetConfig noisy_cfg = cfg;
    noisy_cfg.noise_std = 0.1;
    const Dataset noisy = generate_dataset(noisy_cfg);
    double dev = 0.0;
    std::size_t n = 0;
    for (std::size_t m = 0; m < noisy.records[0].obs.rows.size(); ++m) {
        for (std::size_t i = 0; i < noisy.records[0].obs.rows[m].size(); ++i) {
            const double d = noisy.records[0].obs.rows[m][i].value -
                             ds.records[0].obs.rows[m][i].value;
            dev += d * d;
            ++n;
        }
    }
    const double got = std::sqrt(dev / static_cast<double>(n));
    CHECK(got == doctest::Approx(0.1 * ds.records[0].field_std).epsilon(0.25));

    DatasetConfig dropped_cfg = cfg;
    dropped_cfg.drop_odd_frames = true;
    const Dataset dropped = generate_dataset(dropped_cfg);
    CHECK(dropped.records[0].obs.rows[1].empty());
    CHECK(dropped.records[0].obs.rows[2].size() == want);
}

TEST_CASE("reconstruction metrics match a nested-loop oracle") {
    Rng rng(31);
    auto arch = support::tiny_mode_arch();
    arch.output_dim = 2;
    const LatentFunctionSet latents({arch, arch}, rng);
    const SyntheticField f = known_pulse();

    CoreSequence cores;
    cores.times = {0.0, 0.5, 1.0};
    for (int m = 0; m < 3; ++m) {
        CoreTensor core = CoreTensor::zeros({2, 2});
        for (Eigen::Index i = 0; i < core.size(); ++i) {
            core.data(i) = 0.3 * std::sin(1.0 + m + static_cast<double>(i));
        }
        cores.cores.push_back(core);
    }

    const int grid = 5;
    const ReconstructionEval ev = evaluate_reconstruction(f, latents, cores, grid);
    REQUIRE(ev.frame_rmse.size() == 3);

    const auto axis = lattice_coords(grid);
    double err_sq = 0.0, sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    std::vector<double> frame_rmse;
    for (std::size_t m = 0; m < cores.times.size(); ++m) {
        double frame_err = 0.0;
        for (int i1 = 0; i1 < grid; ++i1) {
            for (int i2 = 0; i2 < grid; ++i2) {
                const std::vector<double> x{axis[static_cast<std::size_t>(i1)],
                                            axis[static_cast<std::size_t>(i2)]};
                const double recon =
                    decode_entry(cores.cores[m], latents, {x, cores.times[m]});
                const double truth = f.value(x, cores.times[m]);
                frame_err += (recon - truth) * (recon - truth);
                sum += truth;
                sum_sq += truth * truth;
                ++count;
            }
        }
        err_sq += frame_err;
        frame_rmse.push_back(std::sqrt(frame_err / (grid * grid)));
    }
    const double mean = sum / static_cast<double>(count);
    const double var = sum_sq / static_cast<double>(count) - mean * mean;
    const double rmse = std::sqrt(err_sq / static_cast<double>(count));
    CHECK(ev.rmse == doctest::Approx(rmse).epsilon(1e-10));
    CHECK(ev.vrmse == doctest::Approx(rmse / std::sqrt(var)).epsilon(1e-10));
    for (std::size_t m = 0; m < 3; ++m) {
        CHECK(ev.frame_rmse[m] == doctest::Approx(frame_rmse[m]).epsilon(1e-10));
    }
}

TEST_CASE("vrmse matches its defining examples") {
    VectorXd truth(2), pred(2);
    truth << 0.0, 2.0;
    pred << 1.0, 1.0;
    CHECK(vrmse(pred, truth) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(vrmse(truth, truth) == doctest::Approx(0.0));
    VectorXd mean_pred = VectorXd::Constant(2, 1.0);
    CHECK(vrmse(mean_pred, truth) == doctest::Approx(1.0).epsilon(1e-14));

    Rng rng(41);
    VectorXd t2(20), p2(20);
    for (Eigen::Index i = 0; i < 20; ++i) {
        t2(i) = rng.normal();
        p2(i) = rng.normal();
    }
    const double base = vrmse(p2, t2);
    const double a = -2.7, b = 0.9;
    const double scaled = vrmse((a * p2.array() + b).matrix(), (a * t2.array() + b).matrix());
    CHECK(scaled == doctest::Approx(base).epsilon(1e-12));

    VectorXd flat = VectorXd::Constant(4, 3.0);
    CHECK_THROWS_AS(vrmse(flat, flat), ContractError);
    VectorXd one(1);
    one << 1.0;
    CHECK_THROWS_AS(vrmse(one, one), ContractError);
}

TEST_CASE("adjacent core distance averages consecutive Frobenius gaps") {
    CoreSequence cores;
    cores.times = {0.0, 0.5, 1.0};
    for (int m = 0; m < 3; ++m) {
        CoreTensor core = CoreTensor::zeros({2});
        core.data << 1.0 * m, 2.0 * m;
        cores.cores.push_back(core);
    }
    const double step = std::sqrt(1.0 + 4.0);
    CHECK(adjacent_core_distance(cores) == doctest::Approx(step).epsilon(1e-12));
}

TEST_CASE("bootstrap fraction reflects the sign of the mean") {
    std::vector<double> neg(50, -1.0);
    CHECK(bootstrap_fraction_negative(neg, 200, 1) == doctest::Approx(1.0));
    std::vector<double> pos(50, 2.0);
    CHECK(bootstrap_fraction_negative(pos, 200, 1) == doctest::Approx(0.0));

    Rng rng(13);
    std::vector<double> mixed;
    for (int i = 0; i < 100; ++i) mixed.push_back(-0.5 + rng.normal());
    const double frac = bootstrap_fraction_negative(mixed, 500, 2);
    CHECK(frac > 0.9);
    CHECK(bootstrap_fraction_negative(mixed, 500, 2) == doctest::Approx(frac));
}
