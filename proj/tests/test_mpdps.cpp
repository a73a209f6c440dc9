// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ftdiff/mpdps.hpp"
#include "support.hpp"

using namespace ftdiff;
using support::GaussianPriorDenoiser;

namespace {

struct Problem {
    LatentFunctionSet latents;
    CoreAffine aff;
    std::vector<double> grid;
    ObservationSet obs;
    CoreSequence truth;  // raw-space cores behind the observations
};

/// Observations decoded from a smooth planted core path on a subset of the
/// grid frames; frames listed in `skip` get no observations.
Problem make_problem(std::uint64_t seed, int m_steps, int per_frame,
                     const std::vector<int>& skip = {}, double aff_mean = 0.0,
                     double aff_std = 1.0) {
    Rng rng(seed);
    ModeFunctionArch arch = support::tiny_mode_arch();
    arch.output_dim = 2;
    Problem pr{LatentFunctionSet({arch, arch}, rng), {aff_mean, aff_std}, {}, {}, {}};
    for (int m = 0; m < m_steps; ++m) pr.grid.push_back(m / std::max(1.0, m_steps - 1.0));

    pr.truth.times = pr.grid;
    for (int m = 0; m < m_steps; ++m) {
        CoreTensor c = CoreTensor::zeros({2, 2});
        const double phase = 2.0 * m / std::max(1.0, m_steps - 1.0);
        for (int i = 0; i < 4; ++i) c.data(i) = std::sin(phase + i) * 0.8;
        pr.truth.cores.push_back(c);
    }

    pr.obs.times = pr.grid;
    pr.obs.rows.resize(static_cast<std::size_t>(m_steps));
    for (int m = 0; m < m_steps; ++m) {
        if (std::find(skip.begin(), skip.end(), m) != skip.end()) continue;
        for (int i = 0; i < per_frame; ++i) {
            Observation ob;
            ob.coords = {rng.uniform(), rng.uniform()};
            ob.time = pr.grid[static_cast<std::size_t>(m)];
            ob.value = decode_entry(pr.truth.cores[static_cast<std::size_t>(m)], pr.latents,
                                    {ob.coords, ob.time});
            pr.obs.rows[static_cast<std::size_t>(m)].push_back(ob);
        }
    }
    return pr;
}

GuidanceConfig test_gcfg() {
    GuidanceConfig g;
    g.epsilon = 0.5;
    g.zeta = 1e-2;
    return g;
}

}  // namespace

TEST_CASE("operands carry standardized operators and regression weights") {
    Problem pr = make_problem(1, 4, 6, {2}, 0.3, 2.0);
    GuidanceConfig gcfg = test_gcfg();
    GuidanceOperands ops =
        build_guidance_operands(pr.latents, pr.aff, pr.obs, pr.grid, {2, 2}, gcfg);

    REQUIRE(ops.frames.size() == 3);  // frame 2 has no observations
    for (const auto& fo : ops.frames) CHECK(fo.frame != 2);

    const FrameOperands& f0 = ops.frames[0];
    std::vector<CoordinateTuple> coords;
    for (const auto& ob : pr.obs.rows[0]) coords.push_back({ob.coords, ob.time});
    const MatrixXd a_raw = design_matrix(pr.latents, coords);
    CHECK((f0.a - pr.aff.std * a_raw).lpNorm<Eigen::Infinity>() <= 1e-14);
    for (std::size_t i = 0; i < pr.obs.rows[0].size(); ++i) {
        const double want = pr.obs.rows[0][i].value - pr.aff.mean * a_raw.row(i).sum();
        CHECK(f0.y(static_cast<Eigen::Index>(i)) == doctest::Approx(want).epsilon(1e-12));
    }

    std::vector<double> rest = {pr.grid[1], pr.grid[2], pr.grid[3]};
    GPRConditional cond = gpr_conditional(pr.grid[0], rest, gcfg.gamma, gcfg.jitter);
    CHECK((f0.gpr_weights - cond.weights).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(f0.gpr_variance == doctest::Approx(cond.variance).epsilon(1e-12));

    // The factor must reproduce eps^2 I + var A A^T.
    MatrixXd sig = f0.gpr_variance * (f0.a * f0.a.transpose());
    sig.diagonal().array() += gcfg.epsilon * gcfg.epsilon;
    VectorXd probe = VectorXd::LinSpaced(sig.rows(), -1.0, 1.0);
    CHECK((sig * f0.sigma_llt.solve(probe) - probe).lpNorm<Eigen::Infinity>() <= 1e-10);

    ObservationSet off_grid = pr.obs;
    off_grid.times[0] += 0.123;
    CHECK_THROWS_AS(
        build_guidance_operands(pr.latents, pr.aff, off_grid, pr.grid, {2, 2}, gcfg),
        ContractError);
}

TEST_CASE("direct guidance matches finite differences of its objective") {
    Problem pr = make_problem(2, 3, 5, {1});
    GuidanceConfig gcfg = test_gcfg();
    GuidanceOperands ops =
        build_guidance_operands(pr.latents, pr.aff, pr.obs, pr.grid, {2, 2}, gcfg);

    Rng rng(7);
    DenoiserArch darch;
    darch.core_dim = 4;
    darch.hidden = 8;
    Denoiser den(darch, 1.0, rng);
    den.params() = 0.25 * rng.normal_vector(den.params().size());

    MatrixXd x(4, 3);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const double sigma = 0.7;

    auto objective = [&](const MatrixXd& state) {
        double l = 0.0;
        for (const auto& fo : ops.frames) {
            const MatrixXd d = den.denoise(state.col(fo.frame),
                                           sigma, {pr.grid[static_cast<std::size_t>(fo.frame)]});
            const VectorXd r = fo.y - fo.a * d.col(0);
            l -= r.squaredNorm() / (gcfg.epsilon * gcfg.epsilon);
        }
        return l;
    };

    MatrixXd g = dps_guidance(den, ops, x, sigma);
    CHECK(g.col(1).lpNorm<Eigen::Infinity>() == 0.0);  // unobserved frame

    const double h = 1e-5;
    for (int i = 0; i < x.size(); ++i) {
        MatrixXd xp = x, xm = x;
        xp.data()[i] += h;
        xm.data()[i] -= h;
        const double fd = (objective(xp) - objective(xm)) / (2 * h);
        CHECK(g.data()[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }
}

TEST_CASE("message guidance matches finite differences and spares its source") {
    Problem pr = make_problem(3, 4, 6, {1, 3});
    GuidanceConfig gcfg = test_gcfg();
    GuidanceOperands ops =
        build_guidance_operands(pr.latents, pr.aff, pr.obs, pr.grid, {2, 2}, gcfg);
    REQUIRE(ops.frames.size() == 2);

    Rng rng(8);
    DenoiserArch darch;
    darch.core_dim = 4;
    darch.hidden = 8;
    Denoiser den(darch, 1.0, rng);
    den.params() = 0.25 * rng.normal_vector(den.params().size());

    MatrixXd x(4, 4);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const double sigma = 0.9;
    const int idx = 0;  // message from frame 0
    const FrameOperands& fo = ops.frames[static_cast<std::size_t>(idx)];

    MatrixXd sig_dense = fo.gpr_variance * (fo.a * fo.a.transpose());
    sig_dense.diagonal().array() += gcfg.epsilon * gcfg.epsilon;

    auto objective = [&](const MatrixXd& state) {
        std::vector<double> rest_times;
        MatrixXd x_res(state.rows(), state.cols() - 1);
        Eigen::Index c = 0;
        for (int j = 0; j < state.cols(); ++j) {
            if (j == fo.frame) continue;
            rest_times.push_back(pr.grid[static_cast<std::size_t>(j)]);
            x_res.col(c++) = state.col(j);
        }
        const MatrixXd t = den.denoise(x_res, sigma, rest_times);
        const VectorXd r = fo.y - fo.a * (t * fo.gpr_weights);
        return -0.5 * r.dot(sig_dense.fullPivLu().solve(r));
    };

    MatrixXd g = message_guidance(den, ops, idx, x, sigma);
    CHECK(g.col(fo.frame).lpNorm<Eigen::Infinity>() == 0.0);

    const double h = 1e-5;
    for (int i = 0; i < x.size(); ++i) {
        MatrixXd xp = x, xm = x;
        xp.data()[i] += h;
        xm.data()[i] -= h;
        const double fd = (objective(xp) - objective(xm)) / (2 * h);
        CHECK(g.data()[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }
}

TEST_CASE("aggregate guidance composes the two terms") {
    Problem pr = make_problem(4, 3, 5);
    GuidanceConfig gcfg = test_gcfg();
    GuidanceOperands ops =
        build_guidance_operands(pr.latents, pr.aff, pr.obs, pr.grid, {2, 2}, gcfg);

    GaussianPriorDenoiser den(0.0, 1.0);
    Rng rng(9);
    MatrixXd x(4, 3);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();

    MatrixXd direct = dps_guidance(den, ops, x, 0.5);
    MatrixXd full = aggregate_guidance(den, ops, x, 0.5);
    MatrixXd msgs = MatrixXd::Zero(4, 3);
    for (int i = 0; i < 3; ++i) msgs += message_guidance(den, ops, i, x, 0.5);
    CHECK((full - direct - msgs).lpNorm<Eigen::Infinity>() <= 1e-12);

    GuidanceOperands no_msgs = ops;
    no_msgs.cfg.messages = false;
    CHECK((aggregate_guidance(den, no_msgs, x, 0.5) - direct).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("frozen-Jacobian mode drops the network pullback") {
    Problem pr = make_problem(5, 3, 5);
    GuidanceConfig gcfg = test_gcfg();
    gcfg.exact_jacobian = false;
    GuidanceOperands ops =
        build_guidance_operands(pr.latents, pr.aff, pr.obs, pr.grid, {2, 2}, gcfg);

    // With a linear denoiser of slope f, exact guidance is f * frozen.
    const double s0 = 0.8, sigma = 0.6;
    GaussianPriorDenoiser den(0.0, s0);
    const double slope = s0 * s0 / (s0 * s0 + sigma * sigma);

    Rng rng(10);
    MatrixXd x(4, 3);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();

    MatrixXd frozen = dps_guidance(den, ops, x, sigma);
    GuidanceOperands exact = ops;
    exact.cfg.exact_jacobian = true;
    CHECK((dps_guidance(den, exact, x, sigma) - slope * frozen).lpNorm<Eigen::Infinity>() <=
          1e-10);

    MatrixXd frozen_msg = message_guidance(den, ops, 0, x, sigma);
    CHECK((message_guidance(den, exact, 0, x, sigma) - slope * frozen_msg)
              .lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("zero guidance scale reproduces the unconditional path bitwise") {
    Problem pr = make_problem(6, 4, 5);
    GuidanceConfig gcfg = test_gcfg();
    gcfg.zeta = 0.0;
    GuidanceOperands ops =
        build_guidance_operands(pr.latents, pr.aff, pr.obs, pr.grid, {2, 2}, gcfg);

    GaussianPriorDenoiser den(0.1, 0.9);
    SampleConfig scfg;
    scfg.schedule.steps = 10;
    scfg.seed = 77;

    CoreSequence guided = mpdps_sample(den, ops, {2, 2}, scfg);
    CoreSequence uncond = unconditional_sample(den, pr.grid, {2, 2}, scfg);
    CHECK((guided.stacked() - uncond.stacked()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("guidance pulls samples toward the observations") {
    Problem pr = make_problem(7, 4, 12);
    GuidanceConfig gcfg;
    gcfg.epsilon = 0.5;
    gcfg.zeta = 5e-3;
    GuidanceOperands ops =
        build_guidance_operands(pr.latents, pr.aff, pr.obs, pr.grid, {2, 2}, gcfg);

    GaussianPriorDenoiser den(0.0, 1.0);
    SampleConfig scfg;
    scfg.seed = 5;

    auto obs_residual = [&](const CoreSequence& z) {
        double sse = 0.0;
        for (const auto& fo : ops.frames)
            sse += (fo.y - fo.a * z.cores[static_cast<std::size_t>(fo.frame)].data).squaredNorm();
        return std::sqrt(sse);
    };

    CoreSequence uncond = unconditional_sample(den, pr.grid, {2, 2}, scfg);
    CoreSequence guided = mpdps_sample(den, ops, {2, 2}, scfg);
    CHECK(obs_residual(guided) < 0.5 * obs_residual(uncond));
}

TEST_CASE("reconstruction modes wire through the trained pieces") {
    Problem pr = make_problem(8, 4, 10);
    TrainedFTM ftm;
    ftm.latents = pr.latents;
    ftm.standardize = pr.aff;
    ftm.config.ranks = {2, 2};

    GaussianPriorDenoiser den(0.0, 1.0);
    SampleConfig scfg;
    scfg.schedule.steps = 10;
    scfg.seed = 3;
    GuidanceConfig gcfg = test_gcfg();

    CoreSequence none = reconstruct_cores(ftm, den, pr.obs, pr.grid, GuidanceMode::none, gcfg, scfg);
    CoreSequence uncond = unconditional_sample(den, pr.grid, {2, 2}, scfg);
    CHECK((none.stacked() - uncond.stacked()).lpNorm<Eigen::Infinity>() == 0.0);

    CoreSequence dps = reconstruct_cores(ftm, den, pr.obs, pr.grid, GuidanceMode::dps, gcfg, scfg);
    CoreSequence mp = reconstruct_cores(ftm, den, pr.obs, pr.grid, GuidanceMode::mpdps, gcfg, scfg);
    CHECK((dps.stacked() - mp.stacked()).lpNorm<Eigen::Infinity>() > 0.0);
    CHECK(std::isfinite(mp.stacked().sum()));
}

TEST_CASE("stable guidance scale bounds the quadratic-model update") {
    Problem pr = make_problem(9, 5, 8);
    const GuidanceConfig gcfg = test_gcfg();
    const GuidanceOperands ops =
        build_guidance_operands(pr.latents, pr.aff, pr.obs, pr.grid, {2, 2}, gcfg);

    const double damping = 0.7;
    const double z_dps = stable_guidance_scale(ops, GuidanceMode::dps, damping);
    const double z_mp = stable_guidance_scale(ops, GuidanceMode::mpdps, damping);
    CHECK(z_dps > 0.0);
    CHECK(z_mp > 0.0);

    SUBCASE("deterministic") {
        CHECK(stable_guidance_scale(ops, GuidanceMode::mpdps, damping) == z_mp);
    }

    SUBCASE("messages add a positive semidefinite term, so the step shrinks") {
        CHECK(z_mp <= z_dps);
    }

    SUBCASE("direct-only scale matches the per-frame eigenvalue bound") {
        const double eps2 = gcfg.epsilon * gcfg.epsilon;
        double lam = 0.0;
        for (const auto& fr : ops.frames) {
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(fr.a.transpose() * fr.a);
            lam = std::max(lam, es.eigenvalues().maxCoeff());
        }
        CHECK(z_dps == doctest::Approx(damping * eps2 / (2.0 * lam)).epsilon(1e-6));
    }

    SUBCASE("stiffer observations mean a smaller step") {
        GuidanceConfig tight = gcfg;
        tight.epsilon = 0.05;
        const GuidanceOperands ops_tight =
            build_guidance_operands(pr.latents, pr.aff, pr.obs, pr.grid, {2, 2}, tight);
        CHECK(stable_guidance_scale(ops_tight, GuidanceMode::dps, damping) < z_dps);
    }

    SUBCASE("nothing to guide") {
        CHECK(stable_guidance_scale(ops, GuidanceMode::none, damping) == 0.0);
        const ObservationSet empty{pr.grid, std::vector<std::vector<Observation>>(
                                                pr.grid.size())};
        const GuidanceOperands no_frames =
            build_guidance_operands(pr.latents, pr.aff, empty, pr.grid, {2, 2}, gcfg);
        CHECK(stable_guidance_scale(no_frames, GuidanceMode::mpdps, damping) == 0.0);
    }
}
