// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "ftdiff/gp.hpp"

using namespace ftdiff;

TEST_CASE("rbf kernel basics") {
    CHECK(rbf_kernel(0.3, 0.3, 5.0) == doctest::Approx(1.0));
    CHECK(rbf_kernel(0.0, 1.0, 2.0) == doctest::Approx(std::exp(-2.0)));
    CHECK(rbf_kernel(0.2, 0.7, 3.0) == doctest::Approx(rbf_kernel(0.7, 0.2, 3.0)));
    CHECK_THROWS_AS(rbf_kernel(0.0, 1.0, 0.0), ContractError);
}

TEST_CASE("kernel matrix is symmetric PSD with unit-ish diagonal") {
    RBFKernelConfig cfg;
    cfg.gamma = 50.0;
    std::vector<double> times;
    for (int i = 0; i < 12; ++i) times.push_back(i / 11.0);
    KernelMatrix km = build_kernel_matrix(times, cfg);
    CHECK((km.matrix - km.matrix.transpose()).lpNorm<Eigen::Infinity>() == doctest::Approx(0.0));
    for (int i = 0; i < 12; ++i) CHECK(km.matrix(i, i) == doctest::Approx(1.0 + cfg.jitter));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(km.matrix);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("kernel matrix is invariant to affine time rescaling") {
    RBFKernelConfig cfg;
    cfg.gamma = 20.0;
    std::vector<double> a = {0.0, 0.1, 0.35, 0.8, 1.0};
    std::vector<double> b;
    for (double t : a) b.push_back(100.0 + 7.0 * t);
    CHECK((build_kernel_matrix(a, cfg).matrix - build_kernel_matrix(b, cfg).matrix)
              .lpNorm<Eigen::Infinity>() == doctest::Approx(0.0));
}

TEST_CASE("gpr conditional matches a frozen dense solve") {
    // rest={0,0.5,1}, target=0.25, gamma=2: solved offline with an
    // independent dense linear solver.
    GPRConditional c = gpr_conditional(0.25, {0.0, 0.5, 1.0}, 2.0);
    REQUIRE(c.weights.size() == 3);
    CHECK(c.weights(0) == doctest::Approx(0.4935426596911658).epsilon(1e-9));
    CHECK(c.weights(1) == doctest::Approx(0.6751068404789251).epsilon(1e-9));
    CHECK(c.weights(2) == doctest::Approx(-0.15161426409635675).epsilon(1e-9));
    CHECK(c.variance == doctest::Approx(0.017892380818462006).epsilon(1e-9));
}

TEST_CASE("gpr conditional agrees with an independent inverse") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 3 + static_cast<int>(rng.integer(8));
        std::vector<double> rest;
        double t = 0.0;
        for (int i = 0; i < m; ++i) {
            t += 0.05 + rng.uniform();
            rest.push_back(t);
        }
        const double target = rest.front() + rng.uniform() * (rest.back() - rest.front());
        const double gamma = 5.0 + 60.0 * rng.uniform();

        GPRConditional c = gpr_conditional(target, rest, gamma);

        const double lo = std::min(target, rest.front());
        const double hi = std::max(target, rest.back());
        const double scale = 1.0 / (hi - lo);
        MatrixXd k(m, m);
        VectorXd kv(m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                const double d = (rest[i] - rest[j]) * scale;
                k(i, j) = std::exp(-gamma * d * d);
            }
            k(i, i) += 1e-8;
            const double d = (target - rest[i]) * scale;
            kv(i) = std::exp(-gamma * d * d);
        }
        VectorXd w = k.fullPivLu().solve(kv);
        CHECK((c.weights - w).lpNorm<Eigen::Infinity>() <= 1e-8);
        CHECK(c.variance == doctest::Approx(std::max(0.0, 1.0 - kv.dot(w))).epsilon(1e-8));
    }
}

TEST_CASE("conditioning on the target time itself is an interpolation") {
    GPRConditional c = gpr_conditional(0.5, {0.0, 0.5, 1.0}, 30.0);
    CHECK(c.weights(1) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(c.weights(0)) < 1e-5);
    CHECK(std::abs(c.weights(2)) < 1e-5);
    CHECK(c.variance == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
}

TEST_CASE("single conditioning point has the closed form") {
    const double gamma = 4.0;
    // Times {0.2, 0.9} normalize to {0, 1}.
    GPRConditional c = gpr_conditional(0.9, {0.2}, gamma);
    const double kappa = std::exp(-gamma);
    CHECK(c.weights(0) == doctest::Approx(kappa / (1.0 + 1e-8)).epsilon(1e-10));
    CHECK(c.variance == doctest::Approx(1.0 - kappa * kappa / (1.0 + 1e-8)).epsilon(1e-10));
}

TEST_CASE("gp noise is deterministic per seed and shaped by the ranks") {
    std::vector<double> times;
    for (int i = 0; i < 16; ++i) times.push_back(i / 15.0);
    CoreSequence a = sample_gp_noise(times, {3, 4}, 50.0, 1.0, 77);
    CoreSequence b = sample_gp_noise(times, {3, 4}, 50.0, 1.0, 77);
    CoreSequence c = sample_gp_noise(times, {3, 4}, 50.0, 1.0, 78);
    REQUIRE(a.num_steps() == 16);
    REQUIRE(a.cores[0].ranks == std::vector<int>{3, 4});
    CHECK((a.stacked() - b.stacked()).lpNorm<Eigen::Infinity>() == doctest::Approx(0.0));
    CHECK((a.stacked() - c.stacked()).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("gp noise correlates adjacent frames, iid noise does not") {
    std::vector<double> times;
    for (int i = 0; i < 16; ++i) times.push_back(i / 15.0);
    const std::vector<int> ranks = {8, 8};

    auto adjacent_corr = [&](NoiseKind kind) {
        double num = 0.0, den_a = 0.0, den_b = 0.0;
        for (std::uint64_t seed = 1; seed <= 8; ++seed) {
            MatrixXd s = sample_gp_noise(times, ranks, 50.0, 1.0, seed, kind).stacked();
            for (int m = 0; m + 1 < s.rows(); ++m) {
                num += s.row(m).dot(s.row(m + 1));
                den_a += s.row(m).squaredNorm();
                den_b += s.row(m + 1).squaredNorm();
            }
        }
        return num / std::sqrt(den_a * den_b);
    };

    const double corr_gp = adjacent_corr(NoiseKind::gp);
    const double corr_iid = adjacent_corr(NoiseKind::iid);
    // gamma=50 on a 16-step unit grid gives exp(-50/225) ~ 0.80 correlation.
    CHECK(corr_gp > 0.6);
    CHECK(std::abs(corr_iid) < 0.15);
}

TEST_CASE("gp noise marginal variance is near the requested scale") {
    std::vector<double> times;
    for (int i = 0; i < 12; ++i) times.push_back(i / 11.0);
    double ss = 0.0;
    int n = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        MatrixXd s = sample_gp_noise(times, {8, 8}, 50.0, 2.0, seed).stacked();
        ss += s.array().square().sum();
        n += static_cast<int>(s.size());
    }
    CHECK(std::sqrt(ss / n) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("single-step sequences fall back to iid draws") {
    CoreSequence a = sample_gp_noise({0.5}, {2, 2}, 50.0, 1.0, 5, NoiseKind::gp);
    CoreSequence b = sample_gp_noise({0.5}, {2, 2}, 50.0, 1.0, 5, NoiseKind::iid);
    CHECK((a.stacked() - b.stacked()).lpNorm<Eigen::Infinity>() == doctest::Approx(0.0));
}

TEST_CASE("contract violations raise") {
    CHECK_THROWS_AS(sample_gp_noise({}, {2}, 50.0, 1.0, 1), ContractError);
    CHECK_THROWS_AS(sample_gp_noise({0.2, 0.1}, {2}, 50.0, 1.0, 1), ContractError);
    CHECK_THROWS_AS(sample_gp_noise({0.1, 0.2}, {2}, 50.0, -1.0, 1), ContractError);
    CHECK_THROWS_AS(gpr_conditional(0.5, {}, 50.0), ContractError);
    CHECK_THROWS_AS(build_kernel_matrix({}, RBFKernelConfig{}), ContractError);
}
