// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#include "ftdiff/gp.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

namespace ftdiff {

double rbf_kernel(double ti, double tj, double gamma) {
    require(gamma > 0.0, "kernel gamma must be positive");
    const double d = ti - tj;
    return std::exp(-gamma * d * d);
}

TimeNormalizer TimeNormalizer::fit(const std::vector<double>& times) {
    require(!times.empty(), "cannot normalize an empty time grid");
    const auto [lo_it, hi_it] = std::minmax_element(times.begin(), times.end());
    TimeNormalizer n;
    n.lo = *lo_it;
    const double span = *hi_it - *lo_it;
    n.scale = span > 0.0 ? 1.0 / span : 0.0;
    return n;
}

KernelMatrix build_kernel_matrix(const std::vector<double>& times, const RBFKernelConfig& cfg) {
    require(!times.empty(), "kernel matrix needs at least one timestamp");
    require(cfg.jitter >= 0.0, "kernel jitter must be nonnegative");
    const TimeNormalizer norm = TimeNormalizer::fit(times);
    const int m = static_cast<int>(times.size());
    KernelMatrix km;
    km.times = times;
    km.matrix.resize(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double v = rbf_kernel(norm(times[i]), norm(times[j]), cfg.gamma);
            km.matrix(i, j) = v;
            km.matrix(j, i) = v;
        }
        km.matrix(i, i) += cfg.jitter;
    }
    return km;
}

namespace {

Eigen::LLT<MatrixXd> cholesky_with_retry(MatrixXd k, double jitter) {
    double extra = jitter;
    for (int attempt = 0; attempt < 5; ++attempt) {
        Eigen::LLT<MatrixXd> llt(k);
        if (llt.info() == Eigen::Success) return llt;
        k.diagonal().array() += extra;
        extra *= 2.0;
    }
    throw NumericalError("kernel matrix is not positive definite");
}

}  // namespace

CoreSequence sample_gp_noise(const std::vector<double>& times, const std::vector<int>& core_ranks,
                             double gamma, double marginal_std, std::uint64_t seed, NoiseKind kind,
                             double jitter) {
    require(!times.empty(), "noise sample needs at least one timestamp");
    require(marginal_std >= 0.0, "marginal std must be nonnegative");
    for (std::size_t m = 1; m < times.size(); ++m)
        require(times[m] > times[m - 1], "timestamps must be strictly increasing");

    const int m = static_cast<int>(times.size());
    CoreTensor proto = CoreTensor::zeros(core_ranks);
    const Eigen::Index p = proto.size();

    Rng rng(seed);
    MatrixXd z(m, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (int i = 0; i < m; ++i) z(i, j) = rng.normal();

    MatrixXd stacked;
    if (kind == NoiseKind::iid || m == 1) {
        stacked = marginal_std * z;
    } else {
        RBFKernelConfig cfg;
        cfg.gamma = gamma;
        cfg.jitter = jitter;
        const KernelMatrix km = build_kernel_matrix(times, cfg);
        const Eigen::LLT<MatrixXd> llt = cholesky_with_retry(km.matrix, jitter);
        stacked = marginal_std * (MatrixXd(llt.matrixL()) * z);
    }
    return CoreSequence::from_stacked(times, core_ranks, stacked);
}

GPRConditional gpr_conditional(double target_time, const std::vector<double>& rest_times,
                               double gamma, double jitter) {
    require(!rest_times.empty(), "conditional needs at least one conditioning time");
    std::vector<double> all = rest_times;
    all.push_back(target_time);
    const TimeNormalizer norm = TimeNormalizer::fit(all);

    const int r = static_cast<int>(rest_times.size());
    MatrixXd k(r, r);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double v = rbf_kernel(norm(rest_times[i]), norm(rest_times[j]), gamma);
            k(i, j) = v;
            k(j, i) = v;
        }
        k(i, i) += jitter;
    }
    VectorXd kv(r);
    for (int i = 0; i < r; ++i) kv(i) = rbf_kernel(norm(target_time), norm(rest_times[i]), gamma);

    const Eigen::LLT<MatrixXd> llt = cholesky_with_retry(k, jitter);
    GPRConditional out;
    out.weights = llt.solve(kv);
    out.variance = std::max(0.0, 1.0 - kv.dot(out.weights));
    return out;
}

}  // namespace ftdiff
