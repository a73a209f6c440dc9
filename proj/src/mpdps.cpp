// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#include "ftdiff/mpdps.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace ftdiff {

namespace {

double floored_eps2(double epsilon) { return std::max(epsilon * epsilon, 1e-8); }

int locate_time(const std::vector<double>& grid, double t) {
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (std::abs(grid[i] - t) <= 1e-12) return static_cast<int>(i);
    return -1;
}

}  // namespace

GuidanceOperands build_guidance_operands(const LatentFunctionSet& latents, const CoreAffine& aff,
                                         const ObservationSet& obs,
                                         const std::vector<double>& target_times,
                                         const std::vector<int>& ranks,
                                         const GuidanceConfig& cfg) {
    require(!target_times.empty(), "target grid is empty");
    for (std::size_t i = 1; i < target_times.size(); ++i)
        require(target_times[i] > target_times[i - 1], "target times must be strictly increasing");
    obs.validate(latents.num_modes());
    require(ranks == latents.ranks(), "rank tuple does not match the latent functions");
    require(cfg.epsilon >= 0.0 && cfg.zeta >= 0.0, "guidance scales must be nonnegative");
    require(aff.std > 0.0, "standardization std must be positive");

    GuidanceOperands ops;
    ops.times = target_times;
    ops.cfg = cfg;
    const int m_steps = static_cast<int>(target_times.size());

    for (int r = 0; r < obs.num_steps(); ++r) {
        const auto& row = obs.rows[static_cast<std::size_t>(r)];
        if (row.empty()) continue;
        const int frame = locate_time(target_times, obs.times[static_cast<std::size_t>(r)]);
        require(frame >= 0, "observation timestamp is not on the target grid");

        FrameOperands fo;
        fo.frame = frame;
        std::vector<CoordinateTuple> coords;
        coords.reserve(row.size());
        for (const auto& ob : row) coords.push_back({ob.coords, ob.time});
        const MatrixXd a_raw = design_matrix(latents, coords);

        // Standardized core space: y ~ A (std z + mean) = (std A) z + mean A 1.
        fo.a = aff.std * a_raw;
        fo.y.resize(a_raw.rows());
        const VectorXd shift = aff.mean * a_raw.rowwise().sum();
        for (std::size_t i = 0; i < row.size(); ++i)
            fo.y(static_cast<Eigen::Index>(i)) = row[i].value - shift(static_cast<Eigen::Index>(i));

        if (m_steps > 1) {
            std::vector<double> rest;
            rest.reserve(static_cast<std::size_t>(m_steps) - 1);
            for (int j = 0; j < m_steps; ++j)
                if (j != frame) rest.push_back(target_times[static_cast<std::size_t>(j)]);
            const GPRConditional cond = gpr_conditional(
                target_times[static_cast<std::size_t>(frame)], rest, cfg.gamma, cfg.jitter);
            fo.gpr_weights = cond.weights;
            fo.gpr_variance = cond.variance;

            MatrixXd sig = fo.gpr_variance * (fo.a * fo.a.transpose());
            sig.diagonal().array() += floored_eps2(cfg.epsilon);
            fo.sigma_llt.compute(sig);
            if (fo.sigma_llt.info() != Eigen::Success)
                throw NumericalError("message covariance is not positive definite");
        }
        ops.frames.push_back(std::move(fo));
    }
    std::sort(ops.frames.begin(), ops.frames.end(),
              [](const FrameOperands& a, const FrameOperands& b) { return a.frame < b.frame; });
    return ops;
}

MatrixXd dps_guidance(const DenoiserModel& den, const GuidanceOperands& ops, const MatrixXd& x,
                      double sigma) {
    require(x.cols() == ops.num_steps(), "state width does not match the target grid");
    MatrixXd out = MatrixXd::Zero(x.rows(), x.cols());
    const double scale = 2.0 / floored_eps2(ops.cfg.epsilon);

    for (const FrameOperands& fo : ops.frames) {
        const std::vector<double> t1 = {ops.times[static_cast<std::size_t>(fo.frame)]};
        const MatrixXd xl = x.col(fo.frame);
        if (ops.cfg.exact_jacobian) {
            auto pb = den.denoise_pullback(xl, sigma, t1);
            const VectorXd r = fo.y - fo.a * pb.value.col(0);
            const MatrixXd g = scale * (fo.a.transpose() * r);
            out.col(fo.frame) += pb.vjp(g).col(0);
        } else {
            const MatrixXd d = den.denoise(xl, sigma, t1);
            const VectorXd r = fo.y - fo.a * d.col(0);
            out.col(fo.frame) += scale * (fo.a.transpose() * r);
        }
    }
    return out;
}

MatrixXd message_guidance(const DenoiserModel& den, const GuidanceOperands& ops,
                          int operand_index, const MatrixXd& x, double sigma) {
    require(operand_index >= 0 && operand_index < static_cast<int>(ops.frames.size()),
            "operand index out of range");
    require(x.cols() == ops.num_steps(), "state width does not match the target grid");
    const FrameOperands& fo = ops.frames[static_cast<std::size_t>(operand_index)];
    MatrixXd out = MatrixXd::Zero(x.rows(), x.cols());
    const int m_steps = ops.num_steps();
    if (m_steps < 2) return out;

    std::vector<double> rest_times;
    rest_times.reserve(static_cast<std::size_t>(m_steps) - 1);
    MatrixXd x_res(x.rows(), m_steps - 1);
    Eigen::Index c = 0;
    for (int j = 0; j < m_steps; ++j) {
        if (j == fo.frame) continue;
        rest_times.push_back(ops.times[static_cast<std::size_t>(j)]);
        x_res.col(c++) = x.col(j);
    }

    MatrixXd grad_res;
    if (ops.cfg.exact_jacobian) {
        auto pb = den.denoise_pullback(x_res, sigma, rest_times);
        const VectorXd mu = pb.value * fo.gpr_weights;
        const VectorXd u = fo.sigma_llt.solve(fo.y - fo.a * mu);
        const MatrixXd g = (fo.a.transpose() * u) * fo.gpr_weights.transpose();
        grad_res = pb.vjp(g);
    } else {
        const MatrixXd d = den.denoise(x_res, sigma, rest_times);
        const VectorXd mu = d * fo.gpr_weights;
        const VectorXd u = fo.sigma_llt.solve(fo.y - fo.a * mu);
        grad_res = (fo.a.transpose() * u) * fo.gpr_weights.transpose();
    }

    c = 0;
    for (int j = 0; j < m_steps; ++j) {
        if (j == fo.frame) continue;
        out.col(j) = grad_res.col(c++);
    }
    return out;
}

MatrixXd aggregate_guidance(const DenoiserModel& den, const GuidanceOperands& ops,
                            const MatrixXd& x, double sigma) {
    MatrixXd g = dps_guidance(den, ops, x, sigma);
    if (ops.cfg.messages)
        for (int i = 0; i < static_cast<int>(ops.frames.size()); ++i)
            g += message_guidance(den, ops, i, x, sigma);
    return g;
}

double stable_guidance_scale(const GuidanceOperands& ops, GuidanceMode mode, double damping) {
    require(damping > 0.0, "guidance damping must be positive");
    if (mode == GuidanceMode::none || ops.frames.empty()) return 0.0;
    const double eps2 = floored_eps2(ops.cfg.epsilon);
    const int m_steps = ops.num_steps();
    const auto p = static_cast<Eigen::Index>(ops.frames.front().a.cols());
    const bool messages = mode == GuidanceMode::mpdps && m_steps > 1;

    double lam_direct = 0.0;
    for (const auto& fr : ops.frames) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(fr.a.transpose() * fr.a);
        lam_direct = std::max(lam_direct, (2.0 / eps2) * es.eigenvalues().maxCoeff());
    }
    if (lam_direct <= 0.0) return 0.0;
    if (!messages) return damping / lam_direct;

    auto hessian_apply = [&](const MatrixXd& v) {
        MatrixXd out = MatrixXd::Zero(p, m_steps);
        for (const auto& fr : ops.frames) {
            out.col(fr.frame) += (2.0 / eps2) * (fr.a.transpose() * (fr.a * v.col(fr.frame)));
            if (!messages) continue;
            VectorXd pred = VectorXd::Zero(p);
            int idx = 0;
            for (int m = 0; m < m_steps; ++m) {
                if (m == fr.frame) continue;
                pred += fr.gpr_weights(idx++) * v.col(m);
            }
            const VectorXd g = fr.a.transpose() * fr.sigma_llt.solve(fr.a * pred);
            idx = 0;
            for (int m = 0; m < m_steps; ++m) {
                if (m == fr.frame) continue;
                out.col(m) += fr.gpr_weights(idx++) * g;
            }
        }
        return out;
    };

    Rng rng(99);
    MatrixXd v(p, m_steps);
    for (Eigen::Index j = 0; j < v.cols(); ++j)
        for (Eigen::Index i = 0; i < v.rows(); ++i) v(i, j) = rng.normal();
    v /= v.norm();
    double lam = 0.0;
    for (int it = 0; it < 60; ++it) {
        const MatrixXd hv = hessian_apply(v);
        lam = hv.norm();
        if (lam <= 0.0) break;
        v = hv / lam;
    }
    // The message part is positive semidefinite, so the coupled operator can
    // never be softer than its direct blocks.
    return damping / std::max(lam, lam_direct);
}

CoreSequence mpdps_sample(const DenoiserModel& den, const GuidanceOperands& ops,
                          const std::vector<int>& ranks, const SampleConfig& scfg) {
    require(!ops.times.empty(), "sampling needs at least one timestamp");
    const std::vector<double> sig = scfg.schedule.grid();
    const int s = scfg.schedule.steps;
    const std::vector<double>& times = ops.times;

    MatrixXd x = sig[static_cast<std::size_t>(s)] *
                 sample_gp_noise(times, ranks, scfg.gamma, 1.0, scfg.seed, scfg.noise)
                     .stacked()
                     .transpose();

    for (int i = s; i >= 1; --i) {
        const double si = sig[static_cast<std::size_t>(i)];
        const double sj = sig[static_cast<std::size_t>(i) - 1];
        const MatrixXd d1 = (x - den.denoise(x, si, times)) / si;
        MatrixXd xj = x + (sj - si) * d1;
        if (sj > 0.0) {
            const MatrixXd d2 = (xj - den.denoise(xj, sj, times)) / sj;
            xj = x + (sj - si) * 0.5 * (d1 + d2);
        }
        if (ops.cfg.zeta > 0.0 && !ops.frames.empty())
            xj += ops.cfg.zeta * aggregate_guidance(den, ops, xj, sj);
        x = std::move(xj);
    }
    return CoreSequence::from_stacked(times, ranks, x.transpose());
}

CoreSequence reconstruct_cores(const TrainedFTM& ftm, const DenoiserModel& den,
                               const ObservationSet& obs, const std::vector<double>& target_times,
                               GuidanceMode mode, GuidanceConfig gcfg, const SampleConfig& scfg) {
    const std::vector<int>& ranks = ftm.config.ranks;
    CoreSequence z;
    if (mode == GuidanceMode::none) {
        z = unconditional_sample(den, target_times, ranks, scfg);
    } else {
        gcfg.messages = (mode == GuidanceMode::mpdps);
        const GuidanceOperands ops =
            build_guidance_operands(ftm.latents, ftm.standardize, obs, target_times, ranks, gcfg);
        z = mpdps_sample(den, ops, ranks, scfg);
    }
    return ftm.standardize.decode(z);
}

}  // namespace ftdiff
