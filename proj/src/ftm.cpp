// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#include "ftdiff/ftm.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <utility>

namespace ftdiff {

namespace {

Eigen::Index checked_core_size(const std::vector<int>& ranks) {
    return CoreTensor::zeros(ranks).size();
}

VectorXd mode_inputs(const std::vector<Observation>& row, int k) {
    VectorXd x(static_cast<Eigen::Index>(row.size()));
    for (std::size_t n = 0; n < row.size(); ++n) x(static_cast<Eigen::Index>(n)) = row[n].coords[k];
    return x;
}

/// Row-wise Kronecker product of per-mode feature matrices, skipping mode
/// `skip` (pass -1 to keep all). Column order follows the core flattening.
MatrixXd row_kron(const std::vector<MatrixXd>& feats, int skip) {
    const Eigen::Index n = feats.front().rows();
    MatrixXd acc = MatrixXd::Ones(n, 1);
    for (int k = 0; k < static_cast<int>(feats.size()); ++k) {
        if (k == skip) continue;
        const MatrixXd& f = feats[static_cast<std::size_t>(k)];
        MatrixXd next(n, acc.cols() * f.cols());
        for (Eigen::Index c = 0; c < acc.cols(); ++c)
            for (Eigen::Index j = 0; j < f.cols(); ++j)
                next.col(c * f.cols() + j) = acc.col(c).cwiseProduct(f.col(j));
        acc = std::move(next);
    }
    return acc;
}

/// Mode-k matricization: rows indexed by the mode-k rank, columns by the
/// remaining multi-index flattened in the core's own order.
MatrixXd mode_matricization(const CoreTensor& core, int k) {
    const int kk = core.num_modes();
    const int rk = core.ranks[static_cast<std::size_t>(k)];
    const Eigen::Index rest = core.size() / rk;
    MatrixXd w(rk, rest);
    std::vector<int> multi(static_cast<std::size_t>(kk), 0);
    for (Eigen::Index p = 0; p < core.size(); ++p) {
        Eigen::Index rest_idx = 0;
        for (int j = 0; j < kk; ++j) {
            if (j == k) continue;
            rest_idx = rest_idx * core.ranks[static_cast<std::size_t>(j)] +
                       multi[static_cast<std::size_t>(j)];
        }
        w(multi[static_cast<std::size_t>(k)], rest_idx) = core.data(p);
        for (int j = kk - 1; j >= 0; --j) {
            if (++multi[static_cast<std::size_t>(j)] < core.ranks[static_cast<std::size_t>(j)])
                break;
            multi[static_cast<std::size_t>(j)] = 0;
        }
    }
    return w;
}

struct FrameGroup {
    const std::vector<Observation>* row = nullptr;
    const CoreTensor* core = nullptr;
};

/// Accumulates scale * d/d(theta) sum_n resid_n^2 over the groups into grad;
/// returns the summed squared residuals.
double group_gradient(const LatentFunctionSet& latents, const std::vector<FrameGroup>& groups,
                      double scale, VectorXd& grad) {
    const int kk = latents.num_modes();
    std::vector<Eigen::Index> offsets(static_cast<std::size_t>(kk) + 1, 0);
    for (int k = 0; k < kk; ++k) offsets[static_cast<std::size_t>(k) + 1] =
        offsets[static_cast<std::size_t>(k)] + latents.mode(k).num_params();

    double sse = 0.0;
    std::vector<ModeFunction::Workspace> ws(static_cast<std::size_t>(kk));
    for (const FrameGroup& g : groups) {
        if (g.row->empty()) continue;
        const Eigen::Index n = static_cast<Eigen::Index>(g.row->size());

        std::vector<MatrixXd> feats(static_cast<std::size_t>(kk));
        for (int k = 0; k < kk; ++k)
            feats[static_cast<std::size_t>(k)] =
                latents.mode(k).forward(mode_inputs(*g.row, k), ws[static_cast<std::size_t>(k)]);

        const MatrixXd a = row_kron(feats, -1);
        VectorXd resid = a * g.core->data;
        for (Eigen::Index i = 0; i < n; ++i) resid(i) -= (*g.row)[static_cast<std::size_t>(i)].value;
        sse += resid.squaredNorm();

        for (int k = 0; k < kk; ++k) {
            const MatrixXd rest = row_kron(feats, k);
            const MatrixXd wk = mode_matricization(*g.core, k);
            const MatrixXd vk = rest * wk.transpose();  // n x R_k
            const MatrixXd gk = (2.0 * scale) * resid.asDiagonal() * vk;
            auto seg = grad.segment(offsets[static_cast<std::size_t>(k)],
                                    latents.mode(k).num_params());
            VectorXd local = VectorXd::Zero(seg.size());
            latents.mode(k).backward(ws[static_cast<std::size_t>(k)], gk, local);
            seg += local;
        }
    }
    return sse;
}

double tv_sum(const CoreSequence& seq) {
    double s = 0.0;
    for (int m = 1; m < seq.num_steps(); ++m)
        s += (seq.cores[static_cast<std::size_t>(m)].data -
              seq.cores[static_cast<std::size_t>(m) - 1].data)
                 .squaredNorm();
    return s;
}

}  // namespace

LatentFunctionSet make_latent_set(const std::vector<int>& ranks, ModeFunctionArch arch, Rng& rng) {
    require(!ranks.empty(), "rank tuple is empty");
    std::vector<ModeFunctionArch> archs;
    archs.reserve(ranks.size());
    for (int r : ranks) {
        require(r >= 1, "ranks must be positive");
        arch.output_dim = r;
        archs.push_back(arch);
    }
    return LatentFunctionSet(std::move(archs), rng);
}

double ftm_loss(const LatentFunctionSet& latents, const std::vector<ObservationSet>& records,
                const std::vector<CoreSequence>& cores, double beta) {
    require(records.size() == cores.size(), "records/core sequences size mismatch");
    require(beta >= 0.0, "beta must be nonnegative");
    double sse = 0.0, tv = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < records.size(); ++b) {
        const ObservationSet& rec = records[b];
        rec.validate(latents.num_modes());
        cores[b].validate();
        require(rec.times == cores[b].times, "record/core timestamps mismatch");
        for (int m = 0; m < rec.num_steps(); ++m) {
            const auto& row = rec.rows[static_cast<std::size_t>(m)];
            if (row.empty()) continue;
            std::vector<MatrixXd> feats(static_cast<std::size_t>(latents.num_modes()));
            for (int k = 0; k < latents.num_modes(); ++k)
                feats[static_cast<std::size_t>(k)] = latents.mode(k).forward(mode_inputs(row, k));
            VectorXd resid = row_kron(feats, -1) * cores[b].cores[static_cast<std::size_t>(m)].data;
            for (std::size_t i = 0; i < row.size(); ++i)
                resid(static_cast<Eigen::Index>(i)) -= row[i].value;
            sse += resid.squaredNorm();
            count += row.size();
        }
        tv += tv_sum(cores[b]);
    }
    require(count > 0, "loss needs at least one observation");
    return sse / static_cast<double>(count) + beta * tv;
}

VectorXd ftm_latent_gradient(const LatentFunctionSet& latents,
                             const std::vector<ObservationSet>& records,
                             const std::vector<CoreSequence>& cores) {
    require(records.size() == cores.size(), "records/core sequences size mismatch");
    std::vector<FrameGroup> groups;
    std::size_t count = 0;
    for (std::size_t b = 0; b < records.size(); ++b) {
        records[b].validate(latents.num_modes());
        require(records[b].times == cores[b].times, "record/core timestamps mismatch");
        for (int m = 0; m < records[b].num_steps(); ++m) {
            groups.push_back({&records[b].rows[static_cast<std::size_t>(m)],
                              &cores[b].cores[static_cast<std::size_t>(m)]});
            count += records[b].rows[static_cast<std::size_t>(m)].size();
        }
    }
    require(count > 0, "gradient needs at least one observation");
    VectorXd grad = VectorXd::Zero(latents.gather_params().size());
    group_gradient(latents, groups, 1.0 / static_cast<double>(count), grad);
    return grad;
}

CoreSequence solve_core_sequence(const LatentFunctionSet& latents, const ObservationSet& obs,
                                 const std::vector<int>& ranks, double tv_weight, double ridge) {
    obs.validate(latents.num_modes());
    require(obs.num_steps() > 0, "observation set has no timestamps");
    require(ranks == latents.ranks(), "rank tuple does not match the latent functions");
    require(tv_weight >= 0.0 && ridge >= 0.0, "weights must be nonnegative");

    const Eigen::Index p = checked_core_size(ranks);
    const int m_steps = obs.num_steps();
    const double lam = tv_weight;

    std::vector<MatrixXd> s(static_cast<std::size_t>(m_steps));
    std::vector<VectorXd> r(static_cast<std::size_t>(m_steps));
    std::vector<Eigen::LLT<MatrixXd>> llt(static_cast<std::size_t>(m_steps));

    for (int m = 0; m < m_steps; ++m) {
        const auto& row = obs.rows[static_cast<std::size_t>(m)];
        MatrixXd d = MatrixXd::Zero(p, p);
        VectorXd b = VectorXd::Zero(p);
        if (!row.empty()) {
            std::vector<MatrixXd> feats(static_cast<std::size_t>(latents.num_modes()));
            for (int k = 0; k < latents.num_modes(); ++k)
                feats[static_cast<std::size_t>(k)] = latents.mode(k).forward(mode_inputs(row, k));
            const MatrixXd a = row_kron(feats, -1);
            VectorXd y(a.rows());
            for (std::size_t i = 0; i < row.size(); ++i)
                y(static_cast<Eigen::Index>(i)) = row[i].value;
            d.noalias() = a.transpose() * a;
            b.noalias() = a.transpose() * y;
        }
        const double couplings = (m_steps == 1) ? 0.0 : ((m == 0 || m == m_steps - 1) ? 1.0 : 2.0);
        d.diagonal().array() += ridge + lam * couplings;

        if (m == 0) {
            s[0] = std::move(d);
            r[0] = std::move(b);
        } else {
            const MatrixXd inv_prev =
                llt[static_cast<std::size_t>(m) - 1].solve(MatrixXd::Identity(p, p));
            s[static_cast<std::size_t>(m)] = d - (lam * lam) * inv_prev;
            r[static_cast<std::size_t>(m)] =
                b + lam * llt[static_cast<std::size_t>(m) - 1].solve(r[static_cast<std::size_t>(m) - 1]);
        }
        llt[static_cast<std::size_t>(m)].compute(s[static_cast<std::size_t>(m)]);
        if (llt[static_cast<std::size_t>(m)].info() != Eigen::Success)
            throw NumericalError(
                "core normal equations are not positive definite; increase ridge or tv weight");
    }

    CoreSequence seq;
    seq.times = obs.times;
    seq.cores.assign(static_cast<std::size_t>(m_steps), CoreTensor::zeros(ranks));
    VectorXd w = llt[static_cast<std::size_t>(m_steps) - 1].solve(r[static_cast<std::size_t>(m_steps) - 1]);
    seq.cores[static_cast<std::size_t>(m_steps) - 1].data = w;
    for (int m = m_steps - 2; m >= 0; --m) {
        w = llt[static_cast<std::size_t>(m)].solve(r[static_cast<std::size_t>(m)] + lam * w);
        seq.cores[static_cast<std::size_t>(m)].data = w;
    }
    return seq;
}

CoreSequence encode_observations(const LatentFunctionSet& latents, const ObservationSet& obs,
                                 const std::vector<int>& ranks, double tv_weight, double ridge) {
    return solve_core_sequence(latents, obs, ranks, tv_weight, ridge);
}

CoreAffine fit_core_affine(const std::vector<CoreSequence>& cores) {
    require(!cores.empty(), "cannot standardize an empty batch");
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& seq : cores)
        for (const auto& c : seq.cores) {
            sum += c.data.sum();
            sq += c.data.squaredNorm();
            n += static_cast<std::size_t>(c.size());
        }
    require(n > 0, "cannot standardize an empty batch");
    CoreAffine aff;
    aff.mean = sum / static_cast<double>(n);
    const double var = sq / static_cast<double>(n) - aff.mean * aff.mean;
    aff.std = var > 1e-24 ? std::sqrt(var) : 1.0;
    return aff;
}

TrainedFTM train_ftm(const std::vector<ObservationSet>& records, const FTMConfig& cfg) {
    require(!records.empty(), "training needs at least one record");
    require(cfg.epochs >= 1 && cfg.latent_steps >= 0, "bad epoch/step counts");
    require(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0, "bad holdout fraction");
    require(cfg.lr > 0.0, "learning rate must be positive");
    const int kk = static_cast<int>(cfg.ranks.size());
    for (const auto& rec : records) rec.validate(kk);

    Rng root(cfg.seed);
    Rng split_rng = root.fork(0);
    Rng init_rng = root.fork(1);
    Rng batch_rng = root.fork(2);

    // Deterministic per-observation holdout split.
    std::vector<ObservationSet> train(records.size()), hold(records.size());
    std::size_t n_train = 0, n_hold = 0;
    for (std::size_t b = 0; b < records.size(); ++b) {
        train[b].times = hold[b].times = records[b].times;
        train[b].rows.resize(records[b].rows.size());
        hold[b].rows.resize(records[b].rows.size());
        for (std::size_t m = 0; m < records[b].rows.size(); ++m)
            for (const Observation& ob : records[b].rows[m]) {
                if (split_rng.uniform() < cfg.holdout_fraction) {
                    hold[b].rows[m].push_back(ob);
                    ++n_hold;
                } else {
                    train[b].rows[m].push_back(ob);
                    ++n_train;
                }
            }
    }
    require(n_train > 0, "no training observations after the holdout split");

    TrainedFTM model;
    model.config = cfg;
    model.latents = make_latent_set(cfg.ranks, cfg.arch, init_rng);
    const double tv_weight = cfg.beta * static_cast<double>(n_train);

    model.cores.resize(records.size());
    auto refit = [&](double& train_sse, double& hold_sse, double& tv_total) {
        train_sse = hold_sse = tv_total = 0.0;
        for (std::size_t b = 0; b < records.size(); ++b) {
            model.cores[b] =
                solve_core_sequence(model.latents, train[b], cfg.ranks, tv_weight, cfg.ridge);
            tv_total += tv_sum(model.cores[b]);
        }
        train_sse = ftm_loss(model.latents, train, model.cores, 0.0) * static_cast<double>(n_train);
        if (n_hold > 0)
            hold_sse = ftm_loss(model.latents, hold, model.cores, 0.0) * static_cast<double>(n_hold);
    };

    auto record_and_check = [&](double train_sse, double hold_sse, double tv_total) {
        const double loss = train_sse / static_cast<double>(n_train) + cfg.beta * tv_total;
        model.train_loss.push_back(loss);
        model.holdout_loss.push_back(n_hold > 0 ? hold_sse / static_cast<double>(n_hold) : 0.0);
        const double reference = std::max(model.train_loss.front(), 1e-12);
        if (!std::isfinite(loss) || loss > cfg.divergence_factor * reference)
            throw TrainingError("functional Tucker training diverged", model.train_loss);
    };

    double train_sse = 0.0, hold_sse = 0.0, tv_total = 0.0;
    refit(train_sse, hold_sse, tv_total);
    record_and_check(train_sse, hold_sse, tv_total);

    VectorXd theta = model.latents.gather_params();
    AdamState adam(theta.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int step = 0; step < cfg.latent_steps; ++step) {
            std::vector<FrameGroup> groups;
            std::size_t count = 0;
            for (int g = 0; g < cfg.frames_per_batch; ++g) {
                const std::size_t b = static_cast<std::size_t>(batch_rng.integer(records.size()));
                const std::size_t m =
                    static_cast<std::size_t>(batch_rng.integer(train[b].rows.size()));
                groups.push_back({&train[b].rows[m], &model.cores[b].cores[m]});
                count += train[b].rows[m].size();
            }
            if (count == 0) continue;
            VectorXd grad = VectorXd::Zero(theta.size());
            group_gradient(model.latents, groups, 1.0 / static_cast<double>(count), grad);
            if (!grad.allFinite())
                throw TrainingError("non-finite latent gradient", model.train_loss);
            adam.step(theta, grad, cfg.lr);
            model.latents.scatter_params(theta);
        }

        refit(train_sse, hold_sse, tv_total);
        record_and_check(train_sse, hold_sse, tv_total);
    }

    model.standardize = fit_core_affine(model.cores);
    return model;
}

}  // namespace ftdiff
