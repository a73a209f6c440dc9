// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#include "ftdiff/gpsd.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace ftdiff {

double NoiseSchedule::sigma(int i) const {
    require(i >= 0 && i <= steps, "schedule index out of range");
    require(steps >= 2, "schedule needs at least two steps");
    require(sigma_min > 0.0 && sigma_max > sigma_min && rho > 0.0, "bad schedule parameters");
    if (i == 0) return 0.0;
    const double lo = std::pow(sigma_min, 1.0 / rho);
    const double hi = std::pow(sigma_max, 1.0 / rho);
    const double f = static_cast<double>(i - 1) / static_cast<double>(steps - 1);
    return std::pow(lo + f * (hi - lo), rho);
}

std::vector<double> NoiseSchedule::grid() const {
    std::vector<double> g(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) g[static_cast<std::size_t>(i)] = sigma(i);
    return g;
}

Precond edm_precond(double sigma, double sigma_data) {
    require(sigma >= 0.0 && sigma_data > 0.0, "bad preconditioning inputs");
    Precond p;
    if (sigma == 0.0) return p;  // identity
    const double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
    p.c_skip = d2 / (s2 + d2);
    p.c_out = sigma * sigma_data / std::sqrt(s2 + d2);
    p.c_in = 1.0 / std::sqrt(s2 + d2);
    p.c_noise = std::log(sigma) / 4.0;
    return p;
}

double edm_loss_weight(double sigma, double sigma_data) {
    require(sigma > 0.0 && sigma_data > 0.0, "loss weight needs positive sigmas");
    const double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
    return (s2 + d2) / (s2 * d2);
}

double sample_sigma_lognormal(Rng& rng, double pmean, double pstd) {
    return std::exp(pmean + pstd * rng.normal());
}

VectorXd sin_embedding(double v, int dim) {
    require(dim >= 2, "embedding dimension too small");
    VectorXd e(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(std::log(1000.0) * i / std::max(1, half - 1));
        e(2 * i) = std::sin(freq * v);
        e(2 * i + 1) = std::cos(freq * v);
    }
    if (dim % 2) e(dim - 1) = v;
    return e;
}

namespace {

struct Layout {
    Eigen::Index win, bin, wsig, wtim;
    Eigen::Index w1l, w1c, w1r, b1, wp1, bp1;
    Eigen::Index w2l, w2c, w2r, b2, wp2, bp2;
    Eigen::Index wout, bout, total;
};

Layout layout_of(const DenoiserArch& a) {
    const Eigen::Index p = a.core_dim, h = a.hidden;
    Layout l{};
    Eigen::Index off = 0;
    auto take = [&off](Eigen::Index n) {
        const Eigen::Index at = off;
        off += n;
        return at;
    };
    l.win = take(h * p);
    l.bin = take(h);
    l.wsig = take(h * h);
    l.wtim = take(h * h);
    l.w1l = take(h * h);
    l.w1c = take(h * h);
    l.w1r = take(h * h);
    l.b1 = take(h);
    l.wp1 = take(h * h);
    l.bp1 = take(h);
    l.w2l = take(h * h);
    l.w2c = take(h * h);
    l.w2r = take(h * h);
    l.b2 = take(h);
    l.wp2 = take(h * h);
    l.bp2 = take(h);
    l.wout = take(p * h);
    l.bout = take(p);
    l.total = off;
    return l;
}

using CMap = Eigen::Map<const MatrixXd>;
using MMap = Eigen::Map<MatrixXd>;
using CVec = Eigen::Map<const VectorXd>;
using MVec = Eigen::Map<VectorXd>;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

MatrixXd silu(const MatrixXd& z) {
    return z.unaryExpr([](double v) { return v * sigmoid(v); });
}

MatrixXd dsilu(const MatrixXd& z) {
    return z.unaryExpr([](double v) {
        const double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
    });
}

// col m of out = wl u[:,m-1] + wc u[:,m] + wr u[:,m+1], absent neighbors zero
MatrixXd conv3(const CMap& wl, const CMap& wc, const CMap& wr, const CVec& b,
               const MatrixXd& u) {
    MatrixXd c = wc * u;
    const Eigen::Index m = u.cols();
    if (m > 1) {
        c.rightCols(m - 1).noalias() += wl * u.leftCols(m - 1);
        c.leftCols(m - 1).noalias() += wr * u.rightCols(m - 1);
    }
    c.colwise() += b;
    return c;
}

}  // namespace

Eigen::Index Denoiser::num_params(const DenoiserArch& arch) { return layout_of(arch).total; }

Denoiser::Denoiser(const DenoiserArch& arch, double sigma_data, Rng& rng)
    : arch_(arch), sigma_data_(sigma_data) {
    require(arch.core_dim >= 1 && arch.hidden >= 2, "bad denoiser architecture");
    require(sigma_data > 0.0, "sigma_data must be positive");
    const Layout l = layout_of(arch);
    theta_ = VectorXd::Zero(l.total);
    auto fill = [&](Eigen::Index off, Eigen::Index n, double fan_in) {
        const double bound = std::sqrt(6.0 / fan_in);
        for (Eigen::Index i = 0; i < n; ++i) theta_(off + i) = rng.uniform(-bound, bound);
    };
    const Eigen::Index p = arch.core_dim, h = arch.hidden;
    fill(l.win, h * p, static_cast<double>(p));
    fill(l.wsig, h * h, static_cast<double>(h));
    fill(l.wtim, h * h, static_cast<double>(h));
    for (Eigen::Index off : {l.w1l, l.w1c, l.w1r}) fill(off, h * h, 3.0 * h);
    for (Eigen::Index off : {l.w2l, l.w2c, l.w2r}) fill(off, h * h, 3.0 * h);
    fill(l.wp1, h * h, static_cast<double>(h));
    fill(l.wp2, h * h, static_cast<double>(h));
    // wout and all biases stay zero, so the initial denoiser is pure skip.
}

const Denoiser::Workspace& Denoiser::forward(const MatrixXd& x, double sigma,
                                             const std::vector<double>& times, Workspace& ws,
                                             MatrixXd& out) const {
    require(theta_.size() > 0, "denoiser is uninitialized");
    require(x.rows() == arch_.core_dim, "input row count must equal the core length");
    require(static_cast<Eigen::Index>(times.size()) == x.cols(),
            "one timestamp per sequence position required");
    require(sigma >= 0.0, "sigma must be nonnegative");

    ws.sigma = sigma;
    ws.pc = edm_precond(sigma, sigma_data_);
    ws.x = x;
    if (sigma == 0.0) {
        out = x;
        return ws;
    }

    const Layout l = layout_of(arch_);
    const Eigen::Index p = arch_.core_dim, h = arch_.hidden, m = x.cols();
    const double* th = theta_.data();
    CMap win(th + l.win, h, p), wsig(th + l.wsig, h, h), wtim(th + l.wtim, h, h);
    CMap w1l(th + l.w1l, h, h), w1c(th + l.w1c, h, h), w1r(th + l.w1r, h, h);
    CMap wp1(th + l.wp1, h, h);
    CMap w2l(th + l.w2l, h, h), w2c(th + l.w2c, h, h), w2r(th + l.w2r, h, h);
    CMap wp2(th + l.wp2, h, h);
    CMap wout(th + l.wout, p, h);
    CVec bin(th + l.bin, h), b1(th + l.b1, h), bp1(th + l.bp1, h), b2(th + l.b2, h),
        bp2(th + l.bp2, h), bout(th + l.bout, p);

    ws.esig = sin_embedding(ws.pc.c_noise, static_cast<int>(h));
    ws.etim.resize(h, m);
    for (Eigen::Index j = 0; j < m; ++j)
        ws.etim.col(j) = sin_embedding(times[static_cast<std::size_t>(j)], static_cast<int>(h));

    ws.h0.noalias() = win * (ws.pc.c_in * x);
    ws.h0.colwise() += bin;
    ws.h0.noalias() += (wsig * ws.esig).replicate(1, m);
    ws.h0.noalias() += wtim * ws.etim;

    ws.h1 = ws.h0 + conv3(w1l, w1c, w1r, b1, silu(ws.h0));
    ws.h2 = ws.h1 + ((wp1 * silu(ws.h1)).colwise() + bp1).eval();
    ws.h3 = ws.h2 + conv3(w2l, w2c, w2r, b2, silu(ws.h2));
    ws.h4 = ws.h3 + ((wp2 * silu(ws.h3)).colwise() + bp2).eval();

    out.noalias() = wout * silu(ws.h4);
    out.colwise() += bout;
    out = ws.pc.c_skip * x + ws.pc.c_out * out;
    return ws;
}

void Denoiser::backward(const Workspace& ws, const MatrixXd& grad_out, VectorXd* param_grad,
                        MatrixXd* input_grad) const {
    require(grad_out.rows() == arch_.core_dim && grad_out.cols() == ws.x.cols(),
            "grad_out shape mismatch");
    if (ws.sigma == 0.0) {
        if (input_grad) *input_grad = grad_out;
        return;
    }
    const Layout l = layout_of(arch_);
    const Eigen::Index p = arch_.core_dim, h = arch_.hidden, m = ws.x.cols();
    const double* th = theta_.data();
    CMap win(th + l.win, h, p);
    CMap w1l(th + l.w1l, h, h), w1c(th + l.w1c, h, h), w1r(th + l.w1r, h, h);
    CMap wp1(th + l.wp1, h, h);
    CMap w2l(th + l.w2l, h, h), w2c(th + l.w2c, h, h), w2r(th + l.w2r, h, h);
    CMap wp2(th + l.wp2, h, h);
    CMap wout(th + l.wout, p, h);

    if (param_grad) require(param_grad->size() == l.total, "param_grad size mismatch");
    double* gd = param_grad ? param_grad->data() : nullptr;

    const MatrixXd u1 = silu(ws.h0), u2 = silu(ws.h1), u3 = silu(ws.h2), u4 = silu(ws.h3),
                   u5 = silu(ws.h4);

    const MatrixXd df = ws.pc.c_out * grad_out;

    if (gd) {
        MMap(gd + l.wout, p, h).noalias() += df * u5.transpose();
        MVec(gd + l.bout, p).noalias() += df.rowwise().sum();
    }
    MatrixXd dh4 = (wout.transpose() * df).cwiseProduct(dsilu(ws.h4));

    // pointwise block 2
    if (gd) {
        MMap(gd + l.wp2, h, h).noalias() += dh4 * u4.transpose();
        MVec(gd + l.bp2, h).noalias() += dh4.rowwise().sum();
    }
    MatrixXd dh3 = dh4 + ((wp2.transpose() * dh4).cwiseProduct(dsilu(ws.h3))).eval();

    // conv block 2
    auto conv_backward = [&](const MatrixXd& dc, const MatrixXd& u, const CMap& wl,
                             const CMap& wc, const CMap& wr, Eigen::Index owl, Eigen::Index owc,
                             Eigen::Index owr, Eigen::Index ob) {
        if (gd) {
            MMap(gd + owc, h, h).noalias() += dc * u.transpose();
            if (m > 1) {
                MMap(gd + owl, h, h).noalias() +=
                    dc.rightCols(m - 1) * u.leftCols(m - 1).transpose();
                MMap(gd + owr, h, h).noalias() +=
                    dc.leftCols(m - 1) * u.rightCols(m - 1).transpose();
            }
            MVec(gd + ob, h).noalias() += dc.rowwise().sum();
        }
        MatrixXd du = wc.transpose() * dc;
        if (m > 1) {
            du.leftCols(m - 1).noalias() += wl.transpose() * dc.rightCols(m - 1);
            du.rightCols(m - 1).noalias() += wr.transpose() * dc.leftCols(m - 1);
        }
        return du;
    };

    MatrixXd du3 = conv_backward(dh3, u3, w2l, w2c, w2r, l.w2l, l.w2c, l.w2r, l.b2);
    MatrixXd dh2 = dh3 + du3.cwiseProduct(dsilu(ws.h2)).eval();

    // pointwise block 1
    if (gd) {
        MMap(gd + l.wp1, h, h).noalias() += dh2 * u2.transpose();
        MVec(gd + l.bp1, h).noalias() += dh2.rowwise().sum();
    }
    MatrixXd dh1 = dh2 + ((wp1.transpose() * dh2).cwiseProduct(dsilu(ws.h1))).eval();

    // conv block 1
    MatrixXd du1 = conv_backward(dh1, u1, w1l, w1c, w1r, l.w1l, l.w1c, l.w1r, l.b1);
    MatrixXd dh0 = dh1 + du1.cwiseProduct(dsilu(ws.h0)).eval();

    if (gd) {
        MMap(gd + l.win, h, p).noalias() += dh0 * (ws.pc.c_in * ws.x).transpose();
        MVec(gd + l.bin, h).noalias() += dh0.rowwise().sum();
        MMap(gd + l.wsig, h, h).noalias() += dh0.rowwise().sum() * ws.esig.transpose();
        MMap(gd + l.wtim, h, h).noalias() += dh0 * ws.etim.transpose();
    }
    if (input_grad) {
        input_grad->noalias() = ws.pc.c_skip * grad_out;
        input_grad->noalias() += ws.pc.c_in * (win.transpose() * dh0);
    }
}

MatrixXd Denoiser::denoise(const MatrixXd& x, double sigma,
                           const std::vector<double>& times) const {
    Workspace ws;
    MatrixXd out;
    forward(x, sigma, times, ws, out);
    return out;
}

DenoiserModel::Pullback Denoiser::denoise_pullback(const MatrixXd& x, double sigma,
                                                   const std::vector<double>& times) const {
    auto ws = std::make_shared<Workspace>();
    Pullback pb;
    forward(x, sigma, times, *ws, pb.value);
    pb.vjp = [this, ws](const MatrixXd& grad_out) {
        MatrixXd ig(ws->x.rows(), ws->x.cols());
        backward(*ws, grad_out, nullptr, &ig);
        return ig;
    };
    return pb;
}

double gpsd_loss(const Denoiser& den, const std::vector<CoreSequence>& clean,
                 const std::vector<double>& sigmas, const std::vector<CoreSequence>& noise) {
    require(!clean.empty(), "loss needs at least one sequence");
    require(clean.size() == sigmas.size() && clean.size() == noise.size(),
            "clean/sigma/noise size mismatch");
    double total = 0.0;
    for (std::size_t b = 0; b < clean.size(); ++b) {
        clean[b].validate();
        require(clean[b].times == noise[b].times, "noise timestamps mismatch");
        const MatrixXd w = clean[b].stacked().transpose();  // P x M
        const MatrixXd n = noise[b].stacked().transpose();
        const double sigma = sigmas[b];
        require(sigma > 0.0, "training noise levels must be positive");
        const MatrixXd d = den.denoise(w + sigma * n, sigma, clean[b].times);
        total += edm_loss_weight(sigma, den.sigma_data()) * (d - w).squaredNorm() /
                 static_cast<double>(w.cols());
    }
    return total / static_cast<double>(clean.size());
}

TrainedGPSD train_gpsd(const std::vector<CoreSequence>& standardized, const GPSDConfig& cfg) {
    require(!standardized.empty(), "training needs at least one sequence");
    require(cfg.steps >= 1 && cfg.batch >= 1 && cfg.crop_len >= 1, "bad training configuration");
    require(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0, "bad holdout fraction");
    for (const auto& seq : standardized) {
        seq.validate();
        require(seq.cores[0].ranks == standardized[0].cores[0].ranks,
                "sequences must share one rank tuple");
    }

    Rng root(cfg.seed);
    Rng init_rng = root.fork(0);
    Rng split_rng = root.fork(1);
    Rng batch_rng = root.fork(2);
    Rng val_rng = root.fork(3);

    const std::vector<int> ranks = standardized[0].cores[0].ranks;
    DenoiserArch arch;
    arch.core_dim = static_cast<int>(standardized[0].cores[0].size());
    arch.hidden = cfg.hidden;

    TrainedGPSD out;
    out.config = cfg;
    out.denoiser = Denoiser(arch, cfg.sigma_data, init_rng);

    // Split sequences; keep at least one on each side when possible.
    std::vector<const CoreSequence*> train, val;
    for (const auto& seq : standardized)
        (split_rng.uniform() < cfg.holdout_fraction ? val : train).push_back(&seq);
    if (train.empty()) std::swap(train, val);
    if (val.empty() && train.size() > 1) {
        val.push_back(train.back());
        train.pop_back();
    }
    if (val.empty()) val.push_back(train.front());

    // Frozen validation pairs: (sigma, unit noise) per validation sequence.
    std::vector<CoreSequence> val_clean, val_noise;
    std::vector<double> val_sigmas;
    for (const CoreSequence* seq : val)
        for (int rep = 0; rep < 4; ++rep) {
            val_clean.push_back(*seq);
            val_sigmas.push_back(sample_sigma_lognormal(val_rng, cfg.pmean, cfg.pstd));
            val_noise.push_back(sample_gp_noise(seq->times, ranks, cfg.gamma, 1.0,
                                                val_rng.integer(UINT64_MAX), cfg.noise));
        }

    auto eval_val = [&]() { return gpsd_loss(out.denoiser, val_clean, val_sigmas, val_noise); };
    out.val_loss.push_back(eval_val());

    VectorXd& theta = out.denoiser.params();
    AdamState adam(theta.size());
    VectorXd grad(theta.size());
    Denoiser::Workspace ws;
    MatrixXd dout;

    for (int step = 0; step < cfg.steps; ++step) {
        grad.setZero();
        double loss = 0.0;
        for (int item = 0; item < cfg.batch; ++item) {
            const CoreSequence& seq =
                *train[static_cast<std::size_t>(batch_rng.integer(train.size()))];
            const int m_full = seq.num_steps();
            const int len = std::min(cfg.crop_len, m_full);
            const int start =
                static_cast<int>(batch_rng.integer(static_cast<std::uint64_t>(m_full - len + 1)));

            std::vector<double> times(seq.times.begin() + start, seq.times.begin() + start + len);
            MatrixXd w(arch.core_dim, len);
            for (int j = 0; j < len; ++j)
                w.col(j) = seq.cores[static_cast<std::size_t>(start + j)].data;

            const double sigma = sample_sigma_lognormal(batch_rng, cfg.pmean, cfg.pstd);
            const MatrixXd n = sample_gp_noise(times, ranks, cfg.gamma, 1.0,
                                               batch_rng.integer(UINT64_MAX), cfg.noise)
                                   .stacked()
                                   .transpose();

            out.denoiser.forward(w + sigma * n, sigma, times, ws, dout);
            const MatrixXd resid = dout - w;
            const double weight = edm_loss_weight(sigma, cfg.sigma_data);
            loss += weight * resid.squaredNorm() / len;
            const MatrixXd g =
                (2.0 * weight / (static_cast<double>(cfg.batch) * len)) * resid;
            out.denoiser.backward(ws, g, &grad, nullptr);
        }
        loss /= cfg.batch;
        out.train_loss.push_back(loss);
        if (!std::isfinite(loss) || !grad.allFinite())
            throw TrainingError("denoiser training produced non-finite values", out.train_loss);

        adam.step(theta, grad, cfg.lr);

        if ((step + 1) % cfg.val_every == 0 || step + 1 == cfg.steps) {
            const double v = eval_val();
            out.val_loss.push_back(v);
            if (!std::isfinite(v) || v > cfg.divergence_factor * std::max(out.val_loss.front(), 1e-12))
                throw TrainingError("denoiser validation loss diverged", out.train_loss);
        }
    }
    return out;
}

CoreSequence unconditional_sample(const DenoiserModel& den, const std::vector<double>& times,
                                  const std::vector<int>& ranks, const SampleConfig& cfg) {
    require(!times.empty(), "sampling needs at least one timestamp");
    const std::vector<double> sig = cfg.schedule.grid();
    const int s = cfg.schedule.steps;

    MatrixXd x = sig[static_cast<std::size_t>(s)] *
                 sample_gp_noise(times, ranks, cfg.gamma, 1.0, cfg.seed, cfg.noise)
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
        x = std::move(xj);
    }
    return CoreSequence::from_stacked(times, ranks, x.transpose());
}

}  // namespace ftdiff
