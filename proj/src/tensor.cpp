// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#include "ftdiff/tensor.hpp"

#include <cmath>

namespace ftdiff {

CoreTensor::CoreTensor(VectorXd d, std::vector<int> r) : data(std::move(d)), ranks(std::move(r)) {
    validate();
}

CoreTensor CoreTensor::zeros(const std::vector<int>& ranks) {
    Eigen::Index n = 1;
    for (int r : ranks) {
        require(r >= 1, "CoreTensor: every rank must be >= 1");
        n *= r;
    }
    return CoreTensor(VectorXd::Zero(n), ranks);
}

Eigen::Index CoreTensor::flat_index(const std::vector<int>& mi) const {
    require(mi.size() == ranks.size(), "CoreTensor: multi-index arity mismatch");
    Eigen::Index flat = 0;
    for (size_t k = 0; k < ranks.size(); ++k) {
        require(mi[k] >= 0 && mi[k] < ranks[k], "CoreTensor: multi-index out of range");
        flat = flat * ranks[k] + mi[k];
    }
    return flat;
}

void CoreTensor::validate() const {
    require(!ranks.empty(), "CoreTensor: needs at least one mode");
    Eigen::Index n = 1;
    for (int r : ranks) {
        require(r >= 1, "CoreTensor: every rank must be >= 1");
        n *= r;
    }
    require(data.size() == n, "CoreTensor: data size does not match ranks");
    require(data.allFinite(), "CoreTensor: entries must be finite");
}

// ---------------------------------------------------------------------------
// ModeFunction
// ---------------------------------------------------------------------------

Eigen::Index ModeFunction::num_params(const ModeFunctionArch& a) {
    Eigen::Index n = a.width + a.width;  // W0 (width x 1) + b0
    n += static_cast<Eigen::Index>(a.hidden_layers - 1) * (a.width * a.width + a.width);
    n += static_cast<Eigen::Index>(a.output_dim) * a.width + a.output_dim;
    return n;
}

ModeFunction::ModeFunction(const ModeFunctionArch& arch, Rng& rng) : arch_(arch) {
    require(arch.hidden_layers >= 1, "ModeFunction: needs at least one hidden layer");
    require(arch.width >= 1 && arch.output_dim >= 1, "ModeFunction: bad width/output_dim");
    theta_ = VectorXd(num_params(arch));
    Eigen::Index p = 0;
    // First layer sees a scalar in [-1,1]; sine activation with frequency omega0.
    for (int i = 0; i < arch.width; ++i) theta_[p++] = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < arch.width; ++i) theta_[p++] = rng.uniform(-1.0, 1.0);
    const double hidden_bound = std::sqrt(6.0 / arch.width);
    for (int l = 1; l < arch.hidden_layers; ++l) {
        for (int i = 0; i < arch.width * arch.width; ++i)
            theta_[p++] = rng.uniform(-hidden_bound, hidden_bound);
        for (int i = 0; i < arch.width; ++i) theta_[p++] = 0.0;
    }
    for (int i = 0; i < arch.output_dim * arch.width; ++i)
        theta_[p++] = rng.uniform(-hidden_bound, hidden_bound);
    for (int i = 0; i < arch.output_dim; ++i) theta_[p++] = 0.0;
}

namespace {

struct ModeLayout {
    // Offsets into the flat parameter vector.
    Eigen::Index w0, b0;
    std::vector<Eigen::Index> wl, bl;
    Eigen::Index wout, bout;
};

ModeLayout layout_of(const ModeFunctionArch& a) {
    ModeLayout L;
    Eigen::Index p = 0;
    L.w0 = p;
    p += a.width;
    L.b0 = p;
    p += a.width;
    for (int l = 1; l < a.hidden_layers; ++l) {
        L.wl.push_back(p);
        p += static_cast<Eigen::Index>(a.width) * a.width;
        L.bl.push_back(p);
        p += a.width;
    }
    L.wout = p;
    p += static_cast<Eigen::Index>(a.output_dim) * a.width;
    L.bout = p;
    return L;
}

}  // namespace

const MatrixXd& ModeFunction::forward(const VectorXd& inputs, Workspace& ws) const {
    const auto& a = arch_;
    const ModeLayout L = layout_of(a);
    const Eigen::Index n = inputs.size();
    ws.inputs = inputs;
    ws.pre.assign(a.hidden_layers, MatrixXd());
    ws.post.assign(a.hidden_layers, MatrixXd());

    Eigen::Map<const VectorXd> w0(theta_.data() + L.w0, a.width);
    Eigen::Map<const VectorXd> b0(theta_.data() + L.b0, a.width);
    // x mapped to [-1,1]; pre0 = omega0 * (x * w0^T + b0^T)
    VectorXd x = (2.0 * inputs.array() - 1.0).matrix();
    ws.pre[0] = a.first_omega * ((x * w0.transpose()).rowwise() + b0.transpose());
    ws.post[0] = ws.pre[0].array().sin().matrix();

    for (int l = 1; l < a.hidden_layers; ++l) {
        Eigen::Map<const MatrixXd> wl(theta_.data() + L.wl[l - 1], a.width, a.width);
        Eigen::Map<const VectorXd> bl(theta_.data() + L.bl[l - 1], a.width);
        ws.pre[l] = (ws.post[l - 1] * wl.transpose()).rowwise() + bl.transpose();
        ws.post[l] = ws.pre[l].array().sin().matrix();
    }

    Eigen::Map<const MatrixXd> wout(theta_.data() + L.wout, a.output_dim, a.width);
    Eigen::Map<const VectorXd> bout(theta_.data() + L.bout, a.output_dim);
    ws.output = (ws.post[a.hidden_layers - 1] * wout.transpose()).rowwise() + bout.transpose();
    require(ws.output.allFinite() || n == 0, "ModeFunction: non-finite output");
    return ws.output;
}

MatrixXd ModeFunction::forward(const VectorXd& inputs) const {
    Workspace ws;
    return forward(inputs, ws);
}

void ModeFunction::backward(const Workspace& ws, const MatrixXd& grad_output, VectorXd& grad) const {
    const auto& a = arch_;
    const ModeLayout L = layout_of(a);
    require(grad.size() == theta_.size(), "ModeFunction: gradient buffer size mismatch");
    require(grad_output.rows() == ws.output.rows() && grad_output.cols() == a.output_dim,
            "ModeFunction: grad_output shape mismatch");

    Eigen::Map<const MatrixXd> wout(theta_.data() + L.wout, a.output_dim, a.width);
    Eigen::Map<MatrixXd> gwout(grad.data() + L.wout, a.output_dim, a.width);
    Eigen::Map<VectorXd> gbout(grad.data() + L.bout, a.output_dim);

    const MatrixXd& last = ws.post[a.hidden_layers - 1];
    gwout.noalias() += grad_output.transpose() * last;
    gbout.noalias() += grad_output.colwise().sum().transpose();

    MatrixXd delta = grad_output * wout;  // d loss / d post[last]
    for (int l = a.hidden_layers - 1; l >= 1; --l) {
        // through sin: d/d pre = cos(pre) .* delta
        MatrixXd dpre = (ws.pre[l].array().cos() * delta.array()).matrix();
        Eigen::Map<const MatrixXd> wl(theta_.data() + L.wl[l - 1], a.width, a.width);
        Eigen::Map<MatrixXd> gwl(grad.data() + L.wl[l - 1], a.width, a.width);
        Eigen::Map<VectorXd> gbl(grad.data() + L.bl[l - 1], a.width);
        gwl.noalias() += dpre.transpose() * ws.post[l - 1];
        gbl.noalias() += dpre.colwise().sum().transpose();
        delta = dpre * wl;
    }
    MatrixXd dpre0 = (ws.pre[0].array().cos() * delta.array()).matrix() * a.first_omega;
    Eigen::Map<VectorXd> gw0(grad.data() + L.w0, a.width);
    Eigen::Map<VectorXd> gb0(grad.data() + L.b0, a.width);
    VectorXd x = (2.0 * ws.inputs.array() - 1.0).matrix();
    gw0.noalias() += dpre0.transpose() * x;
    gb0.noalias() += dpre0.colwise().sum().transpose();
}

// ---------------------------------------------------------------------------
// LatentFunctionSet
// ---------------------------------------------------------------------------

LatentFunctionSet::LatentFunctionSet(std::vector<ModeFunctionArch> archs, Rng& rng) {
    require(!archs.empty(), "LatentFunctionSet: needs at least one mode");
    modes_.reserve(archs.size());
    for (size_t k = 0; k < archs.size(); ++k) {
        Rng r = rng.fork(k);
        modes_.emplace_back(archs[k], r);
    }
}

std::vector<int> LatentFunctionSet::ranks() const {
    std::vector<int> r;
    r.reserve(modes_.size());
    for (const auto& m : modes_) r.push_back(m.output_dim());
    return r;
}

Eigen::Index LatentFunctionSet::feature_dim() const {
    Eigen::Index n = 1;
    for (const auto& m : modes_) n *= m.output_dim();
    return n;
}

std::vector<VectorXd> LatentFunctionSet::mode_features(const CoordinateTuple& coord) const {
    require(static_cast<int>(coord.spatial.size()) == num_modes(),
            "mode_features: coordinate arity does not match number of modes");
    std::vector<VectorXd> feats;
    feats.reserve(modes_.size());
    for (int k = 0; k < num_modes(); ++k) {
        VectorXd in(1);
        in[0] = coord.spatial[k];
        feats.push_back(modes_[k].forward(in).row(0).transpose());
    }
    return feats;
}

VectorXd LatentFunctionSet::gather_params() const {
    Eigen::Index n = 0;
    for (const auto& m : modes_) n += m.num_params();
    VectorXd flat(n);
    Eigen::Index p = 0;
    for (const auto& m : modes_) {
        flat.segment(p, m.num_params()) = m.params();
        p += m.num_params();
    }
    return flat;
}

void LatentFunctionSet::scatter_params(const VectorXd& flat) {
    Eigen::Index p = 0;
    for (auto& m : modes_) {
        require(p + m.num_params() <= flat.size(), "scatter_params: flat vector too short");
        m.params() = flat.segment(p, m.num_params());
        p += m.num_params();
    }
    require(p == flat.size(), "scatter_params: flat vector too long");
}

// ---------------------------------------------------------------------------
// Multilinear evaluation
// ---------------------------------------------------------------------------

VectorXd kron_feature(const std::vector<VectorXd>& mode_features) {
    require(!mode_features.empty(), "kron_feature: empty feature list");
    VectorXd acc = mode_features[0];
    for (size_t k = 1; k < mode_features.size(); ++k) {
        const VectorXd& f = mode_features[k];
        VectorXd next(acc.size() * f.size());
        for (Eigen::Index i = 0; i < acc.size(); ++i)
            next.segment(i * f.size(), f.size()) = acc[i] * f;
        acc.swap(next);
    }
    return acc;
}

VectorXd kron_feature(const LatentFunctionSet& latents, const CoordinateTuple& coord) {
    return kron_feature(latents.mode_features(coord));
}

double decode_entry(const CoreTensor& core, const LatentFunctionSet& latents,
                    const CoordinateTuple& coord) {
    require(core.ranks == latents.ranks(), "decode_entry: core ranks do not match latent ranks");
    return core.data.dot(kron_feature(latents, coord));
}

double naive_tucker_eval(const CoreTensor& core, const std::vector<VectorXd>& mode_features) {
    const int K = core.num_modes();
    require(static_cast<int>(mode_features.size()) == K,
            "naive_tucker_eval: feature count does not match modes");
    for (int k = 0; k < K; ++k)
        require(mode_features[k].size() == core.ranks[k],
                "naive_tucker_eval: feature length does not match rank");

    // Explicit nested sum over every multi-index.
    std::vector<int> idx(K, 0);
    double total = 0.0;
    for (Eigen::Index flat = 0; flat < core.size(); ++flat) {
        double prod = core.data[flat];
        for (int k = 0; k < K; ++k) prod *= mode_features[k][idx[k]];
        total += prod;
        for (int k = K - 1; k >= 0; --k) {
            if (++idx[k] < core.ranks[k]) break;
            idx[k] = 0;
        }
    }
    return total;
}

MatrixXd design_matrix(const LatentFunctionSet& latents, const std::vector<CoordinateTuple>& coords) {
    require(!coords.empty(), "design_matrix: empty coordinate list");
    MatrixXd A(static_cast<Eigen::Index>(coords.size()), latents.feature_dim());
    for (size_t n = 0; n < coords.size(); ++n)
        A.row(static_cast<Eigen::Index>(n)) = kron_feature(latents, coords[n]).transpose();
    return A;
}

VectorXd decode_on_grid(const CoreTensor& core, const std::vector<MatrixXd>& mode_feature_matrices) {
    const int K = core.num_modes();
    require(static_cast<int>(mode_feature_matrices.size()) == K,
            "decode_on_grid: feature matrix count does not match modes");
    for (int k = 0; k < K; ++k)
        require(mode_feature_matrices[k].cols() == core.ranks[k],
                "decode_on_grid: feature matrix columns do not match rank");

    // Sequentially contract mode k: data laid out with mode-1 slowest. At step
    // k the buffer holds shape (n_1..n_{k-1}, R_k, R_{k+1}..R_K) flattened; view
    // it as (lead, R_k * trail) and expand R_k -> n_k.
    VectorXd buf = core.data;
    Eigen::Index lead = 1;
    Eigen::Index trail = core.size();
    for (int k = 0; k < K; ++k) {
        const MatrixXd& U = mode_feature_matrices[k];
        const Eigen::Index rk = core.ranks[k];
        const Eigen::Index nk = U.rows();
        trail /= rk;
        VectorXd next(lead * nk * trail);
        for (Eigen::Index a = 0; a < lead; ++a) {
            // block (R_k x trail), row-major slices of buf
            Eigen::Map<const MatrixXd> in(buf.data() + a * rk * trail, trail, rk);
            Eigen::Map<MatrixXd> out(next.data() + a * nk * trail, trail, nk);
            out.noalias() = in * U.transpose();
        }
        buf.swap(next);
        lead *= nk;
        trail = buf.size() / lead;
    }
    return buf;
}

}  // namespace ftdiff
