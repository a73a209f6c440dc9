// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftdiff {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Violated precondition or shape contract on a public operation.
class ContractError : public std::invalid_argument {
public:
    explicit ContractError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Numerical failure (singular system, factorization breakdown, ...).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training diverged; carries the loss trace up to the failure point.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& msg, std::vector<double> trace)
        : std::runtime_error(msg), loss_trace(std::move(trace)) {}
    std::vector<double> loss_trace;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

/// Deterministic seeded RNG. Gaussian draws use Box-Muller on the raw
/// 64-bit stream so sequences do not depend on the standard library's
/// distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed)
        : seed_(seed ? seed : 0x9e3779b97f4a7c15ull), state_(splitmix(seed_)) {}

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0, n).
    std::uint64_t integer(std::uint64_t n) {
        // Rejection-free modulo bias is negligible for n << 2^64.
        return next() % (n ? n : 1);
    }

    VectorXd normal_vector(Eigen::Index n) {
        VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    /// Independent child stream derived from the construction seed, so it is
    /// stable under reordering of other draws.
    Rng fork(std::uint64_t stream) const {
        return Rng(splitmix(seed_ ^ (0xbf58476d1ce4e5b9ull * (stream + 1))));
    }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }
    std::uint64_t next() {
        // xorshift64* on a splitmix-seeded state.
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545f4914f6cdd1dull;
    }

    std::uint64_t seed_;
    std::uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

/// Adam over a flat parameter vector.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(Eigen::Index n) : m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)) {}

    void step(VectorXd& params, const VectorXd& grad, double lr,
              double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
        if (m_.size() != params.size()) {
            m_ = VectorXd::Zero(params.size());
            v_ = VectorXd::Zero(params.size());
            t_ = 0;
        }
        ++t_;
        m_ = beta1 * m_ + (1.0 - beta1) * grad;
        v_ = beta2 * v_.array().matrix() + (1.0 - beta2) * grad.array().square().matrix();
        const double c1 = 1.0 - std::pow(beta1, t_);
        const double c2 = 1.0 - std::pow(beta2, t_);
        params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
    }

private:
    VectorXd m_, v_;
    long t_ = 0;
};

/// FNV-1a 64-bit digest over a byte string; used as the run-config digest.
inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

}  // namespace ftdiff
