// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#include "ftdiff/data.hpp"

namespace ftdiff {

std::size_t ObservationSet::total_count() const {
    std::size_t n = 0;
    for (const auto& row : rows) n += row.size();
    return n;
}

void ObservationSet::validate(int num_modes) const {
    require(times.size() == rows.size(), "observation rows/times size mismatch");
    for (std::size_t m = 1; m < times.size(); ++m)
        require(times[m] > times[m - 1], "timestamps must be strictly increasing");
    for (const auto& row : rows)
        for (const auto& ob : row)
            require(static_cast<int>(ob.coords.size()) == num_modes,
                    "observation coordinate arity mismatch");
}

void CoreSequence::validate() const {
    require(times.size() == cores.size(), "core sequence times/cores size mismatch");
    require(!cores.empty(), "core sequence is empty");
    for (std::size_t m = 1; m < times.size(); ++m)
        require(times[m] > times[m - 1], "timestamps must be strictly increasing");
    for (const auto& c : cores) {
        c.validate();
        require(c.ranks == cores.front().ranks, "core sequence has mixed rank tuples");
    }
}

MatrixXd CoreSequence::stacked() const {
    validate();
    MatrixXd out(num_steps(), cores.front().size());
    for (int m = 0; m < num_steps(); ++m) out.row(m) = cores[m].data.transpose();
    return out;
}

CoreSequence CoreSequence::from_stacked(const std::vector<double>& times,
                                        const std::vector<int>& ranks, const MatrixXd& stacked) {
    require(static_cast<int>(times.size()) == stacked.rows(),
            "stacked core row count does not match times");
    CoreSequence seq;
    seq.times = times;
    seq.cores.reserve(times.size());
    for (int m = 0; m < stacked.rows(); ++m) {
        CoreTensor c = CoreTensor::zeros(ranks);
        require(c.size() == stacked.cols(), "stacked core width does not match ranks");
        c.data = stacked.row(m).transpose();
        seq.cores.push_back(std::move(c));
    }
    seq.validate();
    return seq;
}

CoreSequence CoreAffine::encode(const CoreSequence& seq) const {
    require(std > 0.0, "standardization std must be positive");
    CoreSequence out = seq;
    for (auto& c : out.cores) c.data = (c.data.array() - mean) / std;
    return out;
}

CoreSequence CoreAffine::decode(const CoreSequence& seq) const {
    require(std > 0.0, "standardization std must be positive");
    CoreSequence out = seq;
    for (auto& c : out.cores) c.data = c.data.array() * std + mean;
    return out;
}

}  // namespace ftdiff
