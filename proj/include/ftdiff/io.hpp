// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ftdiff/ftm.hpp"
#include "ftdiff/gpsd.hpp"
#include "ftdiff/synthetic.hpp"

namespace ftdiff {

using Json = nlohmann::json;

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Versioned little-endian container: 8-byte magic, u32 format version, JSON
/// metadata document, then a raw float64 payload.
struct Artifact {
    Json meta;
    std::vector<double> payload;
};

void write_artifact(const std::string& path, const Artifact& art);

/// Reads and validates a container. When expected_kind is non-empty the
/// metadata "kind" entry must match.
Artifact read_artifact(const std::string& path, const std::string& expected_kind = "");

/// FNV-1a hash of the canonical (sorted-key) JSON dump, as 16 hex digits.
/// Every artifact records the digest of the run config that produced it.
std::string config_digest(const Json& config);

void write_json_file(const std::string& path, const Json& doc);
Json read_json_file(const std::string& path);

void save_dataset(const std::string& path, const Dataset& ds, const std::string& digest);
Dataset load_dataset(const std::string& path);

void save_ftm(const std::string& path, const TrainedFTM& model, const std::string& digest);
TrainedFTM load_ftm(const std::string& path);

void save_gpsd(const std::string& path, const TrainedGPSD& model, const std::string& digest);
TrainedGPSD load_gpsd(const std::string& path);

/// Raw-scale core sequences produced by sampling or reconstruction.
struct SampleSet {
    std::vector<int> ranks;
    std::vector<CoreSequence> sequences;
    Json meta;  // digest plus caller-defined provenance entries
};

void save_samples(const std::string& path, const SampleSet& s);
SampleSet load_samples(const std::string& path);

/// Digest stored in an artifact, if any.
std::string artifact_digest(const Json& meta);

}  // namespace ftdiff
