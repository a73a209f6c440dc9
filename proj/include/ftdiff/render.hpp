// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ftdiff/common.hpp"

namespace ftdiff {

struct ImageRGB {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major RGB triples
};

/// Binary P6 image file.
void write_ppm(const std::string& path, const ImageRGB& img);

/// Blue-white-red diverging ramp over [lo, hi]; non-finite values map to gray.
std::array<std::uint8_t, 3> diverging_color(double v, double lo, double hi);

/// Tiles rows of square frames into one image. Each frame is a flattened
/// grid x grid scalar field (first mode slowest, rendered as image rows);
/// an empty vector renders as a blank tile. All tiles share the [lo, hi]
/// color range and are magnified by `scale` with a 1-pixel separator.
ImageRGB tile_frames(const std::vector<std::vector<VectorXd>>& rows, int grid, int scale,
                     double lo, double hi);

}  // namespace ftdiff
