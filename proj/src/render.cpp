// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#include "ftdiff/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ftdiff {
namespace {

std::uint8_t lerp_channel(double a, double b, double t) {
    return static_cast<std::uint8_t>(std::lround(a + (b - a) * t));
}

}  // namespace

void write_ppm(const std::string& path, const ImageRGB& img) {
    require(img.width > 0 && img.height > 0, "write_ppm: empty image");
    require(img.pixels.size() == static_cast<std::size_t>(img.width) * img.height * 3,
            "write_ppm: pixel buffer size mismatch");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "write_ppm: cannot open " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    require(static_cast<bool>(out), "write_ppm: failed writing " + path);
}

std::array<std::uint8_t, 3> diverging_color(double v, double lo, double hi) {
    if (!std::isfinite(v)) return {72, 72, 72};
    const double span = hi > lo ? hi - lo : 1.0;
    const double u = std::clamp((v - lo) / span, 0.0, 1.0);
    if (u < 0.5) {
        const double t = u * 2.0;
        return {lerp_channel(38, 247, t), lerp_channel(70, 247, t), lerp_channel(162, 247, t)};
    }
    const double t = (u - 0.5) * 2.0;
    return {lerp_channel(247, 176, t), lerp_channel(247, 32, t), lerp_channel(247, 38, t)};
}

ImageRGB tile_frames(const std::vector<std::vector<VectorXd>>& rows, int grid, int scale,
                     double lo, double hi) {
    require(!rows.empty() && !rows.front().empty(), "tile_frames: no frames");
    require(grid >= 1 && scale >= 1, "tile_frames: bad tile geometry");
    const std::size_t cols = rows.front().size();
    for (const auto& row : rows) {
        require(row.size() == cols, "tile_frames: ragged frame rows");
        for (const auto& frame : row) {
            require(frame.size() == 0 || frame.size() == static_cast<Eigen::Index>(grid) * grid,
                    "tile_frames: frame length does not match the grid");
        }
    }

    const int tile = grid * scale;
    ImageRGB img;
    img.width = static_cast<int>(cols) * (tile + 1) + 1;
    img.height = static_cast<int>(rows.size()) * (tile + 1) + 1;
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * 3, 16);

    auto put = [&](int x, int y, const std::array<std::uint8_t, 3>& c) {
        const std::size_t o = 3 * (static_cast<std::size_t>(y) * img.width + x);
        img.pixels[o] = c[0];
        img.pixels[o + 1] = c[1];
        img.pixels[o + 2] = c[2];
    };

    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const auto& frame = rows[r][c];
            const int x0 = static_cast<int>(c) * (tile + 1) + 1;
            const int y0 = static_cast<int>(r) * (tile + 1) + 1;
            for (int i = 0; i < grid; ++i) {
                for (int j = 0; j < grid; ++j) {
                    const std::array<std::uint8_t, 3> color =
                        frame.size() == 0 ? std::array<std::uint8_t, 3>{32, 32, 32}
                                          : diverging_color(frame(i * grid + j), lo, hi);
                    for (int di = 0; di < scale; ++di) {
                        for (int dj = 0; dj < scale; ++dj) {
                            put(x0 + j * scale + dj, y0 + i * scale + di, color);
                        }
                    }
                }
            }
        }
    }
    return img;
}

}  // namespace ftdiff
