// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#include "ftdiff/common.hpp"

#include <array>

namespace ftdiff {

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::array<char, 16> buf;
    for (int i = 15; i >= 0; --i) {
        buf[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return std::string(buf.data(), buf.size());
}

}  // namespace ftdiff
