#pragma once

#include <array>
#include <cstdint>

namespace exr::volume::detail {

// Corner offsets, in cube-local (x, y, z).
inline constexpr std::array<std::array<int, 3>, 8> kCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

// Edge -> (corner a, corner b).
inline constexpr std::array<std::array<int, 2>, 12> kEdge = {{
    {0, 1}, {1, 2}, {2, 3}, {3, 0},
    {4, 5}, {5, 6}, {6, 7}, {7, 4},
    {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

extern const std::int8_t kTriangleTable[256][16];

}  // namespace exr::volume::detail
