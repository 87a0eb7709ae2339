#pragma once

namespace dirsurf::eval::detail {

// Corner k of a cell sits at offset (k&1 ^ k>>1&1, k>>1&1, k>>2&1):
// 0 (0,0,0) 1 (1,0,0) 2 (1,1,0) 3 (0,1,0) 4 (0,0,1) 5 (1,0,1) 6 (1,1,1) 7 (0,1,1).
// Bit k of the case index is set when corner k is inside (value below the iso level).
extern const int kMcEdgeTable[256];
extern const int kMcTriTable[256][16];

}  // namespace dirsurf::eval::detail
