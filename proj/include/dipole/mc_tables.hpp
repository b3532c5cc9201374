#pragma once

namespace dipole {

extern const int kMcTriTable[256][16];
extern const int kMcCorner[8][3];
extern const int kMcEdge[12][2];

}  // namespace dipole
