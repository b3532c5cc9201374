#pragma once

#include "dipole/pointcloud.hpp"

namespace dipole {

// Reads an ASCII or binary_little_endian PLY with at least x,y,z per vertex.
// Recognized optional properties: nx,ny,nz, area, beta, alpha_0..alpha_{K-1};
// anything else is skipped. Missing normals are filled with pca_normals.
// When the file carries no alpha_* channels, `k_appearance` channels are
// initialized with Gaussian variates of std 0.1 from `seed`.
OrientedPointCloud load_ply(const std::string& path, int k_appearance = 0,
                            std::uint64_t seed = 0);

// Binary little-endian PLY: double x y z nx ny nz (bit-exact round trip),
// float32 area, beta, alpha_k.
void save_ply(const OrientedPointCloud& cloud, const std::string& path);

}  // namespace dipole
