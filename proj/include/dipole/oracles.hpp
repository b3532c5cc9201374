#pragma once

#include <functional>

#include "dipole/bhtree.hpp"
#include "dipole/pointcloud.hpp"

namespace dipole {

// Brute-force references, deliberately independent of the tree traversal code.
// All naive sums are compensated so 1e-12 cross-checks are meaningful.

double erf_reference(double x);  // long-double libm reference

double naive_dipole_sum(const OrientedPointCloud& cloud, const Vec3& x,
                        const KernelParams& params, int channel,
                        ChannelKernel kernel = ChannelKernel::Dipole);

Vec3 naive_dipole_gradient(const OrientedPointCloud& cloud, const Vec3& x,
                           const KernelParams& params, int channel,
                           ChannelKernel kernel = ChannelKernel::Dipole);

struct AdjointQuerySpec {
  Vec3 x = Vec3::Zero();
  std::vector<double> d_out;  // one per channel
  std::vector<Vec3> d_grad;   // empty, or one per channel
};

// Direct differentiation of the naive sums w.r.t. moments, normals, epsilon.
PointGradients naive_adjoint(const OrientedPointCloud& cloud,
                             const std::vector<AdjointQuerySpec>& queries,
                             const KernelParams& params,
                             const std::vector<ChannelKernel>& kernels = {});

// Screened-source Poisson solve on a regular lattice: -lap(chi) = div V with
// V(x) = sum_m a_m phi_eps(x - p_m) n_m and a unit-mass Gaussian phi_eps of
// width eps. Zero Dirichlet boundary; matrix-free conjugate gradients.
struct PsrGrid {
  int n = 0;  // nodes per axis, boundary included
  Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();
  std::vector<double> chi;  // n^3, x fastest
  double residual = 0.0;
  int iterations = 0;

  double& at(int i, int j, int k) { return chi[(static_cast<std::size_t>(k) * n + j) * n + i]; }
  double at(int i, int j, int k) const {
    return chi[(static_cast<std::size_t>(k) * n + j) * n + i];
  }
  Vec3 node(int i, int j, int k) const;
};

PsrGrid psr_grid_solve(const OrientedPointCloud& cloud, const KernelParams& params, int n,
                       const Vec3& lo, const Vec3& hi, double tol = 1e-8,
                       int max_iterations = 20000);

// Monte-Carlo estimate of the singular winding number under positional
// Gaussian jitter of std eps/sqrt(2) per axis and von Mises-Fisher normals
// whose mean resultant length equals each point's geometry moment.
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};
std::vector<McEstimate> stochastic_winding_mc(const OrientedPointCloud& cloud, double epsilon,
                                              const std::vector<Vec3>& queries, int trials,
                                              std::uint64_t seed);

// coth(k) - 1/k = target solved by bisection; target in [0, 1).
double vmf_concentration(double target);

std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& fn,
                                      const std::vector<double>& point, double h);

// Symmetric mean nearest-neighbor distance between two point sets.
double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Normalized interpolant: channel sum divided by the geometry winding sum.
// Throws NumericalError when the winding magnitude is below 1e-9.
double mean_value_interpolant(const OrientedPointCloud& cloud, const Vec3& x, int channel,
                              const KernelParams& params);

}  // namespace dipole
