#pragma once

#include "dipole/util.hpp"

namespace dipole {

// Internally validated erf: positive-term series for small arguments,
// continued fraction for the tail. Absolute error <= 1e-14 (checked in tests
// against an independent long-double oracle).
double erf_approx(double x);

// tau(t) = erf(t) - (2t/sqrt(pi)) exp(-t^2). Monotone on [0,inf), tau(0)=0,
// tau(t)->1. This is the radial profile of the Gaussian-mollified kernel.
double tau(double t);
double tau_prime(double t);   // (4 t^2 / sqrt(pi)) exp(-t^2)
double tau_second(double t);  // (8 / sqrt(pi)) (t - t^3) exp(-t^2)

double normal_cdf(double z);  // Phi(z) = (1 + erf(z/sqrt 2)) / 2
double normal_pdf(double z);
// phi(z) / Phi(z), stable in the deep left tail where both underflow
// (asymptotically ~ -z as z -> -inf).
double normal_hazard(double z);

struct KernelParams {
  double epsilon = 0.0;        // regularization width; 0 selects the singular kernel
  bool desingularized = false; // denominator-cutoff variant, for the ablation only
  double desing_delta = 0.0;
  double coincident_value = 0.0;  // returned at r = 0 for the regularized kernel
};

// Radial building blocks shared by the kernels, the naive oracles, and the
// tree traversals. With t = r/epsilon:
//   W(r)  = tau(t) / r^3      dipole falloff, finite at r = 0
//   R(r)  = tau(t) / r^2      unsigned radial falloff (foreshortening skipped)
// Wp_r = W'(r)/r and Rp_r = R'(r)/r appear in query-point gradients;
// the *_de members are derivatives in epsilon, needed to backpropagate to
// the global regularization width. Near r = 0 the closed forms cancel
// catastrophically, so a power series in t takes over.
struct RadialCoeffs {
  double W = 0, Wp_r = 0, dW_de = 0, dWp_r_de = 0;
  double R = 0, Rp_r = 0, dR_de = 0;
};
// order 0: W, R only; order 1: adds Wp_r, Rp_r; order 2: adds the epsilon
// derivatives. Higher orders cost extra profile derivatives.
RadialCoeffs kernel_coeffs(double r, const KernelParams& params, int order = 2);

// Free-space Poisson kernel P(x,y) = (1/4pi) n(y).(y-x)/|y-x|^3.
// Throws NumericalError at x = y.
double poisson_kernel(const Vec3& x, const Vec3& y, const Vec3& n_y);

// P_eps(x,y) = tau(|y-x|/eps) P(x,y); total on R^3 x R^3 for eps > 0.
double regularized_poisson(const Vec3& x, const Vec3& y, const Vec3& n_y,
                           const KernelParams& params);

// d/dx of P_eps. Returns exactly zero at bitwise coincidence x = y.
Vec3 grad_regularized_poisson(const Vec3& x, const Vec3& y, const Vec3& n_y,
                              const KernelParams& params);

// tau(|y-x|/eps) / (4 pi |y-x|^2): the appearance-channel weight.
double radial_regularized(const Vec3& x, const Vec3& y, const KernelParams& params);

}  // namespace dipole
