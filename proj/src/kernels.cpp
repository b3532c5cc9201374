#include "dipole/kernels.hpp"

#include <cmath>

namespace dipole {

namespace {

// erf on [0, 2] via the all-positive series
//   erf(x) = (2/sqrt(pi)) exp(-x^2) sum_n (2x^2)^n x / (2n+1)!!
// which has no cancellation.
double erf_series(double x, double expmx2) {
  double x2 = x * x;
  double term = x;
  double sum = x;
  double denom = 1.0;
  for (int n = 1; n < 80; ++n) {
    denom += 2.0;
    term *= 2.0 * x2 / denom;
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return 2.0 / kSqrtPi * expmx2 * sum;
}

// erfc continued fraction (modified Lentz), accurate for x >= 2:
//   erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))))
double erfc_cf(double x, double expmx2) {
  const double tiny = 1e-300;
  double c = 1.0 / tiny;
  double d = 1.0 / x;
  double h = d;
  for (int i = 1; i < 300; ++i) {
    double a = i / 2.0;
    d = x + a * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = x + a / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-17) break;
  }
  return expmx2 / kSqrtPi * h;
}

// tau and its first two derivatives from a single exp evaluation; orders
// above `order` are left untouched.
void tau_derivs(double t, int order, double& tv, double& tp, double& ts) {
  if (t >= 6.5) {
    tv = 1.0;
    if (order >= 1) tp = 0.0;
    if (order >= 2) ts = 0.0;
    return;
  }
  double u = std::exp(-t * t);
  double e = t <= 2.0 ? erf_series(t, u) : 1.0 - erfc_cf(t, u);
  tv = e - 2.0 * t / kSqrtPi * u;
  if (order >= 1) tp = 4.0 * t * t / kSqrtPi * u;
  if (order >= 2) ts = 8.0 / kSqrtPi * (t - t * t * t) * u;
}

}  // namespace

double erf_approx(double x) {
  double ax = std::fabs(x);
  double v;
  if (ax <= 2.0)
    v = erf_series(ax, std::exp(-ax * ax));
  else if (ax < 6.5)
    v = 1.0 - erfc_cf(ax, std::exp(-ax * ax));
  else
    v = 1.0;
  return x < 0 ? -v : v;
}

double tau(double t) {
  return erf_approx(t) - 2.0 * t / kSqrtPi * std::exp(-t * t);
}

double tau_prime(double t) {
  return 4.0 * t * t / kSqrtPi * std::exp(-t * t);
}

double tau_second(double t) {
  return 8.0 / kSqrtPi * (t - t * t * t) * std::exp(-t * t);
}

double normal_cdf(double z) { return 0.5 * (1.0 + erf_approx(z * 0.7071067811865475244)); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) * 0.3989422804014326779; }

double normal_hazard(double z) {
  if (z > -6.0) return normal_pdf(z) / normal_cdf(z);
  // Mills ratio asymptotics: Phi(z)/phi(z) ~ (1/|z|)(1 - 1/z^2 + 3/z^4 - 15/z^6)
  double z2 = z * z;
  return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2));
}

RadialCoeffs kernel_coeffs(double r, const KernelParams& params, int order) {
  RadialCoeffs k;
  if (params.desingularized) {
    double d2 = params.desing_delta * params.desing_delta;
    double s = r * r + d2;
    double s32 = std::pow(s, 1.5);
    k.W = 1.0 / s32;
    k.Wp_r = -3.0 / (s32 * s);  // d/dr (s^-3/2) / r
    k.R = r / s32;
    k.Rp_r = (r > 0) ? (1.0 / s32 - 3.0 * r * r / (s32 * s)) / r : 0.0;
    return k;
  }
  double eps = params.epsilon;
  if (eps <= 0.0) {
    // singular kernel; caller guards r > 0
    double r2 = r * r, r3 = r2 * r;
    k.W = 1.0 / r3;
    k.Wp_r = -3.0 / (r3 * r2);
    k.R = 1.0 / r2;
    k.Rp_r = -2.0 / (r2 * r2);
    return k;
  }
  double t = r / eps;
  double e3 = eps * eps * eps;
  double c = 2.0 / (kSqrtPi * e3);
  if (t < 0.05) {
    double t2 = t * t, t4 = t2 * t2;
    // tau(t) = (2/sqrt(pi)) [ (2/3)t^3 - (2/5)t^5 + (1/7)t^7 - ... ]
    k.W = c * (2.0 / 3.0 - 0.4 * t2 + t4 / 7.0);
    k.Wp_r = c / (eps * eps) * (-0.8 + (4.0 / 7.0) * t2 - (2.0 / 9.0) * t4);
    k.dWp_r_de = c / e3 * (4.0 - 4.0 * t2 + 2.0 * t4);
    k.dW_de = -2.0 * c / eps * (1.0 - t2 + 0.5 * t4);
    k.R = k.W * r;       // R = r W exactly
    k.dR_de = k.dW_de * r;
    if (r > 0) k.Rp_r = 2.0 * c / r * (1.0 / 3.0 - 0.6 * t2 + (5.0 / 14.0) * t4);
    return k;
  }
  double r2 = r * r, r3 = r2 * r, r4 = r2 * r2;
  double tv = 0, tp = 0, ts = 0;
  tau_derivs(t, order, tv, tp, ts);
  double e2 = eps * eps;
  k.W = tv / r3;
  k.R = tv / r2;
  if (order >= 1) {
    k.Wp_r = tp / (eps * r4) - 3.0 * tv / (r4 * r);
    k.Rp_r = tp / (eps * r3) - 2.0 * tv / r4;
  }
  if (order >= 2) {
    k.dW_de = -tp / (e2 * r2);
    k.dWp_r_de = -ts / (e2 * eps * r3) + 2.0 * tp / (e2 * r4);
    k.dR_de = -tp / (e2 * r);
  }
  return k;
}

double poisson_kernel(const Vec3& x, const Vec3& y, const Vec3& n_y) {
  Vec3 d = y - x;
  double r2 = d.squaredNorm();
  if (r2 == 0.0) throw NumericalError("poisson_kernel: coincident query and source point");
  double r = std::sqrt(r2);
  return kInvFourPi * n_y.dot(d) / (r2 * r);
}

double regularized_poisson(const Vec3& x, const Vec3& y, const Vec3& n_y,
                           const KernelParams& params) {
  Vec3 d = y - x;
  double r2 = d.squaredNorm();
  if (r2 == 0.0 && !params.desingularized) {
    if (params.epsilon <= 0.0) throw NumericalError("regularized_poisson: singular at r = 0");
    return params.coincident_value;
  }
  RadialCoeffs k = kernel_coeffs(std::sqrt(r2), params);
  return kInvFourPi * k.W * n_y.dot(d);
}

Vec3 grad_regularized_poisson(const Vec3& x, const Vec3& y, const Vec3& n_y,
                              const KernelParams& params) {
  Vec3 d = y - x;
  double r2 = d.squaredNorm();
  if (r2 == 0.0 && !params.desingularized) return Vec3::Zero();
  RadialCoeffs k = kernel_coeffs(std::sqrt(r2), params);
  return -kInvFourPi * (k.W * n_y + k.Wp_r * n_y.dot(d) * d);
}

double radial_regularized(const Vec3& x, const Vec3& y, const KernelParams& params) {
  Vec3 d = y - x;
  double r2 = d.squaredNorm();
  if (r2 == 0.0 && !params.desingularized) return 0.0;
  RadialCoeffs k = kernel_coeffs(std::sqrt(r2), params);
  return kInvFourPi * k.R;
}

}  // namespace dipole
