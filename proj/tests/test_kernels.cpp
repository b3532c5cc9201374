#include <cmath>
#include <random>

#include "dipole/kernels.hpp"
#include "dipole/oracles.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace dipole;
using dipole::testing::rel_err;

TEST_CASE("erf approximation matches the long-double reference") {
  for (double x = -8.0; x <= 8.0; x += 0.0137)
    CHECK(std::fabs(erf_approx(x) - erf_reference(x)) <= 1e-14);
  CHECK(erf_approx(0.0) == 0.0);
  CHECK(erf_approx(100.0) == 1.0);
  CHECK(erf_approx(-100.0) == -1.0);
}

TEST_CASE("poisson kernel closed form") {
  CHECK(poisson_kernel(Vec3(0, 0, -1), Vec3(0, 0, 0), Vec3(0, 0, 1)) ==
        doctest::Approx(kInvFourPi).epsilon(1e-14));
  CHECK(poisson_kernel(Vec3(1, 0, 0), Vec3(0, 0, 0), Vec3(0, 0, 1)) == 0.0);
  {
    // independent long-double evaluation of the closed form
    long double dx = -1.0L, dy = -2.0L, dz = -3.0L;  // y - x for x=(1,2,3), y=0
    long double r = sqrtl(dx * dx + dy * dy + dz * dz);
    long double want = dy / (4.0L * 3.14159265358979323846264338327950288L * r * r * r);
    double got = poisson_kernel(Vec3(1, 2, 3), Vec3(0, 0, 0), Vec3(0, 1, 0));
    CHECK(rel_err(got, static_cast<double>(want)) <= 1e-14);
  }
  CHECK_THROWS_AS(poisson_kernel(Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(0, 0, 1)), NumericalError);
}

TEST_CASE("tau endpoints, monotonicity and reference value") {
  CHECK(tau(0.0) == 0.0);
  CHECK(std::fabs(tau(10.0) - 1.0) <= 1e-12);
  double want = erf_reference(1.0) - 2.0 / kSqrtPi * std::exp(-1.0);
  CHECK(rel_err(tau(1.0), want) <= 1e-13);
  double prev = -1.0;
  for (double t = 0.0; t <= 12.0; t += 0.01) {
    double v = tau(t);
    CHECK(v >= prev);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    prev = v;
  }
}

TEST_CASE("tau derivatives match finite differences") {
  for (double t : {0.1, 0.5, 1.0, 2.0, 3.5}) {
    double h = 1e-6;
    double fd1 = (tau(t + h) - tau(t - h)) / (2 * h);
    double fd2 = (tau_prime(t + h) - tau_prime(t - h)) / (2 * h);
    // absolute tolerances: the FD noise floor is set by tau ~ 1, not by the
    // (possibly tiny) derivative magnitude
    CHECK(std::fabs(tau_prime(t) - fd1) <= 1e-7);
    CHECK(std::fabs(tau_second(t) - fd2) <= 1e-6);
  }
}

TEST_CASE("regularized kernel: coincidence, far field, aligned offset") {
  KernelParams params;
  params.epsilon = 0.3;
  CHECK(regularized_poisson(Vec3(1, 2, 3), Vec3(1, 2, 3), Vec3(0, 0, 1), params) == 0.0);

  Vec3 y(0, 0, 0), n(0, 0, 1);
  Vec3 x_far(0, 0, -10.0 * params.epsilon);
  CHECK(rel_err(regularized_poisson(x_far, y, n, params), poisson_kernel(x_far, y, n)) <= 1e-10);

  Vec3 x_eps(0, 0, -params.epsilon);
  double want = tau(1.0) / (4.0 * kPi * params.epsilon * params.epsilon);
  CHECK(rel_err(regularized_poisson(x_eps, y, n, params), want) <= 1e-13);
}

TEST_CASE("regularized kernel is dominated by the singular kernel") {
  KernelParams params;
  params.epsilon = 0.2;
  Rng rng(7);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    Vec3 x(uni(rng), uni(rng), uni(rng)), y(uni(rng), uni(rng), uni(rng));
    Vec3 n = Vec3(uni(rng), uni(rng), uni(rng)).normalized();
    if ((x - y).norm() < 1e-9) continue;
    CHECK(std::fabs(regularized_poisson(x, y, n, params)) <=
          std::fabs(poisson_kernel(x, y, n)) * (1.0 + 1e-12));
  }
}

TEST_CASE("kernel gradient: coincidence, finite differences, far field") {
  KernelParams params;
  params.epsilon = 0.25;
  CHECK(grad_regularized_poisson(Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(0, 0, 1), params)
            .isZero(0.0));

  Rng rng(11);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double h = 1e-4 * params.epsilon;
  for (int i = 0; i < 100; ++i) {
    Vec3 x(uni(rng), uni(rng), uni(rng)), y(uni(rng), uni(rng), uni(rng));
    Vec3 n = Vec3(uni(rng), uni(rng), uni(rng)).normalized();
    if ((x - y).norm() < 1e-3) continue;
    Vec3 g = grad_regularized_poisson(x, y, n, params);
    for (int a = 0; a < 3; ++a) {
      Vec3 e = Vec3::Zero();
      e[a] = h;
      double fd = (regularized_poisson(x + e, y, n, params) -
                   regularized_poisson(x - e, y, n, params)) /
                  (2 * h);
      CHECK(std::fabs(g[a] - fd) <= 1e-5 * std::max(1.0, std::fabs(fd)));
    }
  }

  // far field matches the singular kernel's analytic gradient
  Vec3 y(0, 0, 0), n(0.2, -0.4, 0.8);
  n.normalize();
  Vec3 x(1.0, -2.0, 1.5);
  Vec3 d = y - x;
  double r = d.norm();
  // grad_x of (1/4pi) n.(y-x)/r^3 = (1/4pi) (-n/r^3 + 3 n.(y-x) (y-x)/r^5)
  Vec3 g_singular = kInvFourPi * (-n / (r * r * r) + 3.0 * n.dot(d) * d / std::pow(r, 5));
  Vec3 g = grad_regularized_poisson(x, y, n, params);
  CHECK((g - g_singular).norm() <= 1e-8 * g_singular.norm());
}

TEST_CASE("radial coefficient series branch joins the closed form smoothly") {
  KernelParams params;
  params.epsilon = 0.4;
  for (double t : {0.049, 0.0501, 0.02, 0.1}) {
    double r = t * params.epsilon;
    RadialCoeffs k = kernel_coeffs(r, params, 2);
    // compare against direct evaluation through tau (safe at these t with
    // generous tolerance; the series exists for accuracy below t ~ 1e-4)
    double tv = tau(t);
    CHECK(rel_err(k.W, tv / (r * r * r)) <= 1e-8);
    CHECK(rel_err(k.R, tv / (r * r)) <= 1e-8);
  }
  // continuity across the branch point
  double below = kernel_coeffs(0.0499 * params.epsilon, params, 2).W;
  double above = kernel_coeffs(0.0501 * params.epsilon, params, 2).W;
  CHECK(rel_err(below, above) <= 1e-3);
}

TEST_CASE("radial coefficients at exact coincidence") {
  KernelParams params;
  params.epsilon = 0.5;
  RadialCoeffs k = kernel_coeffs(0.0, params, 2);
  double e = params.epsilon;
  CHECK(rel_err(k.W, 4.0 / (3.0 * kSqrtPi * e * e * e)) <= 1e-14);
  CHECK(k.R == 0.0);
  CHECK(rel_err(k.dW_de, -4.0 / (kSqrtPi * e * e * e * e)) <= 1e-14);
  CHECK(rel_err(k.dWp_r_de, 8.0 / (kSqrtPi * std::pow(e, 6))) <= 1e-14);
}

TEST_CASE("radial coefficient derivatives match finite differences") {
  KernelParams params;
  params.epsilon = 0.3;
  for (double r : {0.001, 0.01, 0.05, 0.2, 0.5, 1.5}) {
    double hr = 1e-6 * std::max(r, params.epsilon);
    RadialCoeffs k = kernel_coeffs(r, params, 2);
    RadialCoeffs kp = kernel_coeffs(r + hr, params, 1);
    RadialCoeffs km = kernel_coeffs(r - hr, params, 1);
    CHECK(rel_err(k.Wp_r * r, (kp.W - km.W) / (2 * hr)) <= 1e-5);
    CHECK(rel_err(k.Rp_r * r, (kp.R - km.R) / (2 * hr)) <= 1e-5);

    double he = 1e-6 * params.epsilon;
    KernelParams pp = params, pm = params;
    pp.epsilon += he;
    pm.epsilon -= he;
    RadialCoeffs ke_p = kernel_coeffs(r, pp, 2);
    RadialCoeffs ke_m = kernel_coeffs(r, pm, 2);
    // the FD noise floor is set by the magnitude of the function, not the
    // derivative, so normalize tolerances accordingly
    double e = params.epsilon;
    CHECK(std::fabs(k.dW_de - (ke_p.W - ke_m.W) / (2 * he)) <=
          1e-5 * std::max(std::fabs(k.dW_de), k.W / e));
    CHECK(std::fabs(k.dR_de - (ke_p.R - ke_m.R) / (2 * he)) <=
          1e-5 * std::max(std::fabs(k.dR_de), k.R / e));
    CHECK(std::fabs(k.dWp_r_de - (ke_p.Wp_r - ke_m.Wp_r) / (2 * he)) <=
          1e-5 * std::max(std::fabs(k.dWp_r_de), std::fabs(k.Wp_r) / e));
  }
}

TEST_CASE("desingularized variant stays finite and matches its closed form") {
  KernelParams params;
  params.desingularized = true;
  params.desing_delta = 0.1;
  Vec3 y(0, 0, 0), n(0, 0, 1);
  double v0 = regularized_poisson(y, y, n, params);
  CHECK(std::isfinite(v0));
  Vec3 x(0, 0, -0.5);
  double r = 0.5;
  double want = kInvFourPi * r / std::pow(r * r + 0.01, 1.5);
  CHECK(rel_err(regularized_poisson(x, y, n, params), want) <= 1e-13);
}

TEST_CASE("normal cdf and pdf basics") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(normal_cdf(10.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(normal_cdf(-10.0) <= 1e-14);
  double h = 1e-6;
  for (double z : {-2.0, -0.5, 0.0, 1.0, 2.5})
    CHECK(rel_err(normal_pdf(z), (normal_cdf(z + h) - normal_cdf(z - h)) / (2 * h)) <= 1e-6);
}

TEST_CASE("radial appearance weight") {
  KernelParams params;
  params.epsilon = 0.3;
  Vec3 y(0, 0, 0);
  CHECK(radial_regularized(y, y, params) == 0.0);
  Vec3 x(0.4, 0, 0);
  double want = tau(0.4 / 0.3) / (4.0 * kPi * 0.16);
  CHECK(rel_err(radial_regularized(x, y, params), want) <= 1e-13);
}
