#include "dipole/oracles.hpp"

#include <cmath>

#include "dipole/kdtree.hpp"

namespace dipole {

double erf_reference(double x) { return static_cast<double>(erfl(static_cast<long double>(x))); }

namespace {

double moment_of(const OrientedPoint& p, int channel) {
  return channel == 0 ? p.geometry_moment : p.appearance_moments[channel - 1];
}

bool coincident_singular(double r2, const KernelParams& params) {
  return r2 == 0.0 && params.epsilon <= 0.0 && !params.desingularized;
}

}  // namespace

double naive_dipole_sum(const OrientedPointCloud& cloud, const Vec3& x,
                        const KernelParams& params, int channel, ChannelKernel kernel) {
  KahanSum sum;
  for (const OrientedPoint& p : cloud.points) {
    double r2 = (p.position - x).squaredNorm();
    if (coincident_singular(r2, params)) continue;
    double w = kernel == ChannelKernel::Dipole
                   ? regularized_poisson(x, p.position, p.normal, params)
                   : radial_regularized(x, p.position, params);
    sum.add(p.area * moment_of(p, channel) * w);
  }
  return sum.value();
}

Vec3 naive_dipole_gradient(const OrientedPointCloud& cloud, const Vec3& x,
                           const KernelParams& params, int channel, ChannelKernel kernel) {
  KahanSum sx, sy, sz;
  for (const OrientedPoint& p : cloud.points) {
    Vec3 d = p.position - x;
    double r2 = d.squaredNorm();
    if (coincident_singular(r2, params)) continue;
    Vec3 g;
    if (kernel == ChannelKernel::Dipole) {
      g = grad_regularized_poisson(x, p.position, p.normal, params);
    } else if (r2 == 0.0) {
      g = Vec3::Zero();
    } else {
      RadialCoeffs k = kernel_coeffs(std::sqrt(r2), params, 1);
      g = -kInvFourPi * k.Rp_r * d;
    }
    double s = p.area * moment_of(p, channel);
    sx.add(s * g.x());
    sy.add(s * g.y());
    sz.add(s * g.z());
  }
  return Vec3(sx.value(), sy.value(), sz.value());
}

PointGradients naive_adjoint(const OrientedPointCloud& cloud,
                             const std::vector<AdjointQuerySpec>& queries,
                             const KernelParams& params,
                             const std::vector<ChannelKernel>& kernels) {
  const int C = 1 + cloud.k_appearance;
  PointGradients out;
  out.channels = C;
  out.moments.assign(cloud.size() * C, 0.0);
  out.normals.assign(cloud.size(), Vec3::Zero());
  auto kind = [&](int c) {
    return kernels.empty() ? ChannelKernel::Dipole : kernels[c];
  };
  for (const AdjointQuerySpec& q : queries) {
    bool with_grad = !q.d_grad.empty();
    for (std::size_t m = 0; m < cloud.size(); ++m) {
      const OrientedPoint& p = cloud.points[m];
      Vec3 d = p.position - q.x;
      double r2 = d.squaredNorm();
      if (r2 == 0.0) continue;
      RadialCoeffs k = kernel_coeffs(std::sqrt(r2), params, 2);
      double ndot = p.normal.dot(d);
      double A = p.area * kInvFourPi;
      for (int c = 0; c < C; ++c) {
        double ds = q.d_out[c];
        double mu = moment_of(p, c);
        if (kind(c) == ChannelKernel::Dipole) {
          out.moments[m * C + c] += ds * A * k.W * ndot;
          out.normals[m] += ds * A * mu * k.W * d;
          out.d_epsilon += ds * A * mu * k.dW_de * ndot;
          if (with_grad) {
            const Vec3& dg = q.d_grad[c];
            double gd = dg.dot(d);
            out.moments[m * C + c] -= A * (k.W * dg.dot(p.normal) + k.Wp_r * ndot * gd);
            out.normals[m] -= A * mu * (k.W * dg + k.Wp_r * gd * d);
            out.d_epsilon -= A * mu * (k.dW_de * dg.dot(p.normal) + k.dWp_r_de * ndot * gd);
          }
        } else {
          out.moments[m * C + c] += ds * A * k.R;
          out.d_epsilon += ds * A * mu * k.dR_de;
        }
      }
    }
  }
  return out;
}

Vec3 PsrGrid::node(int i, int j, int k) const {
  Vec3 h = (hi - lo) / static_cast<double>(n - 1);
  return lo + Vec3(i * h.x(), j * h.y(), k * h.z());
}

PsrGrid psr_grid_solve(const OrientedPointCloud& cloud, const KernelParams& params, int n,
                       const Vec3& lo, const Vec3& hi, double tol, int max_iterations) {
  if (n < 3) throw DataError("psr_grid_solve: grid must have at least 3 nodes per axis");
  double eps = params.epsilon;
  if (eps <= 0) throw DataError("psr_grid_solve: epsilon must be positive");
  PsrGrid grid;
  grid.n = n;
  grid.lo = lo;
  grid.hi = hi;
  std::size_t total = static_cast<std::size_t>(n) * n * n;
  grid.chi.assign(total, 0.0);

  Vec3 h = (hi - lo) / static_cast<double>(n - 1);
  std::vector<double> b(total, 0.0);
  // div V stamped with a 6-eps cutoff; the Gaussian has unit mass in 3D
  double norm = 1.0 / (kSqrtPi * kSqrtPi * kSqrtPi * eps * eps * eps);
  double cut = 6.0 * eps;
  for (const OrientedPoint& p : cloud.points) {
    int i0 = std::max(1, static_cast<int>(std::ceil((p.position.x() - cut - lo.x()) / h.x())));
    int i1 = std::min(n - 2, static_cast<int>(std::floor((p.position.x() + cut - lo.x()) / h.x())));
    int j0 = std::max(1, static_cast<int>(std::ceil((p.position.y() - cut - lo.y()) / h.y())));
    int j1 = std::min(n - 2, static_cast<int>(std::floor((p.position.y() + cut - lo.y()) / h.y())));
    int k0 = std::max(1, static_cast<int>(std::ceil((p.position.z() - cut - lo.z()) / h.z())));
    int k1 = std::min(n - 2, static_cast<int>(std::floor((p.position.z() + cut - lo.z()) / h.z())));
    for (int k = k0; k <= k1; ++k)
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) {
          Vec3 z = grid.node(i, j, k) - p.position;
          double q = z.squaredNorm() / (eps * eps);
          if (q > 36.0) continue;
          double phi = norm * std::exp(-q);
          // div(phi n) = grad(phi) . n = phi * (-2 z.n / eps^2)
          b[(static_cast<std::size_t>(k) * n + j) * n + i] +=
              p.area * phi * (-2.0 * z.dot(p.normal) / (eps * eps));
        }
  }

  // conjugate gradients on -lap(chi) = b, interior unknowns only
  double ihx2 = 1.0 / (h.x() * h.x()), ihy2 = 1.0 / (h.y() * h.y()), ihz2 = 1.0 / (h.z() * h.z());
  double diag = 2.0 * (ihx2 + ihy2 + ihz2);
  auto idx = [n](int i, int j, int k) {
    return (static_cast<std::size_t>(k) * n + j) * n + i;
  };
  auto apply = [&](const std::vector<double>& u, std::vector<double>& out) {
    for (int k = 1; k < n - 1; ++k)
      for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) {
          std::size_t c = idx(i, j, k);
          out[c] = diag * u[c] - ihx2 * (u[c - 1] + u[c + 1]) -
                   ihy2 * (u[c - n] + u[c + n]) -
                   ihz2 * (u[c - static_cast<std::size_t>(n) * n] +
                           u[c + static_cast<std::size_t>(n) * n]);
        }
  };
  auto dot = [&](const std::vector<double>& u, const std::vector<double>& v) {
    KahanSum s;
    for (int k = 1; k < n - 1; ++k)
      for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) {
          std::size_t c = idx(i, j, k);
          s.add(u[c] * v[c]);
        }
    return s.value();
  };

  std::vector<double> r = b, p = b, ap(total, 0.0);
  double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) return grid;
  double rr = dot(r, r);
  std::vector<double> history;
  int it = 0;
  for (; it < max_iterations; ++it) {
    double rel = std::sqrt(rr) / bnorm;
    if (it % 25 == 0) history.push_back(rel);
    if (rel <= tol) break;
    apply(p, ap);
    double alpha = rr / dot(p, ap);
    for (int k = 1; k < n - 1; ++k)
      for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) {
          std::size_t c = idx(i, j, k);
          grid.chi[c] += alpha * p[c];
          r[c] -= alpha * ap[c];
        }
    double rr_new = dot(r, r);
    double beta = rr_new / rr;
    rr = rr_new;
    for (int k = 1; k < n - 1; ++k)
      for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) {
          std::size_t c = idx(i, j, k);
          p[c] = r[c] + beta * p[c];
        }
  }
  grid.residual = std::sqrt(rr) / bnorm;
  grid.iterations = it;
  if (grid.residual > tol) {
    std::string msg = "psr_grid_solve: no convergence after " + std::to_string(it) +
                      " iterations; relative residuals:";
    std::size_t from = history.size() > 8 ? history.size() - 8 : 0;
    for (std::size_t i = from; i < history.size(); ++i)
      msg += " " + std::to_string(history[i]);
    throw NumericalError(msg);
  }
  return grid;
}

double vmf_concentration(double target) {
  if (target <= 0.0) return 0.0;
  if (target >= 1.0) throw DataError("vmf_concentration: mean resultant length must be < 1");
  auto A = [](double k) { return 1.0 / std::tanh(k) - 1.0 / k; };
  double lo = 1e-12, hi = 1.0;
  while (A(hi) < target) {
    hi *= 2.0;
    if (hi > 1e12) return hi;
  }
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (A(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

Vec3 sample_vmf(const Vec3& mean, double kappa, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double w;
  if (kappa < 1e-8) {
    w = 2.0 * uni(rng) - 1.0;
  } else {
    double u = uni(rng);
    w = 1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa;
    w = std::clamp(w, -1.0, 1.0);
  }
  double phi = 2.0 * kPi * uni(rng);
  double s = std::sqrt(std::max(0.0, 1.0 - w * w));
  Vec3 t1 = std::fabs(mean.z()) < 0.9 ? mean.cross(Vec3(0, 0, 1)).normalized()
                                      : mean.cross(Vec3(1, 0, 0)).normalized();
  Vec3 t2 = mean.cross(t1);
  return w * mean + s * (std::cos(phi) * t1 + std::sin(phi) * t2);
}

}  // namespace

std::vector<McEstimate> stochastic_winding_mc(const OrientedPointCloud& cloud, double epsilon,
                                              const std::vector<Vec3>& queries, int trials,
                                              std::uint64_t seed) {
  if (trials < 1) throw DataError("stochastic_winding_mc: trials must be >= 1");
  const double pos_std = epsilon / std::sqrt(2.0);
  std::vector<double> kappa(cloud.size());
  std::vector<bool> degenerate(cloud.size());
  for (std::size_t m = 0; m < cloud.size(); ++m) {
    double beta = cloud.points[m].geometry_moment;
    degenerate[m] = beta >= 1.0 - 1e-12;
    kappa[m] = degenerate[m] ? 0.0 : vmf_concentration(beta);
  }
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<McEstimate> out(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const Vec3& x = queries[qi];
    KahanSum sum, sumsq;
    for (int t = 0; t < trials; ++t) {
      double w = 0.0;
      for (std::size_t m = 0; m < cloud.size(); ++m) {
        const OrientedPoint& p = cloud.points[m];
        Vec3 xt, d;
        double r2;
        do {
          xt = p.position + pos_std * Vec3(gauss(rng), gauss(rng), gauss(rng));
          d = xt - x;
          r2 = d.squaredNorm();
        } while (r2 < 1e-24);
        Vec3 nt = degenerate[m] ? p.normal : sample_vmf(p.normal, kappa[m], rng);
        w += p.area * kInvFourPi * nt.dot(d) / (r2 * std::sqrt(r2));
      }
      sum.add(w);
      sumsq.add(w * w);
    }
    double mean = sum.value() / trials;
    double var = std::max(0.0, sumsq.value() / trials - mean * mean);
    out[qi].mean = mean;
    out[qi].std_error = trials > 1 ? std::sqrt(var / (trials - 1)) : 0.0;
  }
  return out;
}

std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& fn,
                                      const std::vector<double>& point, double h) {
  std::vector<double> grad(point.size());
  std::vector<double> p = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    p[i] = point[i] + h;
    double fp = fn(p);
    p[i] = point[i] - h;
    double fm = fn(p);
    p[i] = point[i];
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw DataError("chamfer_distance: empty point set");
  KdTree ta(a), tb(b);
  KahanSum sa, sb;
  for (const Vec3& p : a) sa.add(tb.nearest_distance(p));
  for (const Vec3& p : b) sb.add(ta.nearest_distance(p));
  return 0.5 * (sa.value() / a.size() + sb.value() / b.size());
}

double mean_value_interpolant(const OrientedPointCloud& cloud, const Vec3& x, int channel,
                              const KernelParams& params) {
  double w = naive_dipole_sum(cloud, x, params, 0);
  if (std::fabs(w) <= 1e-9)
    throw NumericalError("mean_value_interpolant: winding number vanishes at the query");
  return naive_dipole_sum(cloud, x, params, channel) / w;
}

}  // namespace dipole
