#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dipole {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846264338327950288;
inline constexpr double kInvFourPi = 0.07957747154594766788444188168625718101;
inline constexpr double kSqrtPi = 1.77245385090551602729816748334114518;

// Kahan-compensated accumulator. Naive oracle sums use this so that the
// 1e-12 cross-checks against the tree are meaningful.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    double y = v - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic chunked parallel loop: chunk c is always processed by
// worker c % workers, so per-worker accumulations reduce in a fixed order
// regardless of scheduling.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t, int)>& body,
                  int workers = 0);

inline int default_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

using Rng = std::mt19937_64;

}  // namespace dipole
