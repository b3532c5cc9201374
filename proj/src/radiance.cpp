#include "dipole/radiance.hpp"

#include <cmath>

namespace dipole {

std::array<double, kShDim> sh_encode(const Vec3& omega) {
  double x = omega.x(), y = omega.y(), z = omega.z();
  double x2 = x * x, y2 = y * y, z2 = z * z;
  return {
      0.28209479177387814,
      0.4886025119029199 * y,
      0.4886025119029199 * z,
      0.4886025119029199 * x,
      1.0925484305920792 * x * y,
      1.0925484305920792 * y * z,
      0.31539156525252005 * (3.0 * z2 - 1.0),
      1.0925484305920792 * x * z,
      0.5462742152960396 * (x2 - y2),
      0.5900435899266435 * y * (3.0 * x2 - y2),
      2.890611442640554 * x * y * z,
      0.4570457994644658 * y * (5.0 * z2 - 1.0),
      0.3731763325901154 * z * (5.0 * z2 - 3.0),
      0.4570457994644658 * x * (5.0 * z2 - 1.0),
      1.445305721320277 * z * (x2 - y2),
      0.5900435899266435 * x * (x2 - 3.0 * y2),
  };
}

double logistic(double x) {
  // symmetric form, stable for both signs
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

void Mlp::init(std::vector<int> layer_sizes, Rng& rng, double scale) {
  sizes = std::move(layer_sizes);
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    n += static_cast<std::size_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
  w.assign(n, 0.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    int rows = sizes[l + 1], cols = sizes[l];
    // He initialization unless a fixed scale is forced
    double s = scale > 0 ? scale : std::sqrt(2.0 / cols);
    for (int i = 0; i < rows * cols; ++i) w[off + i] = s * gauss(rng);
    off += static_cast<std::size_t>(rows) * cols + rows;  // biases stay zero
  }
}

std::vector<double> Mlp::forward(const std::vector<double>& input, Tape* tape) const {
  if (static_cast<int>(input.size()) != sizes.front())
    throw DataError("Mlp::forward: input size mismatch");
  std::vector<double> cur = input;
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(cur);
  }
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    int rows = sizes[l + 1], cols = sizes[l];
    std::vector<double> next(rows);
    for (int i = 0; i < rows; ++i) {
      double acc = w[off + static_cast<std::size_t>(rows) * cols + i];  // bias
      const double* wi = &w[off + static_cast<std::size_t>(i) * cols];
      for (int j = 0; j < cols; ++j) acc += wi[j] * cur[j];
      bool last = l + 2 == sizes.size();
      next[i] = last ? acc : std::max(0.0, acc);
    }
    cur = std::move(next);
    off += static_cast<std::size_t>(rows) * cols + rows;
    if (tape) tape->activations.push_back(cur);
  }
  return cur;
}

std::vector<double> Mlp::backward(const Tape& tape, const std::vector<double>& d_out,
                                  std::vector<double>& d_w) const {
  if (tape.activations.size() != sizes.size())
    throw DataError("Mlp::backward: tape/layer mismatch");
  if (d_w.size() != w.size()) throw DataError("Mlp::backward: d_w size mismatch");
  std::vector<double> delta = d_out;
  // layer weight offsets, front to back
  std::vector<std::size_t> offs(sizes.size() - 1);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    offs[l] = off;
    off += static_cast<std::size_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
  }
  for (std::size_t l = sizes.size() - 1; l-- > 0;) {
    int rows = sizes[l + 1], cols = sizes[l];
    const std::vector<double>& in = tape.activations[l];
    const std::vector<double>& out = tape.activations[l + 1];
    bool last = l + 2 == sizes.size();
    if (!last)
      for (int i = 0; i < rows; ++i)
        if (out[i] <= 0.0) delta[i] = 0.0;  // ReLU gate
    std::vector<double> d_in(cols, 0.0);
    for (int i = 0; i < rows; ++i) {
      double di = delta[i];
      double* dwi = &d_w[offs[l] + static_cast<std::size_t>(i) * cols];
      const double* wi = &w[offs[l] + static_cast<std::size_t>(i) * cols];
      for (int j = 0; j < cols; ++j) {
        dwi[j] += di * in[j];
        d_in[j] += di * wi[j];
      }
      d_w[offs[l] + static_cast<std::size_t>(rows) * cols + i] += di;  // bias
    }
    delta = std::move(d_in);
  }
  return delta;
}

void RadianceHead::init_mlp(const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes;
  sizes.push_back(mlp_input_dim());
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(output_dim());
  mlp.init(std::move(sizes), rng);
}

RadianceHead::Eval RadianceHead::eval(const Vec3& x, const Vec3& omega, const Vec3& normal,
                                      const std::vector<double>& appearance) const {
  if (static_cast<int>(appearance.size()) != k_appearance)
    throw DataError("RadianceHead::eval: appearance channel count mismatch");
  Eval ev;
  if (variant == HeadVariant::DirectRgb) {
    if (k_appearance < 3) throw DataError("direct-rgb head needs at least 3 appearance channels");
    ev.raw.assign(appearance.begin(), appearance.begin() + 3);
    for (int c = 0; c < 3; ++c) ev.rgb[c] = logistic(ev.raw[c]);
    if (with_albedo) {
      if (k_appearance < 6)
        throw DataError("direct-rgb head with albedo needs 6 appearance channels");
      for (int c = 0; c < 3; ++c) {
        ev.raw.push_back(appearance[3 + c]);
        ev.albedo[c] = logistic(appearance[3 + c]);
      }
    }
    return ev;
  }
  std::vector<double> input;
  input.reserve(mlp_input_dim());
  for (int c = 0; c < 3; ++c) input.push_back(x[c]);
  for (double s : sh_encode(omega)) input.push_back(s);
  for (int c = 0; c < 3; ++c) input.push_back(normal[c]);
  input.insert(input.end(), appearance.begin(), appearance.end());
  ev.raw = mlp.forward(input, &ev.tape);
  for (int c = 0; c < 3; ++c) ev.rgb[c] = logistic(ev.raw[c]);
  if (with_albedo)
    for (int c = 0; c < 3; ++c) ev.albedo[c] = logistic(ev.raw[3 + c]);
  return ev;
}

RadianceHead::InputGrads RadianceHead::backward(const Eval& ev, const Vec3& d_rgb,
                                                const Vec3& d_albedo,
                                                std::vector<double>& d_w) const {
  InputGrads g;
  g.d_appearance.assign(k_appearance, 0.0);
  std::vector<double> d_raw(output_dim(), 0.0);
  for (int c = 0; c < 3; ++c) d_raw[c] = d_rgb[c] * ev.rgb[c] * (1.0 - ev.rgb[c]);
  if (with_albedo)
    for (int c = 0; c < 3; ++c)
      d_raw[3 + c] = d_albedo[c] * ev.albedo[c] * (1.0 - ev.albedo[c]);
  if (variant == HeadVariant::DirectRgb) {
    for (int c = 0; c < 3; ++c) g.d_appearance[c] = d_raw[c];
    if (with_albedo)
      for (int c = 0; c < 3; ++c) g.d_appearance[3 + c] = d_raw[3 + c];
    return g;
  }
  std::vector<double> d_in = mlp.backward(ev.tape, d_raw, d_w);
  for (int c = 0; c < 3; ++c) g.d_normal[c] = d_in[3 + kShDim + c];
  for (int c = 0; c < k_appearance; ++c) g.d_appearance[c] = d_in[3 + kShDim + 3 + c];
  return g;
}

}  // namespace dipole
