#pragma once

#include <array>

#include "dipole/util.hpp"

namespace dipole {

// Real spherical harmonics of a unit direction up to degree 3 (16 values).
constexpr int kShDim = 16;
std::array<double, kShDim> sh_encode(const Vec3& omega);

double logistic(double x);

// Dense ReLU network with manual forward/backward. Weights are stored flat,
// layer by layer, each layer as a (rows x cols) matrix followed by the bias.
struct Mlp {
  std::vector<int> sizes;  // sizes[0] = input dim, back() = output dim
  std::vector<double> w;

  void init(std::vector<int> layer_sizes, Rng& rng, double scale = 0.0);
  std::size_t weight_count() const { return w.size(); }

  struct Tape {
    std::vector<std::vector<double>> activations;  // per layer, post-ReLU
  };

  // Raw linear outputs of the last layer (no squashing).
  std::vector<double> forward(const std::vector<double>& input, Tape* tape = nullptr) const;

  // Given d_out on the raw outputs, accumulate into d_w and return d_input.
  std::vector<double> backward(const Tape& tape, const std::vector<double>& d_out,
                               std::vector<double>& d_w) const;
};

enum class HeadVariant { DirectRgb, TinyMlp };

// Maps interpolated appearance channels (plus position, view direction and
// implicit normal for the MLP variant) to RGB in [0,1]^3, and optionally an
// albedo for the direct-illumination variant. Appearance channel gradients
// propagate back to the point cloud through the tree adjoint.
struct RadianceHead {
  HeadVariant variant = HeadVariant::DirectRgb;
  int k_appearance = 3;
  bool with_albedo = false;
  Mlp mlp;  // TinyMlp only

  // TinyMlp input: x (3) + sh(omega) (16) + normal (3) + appearance (K).
  int mlp_input_dim() const { return 3 + kShDim + 3 + k_appearance; }
  int output_dim() const { return with_albedo ? 6 : 3; }

  void init_mlp(const std::vector<int>& hidden, Rng& rng);

  struct Eval {
    Vec3 rgb = Vec3::Zero();
    Vec3 albedo = Vec3::Zero();
    Mlp::Tape tape;            // TinyMlp only
    std::vector<double> raw;   // pre-squash outputs
  };

  Eval eval(const Vec3& x, const Vec3& omega, const Vec3& normal,
            const std::vector<double>& appearance) const;

  // Backward of eval: accumulates head-weight gradients into d_w (sized
  // mlp.w.size(); unused for DirectRgb) and returns gradients w.r.t. the
  // appearance channels and the normal input.
  struct InputGrads {
    std::vector<double> d_appearance;
    Vec3 d_normal = Vec3::Zero();
  };
  InputGrads backward(const Eval& eval, const Vec3& d_rgb, const Vec3& d_albedo,
                      std::vector<double>& d_w) const;
};

}  // namespace dipole
