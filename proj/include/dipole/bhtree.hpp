#pragma once

#include <span>

#include "dipole/kernels.hpp"
#include "dipole/pointcloud.hpp"

namespace dipole {

// Per-channel interpolation kernel. Geometry uses the full dipole
// (normal-foreshortened) kernel; appearance channels may skip the
// foreshortening term and use the unsigned radial falloff.
enum class ChannelKernel { Dipole, Radial };

struct TreeNode {
  Vec3 centroid = Vec3::Zero();  // area-weighted centroid of the leaf set
  double area = 0.0;             // summed area of the leaf set
  double radius = 0.0;           // max distance of a leaf point to the centroid
  int begin = 0, end = 0;        // point range (indices into point_order)
  int child_begin = 0;           // children are contiguous in the node array
  int child_count = 0;
  int parent = -1;
  bool leaf = false;
};

// Flushed per-point gradients for all moment channels plus the extras the
// adjoint traversal accumulates on the side (normals, epsilon).
struct PointGradients {
  int channels = 0;
  std::vector<double> moments;  // M x channels, row-major
  std::vector<Vec3> normals;    // M
  double d_epsilon = 0.0;

  double& moment(std::size_t point, int channel) { return moments[point * channels + channel]; }
  double moment(std::size_t point, int channel) const { return moments[point * channels + channel]; }
};

// Per-worker adjoint accumulator. Increments commute, so concurrent rays
// write into private buffers that flush() reduces in a fixed order.
struct GradientBuffer {
  std::vector<Vec3> node_v;     // nodes x channels, dipole-channel moment gradients
  std::vector<double> node_s;   // nodes x channels, radial-channel moment gradients
  std::vector<double> point_mu; // M x channels, exact leaf-term gradients
  std::vector<Vec3> point_n;    // M, exact leaf-term normal gradients
  double d_epsilon = 0.0;
  bool dirty = false;

  void reset();
};

class DipoleTree {
 public:
  static constexpr int kDefaultMaxLeafSize = 8;
  static constexpr int kDefaultMaxDepth = 20;

  // Octree over positions only; node moment attributes populated from the
  // current cloud attributes. Deterministic for identical clouds.
  void build(const OrientedPointCloud& cloud, int max_leaf_size = kDefaultMaxLeafSize,
             int max_depth = kDefaultMaxDepth);

  // Bottom-up refresh of all node moment attributes, O(M).
  void update_moments(const OrientedPointCloud& cloud);

  void set_channel_kernels(std::vector<ChannelKernel> kernels);
  const std::vector<ChannelKernel>& channel_kernels() const { return channel_kernels_; }

  int channels() const { return channels_; }
  std::size_t point_count() const { return point_count_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const std::vector<int>& point_order() const { return point_order_; }

  // Dipole sums for all channels at x in one traversal. A node farther than
  // beta_bh times its radius contributes its far-field approximation; leaves
  // contribute exact per-point kernel terms. `visited` counts traversed nodes.
  void primal(const Vec3& x, const KernelParams& params, double beta_bh, std::span<double> out,
              long* visited = nullptr) const;

  // Value-only fast path for one channel (ray probing).
  double primal_channel(const Vec3& x, const KernelParams& params, double beta_bh, int channel,
                        long* visited = nullptr) const;

  // Values and query-point gradients for all channels, one traversal.
  void primal_with_gradient(const Vec3& x, const KernelParams& params, double beta_bh,
                            std::span<double> out, std::span<Vec3> grad_out,
                            long* visited = nullptr) const;

  // Adjoint of primal / primal_with_gradient at the same (x, params, beta_bh):
  // d_out are output derivatives per channel, d_grad (optional) derivatives of
  // the per-channel query-point gradients. Increments node and leaf-point
  // accumulators in `buf` and the epsilon derivative. Radial channels accept
  // scalar adjoints only.
  void adjoint(const Vec3& x, const KernelParams& params, double beta_bh,
               std::span<const double> d_out, std::span<const Vec3> d_grad,
               GradientBuffer& buf) const;

  GradientBuffer make_buffer() const;

  // Second backpropagation stage: reduce the buffers, push node gradients down
  // ancestor chains to per-point attribute gradients, zero all accumulators.
  PointGradients flush_gradients(std::span<GradientBuffer> buffers) const;
  PointGradients flush_gradients(GradientBuffer& buffer) const;

  // Versioned little-endian dump ("DPLT" magic, u32 version, u64 counts, raw
  // node records) for the bench command.
  void dump(const std::string& path) const;

 private:
  void refresh_point_data(const OrientedPointCloud& cloud);
  void build_structure();   // breadth-first, so children of a node are contiguous
  void compute_node_geometry();
  void compute_node_moments();

  std::size_t point_count_ = 0;
  int channels_ = 1;
  int max_leaf_size_ = kDefaultMaxLeafSize;
  int max_depth_ = kDefaultMaxDepth;
  std::vector<TreeNode> nodes_;
  std::vector<int> point_order_;   // leaf ranges index this permutation
  std::vector<int> point_leaf_;    // leaf node of each cloud point
  std::vector<ChannelKernel> channel_kernels_;

  // SoA mirrors of the cloud, refreshed by update_moments
  std::vector<Vec3> pos_, normal_;
  std::vector<double> area_;
  std::vector<double> mu_;  // M x channels

  // node moment attributes
  std::vector<Vec3> moments_v_;   // nodes x channels
  std::vector<double> moments_s_; // nodes x channels
};

}  // namespace dipole
