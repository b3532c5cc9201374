#include "dipole/bhtree.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <fstream>
#include <numeric>

namespace dipole {

void GradientBuffer::reset() {
  std::fill(node_v.begin(), node_v.end(), Vec3::Zero());
  std::fill(node_s.begin(), node_s.end(), 0.0);
  std::fill(point_mu.begin(), point_mu.end(), 0.0);
  std::fill(point_n.begin(), point_n.end(), Vec3::Zero());
  d_epsilon = 0.0;
  dirty = false;
}

void DipoleTree::refresh_point_data(const OrientedPointCloud& cloud) {
  std::size_t m = cloud.size();
  pos_.resize(m);
  normal_.resize(m);
  area_.resize(m);
  mu_.resize(m * static_cast<std::size_t>(channels_));
  for (std::size_t i = 0; i < m; ++i) {
    const OrientedPoint& p = cloud.points[i];
    pos_[i] = p.position;
    normal_[i] = p.normal;
    area_[i] = p.area;
    mu_[i * channels_] = p.geometry_moment;
    for (int c = 1; c < channels_; ++c) mu_[i * channels_ + c] = p.appearance_moments[c - 1];
  }
}

void DipoleTree::build_structure() {
  std::size_t m = point_count_;
  nodes_.clear();
  point_order_.resize(m);
  std::iota(point_order_.begin(), point_order_.end(), 0);
  point_leaf_.assign(m, -1);

  Vec3 lo = pos_[0], hi = pos_[0];
  for (const Vec3& p : pos_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Vec3 root_center = 0.5 * (lo + hi);
  double root_half = 0.5 * (hi - lo).maxCoeff();
  root_half = root_half > 0 ? root_half * (1.0 + 1e-7) : 1.0;

  struct Task {
    int node;
    Vec3 center;
    double half;
    int depth;
  };
  TreeNode root;
  root.begin = 0;
  root.end = static_cast<int>(m);
  nodes_.push_back(root);
  std::deque<Task> queue;
  queue.push_back({0, root_center, root_half, 0});
  std::array<std::vector<int>, 8> bucket;
  while (!queue.empty()) {
    Task t = queue.front();
    queue.pop_front();
    int begin = nodes_[t.node].begin, end = nodes_[t.node].end;
    if (end - begin <= max_leaf_size_ || t.depth >= max_depth_) {
      nodes_[t.node].leaf = true;
      continue;
    }
    for (auto& b : bucket) b.clear();
    for (int j = begin; j < end; ++j) {
      int p = point_order_[j];
      const Vec3& q = pos_[p];
      int o = (q.x() >= t.center.x() ? 1 : 0) | (q.y() >= t.center.y() ? 2 : 0) |
              (q.z() >= t.center.z() ? 4 : 0);
      bucket[o].push_back(p);
    }
    int write = begin;
    int child_begin = static_cast<int>(nodes_.size());
    int child_count = 0;
    for (int o = 0; o < 8; ++o) {
      if (bucket[o].empty()) continue;
      TreeNode child;
      child.begin = write;
      for (int p : bucket[o]) point_order_[write++] = p;
      child.end = write;
      child.parent = t.node;
      int ci = static_cast<int>(nodes_.size());
      nodes_.push_back(child);
      Vec3 cc = t.center + 0.5 * t.half *
                               Vec3(o & 1 ? 1 : -1, o & 2 ? 1 : -1, o & 4 ? 1 : -1);
      queue.push_back({ci, cc, 0.5 * t.half, t.depth + 1});
      ++child_count;
    }
    nodes_[t.node].child_begin = child_begin;
    nodes_[t.node].child_count = child_count;
  }
  for (const TreeNode& nd : nodes_)
    if (nd.leaf)
      for (int j = nd.begin; j < nd.end; ++j)
        point_leaf_[point_order_[j]] = static_cast<int>(&nd - nodes_.data());
}

void DipoleTree::compute_node_geometry() {
  for (TreeNode& nd : nodes_) {
    if (nd.end - nd.begin == 1) {
      // bitwise-exact attributes for single-point nodes
      int p = point_order_[nd.begin];
      nd.area = area_[p];
      nd.centroid = pos_[p];
      nd.radius = 0.0;
      continue;
    }
    double asum = 0;
    Vec3 psum = Vec3::Zero();
    Vec3 mean = Vec3::Zero();
    for (int j = nd.begin; j < nd.end; ++j) {
      int p = point_order_[j];
      asum += area_[p];
      psum += area_[p] * pos_[p];
      mean += pos_[p];
    }
    nd.area = asum;
    nd.centroid = asum > 0 ? Vec3(psum / asum)
                           : Vec3(mean / static_cast<double>(nd.end - nd.begin));
    double r2max = 0;
    for (int j = nd.begin; j < nd.end; ++j)
      r2max = std::max(r2max, (pos_[point_order_[j]] - nd.centroid).squaredNorm());
    nd.radius = std::sqrt(r2max);
  }
}

void DipoleTree::compute_node_moments() {
  const int C = channels_;
  moments_v_.assign(nodes_.size() * C, Vec3::Zero());
  moments_s_.assign(nodes_.size() * C, 0.0);
  for (std::size_t ni = 0; ni < nodes_.size(); ++ni) {
    const TreeNode& nd = nodes_[ni];
    if (!(nd.area > 0)) continue;
    for (int j = nd.begin; j < nd.end; ++j) {
      int p = point_order_[j];
      for (int c = 0; c < C; ++c) {
        double am = area_[p] * mu_[p * C + c];
        moments_v_[ni * C + c] += am * normal_[p];
        moments_s_[ni * C + c] += am;
      }
    }
    for (int c = 0; c < C; ++c) {
      moments_v_[ni * C + c] /= nd.area;
      moments_s_[ni * C + c] /= nd.area;
    }
  }
}

void DipoleTree::build(const OrientedPointCloud& cloud, int max_leaf_size, int max_depth) {
  if (cloud.empty()) throw DataError("DipoleTree::build: empty cloud");
  point_count_ = cloud.size();
  channels_ = 1 + cloud.k_appearance;
  max_leaf_size_ = std::max(1, max_leaf_size);
  max_depth_ = std::max(0, max_depth);
  channel_kernels_.assign(channels_, ChannelKernel::Dipole);
  refresh_point_data(cloud);
  build_structure();
  compute_node_geometry();
  compute_node_moments();
}

void DipoleTree::update_moments(const OrientedPointCloud& cloud) {
  if (cloud.size() != point_count_ || 1 + cloud.k_appearance != channels_)
    throw DataError("DipoleTree::update_moments: cloud/tree size mismatch");
  refresh_point_data(cloud);
  compute_node_moments();
}

void DipoleTree::set_channel_kernels(std::vector<ChannelKernel> kernels) {
  if (static_cast<int>(kernels.size()) != channels_)
    throw DataError("DipoleTree::set_channel_kernels: channel count mismatch");
  channel_kernels_ = std::move(kernels);
}

namespace {
constexpr int kStackCapacity = 2048;  // > 7 * max_depth + 8 for any supported depth
}

void DipoleTree::primal(const Vec3& x, const KernelParams& params, double beta_bh,
                        std::span<double> out, long* visited) const {
  const int C = channels_;
  for (int c = 0; c < C; ++c) out[c] = 0.0;
  if (nodes_.empty()) return;
  double beta2 = beta_bh * beta_bh;
  bool singular = params.epsilon <= 0.0 && !params.desingularized;
  std::array<int, kStackCapacity> stack;
  int sp = 0;
  stack[sp++] = 0;
  while (sp) {
    int ni = stack[--sp];
    const TreeNode& nd = nodes_[ni];
    if (visited) ++*visited;
    Vec3 d = nd.centroid - x;
    double dist2 = d.squaredNorm();
    if (dist2 > beta2 * nd.radius * nd.radius) {
      if (!(nd.area > 0)) continue;
      RadialCoeffs k = kernel_coeffs(std::sqrt(dist2), params, 0);
      double A = nd.area * kInvFourPi;
      for (int c = 0; c < C; ++c) {
        if (channel_kernels_[c] == ChannelKernel::Dipole)
          out[c] += A * k.W * moments_v_[ni * C + c].dot(d);
        else
          out[c] += A * k.R * moments_s_[ni * C + c];
      }
    } else if (nd.leaf) {
      for (int j = nd.begin; j < nd.end; ++j) {
        int p = point_order_[j];
        Vec3 dm = pos_[p] - x;
        double r2 = dm.squaredNorm();
        if (r2 == 0.0 && singular) continue;
        RadialCoeffs k = kernel_coeffs(std::sqrt(r2), params, 0);
        double A = area_[p] * kInvFourPi;
        double ndot = normal_[p].dot(dm);
        for (int c = 0; c < C; ++c) {
          if (channel_kernels_[c] == ChannelKernel::Dipole)
            out[c] += A * mu_[p * C + c] * k.W * ndot;
          else
            out[c] += A * mu_[p * C + c] * k.R;
        }
      }
    } else {
      for (int c = 0; c < nd.child_count; ++c) stack[sp++] = nd.child_begin + c;
    }
  }
}

double DipoleTree::primal_channel(const Vec3& x, const KernelParams& params, double beta_bh,
                                  int channel, long* visited) const {
  const int C = channels_;
  double out = 0.0;
  if (nodes_.empty()) return out;
  bool dipole = channel_kernels_[channel] == ChannelKernel::Dipole;
  double beta2 = beta_bh * beta_bh;
  bool singular = params.epsilon <= 0.0 && !params.desingularized;
  std::array<int, kStackCapacity> stack;
  int sp = 0;
  stack[sp++] = 0;
  while (sp) {
    int ni = stack[--sp];
    const TreeNode& nd = nodes_[ni];
    if (visited) ++*visited;
    Vec3 d = nd.centroid - x;
    double dist2 = d.squaredNorm();
    if (dist2 > beta2 * nd.radius * nd.radius) {
      if (!(nd.area > 0)) continue;
      RadialCoeffs k = kernel_coeffs(std::sqrt(dist2), params, 0);
      double A = nd.area * kInvFourPi;
      out += dipole ? A * k.W * moments_v_[ni * C + channel].dot(d)
                    : A * k.R * moments_s_[ni * C + channel];
    } else if (nd.leaf) {
      for (int j = nd.begin; j < nd.end; ++j) {
        int p = point_order_[j];
        Vec3 dm = pos_[p] - x;
        double r2 = dm.squaredNorm();
        if (r2 == 0.0 && singular) continue;
        RadialCoeffs k = kernel_coeffs(std::sqrt(r2), params, 0);
        double A = area_[p] * kInvFourPi * mu_[p * C + channel];
        out += dipole ? A * k.W * normal_[p].dot(dm) : A * k.R;
      }
    } else {
      for (int c = 0; c < nd.child_count; ++c) stack[sp++] = nd.child_begin + c;
    }
  }
  return out;
}

void DipoleTree::primal_with_gradient(const Vec3& x, const KernelParams& params, double beta_bh,
                                      std::span<double> out, std::span<Vec3> grad_out,
                                      long* visited) const {
  const int C = channels_;
  for (int c = 0; c < C; ++c) {
    out[c] = 0.0;
    grad_out[c] = Vec3::Zero();
  }
  if (nodes_.empty()) return;
  double beta2 = beta_bh * beta_bh;
  std::array<int, kStackCapacity> stack;
  int sp = 0;
  stack[sp++] = 0;
  while (sp) {
    int ni = stack[--sp];
    const TreeNode& nd = nodes_[ni];
    if (visited) ++*visited;
    Vec3 d = nd.centroid - x;
    double dist2 = d.squaredNorm();
    if (dist2 > beta2 * nd.radius * nd.radius) {
      if (!(nd.area > 0)) continue;
      RadialCoeffs k = kernel_coeffs(std::sqrt(dist2), params, 1);
      double A = nd.area * kInvFourPi;
      for (int c = 0; c < C; ++c) {
        if (channel_kernels_[c] == ChannelKernel::Dipole) {
          const Vec3& v = moments_v_[ni * C + c];
          double vd = v.dot(d);
          out[c] += A * k.W * vd;
          grad_out[c] -= A * (k.W * v + k.Wp_r * vd * d);
        } else {
          double s = moments_s_[ni * C + c];
          out[c] += A * k.R * s;
          grad_out[c] -= A * k.Rp_r * s * d;
        }
      }
    } else if (nd.leaf) {
      for (int j = nd.begin; j < nd.end; ++j) {
        int p = point_order_[j];
        Vec3 dm = pos_[p] - x;
        double r2 = dm.squaredNorm();
        if (r2 == 0.0) continue;  // coincident query: value and gradient conventionally zero
        RadialCoeffs k = kernel_coeffs(std::sqrt(r2), params, 1);
        double ndot = normal_[p].dot(dm);
        for (int c = 0; c < C; ++c) {
          double A = area_[p] * kInvFourPi * mu_[p * C + c];
          if (channel_kernels_[c] == ChannelKernel::Dipole) {
            out[c] += A * k.W * ndot;
            grad_out[c] -= A * (k.W * normal_[p] + k.Wp_r * ndot * dm);
          } else {
            out[c] += A * k.R;
            grad_out[c] -= A * k.Rp_r * dm;
          }
        }
      }
    } else {
      for (int c = 0; c < nd.child_count; ++c) stack[sp++] = nd.child_begin + c;
    }
  }
}

GradientBuffer DipoleTree::make_buffer() const {
  GradientBuffer buf;
  buf.node_v.assign(nodes_.size() * channels_, Vec3::Zero());
  buf.node_s.assign(nodes_.size() * channels_, 0.0);
  buf.point_mu.assign(point_count_ * channels_, 0.0);
  buf.point_n.assign(point_count_, Vec3::Zero());
  return buf;
}

void DipoleTree::adjoint(const Vec3& x, const KernelParams& params, double beta_bh,
                         std::span<const double> d_out, std::span<const Vec3> d_grad,
                         GradientBuffer& buf) const {
  const int C = channels_;
  if (nodes_.empty()) return;
  buf.dirty = true;
  double beta2 = beta_bh * beta_bh;
  bool with_grad = !d_grad.empty();
  std::array<int, kStackCapacity> stack;
  int sp = 0;
  stack[sp++] = 0;
  while (sp) {
    int ni = stack[--sp];
    const TreeNode& nd = nodes_[ni];
    Vec3 d = nd.centroid - x;
    double dist2 = d.squaredNorm();
    if (dist2 > beta2 * nd.radius * nd.radius) {
      if (!(nd.area > 0)) continue;
      RadialCoeffs k = kernel_coeffs(std::sqrt(dist2), params, 2);
      double A = nd.area * kInvFourPi;
      for (int c = 0; c < C; ++c) {
        double ds = d_out[c];
        if (channel_kernels_[c] == ChannelKernel::Dipole) {
          Vec3 dv = A * k.W * ds * d;
          const Vec3& v = moments_v_[ni * C + c];
          buf.d_epsilon += ds * A * k.dW_de * v.dot(d);
          if (with_grad) {
            const Vec3& dg = d_grad[c];
            dv -= A * (k.W * dg + k.Wp_r * dg.dot(d) * d);
            buf.d_epsilon -= A * dg.dot(k.dW_de * v + k.dWp_r_de * v.dot(d) * d);
          }
          buf.node_v[ni * C + c] += dv;
        } else {
          buf.node_s[ni * C + c] += A * k.R * ds;
          buf.d_epsilon += ds * A * k.dR_de * moments_s_[ni * C + c];
        }
      }
    } else if (nd.leaf) {
      for (int j = nd.begin; j < nd.end; ++j) {
        int p = point_order_[j];
        Vec3 dm = pos_[p] - x;
        double r2 = dm.squaredNorm();
        if (r2 == 0.0) continue;  // forward contribution is identically zero there
        RadialCoeffs k = kernel_coeffs(std::sqrt(r2), params, 2);
        double ndot = normal_[p].dot(dm);
        for (int c = 0; c < C; ++c) {
          double ds = d_out[c];
          double mu = mu_[p * C + c];
          double A = area_[p] * kInvFourPi;
          if (channel_kernels_[c] == ChannelKernel::Dipole) {
            double dmu = ds * A * k.W * ndot;
            Vec3 dn = ds * A * mu * k.W * dm;
            buf.d_epsilon += ds * A * mu * k.dW_de * ndot;
            if (with_grad) {
              const Vec3& dg = d_grad[c];
              double gd = dg.dot(dm);
              dmu -= A * (k.W * dg.dot(normal_[p]) + k.Wp_r * ndot * gd);
              dn -= A * mu * (k.W * dg + k.Wp_r * gd * dm);
              buf.d_epsilon -= A * mu * (k.dW_de * dg.dot(normal_[p]) + k.dWp_r_de * ndot * gd);
            }
            buf.point_mu[p * C + c] += dmu;
            buf.point_n[p] += dn;
          } else {
            buf.point_mu[p * C + c] += ds * A * k.R;
            buf.d_epsilon += ds * A * mu * k.dR_de;
          }
        }
      }
    } else {
      for (int c = 0; c < nd.child_count; ++c) stack[sp++] = nd.child_begin + c;
    }
  }
}

PointGradients DipoleTree::flush_gradients(std::span<GradientBuffer> buffers) const {
  const int C = channels_;
  const std::size_t M = point_count_;
  PointGradients out;
  out.channels = C;
  out.moments.assign(M * C, 0.0);
  out.normals.assign(M, Vec3::Zero());

  std::vector<Vec3> node_v(nodes_.size() * C, Vec3::Zero());
  std::vector<double> node_s(nodes_.size() * C, 0.0);
  for (GradientBuffer& buf : buffers) {
    for (std::size_t i = 0; i < node_v.size(); ++i) {
      node_v[i] += buf.node_v[i];
      node_s[i] += buf.node_s[i];
    }
    for (std::size_t i = 0; i < M * static_cast<std::size_t>(C); ++i)
      out.moments[i] += buf.point_mu[i];
    for (std::size_t i = 0; i < M; ++i) out.normals[i] += buf.point_n[i];
    out.d_epsilon += buf.d_epsilon;
    buf.reset();
  }

  for (std::size_t m = 0; m < M; ++m) {
    double a = area_[m];
    const Vec3& n = normal_[m];
    for (int t = point_leaf_[m]; t >= 0; t = nodes_[t].parent) {
      if (!(nodes_[t].area > 0)) continue;
      double f = a / nodes_[t].area;
      for (int c = 0; c < C; ++c) {
        if (channel_kernels_[c] == ChannelKernel::Dipole) {
          const Vec3& g = node_v[t * C + c];
          out.moments[m * C + c] += f * n.dot(g);
          out.normals[m] += f * mu_[m * C + c] * g;
        } else {
          out.moments[m * C + c] += f * node_s[t * C + c];
        }
      }
    }
  }
  return out;
}

PointGradients DipoleTree::flush_gradients(GradientBuffer& buffer) const {
  return flush_gradients(std::span<GradientBuffer>(&buffer, 1));
}

void DipoleTree::dump(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("DipoleTree::dump: cannot open " + path);
  auto put = [&](const void* p, std::size_t n) { out.write(static_cast<const char*>(p), n); };
  out.write("DPLT", 4);
  std::uint32_t version = 1, channels = static_cast<std::uint32_t>(channels_);
  std::uint64_t points = point_count_, node_count = nodes_.size();
  put(&version, 4);
  put(&channels, 4);
  put(&points, 8);
  put(&node_count, 8);
  for (const TreeNode& nd : nodes_) {
    double g[5] = {nd.centroid.x(), nd.centroid.y(), nd.centroid.z(), nd.area, nd.radius};
    put(g, sizeof(g));
    std::int32_t s[5] = {nd.begin, nd.end, nd.child_begin, nd.child_count, nd.parent};
    put(s, sizeof(s));
    std::uint8_t leaf = nd.leaf ? 1 : 0;
    put(&leaf, 1);
  }
  for (int p : point_order_) {
    std::int32_t v = p;
    put(&v, 4);
  }
  for (const Vec3& v : moments_v_) {
    double g[3] = {v.x(), v.y(), v.z()};
    put(g, sizeof(g));
  }
  put(moments_s_.data(), moments_s_.size() * sizeof(double));
  if (!out) throw DataError("DipoleTree::dump: write failed for " + path);
}

}  // namespace dipole
