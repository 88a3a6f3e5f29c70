#ifndef IUP_WARP_HPP
#define IUP_WARP_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "iup/ops.hpp"
#include "iup/so3.hpp"
#include "iup/tensor.hpp"

namespace iup {

/// Source coordinates for resampling: coords is a {2,H,W} tensor holding
/// (x, y) in source feature units; valid marks cells whose source lies
/// inside [0, src_w-1] x [0, src_h-1].
template <typename S>
struct SamplingGrid {
  Tensor<S> coords;
  std::vector<uint8_t> valid;  // H*W
  int h = 0, w = 0;
};

namespace detail {

// Output cell (u,v) at stride s sits at full-image pixel ((u+0.5)s - 0.5).
template <typename S>
inline S cell_center(int u, S s) {
  return (S(u) + S(0.5)) * s - S(0.5);
}

}  // namespace detail

/// Differentiable grid generation. m maps homogeneous full-resolution
/// output pixels to source pixels (i.e. m = h^{-1} for a forward
/// homography h). Gradients flow into m; invalid cells contribute none.
template <typename S>
SamplingGrid<S> grid_from_matrix(const Tensor<S>& m, int out_h, int out_w, int src_h, int src_w,
                                 S scale = S(1)) {
  if (m.shape() != std::vector<int>{3, 3})
    throw TensorError("grid_from_matrix: expected {3,3}, got " + shape_str(m.shape()));
  SamplingGrid<S> grid;
  grid.h = out_h;
  grid.w = out_w;
  grid.valid.assign(static_cast<size_t>(out_h) * out_w, 0);
  auto n = iup::detail::make_node<S>("grid_from_matrix", {2, out_h, out_w}, m);
  const auto& mv = m.value();
  // Cached homogeneous coordinates for backward.
  auto hom = std::make_shared<std::vector<S>>(static_cast<size_t>(out_h) * out_w * 3, S(0));
  auto valid_copy = std::make_shared<std::vector<uint8_t>>();
  const size_t plane = static_cast<size_t>(out_h) * out_w;
  for (int v = 0; v < out_h; ++v)
    for (int u = 0; u < out_w; ++u) {
      const S px = detail::cell_center(u, scale);
      const S py = detail::cell_center(v, scale);
      const S q0 = mv[0] * px + mv[1] * py + mv[2];
      const S q1 = mv[3] * px + mv[4] * py + mv[5];
      const S q2 = mv[6] * px + mv[7] * py + mv[8];
      const size_t i = static_cast<size_t>(v) * out_w + u;
      (*hom)[i * 3 + 0] = q0;
      (*hom)[i * 3 + 1] = q1;
      (*hom)[i * 3 + 2] = q2;
      if (std::abs(q2) < S(1e-8)) continue;
      const S x = (q0 / q2 + S(0.5)) / scale - S(0.5);
      const S y = (q1 / q2 + S(0.5)) / scale - S(0.5);
      n->value[i] = x;
      n->value[plane + i] = y;
      if (x >= S(0) && x <= S(src_w - 1) && y >= S(0) && y <= S(src_h - 1)) grid.valid[i] = 1;
    }
  *valid_copy = grid.valid;
  n->backward = [out_h, out_w, scale, hom, valid_copy, plane](TensorNode<S>& self) {
    auto& gm = self.parents[0]->grad;
    for (int v = 0; v < out_h; ++v)
      for (int u = 0; u < out_w; ++u) {
        const size_t i = static_cast<size_t>(v) * out_w + u;
        if (!(*valid_copy)[i]) continue;
        const S gx = self.grad[i] / scale;
        const S gy = self.grad[plane + i] / scale;
        if (gx == S(0) && gy == S(0)) continue;
        const S px = detail::cell_center(u, scale);
        const S py = detail::cell_center(v, scale);
        const S q0 = (*hom)[i * 3 + 0], q1 = (*hom)[i * 3 + 1], q2 = (*hom)[i * 3 + 2];
        const S p[3] = {px, py, S(1)};
        for (int j = 0; j < 3; ++j) {
          gm[0 + j] += gx * p[j] / q2;
          gm[3 + j] += gy * p[j] / q2;
          gm[6 + j] += (-gx * q0 - gy * q1) * p[j] / (q2 * q2);
        }
      }
  };
  grid.coords = Tensor<S>(std::move(n));
  return grid;
}

/// Plain-matrix entry point matching the forward-homography convention:
/// the grid samples through h^{-1}.
template <typename S>
SamplingGrid<S> homography_grid(const Mat3<S>& h, int out_h, int out_w, int src_h, int src_w,
                                S scale = S(1)) {
  const S det = h.determinant();
  if (std::abs(det) < S(1e-12)) throw TensorError("homography_grid: singular homography");
  const Mat3<S> hinv = h.inverse();
  std::vector<S> mv(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) mv[static_cast<size_t>(i) * 3 + j] = hinv(i, j);
  return grid_from_matrix(Tensor<S>::from_vector({3, 3}, std::move(mv)), out_h, out_w, src_h,
                          src_w, scale);
}

/// Bilinear resampling with zero fill outside the valid mask. Gradients
/// reach both the features and the grid coordinates.
template <typename S>
Tensor<S> bilinear_sample(const Tensor<S>& features, const SamplingGrid<S>& grid) {
  if (features.shape().size() != 3)
    throw TensorError("bilinear_sample: expected CHW features, got " +
                      shape_str(features.shape()));
  const int c = features.shape()[0], sh = features.shape()[1], sw = features.shape()[2];
  const int oh = grid.h, ow = grid.w;
  auto n = iup::detail::make_node<S>("bilinear_sample", {c, oh, ow}, features, grid.coords);
  auto valid = std::make_shared<std::vector<uint8_t>>(grid.valid);
  const size_t plane = static_cast<size_t>(oh) * ow;
  const auto& fv = features.value();
  const auto& cv = grid.coords.value();
  for (int p = 0; p < oh * ow; ++p) {
    if (!(*valid)[p]) continue;
    const S x = cv[p], y = cv[plane + p];
    const int x0 = std::min(std::max(static_cast<int>(std::floor(x)), 0), sw > 1 ? sw - 2 : 0);
    const int y0 = std::min(std::max(static_cast<int>(std::floor(y)), 0), sh > 1 ? sh - 2 : 0);
    const S fx = x - S(x0), fy = y - S(y0);
    const int x1 = sw > 1 ? x0 + 1 : x0;
    const int y1 = sh > 1 ? y0 + 1 : y0;
    for (int ch = 0; ch < c; ++ch) {
      const size_t base = static_cast<size_t>(ch) * sh * sw;
      const S f00 = fv[base + static_cast<size_t>(y0) * sw + x0];
      const S f01 = fv[base + static_cast<size_t>(y0) * sw + x1];
      const S f10 = fv[base + static_cast<size_t>(y1) * sw + x0];
      const S f11 = fv[base + static_cast<size_t>(y1) * sw + x1];
      n->value[static_cast<size_t>(ch) * plane + p] =
          f00 * (S(1) - fx) * (S(1) - fy) + f01 * fx * (S(1) - fy) + f10 * (S(1) - fx) * fy +
          f11 * fx * fy;
    }
  }
  n->backward = [c, sh, sw, oh, ow, valid, plane](TensorNode<S>& self) {
    auto& gf = self.parents[0]->grad;
    auto& gc = self.parents[1]->grad;
    const auto& fv2 = self.parents[0]->value;
    const auto& cv2 = self.parents[1]->value;
    for (int p = 0; p < oh * ow; ++p) {
      if (!(*valid)[p]) continue;
      const S x = cv2[p], y = cv2[plane + p];
      const int x0 = std::min(std::max(static_cast<int>(std::floor(x)), 0), sw > 1 ? sw - 2 : 0);
      const int y0 = std::min(std::max(static_cast<int>(std::floor(y)), 0), sh > 1 ? sh - 2 : 0);
      const S fx = x - S(x0), fy = y - S(y0);
      const int x1 = sw > 1 ? x0 + 1 : x0;
      const int y1 = sh > 1 ? y0 + 1 : y0;
      S dx = S(0), dy = S(0);
      for (int ch = 0; ch < c; ++ch) {
        const S g = self.grad[static_cast<size_t>(ch) * plane + p];
        if (g == S(0)) continue;
        const size_t base = static_cast<size_t>(ch) * sh * sw;
        const size_t i00 = base + static_cast<size_t>(y0) * sw + x0;
        const size_t i01 = base + static_cast<size_t>(y0) * sw + x1;
        const size_t i10 = base + static_cast<size_t>(y1) * sw + x0;
        const size_t i11 = base + static_cast<size_t>(y1) * sw + x1;
        gf[i00] += g * (S(1) - fx) * (S(1) - fy);
        gf[i01] += g * fx * (S(1) - fy);
        gf[i10] += g * (S(1) - fx) * fy;
        gf[i11] += g * fx * fy;
        dx += g * ((fv2[i01] - fv2[i00]) * (S(1) - fy) + (fv2[i11] - fv2[i10]) * fy);
        dy += g * ((fv2[i10] - fv2[i00]) * (S(1) - fx) + (fv2[i11] - fv2[i01]) * fx);
      }
      gc[p] += dx;
      gc[plane + p] += dy;
    }
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
struct WarpResult {
  Tensor<S> features;
  std::vector<uint8_t> valid;
};

/// Warp features (stride `scale` below full resolution) by a rotation given
/// as a graph tensor {3,3}. The sampling matrix is K0 R^T K1^{-1}, so the
/// output is view-0 content aligned to view-1 under H_inf = K1 R K0^{-1}.
template <typename S>
WarpResult<S> warp_by_rotmat(const Tensor<S>& features, const CameraIntrinsics<S>& k0,
                             const CameraIntrinsics<S>& k1, const Tensor<S>& r, S scale = S(1)) {
  const Mat3<S> k0m = k0.matrix();
  const Mat3<S> k1i = k1.inverse();
  std::vector<S> k0v(9), k1v(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      k0v[static_cast<size_t>(i) * 3 + j] = k0m(i, j);
      k1v[static_cast<size_t>(i) * 3 + j] = k1i(i, j);
    }
  const Tensor<S> hinv = matmul(matmul(Tensor<S>::from_vector({3, 3}, std::move(k0v)),
                                       transpose2d(r)),
                                Tensor<S>::from_vector({3, 3}, std::move(k1v)));
  const int h = features.shape()[1], w = features.shape()[2];
  SamplingGrid<S> grid = grid_from_matrix(hinv, h, w, h, w, scale);
  WarpResult<S> out;
  out.features = bilinear_sample(features, grid);
  out.valid = std::move(grid.valid);
  return out;
}

/// Same with the rotation given as a differentiable axis-angle tensor {3}.
template <typename S>
WarpResult<S> warp_by_rotation(const Tensor<S>& features, const CameraIntrinsics<S>& k0,
                               const CameraIntrinsics<S>& k1, const Tensor<S>& axis_angle,
                               S scale = S(1)) {
  return warp_by_rotmat(features, k0, k1, exp_so3_t(axis_angle), scale);
}

}  // namespace iup

#endif
