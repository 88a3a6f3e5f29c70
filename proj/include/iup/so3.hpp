#ifndef IUP_SO3_HPP
#define IUP_SO3_HPP

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <utility>

namespace iup {

template <typename S>
using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S>
using Vec3 = Eigen::Matrix<S, 3, 1>;

/// Pinhole intrinsics (pixels). K is upper triangular with unit bottom-right.
template <typename S>
struct CameraIntrinsics {
  S fx = S(1), fy = S(1), cx = S(0), cy = S(0);

  CameraIntrinsics() = default;
  CameraIntrinsics(S fx_, S fy_, S cx_, S cy_) : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {}

  Mat3<S> matrix() const {
    Mat3<S> k;
    k << fx, S(0), cx, S(0), fy, cy, S(0), S(0), S(1);
    return k;
  }
  Mat3<S> inverse() const {
    Mat3<S> ki;
    ki << S(1) / fx, S(0), -cx / fx, S(0), S(1) / fy, -cy / fy, S(0), S(0), S(1);
    return ki;
  }
};

/// Scene plane n.X = d in the first camera frame; n unit, d != 0.
template <typename S>
struct PlaneParams {
  Vec3<S> n = Vec3<S>(S(0), S(0), S(1));
  S d = S(1);
};

template <typename S>
Mat3<S> hat(const Vec3<S>& w) {
  Mat3<S> m;
  m << S(0), -w.z(), w.y(), w.z(), S(0), -w.x(), -w.y(), w.x(), S(0);
  return m;
}

template <typename S>
Vec3<S> vee(const Mat3<S>& m) {
  return Vec3<S>(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)) * S(0.5);
}

/// Rodrigues formula with a Taylor branch below 1e-6 rad.
template <typename S>
Mat3<S> exp_so3(const Vec3<S>& omega) {
  const S theta2 = omega.squaredNorm();
  const S theta = std::sqrt(theta2);
  S a, b;  // sin(t)/t and (1-cos(t))/t^2
  if (theta < S(1e-6)) {
    a = S(1) - theta2 / S(6);
    b = S(0.5) - theta2 / S(24);
  } else {
    a = std::sin(theta) / theta;
    b = (S(1) - std::cos(theta)) / theta2;
  }
  const Mat3<S> k = hat(omega);
  return Mat3<S>::Identity() + a * k + b * (k * k);
}

/// Log map via quaternion extraction (largest-component branch); returned
/// angle lies in [0, pi]. Stable through the near-pi region where the
/// trace-based axis formula degenerates.
template <typename S>
Vec3<S> log_so3(const Mat3<S>& r) {
  // Shepperd-style quaternion extraction.
  S qw, qx, qy, qz;
  const S tr = r.trace();
  if (tr > S(0)) {
    S s = std::sqrt(tr + S(1)) * S(2);
    qw = S(0.25) * s;
    qx = (r(2, 1) - r(1, 2)) / s;
    qy = (r(0, 2) - r(2, 0)) / s;
    qz = (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    S s = std::sqrt(S(1) + r(0, 0) - r(1, 1) - r(2, 2)) * S(2);
    qw = (r(2, 1) - r(1, 2)) / s;
    qx = S(0.25) * s;
    qy = (r(0, 1) + r(1, 0)) / s;
    qz = (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    S s = std::sqrt(S(1) + r(1, 1) - r(0, 0) - r(2, 2)) * S(2);
    qw = (r(0, 2) - r(2, 0)) / s;
    qx = (r(0, 1) + r(1, 0)) / s;
    qy = S(0.25) * s;
    qz = (r(1, 2) + r(2, 1)) / s;
  } else {
    S s = std::sqrt(S(1) + r(2, 2) - r(0, 0) - r(1, 1)) * S(2);
    qw = (r(1, 0) - r(0, 1)) / s;
    qx = (r(0, 2) + r(2, 0)) / s;
    qy = (r(1, 2) + r(2, 1)) / s;
    qz = S(0.25) * s;
  }
  if (qw < S(0)) {
    qw = -qw;
    qx = -qx;
    qy = -qy;
    qz = -qz;
  }
  const S vn = std::sqrt(qx * qx + qy * qy + qz * qz);
  if (vn < S(1e-12)) return Vec3<S>::Zero();
  const S angle = S(2) * std::atan2(vn, qw);
  return Vec3<S>(qx, qy, qz) * (angle / vn);
}

/// Clamp used for every arccos in the pipeline so the derivative stays finite.
template <typename S>
S clamp_acos_arg(S x) {
  const S lim = S(1) - S(1e-7);
  if (x > lim) return lim;
  if (x < -lim) return -lim;
  return x;
}

/// Geodesic distance arccos((tr(r1^T r2) - 1)/2), in [0, pi].
template <typename S>
S geodesic_angle(const Mat3<S>& r1, const Mat3<S>& r2) {
  const S t = ((r1.transpose() * r2).trace() - S(1)) * S(0.5);
  return std::acos(clamp_acos_arg(t));
}

/// Infinite homography K1 R K0^{-1}.
template <typename S>
Mat3<S> rotational_homography(const CameraIntrinsics<S>& k0, const CameraIntrinsics<S>& k1,
                              const Mat3<S>& r) {
  return k1.matrix() * r * k0.inverse();
}

/// Plane-induced homography K1 (R + t n^T / d) K0^{-1}.
template <typename S>
Mat3<S> plane_homography(const CameraIntrinsics<S>& k0, const CameraIntrinsics<S>& k1,
                         const Mat3<S>& r, const Vec3<S>& t, const PlaneParams<S>& plane) {
  if (plane.d == S(0)) throw std::invalid_argument("plane_homography: plane distance d must be nonzero");
  return k1.matrix() * (r + (t * plane.n.transpose()) / plane.d) * k0.inverse();
}

/// Multiplicative split H = Ht * Hinf with Ht = K1 (I + t n^T R^{-1} / d) K1^{-1}.
/// Hinf carries the K0 pairing; the product reproduces plane_homography.
template <typename S>
std::pair<Mat3<S>, Mat3<S>> factor_homography(const CameraIntrinsics<S>& k0,
                                              const CameraIntrinsics<S>& k1, const Mat3<S>& r,
                                              const Vec3<S>& t, const PlaneParams<S>& plane) {
  if (plane.d == S(0)) throw std::invalid_argument("factor_homography: plane distance d must be nonzero");
  const Mat3<S> ht =
      k1.matrix() * (Mat3<S>::Identity() + (t * plane.n.transpose() * r.transpose()) / plane.d) *
      k1.inverse();
  const Mat3<S> hinf = rotational_homography(k0, k1, r);
  return {ht, hinf};
}

/// Divide a projective matrix by its entry of largest magnitude (sign kept
/// positive) so scale-ambiguous homographies can be compared directly.
template <typename S>
Mat3<S> normalize_homography(const Mat3<S>& h) {
  Eigen::Index i, j;
  h.cwiseAbs().maxCoeff(&i, &j);
  const S v = h(i, j);
  if (v == S(0)) return h;
  return h / v;
}

/// R = Rr Rc,  Sigma = Sr + Rr Sc Rr^T.
template <typename S>
std::pair<Mat3<S>, Mat3<S>> fuse_rotations(const Mat3<S>& rc, const Mat3<S>& sc,
                                           const Mat3<S>& rr, const Mat3<S>& sr) {
  const Mat3<S> r = rr * rc;
  const Mat3<S> sigma = sr + rr * sc * rr.transpose();
  return {r, sigma};
}

/// Per-pixel canonical-plane coordinates ((u-cx)/fx, (v-cy)/fy); row v of
/// each returned map holds image row v.
template <typename S>
std::pair<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>,
          Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>
normalize_coords(const CameraIntrinsics<S>& k, int height, int width) {
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> xm(height, width), ym(height, width);
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u) {
      xm(v, u) = (S(u) - k.cx) / k.fx;
      ym(v, u) = (S(v) - k.cy) / k.fy;
    }
  return {xm, ym};
}

}  // namespace iup

#endif
