#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <random>

#include "iup/so3.hpp"

using namespace iup;
using Mat = Mat3<double>;
using Vec = Vec3<double>;

namespace {

std::mt19937_64 rng(12345);

Vec random_omega(double max_angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, max_angle);
  Vec axis(n(rng), n(rng), n(rng));
  while (axis.norm() < 1e-6) axis = Vec(n(rng), n(rng), n(rng));
  return axis.normalized() * u(rng);
}

Mat rz(double a) {
  Mat m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}

CameraIntrinsics<double> random_k(std::uniform_real_distribution<double>& f,
                                  std::uniform_real_distribution<double>& c) {
  return {f(rng), f(rng), c(rng), c(rng)};
}

}  // namespace

TEST_CASE("hat closed forms") {
  CHECK(hat(Vec(0, 0, 0)).isZero(0.0));
  Mat z;
  z << 0, -1, 0, 1, 0, 0, 0, 0, 0;
  CHECK((hat(Vec(0, 0, 1)) - z).norm() == 0.0);
  const Mat m = hat(Vec(1, 2, 3));
  CHECK(m(0, 1) == -3);
  CHECK(m(0, 2) == 2);
  CHECK(m(1, 0) == 3);
  CHECK(m(1, 2) == -1);
  CHECK(m(2, 0) == -2);
  CHECK(m(2, 1) == 1);
  CHECK((m + m.transpose()).norm() == 0.0);
  // hat(w)v = w x v
  const Vec w(0.3, -1.2, 0.7), v(2.0, 0.5, -1.1);
  CHECK((hat(w) * v - w.cross(v)).norm() < 1e-15);
  CHECK((vee(hat(w)) - w).norm() == 0.0);
}

TEST_CASE("exp_so3 closed forms") {
  CHECK((exp_so3(Vec(0, 0, 0)) - Mat::Identity()).norm() == 0.0);
  CHECK((exp_so3(Vec(0, 0, M_PI / 2)) - rz(M_PI / 2)).norm() < 1e-15);
}

TEST_CASE("exp_so3 matches Eigen AngleAxis oracle") {
  for (int i = 0; i < 200; ++i) {
    const Vec w = random_omega(M_PI - 0.01);
    const Eigen::AngleAxisd aa(w.norm(), w.norm() > 0 ? Vec(w.normalized()) : Vec(0, 0, 1));
    CHECK((exp_so3(w) - aa.toRotationMatrix()).norm() < 1e-12);
  }
}

TEST_CASE("log_so3 closed forms and oracle") {
  CHECK(log_so3(Mat(Mat::Identity())).norm() == 0.0);
  CHECK((log_so3(rz(M_PI / 2)) - Vec(0, 0, M_PI / 2)).norm() < 1e-12);

  // near-pi: angle recovered through the quaternion branch
  const Vec axis = Vec(1, 1, 1).normalized();
  const double angle = M_PI - 1e-4;
  const Vec w = log_so3(exp_so3(Vec(axis * angle)));
  CHECK(std::abs(w.norm() - angle) < 1e-6);
  CHECK((w.normalized() - axis).norm() < 1e-6);

  for (int i = 0; i < 200; ++i) {
    const Vec wi = random_omega(M_PI - 0.01);
    const Eigen::Quaterniond q(exp_so3(wi));
    const double qa = 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
    CHECK(std::abs(log_so3(exp_so3(wi)).norm() - qa) < 1e-9);
  }
}

TEST_CASE("exp/log round trip, 1000 seeded rotations") {
  for (int i = 0; i < 1000; ++i) {
    const Vec w = random_omega(M_PI - 0.1);
    CHECK((log_so3(exp_so3(w)) - w).norm() < 1e-9);
  }
}

TEST_CASE("orthogonality of exp_so3 outputs") {
  for (int i = 0; i < 200; ++i) {
    const Mat r = exp_so3(random_omega(M_PI));
    CHECK((r.transpose() * r - Mat::Identity()).norm() < 1e-9);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("geodesic_angle basics") {
  // the clamped arccos argument keeps the angle at ~4.5e-4 even for equal inputs
  CHECK(geodesic_angle(Mat(Mat::Identity()), Mat(Mat::Identity())) < 5e-4);
  for (double th : {0.1, 0.7, 1.5, 2.9})
    CHECK(geodesic_angle(Mat(Mat::Identity()), rz(th)) == doctest::Approx(th).epsilon(1e-12));
  // clamped trace never yields NaN, stays at the small-angle scale
  const double a = std::acos(clamp_acos_arg(1.0 + 1e-12));
  CHECK(std::isfinite(a));
  CHECK(a < 1e-3);
  CHECK(a > 1e-4);
}

TEST_CASE("geodesic_angle symmetry and triangle inequality") {
  for (int i = 0; i < 200; ++i) {
    const Mat a = exp_so3(random_omega(M_PI - 0.1));
    const Mat b = exp_so3(random_omega(M_PI - 0.1));
    const Mat c = exp_so3(random_omega(M_PI - 0.1));
    CHECK(geodesic_angle(a, b) == doctest::Approx(geodesic_angle(b, a)).epsilon(1e-12));
    CHECK(geodesic_angle(a, c) <= geodesic_angle(a, b) + geodesic_angle(b, c) + 1e-8);
  }
}

TEST_CASE("rotational_homography closed forms") {
  const CameraIntrinsics<double> id{1, 1, 0, 0};
  CHECK((rotational_homography(id, id, Mat(Mat::Identity())) - Mat::Identity()).norm() == 0.0);
  const CameraIntrinsics<double> kf{500, 500, 0, 0};
  CHECK((rotational_homography(kf, kf, Mat(Mat::Identity())) - Mat::Identity()).norm() < 1e-12);
  CHECK((rotational_homography(id, id, rz(M_PI / 2)) - rz(M_PI / 2)).norm() < 1e-15);
}

TEST_CASE("rotational_homography group homomorphism") {
  std::uniform_real_distribution<double> f(100.0, 800.0), c(100.0, 500.0);
  for (int i = 0; i < 100; ++i) {
    const CameraIntrinsics<double> k = random_k(f, c);
    const Mat ra = exp_so3(random_omega(1.0)), rb = exp_so3(random_omega(1.0));
    const Mat lhs = rotational_homography(k, k, Mat(ra * rb));
    const Mat rhs = rotational_homography(k, k, ra) * rotational_homography(k, k, rb);
    CHECK((lhs - rhs).norm() / lhs.norm() < 1e-9);
  }
}

TEST_CASE("plane_homography basics") {
  std::uniform_real_distribution<double> f(100.0, 800.0), c(100.0, 500.0);
  const CameraIntrinsics<double> k0 = random_k(f, c), k1 = random_k(f, c);
  const Mat r = exp_so3(Vec(0.2, -0.1, 0.3));
  const PlaneParams<double> plane{Vec(0.1, -0.2, 0.97).normalized(), 3.0};

  CHECK((plane_homography(k0, k1, r, Vec(Vec::Zero()), plane) -
         rotational_homography(k0, k1, r))
            .norm() < 1e-12);

  PlaneParams<double> far = plane;
  far.d = 1e9;
  const Mat hfar = plane_homography(k0, k1, r, Vec(0.3, -0.2, 0.5), far);
  CHECK((hfar - rotational_homography(k0, k1, r)).norm() < 1e-6);

  PlaneParams<double> bad = plane;
  bad.d = 0.0;
  CHECK_THROWS_AS(plane_homography(k0, k1, r, Vec(Vec::Zero()), bad), std::invalid_argument);
}

TEST_CASE("plane_homography projection oracle") {
  // For X on the plane, H proj0(X) must be proportional to proj1(X).
  std::uniform_real_distribution<double> f(200.0, 600.0), c(100.0, 400.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const CameraIntrinsics<double> k0 = random_k(f, c), k1 = random_k(f, c);
    const Mat r = exp_so3(random_omega(0.5));
    const Vec t(u(rng), u(rng), u(rng));
    PlaneParams<double> plane;
    plane.n = Vec(0.3 * u(rng), 0.3 * u(rng), 1.0).normalized();
    plane.d = 2.0 + u(rng);
    const Mat h = plane_homography(k0, k1, r, t, plane);

    // in-plane basis
    const Vec e1 = plane.n.cross(Vec(1, 0, 0)).normalized();
    const Vec e2 = plane.n.cross(e1);
    for (int j = 0; j < 10; ++j) {
      const Vec x0 = plane.n * plane.d + e1 * u(rng) + e2 * u(rng);
      if (x0.z() < 0.1) continue;
      const Vec x1 = r * x0 + t;
      if (x1.z() < 0.1) continue;
      const Vec p0 = k0.matrix() * x0;
      const Vec p1 = k1.matrix() * x1;
      const Vec hp = h * p0;
      CHECK((hp / hp.z() - p1 / p1.z()).norm() < 1e-8);
    }
  }
}

TEST_CASE("factor_homography closed forms") {
  std::uniform_real_distribution<double> f(200.0, 600.0), c(100.0, 400.0);
  const CameraIntrinsics<double> k0 = random_k(f, c), k1 = random_k(f, c);
  const Mat r = exp_so3(Vec(0.1, 0.2, -0.3));
  const PlaneParams<double> plane{Vec(0.0, 0.1, 0.995).normalized(), 2.5};

  auto [ht0, hinf0] = factor_homography(k0, k1, r, Vec(Vec::Zero()), plane);
  CHECK((ht0 - Mat::Identity()).norm() < 1e-12);
  CHECK((hinf0 - rotational_homography(k0, k1, r)).norm() == 0.0);

  const CameraIntrinsics<double> id{1, 1, 0, 0};
  const Vec t(0.2, -0.4, 0.1);
  auto [ht1, hinf1] = factor_homography(id, id, Mat(Mat::Identity()), t, plane);
  CHECK((ht1 - (Mat::Identity() + t * plane.n.transpose() / plane.d)).norm() < 1e-12);
  CHECK((hinf1 - Mat::Identity()).norm() == 0.0);
}

TEST_CASE("factorization product identity, 500 random instances") {
  std::uniform_real_distribution<double> f(100.0, 900.0), c(50.0, 500.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const CameraIntrinsics<double> k0 = random_k(f, c), k1 = random_k(f, c);
    const Mat r = exp_so3(random_omega(2.5));
    const Vec t(u(rng), u(rng), u(rng));
    PlaneParams<double> plane;
    plane.n = Vec(u(rng), u(rng), 1.0 + 0.5 * u(rng)).normalized();
    plane.d = (u(rng) > 0 ? 1 : -1) * (1.0 + std::abs(u(rng)) * 4.0);
    auto [ht, hinf] = factor_homography(k0, k1, r, t, plane);
    const Mat prod = normalize_homography(Mat(ht * hinf));
    const Mat h = normalize_homography(plane_homography(k0, k1, r, t, plane));
    CHECK((prod - h).norm() / h.norm() < 1e-9);
  }
}

TEST_CASE("fuse_rotations identities") {
  const Mat rc = exp_so3(Vec(0.1, -0.2, 0.3));
  const Mat sc = Vec(0.5, 1.0, 2.0).asDiagonal();
  auto [r1, s1] = fuse_rotations(rc, sc, Mat(Mat::Identity()), Mat(Mat::Zero()));
  CHECK((r1 - rc).norm() == 0.0);
  CHECK((s1 - sc).norm() == 0.0);

  const Mat rr = exp_so3(Vec(-0.3, 0.1, 0.2));
  const Mat sr = Vec(0.1, 0.2, 0.3).asDiagonal();
  auto [r2, s2] = fuse_rotations(Mat(Mat::Identity()), Mat(Mat::Zero()), rr, sr);
  CHECK((r2 - rr).norm() == 0.0);
  CHECK((s2 - sr).norm() == 0.0);

  // 90-degree z-rotation permutes the x/y variances
  auto [r3, s3] = fuse_rotations(Mat(Mat::Identity()), Mat(Vec(1, 2, 3).asDiagonal()),
                                 rz(M_PI / 2), Mat(Mat::Zero()));
  CHECK((s3.diagonal() - Vec(2, 1, 3)).norm() < 1e-12);
  CHECK((r3 - rz(M_PI / 2)).norm() == 0.0);
}

TEST_CASE("fusion trace invariance and symmetry") {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const Mat rc = exp_so3(random_omega(2.0)), rr = exp_so3(random_omega(2.0));
    const Mat sc = Vec(u(rng), u(rng), u(rng)).asDiagonal();
    const Mat sr = Vec(u(rng), u(rng), u(rng)).asDiagonal();
    auto [r, s] = fuse_rotations(rc, sc, rr, sr);
    CHECK((r - rr * rc).norm() == 0.0);
    CHECK(std::abs(s.trace() - sc.trace() - sr.trace()) < 1e-9);
    CHECK((s - s.transpose()).norm() < 1e-12);
    const Eigen::SelfAdjointEigenSolver<Mat> es(s);
    CHECK(es.eigenvalues().minCoeff() > -1e-9);
  }
}

TEST_CASE("normalize_coords") {
  const CameraIntrinsics<double> k{400, 300, 400, 200};
  auto [xm, ym] = normalize_coords(k, 480, 800);
  CHECK(xm(200, 400) == doctest::Approx(0.0));
  CHECK(ym(200, 400) == doctest::Approx(0.0));
  CHECK(xm(200, 799) == doctest::Approx((799.0 - 400.0) / 400.0));
  CHECK(ym(0, 0) == doctest::Approx(-200.0 / 300.0));

  const CameraIntrinsics<double> id{1, 1, 0, 0};
  auto [xi, yi] = normalize_coords(id, 4, 4);
  CHECK(xi(1, 3) == doctest::Approx(3.0));
  CHECK(yi(3, 1) == doctest::Approx(3.0));

  const CameraIntrinsics<double> kf{400, 400, 400, 0};
  auto [xf, yf] = normalize_coords(kf, 1, 801);
  CHECK(xf(0, 800) == doctest::Approx(1.0));
}

TEST_CASE("intrinsics inverse matches Eigen") {
  std::uniform_real_distribution<double> f(100.0, 800.0), c(50.0, 500.0);
  for (int i = 0; i < 20; ++i) {
    const CameraIntrinsics<double> k = random_k(f, c);
    CHECK((k.inverse() - k.matrix().inverse()).norm() < 1e-12);
  }
}
