#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "iup/gradcheck.hpp"
#include "iup/warp.hpp"

using namespace iup;
using T = Tensor<double>;
using Mat = Mat3<double>;
using Vec = Vec3<double>;

namespace {

std::mt19937_64 rng(4242);

T rand_t(std::vector<int> shape, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  int total = 1;
  for (int d : shape) total *= d;
  std::vector<double> data(static_cast<size_t>(total));
  for (auto& v : data) v = u(rng);
  return T::from_vector(std::move(shape), std::move(data));
}

/// Band-limited random field so resampling error stays small.
T smooth_features(int c, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
  std::vector<double> data(static_cast<size_t>(c) * h * w);
  for (int ch = 0; ch < c; ++ch) {
    const double px = u(rng), py = u(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        data[(static_cast<size_t>(ch) * h + y) * w + x] =
            0.5 + 0.25 * std::sin(2.0 * M_PI * x / w + px) +
            0.25 * std::cos(2.0 * M_PI * y / h + py);
  }
  return T::from_vector({c, h, w}, std::move(data));
}

Mat rz(double a) {
  Mat m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}

double mean_abs_diff(const T& a, const T& b, const std::vector<uint8_t>& valid) {
  const size_t plane = valid.size();
  const int c = a.shape()[0];
  double sum = 0;
  int count = 0;
  for (size_t p = 0; p < plane; ++p) {
    if (!valid[p]) continue;
    for (int ch = 0; ch < c; ++ch) {
      sum += std::abs(a.value()[ch * plane + p] - b.value()[ch * plane + p]);
      ++count;
    }
  }
  REQUIRE(count > 0);
  return sum / count;
}

}  // namespace

TEST_CASE("identity grid and identity sampling") {
  SamplingGrid<double> g = homography_grid(Mat(Mat::Identity()), 4, 5, 4, 5);
  for (int v = 0; v < 4; ++v)
    for (int u = 0; u < 5; ++u) {
      CHECK(g.coords.value()[v * 5 + u] == doctest::Approx(u).epsilon(1e-14));
      CHECK(g.coords.value()[20 + v * 5 + u] == doctest::Approx(v).epsilon(1e-14));
      CHECK(g.valid[v * 5 + u] == 1);
    }
  const T f = rand_t({3, 4, 5});
  const T out = bilinear_sample(f, g);
  for (int i = 0; i < f.numel(); ++i) CHECK(out.value()[i] == doctest::Approx(f.value()[i]));
}

TEST_CASE("two-pixel translation homography") {
  Mat h = Mat::Identity();
  h(0, 2) = 2.0;  // x_out = x_src + 2
  SamplingGrid<double> g = homography_grid(h, 4, 6, 4, 6);
  for (int v = 0; v < 4; ++v)
    for (int u = 0; u < 6; ++u) {
      CHECK(g.coords.value()[v * 6 + u] == doctest::Approx(u - 2.0));
      CHECK(g.valid[v * 6 + u] == (u >= 2 ? 1 : 0));  // left columns sample out of range
    }
  const T f = rand_t({1, 4, 6});
  const T out = bilinear_sample(f, g);
  for (int v = 0; v < 4; ++v)
    for (int u = 0; u < 6; ++u) {
      const double expect = u >= 2 ? f.value()[v * 6 + u - 2] : 0.0;
      CHECK(out.value()[v * 6 + u] == doctest::Approx(expect));
    }
}

TEST_CASE("rotational grid matches per-pixel projection oracle") {
  const CameraIntrinsics<double> k{40.0, 40.0, 15.5, 15.5};
  const Mat r = rz(5.0 * M_PI / 180.0);
  const Mat h = rotational_homography(k, k, r);
  SamplingGrid<double> g = homography_grid(h, 32, 32, 32, 32);
  const Mat back = k.matrix() * r.transpose() * k.inverse();
  for (int v = 0; v < 32; ++v)
    for (int u = 0; u < 32; ++u) {
      const Vec p = back * Vec(u, v, 1.0);
      CHECK(g.coords.value()[v * 32 + u] == doctest::Approx(p.x() / p.z()).epsilon(1e-10));
      CHECK(g.coords.value()[1024 + v * 32 + u] == doctest::Approx(p.y() / p.z()).epsilon(1e-10));
    }
}

TEST_CASE("grid at stride samples cell centers") {
  // stride-4 identity: output cell u covers full-res pixel (u+0.5)*4-0.5,
  // which maps back to feature coordinate u exactly.
  SamplingGrid<double> g =
      grid_from_matrix(T::from_vector({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), 8, 8, 8, 8, 4.0);
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      CHECK(g.coords.value()[v * 8 + u] == doctest::Approx(u));
      CHECK(g.coords.value()[64 + v * 8 + u] == doctest::Approx(v));
    }
}

TEST_CASE("bilinear of constants is constant; out-of-bounds zero-fills") {
  const T f = T::filled({2, 5, 5}, 0.37);
  Mat h = Mat::Identity();
  h(0, 2) = 0.3;
  h(1, 2) = -0.4;
  SamplingGrid<double> g = homography_grid(h, 5, 5, 5, 5);
  const T out = bilinear_sample(f, g);
  for (int p = 0; p < 25; ++p)
    if (g.valid[p]) CHECK(out.value()[p] == doctest::Approx(0.37));

  Mat far = Mat::Identity();
  far(0, 2) = 100.0;
  SamplingGrid<double> gf = homography_grid(far, 5, 5, 5, 5);
  const T out2 = bilinear_sample(f, gf);
  for (int p = 0; p < 25; ++p) {
    CHECK(gf.valid[p] == 0);
    CHECK(out2.value()[p] == 0.0);
  }
  CHECK_THROWS_AS(homography_grid(Mat(Mat::Zero()), 2, 2, 2, 2), TensorError);
}

TEST_CASE("warp by zero rotation is the identity on valid cells") {
  const CameraIntrinsics<double> k{30.0, 30.0, 7.5, 7.5};
  const T f = rand_t({3, 16, 16});
  WarpResult<double> wr = warp_by_rotation(f, k, k, T::zeros({3}));
  const size_t plane = 256;
  for (size_t p = 0; p < plane; ++p) {
    CHECK(wr.valid[p] == 1);
    for (int ch = 0; ch < 3; ++ch)
      CHECK(wr.features.value()[ch * plane + p] ==
            doctest::Approx(f.value()[ch * plane + p]).epsilon(1e-12));
  }
}

TEST_CASE("warp composition mirrors homography factorization") {
  const CameraIntrinsics<double> k{40.0, 40.0, 15.5, 15.5};
  const T f = smooth_features(2, 32, 32);
  const Vec wa(0.03, -0.05, 0.10), wb(-0.04, 0.02, 0.08);

  WarpResult<double> step_a = warp_by_rotation(f, k, k, T::from_vector({3}, {wa.x(), wa.y(), wa.z()}));
  WarpResult<double> step_ab =
      warp_by_rotation(step_a.features, k, k, T::from_vector({3}, {wb.x(), wb.y(), wb.z()}));
  const Mat rba = exp_so3(wb) * exp_so3(wa);
  const Vec wba = log_so3(rba);
  WarpResult<double> direct =
      warp_by_rotation(f, k, k, T::from_vector({3}, {wba.x(), wba.y(), wba.z()}));

  std::vector<uint8_t> both(step_ab.valid.size());
  for (size_t i = 0; i < both.size(); ++i) both[i] = step_ab.valid[i] && direct.valid[i];
  CHECK(mean_abs_diff(step_ab.features, direct.features, both) < 0.02);
}

TEST_CASE("inverse warp recovers the input") {
  const CameraIntrinsics<double> k{40.0, 40.0, 15.5, 15.5};
  const T f = smooth_features(2, 32, 32);
  const Vec w(0.05, -0.03, 0.12);
  WarpResult<double> fwd = warp_by_rotation(f, k, k, T::from_vector({3}, {w.x(), w.y(), w.z()}));
  WarpResult<double> back =
      warp_by_rotation(fwd.features, k, k, T::from_vector({3}, {-w.x(), -w.y(), -w.z()}));
  std::vector<uint8_t> both(back.valid.size());
  for (size_t i = 0; i < both.size(); ++i) both[i] = back.valid[i] && fwd.valid[i];
  CHECK(mean_abs_diff(back.features, f, both) < 0.02);
}

TEST_CASE("valid-mask count is monotone in rotation angle") {
  const CameraIntrinsics<double> k{40.0, 40.0, 15.5, 15.5};
  const T f = rand_t({1, 32, 32});
  int prev = 1024 + 1;
  for (int deg = 0; deg <= 40; deg += 5) {
    const double a = deg * M_PI / 180.0;
    WarpResult<double> wr = warp_by_rotation(f, k, k, T::from_vector({3}, {0.0, a, 0.0}));
    int count = 0;
    for (uint8_t v : wr.valid) count += v;
    CHECK(count <= prev);
    prev = count;
  }
}

TEST_CASE("finite differences through the warp") {
  const CameraIntrinsics<double> k0{20.0, 20.0, 3.5, 3.5}, k1{21.0, 21.0, 3.6, 3.4};
  const T f = smooth_features(2, 8, 8);
  // rotation chosen so no sample sits on a cell boundary
  T omega = T::from_vector({3}, {0.013, -0.011, 0.017});
  const double err = finite_diff_check<double>(
      [&](const T& w) {
        WarpResult<double> wr = warp_by_rotation(f, k0, k1, w);
        return sum(mul(wr.features, wr.features));
      },
      omega, 1e-6);
  CHECK(err < 1e-3);

  // and through the features
  T feat = rand_t({1, 6, 6});
  const double err2 = finite_diff_check<double>(
      [&](const T& x) {
        WarpResult<double> wr =
            warp_by_rotation(x, k0, k1, T::from_vector({3}, {0.013, -0.011, 0.017}));
        return sum(mul(wr.features, wr.features));
      },
      feat, 1e-6);
  CHECK(err2 < 1e-4);
}
