#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "iup/gradcheck.hpp"
#include "iup/losses.hpp"

using namespace iup;
using T = Tensor<double>;
using Mat = Mat3<double>;
using Vec = Vec3<double>;

namespace {

std::mt19937_64 rng(31337);

Vec random_omega(double max_angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.01, max_angle);
  Vec axis(n(rng), n(rng), n(rng));
  return axis.normalized() * u(rng);
}

T tvec(const Vec& v) { return T::from_vector({3}, {v.x(), v.y(), v.z()}); }

}  // namespace

TEST_CASE("huber closed forms") {
  CHECK(huber(0.0, 0.15) == 0.0);
  CHECK(huber(0.1, 0.15) == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(huber(0.3, 0.15) == doctest::Approx(0.03375).epsilon(1e-12));
}

TEST_CASE("huber is monotone and C1") {
  double prev = -1.0;
  for (int i = 0; i <= 400; ++i) {
    const double x = i * 0.005;
    const double h = huber(x, 0.15);
    CHECK(h >= prev);
    prev = h;
  }
  // derivative continuity at delta: left ~ delta, right = delta
  const double d = 0.15, eps = 1e-7;
  const double left = (huber(d, d) - huber(d - eps, d)) / eps;
  const double right = (huber(d + eps, d) - huber(d, d)) / eps;
  CHECK(left == doctest::Approx(right).epsilon(1e-5));
}

TEST_CASE("rotation_angle_loss closed forms") {
  const Mat gt = exp_so3(Vec(0.2, -0.1, 0.4));
  CHECK(rotation_angle_loss(constant_mat3(gt), gt, 0.15).item() ==
        doctest::Approx(0.0).epsilon(1e-6));

  // 0.1 rad error on the quadratic branch
  const Mat pred = gt * exp_so3(Vec(0.1, 0.0, 0.0));
  CHECK(rotation_angle_loss(constant_mat3(pred), gt, 0.15).item() ==
        doctest::Approx(0.005).epsilon(1e-9));
}

TEST_CASE("rotation_angle_loss gradient at 0.1 rad") {
  T omega = tvec(Vec(0.25, -0.17, 0.31));
  const Mat gt = exp_so3(Vec3<double>(tvec(Vec(0.25, -0.17, 0.31)).value().data())) *
                 exp_so3(Vec(0.1, 0.0, 0.0));
  const double err = finite_diff_check<double>(
      [&](const T& w) { return rotation_angle_loss(exp_so3_t(w), gt, 0.15); }, omega, 1e-6);
  CHECK(err < 1e-5);
}

TEST_CASE("rotation_angle_loss bi-invariance") {
  for (int i = 0; i < 50; ++i) {
    const Mat rp = exp_so3(random_omega(1.5));
    const Mat rg = exp_so3(random_omega(1.5));
    const Mat q = exp_so3(random_omega(3.0));
    const double base = rotation_angle_loss(constant_mat3(rp), rg, 0.15).item();
    const double conj =
        rotation_angle_loss(constant_mat3(Mat(q * rp * q.transpose())),
                            Mat(q * rg * q.transpose()), 0.15)
            .item();
    CHECK(base == doctest::Approx(conj).epsilon(1e-9));
  }
}

TEST_CASE("rotation_uncertainty_loss closed forms") {
  CHECK(rotation_uncertainty_loss(T::zeros({3}), T::zeros({3})).item() == doctest::Approx(0.0));
  CHECK(rotation_uncertainty_loss(tvec(Vec(1, 0, 0)), T::zeros({3})).item() ==
        doctest::Approx(1.0));
}

TEST_CASE("uncertainty minimum matches grid-search oracle") {
  // fixed |omega| = 0.5: minimize |w| e^{-s/2} + s/2 over s by brute force
  double best_s = 0, best_v = 1e9;
  for (double s = -5.0; s <= 5.0; s += 1e-4) {
    const double v = 0.5 * std::exp(-s / 2) + s / 2;
    if (v < best_v) {
      best_v = v;
      best_s = s;
    }
  }
  CHECK(best_s == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-3));
  // the differentiable loss agrees at the optimum
  const double at_opt =
      rotation_uncertainty_loss(tvec(Vec(0.5, 0, 0)),
                                T::from_vector({3}, {2.0 * std::log(0.5), 0.0, 0.0}))
          .item();
  CHECK(at_opt == doctest::Approx(best_v).epsilon(1e-6));
}

TEST_CASE("uncertainty loss is convex in each log-variance") {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec w = random_omega(1.0);
    const double h = 0.05;
    const double o1 = u(rng), o2 = u(rng);
    for (double s = -3.0; s <= 3.0; s += 0.25) {
      auto eval = [&](double sv) {
        return rotation_uncertainty_loss(tvec(w), T::from_vector({3}, {sv, o1, o2})).item();
      };
      const double second = eval(s - h) - 2.0 * eval(s) + eval(s + h);
      CHECK(second >= -1e-10);
    }
  }
}

TEST_CASE("translation_loss closed forms") {
  CHECK(translation_loss(tvec(Vec(0, 0, 2)), Vec(0, 0, 5), 0.5).item() ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(translation_loss(tvec(Vec(1, 0, 0)), Vec(0, 1, 0), 0.5).item() ==
        doctest::Approx(0.5 * (M_PI / 2 - 0.25)).epsilon(1e-9));
  // antiparallel: the clamped arccos caps the angle at acos(-1 + 1e-7)
  CHECK(translation_loss(tvec(Vec(0, 0, 1)), Vec(0, 0, -1), 0.5).item() ==
        doctest::Approx(0.5 * (std::acos(-1.0 + 1e-7) - 0.25)).epsilon(1e-9));
}

TEST_CASE("translation_loss rescale invariance") {
  for (int i = 0; i < 50; ++i) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), s(0.1, 50.0);
    const Vec p(u(rng), u(rng), u(rng));
    const Vec g(u(rng), u(rng), u(rng));
    if (p.norm() < 0.1 || g.norm() < 0.1) continue;
    const double base = translation_loss(tvec(p), g, 0.5).item();
    CHECK(translation_loss(tvec(Vec(p * s(rng))), g, 0.5).item() ==
          doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("total_loss breakdown identity and perfect-prediction zero") {
  // Build a minimal PoseEstimate by hand.
  const Vec wc(0.1, -0.2, 0.15), wr(0.05, 0.02, -0.04);
  const Mat rc = exp_so3(wc), rr = exp_so3(wr);
  PoseEstimate<double> est;
  est.omega_c_t = tvec(wc);
  est.log_var_c_t = T::from_vector({3}, {0.3, -0.2, 0.1});
  est.omega_r_t = tvec(wr);
  est.log_var_r_t = T::from_vector({3}, {-0.1, 0.4, 0.2});
  est.has_refined = true;
  est.coarse_omega = wc;
  est.rotation_t = constant_mat3(Mat(rr * rc));
  est.t_tilde_t = tvec(Vec(0.3, -0.5, 0.8));
  est.t_dir_t = l2_normalize(est.t_tilde_t);

  const Mat gt_r = exp_so3(Vec(0.12, -0.18, 0.13));
  const Vec gt_t(0.2, 0.5, -0.8);
  AblationFlags flags;
  const LossBreakdown<double> lb = total_loss(est, gt_r, gt_t, flags);
  CHECK(lb.total_value ==
        doctest::Approx(lb.rot_angle_c + 0.1 * lb.rot_uncert_c + lb.rot_angle_r +
                        0.1 * lb.rot_uncert_r + lb.trans)
            .epsilon(1e-12));

  // perfect prediction with uncertainty off
  PoseEstimate<double> perfect;
  perfect.omega_c_t = tvec(Vec(0.1, 0.0, 0.0));
  perfect.log_var_c_t = T::zeros({3});
  perfect.rotation_t = constant_mat3(exp_so3(Vec(0.1, 0.0, 0.0)));
  perfect.t_tilde_t = tvec(Vec(0.0, 0.6, 0.0));
  perfect.t_dir_t = l2_normalize(perfect.t_tilde_t);
  AblationFlags no_unc;
  no_unc.uncertainty = false;
  no_unc.iterative = false;
  const LossBreakdown<double> z =
      total_loss(perfect, exp_so3(Vec(0.1, 0.0, 0.0)), Vec(0.0, 2.0, 0.0), no_unc);
  CHECK(z.total_value == doctest::Approx(0.0).epsilon(1e-6));

  // pure-rotation pair carries no translation term
  const LossBreakdown<double> pr =
      total_loss(perfect, exp_so3(Vec(0.1, 0.0, 0.0)), Vec(Vec::Zero()), no_unc);
  CHECK(pr.trans == 0.0);
}

TEST_CASE("refined target modes agree at the optimum") {
  const Vec wc(0.2, -0.1, 0.1);
  const Mat gt_r = exp_so3(Vec(0.25, -0.05, 0.12));
  PoseEstimate<double> est;
  est.omega_c_t = tvec(wc);
  est.log_var_c_t = T::zeros({3});
  est.has_refined = true;
  est.coarse_omega = wc;
  // residual that exactly closes the gap
  const Mat rr = gt_r * exp_so3(wc).transpose();
  est.omega_r_t = tvec(log_so3(rr));
  est.rotation_t = constant_mat3(Mat(rr * exp_so3(wc)));
  est.t_tilde_t = tvec(Vec(1, 0, 0));
  est.t_dir_t = l2_normalize(est.t_tilde_t);
  AblationFlags flags;
  flags.uncertainty = false;

  LossConfig<double> composed;
  LossConfig<double> residual;
  residual.refined_target_composed = false;
  const double a = total_loss(est, gt_r, Vec(1, 0, 0), flags, composed).rot_angle_r;
  const double b = total_loss(est, gt_r, Vec(1, 0, 0), flags, residual).rot_angle_r;
  // both bottom out at the Huber value of the clamped-arccos angle floor, ~1e-7
  CHECK(a < 2e-7);
  CHECK(b < 2e-7);
}
