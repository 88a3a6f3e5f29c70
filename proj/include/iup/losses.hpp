#ifndef IUP_LOSSES_HPP
#define IUP_LOSSES_HPP

#include "iup/ops.hpp"
#include "iup/pipeline.hpp"
#include "iup/so3.hpp"
#include "iup/tensor.hpp"

namespace iup {

template <typename S>
struct LossConfig {
  S lambda_uncert = S(0.1);
  S delta_r = S(0.15);
  S delta_t = S(0.5);
  // Refined-stage supervision target: the composed rotation R_r R_c vs gt
  // (default), or the residual R_r vs the de-rotated gt R_gt R_c^T.
  bool refined_target_composed = true;
  bool detach_uncert_error = false;
};

template <typename S>
struct LossBreakdown {
  S rot_angle_c = S(0), rot_uncert_c = S(0);
  S rot_angle_r = S(0), rot_uncert_r = S(0);
  S trans = S(0);
  S total_value = S(0);
  Tensor<S> total;  // scalar graph node for backward
};

template <typename S>
S huber(S x, S delta) {
  const S ax = std::abs(x);
  return ax <= delta ? S(0.5) * x * x : delta * (ax - S(0.5) * delta);
}

template <typename S>
Tensor<S> constant_mat3(const Mat3<S>& m) {
  std::vector<S> v(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v[static_cast<size_t>(i) * 3 + j] = m(i, j);
  return Tensor<S>::from_vector({3, 3}, std::move(v));
}

/// Huber(geodesic angle(r_pred, r_gt)); differentiable through r_pred.
template <typename S>
Tensor<S> rotation_angle_loss(const Tensor<S>& r_pred, const Mat3<S>& r_gt, S delta_r) {
  const Tensor<S> r_rel = matmul(transpose2d(r_pred), constant_mat3(r_gt));
  const Tensor<S> ang = acos_clamped(scale(add_scalar(trace3(r_rel), S(-1)), S(0.5)));
  return huber_t(ang, delta_r);
}

/// Laplace negative log-likelihood over the three axes:
/// sum_i |w_i| exp(-log_var_i / 2) + log_var_i / 2.
template <typename S>
Tensor<S> rotation_uncertainty_loss(const Tensor<S>& omega_err, const Tensor<S>& log_var) {
  const Tensor<S> term = add(mul(abs_t(omega_err), exp_t(scale(log_var, S(-0.5)))),
                             scale(log_var, S(0.5)));
  return sum(term);
}

/// Huber of the angle between directions; invariant to positive rescaling
/// of the prediction.
template <typename S>
Tensor<S> translation_loss(const Tensor<S>& t_pred, const Vec3<S>& t_gt, S delta_t) {
  const Vec3<S> g = t_gt.normalized();
  const Tensor<S> gt = Tensor<S>::from_vector({3}, {g.x(), g.y(), g.z()});
  const Tensor<S> ang = acos_clamped(dot(l2_normalize(t_pred), gt));
  return huber_t(ang, delta_t);
}

/// Full supervision of one estimate. Both rotation stages are compared
/// against the same gt_R; with iterative off only the coarse term exists;
/// uncertainty terms are dropped when flags.uncertainty is off.
template <typename S>
LossBreakdown<S> total_loss(const PoseEstimate<S>& est, const Mat3<S>& gt_r, const Vec3<S>& gt_t,
                            const AblationFlags& flags_in, const LossConfig<S>& cfg = {}) {
  const AblationFlags flags = flags_in.normalized();
  LossBreakdown<S> out;

  const Tensor<S> r_coarse = exp_so3_t(est.omega_c_t);
  Tensor<S> angle_c = rotation_angle_loss(r_coarse, gt_r, cfg.delta_r);
  out.rot_angle_c = angle_c.item();
  Tensor<S> total = angle_c;

  if (flags.uncertainty) {
    Tensor<S> err_c = log_so3_t(matmul(transpose2d(r_coarse), constant_mat3(gt_r)));
    if (cfg.detach_uncert_error) err_c = err_c.detach();
    Tensor<S> uncert_c = rotation_uncertainty_loss(err_c, est.log_var_c_t);
    out.rot_uncert_c = uncert_c.item();
    total = add(total, scale(uncert_c, cfg.lambda_uncert));
  }

  if (est.has_refined) {
    Tensor<S> angle_r;
    if (cfg.refined_target_composed) {
      angle_r = rotation_angle_loss(est.rotation_t, gt_r, cfg.delta_r);
    } else {
      const Mat3<S> derotated_gt = gt_r * exp_so3(est.coarse_omega).transpose();
      angle_r = rotation_angle_loss(exp_so3_t(est.omega_r_t), derotated_gt, cfg.delta_r);
    }
    out.rot_angle_r = angle_r.item();
    total = add(total, angle_r);
    if (flags.uncertainty) {
      const Tensor<S> r_for_err =
          cfg.refined_target_composed ? est.rotation_t : exp_so3_t(est.omega_r_t);
      const Mat3<S> gt_for_err = cfg.refined_target_composed
                                     ? gt_r
                                     : Mat3<S>(gt_r * exp_so3(est.coarse_omega).transpose());
      Tensor<S> err_r = log_so3_t(matmul(transpose2d(r_for_err), constant_mat3(gt_for_err)));
      if (cfg.detach_uncert_error) err_r = err_r.detach();
      Tensor<S> uncert_r = rotation_uncertainty_loss(err_r, est.log_var_r_t);
      out.rot_uncert_r = uncert_r.item();
      total = add(total, scale(uncert_r, cfg.lambda_uncert));
    }
  }

  if (gt_t.norm() > S(0)) {  // pure-rotation pairs carry no direction target
    Tensor<S> trans = translation_loss(est.t_dir_t, gt_t, cfg.delta_t);
    out.trans = trans.item();
    total = add(total, trans);
  }

  out.total = total;
  out.total_value = total.item();
  return out;
}

}  // namespace iup

#endif
