#ifndef IUP_PIPELINE_HPP
#define IUP_PIPELINE_HPP

#include <cstdint>
#include <random>

#include "iup/blocks.hpp"
#include "iup/ops.hpp"
#include "iup/so3.hpp"
#include "iup/tensor.hpp"
#include "iup/warp.hpp"

namespace iup {

/// Table-2-style component switches. homography_warp depends on
/// rt_decoupled; normalized() clamps it accordingly.
struct AblationFlags {
  bool rt_decoupled = true;
  bool iterative = true;
  bool ida = true;
  bool uncertainty = true;
  bool homography_warp = true;
  bool detach_warp = false;  // stop-gradient through the warp grid

  AblationFlags normalized() const {
    AblationFlags f = *this;
    if (!f.rt_decoupled) {
      f.homography_warp = false;
      f.iterative = false;
      f.uncertainty = false;
    }
    return f;
  }
};

template <typename S>
struct PoseEstimate {
  // Host-side snapshot.
  Mat3<S> rotation = Mat3<S>::Identity();
  Vec3<S> t_dir = Vec3<S>(S(1), S(0), S(0));
  Mat3<S> covariance = Mat3<S>::Identity();
  Vec3<S> coarse_omega = Vec3<S>::Zero();
  Vec3<S> coarse_log_var = Vec3<S>::Zero();
  bool has_refined = false;
  Vec3<S> refined_omega = Vec3<S>::Zero();
  Vec3<S> refined_log_var = Vec3<S>::Zero();
  Vec3<S> trans_log_var = Vec3<S>::Zero();

  // Graph handles for the loss.
  Tensor<S> omega_c_t, log_var_c_t;
  Tensor<S> omega_r_t, log_var_r_t;  // defined only when has_refined
  Tensor<S> rotation_t;              // {3,3}, the final (possibly fused) rotation
  Tensor<S> t_tilde_t, t_dir_t, log_var_t_t;

  AblationFlags flags;
};

namespace detail {

template <typename S>
Vec3<S> to_vec3(const Tensor<S>& t) {
  return Vec3<S>(t.value()[0], t.value()[1], t.value()[2]);
}

template <typename S>
Mat3<S> to_mat3(const Tensor<S>& t) {
  Mat3<S> m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = t.value()[static_cast<size_t>(i) * 3 + j];
  return m;
}

template <typename S>
Tensor<S> ones_mask(int h, int w) {
  return Tensor<S>::filled({1, h, w}, S(1));
}

template <typename S>
Tensor<S> mask_channel(const std::vector<uint8_t>& valid, int h, int w) {
  std::vector<S> data(valid.size());
  for (size_t i = 0; i < valid.size(); ++i) data[i] = valid[i] ? S(1) : S(0);
  return Tensor<S>::from_vector({1, h, w}, std::move(data));
}

}  // namespace detail

/// The full network: shared encoder/IDA trunk, one rotation decoder used
/// for both iterative stages, and a translation decoder of the same
/// architecture with its own parameters.
template <typename S>
struct IupPoseModel {
  BlockConfig<S> cfg;
  Encoder<S> encoder;
  Sppf<S> sppf;
  Mhbc<S> mhbc;
  Decoder<S> rot_decoder;
  Decoder<S> trans_decoder;

  explicit IupPoseModel(uint64_t seed, BlockConfig<S> cfg_ = {}) : cfg(cfg_) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    encoder = Encoder<S>(rng, cfg);
    sppf = Sppf<S>(rng, cfg.d_v, cfg.sppf_kernel);
    mhbc = Mhbc<S>(rng, cfg);
    rot_decoder = Decoder<S>(rng, cfg.d_v + 1, cfg.d_v);
    trans_decoder = Decoder<S>(rng, cfg.d_v + 1, cfg.d_v);
  }

  ParamList<S> parameters() const {
    ParamList<S> out;
    encoder.collect("encoder", out);
    sppf.collect("sppf", out);
    mhbc.collect("mhbc", out);
    rot_decoder.collect("rot_decoder", out);
    trans_decoder.collect("trans_decoder", out);
    return out;
  }

  /// Normalized-intrinsics part of the FiLM conditioning vector.
  Tensor<S> intrinsics_features(const CameraIntrinsics<S>& k0, const CameraIntrinsics<S>& k1,
                                int h, int w) const {
    const S sw = S(w), sh = S(h);
    return Tensor<S>::from_vector(
        {4}, {(k0.fx + k1.fx) / (S(2) * sw), (k0.fy + k1.fy) / (S(2) * sh),
              (k0.cx + k1.cx) / (S(2) * sw), (k0.cy + k1.cy) / (S(2) * sh)});
  }

  PoseEstimate<S> forward(const Tensor<S>& img0, const Tensor<S>& img1,
                          const CameraIntrinsics<S>& k0, const CameraIntrinsics<S>& k1,
                          const AblationFlags& flags_in = {}) const {
    const AblationFlags flags = flags_in.normalized();
    PoseEstimate<S> est;
    est.flags = flags;

    Tensor<S> e0 = encoder(build_input(img0, k0));
    Tensor<S> e1 = encoder(build_input(img1, k1));
    Tensor<S> a0 = e0, a1 = e1;
    if (flags.ida) {
      const Tensor<S> t0 = sppf(e0);
      const Tensor<S> t1 = sppf(e1);
      const Tensor<S> corr =
          patch_correlation<S>(img0, img1, t0.shape()[1], t0.shape()[2]);
      std::tie(a0, a1) = mhbc(t0, t1, &corr);
    }
    const int fh = a0.shape()[1], fw = a0.shape()[2];
    const S fscale = S(cfg.stride());
    const Tensor<S> ones = detail::ones_mask<S>(fh, fw);
    const Tensor<S> kfeat =
        intrinsics_features(k0, k1, img0.shape()[1], img0.shape()[2]);
    const Tensor<S> zeros3 = Tensor<S>::zeros({3});

    if (!flags.rt_decoupled) {
      // Single joint decoder (the rotation decoder's parameters) emitting
      // (omega || t_tilde) from the unwarped features.
      auto [omega, t_tilde] =
          rot_decoder(concat<S>({a0, ones}, 0), concat<S>({a1, ones}, 0),
                      concat<S>({kfeat, zeros3, zeros3}, 0));
      est.omega_c_t = omega;
      est.log_var_c_t = Tensor<S>::zeros({3});
      est.rotation_t = exp_so3_t(omega);
      est.t_tilde_t = t_tilde;
      finalize_translation(est, t_tilde);
      est.coarse_omega = detail::to_vec3(omega);
      est.rotation = detail::to_mat3(est.rotation_t);
      est.covariance = Mat3<S>::Identity();
      est.log_var_t_t = Tensor<S>::zeros({3});
      return est;
    }

    // Coarse rotation stage: identity pose and zero log-variance as input.
    auto [omega_c, log_var_c] =
        rot_decoder(concat<S>({a0, ones}, 0), concat<S>({a1, ones}, 0),
                    concat<S>({kfeat, zeros3, zeros3}, 0));
    est.omega_c_t = omega_c;
    est.log_var_c_t = log_var_c;
    est.coarse_omega = detail::to_vec3(omega_c);
    est.coarse_log_var = detail::to_vec3(log_var_c);

    Tensor<S> sigma_cond_c = flags.uncertainty ? log_var_c : zeros3;

    if (flags.iterative) {
      // Refined stage on features de-rotated by the coarse prediction;
      // same decoder parameters, conditioned on the coarse output.
      Tensor<S> w0 = a0;
      Tensor<S> m0 = ones;
      if (flags.homography_warp) {
        WarpResult<S> wr = warp_by_rotation(
            a0, k0, k1, flags.detach_warp ? omega_c.detach() : omega_c, fscale);
        w0 = wr.features;
        m0 = detail::mask_channel<S>(wr.valid, fh, fw);
      }
      auto [omega_r, log_var_r] =
          rot_decoder(concat<S>({w0, m0}, 0), concat<S>({a1, ones}, 0),
                      concat<S>({kfeat, omega_c, sigma_cond_c}, 0));
      est.omega_r_t = omega_r;
      est.log_var_r_t = log_var_r;
      est.has_refined = true;
      est.refined_omega = detail::to_vec3(omega_r);
      est.refined_log_var = detail::to_vec3(log_var_r);

      est.rotation_t = matmul(exp_so3_t(omega_r), exp_so3_t(omega_c));

      const Mat3<S> sc = detail::to_vec3(log_var_c).array().exp().matrix().asDiagonal();
      const Mat3<S> sr = detail::to_vec3(log_var_r).array().exp().matrix().asDiagonal();
      auto [r_fused, sigma_fused] =
          fuse_rotations(detail::to_mat3(exp_so3_t(omega_c)), sc,
                         detail::to_mat3(exp_so3_t(omega_r)), sr);
      est.rotation = r_fused;
      est.covariance = sigma_fused;
    } else {
      est.rotation_t = exp_so3_t(omega_c);
      est.rotation = detail::to_mat3(est.rotation_t);
      est.covariance = detail::to_vec3(log_var_c).array().exp().matrix().asDiagonal();
    }

    // Translation stage on features aligned by the final rotation.
    Tensor<S> wf = a0;
    Tensor<S> mf = ones;
    if (flags.homography_warp) {
      WarpResult<S> wr = warp_by_rotmat(
          a0, k0, k1, flags.detach_warp ? est.rotation_t.detach() : est.rotation_t, fscale);
      wf = wr.features;
      mf = detail::mask_channel<S>(wr.valid, fh, fw);
    }
    Tensor<S> omega_cond = log_so3_t(est.rotation_t);
    Tensor<S> sigma_cond = zeros3;
    if (flags.uncertainty) {
      if (est.has_refined) {
        // Differentiable diagonal of Sigma_r + R_r diag(exp(lv_c)) R_r^T.
        const Tensor<S> rr = exp_so3_t(est.omega_r_t);
        const Tensor<S> rot_diag = reshape(
            matmul(mul(rr, rr), reshape(exp_t(est.log_var_c_t), {3, 1})), {3});
        sigma_cond = log_t(add(exp_t(est.log_var_r_t), rot_diag));
      } else {
        sigma_cond = est.log_var_c_t;
      }
    }
    auto [t_tilde, log_var_t] =
        trans_decoder(concat<S>({wf, mf}, 0), concat<S>({a1, ones}, 0),
                      concat<S>({kfeat, omega_cond, sigma_cond}, 0));
    est.t_tilde_t = t_tilde;
    est.log_var_t_t = log_var_t;
    est.trans_log_var = detail::to_vec3(log_var_t);
    finalize_translation(est, t_tilde);
    return est;
  }

 private:
  static void finalize_translation(PoseEstimate<S>& est, const Tensor<S>& t_tilde) {
    Tensor<S> t_use = t_tilde;
    const Vec3<S> tv = detail::to_vec3(t_tilde);
    if (tv.norm() < S(1e-8))
      t_use = add(t_tilde, Tensor<S>::from_vector({3}, {S(1e-6), S(0), S(0)}));
    est.t_dir_t = l2_normalize(t_use);
    est.t_dir = detail::to_vec3(est.t_dir_t);
  }
};

/// Exact trainable-scalar count.
template <typename S>
int64_t count_parameters(const ParamList<S>& params) {
  int64_t n = 0;
  for (const auto& [name, t] : params)
    if (t.requires_grad()) n += t.numel();
  return n;
}

}  // namespace iup

#endif
