#ifndef IUP_GRADSUITE_HPP
#define IUP_GRADSUITE_HPP

#include <random>
#include <string>
#include <vector>

#include "iup/gradcheck.hpp"
#include "iup/losses.hpp"
#include "iup/pipeline.hpp"

namespace iup {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0;
  double tolerance = 0;
  bool passed = false;
};

namespace gradsuite_detail {

inline Tensor<double> rand_tensor(std::mt19937_64& rng, std::vector<int> shape,
                                  double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  int total = 1;
  for (int d : shape) total *= d;
  std::vector<double> data(static_cast<size_t>(total));
  for (auto& v : data) v = u(rng);
  return Tensor<double>::from_vector(std::move(shape), std::move(data));
}

inline std::vector<Tensor<double>> tensors_of(const ParamList<double>& params) {
  std::vector<Tensor<double>> out;
  for (const auto& [name, p] : params) out.push_back(p);
  return out;
}

/// Moves every parameter off its init point; zero-initialized heads sit at
/// stationary or epsilon-guarded points where central differences degenerate.
inline void jitter(ParamList<double>& params, std::mt19937_64& rng, double scale = 0.05) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& [name, p] : params)
    for (double& v : p.value()) v += n(rng);
}

inline BlockConfig<double> tiny_cfg() {
  BlockConfig<double> cfg;
  cfg.base_channels = 4;
  cfg.encoder_stages = 2;
  cfg.d_v = 8;
  cfg.heads = 2;
  cfg.sppf_kernel = 3;
  return cfg;
}

}  // namespace gradsuite_detail

/// Central-difference checks of every differentiable block in double
/// precision. `only` restricts the run to one block name; empty runs all.
inline std::vector<GradCheckResult> run_gradcheck_suite(const std::string& only = "",
                                                        int max_entries = 6) {
  using gradsuite_detail::jitter;
  using gradsuite_detail::rand_tensor;
  using gradsuite_detail::tensors_of;
  using gradsuite_detail::tiny_cfg;
  using T = Tensor<double>;

  std::vector<GradCheckResult> results;
  std::mt19937_64 rng(20240901);
  const double eps = 1e-5;

  auto run = [&](const std::string& name, double tol, std::vector<T> params,
                 const std::function<T()>& f) {
    if (!only.empty() && only != name) return;
    GradCheckResult r;
    r.name = name;
    r.tolerance = tol;
    r.max_rel_err = finite_diff_check_params<double>(f, std::move(params), eps, max_entries, rng);
    r.passed = r.max_rel_err < tol;
    results.push_back(r);
  };

  const BlockConfig<double> cfg = tiny_cfg();

  {
    std::mt19937_64 init_rng(1);
    Encoder<double> enc(init_rng, cfg);
    ParamList<double> pl;
    enc.collect("e", pl);
    jitter(pl, rng);
    const T x = rand_tensor(rng, {5, 8, 8});
    run("encoder", 1e-4, tensors_of(pl), [&] { return sum(enc(x)); });
  }
  {
    std::mt19937_64 init_rng(2);
    Sppf<double> sppf(init_rng, 8, 3);
    ParamList<double> pl;
    sppf.collect("s", pl);
    jitter(pl, rng);
    const T x = rand_tensor(rng, {8, 4, 4});
    run("sppf", 1e-4, tensors_of(pl), [&] { return sum(sppf(x)); });
  }
  {
    std::mt19937_64 init_rng(3);
    Mhbc<double> mhbc(init_rng, cfg);
    ParamList<double> pl;
    mhbc.collect("m", pl);
    jitter(pl, rng);
    const T f0 = rand_tensor(rng, {8, 2, 2});
    const T f1 = rand_tensor(rng, {8, 2, 2});
    run("mhbc", 1e-4, tensors_of(pl), [&] {
      auto [a0, a1] = mhbc(f0, f1);
      return add(sum(a0), sum(mul(a1, a1)));
    });
  }
  {
    std::mt19937_64 init_rng(4);
    Film<double> film(init_rng, 10, 8);
    ParamList<double> pl;
    film.collect("f", pl);
    jitter(pl, rng);
    const T x = rand_tensor(rng, {8, 2, 2});
    const T cond = rand_tensor(rng, {10});
    run("film", 1e-4, tensors_of(pl), [&] { return sum(mul(film(x, cond), film(x, cond))); });
  }
  {
    std::mt19937_64 init_rng(5);
    MoeAdapter<double> moe(init_rng, 9, 8);
    ParamList<double> pl;
    moe.collect("m", pl);
    jitter(pl, rng);
    const T x = rand_tensor(rng, {9, 2, 2});
    run("moe", 1e-4, tensors_of(pl), [&] { return sum(mul(moe(x), moe(x))); });
  }
  {
    std::mt19937_64 init_rng(6);
    ViewFusion<double> fusion(init_rng, 8);
    ParamList<double> pl;
    fusion.collect("v", pl);
    jitter(pl, rng);
    const T f0 = rand_tensor(rng, {8, 2, 2});
    const T f1 = rand_tensor(rng, {8, 2, 2});
    run("view_fusion", 1e-4, tensors_of(pl), [&] { return sum(mul(fusion(f0, f1), f0)); });
  }
  {
    std::mt19937_64 init_rng(7);
    Decoder<double> dec(init_rng, 9, 8);
    ParamList<double> pl;
    dec.collect("d", pl);
    jitter(pl, rng);
    const T f0 = rand_tensor(rng, {9, 2, 2});
    const T f1 = rand_tensor(rng, {9, 2, 2});
    const T cond = rand_tensor(rng, {10});
    run("decoder", 1e-4, tensors_of(pl), [&] {
      auto [pose, lv] = dec(f0, f1, cond);
      return add(sum(mul(pose, pose)), sum(mul(lv, lv)));
    });
  }
  {
    // Bilinear path; the rotation is kept small so samples stay interior
    // and away from cell boundaries.
    CameraIntrinsics<double> k0{20, 20, 3.5, 3.5}, k1{22, 22, 3.5, 3.5};
    T omega = Tensor<double>::from_vector({3}, {0.011, -0.017, 0.013});
    const T feat = rand_tensor(rng, {3, 8, 8});
    run("warp", 1e-3, {omega, feat}, [&] {
      WarpResult<double> wr = warp_by_rotation(feat, k0, k1, omega);
      return sum(mul(wr.features, wr.features));
    });
  }
  {
    const Mat3<double> gt = exp_so3(Vec3<double>(0.3, -0.2, 0.4));
    T omega = Tensor<double>::from_vector({3}, {0.25, -0.1, 0.3});
    T log_var = Tensor<double>::from_vector({3}, {0.2, -0.3, 0.1});
    T t_pred = Tensor<double>::from_vector({3}, {0.4, 0.3, -0.8});
    const Vec3<double> t_gt(0.1, -0.9, 0.5);
    run("loss_rotation", 1e-4, {omega},
        [&] { return rotation_angle_loss(exp_so3_t(omega), gt, 0.15); });
    run("loss_uncertainty", 1e-4, {omega, log_var}, [&] {
      const T err = log_so3_t(matmul(transpose2d(exp_so3_t(omega)), constant_mat3(gt)));
      return rotation_uncertainty_loss(err, log_var);
    });
    run("loss_translation", 1e-4, {t_pred}, [&] { return translation_loss(t_pred, t_gt, 0.5); });
  }
  {
    // Full pipeline loss wrt every parameter (sampled); includes bilinear.
    BlockConfig<double> pcfg = tiny_cfg();
    pcfg.encoder_stages = 4;  // 32x32 input -> 2x2 tokens
    IupPoseModel<double> model(11, pcfg);
    ParamList<double> pl = model.parameters();
    jitter(pl, rng, 0.02);
    const T i0 = rand_tensor(rng, {3, 32, 32}, 0.0, 1.0);
    const T i1 = rand_tensor(rng, {3, 32, 32}, 0.0, 1.0);
    CameraIntrinsics<double> k0{40, 40, 15.5, 15.5}, k1{44, 44, 15.5, 15.5};
    const Mat3<double> gt_r = exp_so3(Vec3<double>(0.05, -0.03, 0.08));
    const Vec3<double> gt_t(0.2, -0.5, 0.8);
    run("pipeline", 1e-3, tensors_of(pl), [&] {
      PoseEstimate<double> est = model.forward(i0, i1, k0, k1);
      return total_loss(est, gt_r, gt_t, AblationFlags{}).total;
    });
  }

  return results;
}

}  // namespace iup

#endif
