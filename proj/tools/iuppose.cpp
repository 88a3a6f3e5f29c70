// Command-line front end: dataset generation, training, evaluation,
// gradient verification, benchmarking, and visual demos.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iup/config.hpp"
#include "iup/gradsuite.hpp"
#include "iup/losses.hpp"
#include "iup/metrics.hpp"
#include "iup/pipeline.hpp"
#include "iup/scenes.hpp"
#include "iup/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int worker_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("IUPPOSE_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0 && static_cast<unsigned>(cap) < n) n = static_cast<unsigned>(cap);
  }
  return static_cast<int>(n);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << text;
}

iup::AblationFlags apply_ablations(iup::AblationFlags flags, const std::string& list) {
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "rt-dec")
      flags.rt_decoupled = false;
    else if (item == "iter")
      flags.iterative = false;
    else if (item == "ida")
      flags.ida = false;
    else if (item == "uncert")
      flags.uncertainty = false;
    else if (item == "homo")
      flags.homography_warp = false;
    else
      throw CLI::ValidationError("--ablate", "unknown ablation '" + item +
                                                 "' (expected rt-dec,iter,ida,uncert,homo)");
  }
  return flags;
}

template <typename S>
std::vector<iup::ScenePair<S>> load_dataset(const fs::path& dir) {
  std::vector<iup::ScenePair<S>> pairs;
  for (const auto& entry : iup::read_manifest(dir)) {
    pairs.push_back(iup::read_pair<S>(dir / entry.rel_dir));
    pairs.back().overlap = static_cast<S>(entry.overlap);
  }
  if (pairs.empty()) throw std::runtime_error("no pairs found in " + dir.string());
  return pairs;
}

template <typename S>
int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 bool eval_unfiltered) {
  const iup::RunConfig<S> cfg = iup::load_config<S>(config_path);
  fs::create_directories(out_dir);
  const int threads = worker_threads();
  iup::generate_dataset(cfg.scene, fs::path(out_dir) / "train", threads);
  std::cout << "wrote " << cfg.scene.count << " training pairs to " << out_dir << "/train\n";
  if (eval_unfiltered) {
    iup::SceneConfig<S> ev = cfg.scene;
    ev.count = cfg.eval_count;
    ev.seed = cfg.eval_seed;
    ev.filtered = false;
    iup::generate_dataset(ev, fs::path(out_dir) / "eval", threads);
    std::cout << "wrote " << ev.count << " unfiltered eval pairs to " << out_dir << "/eval\n";
  }
  write_text(fs::path(out_dir) / "config_echo.cfg", iup::dump_config(cfg));
  return 0;
}

template <typename S>
int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_ckpt, const std::string& ablate) {
  iup::RunConfig<S> cfg = iup::load_config<S>(config_path);
  cfg.flags = apply_ablations(cfg.flags, ablate);
  const auto dataset = load_dataset<S>(data_dir);

  iup::IupPoseModel<S> model(cfg.model_seed, cfg.model);
  std::cout << "model parameters: " << iup::count_parameters(model.parameters()) << "\n";

  const fs::path out_path(out_ckpt);
  const fs::path out_parent = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
  fs::create_directories(out_parent);
  std::ofstream log(out_parent / "train_log.csv");
  if (!log) throw std::runtime_error("cannot open " + (out_parent / "train_log.csv").string());
  write_text(out_parent / "config_echo.cfg", iup::dump_config(cfg));

  int last_print = -1;
  const std::function<void(const iup::TrainRecord<S>&)> progress =
      [&](const iup::TrainRecord<S>& rec) {
        if (rec.step - last_print >= 100 || rec.step == cfg.optim.total_steps - 1) {
          std::cout << "step " << rec.step << " total=" << rec.loss.total_value << "\n";
          last_print = rec.step;
        }
      };
  const iup::TrainResult<S> result =
      iup::train_loop<S>(model, dataset, cfg.optim, cfg.flags, cfg.loss, &log, out_ckpt, progress);
  std::cout << "final smoothed loss: " << result.final_smoothed << "\n"
            << "checkpoint: " << out_ckpt << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& report_path,
             const std::string& config_path, bool oracle) {
  iup::RunConfig<double> cfg =
      config_path.empty() ? iup::RunConfig<double>{} : iup::load_config<double>(config_path);
  iup::IupPoseModel<double> model(cfg.model_seed, cfg.model);
  if (!ckpt.empty()) {
    iup::ParamList<double> params = model.parameters();
    iup::load_checkpoint(ckpt, params);
  } else if (!oracle) {
    throw std::runtime_error("eval: --ckpt is required unless --oracle is set");
  }

  const auto dataset = load_dataset<double>(data_dir);
  std::vector<iup::PairError<double>> errors;
  std::vector<double> rot_errs, trans_errs, pose_errs;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& pair : dataset) {
    iup::Mat3<double> r_pred;
    iup::Vec3<double> t_pred;
    if (oracle) {
      r_pred = pair.gt_r;
      t_pred = pair.gt_t_mag > 0 ? pair.gt_t_dir : iup::Vec3<double>::Zero();
    } else {
      const iup::PoseEstimate<double> est =
          model.forward(iup::image_to_tensor(pair.i0), iup::image_to_tensor(pair.i1), pair.k0,
                        pair.k1, cfg.flags);
      r_pred = est.rotation;
      t_pred = est.t_dir;
    }
    const iup::Vec3<double> gt_t =
        pair.gt_t_mag > 0 ? pair.gt_t_dir : iup::Vec3<double>::Zero();
    errors.push_back(iup::make_pair_error(r_pred, pair.gt_r, t_pred, gt_t, pair.overlap));
    rot_errs.push_back(errors.back().rot_err);
    trans_errs.push_back(errors.back().trans_err);
    pose_errs.push_back(errors.back().pose_err);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double fps = secs > 0 ? dataset.size() / secs : 0.0;

  const auto auc = iup::pose_auc(pose_errs);
  const iup::BucketReport<double> buckets = iup::bucket_report(errors);

  std::cout << "pairs: " << dataset.size() << "\n"
            << "median rotation error:    " << iup::median(rot_errs) << " deg\n"
            << "median translation error: " << iup::median(trans_errs) << " deg\n"
            << "AUC@5/10/20: " << auc.at(5.0) << " / " << auc.at(10.0) << " / " << auc.at(20.0)
            << "\n"
            << "throughput: " << fps << " pairs/s\n\n"
            << iup::format_bucket_table(buckets);

  if (!report_path.empty()) {
    json j;
    j["auc"] = {{"5", auc.at(5.0)}, {"10", auc.at(10.0)}, {"20", auc.at(20.0)}};
    j["median_rot_deg"] = iup::median(rot_errs);
    j["median_trans_deg"] = iup::median(trans_errs);
    j["pairs"] = dataset.size();
    j["fps"] = fps;
    j["buckets"] = json::array();
    for (const auto& row : buckets.rows) {
      json b;
      b["lo"] = row.range.lo;
      b["hi"] = row.range.hi;
      b["count"] = row.count;
      if (row.count > 0)
        b["auc10"] = row.auc10;
      else
        b["auc10"] = nullptr;
      j["buckets"].push_back(b);
    }
    j["overall_auc10"] = buckets.overall_auc10;
    write_text(report_path, j.dump(2) + "\n");
    std::cout << "report: " << report_path << "\n";
  }
  return 0;
}

int cmd_gradcheck(const std::string& block) {
  const auto results = iup::run_gradcheck_suite(block);
  if (results.empty()) {
    std::cerr << "no gradient checks matched block '" << block << "'\n";
    return 1;
  }
  std::printf("%-18s %14s %10s  %s\n", "block", "max rel err", "tolerance", "status");
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-18s %14.3e %10.0e  %s\n", r.name.c_str(), r.max_rel_err, r.tolerance,
                r.passed ? "pass" : "FAIL");
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_bench(const std::string& ckpt, int pairs) {
  iup::RunConfig<double> cfg;
  iup::IupPoseModel<double> model(cfg.model_seed, cfg.model);
  if (!ckpt.empty()) {
    iup::ParamList<double> params = model.parameters();
    iup::load_checkpoint(ckpt, params);
  }
  iup::SceneConfig<double> sc;
  sc.count = 1;
  sc.seed = 2718;
  const iup::ScenePair<double> pair = iup::generate_pairs(sc)[0];
  const iup::Tensor<double> i0 = iup::image_to_tensor(pair.i0);
  const iup::Tensor<double> i1 = iup::image_to_tensor(pair.i1);

  const int warmup = 10;
  double total = 0;
  for (int i = 0; i < warmup + pairs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    volatile double sink = model.forward(i0, i1, pair.k0, pair.k1).rotation(0, 0);
    (void)sink;
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (i >= warmup) total += dt;
  }
  const double mean_ms = total / pairs * 1000.0;
  std::cout << "timed " << pairs << " forward passes (after " << warmup << " warmup)\n"
            << "mean latency: " << mean_ms << " ms\n"
            << "FPS: " << 1000.0 / mean_ms << "\n";
  return 0;
}

int cmd_demo(const std::string& ckpt, const std::string& pair_dir, const std::string& out_dir) {
  iup::RunConfig<double> cfg;
  iup::IupPoseModel<double> model(cfg.model_seed, cfg.model);
  if (!ckpt.empty()) {
    iup::ParamList<double> params = model.parameters();
    iup::load_checkpoint(ckpt, params);
  }
  const iup::ScenePair<double> pair = iup::read_pair<double>(pair_dir);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);

  const iup::Tensor<double> i0 = iup::image_to_tensor(pair.i0);
  const iup::Tensor<double> i1 = iup::image_to_tensor(pair.i1);
  const iup::PoseEstimate<double> est = model.forward(i0, i1, pair.k0, pair.k1);
  std::cout << "predicted rotation angle: "
            << iup::rotation_error_deg(est.rotation, iup::Mat3<double>(iup::Mat3<double>::Identity())) << " deg ("
            << "gt " << iup::rotation_error_deg(pair.gt_r, iup::Mat3<double>(iup::Mat3<double>::Identity()))
            << " deg)\n";

  // Image i0 resampled into view 1 by the predicted rotational homography.
  const iup::Mat3<double> h = iup::rotational_homography(pair.k0, pair.k1, est.rotation);
  iup::SamplingGrid<double> grid =
      iup::homography_grid(h, pair.i1.height, pair.i1.width, pair.i0.height, pair.i0.width);
  const iup::Tensor<double> warped = iup::bilinear_sample(i0, grid);
  iup::Image<double> wimg(pair.i1.width, pair.i1.height);
  wimg.data.assign(warped.value().begin(), warped.value().end());
  iup::write_ppm((out / "warped_by_pred.ppm").string(), wimg);

  // Channel-mean encoder features of both views, min-max normalized.
  auto dump_feat = [&](const iup::Tensor<double>& img, const iup::CameraIntrinsics<double>& k,
                       const std::string& name) {
    const iup::Tensor<double> f = model.encoder(iup::build_input(img, k));
    const int c = f.shape()[0], fh = f.shape()[1], fw = f.shape()[2];
    std::vector<double> gray(static_cast<size_t>(fh) * fw, 0.0);
    for (int ch = 0; ch < c; ++ch)
      for (size_t p = 0; p < gray.size(); ++p) gray[p] += f.value()[ch * gray.size() + p] / c;
    const auto [lo, hi] = std::minmax_element(gray.begin(), gray.end());
    const double span = *hi - *lo > 1e-12 ? *hi - *lo : 1.0;
    for (double& v : gray) v = (v - *lo) / span;
    iup::write_pgm((out / name).string(), gray, fw, fh);
    return f;
  };
  const iup::Tensor<double> e0 = dump_feat(i0, pair.k0, "features_view0.pgm");
  const iup::Tensor<double> e1 = dump_feat(i1, pair.k1, "features_view1.pgm");

  // Cross-attention maps, one tile per query token, normalized per query.
  const iup::Tensor<double> s0 = model.sppf(e0);
  const iup::Tensor<double> s1 = model.sppf(e1);
  const int th = s0.shape()[1], tw = s0.shape()[2], n = th * tw;
  const iup::Mhbc<double>& m = model.mhbc;
  const iup::Tensor<double> q = iup::matmul(m.wq, iup::reshape(s0, {m.d_v, n}));
  const iup::Tensor<double> k = iup::matmul(m.wk, iup::reshape(s1, {m.d_v, n}));
  const int dkh = m.d_k / m.heads;
  for (int hd = 0; hd < m.heads; ++hd) {
    const iup::Tensor<double> a = iup::softmax(
        iup::scale(iup::matmul(iup::transpose2d(iup::slice0(q, hd * dkh, dkh)),
                               iup::slice0(k, hd * dkh, dkh)),
                   1.0 / std::sqrt(static_cast<double>(dkh))),
        1);
    // queries tiled in a th x tw grid; each tile is that query's map over
    // the other view's tokens, scaled so its own maximum is white
    std::vector<double> sheet(static_cast<size_t>(n) * n, 0.0);
    for (int qi = 0; qi < n; ++qi) {
      double mx = 0;
      for (int ki = 0; ki < n; ++ki) mx = std::max(mx, a.value()[qi * n + ki]);
      if (mx <= 0) mx = 1;
      const int qy = qi / tw, qx = qi % tw;
      for (int ki = 0; ki < n; ++ki) {
        const int ky = ki / tw, kx = ki % tw;
        sheet[static_cast<size_t>(qy * th + ky) * (tw * tw) + qx * tw + kx] =
            a.value()[qi * n + ki] / mx;
      }
    }
    iup::write_pgm((out / ("attention_head" + std::to_string(hd) + ".pgm")).string(), sheet,
                   tw * tw, th * th);
  }
  std::cout << "wrote demo outputs to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iuppose: decoupled iterative relative pose estimation"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_dir, ckpt, report_path, ablate, block, pair_dir;
  bool eval_unfiltered = false, oracle = false;
  int bench_pairs = 50;

  auto* gen = app.add_subcommand("gen-data", "Render a synthetic planar dataset");
  gen->add_option("--config", config_path, "Run configuration file")->required();
  gen->add_option("--out", out_path, "Output dataset directory")->required();
  gen->add_flag("--eval-unfiltered", eval_unfiltered,
                "Also render an unfiltered held-out eval split");

  auto* train = app.add_subcommand("train", "Train a model on a generated dataset");
  train->add_option("--config", config_path, "Run configuration file")->required();
  train->add_option("--data", data_dir, "Dataset directory (contains manifest.txt)")->required();
  train->add_option("--out", out_path, "Output checkpoint path")->required();
  train->add_option("--ablate", ablate,
                    "Comma-separated components to DISABLE: rt-dec,iter,ida,uncert,homo");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev->add_option("--ckpt", ckpt, "Checkpoint file");
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--report", report_path, "Write a JSON report here");
  ev->add_option("--config", config_path, "Optional config (model architecture/flags)");
  ev->add_flag("--oracle", oracle, "Replace predictions with ground truth (self-test)");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every block");
  gc->add_option("--block", block, "Restrict to one block name");

  auto* bench = app.add_subcommand("bench", "Measure forward-pass latency");
  bench->add_option("--ckpt", ckpt, "Checkpoint file (optional; fresh init otherwise)");
  bench->add_option("--pairs", bench_pairs, "Timed iterations (after 10 warmup)")
      ->check(CLI::PositiveNumber);

  auto* demo = app.add_subcommand("demo", "Dump warped images and attention heatmaps");
  demo->add_option("--ckpt", ckpt, "Checkpoint file (optional; fresh init otherwise)");
  demo->add_option("--pair", pair_dir, "Directory of one rendered pair")->required();
  demo->add_option("--out", out_path, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = iup::load_config<double>(config_path);
      return cfg.precision == "float"
                 ? cmd_gen_data<float>(config_path, out_path, eval_unfiltered)
                 : cmd_gen_data<double>(config_path, out_path, eval_unfiltered);
    }
    if (train->parsed()) {
      const auto cfg = iup::load_config<double>(config_path);
      return cfg.precision == "float" ? cmd_train<float>(config_path, data_dir, out_path, ablate)
                                      : cmd_train<double>(config_path, data_dir, out_path, ablate);
    }
    if (ev->parsed()) return cmd_eval(ckpt, data_dir, report_path, config_path, oracle);
    if (gc->parsed()) return cmd_gradcheck(block);
    if (bench->parsed()) return cmd_bench(ckpt, bench_pairs);
    if (demo->parsed()) return cmd_demo(ckpt, pair_dir, out_path);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
