#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "iup/scenes.hpp"
#include "iup/warp.hpp"

using namespace iup;
namespace fs = std::filesystem;
using Mat = Mat3<double>;
using Vec = Vec3<double>;

namespace {

SceneConfig<double> base_cfg() {
  SceneConfig<double> cfg;
  cfg.width = 64;
  cfg.height = 64;
  cfg.count = 4;
  cfg.seed = 555;
  return cfg;
}

bool images_equal(const Image<double>& a, const Image<double>& b) {
  if (a.width != b.width || a.height != b.height) return false;
  return a.data == b.data;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

Tensor<double> image_tensor(const Image<double>& img) {
  return Tensor<double>::from_vector({3, img.height, img.width},
                                     std::vector<double>(img.data.begin(), img.data.end()));
}

}  // namespace

TEST_CASE("zero relative pose renders identical views with full overlap") {
  SceneConfig<double> cfg = base_cfg();
  cfg.focal_min = cfg.focal_max = 0.5 * (cfg.focal_min + cfg.focal_max);  // same K both views
  std::mt19937_64 rng(7);
  PlaneParams<double> plane{Vec(0.05, -0.02, 1.0).normalized(), 3.0};
  ScenePair<double> pair = render_plane_pair<double>(cfg, rng, Mat(Mat::Identity()),
                                                     Vec(1, 0, 0), 0.0, plane);
  CHECK(pair.k0.fx == pair.k1.fx);
  CHECK(images_equal(pair.i0, pair.i1));
  CHECK(pair.overlap > 0.99);  // border pixels may land exactly on the image edge
}

TEST_CASE("generation is deterministic in the seed") {
  SceneConfig<double> cfg = base_cfg();
  auto a = generate_pairs(cfg);
  auto b = generate_pairs(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(images_equal(a[i].i0, b[i].i0));
    CHECK(images_equal(a[i].i1, b[i].i1));
    CHECK((a[i].gt_r - b[i].gt_r).norm() == 0.0);
    CHECK(a[i].overlap == b[i].overlap);
  }
  cfg.seed = 556;
  auto c = generate_pairs(cfg);
  CHECK(!images_equal(a[0].i0, c[0].i0));  // different seed, different scene
}

TEST_CASE("threaded dataset writes byte-identical files") {
  SceneConfig<double> cfg = base_cfg();
  cfg.count = 6;
  const fs::path d1 = fs::temp_directory_path() / "iup_scene_serial";
  const fs::path d2 = fs::temp_directory_path() / "iup_scene_threaded";
  fs::remove_all(d1);
  fs::remove_all(d2);
  generate_dataset(cfg, d1, 1);
  generate_dataset(cfg, d2, 3);
  for (const auto& entry : fs::recursive_directory_iterator(d1)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), d1);
    CHECK(slurp(entry.path()) == slurp(d2 / rel));
  }
  CHECK(read_manifest(d1).size() == 6);
}

TEST_CASE("filtered generation respects the overlap window") {
  SceneConfig<double> cfg = base_cfg();
  cfg.count = 16;
  cfg.overlap_lo = 0.3;
  cfg.overlap_hi = 1.0;
  for (const auto& pair : generate_pairs(cfg)) {
    CHECK(pair.overlap >= 0.3);
    CHECK(pair.overlap <= 1.0);
    CHECK(geodesic_angle(Mat(Mat::Identity()), pair.gt_r) <= 30.0 * M_PI / 180.0 + 1e-9);
    CHECK(pair.gt_t_dir.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("pure-rotation render agrees with homography resampling") {
  SceneConfig<double> cfg = base_cfg();
  cfg.pure_rotation = true;
  cfg.max_rot_deg = 15.0;
  cfg.count = 3;
  for (const auto& pair : generate_pairs(cfg)) {
    // i1 pixels map into i0 through the rotational homography, so warping i0
    // with H^-1 must reproduce i1 up to interpolation error on valid cells.
    const Mat h = rotational_homography(pair.k0, pair.k1, pair.gt_r);
    SamplingGrid<double> g =
        homography_grid(h, cfg.height, cfg.width, cfg.height, cfg.width);
    const Tensor<double> warped = bilinear_sample(image_tensor(pair.i0), g);
    const Tensor<double> target = image_tensor(pair.i1);
    double sum = 0;
    int count = 0;
    const size_t plane = static_cast<size_t>(cfg.width) * cfg.height;
    for (size_t p = 0; p < plane; ++p) {
      if (!g.valid[p]) continue;
      for (int c = 0; c < 3; ++c) {
        sum += std::abs(warped.value()[c * plane + p] - target.value()[c * plane + p]);
        ++count;
      }
    }
    REQUIRE(count > 0);
    CHECK(sum / count < 2.0 / 255.0);
  }
}

TEST_CASE("planar pair satisfies the plane-induced homography") {
  SceneConfig<double> cfg = base_cfg();
  cfg.count = 2;
  cfg.photometric_aug = false;
  for (const auto& pair : generate_pairs(cfg)) {
    const Vec t = pair.gt_t_dir * pair.gt_t_mag;
    const Mat h = plane_homography(pair.k0, pair.k1, pair.gt_r, t, pair.plane);
    SamplingGrid<double> g =
        homography_grid(h, cfg.height, cfg.width, cfg.height, cfg.width);
    const Tensor<double> warped = bilinear_sample(image_tensor(pair.i0), g);
    const Tensor<double> target = image_tensor(pair.i1);
    double sum = 0;
    int count = 0;
    const size_t plane = static_cast<size_t>(cfg.width) * cfg.height;
    for (size_t p = 0; p < plane; ++p) {
      if (!g.valid[p]) continue;
      for (int c = 0; c < 3; ++c) {
        sum += std::abs(warped.value()[c * plane + p] - target.value()[c * plane + p]);
        ++count;
      }
    }
    REQUIRE(count > 0);
    CHECK(sum / count < 2.0 / 255.0);
  }
}

TEST_CASE("overlap is roughly symmetric under pose inversion") {
  SceneConfig<double> cfg = base_cfg();
  cfg.count = 8;
  // pin the focal range so the reverse render sees the same intrinsics
  cfg.focal_min = cfg.focal_max = 0.5 * (cfg.focal_min + cfg.focal_max);
  std::mt19937_64 rng(123);
  int checked = 0;
  for (const auto& pair : generate_pairs(cfg)) {
    const Vec t = pair.gt_t_dir * pair.gt_t_mag;
    // plane expressed in the second camera frame
    const Vec n1 = pair.gt_r * pair.plane.n;
    const double d1 = pair.plane.d + n1.dot(t);
    if (n1.z() <= 1e-3 || d1 / n1.z() <= 0.1) continue;
    std::mt19937_64 local(1);  // texture re-randomized; only overlap matters
    SceneConfig<double> rcfg = cfg;
    const Vec t_rev = -(pair.gt_r.transpose() * t);
    const double mag = t_rev.norm();
    ScenePair<double> rev = render_plane_pair<double>(
        rcfg, local, Mat(pair.gt_r.transpose()),
        mag > 0 ? Vec(t_rev / mag) : Vec(1, 0, 0), mag, PlaneParams<double>{n1, d1});
    CHECK(std::abs(rev.overlap - pair.overlap) < 0.3);
    ++checked;
  }
  CHECK(checked >= 4);
}

TEST_CASE("empty dataset still writes a manifest") {
  SceneConfig<double> cfg = base_cfg();
  cfg.count = 0;
  const fs::path dir = fs::temp_directory_path() / "iup_scene_empty";
  fs::remove_all(dir);
  CHECK(generate_dataset(cfg, dir).empty());
  CHECK(fs::exists(dir / "manifest.txt"));
  CHECK(read_manifest(dir).empty());
}

TEST_CASE("pair round-trips through disk") {
  SceneConfig<double> cfg = base_cfg();
  cfg.count = 1;
  const ScenePair<double> pair = generate_pairs(cfg)[0];
  const fs::path dir = fs::temp_directory_path() / "iup_scene_rt";
  fs::remove_all(dir);
  write_pair(dir, pair);
  const ScenePair<double> back = read_pair<double>(dir);
  CHECK((back.gt_r - pair.gt_r).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((back.gt_t_dir - pair.gt_t_dir).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(back.gt_t_mag == pair.gt_t_mag);
  CHECK(back.k0.fx == pair.k0.fx);
  CHECK(back.overlap == pair.overlap);
  // images are stored as 8-bit; values agree after quantization
  for (size_t i = 0; i < pair.i0.data.size(); ++i)
    CHECK(to_byte(back.i0.data[i]) == to_byte(pair.i0.data[i]));
}

TEST_CASE("sampled rotations cover a range of axes") {
  SceneConfig<double> cfg = base_cfg();
  cfg.count = 64;
  double max_angle = 0;
  int nontrivial = 0;
  for (const auto& pair : generate_pairs(cfg)) {
    const double a = geodesic_angle(Mat(Mat::Identity()), pair.gt_r);
    max_angle = std::max(max_angle, a);
    if (a > 1e-3) ++nontrivial;
  }
  CHECK(max_angle <= 30.0 * M_PI / 180.0 + 1e-9);
  CHECK(max_angle > 5.0 * M_PI / 180.0);  // distribution actually spreads out
  CHECK(nontrivial >= 60);
}

TEST_CASE("config validation rejects bad settings") {
  SceneConfig<double> cfg = base_cfg();
  cfg.width = 60;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = base_cfg();
  cfg.overlap_lo = 0.9;
  cfg.overlap_hi = 0.2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = base_cfg();
  cfg.num_planes = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
