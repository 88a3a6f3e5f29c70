#ifndef IUP_SCENES_HPP
#define IUP_SCENES_HPP

#include <Eigen/Dense>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "iup/image.hpp"
#include "iup/so3.hpp"

namespace iup {

template <typename S>
struct SceneConfig {
  int width = 64, height = 64;
  S focal_min = S(48), focal_max = S(80);
  S max_rot_deg = S(30);
  S trans_min = S(0), trans_max = S(0.5);
  S depth_min = S(2), depth_max = S(5);
  S tilt_max_deg = S(40);
  int count = 0;
  uint64_t seed = 0;
  S overlap_lo = S(0.3), overlap_hi = S(1.0);
  bool filtered = true;  // train mode resamples until overlap is in range
  bool pure_rotation = false;
  int num_planes = 1;  // 2 = stretch mode with z-ordered compositing
  bool photometric_aug = false;
  int texture_res = 384;
  std::string texture_file;  // empty = procedural

  void validate() const {
    if (width % 32 != 0 || height % 32 != 0)
      throw std::invalid_argument("SceneConfig: image size must be divisible by 32");
    if (!(overlap_lo < overlap_hi) || overlap_lo < S(0) || overlap_hi > S(1))
      throw std::invalid_argument("SceneConfig: overlap filter must satisfy 0 <= lo < hi <= 1");
    if (num_planes < 1 || num_planes > 2)
      throw std::invalid_argument("SceneConfig: num_planes must be 1 or 2");
  }
};

template <typename S>
struct ScenePair {
  Image<S> i0, i1;
  CameraIntrinsics<S> k0, k1;
  Mat3<S> gt_r = Mat3<S>::Identity();
  Vec3<S> gt_t_dir = Vec3<S>(S(1), S(0), S(0));
  S gt_t_mag = S(0);
  PlaneParams<S> plane;
  S overlap = S(1);
};

namespace scene_detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Each pair derives its own stream from (seed, index) so parallel and
/// serial generation are byte-identical.
inline std::mt19937_64 pair_rng(uint64_t seed, uint64_t index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index + 1)));
}

template <typename S>
Vec3<S> uniform_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3<S> v;
  do {
    v = Vec3<S>(static_cast<S>(n(rng)), static_cast<S>(n(rng)), static_cast<S>(n(rng)));
  } while (v.norm() < S(1e-6));
  return v.normalized();
}

template <typename S>
std::string fmt17(S v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(v));
  return buf;
}

}  // namespace scene_detail

/// Band-limited random Fourier field rasterized over a plane-coordinate
/// bounding box, mapped through a random color palette. Coverage is sized
/// from the views' back-projections, so procedural textures never run out.
template <typename S>
struct PlaneTexture {
  Image<S> raster;
  S u0 = S(0), v0 = S(0), du = S(1), dv = S(1);  // uv -> raster mapping

  /// Bilinear lookup at plane coordinates (u, v); out-of-raster lookups
  /// clamp (procedural rasters always cover the needed margin).
  void sample(S u, S v, S rgb[3]) const {
    const S x = std::clamp((u - u0) / du * S(raster.width - 1), S(0), S(raster.width - 1));
    const S y = std::clamp((v - v0) / dv * S(raster.height - 1), S(0), S(raster.height - 1));
    const int x0 = std::min(static_cast<int>(x), raster.width - 2 >= 0 ? raster.width - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), raster.height - 2 >= 0 ? raster.height - 2 : 0);
    const S fx = x - S(x0), fy = y - S(y0);
    const int x1 = std::min(x0 + 1, raster.width - 1);
    const int y1 = std::min(y0 + 1, raster.height - 1);
    for (int c = 0; c < 3; ++c) {
      rgb[c] = raster.at(c, y0, x0) * (S(1) - fx) * (S(1) - fy) +
               raster.at(c, y0, x1) * fx * (S(1) - fy) +
               raster.at(c, y1, x0) * (S(1) - fx) * fy + raster.at(c, y1, x1) * fx * fy;
    }
  }

  static PlaneTexture procedural(std::mt19937_64& rng, int res, S u_min, S u_max, S v_min,
                                 S v_max) {
    PlaneTexture tex;
    const S margin_u = (u_max - u_min) * S(0.05) + S(1e-6);
    const S margin_v = (v_max - v_min) * S(0.05) + S(1e-6);
    tex.u0 = u_min - margin_u;
    tex.v0 = v_min - margin_v;
    tex.du = (u_max - u_min) + S(2) * margin_u;
    tex.dv = (v_max - v_min) + S(2) * margin_v;
    tex.raster = Image<S>(res, res);

    std::uniform_real_distribution<double> uni(0.0, 1.0);
    constexpr int kComponents = 40;
    struct Wave {
      double fx, fy, phase, amp;
    };
    std::vector<Wave> waves(kComponents);
    for (auto& w : waves) {
      const double freq = std::exp(std::log(1.5) + uni(rng) * (std::log(8.0) - std::log(1.5)));
      const double dir = uni(rng) * 2.0 * M_PI;
      w.fx = freq * std::cos(dir);
      w.fy = freq * std::sin(dir);
      w.phase = uni(rng) * 2.0 * M_PI;
      w.amp = 1.0 / std::sqrt(freq);
    }
    // Large Gaussian bumps give the field a few distinct trackable
    // landmarks on top of the band-limited waves.
    constexpr int kBlobs = 6;
    struct Blob {
      double cx, cy, inv2s2, amp;
    };
    std::vector<Blob> blobs(kBlobs);
    for (auto& b : blobs) {
      b.cx = 0.1 + 0.8 * uni(rng);
      b.cy = 0.1 + 0.8 * uni(rng);
      const double sigma = 0.06 + 0.10 * uni(rng);
      b.inv2s2 = 1.0 / (2.0 * sigma * sigma);
      b.amp = (uni(rng) < 0.5 ? -1.0 : 1.0) * (2.0 + 2.0 * uni(rng));
    }
    constexpr int kPalette = 6;
    double palette[kPalette][3];
    for (auto& p : palette)
      for (double& c : p) c = 0.1 + 0.8 * uni(rng);

    std::vector<double> field(static_cast<size_t>(res) * res);
    double lo = 1e30, hi = -1e30;
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        const double un = static_cast<double>(x) / (res - 1);
        const double vn = static_cast<double>(y) / (res - 1);
        double v = 0;
        for (const auto& w : waves)
          v += w.amp * std::cos(2.0 * M_PI * (w.fx * un + w.fy * vn) + w.phase);
        for (const auto& b : blobs) {
          const double dx = un - b.cx, dy = vn - b.cy;
          v += b.amp * std::exp(-(dx * dx + dy * dy) * b.inv2s2);
        }
        field[static_cast<size_t>(y) * res + x] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    const double span = (hi > lo) ? hi - lo : 1.0;
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        const double t = (field[static_cast<size_t>(y) * res + x] - lo) / span * (kPalette - 1);
        const int i0 = std::min(static_cast<int>(t), kPalette - 2);
        const double f = t - i0;
        for (int c = 0; c < 3; ++c)
          tex.raster.at(c, y, x) =
              static_cast<S>(palette[i0][c] * (1.0 - f) + palette[i0 + 1][c] * f);
      }
    return tex;
  }

  /// An image texture spans a fixed 10x10 plane-unit patch centered at the
  /// plane origin; views whose back-projection leaves that patch fail.
  static PlaneTexture from_image(const Image<S>& img, S u_min, S u_max, S v_min, S v_max) {
    const S half = S(5);
    if (u_min < -half || u_max > half || v_min < -half || v_max > half) {
      std::ostringstream os;
      os << "render_plane_pair: texture covers [" << -half << "," << half
         << "]^2 plane units but the views back-project onto [" << u_min << "," << u_max
         << "]x[" << v_min << "," << v_max << "]";
      throw std::runtime_error(os.str());
    }
    PlaneTexture tex;
    tex.raster = img;
    tex.u0 = -half;
    tex.v0 = -half;
    tex.du = S(2) * half;
    tex.dv = S(2) * half;
    return tex;
  }
};

/// Rotation + translation + plane draw with front-of-camera rejection
/// (up to 1000 tries).
template <typename S>
std::tuple<Mat3<S>, Vec3<S>, S, PlaneParams<S>> sample_relative_pose(const SceneConfig<S>& cfg,
                                                                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const S deg = S(M_PI) / S(180);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const Vec3<S> axis = scene_detail::uniform_unit_vector<S>(rng);
    const S angle = static_cast<S>(uni(rng)) * cfg.max_rot_deg * deg;
    const Mat3<S> r = exp_so3<S>(axis * angle);

    Vec3<S> t_dir = scene_detail::uniform_unit_vector<S>(rng);
    S t_mag = cfg.pure_rotation
                  ? S(0)
                  : cfg.trans_min + static_cast<S>(uni(rng)) * (cfg.trans_max - cfg.trans_min);
    if (cfg.pure_rotation) t_dir = Vec3<S>(S(1), S(0), S(0));

    const S tilt = static_cast<S>(uni(rng)) * cfg.tilt_max_deg * deg;
    const S tilt_dir = static_cast<S>(uni(rng)) * S(2) * S(M_PI);
    const Vec3<S> tilt_axis(std::cos(tilt_dir), std::sin(tilt_dir), S(0));
    PlaneParams<S> plane;
    plane.n = exp_so3<S>(tilt_axis * tilt) * Vec3<S>(S(0), S(0), S(1));
    plane.d = cfg.depth_min + static_cast<S>(uni(rng)) * (cfg.depth_max - cfg.depth_min);

    // Plane must pierce both optical axes in front of the cameras.
    const Vec3<S> t_s = t_dir * t_mag;
    const Vec3<S> n1 = r * plane.n;
    const S d1 = plane.d + n1.dot(t_s);
    if (plane.n.z() <= S(1e-3) || n1.z() <= S(1e-3)) continue;
    if (plane.d / plane.n.z() <= S(0.1) || d1 / n1.z() <= S(0.1)) continue;
    return {r, t_dir, t_mag, plane};
  }
  throw std::runtime_error("sample_relative_pose: no plane in front of both cameras after 1000 tries");
}

namespace scene_detail {

template <typename S>
struct PlaneGeom {
  PlaneParams<S> plane;
  Vec3<S> e1, e2;  // orthonormal in-plane basis
  const PlaneTexture<S>* tex = nullptr;
};

// Intersect a camera-frame ray with a plane n.X = d; negative or near-zero
// denominators yield no hit.
template <typename S>
std::optional<std::pair<Vec3<S>, S>> intersect(const Vec3<S>& dir, const PlaneParams<S>& p) {
  const S den = p.n.dot(dir);
  if (std::abs(den) < S(1e-9)) return std::nullopt;
  const S lambda = p.d / den;
  if (lambda <= S(0)) return std::nullopt;
  const Vec3<S> x = lambda * dir;
  if (x.z() <= S(0)) return std::nullopt;
  return std::make_pair(x, x.z());
}

}  // namespace scene_detail

/// Render both views of one (or two, z-ordered) textured planes under an
/// exactly-known relative pose. The overlap ratio is the fraction of i1
/// pixels whose pre-image lies inside i0.
template <typename S>
ScenePair<S> render_plane_pair(const SceneConfig<S>& cfg, std::mt19937_64& rng,
                               const Mat3<S>& r, const Vec3<S>& t_dir, S t_mag,
                               const PlaneParams<S>& plane) {
  const int w = cfg.width, h = cfg.height;
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  ScenePair<S> pair;
  pair.gt_r = r;
  pair.gt_t_dir = t_dir;
  pair.gt_t_mag = t_mag;
  pair.plane = plane;
  pair.k0 = CameraIntrinsics<S>(
      cfg.focal_min + static_cast<S>(uni(rng)) * (cfg.focal_max - cfg.focal_min),
      cfg.focal_min + static_cast<S>(uni(rng)) * (cfg.focal_max - cfg.focal_min),
      S(w - 1) / S(2), S(h - 1) / S(2));
  pair.k1 = CameraIntrinsics<S>(
      cfg.focal_min + static_cast<S>(uni(rng)) * (cfg.focal_max - cfg.focal_min),
      cfg.focal_min + static_cast<S>(uni(rng)) * (cfg.focal_max - cfg.focal_min),
      S(w - 1) / S(2), S(h - 1) / S(2));

  const Vec3<S> t_s = t_dir * t_mag;
  std::vector<scene_detail::PlaneGeom<S>> geoms;
  {
    scene_detail::PlaneGeom<S> g;
    g.plane = plane;
    g.e1 = plane.n.unitOrthogonal();
    g.e2 = plane.n.cross(g.e1);
    geoms.push_back(g);
  }
  if (cfg.num_planes == 2) {
    // Secondary plane for the stretch mode; slightly deeper, own tilt.
    PlaneParams<S> p2;
    const S tilt = static_cast<S>(uni(rng)) * cfg.tilt_max_deg * S(M_PI) / S(180);
    const S dir = static_cast<S>(uni(rng)) * S(2) * S(M_PI);
    p2.n = exp_so3<S>(Vec3<S>(std::cos(dir), std::sin(dir), S(0)) * tilt) *
           Vec3<S>(S(0), S(0), S(1));
    p2.d = plane.d * (S(1.2) + static_cast<S>(uni(rng)) * S(0.8));
    if (p2.n.z() > S(1e-3)) {
      scene_detail::PlaneGeom<S> g;
      g.plane = p2;
      g.e1 = p2.n.unitOrthogonal();
      g.e2 = p2.n.cross(g.e1);
      geoms.push_back(g);
    }
  }

  const Mat3<S> k0i = pair.k0.inverse();
  const Mat3<S> k1i = pair.k1.inverse();
  const Mat3<S> rt = r.transpose();

  // uv bounding box per plane from a coarse back-projection grid of both
  // views.
  struct Bounds {
    S u_min = S(1e30), u_max = S(-1e30), v_min = S(1e30), v_max = S(-1e30);
    void add(S u, S v) {
      u_min = std::min(u_min, u);
      u_max = std::max(u_max, u);
      v_min = std::min(v_min, v);
      v_max = std::max(v_max, v);
    }
    bool ok() const { return u_min < u_max && v_min < v_max; }
  };
  std::vector<Bounds> bounds(geoms.size());
  constexpr int kGrid = 9;
  for (int gy = 0; gy < kGrid; ++gy)
    for (int gx = 0; gx < kGrid; ++gx) {
      const S px = S(gx) / S(kGrid - 1) * S(w - 1);
      const S py = S(gy) / S(kGrid - 1) * S(h - 1);
      for (size_t gi = 0; gi < geoms.size(); ++gi) {
        const auto& g = geoms[gi];
        // View 0.
        if (auto hit = scene_detail::intersect<S>(k0i * Vec3<S>(px, py, S(1)), g.plane))
          bounds[gi].add(g.e1.dot(hit->first), g.e2.dot(hit->first));
        // View 1: ray in cam-1 frame, plane expressed in cam-0 frame.
        const Vec3<S> dir1 = k1i * Vec3<S>(px, py, S(1));
        PlaneParams<S> p1{r * g.plane.n, g.plane.d + (r * g.plane.n).dot(t_s)};
        if (auto hit = scene_detail::intersect<S>(dir1, p1)) {
          const Vec3<S> x0 = rt * (hit->first - t_s);
          bounds[gi].add(g.e1.dot(x0), g.e2.dot(x0));
        }
      }
    }

  std::vector<PlaneTexture<S>> textures;
  for (size_t gi = 0; gi < geoms.size(); ++gi) {
    if (!bounds[gi].ok()) {
      bounds[gi] = Bounds{};
      bounds[gi].add(S(-1), S(-1));
      bounds[gi].add(S(1), S(1));
    }
    if (!cfg.texture_file.empty()) {
      const Image<S> img = read_ppm<S>(cfg.texture_file);
      textures.push_back(PlaneTexture<S>::from_image(img, bounds[gi].u_min, bounds[gi].u_max,
                                                     bounds[gi].v_min, bounds[gi].v_max));
    } else {
      textures.push_back(PlaneTexture<S>::procedural(rng, cfg.texture_res, bounds[gi].u_min,
                                                     bounds[gi].u_max, bounds[gi].v_min,
                                                     bounds[gi].v_max));
    }
  }
  for (size_t gi = 0; gi < geoms.size(); ++gi) geoms[gi].tex = &textures[gi];

  // Shade a camera-frame ray against the nearest plane.
  const auto shade0 = [&](const Vec3<S>& dir, S rgb[3]) -> bool {
    S best_z = S(1e30);
    const scene_detail::PlaneGeom<S>* best = nullptr;
    Vec3<S> best_x;
    for (const auto& g : geoms)
      if (auto hit = scene_detail::intersect<S>(dir, g.plane))
        if (hit->second < best_z) {
          best_z = hit->second;
          best = &g;
          best_x = hit->first;
        }
    if (!best) return false;
    best->tex->sample(best->e1.dot(best_x), best->e2.dot(best_x), rgb);
    return true;
  };

  pair.i0 = Image<S>(w, h);
  pair.i1 = Image<S>(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      S rgb[3];
      if (shade0(k0i * Vec3<S>(S(x), S(y), S(1)), rgb))
        for (int c = 0; c < 3; ++c) pair.i0.at(c, y, x) = rgb[c];
    }

  int valid_count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vec3<S> dir1 = k1i * Vec3<S>(S(x), S(y), S(1));
      S best_z = S(1e30);
      const scene_detail::PlaneGeom<S>* best = nullptr;
      Vec3<S> best_x0;
      for (const auto& g : geoms) {
        PlaneParams<S> p1{r * g.plane.n, g.plane.d + (r * g.plane.n).dot(t_s)};
        if (auto hit = scene_detail::intersect<S>(dir1, p1))
          if (hit->second < best_z) {
            best_z = hit->second;
            best = &g;
            best_x0 = rt * (hit->first - t_s);
          }
      }
      if (!best) continue;
      S rgb[3];
      best->tex->sample(best->e1.dot(best_x0), best->e2.dot(best_x0), rgb);
      for (int c = 0; c < 3; ++c) pair.i1.at(c, y, x) = rgb[c];
      // Pre-image inside view 0 (and in front of it) counts toward overlap.
      if (best_x0.z() > S(0)) {
        const Vec3<S> p0 = pair.k0.matrix() * best_x0;
        const S u0 = p0.x() / p0.z(), v0 = p0.y() / p0.z();
        if (u0 >= S(0) && u0 <= S(w - 1) && v0 >= S(0) && v0 <= S(h - 1)) ++valid_count;
      }
    }
  pair.overlap = S(valid_count) / S(w * h);

  if (cfg.photometric_aug) {
    const S gain = S(0.8) + static_cast<S>(uni(rng)) * S(0.4);
    const S bias = S(-0.05) + static_cast<S>(uni(rng)) * S(0.1);
    for (auto& v : pair.i1.data) v = std::clamp(gain * v + bias, S(0), S(1));
  }
  return pair;
}

/// Draw pose + plane + render; train mode resamples until the overlap
/// filter accepts (bounded).
template <typename S>
ScenePair<S> generate_pair(const SceneConfig<S>& cfg, uint64_t index) {
  auto rng = scene_detail::pair_rng(cfg.seed, index);
  for (int attempt = 0; attempt < 200; ++attempt) {
    auto [r, t_dir, t_mag, plane] = sample_relative_pose(cfg, rng);
    ScenePair<S> pair = render_plane_pair(cfg, rng, r, t_dir, t_mag, plane);
    if (!cfg.filtered) return pair;
    if (pair.overlap >= cfg.overlap_lo && pair.overlap <= cfg.overlap_hi) return pair;
  }
  throw std::runtime_error("generate_pair: overlap filter rejected 200 consecutive renders");
}

// ---------------------------------------------------------------------------
// on-disk format
// ---------------------------------------------------------------------------

template <typename S>
void write_pair(const std::filesystem::path& dir, const ScenePair<S>& pair) {
  std::filesystem::create_directories(dir);
  write_ppm((dir / "i0.ppm").string(), pair.i0);
  write_ppm((dir / "i1.ppm").string(), pair.i1);
  std::ofstream meta(dir / "meta.txt");
  if (!meta) throw std::runtime_error("write_pair: cannot open " + (dir / "meta.txt").string());
  using scene_detail::fmt17;
  meta << "K0: " << fmt17(pair.k0.fx) << " " << fmt17(pair.k0.fy) << " " << fmt17(pair.k0.cx)
       << " " << fmt17(pair.k0.cy) << "\n";
  meta << "K1: " << fmt17(pair.k1.fx) << " " << fmt17(pair.k1.fy) << " " << fmt17(pair.k1.cx)
       << " " << fmt17(pair.k1.cy) << "\n";
  meta << "R:";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) meta << " " << fmt17(pair.gt_r(i, j));
  meta << "\n";
  meta << "t_dir: " << fmt17(pair.gt_t_dir.x()) << " " << fmt17(pair.gt_t_dir.y()) << " "
       << fmt17(pair.gt_t_dir.z()) << "\n";
  meta << "t_mag: " << fmt17(pair.gt_t_mag) << "\n";
  meta << "n: " << fmt17(pair.plane.n.x()) << " " << fmt17(pair.plane.n.y()) << " "
       << fmt17(pair.plane.n.z()) << "\n";
  meta << "d: " << fmt17(pair.plane.d) << "\n";
  meta << "overlap: " << fmt17(pair.overlap) << "\n";
}

template <typename S>
ScenePair<S> read_pair(const std::filesystem::path& dir) {
  ScenePair<S> pair;
  pair.i0 = read_ppm<S>((dir / "i0.ppm").string());
  pair.i1 = read_ppm<S>((dir / "i1.ppm").string());
  std::ifstream meta(dir / "meta.txt");
  if (!meta) throw std::runtime_error("read_pair: cannot open " + (dir / "meta.txt").string());
  std::string line;
  while (std::getline(meta, line)) {
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "K0:")
      is >> pair.k0.fx >> pair.k0.fy >> pair.k0.cx >> pair.k0.cy;
    else if (key == "K1:")
      is >> pair.k1.fx >> pair.k1.fy >> pair.k1.cx >> pair.k1.cy;
    else if (key == "R:")
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) is >> pair.gt_r(i, j);
    else if (key == "t_dir:")
      is >> pair.gt_t_dir.x() >> pair.gt_t_dir.y() >> pair.gt_t_dir.z();
    else if (key == "t_mag:")
      is >> pair.gt_t_mag;
    else if (key == "n:")
      is >> pair.plane.n.x() >> pair.plane.n.y() >> pair.plane.n.z();
    else if (key == "d:")
      is >> pair.plane.d;
    else if (key == "overlap:")
      is >> pair.overlap;
  }
  return pair;
}

/// In-memory dataset; same pairs generate_dataset would write to disk.
template <typename S>
std::vector<ScenePair<S>> generate_pairs(const SceneConfig<S>& cfg, int threads = 1) {
  cfg.validate();
  std::vector<ScenePair<S>> pairs(static_cast<size_t>(cfg.count));
  const auto work = [&](int begin, int end) {
    for (int i = begin; i < end; ++i)
      pairs[static_cast<size_t>(i)] = generate_pair(cfg, static_cast<uint64_t>(i));
  };
  if (threads <= 1 || cfg.count < 4) {
    work(0, cfg.count);
  } else {
    std::vector<std::thread> pool;
    const int per = (cfg.count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back(work, std::min(t * per, cfg.count), std::min((t + 1) * per, cfg.count));
    for (auto& th : pool) th.join();
  }
  return pairs;
}

struct ManifestEntry {
  std::string rel_dir;
  double overlap;
};

/// Write cfg.count pairs plus manifest.txt; deterministic in cfg.seed.
/// Returns the manifest.
template <typename S>
std::vector<ManifestEntry> generate_dataset(const SceneConfig<S>& cfg,
                                            const std::filesystem::path& out_dir,
                                            int threads = 1) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  std::vector<ManifestEntry> manifest(static_cast<size_t>(cfg.count));
  const auto work = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const ScenePair<S> pair = generate_pair(cfg, static_cast<uint64_t>(i));
      char name[32];
      std::snprintf(name, sizeof(name), "pair_%06d", i);
      write_pair(out_dir / name, pair);
      manifest[static_cast<size_t>(i)] = {name, static_cast<double>(pair.overlap)};
    }
  };
  if (threads <= 1 || cfg.count < 4) {
    work(0, cfg.count);
  } else {
    std::vector<std::thread> pool;
    const int per = (cfg.count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back(work, std::min(t * per, cfg.count), std::min((t + 1) * per, cfg.count));
    for (auto& th : pool) th.join();
  }
  std::ofstream mf(out_dir / "manifest.txt");
  if (!mf)
    throw std::runtime_error("generate_dataset: cannot open " +
                             (out_dir / "manifest.txt").string());
  for (const auto& e : manifest)
    mf << e.rel_dir << " " << scene_detail::fmt17(e.overlap) << "\n";
  return manifest;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dataset_dir) {
  std::ifstream mf(dataset_dir / "manifest.txt");
  if (!mf)
    throw std::runtime_error("read_manifest: cannot open " +
                             (dataset_dir / "manifest.txt").string());
  std::vector<ManifestEntry> out;
  std::string dir;
  double ov;
  while (mf >> dir >> ov) out.push_back({dir, ov});
  return out;
}

}  // namespace iup

#endif
