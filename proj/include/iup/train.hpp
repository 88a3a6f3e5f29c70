#ifndef IUP_TRAIN_HPP
#define IUP_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "iup/losses.hpp"
#include "iup/pipeline.hpp"
#include "iup/scenes.hpp"

namespace iup {

template <typename S>
struct OptimConfig {
  S lr = S(2e-4);
  S weight_decay = S(0.01);
  S grad_clip = S(5);
  int warmup_steps = 100;
  int total_steps = 2000;
  int batch_size = 8;
  uint64_t seed = 0;
  S beta1 = S(0.9), beta2 = S(0.999);
  S eps = S(1e-8);
  int checkpoint_every = 0;  // 0 = final only
  S onecycle_start_div = S(25);
  S onecycle_final_div = S(1e4);

  void validate() const {
    if (warmup_steps >= total_steps)
      throw std::invalid_argument("OptimConfig: warmup_steps must be < total_steps");
    if (lr < S(0) || weight_decay < S(0) || grad_clip <= S(0) || batch_size <= 0 ||
        total_steps <= 0 || warmup_steps < 0)
      throw std::invalid_argument("OptimConfig: hyperparameters must be positive");
  }
};

/// Linear warmup from lr/start_div to lr, then cosine decay to lr/final_div.
template <typename S>
S onecycle_lr(int step, const OptimConfig<S>& cfg) {
  const S lo = cfg.lr / cfg.onecycle_start_div;
  const S end = cfg.lr / cfg.onecycle_final_div;
  if (step < cfg.warmup_steps) {
    const S t = cfg.warmup_steps > 0 ? S(step) / S(cfg.warmup_steps) : S(1);
    return lo + (cfg.lr - lo) * t;
  }
  const int span = cfg.total_steps - cfg.warmup_steps;
  const S t = span > 0 ? S(step - cfg.warmup_steps) / S(span) : S(1);
  return end + (cfg.lr - end) * (S(1) + std::cos(S(M_PI) * std::min(t, S(1)))) / S(2);
}

/// Scales every gradient so the global L2 norm is at most max_norm.
/// Returns the scale applied (1 when already within bound).
template <typename S>
S clip_gradients(ParamList<S>& params, S max_norm) {
  S sq = S(0);
  for (auto& [name, p] : params)
    for (S g : p.grad()) sq += g * g;
  const S norm = std::sqrt(sq);
  if (norm <= max_norm || norm == S(0)) return S(1);
  const S scale = max_norm / norm;
  for (auto& [name, p] : params)
    for (S& g : p.grad()) g *= scale;
  return scale;
}

/// AdamW: bias-corrected moments, weight decay applied directly to the
/// parameters rather than through the gradient.
template <typename S>
class AdamW {
 public:
  explicit AdamW(const OptimConfig<S>& cfg) : cfg_(cfg) {}

  void step(ParamList<S>& params, S lr_t) {
    if (m_.empty()) {
      for (auto& [name, p] : params) {
        m_.emplace_back(p.numel(), S(0));
        v_.emplace_back(p.numel(), S(0));
      }
    }
    ++t_;
    const S bc1 = S(1) - std::pow(cfg_.beta1, S(t_));
    const S bc2 = S(1) - std::pow(cfg_.beta2, S(t_));
    for (size_t k = 0; k < params.size(); ++k) {
      Tensor<S>& p = params[k].second;
      std::vector<S>& val = p.value();
      const std::vector<S>& g = p.grad();
      std::vector<S>& m = m_[k];
      std::vector<S>& v = v_[k];
      for (size_t i = 0; i < val.size(); ++i) {
        val[i] *= S(1) - lr_t * cfg_.weight_decay;
        m[i] = cfg_.beta1 * m[i] + (S(1) - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (S(1) - cfg_.beta2) * g[i] * g[i];
        val[i] -= lr_t * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      }
    }
  }

  int64_t steps_taken() const { return t_; }

 private:
  OptimConfig<S> cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<S>> m_, v_;
};

// --- Checkpoint format: "IUPPOSE1", u64 param count, then per parameter
// (u64 name length, name bytes, u64 rank, u64 dims..., float32 data), all
// little-endian, followed by a CRC-64/ECMA of everything after the magic.

namespace ckpt_detail {

inline uint64_t crc64_update(uint64_t crc, const void* data, size_t len) {
  static const auto table = [] {
    std::vector<uint64_t> t(256);
    const uint64_t poly = 0x42F0E1EBA9EA3693ull;
    for (uint64_t i = 0; i < 256; ++i) {
      uint64_t c = i << 56;
      for (int k = 0; k < 8; ++k) c = (c & 0x8000000000000000ull) ? (c << 1) ^ poly : c << 1;
      t[i] = c;
    }
    return t;
  }();
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < len; ++i) crc = (crc << 8) ^ table[((crc >> 56) ^ p[i]) & 0xff];
  return crc;
}

struct Writer {
  std::ofstream f;
  uint64_t crc = 0;
  void raw(const void* data, size_t len) {
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    crc = crc64_update(crc, data, len);
  }
  void u64(uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    raw(b, 8);
  }
  void f32(float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(u >> (8 * i));
    raw(b, 4);
  }
};

struct Reader {
  std::ifstream f;
  uint64_t crc = 0;
  void raw(void* data, size_t len) {
    f.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
    if (!f) throw std::runtime_error("checkpoint: truncated file");
    crc = crc64_update(crc, data, len);
  }
  uint64_t u64() {
    uint8_t b[8];
    raw(b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
  }
  float f32() {
    uint8_t b[4];
    raw(b, 4);
    uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<uint32_t>(b[i]) << (8 * i);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
};

}  // namespace ckpt_detail

template <typename S>
void save_checkpoint(const std::string& path, const ParamList<S>& params) {
  ckpt_detail::Writer w;
  w.f.open(path, std::ios::binary);
  if (!w.f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  w.f.write("IUPPOSE1", 8);
  w.u64(params.size());
  for (const auto& [name, p] : params) {
    w.u64(name.size());
    w.raw(name.data(), name.size());
    w.u64(p.shape().size());
    for (int d : p.shape()) w.u64(static_cast<uint64_t>(d));
    for (S v : p.value()) w.f32(static_cast<float>(v));
  }
  const uint64_t crc = w.crc;
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(crc >> (8 * i));
  w.f.write(reinterpret_cast<const char*>(b), 8);
  if (!w.f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

/// Loads values into an existing parameter list; names and shapes must
/// match the model exactly.
template <typename S>
void load_checkpoint(const std::string& path, ParamList<S>& params) {
  ckpt_detail::Reader r;
  r.f.open(path, std::ios::binary);
  if (!r.f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  r.f.read(magic, 8);
  if (!r.f || std::memcmp(magic, "IUPPOSE1", 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  const uint64_t count = r.u64();
  if (count != params.size())
    throw std::runtime_error("load_checkpoint: parameter count mismatch (" +
                             std::to_string(count) + " vs " + std::to_string(params.size()) + ")");
  for (auto& [name, p] : params) {
    const uint64_t nlen = r.u64();
    std::string fname(nlen, '\0');
    r.raw(fname.data(), nlen);
    if (fname != name)
      throw std::runtime_error("load_checkpoint: expected parameter " + name + ", found " + fname);
    const uint64_t rank = r.u64();
    if (rank != p.shape().size())
      throw std::runtime_error("load_checkpoint: rank mismatch for " + name);
    size_t total = 1;
    for (uint64_t i = 0; i < rank; ++i) {
      const uint64_t d = r.u64();
      if (static_cast<int>(d) != p.shape()[static_cast<size_t>(i)])
        throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
      total *= d;
    }
    for (size_t i = 0; i < total; ++i) p.value()[i] = static_cast<S>(r.f32());
  }
  const uint64_t expected = r.crc;
  uint8_t b[8];
  r.f.read(reinterpret_cast<char*>(b), 8);
  if (!r.f) throw std::runtime_error("load_checkpoint: missing trailing checksum");
  uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<uint64_t>(b[i]) << (8 * i);
  if (stored != expected) throw std::runtime_error("load_checkpoint: checksum mismatch in " + path);
}

template <typename S>
Tensor<S> image_to_tensor(const Image<S>& img) {
  std::vector<S> data = img.data;
  return Tensor<S>::from_vector({3, img.height, img.width}, std::move(data));
}

template <typename S>
struct TrainRecord {
  int step = 0;
  S lr = S(0);
  LossBreakdown<S> loss;
  S grad_scale = S(1);
};

template <typename S>
struct TrainResult {
  std::vector<TrainRecord<S>> log;
  S final_smoothed = S(0);
};

inline std::string train_csv_header() {
  return "step,lr,total,rot_angle_c,rot_uncert_c,rot_angle_r,rot_uncert_r,trans,grad_scale";
}

template <typename S>
std::string train_csv_row(const TrainRecord<S>& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.step << "," << r.lr << "," << r.loss.total_value << "," << r.loss.rot_angle_c << ","
     << r.loss.rot_uncert_c << "," << r.loss.rot_angle_r << "," << r.loss.rot_uncert_r << ","
     << r.loss.trans << "," << r.grad_scale;
  return os.str();
}

/// Seeded shuffled mini-batch loop: forward, loss, backward, clip, AdamW,
/// one-cycle schedule. Streams CSV rows when log_stream is set and writes
/// checkpoints when ckpt_path is set. NaN losses abort with context.
template <typename S>
TrainResult<S> train_loop(IupPoseModel<S>& model, const std::vector<ScenePair<S>>& dataset,
                          const OptimConfig<S>& cfg, const AblationFlags& flags,
                          const LossConfig<S>& loss_cfg = {}, std::ostream* log_stream = nullptr,
                          const std::string& ckpt_path = "",
                          const std::function<void(const TrainRecord<S>&)>& on_step = {}) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train_loop: empty dataset");

  ParamList<S> params = model.parameters();
  AdamW<S> opt(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::shuffle(order.begin(), order.end(), rng);
  size_t cursor = 0;

  if (log_stream) *log_stream << train_csv_header() << "\n";

  TrainResult<S> result;
  S smoothed = S(0);
  bool smoothed_init = false;

  for (int step = 0; step < cfg.total_steps; ++step) {
    for (auto& [name, p] : params) p.zero_grad();

    LossBreakdown<S> batch_loss;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const ScenePair<S>& pair = dataset[order[cursor++]];
      PoseEstimate<S> est = model.forward(image_to_tensor(pair.i0), image_to_tensor(pair.i1),
                                          pair.k0, pair.k1, flags);
      const Vec3<S> gt_t = pair.gt_t_mag > S(0) ? pair.gt_t_dir : Vec3<S>::Zero();
      LossBreakdown<S> lb = total_loss(est, pair.gt_r, gt_t, flags, loss_cfg);
      const Tensor<S> scaled = scale(lb.total, S(1) / S(cfg.batch_size));
      scaled.backward();
      batch_loss.total_value += lb.total_value / S(cfg.batch_size);
      batch_loss.rot_angle_c += lb.rot_angle_c / S(cfg.batch_size);
      batch_loss.rot_uncert_c += lb.rot_uncert_c / S(cfg.batch_size);
      batch_loss.rot_angle_r += lb.rot_angle_r / S(cfg.batch_size);
      batch_loss.rot_uncert_r += lb.rot_uncert_r / S(cfg.batch_size);
      batch_loss.trans += lb.trans / S(cfg.batch_size);
    }

    if (!std::isfinite(batch_loss.total_value)) {
      std::ostringstream os;
      os << "train_loop: non-finite loss at step " << step << " (rot_c=" << batch_loss.rot_angle_c
         << " uncert_c=" << batch_loss.rot_uncert_c << " rot_r=" << batch_loss.rot_angle_r
         << " uncert_r=" << batch_loss.rot_uncert_r << " trans=" << batch_loss.trans << ")";
      throw std::runtime_error(os.str());
    }

    TrainRecord<S> rec;
    rec.step = step;
    rec.lr = onecycle_lr(step, cfg);
    rec.loss = batch_loss;
    rec.grad_scale = clip_gradients(params, cfg.grad_clip);
    opt.step(params, rec.lr);

    smoothed = smoothed_init ? S(0.98) * smoothed + S(0.02) * batch_loss.total_value
                             : batch_loss.total_value;
    smoothed_init = true;

    if (log_stream) *log_stream << train_csv_row(rec) << "\n";
    if (on_step) on_step(rec);
    result.log.push_back(rec);

    if (!ckpt_path.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(ckpt_path, params);
  }

  if (!ckpt_path.empty()) save_checkpoint(ckpt_path, params);
  result.final_smoothed = smoothed;
  return result;
}

}  // namespace iup

#endif
