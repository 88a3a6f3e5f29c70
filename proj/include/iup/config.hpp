#ifndef IUP_CONFIG_HPP
#define IUP_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "iup/blocks.hpp"
#include "iup/losses.hpp"
#include "iup/pipeline.hpp"
#include "iup/scenes.hpp"
#include "iup/train.hpp"

namespace iup {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Merged run configuration: one `key = value` per line, `#` comments,
/// dotted section keys (e.g. `optim.lr = 2e-4`).
template <typename S>
struct RunConfig {
  SceneConfig<S> scene;
  int eval_count = 256;
  uint64_t eval_seed = 9001;
  BlockConfig<S> model;
  uint64_t model_seed = 7;
  OptimConfig<S> optim;
  LossConfig<S> loss;
  AblationFlags flags;
  bool deterministic = true;
  std::string precision = "double";

  void validate() const {
    scene.validate();
    model.validate();
    optim.validate();
    if (precision != "double" && precision != "float")
      throw ConfigError("precision must be 'float' or 'double'");
    if (eval_count < 0) throw ConfigError("eval.count must be >= 0");
  }
};

namespace config_detail {

template <typename S>
S parse_num(const std::string& v) {
  size_t pos = 0;
  double d;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return static_cast<S>(d);
}

inline int parse_int(const std::string& v) {
  size_t pos = 0;
  long n;
  try {
    n = std::stol(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return static_cast<int>(n);
}

inline uint64_t parse_u64(const std::string& v) {
  size_t pos = 0;
  unsigned long long n;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected an unsigned integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("expected an unsigned integer, got '" + v + "'");
  return static_cast<uint64_t>(n);
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("expected a boolean (true/false), got '" + v + "'");
}

inline std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace config_detail

template <typename S>
void apply_config_key(RunConfig<S>& c, const std::string& key, const std::string& val) {
  using config_detail::parse_bool;
  using config_detail::parse_int;
  using config_detail::parse_num;
  using config_detail::parse_u64;
  using Setter = std::function<void(RunConfig<S>&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"scene.width", [](RunConfig<S>& c, const std::string& v) { c.scene.width = parse_int(v); }},
      {"scene.height",
       [](RunConfig<S>& c, const std::string& v) { c.scene.height = parse_int(v); }},
      {"scene.count", [](RunConfig<S>& c, const std::string& v) { c.scene.count = parse_int(v); }},
      {"scene.seed", [](RunConfig<S>& c, const std::string& v) { c.scene.seed = parse_u64(v); }},
      {"scene.focal_min",
       [](RunConfig<S>& c, const std::string& v) { c.scene.focal_min = parse_num<S>(v); }},
      {"scene.focal_max",
       [](RunConfig<S>& c, const std::string& v) { c.scene.focal_max = parse_num<S>(v); }},
      {"scene.max_rot_deg",
       [](RunConfig<S>& c, const std::string& v) { c.scene.max_rot_deg = parse_num<S>(v); }},
      {"scene.trans_min",
       [](RunConfig<S>& c, const std::string& v) { c.scene.trans_min = parse_num<S>(v); }},
      {"scene.trans_max",
       [](RunConfig<S>& c, const std::string& v) { c.scene.trans_max = parse_num<S>(v); }},
      {"scene.depth_min",
       [](RunConfig<S>& c, const std::string& v) { c.scene.depth_min = parse_num<S>(v); }},
      {"scene.depth_max",
       [](RunConfig<S>& c, const std::string& v) { c.scene.depth_max = parse_num<S>(v); }},
      {"scene.tilt_max_deg",
       [](RunConfig<S>& c, const std::string& v) { c.scene.tilt_max_deg = parse_num<S>(v); }},
      {"scene.overlap_lo",
       [](RunConfig<S>& c, const std::string& v) { c.scene.overlap_lo = parse_num<S>(v); }},
      {"scene.overlap_hi",
       [](RunConfig<S>& c, const std::string& v) { c.scene.overlap_hi = parse_num<S>(v); }},
      {"scene.filtered",
       [](RunConfig<S>& c, const std::string& v) { c.scene.filtered = parse_bool(v); }},
      {"scene.pure_rotation",
       [](RunConfig<S>& c, const std::string& v) { c.scene.pure_rotation = parse_bool(v); }},
      {"scene.num_planes",
       [](RunConfig<S>& c, const std::string& v) { c.scene.num_planes = parse_int(v); }},
      {"scene.photometric_aug",
       [](RunConfig<S>& c, const std::string& v) { c.scene.photometric_aug = parse_bool(v); }},
      {"scene.texture_res",
       [](RunConfig<S>& c, const std::string& v) { c.scene.texture_res = parse_int(v); }},
      {"scene.texture_file",
       [](RunConfig<S>& c, const std::string& v) { c.scene.texture_file = v; }},
      {"eval.count", [](RunConfig<S>& c, const std::string& v) { c.eval_count = parse_int(v); }},
      {"eval.seed", [](RunConfig<S>& c, const std::string& v) { c.eval_seed = parse_u64(v); }},
      {"model.base_channels",
       [](RunConfig<S>& c, const std::string& v) { c.model.base_channels = parse_int(v); }},
      {"model.encoder_stages",
       [](RunConfig<S>& c, const std::string& v) { c.model.encoder_stages = parse_int(v); }},
      {"model.d_v", [](RunConfig<S>& c, const std::string& v) { c.model.d_v = parse_int(v); }},
      {"model.heads", [](RunConfig<S>& c, const std::string& v) { c.model.heads = parse_int(v); }},
      {"model.sppf_kernel",
       [](RunConfig<S>& c, const std::string& v) { c.model.sppf_kernel = parse_int(v); }},
      {"model.tokens_h",
       [](RunConfig<S>& c, const std::string& v) { c.model.tokens_h = parse_int(v); }},
      {"model.tokens_w",
       [](RunConfig<S>& c, const std::string& v) { c.model.tokens_w = parse_int(v); }},
      {"model.seed", [](RunConfig<S>& c, const std::string& v) { c.model_seed = parse_u64(v); }},
      {"optim.lr", [](RunConfig<S>& c, const std::string& v) { c.optim.lr = parse_num<S>(v); }},
      {"optim.weight_decay",
       [](RunConfig<S>& c, const std::string& v) { c.optim.weight_decay = parse_num<S>(v); }},
      {"optim.grad_clip",
       [](RunConfig<S>& c, const std::string& v) { c.optim.grad_clip = parse_num<S>(v); }},
      {"optim.warmup_steps",
       [](RunConfig<S>& c, const std::string& v) { c.optim.warmup_steps = parse_int(v); }},
      {"optim.total_steps",
       [](RunConfig<S>& c, const std::string& v) { c.optim.total_steps = parse_int(v); }},
      {"optim.batch_size",
       [](RunConfig<S>& c, const std::string& v) { c.optim.batch_size = parse_int(v); }},
      {"optim.seed", [](RunConfig<S>& c, const std::string& v) { c.optim.seed = parse_u64(v); }},
      {"optim.beta1",
       [](RunConfig<S>& c, const std::string& v) { c.optim.beta1 = parse_num<S>(v); }},
      {"optim.beta2",
       [](RunConfig<S>& c, const std::string& v) { c.optim.beta2 = parse_num<S>(v); }},
      {"optim.eps", [](RunConfig<S>& c, const std::string& v) { c.optim.eps = parse_num<S>(v); }},
      {"optim.checkpoint_every",
       [](RunConfig<S>& c, const std::string& v) { c.optim.checkpoint_every = parse_int(v); }},
      {"loss.lambda",
       [](RunConfig<S>& c, const std::string& v) { c.loss.lambda_uncert = parse_num<S>(v); }},
      {"loss.delta_r",
       [](RunConfig<S>& c, const std::string& v) { c.loss.delta_r = parse_num<S>(v); }},
      {"loss.delta_t",
       [](RunConfig<S>& c, const std::string& v) { c.loss.delta_t = parse_num<S>(v); }},
      {"loss.refined_target_composed",
       [](RunConfig<S>& c, const std::string& v) {
         c.loss.refined_target_composed = parse_bool(v);
       }},
      {"loss.detach_uncert_error",
       [](RunConfig<S>& c, const std::string& v) { c.loss.detach_uncert_error = parse_bool(v); }},
      {"flags.rt_decoupled",
       [](RunConfig<S>& c, const std::string& v) { c.flags.rt_decoupled = parse_bool(v); }},
      {"flags.iterative",
       [](RunConfig<S>& c, const std::string& v) { c.flags.iterative = parse_bool(v); }},
      {"flags.ida", [](RunConfig<S>& c, const std::string& v) { c.flags.ida = parse_bool(v); }},
      {"flags.uncertainty",
       [](RunConfig<S>& c, const std::string& v) { c.flags.uncertainty = parse_bool(v); }},
      {"flags.homography_warp",
       [](RunConfig<S>& c, const std::string& v) { c.flags.homography_warp = parse_bool(v); }},
      {"flags.detach_warp",
       [](RunConfig<S>& c, const std::string& v) { c.flags.detach_warp = parse_bool(v); }},
      {"deterministic",
       [](RunConfig<S>& c, const std::string& v) { c.deterministic = parse_bool(v); }},
      {"precision", [](RunConfig<S>& c, const std::string& v) { c.precision = v; }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown key '" + key + "'");
  it->second(c, val);
}

template <typename S>
RunConfig<S> parse_config(std::istream& in, const std::string& source = "<config>") {
  RunConfig<S> cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string val = config_detail::trim(line.substr(eq + 1));
    try {
      apply_config_key(cfg, key, val);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

template <typename S>
RunConfig<S> load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  return parse_config<S>(f, path);
}

/// Fully-resolved echo of every key, itself parseable as a config.
template <typename S>
std::string dump_config(const RunConfig<S>& c) {
  std::ostringstream os;
  os.precision(17);
  os << "scene.width = " << c.scene.width << "\n"
     << "scene.height = " << c.scene.height << "\n"
     << "scene.count = " << c.scene.count << "\n"
     << "scene.seed = " << c.scene.seed << "\n"
     << "scene.focal_min = " << c.scene.focal_min << "\n"
     << "scene.focal_max = " << c.scene.focal_max << "\n"
     << "scene.max_rot_deg = " << c.scene.max_rot_deg << "\n"
     << "scene.trans_min = " << c.scene.trans_min << "\n"
     << "scene.trans_max = " << c.scene.trans_max << "\n"
     << "scene.depth_min = " << c.scene.depth_min << "\n"
     << "scene.depth_max = " << c.scene.depth_max << "\n"
     << "scene.tilt_max_deg = " << c.scene.tilt_max_deg << "\n"
     << "scene.overlap_lo = " << c.scene.overlap_lo << "\n"
     << "scene.overlap_hi = " << c.scene.overlap_hi << "\n"
     << "scene.filtered = " << (c.scene.filtered ? "true" : "false") << "\n"
     << "scene.pure_rotation = " << (c.scene.pure_rotation ? "true" : "false") << "\n"
     << "scene.num_planes = " << c.scene.num_planes << "\n"
     << "scene.photometric_aug = " << (c.scene.photometric_aug ? "true" : "false") << "\n"
     << "scene.texture_res = " << c.scene.texture_res << "\n";
  if (!c.scene.texture_file.empty()) os << "scene.texture_file = " << c.scene.texture_file << "\n";
  os << "eval.count = " << c.eval_count << "\n"
     << "eval.seed = " << c.eval_seed << "\n"
     << "model.base_channels = " << c.model.base_channels << "\n"
     << "model.encoder_stages = " << c.model.encoder_stages << "\n"
     << "model.d_v = " << c.model.d_v << "\n"
     << "model.heads = " << c.model.heads << "\n"
     << "model.sppf_kernel = " << c.model.sppf_kernel << "\n"
     << "model.tokens_h = " << c.model.tokens_h << "\n"
     << "model.tokens_w = " << c.model.tokens_w << "\n"
     << "model.seed = " << c.model_seed << "\n"
     << "optim.lr = " << c.optim.lr << "\n"
     << "optim.weight_decay = " << c.optim.weight_decay << "\n"
     << "optim.grad_clip = " << c.optim.grad_clip << "\n"
     << "optim.warmup_steps = " << c.optim.warmup_steps << "\n"
     << "optim.total_steps = " << c.optim.total_steps << "\n"
     << "optim.batch_size = " << c.optim.batch_size << "\n"
     << "optim.seed = " << c.optim.seed << "\n"
     << "optim.beta1 = " << c.optim.beta1 << "\n"
     << "optim.beta2 = " << c.optim.beta2 << "\n"
     << "optim.eps = " << c.optim.eps << "\n"
     << "optim.checkpoint_every = " << c.optim.checkpoint_every << "\n"
     << "loss.lambda = " << c.loss.lambda_uncert << "\n"
     << "loss.delta_r = " << c.loss.delta_r << "\n"
     << "loss.delta_t = " << c.loss.delta_t << "\n"
     << "loss.refined_target_composed = " << (c.loss.refined_target_composed ? "true" : "false")
     << "\n"
     << "loss.detach_uncert_error = " << (c.loss.detach_uncert_error ? "true" : "false") << "\n"
     << "flags.rt_decoupled = " << (c.flags.rt_decoupled ? "true" : "false") << "\n"
     << "flags.iterative = " << (c.flags.iterative ? "true" : "false") << "\n"
     << "flags.ida = " << (c.flags.ida ? "true" : "false") << "\n"
     << "flags.uncertainty = " << (c.flags.uncertainty ? "true" : "false") << "\n"
     << "flags.homography_warp = " << (c.flags.homography_warp ? "true" : "false") << "\n"
     << "flags.detach_warp = " << (c.flags.detach_warp ? "true" : "false") << "\n"
     << "deterministic = " << (c.deterministic ? "true" : "false") << "\n"
     << "precision = " << c.precision << "\n";
  return os.str();
}

/// Desk-scale defaults used by the toy training run.
template <typename S>
RunConfig<S> toy_config() {
  RunConfig<S> c;
  c.scene.count = 2048;
  c.scene.seed = 1234;
  c.eval_count = 256;
  c.eval_seed = 9001;
  c.optim.total_steps = 2000;
  c.optim.warmup_steps = 100;
  c.optim.batch_size = 8;
  c.optim.seed = 42;
  c.optim.lr = S(1e-3);
  c.model.encoder_stages = 3;
  c.model.tokens_h = 8;
  c.model.tokens_w = 8;
  c.model.base_channels = 16;
  c.precision = "float";
  return c;
}

}  // namespace iup

#endif
