#ifndef IUP_BLOCKS_HPP
#define IUP_BLOCKS_HPP

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "iup/ops.hpp"
#include "iup/so3.hpp"
#include "iup/tensor.hpp"

namespace iup {

template <typename S>
using ParamList = std::vector<std::pair<std::string, Tensor<S>>>;

template <typename S>
struct BlockConfig {
  int base_channels = 8;
  int encoder_stages = 5;  // log2 of the feature stride
  int d_v = 64;
  int heads = 4;
  int sppf_kernel = 5;
  int tokens_h = 2;
  int tokens_w = 2;

  int d_k() const { return d_v / 2; }
  int stride() const { return 1 << encoder_stages; }

  void validate() const {
    if (d_v % 2 != 0 || d_v % heads != 0 || (d_v / 2) % heads != 0)
      throw TensorError("BlockConfig: d_v must be divisible by 2*heads");
    if (sppf_kernel % 2 == 0) throw TensorError("BlockConfig: sppf_kernel must be odd");
    if (base_channels < 1 || encoder_stages < 1) throw TensorError("BlockConfig: bad sizes");
  }
};

namespace init {

template <typename S>
Tensor<S> kaiming(std::mt19937_64& rng, std::vector<int> shape, int fan_in) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max(1, fan_in)));
  int total = 1;
  for (int d : shape) total *= d;
  std::vector<S> data(static_cast<size_t>(total));
  for (auto& v : data) v = static_cast<S>(dist(rng));
  return Tensor<S>::from_vector(std::move(shape), std::move(data), true);
}

template <typename S>
Tensor<S> zeros(std::vector<int> shape) {
  return Tensor<S>::zeros(std::move(shape), true);
}

}  // namespace init

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

template <typename S>
struct Conv2dLayer {
  Tensor<S> w, b;
  int stride = 1, pad = 0, dilation = 1, groups = 1;

  Conv2dLayer() = default;
  Conv2dLayer(std::mt19937_64& rng, int cin, int cout, int k, int stride_ = 1, int pad_ = 0,
              int dilation_ = 1, int groups_ = 1, bool zero_init = false)
      : stride(stride_), pad(pad_), dilation(dilation_), groups(groups_) {
    const int cig = cin / groups_;
    w = zero_init ? init::zeros<S>({cout, cig, k, k})
                  : init::kaiming<S>(rng, {cout, cig, k, k}, cig * k * k);
    b = init::zeros<S>({cout});
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    return conv2d(x, w, b, stride, pad, dilation, groups);
  }
  void collect(const std::string& prefix, ParamList<S>& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

template <typename S>
struct LinearLayer {
  Tensor<S> w, b;

  LinearLayer() = default;
  LinearLayer(std::mt19937_64& rng, int in, int out, bool zero_init = false) {
    w = zero_init ? init::zeros<S>({out, in}) : init::kaiming<S>(rng, {out, in}, in);
    b = init::zeros<S>({out});
  }
  Tensor<S> operator()(const Tensor<S>& x) const { return linear(x, w, b); }
  void collect(const std::string& prefix, ParamList<S>& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

// ---------------------------------------------------------------------------
// input assembly
// ---------------------------------------------------------------------------

/// [R,G,B, x_n, y_n]: RGB in [0,1] concatenated with the canonical-plane
/// coordinate map of the view's intrinsics.
template <typename S>
Tensor<S> build_input(const Tensor<S>& image, const CameraIntrinsics<S>& k) {
  if (image.shape().size() != 3 || image.shape()[0] != 3)
    throw TensorError("build_input: expected {3,H,W} image, got " + shape_str(image.shape()));
  const int h = image.shape()[1], w = image.shape()[2];
  auto [xm, ym] = normalize_coords(k, h, w);
  std::vector<S> coords(static_cast<size_t>(2) * h * w);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      coords[static_cast<size_t>(v) * w + u] = xm(v, u);
      coords[static_cast<size_t>(h) * w + static_cast<size_t>(v) * w + u] = ym(v, u);
    }
  return concat<S>({image, Tensor<S>::from_vector({2, h, w}, std::move(coords))}, 0);
}

/// Normalized local-patch correlation between the two raw images, sampled on
/// the {gh, gw} token grid of each view. Entry (q, k) is the zero-mean,
/// contrast-normalized dot product between the luminance patch around token q
/// of view 0 and token k of view 1, i.e. classic template matching restricted
/// to the token centers. The matrix is a constant with respect to the
/// network parameters and is fed to the cross attention as a logit bias: a
/// freshly initialized encoder cannot produce features that discriminate
/// between image locations, so without this prior the attention starts out
/// (and stays) position-diagonal and the pose signal never reaches the
/// decoder. With the prior the initial matching is already informative and
/// the learned query/key pathway only has to refine it.
template <typename S>
Tensor<S> patch_correlation(const Tensor<S>& img0, const Tensor<S>& img1, int gh, int gw) {
  const int h = img0.shape()[1], w = img0.shape()[2];
  const int sy = h / gh, sx = w / gw;
  const int ry = std::max(2, sy / 2 + 1), rx = std::max(2, sx / 2 + 1);
  const int np = (2 * ry + 1) * (2 * rx + 1);
  const int n = gh * gw;
  auto descriptors = [&](const Tensor<S>& img) {
    const auto& v = img.value();
    const size_t hw = static_cast<size_t>(h) * w;
    auto lum = [&](int x, int y) {
      x = std::clamp(x, 0, w - 1);
      y = std::clamp(y, 0, h - 1);
      const size_t i = static_cast<size_t>(y) * w + x;
      return (v[i] + v[hw + i] + v[2 * hw + i]) / S(3);
    };
    std::vector<std::vector<S>> d(static_cast<size_t>(n), std::vector<S>(np));
    for (int t = 0; t < n; ++t) {
      const int cx = (t % gw) * sx + sx / 2, cy = (t / gw) * sy + sy / 2;
      S mu = S(0);
      int idx = 0;
      for (int dy = -ry; dy <= ry; ++dy)
        for (int dx = -rx; dx <= rx; ++dx) {
          d[t][idx] = lum(cx + dx, cy + dy);
          mu += d[t][idx];
          ++idx;
        }
      mu /= S(np);
      S norm = S(1e-9);
      for (S& e : d[t]) {
        e -= mu;
        norm += e * e;
      }
      norm = std::sqrt(norm);
      for (S& e : d[t]) e /= norm;
    }
    return d;
  };
  const auto d0 = descriptors(img0);
  const auto d1 = descriptors(img1);
  std::vector<S> corr(static_cast<size_t>(n) * n);
  for (int q = 0; q < n; ++q)
    for (int k = 0; k < n; ++k) {
      S dot = S(0);
      for (int j = 0; j < np; ++j) dot += d0[q][j] * d1[k][j];
      corr[static_cast<size_t>(q) * n + k] = dot;
    }
  return Tensor<S>::from_vector({n, n}, std::move(corr));
}

// ---------------------------------------------------------------------------
// encoder
// ---------------------------------------------------------------------------

template <typename S>
struct ResidualStage {
  Conv2dLayer<S> conv1, conv2, skip;

  ResidualStage() = default;
  ResidualStage(std::mt19937_64& rng, int cin, int cout)
      : conv1(rng, cin, cout, 3, 2, 1),
        conv2(rng, cout, cout, 3, 1, 1),
        skip(rng, cin, cout, 1, 2, 0) {}

  Tensor<S> operator()(const Tensor<S>& x) const {
    return silu(add(conv2(silu(conv1(x))), skip(x)));
  }
  void collect(const std::string& prefix, ParamList<S>& out) const {
    conv1.collect(prefix + ".conv1", out);
    conv2.collect(prefix + ".conv2", out);
    skip.collect(prefix + ".skip", out);
  }
};

/// Stride-2 stem plus (stages-1) stride-2 residual stages; overall stride
/// 2^stages, output channels d_v.
template <typename S>
struct Encoder {
  Conv2dLayer<S> stem;
  std::vector<ResidualStage<S>> stages;
  int total_stride = 32;

  Encoder() = default;
  Encoder(std::mt19937_64& rng, const BlockConfig<S>& cfg) {
    cfg.validate();
    total_stride = cfg.stride();
    std::vector<int> ch(static_cast<size_t>(cfg.encoder_stages));
    for (int i = 0; i < cfg.encoder_stages; ++i)
      ch[static_cast<size_t>(i)] = std::min(cfg.base_channels << i, cfg.d_v);
    ch.back() = cfg.d_v;
    stem = Conv2dLayer<S>(rng, 5, ch[0], 3, 2, 1);
    for (int i = 1; i < cfg.encoder_stages; ++i)
      stages.emplace_back(rng, ch[static_cast<size_t>(i - 1)], ch[static_cast<size_t>(i)]);
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    const int h = x.shape()[1], w = x.shape()[2];
    if (h % total_stride != 0 || w % total_stride != 0)
      throw TensorError("encoder: input " + shape_str(x.shape()) +
                        " must be divisible by stride " + std::to_string(total_stride));
    Tensor<S> f = silu(stem(x));
    for (const auto& st : stages) f = st(f);
    return f;
  }
  void collect(const std::string& prefix, ParamList<S>& out) const {
    stem.collect(prefix + ".stem", out);
    for (size_t i = 0; i < stages.size(); ++i)
      stages[i].collect(prefix + ".stage" + std::to_string(i), out);
  }
};

// ---------------------------------------------------------------------------
// SPPF
// ---------------------------------------------------------------------------

/// Bottleneck + three recursive stride-1 max-pools (receptive fields k,
/// 2k-1, 3k-2) fused by a 1x1 conv back to C channels.
template <typename S>
struct Sppf {
  Conv2dLayer<S> bottleneck, fuse;
  int kernel = 5;

  Sppf() = default;
  Sppf(std::mt19937_64& rng, int c, int k) : kernel(k) {
    if (k % 2 == 0) throw TensorError("sppf: kernel must be odd, got " + std::to_string(k));
    bottleneck = Conv2dLayer<S>(rng, c, c / 2, 1);
    fuse = Conv2dLayer<S>(rng, 2 * c, c, 1);
  }

  Tensor<S> operator()(const Tensor<S>& f) const {
    const int pad = (kernel - 1) / 2;
    Tensor<S> z0 = silu(bottleneck(f));
    Tensor<S> z1 = maxpool2d(z0, kernel, 1, pad);
    Tensor<S> z2 = maxpool2d(z1, kernel, 1, pad);
    Tensor<S> z3 = maxpool2d(z2, kernel, 1, pad);
    return silu(fuse(concat<S>({z0, z1, z2, z3}, 0)));
  }
  void collect(const std::string& prefix, ParamList<S>& out) const {
    bottleneck.collect(prefix + ".bottleneck", out);
    fuse.collect(prefix + ".fuse", out);
  }
};

// ---------------------------------------------------------------------------
// MHBC
// ---------------------------------------------------------------------------

/// Multi-head bidirectional cross attention with a content term V A^T, a
/// global position term W_c A^T (W_c split row-wise across heads) and a
/// local position term of dilated depthwise convolutions (d = 2, 3).
/// Both directions share this one weight set. The attention logits are the
/// cosine similarity of the projected tokens times a learnable temperature.
template <typename S>
struct Mhbc {
  Tensor<S> wq, wk, wv, wc, logit_scale, corr_scale;
  Conv2dLayer<S> pe2, pe3, wp, ffn1, ffn2;
  int d_v = 64, d_k = 32, heads = 4, tokens = 4;

  Mhbc() = default;
  Mhbc(std::mt19937_64& rng, const BlockConfig<S>& cfg)
      : d_v(cfg.d_v), d_k(cfg.d_k()), heads(cfg.heads), tokens(cfg.tokens_h * cfg.tokens_w) {
    wq = init::kaiming<S>(rng, {d_k, d_v}, d_v);
    // Start the key projection equal to the query projection so the
    // attention logits begin as a feature-similarity kernel; with
    // independent random projections the initial matching is noise and
    // the correspondence signal never bootstraps.
    wk = Tensor<S>::from_vector(wq.shape(), wq.value(), /*requires_grad=*/true);
    wv = init::kaiming<S>(rng, {d_v, d_v}, d_v);
    wc = init::kaiming<S>(rng, {d_v, tokens}, tokens);
    // Cosine attention temperature. Raw QK logits scale with the square of
    // the feature magnitude, which out of a deep silu stack is far below 1;
    // the resulting softmax is indistinguishable from uniform and the
    // matching pathway never receives a usable gradient. Normalizing query
    // and key columns and applying a learnable temperature makes the
    // attention sharpness independent of the feature scale.
    logit_scale = Tensor<S>::from_vector({1}, {S(8)}, /*requires_grad=*/true);
    // Weight of the raw-image patch-correlation logit bias (see
    // patch_correlation above). Initialized large enough that the prior
    // dominates the (initially uninformative) learned similarity.
    corr_scale = Tensor<S>::from_vector({1}, {S(10)}, /*requires_grad=*/true);
    pe2 = Conv2dLayer<S>(rng, d_v, d_v, 3, 1, 2, 2, d_v);
    pe3 = Conv2dLayer<S>(rng, d_v, d_v, 3, 1, 3, 3, d_v);
    wp = Conv2dLayer<S>(rng, d_v, d_v, 1);
    ffn1 = Conv2dLayer<S>(rng, d_v, 2 * d_v, 1);
    ffn2 = Conv2dLayer<S>(rng, 2 * d_v, d_v, 1, 1, 0, 1, 1, /*zero_init=*/true);
  }

  // Position-sensitive cross attention from view i (queries) to view j.
  // `bias`, when non-null, is a constant {n, n} logit bias (the raw-image
  // patch-correlation prior) added to the learned similarity in every head.
  Tensor<S> psi(const Tensor<S>& fi, const Tensor<S>& fj, const Tensor<S>* bias = nullptr) const {
    const int h = fi.shape()[1], w = fi.shape()[2];
    const int n = h * w;
    if (n != tokens)
      throw TensorError("mhbc: token count " + std::to_string(n) +
                        " does not match the learned W_c resolution " + std::to_string(tokens) +
                        " (fixed-resolution constraint)");
    const Tensor<S> xi = reshape(fi, {d_v, n});
    const Tensor<S> xj = reshape(fj, {d_v, n});
    const Tensor<S> q = matmul(wq, xi);
    const Tensor<S> k = matmul(wk, xj);
    const Tensor<S> v = matmul(wv, xj);
    const int dkh = d_k / heads;
    const int dvh = d_v / heads;
    std::vector<Tensor<S>> head_out;
    for (int hd = 0; hd < heads; ++hd) {
      const Tensor<S> qh = normalize_cols(slice0(q, hd * dkh, dkh));
      const Tensor<S> kh = normalize_cols(slice0(k, hd * dkh, dkh));
      const Tensor<S> vh = slice0(v, hd * dvh, dvh);
      Tensor<S> logits = scale_by_scalar(matmul(transpose2d(qh), kh), logit_scale);
      if (bias != nullptr) logits = add(logits, scale_by_scalar(*bias, corr_scale));
      const Tensor<S> a = softmax(logits, 1);
      const Tensor<S> at = transpose2d(a);
      const Tensor<S> content = matmul(vh, at);
      const Tensor<S> position = matmul(slice0(wc, hd * dvh, dvh), at);
      head_out.push_back(add(content, position));
    }
    const Tensor<S> m = reshape(concat(head_out, 0), {d_v, h, w});
    const Tensor<S> pe = add(pe2(m), pe3(m));
    return wp(add(m, pe));
  }

  std::pair<Tensor<S>, Tensor<S>> operator()(const Tensor<S>& f0, const Tensor<S>& f1,
                                             const Tensor<S>* corr = nullptr) const {
    check_same_shape("mhbc", f0, f1);
    auto one_dir = [this](const Tensor<S>& fi, const Tensor<S>& fj, const Tensor<S>* bias) {
      const Tensor<S> y = add(fi, psi(fi, fj, bias));
      return add(y, ffn2(silu(ffn1(y))));
    };
    if (corr == nullptr) return {one_dir(f0, f1, nullptr), one_dir(f1, f0, nullptr)};
    const Tensor<S> corr_t = transpose2d(*corr);
    return {one_dir(f0, f1, corr), one_dir(f1, f0, &corr_t)};
  }
  void collect(const std::string& prefix, ParamList<S>& out) const {
    out.emplace_back(prefix + ".wq", wq);
    out.emplace_back(prefix + ".wk", wk);
    out.emplace_back(prefix + ".wv", wv);
    out.emplace_back(prefix + ".wc", wc);
    out.emplace_back(prefix + ".logit_scale", logit_scale);
    out.emplace_back(prefix + ".corr_scale", corr_scale);
    pe2.collect(prefix + ".pe2", out);
    pe3.collect(prefix + ".pe3", out);
    wp.collect(prefix + ".wp", out);
    ffn1.collect(prefix + ".ffn1", out);
    ffn2.collect(prefix + ".ffn2", out);
  }
};

// ---------------------------------------------------------------------------
// FiLM
// ---------------------------------------------------------------------------

/// Per-channel (1+gamma) * f + beta from a conditioning vector; the output
/// layer is zero-initialized so an untrained block is the identity.
template <typename S>
struct Film {
  LinearLayer<S> fc1, fc2;
  int channels = 0;

  Film() = default;
  Film(std::mt19937_64& rng, int cond_dim, int c, int hidden = 32) : channels(c) {
    fc1 = LinearLayer<S>(rng, cond_dim, hidden);
    fc2 = LinearLayer<S>(rng, hidden, 2 * c, /*zero_init=*/true);
  }

  Tensor<S> operator()(const Tensor<S>& f, const Tensor<S>& cond) const {
    const Tensor<S> gb = fc2(silu(fc1(cond)));
    return channel_affine(f, slice0(gb, 0, channels), slice0(gb, channels, channels));
  }
  void collect(const std::string& prefix, ParamList<S>& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
  }
};

// ---------------------------------------------------------------------------
// MoE adapter
// ---------------------------------------------------------------------------

/// Two 1x1-conv experts mixed by a softmax gate over globally pooled
/// features (per-sample gating).
template <typename S>
struct MoeAdapter {
  LinearLayer<S> gate_fc;
  Conv2dLayer<S> expert0, expert1;

  MoeAdapter() = default;
  MoeAdapter(std::mt19937_64& rng, int cin, int cout) {
    gate_fc = LinearLayer<S>(rng, cin, 2);
    expert0 = Conv2dLayer<S>(rng, cin, cout, 1);
    expert1 = Conv2dLayer<S>(rng, cin, cout, 1);
  }

  Tensor<S> operator()(const Tensor<S>& f) const {
    return forward_with_logits(f, gate_fc(global_avg_pool(f)));
  }
  /// Test hook: run with externally fixed gate logits.
  Tensor<S> forward_with_logits(const Tensor<S>& f, const Tensor<S>& logits) const {
    const Tensor<S> gate = softmax(logits, 0);
    return add(scale_by_scalar(expert0(f), slice0(gate, 0, 1)),
               scale_by_scalar(expert1(f), slice0(gate, 1, 1)));
  }
  void collect(const std::string& prefix, ParamList<S>& out) const {
    gate_fc.collect(prefix + ".gate", out);
    expert0.collect(prefix + ".expert0", out);
    expert1.collect(prefix + ".expert1", out);
  }
};

// ---------------------------------------------------------------------------
// view fusion
// ---------------------------------------------------------------------------

/// Four bottleneck blocks with V-aware gates (kernel schedule 1,1,3,3),
/// depthwise-separable refinement, then a per-cell V-wise softmax collapse
/// of the two views. All per-view weights are shared across views.
template <typename S>
struct ViewFusion {
  std::vector<Conv2dLayer<S>> reduce, expand, gate;
  Conv2dLayer<S> refine_dw, refine_pw, attn_logit;
  static constexpr int kKernelSchedule[4] = {1, 1, 3, 3};

  ViewFusion() = default;
  ViewFusion(std::mt19937_64& rng, int c) {
    for (int i = 0; i < 4; ++i) {
      const int k = kKernelSchedule[i];
      reduce.emplace_back(rng, c, c / 2, k, 1, (k - 1) / 2);
      expand.emplace_back(rng, c / 2, c, 1);
      gate.emplace_back(rng, 2 * c, c, 1);
    }
    refine_dw = Conv2dLayer<S>(rng, c, c, 3, 1, 1, 1, c);
    refine_pw = Conv2dLayer<S>(rng, c, c, 1);
    attn_logit = Conv2dLayer<S>(rng, c, 1, 1, 1, 0, 1, 1, /*zero_init=*/true);
  }

  Tensor<S> operator()(const Tensor<S>& f0_in, const Tensor<S>& f1_in) const {
    check_same_shape("view_fusion", f0_in, f1_in);
    Tensor<S> f0 = f0_in, f1 = f1_in;
    for (int i = 0; i < 4; ++i) {
      f0 = add(f0, expand[i](silu(reduce[i](f0))));
      f1 = add(f1, expand[i](silu(reduce[i](f1))));
      const Tensor<S> cross = scale(add(f0, f1), S(0.5));
      const Tensor<S> g0 = sigmoid(gate[i](concat<S>({f0, cross}, 0)));
      const Tensor<S> g1 = sigmoid(gate[i](concat<S>({f1, cross}, 0)));
      f0 = mul(f0, g0);
      f1 = mul(f1, g1);
    }
    f0 = add(f0, silu(refine_pw(refine_dw(f0))));
    f1 = add(f1, silu(refine_pw(refine_dw(f1))));
    const Tensor<S> logits = concat<S>({attn_logit(f0), attn_logit(f1)}, 0);  // {2,h,w}
    const Tensor<S> wsoft = softmax(logits, 0);
    return add(spatial_scale(f0, slice0(wsoft, 0, 1)), spatial_scale(f1, slice0(wsoft, 1, 1)));
  }
  void collect(const std::string& prefix, ParamList<S>& out) const {
    for (int i = 0; i < 4; ++i) {
      reduce[static_cast<size_t>(i)].collect(prefix + ".reduce" + std::to_string(i), out);
      expand[static_cast<size_t>(i)].collect(prefix + ".expand" + std::to_string(i), out);
      gate[static_cast<size_t>(i)].collect(prefix + ".gate" + std::to_string(i), out);
    }
    refine_dw.collect(prefix + ".refine_dw", out);
    refine_pw.collect(prefix + ".refine_pw", out);
    attn_logit.collect(prefix + ".attn_logit", out);
  }
};

// ---------------------------------------------------------------------------
// decoder
// ---------------------------------------------------------------------------

/// Shared rotation/translation decoder head: MoE per view, view fusion,
/// FiLM conditioning, a residual from the raw input views concatenated in
/// view order, two 3x3 convs with a residual from the fused features,
/// mean-and-first-moment pooling, and a zero-initialized 6-way linear head
/// split as (pose_vec, log_var). The ordered residual is what tells the decoder
/// which image is the reference view: every other pathway (shared
/// attention directions, gated fusion, softmax collapse) is invariant
/// under swapping the views, and a swap-invariant network cannot resolve
/// the sign of the relative rotation.
template <typename S>
struct Decoder {
  MoeAdapter<S> moe;
  ViewFusion<S> fusion;
  Film<S> film;
  Conv2dLayer<S> res_proj, conv1, conv2;
  LinearLayer<S> head;
  int channels = 0;

  Decoder() = default;
  /// cin includes the appended validity-mask channel.
  Decoder(std::mt19937_64& rng, int cin, int c, int cond_dim = 10) : channels(c) {
    moe = MoeAdapter<S>(rng, cin, c);
    fusion = ViewFusion<S>(rng, c);
    film = Film<S>(rng, cond_dim, c);
    res_proj = Conv2dLayer<S>(rng, 2 * cin, c, 1);
    conv1 = Conv2dLayer<S>(rng, c, c, 3, 1, 1);
    conv2 = Conv2dLayer<S>(rng, c, c, 3, 1, 1);
    head = LinearLayer<S>(rng, 3 * c, 6, /*zero_init=*/true);
  }

  std::pair<Tensor<S>, Tensor<S>> operator()(const Tensor<S>& f0, const Tensor<S>& f1,
                                             const Tensor<S>& cond) const {
    const Tensor<S> fused = fusion(moe(f0), moe(f1));
    Tensor<S> y = film(fused, cond);
    y = add(y, res_proj(concat<S>({f0, f1}, 0)));
    y = silu(add(conv2(silu(conv1(y))), fused));
    const Tensor<S> out6 = head(moment_pool(y));
    return {slice0(out6, 0, 3), slice0(out6, 3, 3)};
  }
  void collect(const std::string& prefix, ParamList<S>& out) const {
    moe.collect(prefix + ".moe", out);
    fusion.collect(prefix + ".fusion", out);
    film.collect(prefix + ".film", out);
    res_proj.collect(prefix + ".res_proj", out);
    conv1.collect(prefix + ".conv1", out);
    conv2.collect(prefix + ".conv2", out);
    head.collect(prefix + ".head", out);
  }
};

}  // namespace iup

#endif
