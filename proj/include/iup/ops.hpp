#ifndef IUP_OPS_HPP
#define IUP_OPS_HPP

#include <algorithm>
#include <cmath>
#include <limits>

#include "iup/so3.hpp"
#include "iup/tensor.hpp"

namespace iup {

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape("add", a, b);
  auto n = detail::make_node<S>("add", a.shape(), a, b);
  for (int i = 0; i < a.numel(); ++i) n->value[i] = a.value()[i] + b.value()[i];
  n->backward = [](TensorNode<S>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) {
      self.parents[0]->grad[i] += self.grad[i];
      self.parents[1]->grad[i] += self.grad[i];
    }
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape("sub", a, b);
  auto n = detail::make_node<S>("sub", a.shape(), a, b);
  for (int i = 0; i < a.numel(); ++i) n->value[i] = a.value()[i] - b.value()[i];
  n->backward = [](TensorNode<S>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) {
      self.parents[0]->grad[i] += self.grad[i];
      self.parents[1]->grad[i] -= self.grad[i];
    }
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape("mul", a, b);
  auto n = detail::make_node<S>("mul", a.shape(), a, b);
  for (int i = 0; i < a.numel(); ++i) n->value[i] = a.value()[i] * b.value()[i];
  n->backward = [](TensorNode<S>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) {
      self.parents[0]->grad[i] += self.grad[i] * self.parents[1]->value[i];
      self.parents[1]->grad[i] += self.grad[i] * self.parents[0]->value[i];
    }
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  auto n = detail::make_node<S>("scale", a.shape(), a);
  for (int i = 0; i < a.numel(); ++i) n->value[i] = a.value()[i] * c;
  n->backward = [c](TensorNode<S>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->grad[i] += self.grad[i] * c;
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  auto n = detail::make_node<S>("add_scalar", a.shape(), a);
  for (int i = 0; i < a.numel(); ++i) n->value[i] = a.value()[i] + c;
  n->backward = [](TensorNode<S>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->grad[i] += self.grad[i];
  };
  return Tensor<S>(std::move(n));
}

template <typename S, typename FwdFn, typename DerFn>
Tensor<S> unary_op(const char* op, const Tensor<S>& a, FwdFn fwd, DerFn der) {
  auto n = detail::make_node<S>(op, a.shape(), a);
  for (int i = 0; i < a.numel(); ++i) n->value[i] = fwd(a.value()[i]);
  n->backward = [der](TensorNode<S>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i)
      self.parents[0]->grad[i] += self.grad[i] * der(self.parents[0]->value[i], self.value[i]);
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  return unary_op<S>(
      "relu", a, [](S x) { return x > S(0) ? x : S(0); },
      [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  return unary_op<S>(
      "sigmoid", a, [](S x) { return S(1) / (S(1) + std::exp(-x)); },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> silu(const Tensor<S>& a) {
  return unary_op<S>(
      "silu", a,
      [](S x) { return x / (S(1) + std::exp(-x)); },
      [](S x, S) {
        const S s = S(1) / (S(1) + std::exp(-x));
        return s * (S(1) + x * (S(1) - s));
      });
}

template <typename S>
Tensor<S> exp_t(const Tensor<S>& a) {
  return unary_op<S>(
      "exp", a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <typename S>
Tensor<S> log_t(const Tensor<S>& a) {
  return unary_op<S>(
      "log", a, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

template <typename S>
Tensor<S> abs_t(const Tensor<S>& a) {
  return unary_op<S>(
      "abs", a, [](S x) { return std::abs(x); },
      [](S x, S) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
}

template <typename S>
Tensor<S> sqrt_t(const Tensor<S>& a) {
  return unary_op<S>(
      "sqrt", a, [](S x) { return std::sqrt(x); },
      [](S, S y) { return S(0.5) / y; });
}

/// arccos with the argument clamped to +-(1 - 1e-7); the derivative is
/// evaluated at the clamped argument so it is always finite.
template <typename S>
Tensor<S> acos_clamped(const Tensor<S>& a) {
  return unary_op<S>(
      "acos_clamped", a, [](S x) { return std::acos(clamp_acos_arg(x)); },
      [](S x, S) {
        const S xc = clamp_acos_arg(x);
        return S(-1) / std::sqrt(S(1) - xc * xc);
      });
}

template <typename S>
Tensor<S> huber_t(const Tensor<S>& a, S delta) {
  return unary_op<S>(
      "huber", a,
      [delta](S x) {
        const S ax = std::abs(x);
        return ax <= delta ? S(0.5) * x * x : delta * (ax - S(0.5) * delta);
      },
      [delta](S x, S) {
        const S ax = std::abs(x);
        return ax <= delta ? x : (x > S(0) ? delta : -delta);
      });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  auto n = detail::make_node<S>("sum", {1}, a);
  S acc = S(0);
  for (S v : a.value()) acc += v;
  n->value[0] = acc;
  n->backward = [](TensorNode<S>& self) {
    for (auto& g : self.parents[0]->grad) g += self.grad[0];
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  return scale(sum(a), S(1) / S(a.numel()));
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, std::vector<int> shape) {
  int total = 1;
  for (int d : shape) total *= d;
  if (total != a.numel())
    throw TensorError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto n = detail::make_node<S>("reshape", std::move(shape), a);
  n->value = a.value();
  n->backward = [](TensorNode<S>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->grad[i] += self.grad[i];
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> transpose2d(const Tensor<S>& a) {
  if (a.shape().size() != 2)
    throw TensorError("transpose2d: rank-2 required, got " + shape_str(a.shape()));
  const int m = a.shape()[0], k = a.shape()[1];
  auto n = detail::make_node<S>("transpose2d", {k, m}, a);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) n->value[j * m + i] = a.value()[i * k + j];
  n->backward = [m, k](TensorNode<S>& self) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) self.parents[0]->grad[i * k + j] += self.grad[j * m + i];
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw TensorError("concat: no inputs");
  const auto& s0 = parts[0].shape();
  const int rank = static_cast<int>(s0.size());
  if (axis < 0 || axis >= rank) throw TensorError("concat: bad axis");
  std::vector<int> out_shape = s0;
  int axis_total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (static_cast<int>(s.size()) != rank)
      throw TensorError("concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(s));
    for (int d = 0; d < rank; ++d)
      if (d != axis && s[d] != s0[d])
        throw TensorError("concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(s));
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;

  int outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[d];
  for (int d = axis + 1; d < rank; ++d) inner *= s0[d];

  auto n = std::make_shared<TensorNode<S>>();
  n->shape = out_shape;
  n->value.assign(static_cast<size_t>(outer) * axis_total * inner, S(0));
  n->op = "concat";
  for (const auto& p : parts) {
    n->parents.push_back(p.node_ptr());
    n->requires_grad = n->requires_grad || p.requires_grad();
  }
  std::vector<int> axis_sizes;
  for (const auto& p : parts) axis_sizes.push_back(p.shape()[axis]);
  for (int o = 0; o < outer; ++o) {
    int off = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
      const int rows = axis_sizes[pi];
      const S* src = parts[pi].value().data() + static_cast<size_t>(o) * rows * inner;
      S* dst = n->value.data() + (static_cast<size_t>(o) * axis_total + off) * inner;
      std::copy(src, src + static_cast<size_t>(rows) * inner, dst);
      off += rows;
    }
  }
  n->backward = [outer, inner, axis_total, axis_sizes](TensorNode<S>& self) {
    for (int o = 0; o < outer; ++o) {
      int off = 0;
      for (size_t pi = 0; pi < self.parents.size(); ++pi) {
        const int rows = axis_sizes[pi];
        const S* g = self.grad.data() + (static_cast<size_t>(o) * axis_total + off) * inner;
        S* dst = self.parents[pi]->grad.data() + static_cast<size_t>(o) * rows * inner;
        for (size_t i = 0; i < static_cast<size_t>(rows) * inner; ++i) dst[i] += g[i];
        off += rows;
      }
    }
  };
  return Tensor<S>(std::move(n));
}

/// Rows [start, start+len) along axis 0.
template <typename S>
Tensor<S> slice0(const Tensor<S>& a, int start, int len) {
  const auto& s = a.shape();
  if (s.empty() || start < 0 || len <= 0 || start + len > s[0])
    throw TensorError("slice0: range [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") out of " + shape_str(s));
  std::vector<int> out_shape = s;
  out_shape[0] = len;
  const int inner = a.numel() / s[0];
  auto n = detail::make_node<S>("slice0", std::move(out_shape), a);
  std::copy(a.value().begin() + static_cast<size_t>(start) * inner,
            a.value().begin() + static_cast<size_t>(start + len) * inner, n->value.begin());
  n->backward = [start, inner](TensorNode<S>& self) {
    S* dst = self.parents[0]->grad.data() + static_cast<size_t>(start) * inner;
    for (size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  };
  return Tensor<S>(std::move(n));
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw TensorError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  const int m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
  auto n = detail::make_node<S>("matmul", {m, p}, a, b);
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      const S av = a.value()[i * k + l];
      for (int j = 0; j < p; ++j) n->value[i * p + j] += av * b.value()[l * p + j];
    }
  n->backward = [m, k, p](TensorNode<S>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    auto& ga = self.parents[0]->grad;
    auto& gb = self.parents[1]->grad;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p; ++j) {
        const S g = self.grad[i * p + j];
        if (g == S(0)) continue;
        for (int l = 0; l < k; ++l) {
          ga[i * k + l] += g * bv[l * p + j];
          gb[l * p + j] += g * av[i * k + l];
        }
      }
  };
  return Tensor<S>(std::move(n));
}

/// y = W x + b for rank-1 x.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.shape().size() != 1 || w.shape().size() != 2 || w.shape()[1] != x.shape()[0] ||
      b.shape() != std::vector<int>{w.shape()[0]})
    throw TensorError("linear: incompatible shapes x=" + shape_str(x.shape()) +
                      " w=" + shape_str(w.shape()) + " b=" + shape_str(b.shape()));
  const int m = w.shape()[0], k = w.shape()[1];
  auto n = detail::make_node<S>("linear", {m}, x, w, b);
  for (int i = 0; i < m; ++i) {
    S acc = b.value()[i];
    for (int j = 0; j < k; ++j) acc += w.value()[i * k + j] * x.value()[j];
    n->value[i] = acc;
  }
  n->backward = [m, k](TensorNode<S>& self) {
    const auto& xv = self.parents[0]->value;
    const auto& wv = self.parents[1]->value;
    for (int i = 0; i < m; ++i) {
      const S g = self.grad[i];
      self.parents[2]->grad[i] += g;
      for (int j = 0; j < k; ++j) {
        self.parents[0]->grad[j] += g * wv[i * k + j];
        self.parents[1]->grad[i * k + j] += g * xv[j];
      }
    }
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> dot(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape("dot", a, b);
  return sum(mul(a, b));
}

template <typename S>
Tensor<S> trace3(const Tensor<S>& a) {
  if (a.shape() != std::vector<int>{3, 3})
    throw TensorError("trace3: expected [3,3], got " + shape_str(a.shape()));
  auto n = detail::make_node<S>("trace3", {1}, a);
  n->value[0] = a.value()[0] + a.value()[4] + a.value()[8];
  n->backward = [](TensorNode<S>& self) {
    self.parents[0]->grad[0] += self.grad[0];
    self.parents[0]->grad[4] += self.grad[0];
    self.parents[0]->grad[8] += self.grad[0];
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> l2_normalize(const Tensor<S>& a) {
  if (a.shape().size() != 1) throw TensorError("l2_normalize: rank-1 required");
  const int k = a.shape()[0];
  S norm2 = S(0);
  for (S v : a.value()) norm2 += v * v;
  const S norm = std::sqrt(norm2);
  auto n = detail::make_node<S>("l2_normalize", a.shape(), a);
  for (int i = 0; i < k; ++i) n->value[i] = a.value()[i] / norm;
  n->backward = [norm](TensorNode<S>& self) {
    S yg = S(0);
    for (size_t i = 0; i < self.grad.size(); ++i) yg += self.value[i] * self.grad[i];
    for (size_t i = 0; i < self.grad.size(); ++i)
      self.parents[0]->grad[i] += (self.grad[i] - self.value[i] * yg) / norm;
  };
  return Tensor<S>(std::move(n));
}

/// Column-wise L2 normalization of a {d, n} matrix: every column is scaled
/// to unit norm (with an epsilon guard for all-zero columns).
template <typename S>
Tensor<S> normalize_cols(const Tensor<S>& a, S eps = S(1e-12)) {
  if (a.shape().size() != 2) throw TensorError("normalize_cols: rank-2 required");
  const int d = a.shape()[0], cols = a.shape()[1];
  auto n = detail::make_node<S>("normalize_cols", a.shape(), a);
  std::vector<S> r(static_cast<size_t>(cols));
  for (int j = 0; j < cols; ++j) {
    S s2 = eps;
    for (int i = 0; i < d; ++i) {
      const S v = a.value()[static_cast<size_t>(i) * cols + j];
      s2 += v * v;
    }
    r[static_cast<size_t>(j)] = std::sqrt(s2);
  }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < cols; ++j)
      n->value[static_cast<size_t>(i) * cols + j] =
          a.value()[static_cast<size_t>(i) * cols + j] / r[static_cast<size_t>(j)];
  n->backward = [d, cols, r](TensorNode<S>& self) {
    for (int j = 0; j < cols; ++j) {
      S yg = S(0);
      for (int i = 0; i < d; ++i) {
        const size_t idx = static_cast<size_t>(i) * cols + j;
        yg += self.value[idx] * self.grad[idx];
      }
      for (int i = 0; i < d; ++i) {
        const size_t idx = static_cast<size_t>(i) * cols + j;
        self.parents[0]->grad[idx] +=
            (self.grad[idx] - self.value[idx] * yg) / r[static_cast<size_t>(j)];
      }
    }
  };
  return Tensor<S>(std::move(n));
}

// ---------------------------------------------------------------------------
// nn ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> softmax(const Tensor<S>& a, int axis) {
  const auto& s = a.shape();
  const int rank = static_cast<int>(s.size());
  if (axis < 0 || axis >= rank) throw TensorError("softmax: bad axis");
  int outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (int d = axis + 1; d < rank; ++d) inner *= s[d];
  const int k = s[axis];
  auto n = detail::make_node<S>("softmax", s, a);
  for (int o = 0; o < outer; ++o)
    for (int in = 0; in < inner; ++in) {
      const auto at = [&](int i) -> size_t {
        return (static_cast<size_t>(o) * k + i) * inner + in;
      };
      S mx = a.value()[at(0)];
      for (int i = 1; i < k; ++i) mx = std::max(mx, a.value()[at(i)]);
      S z = S(0);
      for (int i = 0; i < k; ++i) {
        const S e = std::exp(a.value()[at(i)] - mx);
        n->value[at(i)] = e;
        z += e;
      }
      for (int i = 0; i < k; ++i) n->value[at(i)] /= z;
    }
  n->backward = [outer, inner, k](TensorNode<S>& self) {
    for (int o = 0; o < outer; ++o)
      for (int in = 0; in < inner; ++in) {
        const auto at = [&](int i) -> size_t {
          return (static_cast<size_t>(o) * k + i) * inner + in;
        };
        S yg = S(0);
        for (int i = 0; i < k; ++i) yg += self.value[at(i)] * self.grad[at(i)];
        for (int i = 0; i < k; ++i)
          self.parents[0]->grad[at(i)] += self.value[at(i)] * (self.grad[at(i)] - yg);
      }
  };
  return Tensor<S>(std::move(n));
}

/// 2-D convolution over a CHW tensor; supports stride, zero padding,
/// dilation and channel groups. Bias optional (pass undefined Tensor).
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride = 1,
                 int pad = 0, int dilation = 1, int groups = 1) {
  if (x.shape().size() != 3 || w.shape().size() != 4)
    throw TensorError("conv2d: expected CHW input and OIHW weight, got " + shape_str(x.shape()) +
                      " and " + shape_str(w.shape()));
  const int ci = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const int co = w.shape()[0], cig = w.shape()[1], kh = w.shape()[2], kw = w.shape()[3];
  if (ci != cig * groups || co % groups != 0)
    throw TensorError("conv2d: channel/group mismatch input=" + shape_str(x.shape()) +
                      " weight=" + shape_str(w.shape()) + " groups=" + std::to_string(groups));
  const int ho = (h + 2 * pad - dilation * (kh - 1) - 1) / stride + 1;
  const int wo = (wd + 2 * pad - dilation * (kw - 1) - 1) / stride + 1;
  if (ho <= 0 || wo <= 0)
    throw TensorError("conv2d: empty output for input " + shape_str(x.shape()));
  const bool has_bias = b.defined();
  auto n = has_bias ? detail::make_node<S>("conv2d", {co, ho, wo}, x, w, b)
                    : detail::make_node<S>("conv2d", {co, ho, wo}, x, w);
  const int cog = co / groups;
  const auto& xv = x.value();
  const auto& wv = w.value();
  for (int oc = 0; oc < co; ++oc) {
    const int g = oc / cog;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        S acc = has_bias ? b.value()[oc] : S(0);
        for (int ic = 0; ic < cig; ++ic) {
          const int xc = g * cig + ic;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride - pad + ky * dilation;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride - pad + kx * dilation;
              if (ix < 0 || ix >= wd) continue;
              acc += xv[(static_cast<size_t>(xc) * h + iy) * wd + ix] *
                     wv[((static_cast<size_t>(oc) * cig + ic) * kh + ky) * kw + kx];
            }
          }
        }
        n->value[(static_cast<size_t>(oc) * ho + oy) * wo + ox] = acc;
      }
  }
  n->backward = [=](TensorNode<S>& self) {
    auto& gx = self.parents[0]->grad;
    auto& gw = self.parents[1]->grad;
    const auto& xv2 = self.parents[0]->value;
    const auto& wv2 = self.parents[1]->value;
    const bool bias = self.parents.size() == 3;
    for (int oc = 0; oc < co; ++oc) {
      const int g = oc / cog;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          const S gv = self.grad[(static_cast<size_t>(oc) * ho + oy) * wo + ox];
          if (gv == S(0)) continue;
          if (bias) self.parents[2]->grad[oc] += gv;
          for (int ic = 0; ic < cig; ++ic) {
            const int xc = g * cig + ic;
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride - pad + ky * dilation;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride - pad + kx * dilation;
                if (ix < 0 || ix >= wd) continue;
                const size_t xi = (static_cast<size_t>(xc) * h + iy) * wd + ix;
                const size_t wi = ((static_cast<size_t>(oc) * cig + ic) * kh + ky) * kw + kx;
                gx[xi] += gv * wv2[wi];
                gw[wi] += gv * xv2[xi];
              }
            }
          }
        }
    }
  };
  return Tensor<S>(std::move(n));
}

/// Max-pool over CHW; gradient routes to the first maximal element in scan
/// order on ties.
template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& x, int k, int stride = 1, int pad = 0) {
  if (x.shape().size() != 3)
    throw TensorError("maxpool2d: expected CHW, got " + shape_str(x.shape()));
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw TensorError("maxpool2d: empty output");
  auto n = detail::make_node<S>("maxpool2d", {c, ho, wo}, x);
  auto argmax = std::make_shared<std::vector<int64_t>>(n->value.size(), int64_t(-1));
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        S best = -std::numeric_limits<S>::infinity();
        int64_t best_i = -1;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const size_t xi = (static_cast<size_t>(ch) * h + iy) * w + ix;
            if (x.value()[xi] > best) {
              best = x.value()[xi];
              best_i = static_cast<int64_t>(xi);
            }
          }
        }
        const size_t oi = (static_cast<size_t>(ch) * ho + oy) * wo + ox;
        n->value[oi] = best;
        (*argmax)[oi] = best_i;
      }
  n->backward = [argmax](TensorNode<S>& self) {
    for (size_t i = 0; i < self.grad.size(); ++i)
      if ((*argmax)[i] >= 0) self.parents[0]->grad[(*argmax)[i]] += self.grad[i];
  };
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  if (x.shape().size() != 3)
    throw TensorError("global_avg_pool: expected CHW, got " + shape_str(x.shape()));
  const int c = x.shape()[0];
  const int hw = x.shape()[1] * x.shape()[2];
  auto n = detail::make_node<S>("global_avg_pool", {c}, x);
  for (int ch = 0; ch < c; ++ch) {
    S acc = S(0);
    for (int i = 0; i < hw; ++i) acc += x.value()[static_cast<size_t>(ch) * hw + i];
    n->value[ch] = acc / S(hw);
  }
  n->backward = [c, hw](TensorNode<S>& self) {
    for (int ch = 0; ch < c; ++ch) {
      const S g = self.grad[ch] / S(hw);
      for (int i = 0; i < hw; ++i) self.parents[0]->grad[static_cast<size_t>(ch) * hw + i] += g;
    }
  };
  return Tensor<S>(std::move(n));
}

/// Mean plus first-order spatial moments of a CHW map: {3C} output holding
/// [mean(f), mean(xhat*f), mean(yhat*f)] with xhat, yhat in [-1, 1]. Plain
/// average pooling of translation-equivariant features is translation
/// *invariant*, which erases exactly the displacement signal a pose head
/// needs; the first moments keep it linearly accessible.
template <typename S>
Tensor<S> moment_pool(const Tensor<S>& x) {
  if (x.shape().size() != 3)
    throw TensorError("moment_pool: expected CHW, got " + shape_str(x.shape()));
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const int hw = h * w;
  auto coord = [](int i, int extent) {
    return extent > 1 ? S(2 * i - (extent - 1)) / S(extent - 1) : S(0);
  };
  auto n = detail::make_node<S>("moment_pool", {3 * c}, x);
  for (int ch = 0; ch < c; ++ch) {
    S m0 = S(0), mx = S(0), my = S(0);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const S v = x.value()[static_cast<size_t>(ch) * hw + y * w + xx];
        m0 += v;
        mx += coord(xx, w) * v;
        my += coord(y, h) * v;
      }
    n->value[ch] = m0 / S(hw);
    n->value[c + ch] = mx / S(hw);
    n->value[2 * c + ch] = my / S(hw);
  }
  n->backward = [c, h, w, hw, coord](TensorNode<S>& self) {
    for (int ch = 0; ch < c; ++ch) {
      const S g0 = self.grad[ch] / S(hw);
      const S gx = self.grad[static_cast<size_t>(c) + ch] / S(hw);
      const S gy = self.grad[static_cast<size_t>(2) * c + ch] / S(hw);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          self.parents[0]->grad[static_cast<size_t>(ch) * hw + y * w + xx] +=
              g0 + coord(xx, w) * gx + coord(y, h) * gy;
    }
  };
  return Tensor<S>(std::move(n));
}

/// FiLM: y_c = (1 + gamma_c) x_c + beta_c over a CHW map.
template <typename S>
Tensor<S> channel_affine(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta) {
  if (x.shape().size() != 3 || gamma.shape() != std::vector<int>{x.shape()[0]} ||
      beta.shape() != gamma.shape())
    throw TensorError("channel_affine: shapes x=" + shape_str(x.shape()) +
                      " gamma=" + shape_str(gamma.shape()) + " beta=" + shape_str(beta.shape()));
  const int c = x.shape()[0];
  const int hw = x.shape()[1] * x.shape()[2];
  auto n = detail::make_node<S>("channel_affine", x.shape(), x, gamma, beta);
  for (int ch = 0; ch < c; ++ch) {
    const S g = S(1) + gamma.value()[ch];
    const S b = beta.value()[ch];
    for (int i = 0; i < hw; ++i) {
      const size_t xi = static_cast<size_t>(ch) * hw + i;
      n->value[xi] = g * x.value()[xi] + b;
    }
  }
  n->backward = [c, hw](TensorNode<S>& self) {
    for (int ch = 0; ch < c; ++ch) {
      const S g = S(1) + self.parents[1]->value[ch];
      S dg = S(0), db = S(0);
      for (int i = 0; i < hw; ++i) {
        const size_t xi = static_cast<size_t>(ch) * hw + i;
        self.parents[0]->grad[xi] += g * self.grad[xi];
        dg += self.grad[xi] * self.parents[0]->value[xi];
        db += self.grad[xi];
      }
      self.parents[1]->grad[ch] += dg;
      self.parents[2]->grad[ch] += db;
    }
  };
  return Tensor<S>(std::move(n));
}

/// Multiply every channel of x {C,h,w} by a spatial map m {1,h,w}.
template <typename S>
Tensor<S> spatial_scale(const Tensor<S>& x, const Tensor<S>& m) {
  if (x.shape().size() != 3 || m.shape() != std::vector<int>{1, x.shape()[1], x.shape()[2]})
    throw TensorError("spatial_scale: shapes x=" + shape_str(x.shape()) +
                      " m=" + shape_str(m.shape()));
  const int c = x.shape()[0];
  const int hw = x.shape()[1] * x.shape()[2];
  auto n = detail::make_node<S>("spatial_scale", x.shape(), x, m);
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < hw; ++i)
      n->value[static_cast<size_t>(ch) * hw + i] =
          x.value()[static_cast<size_t>(ch) * hw + i] * m.value()[i];
  n->backward = [c, hw](TensorNode<S>& self) {
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < hw; ++i) {
        const size_t xi = static_cast<size_t>(ch) * hw + i;
        self.parents[0]->grad[xi] += self.grad[xi] * self.parents[1]->value[i];
        self.parents[1]->grad[i] += self.grad[xi] * self.parents[0]->value[xi];
      }
  };
  return Tensor<S>(std::move(n));
}

/// Multiply a whole tensor by a scalar tensor of shape {1}.
template <typename S>
Tensor<S> scale_by_scalar(const Tensor<S>& x, const Tensor<S>& s) {
  if (s.numel() != 1) throw TensorError("scale_by_scalar: scalar has shape " + shape_str(s.shape()));
  auto n = detail::make_node<S>("scale_by_scalar", x.shape(), x, s);
  const S sv = s.value()[0];
  for (int i = 0; i < x.numel(); ++i) n->value[i] = x.value()[i] * sv;
  n->backward = [](TensorNode<S>& self) {
    const S sv = self.parents[1]->value[0];
    S ds = S(0);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      self.parents[0]->grad[i] += self.grad[i] * sv;
      ds += self.grad[i] * self.parents[0]->value[i];
    }
    self.parents[1]->grad[0] += ds;
  };
  return Tensor<S>(std::move(n));
}

// ---------------------------------------------------------------------------
// SO(3) bridge ops
// ---------------------------------------------------------------------------

/// Rodrigues exponential as a graph op {3} -> {3,3}. Backward uses the
/// closed-form dR/dw_i = (w_i [w]x + [(w x (I-R) e_i)]x) / |w|^2 * R, with
/// the [e_i]x limit at the origin.
template <typename S>
Tensor<S> exp_so3_t(const Tensor<S>& omega) {
  if (omega.shape() != std::vector<int>{3})
    throw TensorError("exp_so3_t: expected {3}, got " + shape_str(omega.shape()));
  Vec3<S> w(omega.value()[0], omega.value()[1], omega.value()[2]);
  const Mat3<S> r = exp_so3(w);
  auto n = detail::make_node<S>("exp_so3", {3, 3}, omega);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) n->value[i * 3 + j] = r(i, j);
  n->backward = [w, r](TensorNode<S>& self) {
    Mat3<S> g;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) g(i, j) = self.grad[i * 3 + j];
    const S t2 = w.squaredNorm();
    for (int i = 0; i < 3; ++i) {
      Mat3<S> dr;
      if (t2 < S(1e-12)) {
        Vec3<S> e = Vec3<S>::Zero();
        e[i] = S(1);
        dr = hat(e);
      } else {
        Vec3<S> e = Vec3<S>::Zero();
        e[i] = S(1);
        const Vec3<S> a = w.cross((Mat3<S>::Identity() - r) * e);
        dr = ((w[i] * hat(w) + hat(a)) / t2) * r;
      }
      self.parents[0]->grad[i] += (g.array() * dr.array()).sum();
    }
  };
  return Tensor<S>(std::move(n));
}

/// Axis-angle from a rotation matrix, differentiable away from pi. The
/// trace path is clamped exactly as in acos_clamped; grad through a clamped
/// trace is dropped.
template <typename S>
Tensor<S> log_so3_t(const Tensor<S>& rt) {
  if (rt.shape() != std::vector<int>{3, 3})
    throw TensorError("log_so3_t: expected {3,3}, got " + shape_str(rt.shape()));
  const auto& rv = rt.value();
  const S tr = rv[0] + rv[4] + rv[8];
  const S targ = (tr - S(1)) * S(0.5);
  const S tc = clamp_acos_arg(targ);
  const bool clamped = (tc != targ);
  const S theta = std::acos(tc);
  S c, dc_dtheta;
  if (theta < S(1e-6)) {
    c = S(0.5) + theta * theta / S(12);
    dc_dtheta = theta / S(6);
  } else {
    const S s = std::sin(theta);
    c = theta / (S(2) * s);
    dc_dtheta = (s - theta * std::cos(theta)) / (S(2) * s * s);
  }
  const S v0 = rv[2 * 3 + 1] - rv[1 * 3 + 2];
  const S v1 = rv[0 * 3 + 2] - rv[2 * 3 + 0];
  const S v2 = rv[1 * 3 + 0] - rv[0 * 3 + 1];
  auto n = detail::make_node<S>("log_so3", {3}, rt);
  n->value = {c * v0, c * v1, c * v2};
  n->backward = [c, dc_dtheta, tc, clamped, v0, v1, v2](TensorNode<S>& self) {
    auto& gr = self.parents[0]->grad;
    const S g0 = self.grad[0], g1 = self.grad[1], g2 = self.grad[2];
    // v path
    gr[2 * 3 + 1] += c * g0;
    gr[1 * 3 + 2] -= c * g0;
    gr[0 * 3 + 2] += c * g1;
    gr[2 * 3 + 0] -= c * g1;
    gr[1 * 3 + 0] += c * g2;
    gr[0 * 3 + 1] -= c * g2;
    // trace path
    if (!clamped) {
      const S dc = g0 * v0 + g1 * v1 + g2 * v2;
      const S dtheta = dc * dc_dtheta;
      const S dt = dtheta * (S(-1) / std::sqrt(S(1) - tc * tc)) * S(0.5);
      gr[0] += dt;
      gr[4] += dt;
      gr[8] += dt;
    }
  };
  return Tensor<S>(std::move(n));
}

// Operator sugar used throughout the blocks.
template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, b);
}
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) {
  return sub(a, b);
}
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) {
  return mul(a, b);
}
template <typename S>
Tensor<S> operator*(S c, const Tensor<S>& a) {
  return scale(a, c);
}

}  // namespace iup

#endif
