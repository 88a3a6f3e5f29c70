#ifndef IUP_GRADCHECK_HPP
#define IUP_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "iup/tensor.hpp"

namespace iup {

/// Central-difference check of a scalar-valued tensor function against the
/// reverse-mode gradient at x. Returns the max relative error
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|) over entries.
template <typename S>
S finite_diff_check(const std::function<Tensor<S>(const Tensor<S>&)>& f, Tensor<S> x, S eps) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor<S> loss = f(x);
  loss.backward();
  std::vector<S> analytic = x.grad();

  S max_err = S(0);
  for (int i = 0; i < x.numel(); ++i) {
    const S orig = x.value()[i];
    x.value()[i] = orig + eps;
    const S fp = f(x).item();
    x.value()[i] = orig - eps;
    const S fm = f(x).item();
    x.value()[i] = orig;
    const S numeric = (fp - fm) / (S(2) * eps);
    const S denom = std::max(S(1e-8), std::abs(analytic[i]) + std::abs(numeric));
    max_err = std::max(max_err, std::abs(analytic[i] - numeric) / denom);
  }
  return max_err;
}

/// Same check against a set of parameter tensors, sampling at most
/// max_entries coordinates per tensor. f takes no argument; it must close
/// over the parameters so perturbations are visible.
template <typename S>
S finite_diff_check_params(const std::function<Tensor<S>()>& f, std::vector<Tensor<S>> params,
                           S eps, int max_entries, std::mt19937_64& rng) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor<S> loss = f();
  loss.backward();

  S max_err = S(0);
  for (auto& p : params) {
    std::vector<int> idx(static_cast<size_t>(p.numel()));
    for (int i = 0; i < p.numel(); ++i) idx[static_cast<size_t>(i)] = i;
    if (p.numel() > max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<size_t>(max_entries));
    }
    const std::vector<S> analytic = p.grad();
    for (int i : idx) {
      const S orig = p.value()[i];
      p.value()[i] = orig + eps;
      const S fp = f().item();
      p.value()[i] = orig - eps;
      const S fm = f().item();
      p.value()[i] = orig;
      const S numeric = (fp - fm) / (S(2) * eps);
      const S denom = std::max(S(1e-8), std::abs(analytic[i]) + std::abs(numeric));
      max_err = std::max(max_err, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return max_err;
}

}  // namespace iup

#endif
