// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "wali/tape.hpp"
#include "wali/tensor.hpp"

namespace wali {

// A differentiable scalar program: records onto the given tape starting from
// one input Var and returns a real scalar Var (loss = real plane of a
// one-element tensor).
template <typename T>
using TapeFn = std::function<Var(Tape<T>&, Var)>;

template <typename T>
struct GradcheckResult {
  T max_rel_err = 0;
  int64_t checked = 0;
  int64_t skipped_kinks = 0;
};

namespace detail {

template <typename T>
T eval_fn(const TapeFn<T>& f, const ComplexTensor<T>& x) {
  Tape<T> tape;
  Var in = tape.leaf(x, /*requires_grad=*/false);
  Var loss = f(tape, in);
  const ComplexTensor<T>& lv = tape.val(loss);
  if (lv.numel() != 1) throw std::invalid_argument("gradcheck: f must return a scalar");
  const T v = lv.re[0];
  if (!std::isfinite(double(v))) throw std::runtime_error("gradcheck: non-finite value from f");
  return v;
}

}  // namespace detail

// Central finite-difference check of the tape gradient of f at x. Every real
// and imaginary coordinate is perturbed by +-eps. Relative error uses
// |a - n| / max(|a|, |n|, 1e-8). Coordinates sitting on an activation kink
// (detected by strongly disagreeing one-sided differences) are excluded from
// the reported maximum but counted in skipped_kinks.
template <typename T>
GradcheckResult<T> finite_diff_gradcheck(const TapeFn<T>& f, const ComplexTensor<T>& x, T eps) {
  if (!(eps > T(0))) throw std::invalid_argument("finite_diff_gradcheck: eps must be positive");

  ComplexTensor<T> analytic;
  {
    Tape<T> tape;
    Var in = tape.leaf(x, /*requires_grad=*/true);
    Var loss = f(tape, in);
    if (tape.val(loss).numel() != 1) throw std::invalid_argument("gradcheck: f must return a scalar");
    if (!std::isfinite(double(tape.val(loss).re[0]))) {
      throw std::runtime_error("gradcheck: non-finite loss");
    }
    tape.backward(loss);
    analytic = tape.grad(in);
  }

  const T f0 = detail::eval_fn(f, x);
  GradcheckResult<T> res;
  ComplexTensor<T> xp = x;
  const int64_t n = x.numel();
  for (int64_t plane = 0; plane < 2; ++plane) {
    std::vector<T>& data = plane == 0 ? xp.re : xp.im;
    const std::vector<T>& adata = plane == 0 ? analytic.re : analytic.im;
    for (int64_t i = 0; i < n; ++i) {
      const T keep = data[size_t(i)];
      data[size_t(i)] = keep + eps;
      const T fp = detail::eval_fn(f, xp);
      data[size_t(i)] = keep - eps;
      const T fm = detail::eval_fn(f, xp);
      data[size_t(i)] = keep;

      const T num = (fp - fm) / (T(2) * eps);
      const T ana = adata[size_t(i)];
      if (!std::isfinite(double(num))) throw std::runtime_error("gradcheck: non-finite finite difference");

      // One-sided slopes; a kink between x-eps and x+eps makes them disagree
      // by an O(1) fraction rather than the O(eps) of a smooth function.
      const T dplus = (fp - f0) / eps;
      const T dminus = (f0 - fm) / eps;
      const T disagree = std::abs(dplus - dminus);
      const T scale_rel = std::max({std::abs(dplus), std::abs(dminus), T(1)});
      if (disagree > T(0.01) * scale_rel) {
        ++res.skipped_kinks;
        continue;
      }

      // Below the difference-quotient noise floor both sides are zero in any
      // measurable sense; loss-cancellation roundoff divided by 2*eps would
      // otherwise masquerade as disagreement.
      if (std::abs(ana) < T(1e-7) && std::abs(num) < T(1e-7)) {
        ++res.checked;
        continue;
      }
      const T denom = std::max({std::abs(ana), std::abs(num), T(1e-8)});
      const T rel = std::abs(ana - num) / denom;
      if (rel > res.max_rel_err) res.max_rel_err = rel;
      ++res.checked;
    }
  }
  return res;
}

// Finite-difference check of gradients w.r.t. external parameters (weights).
// `eval` runs a fresh forward pass and returns the scalar loss using the
// parameters' current values; `analytic_grads` must hold the tape gradients
// for `params` evaluated at the unperturbed point.
template <typename T>
GradcheckResult<T> finite_diff_gradcheck_params(const std::function<T()>& eval,
                                                const std::vector<Parameter<T>*>& params,
                                                const std::vector<ComplexTensor<T>>& analytic_grads,
                                                T eps) {
  if (params.size() != analytic_grads.size()) {
    throw std::invalid_argument("gradcheck_params: grads/params size mismatch");
  }
  const T f0 = eval();
  GradcheckResult<T> res;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<T>& p = *params[pi];
    const ComplexTensor<T>& ag = analytic_grads[pi];
    if (ag.shape != p.value.shape) throw std::invalid_argument("gradcheck_params: bad analytic grad shape");
    const int64_t n = p.value.numel();
    for (int64_t plane = 0; plane < 2; ++plane) {
      std::vector<T>& data = plane == 0 ? p.value.re : p.value.im;
      const std::vector<T>& adata = plane == 0 ? ag.re : ag.im;
      for (int64_t i = 0; i < n; ++i) {
        const T keep = data[size_t(i)];
        data[size_t(i)] = keep + eps;
        const T fp = eval();
        data[size_t(i)] = keep - eps;
        const T fm = eval();
        data[size_t(i)] = keep;

        const T num = (fp - fm) / (T(2) * eps);
        const T ana = adata[size_t(i)];
        const T dplus = (fp - f0) / eps;
        const T dminus = (f0 - fm) / eps;
        if (std::abs(dplus - dminus) > T(0.01) * std::max({std::abs(dplus), std::abs(dminus), T(1)})) {
          ++res.skipped_kinks;
          continue;
        }
        if (std::abs(ana) < T(1e-7) && std::abs(num) < T(1e-7)) {
          ++res.checked;
          continue;
        }
        const T denom = std::max({std::abs(ana), std::abs(num), T(1e-8)});
        const T rel = std::abs(ana - num) / denom;
        if (rel > res.max_rel_err) res.max_rel_err = rel;
        ++res.checked;
      }
    }
  }
  return res;
}

}  // namespace wali
