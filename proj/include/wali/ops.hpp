// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "wali/tape.hpp"
#include "wali/tensor.hpp"

namespace wali {

namespace detail {

// Channel axis convention: tensors shaped [..., C, F, T] keep channels at
// ndim-3; plain feature matrices [S, d] keep them at the trailing axis.
inline int channel_axis(int ndim) { return ndim >= 3 ? ndim - 3 : ndim - 1; }

template <typename T>
void add_into(ComplexTensor<T>& dst, const ComplexTensor<T>& src) {
  const int64_t n = dst.numel();
  for (int64_t i = 0; i < n; ++i) {
    dst.re[size_t(i)] += src.re[size_t(i)];
    dst.im[size_t(i)] += src.im[size_t(i)];
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise complex arithmetic
// ---------------------------------------------------------------------------

// a + b. Shapes must match, or b may be a 1-d per-channel bias broadcast along
// the channel axis of a.
template <typename T>
Var c_add(Tape<T>& tape, Var a, Var b) {
  const ComplexTensor<T>& xa = tape.val(a);
  const ComplexTensor<T>& xb = tape.val(b);
  if (xa.shape == xb.shape) {
    ComplexTensor<T> out(xa.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) {
      out.re[size_t(i)] = xa.re[size_t(i)] + xb.re[size_t(i)];
      out.im[size_t(i)] = xa.im[size_t(i)] + xb.im[size_t(i)];
    }
    return tape.op(std::move(out), {a, b}, [a, b](Tape<T>& t, int32_t self) {
      const ComplexTensor<T>& g = t.grad(Var{self});
      if (t.needs(a)) detail::add_into(t.grad_mut(a), g);
      if (t.needs(b)) detail::add_into(t.grad_mut(b), g);
    });
  }
  if (xb.ndim() != 1) {
    throw std::invalid_argument("c_add: shapes " + shape_str(xa.shape) + " vs " + shape_str(xb.shape));
  }
  const int axis = detail::channel_axis(xa.ndim());
  const int64_t C = xa.dim(axis);
  if (xb.dim(0) != C) {
    throw std::invalid_argument("c_add: bias length " + std::to_string(xb.dim(0)) +
                                " does not match channel extent " + std::to_string(C));
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= xa.dim(i);
  for (int i = axis + 1; i < xa.ndim(); ++i) inner *= xa.dim(i);
  ComplexTensor<T> out(xa.shape);
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t c = 0; c < C; ++c) {
      const int64_t base = (o * C + c) * inner;
      const T br = xb.re[size_t(c)], bi = xb.im[size_t(c)];
      for (int64_t i = 0; i < inner; ++i) {
        out.re[size_t(base + i)] = xa.re[size_t(base + i)] + br;
        out.im[size_t(base + i)] = xa.im[size_t(base + i)] + bi;
      }
    }
  }
  return tape.op(std::move(out), {a, b}, [a, b, outer, C, inner](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    if (t.needs(a)) detail::add_into(t.grad_mut(a), g);
    if (t.needs(b)) {
      ComplexTensor<T>& gb = t.grad_mut(b);
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t c = 0; c < C; ++c) {
          const int64_t base = (o * C + c) * inner;
          T sr = 0, si = 0;
          for (int64_t i = 0; i < inner; ++i) {
            sr += g.re[size_t(base + i)];
            si += g.im[size_t(base + i)];
          }
          gb.re[size_t(c)] += sr;
          gb.im[size_t(c)] += si;
        }
      }
    }
  });
}

template <typename T>
Var c_sub(Tape<T>& tape, Var a, Var b) {
  const ComplexTensor<T>& xa = tape.val(a);
  const ComplexTensor<T>& xb = tape.val(b);
  if (xa.shape != xb.shape) {
    throw std::invalid_argument("c_sub: shapes " + shape_str(xa.shape) + " vs " + shape_str(xb.shape));
  }
  ComplexTensor<T> out(xa.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    out.re[size_t(i)] = xa.re[size_t(i)] - xb.re[size_t(i)];
    out.im[size_t(i)] = xa.im[size_t(i)] - xb.im[size_t(i)];
  }
  return tape.op(std::move(out), {a, b}, [a, b](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    if (t.needs(a)) detail::add_into(t.grad_mut(a), g);
    if (t.needs(b)) {
      ComplexTensor<T>& gb = t.grad_mut(b);
      const int64_t m = g.numel();
      for (int64_t i = 0; i < m; ++i) {
        gb.re[size_t(i)] -= g.re[size_t(i)];
        gb.im[size_t(i)] -= g.im[size_t(i)];
      }
    }
  });
}

// Elementwise complex product a*b. Shapes must match, or exactly one operand
// of two 4-d tensors may have channel extent 1 (broadcast over channels).
template <typename T>
Var c_mul(Tape<T>& tape, Var a, Var b) {
  const ComplexTensor<T>& xa = tape.val(a);
  const ComplexTensor<T>& xb = tape.val(b);
  const bool same = xa.shape == xb.shape;
  bool bc_a = false, bc_b = false;  // which side broadcasts its channel axis
  if (!same) {
    if (xa.ndim() == 4 && xb.ndim() == 4 && xa.dim(0) == xb.dim(0) && xa.dim(2) == xb.dim(2) &&
        xa.dim(3) == xb.dim(3)) {
      if (xa.dim(1) == 1 && xb.dim(1) > 1) bc_a = true;
      else if (xb.dim(1) == 1 && xa.dim(1) > 1) bc_b = true;
    }
    if (!bc_a && !bc_b) {
      throw std::invalid_argument("c_mul: shapes " + shape_str(xa.shape) + " vs " + shape_str(xb.shape));
    }
  }
  const Shape out_shape = bc_a ? xb.shape : xa.shape;
  const int64_t B = same ? 1 : out_shape[0];
  const int64_t C = same ? 1 : out_shape[1];
  const int64_t inner = same ? numel_of(out_shape) : out_shape[2] * out_shape[3];
  // channel extents of each operand in the iteration space; 1 collapses the
  // channel index (broadcast or same-shape flat walk)
  const int64_t Ca = bc_a ? 1 : (same ? 1 : xa.dim(1));
  const int64_t Cb2 = bc_b ? 1 : (same ? 1 : xb.dim(1));
  auto plane_index = [](int64_t bn, int64_t c, int64_t i, int64_t Cx, int64_t inn) {
    return size_t((bn * Cx + (Cx > 1 ? c : 0)) * inn + i);
  };
  ComplexTensor<T> out(out_shape);
  for (int64_t bn = 0; bn < B; ++bn) {
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t i = 0; i < inner; ++i) {
        const size_t ia = plane_index(bn, c, i, Ca, inner);
        const size_t ib = plane_index(bn, c, i, Cb2, inner);
        const size_t io = size_t((bn * C + c) * inner + i);
        const T ar = xa.re[ia], ai = xa.im[ia], br = xb.re[ib], bi = xb.im[ib];
        out.re[io] = ar * br - ai * bi;
        out.im[io] = ar * bi + ai * br;
      }
    }
  }
  return tape.op(std::move(out), {a, b},
                 [a, b, B, C, inner, Ca, Cb2, plane_index](Tape<T>& t, int32_t self) {
                   const ComplexTensor<T>& g = t.grad(Var{self});
                   const ComplexTensor<T>& xa = t.val(a);
                   const ComplexTensor<T>& xb = t.val(b);
                   const bool na = t.needs(a), nb = t.needs(b);
                   ComplexTensor<T>* ga = na ? &t.grad_mut(a) : nullptr;
                   ComplexTensor<T>* gb = nb ? &t.grad_mut(b) : nullptr;
                   // y = a*b (complex): dL/da += conj-free plane rule
                   //   gar = gr*br + gi*bi ; gai = -gr*bi + gi*br   (= g * conj(b))
                   for (int64_t bn = 0; bn < B; ++bn) {
                     for (int64_t c = 0; c < C; ++c) {
                       for (int64_t i = 0; i < inner; ++i) {
                         const size_t ia = plane_index(bn, c, i, Ca, inner);
                         const size_t ib = plane_index(bn, c, i, Cb2, inner);
                         const size_t io = size_t((bn * C + c) * inner + i);
                         const T gr = g.re[io], gi = g.im[io];
                         if (na) {
                           ga->re[ia] += gr * xb.re[ib] + gi * xb.im[ib];
                           ga->im[ia] += -gr * xb.im[ib] + gi * xb.re[ib];
                         }
                         if (nb) {
                           gb->re[ib] += gr * xa.re[ia] + gi * xa.im[ia];
                           gb->im[ib] += -gr * xa.im[ia] + gi * xa.re[ia];
                         }
                       }
                     }
                   }
                 });
}

// x * c with a real scalar constant.
template <typename T>
Var scale(Tape<T>& tape, Var x, T c) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> out(xv.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    out.re[size_t(i)] = xv.re[size_t(i)] * c;
    out.im[size_t(i)] = xv.im[size_t(i)] * c;
  }
  return tape.op(std::move(out), {x}, [x, c](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) {
      gx.re[size_t(i)] += g.re[size_t(i)] * c;
      gx.im[size_t(i)] += g.im[size_t(i)] * c;
    }
  });
}

template <typename T>
Var conj(Tape<T>& tape, Var x) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> out(xv.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    out.re[size_t(i)] = xv.re[size_t(i)];
    out.im[size_t(i)] = -xv.im[size_t(i)];
  }
  return tape.op(std::move(out), {x}, [x](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) {
      gx.re[size_t(i)] += g.re[size_t(i)];
      gx.im[size_t(i)] -= g.im[size_t(i)];
    }
  });
}

// Real plane extracted into a real-plane tensor (imaginary plane zero).
template <typename T>
Var real_part(Tape<T>& tape, Var x) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> out(xv.shape);
  out.re = xv.re;
  return tape.op(std::move(out), {x}, [x](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) gx.re[size_t(i)] += g.re[size_t(i)];
  });
}

// Imaginary plane extracted into a real-plane tensor.
template <typename T>
Var imag_part(Tape<T>& tape, Var x) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> out(xv.shape);
  out.re = xv.im;
  return tape.op(std::move(out), {x}, [x](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) gx.im[size_t(i)] += g.re[size_t(i)];
  });
}

// ---------------------------------------------------------------------------
// Real-plane scalar chains (loss plumbing). These treat the real plane as the
// payload; imaginary planes of inputs are ignored and outputs keep them zero.
// ---------------------------------------------------------------------------

template <typename T>
Var add_const(Tape<T>& tape, Var x, T c) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> out(xv.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.re[size_t(i)] = xv.re[size_t(i)] + c;
  return tape.op(std::move(out), {x}, [x](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) gx.re[size_t(i)] += g.re[size_t(i)];
  });
}

template <typename T>
Var abs_real(Tape<T>& tape, Var x) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> out(xv.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.re[size_t(i)] = std::abs(xv.re[size_t(i)]);
  return tape.op(std::move(out), {x}, [x](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    const ComplexTensor<T>& xv = t.val(x);
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t n = g.numel();
    // subgradient 0 at the kink
    for (int64_t i = 0; i < n; ++i) {
      const T v = xv.re[size_t(i)];
      gx.re[size_t(i)] += v > T(0) ? g.re[size_t(i)] : (v < T(0) ? -g.re[size_t(i)] : T(0));
    }
  });
}

template <typename T>
Var log_real(Tape<T>& tape, Var x) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> out(xv.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    if (!(xv.re[size_t(i)] > T(0))) throw std::invalid_argument("log_real: non-positive input");
    out.re[size_t(i)] = std::log(xv.re[size_t(i)]);
  }
  return tape.op(std::move(out), {x}, [x](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    const ComplexTensor<T>& xv = t.val(x);
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) gx.re[size_t(i)] += g.re[size_t(i)] / xv.re[size_t(i)];
  });
}

template <typename T>
Var sqrt_real(Tape<T>& tape, Var x) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> out(xv.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    if (xv.re[size_t(i)] < T(0)) throw std::invalid_argument("sqrt_real: negative input");
    out.re[size_t(i)] = std::sqrt(xv.re[size_t(i)]);
  }
  return tape.op(std::move(out), {x}, [x](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    const ComplexTensor<T>& yv = t.val(Var{self});
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) {
      const T d = std::max(yv.re[size_t(i)], T(1e-30));
      gx.re[size_t(i)] += g.re[size_t(i)] / (T(2) * d);
    }
  });
}

// Elementwise real quotient a/b on real planes.
template <typename T>
Var div_real(Tape<T>& tape, Var a, Var b) {
  const ComplexTensor<T>& xa = tape.val(a);
  const ComplexTensor<T>& xb = tape.val(b);
  if (xa.shape != xb.shape) {
    throw std::invalid_argument("div_real: shapes " + shape_str(xa.shape) + " vs " + shape_str(xb.shape));
  }
  ComplexTensor<T> out(xa.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    if (xb.re[size_t(i)] == T(0)) throw std::invalid_argument("div_real: zero denominator");
    out.re[size_t(i)] = xa.re[size_t(i)] / xb.re[size_t(i)];
  }
  return tape.op(std::move(out), {a, b}, [a, b](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    const ComplexTensor<T>& xa = t.val(a);
    const ComplexTensor<T>& xb = t.val(b);
    const int64_t n = g.numel();
    if (t.needs(a)) {
      ComplexTensor<T>& ga = t.grad_mut(a);
      for (int64_t i = 0; i < n; ++i) ga.re[size_t(i)] += g.re[size_t(i)] / xb.re[size_t(i)];
    }
    if (t.needs(b)) {
      ComplexTensor<T>& gb = t.grad_mut(b);
      for (int64_t i = 0; i < n; ++i) {
        const T bb = xb.re[size_t(i)];
        gb.re[size_t(i)] -= g.re[size_t(i)] * xa.re[size_t(i)] / (bb * bb);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

// Complex sum over all elements -> shape [1].
template <typename T>
Var sum_all(Tape<T>& tape, Var x) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> out(Shape{1});
  const int64_t n = xv.numel();
  T sr = 0, si = 0;
  for (int64_t i = 0; i < n; ++i) {
    sr += xv.re[size_t(i)];
    si += xv.im[size_t(i)];
  }
  out.re[0] = sr;
  out.im[0] = si;
  return tape.op(std::move(out), {x}, [x](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t n = gx.numel();
    for (int64_t i = 0; i < n; ++i) {
      gx.re[size_t(i)] += g.re[0];
      gx.im[size_t(i)] += g.im[0];
    }
  });
}

template <typename T>
Var mean_all(Tape<T>& tape, Var x) {
  const int64_t n = tape.val(x).numel();
  return scale(tape, sum_all(tape, x), T(1.0 / double(n)));
}

// sum(re^2 + im^2) -> real scalar [1]; the squared Frobenius norm.
template <typename T>
Var sum_sq(Tape<T>& tape, Var x) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> out(Shape{1});
  const int64_t n = xv.numel();
  T s = 0;
  for (int64_t i = 0; i < n; ++i) {
    s += xv.re[size_t(i)] * xv.re[size_t(i)] + xv.im[size_t(i)] * xv.im[size_t(i)];
  }
  out.re[0] = s;
  return tape.op(std::move(out), {x}, [x](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    const ComplexTensor<T>& xv = t.val(x);
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t n = xv.numel();
    const T gr = g.re[0];
    for (int64_t i = 0; i < n; ++i) {
      gx.re[size_t(i)] += T(2) * gr * xv.re[size_t(i)];
      gx.im[size_t(i)] += T(2) * gr * xv.im[size_t(i)];
    }
  });
}

// ---------------------------------------------------------------------------
// Structure: reshape / permute / concat / select
// ---------------------------------------------------------------------------

// Combined view change: permute axes first (if perm non-empty), then reshape
// to new_shape (if non-empty). Both legs are exact bijections on coordinates.
struct ViewSpec {
  std::vector<int> perm;  // empty = identity
  Shape new_shape;        // empty = keep
};

namespace detail {

template <typename T>
ComplexTensor<T> permute_copy(const ComplexTensor<T>& x, const std::vector<int>& perm, bool invert) {
  const int nd = x.ndim();
  if (int(perm.size()) != nd) throw std::invalid_argument("permute: rank mismatch");
  std::vector<int> p(perm);
  if (invert) {
    for (int i = 0; i < nd; ++i) p[size_t(perm[size_t(i)])] = i;
  }
  const size_t und = size_t(nd);
  Shape out_shape(und);
  for (int i = 0; i < nd; ++i) out_shape[size_t(i)] = x.dim(p[size_t(i)]);
  ComplexTensor<T> out(out_shape);
  const auto in_st = x.strides();
  std::vector<int64_t> src_stride(und);
  for (int i = 0; i < nd; ++i) src_stride[size_t(i)] = in_st[size_t(p[size_t(i)])];
  std::vector<int64_t> idx(size_t(nd), 0);
  const int64_t n = out.numel();
  int64_t src = 0;
  for (int64_t flat = 0; flat < n; ++flat) {
    out.re[size_t(flat)] = x.re[size_t(src)];
    out.im[size_t(flat)] = x.im[size_t(src)];
    for (int d = nd - 1; d >= 0; --d) {
      idx[size_t(d)]++;
      src += src_stride[size_t(d)];
      if (idx[size_t(d)] < out_shape[size_t(d)]) break;
      src -= src_stride[size_t(d)] * out_shape[size_t(d)];
      idx[size_t(d)] = 0;
    }
  }
  return out;
}

}  // namespace detail

template <typename T>
Var reshape_permute(Tape<T>& tape, Var x, const ViewSpec& spec) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> mid = spec.perm.empty() ? xv : detail::permute_copy(xv, spec.perm, false);
  Shape mid_shape = mid.shape;
  if (!spec.new_shape.empty()) {
    if (numel_of(spec.new_shape) != mid.numel()) {
      throw std::invalid_argument("reshape_permute: cannot reshape " + shape_str(mid.shape) + " to " +
                                  shape_str(spec.new_shape));
    }
    mid.shape = spec.new_shape;
  }
  return tape.op(std::move(mid), {x}, [x, spec, mid_shape](Tape<T>& t, int32_t self) {
    ComplexTensor<T> g = t.grad(Var{self});  // copy; we re-view it
    g.shape = mid_shape;
    ComplexTensor<T> gx = spec.perm.empty() ? std::move(g) : detail::permute_copy(g, spec.perm, true);
    detail::add_into(t.grad_mut(x), gx);
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape s) {
  return reshape_permute(tape, x, ViewSpec{{}, std::move(s)});
}

template <typename T>
Var permute(Tape<T>& tape, Var x, std::vector<int> perm) {
  return reshape_permute(tape, x, ViewSpec{std::move(perm), {}});
}

// Concatenate along the channel axis (ndim-3). All other extents must match.
template <typename T>
Var concat_channels(Tape<T>& tape, const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const ComplexTensor<T>& x0 = tape.val(xs[0]);
  if (x0.ndim() < 3) throw std::invalid_argument("concat_channels: need >= 3-d tensors");
  const int axis = detail::channel_axis(x0.ndim());
  int64_t outer = 1, inner = 1, ctotal = 0;
  for (int i = 0; i < axis; ++i) outer *= x0.dim(i);
  for (int i = axis + 1; i < x0.ndim(); ++i) inner *= x0.dim(i);
  std::vector<int64_t> cs;
  for (Var v : xs) {
    const ComplexTensor<T>& xi = tape.val(v);
    if (xi.ndim() != x0.ndim()) throw std::invalid_argument("concat_channels: rank mismatch");
    for (int d = 0; d < x0.ndim(); ++d) {
      if (d != axis && xi.dim(d) != x0.dim(d)) {
        throw std::invalid_argument("concat_channels: extent mismatch at axis " + std::to_string(d));
      }
    }
    cs.push_back(xi.dim(axis));
    ctotal += xi.dim(axis);
  }
  Shape out_shape = x0.shape;
  out_shape[size_t(axis)] = ctotal;
  ComplexTensor<T> out(out_shape);
  int64_t coff = 0;
  for (size_t k = 0; k < xs.size(); ++k) {
    const ComplexTensor<T>& xi = tape.val(xs[k]);
    for (int64_t o = 0; o < outer; ++o) {
      const int64_t src = o * cs[k] * inner;
      const int64_t dst = (o * ctotal + coff) * inner;
      std::copy_n(xi.re.begin() + src, cs[k] * inner, out.re.begin() + dst);
      std::copy_n(xi.im.begin() + src, cs[k] * inner, out.im.begin() + dst);
    }
    coff += cs[k];
  }
  return tape.op(std::move(out), xs, [xs, cs, outer, inner, ctotal](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    int64_t coff2 = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
      if (t.needs(xs[k])) {
        ComplexTensor<T>& gx = t.grad_mut(xs[k]);
        for (int64_t o = 0; o < outer; ++o) {
          const int64_t dst = o * cs[k] * inner;
          const int64_t src = (o * ctotal + coff2) * inner;
          for (int64_t i = 0; i < cs[k] * inner; ++i) {
            gx.re[size_t(dst + i)] += g.re[size_t(src + i)];
            gx.im[size_t(dst + i)] += g.im[size_t(src + i)];
          }
        }
      }
      coff2 += cs[k];
    }
  });
}

// [R, C] -> [R + k, C] with the new rows zero. Gradient of the zero rows is
// discarded.
template <typename T>
Var append_zero_rows(Tape<T>& tape, Var x, int64_t k) {
  const ComplexTensor<T>& xv = tape.val(x);
  require_ndim(xv, 2, "append_zero_rows");
  if (k < 0) throw std::invalid_argument("append_zero_rows: negative row count");
  const int64_t r = xv.dim(0), c = xv.dim(1);
  ComplexTensor<T> out(Shape{r + k, c});
  std::copy_n(xv.re.begin(), r * c, out.re.begin());
  std::copy_n(xv.im.begin(), r * c, out.im.begin());
  return tape.op(std::move(out), {x}, [x, r, c](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    ComplexTensor<T>& gx = t.grad_mut(x);
    for (int64_t i = 0; i < r * c; ++i) {
      gx.re[size_t(i)] += g.re[size_t(i)];
      gx.im[size_t(i)] += g.im[size_t(i)];
    }
  });
}

// x[i] along axis 0: [B, ...] -> [...].
template <typename T>
Var select0(Tape<T>& tape, Var x, int64_t index) {
  const ComplexTensor<T>& xv = tape.val(x);
  if (xv.ndim() < 1 || index < 0 || index >= xv.dim(0)) {
    throw std::invalid_argument("select0: index " + std::to_string(index) + " out of range for " +
                                shape_str(xv.shape));
  }
  Shape out_shape(xv.shape.begin() + 1, xv.shape.end());
  ComplexTensor<T> out(out_shape);
  const int64_t inner = out.numel();
  std::copy_n(xv.re.begin() + index * inner, inner, out.re.begin());
  std::copy_n(xv.im.begin() + index * inner, inner, out.im.begin());
  return tape.op(std::move(out), {x}, [x, index, inner](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    ComplexTensor<T>& gx = t.grad_mut(x);
    for (int64_t i = 0; i < inner; ++i) {
      gx.re[size_t(index * inner + i)] += g.re[size_t(i)];
      gx.im[size_t(index * inner + i)] += g.im[size_t(i)];
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

namespace detail {

// C[m,n] += sign * op(A)[m,k] * op(B)[k,n]; op is optional transposition of
// the stored [rows, cols] layout.
template <typename T>
void mm_plane(const T* A, const T* B, T* C, int64_t m, int64_t k, int64_t n, bool tA, bool tB, T sign) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const T a = sign * (tA ? A[p * m + i] : A[i * k + p]);
      if (a == T(0)) continue;
      T* crow = C + i * n;
      if (!tB) {
        const T* brow = B + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      } else {
        for (int64_t j = 0; j < n; ++j) crow[j] += a * B[j * k + p];
      }
    }
  }
}

}  // namespace detail

// Complex matrix product. Supports [m,k]x[k,n] and batched [g,m,k]x[g,k,n].
template <typename T>
Var c_matmul(Tape<T>& tape, Var a, Var b) {
  const ComplexTensor<T>& xa = tape.val(a);
  const ComplexTensor<T>& xb = tape.val(b);
  const bool batched = xa.ndim() == 3;
  if (batched) {
    if (xb.ndim() != 3 || xa.dim(0) != xb.dim(0) || xa.dim(2) != xb.dim(1)) {
      throw std::invalid_argument("c_matmul: bad batched operands " + shape_str(xa.shape) + " x " +
                                  shape_str(xb.shape));
    }
  } else if (xa.ndim() != 2 || xb.ndim() != 2 || xa.dim(1) != xb.dim(0)) {
    throw std::invalid_argument("c_matmul: bad operands " + shape_str(xa.shape) + " x " +
                                shape_str(xb.shape));
  }
  const int64_t G = batched ? xa.dim(0) : 1;
  const int64_t m = xa.dim(batched ? 1 : 0);
  const int64_t k = xa.dim(batched ? 2 : 1);
  const int64_t n = xb.dim(batched ? 2 : 1);
  Shape out_shape = batched ? Shape{G, m, n} : Shape{m, n};
  ComplexTensor<T> out(out_shape);
  for (int64_t g = 0; g < G; ++g) {
    const T* ar = xa.re.data() + g * m * k;
    const T* ai = xa.im.data() + g * m * k;
    const T* br = xb.re.data() + g * k * n;
    const T* bi = xb.im.data() + g * k * n;
    T* cr = out.re.data() + g * m * n;
    T* ci = out.im.data() + g * m * n;
    detail::mm_plane(ar, br, cr, m, k, n, false, false, T(1));
    detail::mm_plane(ai, bi, cr, m, k, n, false, false, T(-1));
    detail::mm_plane(ar, bi, ci, m, k, n, false, false, T(1));
    detail::mm_plane(ai, br, ci, m, k, n, false, false, T(1));
  }
  return tape.op(std::move(out), {a, b}, [a, b, G, m, k, n](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    const ComplexTensor<T>& xa = t.val(a);
    const ComplexTensor<T>& xb = t.val(b);
    for (int64_t gi = 0; gi < G; ++gi) {
      const T* gr = g.re.data() + gi * m * n;
      const T* gim = g.im.data() + gi * m * n;
      const T* ar = xa.re.data() + gi * m * k;
      const T* ai = xa.im.data() + gi * m * k;
      const T* br = xb.re.data() + gi * k * n;
      const T* bi = xb.im.data() + gi * k * n;
      if (t.needs(a)) {
        ComplexTensor<T>& ga = t.grad_mut(a);
        T* gar = ga.re.data() + gi * m * k;
        T* gai = ga.im.data() + gi * m * k;
        // dAr = gr Br^T + gim Bi^T ; dAi = -gr Bi^T + gim Br^T
        detail::mm_plane(gr, br, gar, m, n, k, false, true, T(1));
        detail::mm_plane(gim, bi, gar, m, n, k, false, true, T(1));
        detail::mm_plane(gr, bi, gai, m, n, k, false, true, T(-1));
        detail::mm_plane(gim, br, gai, m, n, k, false, true, T(1));
      }
      if (t.needs(b)) {
        ComplexTensor<T>& gb = t.grad_mut(b);
        T* gbr = gb.re.data() + gi * k * n;
        T* gbi = gb.im.data() + gi * k * n;
        // dBr = Ar^T gr + Ai^T gim ; dBi = -Ai^T gr + Ar^T gim
        detail::mm_plane(ar, gr, gbr, k, m, n, true, false, T(1));
        detail::mm_plane(ai, gim, gbr, k, m, n, true, false, T(1));
        detail::mm_plane(ai, gr, gbi, k, m, n, true, false, T(-1));
        detail::mm_plane(ar, gim, gbi, k, m, n, true, false, T(1));
      }
    }
  });
}

}  // namespace wali
