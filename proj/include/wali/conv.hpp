// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <vector>

#include "wali/ops.hpp"
#include "wali/tape.hpp"
#include "wali/tensor.hpp"

namespace wali {

struct Conv2dGeom {
  int stride_f = 1, stride_t = 1;
  int pad_f = 0, pad_t = 0;
  int out_pad_f = 0, out_pad_t = 0;  // transposed conv only; must be < stride
};

namespace detail {

struct ConvDims {
  int64_t B, Ci, F, Tt;      // input
  int64_t Co, kf, kt;        // weight [Co,Ci,kf,kt]
  int64_t Fo, To;            // output spatial
  Conv2dGeom g;
};

// out[a][fo][to] += sign * sum_{b,df,dt} in[b][fo*sf-pf+df][to*st-pt+dt] * W(a,b)[df][dt]
// w_a_major: W(a,b) at w[a*Cb + b], else w[b*Ca + a]. Zero padding outside.
template <typename T>
void conv_gather_plane(const T* in, int64_t Cb, int64_t F, int64_t Tt, const T* w, int64_t Ca,
                       int64_t kf, int64_t kt, bool w_a_major, const Conv2dGeom& g, T* out,
                       int64_t Fo, int64_t To, T sign) {
  for (int64_t a = 0; a < Ca; ++a) {
    for (int64_t b = 0; b < Cb; ++b) {
      const T* wp = w + (w_a_major ? (a * Cb + b) : (b * Ca + a)) * kf * kt;
      const T* xp = in + b * F * Tt;
      T* yp = out + a * Fo * To;
      for (int64_t df = 0; df < kf; ++df) {
        for (int64_t dt = 0; dt < kt; ++dt) {
          const T wv = sign * wp[df * kt + dt];
          if (wv == T(0)) continue;
          for (int64_t fo = 0; fo < Fo; ++fo) {
            const int64_t fi = fo * g.stride_f - g.pad_f + df;
            if (fi < 0 || fi >= F) continue;
            const T* xrow = xp + fi * Tt;
            T* yrow = yp + fo * To;
            for (int64_t to = 0; to < To; ++to) {
              const int64_t ti = to * g.stride_t - g.pad_t + dt;
              if (ti < 0 || ti >= Tt) continue;
              yrow[to] += wv * xrow[ti];
            }
          }
        }
      }
    }
  }
}

// out[a][f*sf-pf+df][t*st-pt+dt] += sign * in[b][f][t] * W(a,b)[df][dt]
template <typename T>
void conv_scatter_plane(const T* in, int64_t Cb, int64_t F, int64_t Tt, const T* w, int64_t Ca,
                        int64_t kf, int64_t kt, bool w_a_major, const Conv2dGeom& g, T* out,
                        int64_t Fo, int64_t To, T sign) {
  for (int64_t a = 0; a < Ca; ++a) {
    for (int64_t b = 0; b < Cb; ++b) {
      const T* wp = w + (w_a_major ? (a * Cb + b) : (b * Ca + a)) * kf * kt;
      const T* xp = in + b * F * Tt;
      T* yp = out + a * Fo * To;
      for (int64_t df = 0; df < kf; ++df) {
        for (int64_t dt = 0; dt < kt; ++dt) {
          const T wv = sign * wp[df * kt + dt];
          if (wv == T(0)) continue;
          for (int64_t f = 0; f < F; ++f) {
            const int64_t fo = f * g.stride_f - g.pad_f + df;
            if (fo < 0 || fo >= Fo) continue;
            const T* xrow = xp + f * Tt;
            T* yrow = yp + fo * To;
            for (int64_t t = 0; t < Tt; ++t) {
              const int64_t to = t * g.stride_t - g.pad_t + dt;
              if (to < 0 || to >= To) continue;
              yrow[to] += wv * xrow[t];
            }
          }
        }
      }
    }
  }
}

// gw[(co,ci)][df][dt] += sign * sum_{f,t} dense[c1][f][t] * wide[c2][f*sf-pf+df][t*st-pt+dt]
// dense_is_out: c1 iterates Co (dense = conv output grad); else c1 iterates Ci
// (dense = transposed-conv input).
template <typename T>
void conv_dw_plane(const T* dense, int64_t C1, int64_t F1, int64_t T1, const T* wide, int64_t C2,
                   int64_t F2, int64_t T2, bool dense_is_out, const Conv2dGeom& g, T* gw,
                   int64_t kf, int64_t kt, T sign) {
  for (int64_t c1 = 0; c1 < C1; ++c1) {
    for (int64_t c2 = 0; c2 < C2; ++c2) {
      const int64_t co = dense_is_out ? c1 : c2;
      const int64_t ci = dense_is_out ? c2 : c1;
      T* wp = gw + (co * (dense_is_out ? C2 : C1) + ci) * kf * kt;
      const T* dp = dense + c1 * F1 * T1;
      const T* vp = wide + c2 * F2 * T2;
      for (int64_t df = 0; df < kf; ++df) {
        for (int64_t dt = 0; dt < kt; ++dt) {
          T acc = 0;
          for (int64_t f = 0; f < F1; ++f) {
            const int64_t fw = f * g.stride_f - g.pad_f + df;
            if (fw < 0 || fw >= F2) continue;
            const T* drow = dp + f * T1;
            const T* vrow = vp + fw * T2;
            for (int64_t t = 0; t < T1; ++t) {
              const int64_t tw = t * g.stride_t - g.pad_t + dt;
              if (tw < 0 || tw >= T2) continue;
              acc += drow[t] * vrow[tw];
            }
          }
          wp[df * kt + dt] += sign * acc;
        }
      }
    }
  }
}

template <typename T>
ConvDims conv_dims(const ComplexTensor<T>& x, const ComplexTensor<T>& w, const Conv2dGeom& g,
                   bool transposed, const char* who) {
  if (x.ndim() != 3 && x.ndim() != 4) {
    throw std::invalid_argument(std::string(who) + ": input must be [C,F,T] or [B,C,F,T], got " +
                                shape_str(x.shape));
  }
  if (w.ndim() != 4) {
    throw std::invalid_argument(std::string(who) + ": weight must be [Co,Ci,kf,kt], got " +
                                shape_str(w.shape));
  }
  ConvDims d;
  d.g = g;
  const bool batched = x.ndim() == 4;
  d.B = batched ? x.dim(0) : 1;
  d.Ci = x.dim(batched ? 1 : 0);
  d.F = x.dim(batched ? 2 : 1);
  d.Tt = x.dim(batched ? 3 : 2);
  d.Co = w.dim(0);
  d.kf = w.dim(2);
  d.kt = w.dim(3);
  if (w.dim(1) != d.Ci) {
    throw std::invalid_argument(std::string(who) + ": weight expects " + std::to_string(w.dim(1)) +
                                " input channels, tensor has " + std::to_string(d.Ci));
  }
  if (g.stride_f < 1 || g.stride_t < 1) throw std::invalid_argument(std::string(who) + ": stride must be >= 1");
  if (!transposed) {
    if (g.out_pad_f != 0 || g.out_pad_t != 0) {
      throw std::invalid_argument(std::string(who) + ": output padding only applies to transposed conv");
    }
    if (d.F + 2 * g.pad_f < d.kf || d.Tt + 2 * g.pad_t < d.kt) {
      throw std::invalid_argument(std::string(who) + ": kernel larger than padded input " + shape_str(x.shape));
    }
    d.Fo = (d.F + 2 * g.pad_f - d.kf) / g.stride_f + 1;
    d.To = (d.Tt + 2 * g.pad_t - d.kt) / g.stride_t + 1;
  } else {
    if (g.out_pad_f >= g.stride_f || g.out_pad_t >= g.stride_t) {
      throw std::invalid_argument(std::string(who) + ": output padding must be < stride");
    }
    d.Fo = (d.F - 1) * g.stride_f - 2 * g.pad_f + d.kf + g.out_pad_f;
    d.To = (d.Tt - 1) * g.stride_t - 2 * g.pad_t + d.kt + g.out_pad_t;
  }
  if (d.Fo < 1 || d.To < 1) {
    throw std::invalid_argument(std::string(who) + ": empty output for input " + shape_str(x.shape));
  }
  return d;
}

template <typename T>
void add_channel_bias(ComplexTensor<T>& y, const ComplexTensor<T>& b, int64_t B, int64_t C,
                      int64_t inner) {
  for (int64_t bn = 0; bn < B; ++bn) {
    for (int64_t c = 0; c < C; ++c) {
      T* yr = y.re.data() + (bn * C + c) * inner;
      T* yi = y.im.data() + (bn * C + c) * inner;
      const T br = b.re[size_t(c)], bi = b.im[size_t(c)];
      for (int64_t i = 0; i < inner; ++i) {
        yr[i] += br;
        yi[i] += bi;
      }
    }
  }
}

template <typename T>
void bias_grad(const ComplexTensor<T>& gy, ComplexTensor<T>& gb, int64_t B, int64_t C, int64_t inner) {
  for (int64_t bn = 0; bn < B; ++bn) {
    for (int64_t c = 0; c < C; ++c) {
      const T* gr = gy.re.data() + (bn * C + c) * inner;
      const T* gi = gy.im.data() + (bn * C + c) * inner;
      T sr = 0, si = 0;
      for (int64_t i = 0; i < inner; ++i) {
        sr += gr[i];
        si += gi[i];
      }
      gb.re[size_t(c)] += sr;
      gb.im[size_t(c)] += si;
    }
  }
}

}  // namespace detail

// Complex 2-D convolution (cross-correlation form) over [B,Ci,F,T] or
// [Ci,F,T], weight [Co,Ci,kf,kt], optional bias [Co]:
//   out_r = x_r * W_r - x_i * W_i + b_r
//   out_i = x_r * W_i + x_i * W_r + b_i
template <typename T>
Var c_conv2d(Tape<T>& tape, Var x, Var w, Var b, const Conv2dGeom& g) {
  const ComplexTensor<T>& xv = tape.val(x);
  const ComplexTensor<T>& wv = tape.val(w);
  const auto d = detail::conv_dims(xv, wv, g, /*transposed=*/false, "c_conv2d");
  const bool batched = xv.ndim() == 4;
  Shape out_shape = batched ? Shape{d.B, d.Co, d.Fo, d.To} : Shape{d.Co, d.Fo, d.To};
  ComplexTensor<T> out(out_shape);
  for (int64_t bn = 0; bn < d.B; ++bn) {
    const T* xr = xv.re.data() + bn * d.Ci * d.F * d.Tt;
    const T* xi = xv.im.data() + bn * d.Ci * d.F * d.Tt;
    T* yr = out.re.data() + bn * d.Co * d.Fo * d.To;
    T* yi = out.im.data() + bn * d.Co * d.Fo * d.To;
    detail::conv_gather_plane(xr, d.Ci, d.F, d.Tt, wv.re.data(), d.Co, d.kf, d.kt, true, g, yr, d.Fo, d.To, T(1));
    detail::conv_gather_plane(xi, d.Ci, d.F, d.Tt, wv.im.data(), d.Co, d.kf, d.kt, true, g, yr, d.Fo, d.To, T(-1));
    detail::conv_gather_plane(xr, d.Ci, d.F, d.Tt, wv.im.data(), d.Co, d.kf, d.kt, true, g, yi, d.Fo, d.To, T(1));
    detail::conv_gather_plane(xi, d.Ci, d.F, d.Tt, wv.re.data(), d.Co, d.kf, d.kt, true, g, yi, d.Fo, d.To, T(1));
  }
  if (b.valid()) {
    const ComplexTensor<T>& bv = tape.val(b);
    require_shape(bv, Shape{d.Co}, "c_conv2d bias");
    detail::add_channel_bias(out, bv, d.B, d.Co, d.Fo * d.To);
  }
  auto bw = [x, w, b, d](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& gy = t.grad(Var{self});
    const ComplexTensor<T>& xv = t.val(x);
    const ComplexTensor<T>& wv = t.val(w);
    for (int64_t bn = 0; bn < d.B; ++bn) {
      const int64_t xoff = bn * d.Ci * d.F * d.Tt;
      const int64_t yoff = bn * d.Co * d.Fo * d.To;
      const T* gr = gy.re.data() + yoff;
      const T* gi = gy.im.data() + yoff;
      if (t.needs(x)) {
        ComplexTensor<T>& gx = t.grad_mut(x);
        T* gxr = gx.re.data() + xoff;
        T* gxi = gx.im.data() + xoff;
        detail::conv_scatter_plane(gr, d.Co, d.Fo, d.To, wv.re.data(), d.Ci, d.kf, d.kt, false, d.g, gxr, d.F, d.Tt, T(1));
        detail::conv_scatter_plane(gi, d.Co, d.Fo, d.To, wv.im.data(), d.Ci, d.kf, d.kt, false, d.g, gxr, d.F, d.Tt, T(1));
        detail::conv_scatter_plane(gr, d.Co, d.Fo, d.To, wv.im.data(), d.Ci, d.kf, d.kt, false, d.g, gxi, d.F, d.Tt, T(-1));
        detail::conv_scatter_plane(gi, d.Co, d.Fo, d.To, wv.re.data(), d.Ci, d.kf, d.kt, false, d.g, gxi, d.F, d.Tt, T(1));
      }
      if (t.needs(w)) {
        ComplexTensor<T>& gw = t.grad_mut(w);
        const T* xr = xv.re.data() + xoff;
        const T* xi = xv.im.data() + xoff;
        detail::conv_dw_plane(gr, d.Co, d.Fo, d.To, xr, d.Ci, d.F, d.Tt, true, d.g, gw.re.data(), d.kf, d.kt, T(1));
        detail::conv_dw_plane(gi, d.Co, d.Fo, d.To, xi, d.Ci, d.F, d.Tt, true, d.g, gw.re.data(), d.kf, d.kt, T(1));
        detail::conv_dw_plane(gr, d.Co, d.Fo, d.To, xi, d.Ci, d.F, d.Tt, true, d.g, gw.im.data(), d.kf, d.kt, T(-1));
        detail::conv_dw_plane(gi, d.Co, d.Fo, d.To, xr, d.Ci, d.F, d.Tt, true, d.g, gw.im.data(), d.kf, d.kt, T(1));
      }
    }
    if (b.valid() && t.needs(b)) {
      detail::bias_grad(gy, t.grad_mut(b), d.B, d.Co, d.Fo * d.To);
    }
  };
  if (b.valid()) return tape.op(std::move(out), {x, w, b}, bw);
  return tape.op(std::move(out), {x, w}, bw);
}

// Complex transposed 2-D convolution; weight [Co,Ci,kf,kt] maps Ci -> Co with
//   out[co, f*sf-pf+df, t*st-pt+dt] += x[ci,f,t] * w[co,ci,df,dt]
// and the same plane composition as c_conv2d.
template <typename T>
Var c_conv_transpose2d(Tape<T>& tape, Var x, Var w, Var b, const Conv2dGeom& g) {
  const ComplexTensor<T>& xv = tape.val(x);
  const ComplexTensor<T>& wv = tape.val(w);
  const auto d = detail::conv_dims(xv, wv, g, /*transposed=*/true, "c_conv_transpose2d");
  const bool batched = xv.ndim() == 4;
  Shape out_shape = batched ? Shape{d.B, d.Co, d.Fo, d.To} : Shape{d.Co, d.Fo, d.To};
  ComplexTensor<T> out(out_shape);
  for (int64_t bn = 0; bn < d.B; ++bn) {
    const T* xr = xv.re.data() + bn * d.Ci * d.F * d.Tt;
    const T* xi = xv.im.data() + bn * d.Ci * d.F * d.Tt;
    T* yr = out.re.data() + bn * d.Co * d.Fo * d.To;
    T* yi = out.im.data() + bn * d.Co * d.Fo * d.To;
    detail::conv_scatter_plane(xr, d.Ci, d.F, d.Tt, wv.re.data(), d.Co, d.kf, d.kt, true, g, yr, d.Fo, d.To, T(1));
    detail::conv_scatter_plane(xi, d.Ci, d.F, d.Tt, wv.im.data(), d.Co, d.kf, d.kt, true, g, yr, d.Fo, d.To, T(-1));
    detail::conv_scatter_plane(xr, d.Ci, d.F, d.Tt, wv.im.data(), d.Co, d.kf, d.kt, true, g, yi, d.Fo, d.To, T(1));
    detail::conv_scatter_plane(xi, d.Ci, d.F, d.Tt, wv.re.data(), d.Co, d.kf, d.kt, true, g, yi, d.Fo, d.To, T(1));
  }
  if (b.valid()) {
    const ComplexTensor<T>& bv = tape.val(b);
    require_shape(bv, Shape{d.Co}, "c_conv_transpose2d bias");
    detail::add_channel_bias(out, bv, d.B, d.Co, d.Fo * d.To);
  }
  auto bw = [x, w, b, d](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& gy = t.grad(Var{self});
    const ComplexTensor<T>& xv = t.val(x);
    const ComplexTensor<T>& wv = t.val(w);
    for (int64_t bn = 0; bn < d.B; ++bn) {
      const int64_t xoff = bn * d.Ci * d.F * d.Tt;
      const int64_t yoff = bn * d.Co * d.Fo * d.To;
      const T* gr = gy.re.data() + yoff;
      const T* gi = gy.im.data() + yoff;
      if (t.needs(x)) {
        ComplexTensor<T>& gx = t.grad_mut(x);
        T* gxr = gx.re.data() + xoff;
        T* gxi = gx.im.data() + xoff;
        detail::conv_gather_plane(gr, d.Co, d.Fo, d.To, wv.re.data(), d.Ci, d.kf, d.kt, false, d.g, gxr, d.F, d.Tt, T(1));
        detail::conv_gather_plane(gi, d.Co, d.Fo, d.To, wv.im.data(), d.Ci, d.kf, d.kt, false, d.g, gxr, d.F, d.Tt, T(1));
        detail::conv_gather_plane(gr, d.Co, d.Fo, d.To, wv.im.data(), d.Ci, d.kf, d.kt, false, d.g, gxi, d.F, d.Tt, T(-1));
        detail::conv_gather_plane(gi, d.Co, d.Fo, d.To, wv.re.data(), d.Ci, d.kf, d.kt, false, d.g, gxi, d.F, d.Tt, T(1));
      }
      if (t.needs(w)) {
        ComplexTensor<T>& gw = t.grad_mut(w);
        const T* xr = xv.re.data() + xoff;
        const T* xi = xv.im.data() + xoff;
        detail::conv_dw_plane(xr, d.Ci, d.F, d.Tt, gr, d.Co, d.Fo, d.To, false, d.g, gw.re.data(), d.kf, d.kt, T(1));
        detail::conv_dw_plane(xi, d.Ci, d.F, d.Tt, gi, d.Co, d.Fo, d.To, false, d.g, gw.re.data(), d.kf, d.kt, T(1));
        detail::conv_dw_plane(xi, d.Ci, d.F, d.Tt, gr, d.Co, d.Fo, d.To, false, d.g, gw.im.data(), d.kf, d.kt, T(-1));
        detail::conv_dw_plane(xr, d.Ci, d.F, d.Tt, gi, d.Co, d.Fo, d.To, false, d.g, gw.im.data(), d.kf, d.kt, T(1));
      }
    }
    if (b.valid() && t.needs(b)) {
      detail::bias_grad(gy, t.grad_mut(b), d.B, d.Co, d.Fo * d.To);
    }
  };
  if (b.valid()) return tape.op(std::move(out), {x, w, b}, bw);
  return tape.op(std::move(out), {x, w}, bw);
}

// Complex 1-D convolution over [B,Ci,L] or [Ci,L]; weight [Co,Ci,k]. Routed
// through the 2-D kernels with a unit frequency axis.
template <typename T>
Var c_conv1d(Tape<T>& tape, Var x, Var w, Var b, int stride, int padding) {
  const ComplexTensor<T>& xv = tape.val(x);
  const ComplexTensor<T>& wv = tape.val(w);
  if (xv.ndim() != 2 && xv.ndim() != 3) {
    throw std::invalid_argument("c_conv1d: input must be [Ci,L] or [B,Ci,L], got " + shape_str(xv.shape));
  }
  if (wv.ndim() != 3) {
    throw std::invalid_argument("c_conv1d: weight must be [Co,Ci,k], got " + shape_str(wv.shape));
  }
  const bool batched = xv.ndim() == 3;
  const int64_t B = batched ? xv.dim(0) : 1;
  const int64_t Ci = xv.dim(batched ? 1 : 0);
  const int64_t L = xv.dim(batched ? 2 : 1);
  Shape x4 = batched ? Shape{B, Ci, 1, L} : Shape{Ci, 1, L};
  Shape w4{wv.dim(0), wv.dim(1), 1, wv.dim(2)};
  Var xr = reshape(tape, x, x4);
  Var wr = reshape(tape, w, w4);
  Conv2dGeom g;
  g.stride_t = stride;
  g.pad_t = padding;
  Var y4 = c_conv2d(tape, xr, wr, b, g);
  const ComplexTensor<T>& yv = tape.val(y4);
  Shape ys = batched ? Shape{yv.dim(0), yv.dim(1), yv.dim(3)} : Shape{yv.dim(0), yv.dim(2)};
  return reshape(tape, y4, ys);
}

}  // namespace wali
