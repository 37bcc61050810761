// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Activation, normalization, linear map, and the encoder / decoder / skip
// building blocks.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wali/conv.hpp"
#include "wali/ops.hpp"
#include "wali/rng.hpp"
#include "wali/tape.hpp"
#include "wali/tensor.hpp"

namespace wali {

// Plane-wise ReLU: max(0, r) + j max(0, i). Subgradient 0 at the kink.
template <typename T>
Var crelu(Tape<T>& tape, Var x) {
  const ComplexTensor<T>& xv = tape.val(x);
  ComplexTensor<T> out(xv.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    out.re[size_t(i)] = xv.re[size_t(i)] > T(0) ? xv.re[size_t(i)] : T(0);
    out.im[size_t(i)] = xv.im[size_t(i)] > T(0) ? xv.im[size_t(i)] : T(0);
  }
  return tape.op(std::move(out), {x}, [x](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    const ComplexTensor<T>& xv = t.val(x);
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) {
      if (xv.re[size_t(i)] > T(0)) gx.re[size_t(i)] += g.re[size_t(i)];
      if (xv.im[size_t(i)] > T(0)) gx.im[size_t(i)] += g.im[size_t(i)];
    }
  });
}

// Plane-wise uniform init with complex variance 1/fan_in per weight:
// each plane ~ U(-b, b), b = sqrt(3 / (2 fan_in)).
template <typename T>
void init_complex_uniform(ComplexTensor<T>& w, int64_t fan_in, std::mt19937_64& g) {
  const double b = std::sqrt(3.0 / (2.0 * double(fan_in)));
  for (size_t i = 0; i < w.re.size(); ++i) {
    w.re[i] = T(uniform(g, -b, b));
    w.im[i] = T(uniform(g, -b, b));
  }
}

// x [..., d_in] times W [d_in, d_out] plus optional bias [d_out].
template <typename T>
Var complex_linear(Tape<T>& tape, Var x, Var w, Var b) {
  const ComplexTensor<T>& xv = tape.val(x);
  const ComplexTensor<T>& wv = tape.val(w);
  require_ndim(wv, 2, "complex_linear weight");
  if (xv.ndim() < 1 || xv.dim(xv.ndim() - 1) != wv.dim(0)) {
    throw std::invalid_argument("complex_linear: trailing extent of " + shape_str(xv.shape) +
                                " does not match weight " + shape_str(wv.shape));
  }
  const int64_t d_in = wv.dim(0), d_out = wv.dim(1);
  const int64_t rows = xv.numel() / d_in;
  const bool already_flat = xv.ndim() == 2;
  Shape out_shape = xv.shape;  // copied before reshape/matmul grow the node store
  out_shape.back() = d_out;
  Var flat = already_flat ? x : reshape(tape, x, Shape{rows, d_in});
  Var y = c_matmul(tape, flat, w);
  if (b.valid()) y = c_add(tape, y, b);
  return already_flat ? y : reshape(tape, y, out_shape);
}

namespace detail {

// Closed-form inverse square root of the 2x2 symmetric positive-definite
// matrix [[vrr, vri], [vri, vii]]:
//   s = sqrt(det), tau = sqrt(trace + 2s)
//   V^{-1/2} = [[vii + s, -vri], [-vri, vrr + s]] / (s tau)
struct CbnW {
  double w00, w01, w11;
  double s, tau;
};

inline CbnW cbn_inv_sqrt(double vrr, double vii, double vri) {
  CbnW w;
  const double det = vrr * vii - vri * vri;
  w.s = std::sqrt(det);
  w.tau = std::sqrt(vrr + vii + 2.0 * w.s);
  const double denom = w.s * w.tau;
  w.w00 = (vii + w.s) / denom;
  w.w01 = -vri / denom;
  w.w11 = (vrr + w.s) / denom;
  return w;
}

// Partial derivatives of (w00, w01, w11) with respect to (vrr, vii, vri),
// by quotient rule through s and tau.
struct CbnWGrad {
  double d00[3], d01[3], d11[3];  // index order: vrr, vii, vri
};

inline CbnWGrad cbn_inv_sqrt_grad(double vrr, double vii, double vri, const CbnW& w) {
  const double s = w.s, tau = w.tau;
  const double denom = s * tau;
  const double denom2 = denom * denom;
  const double ds[3] = {vii / (2.0 * s), vrr / (2.0 * s), -vri / s};
  double dtau[3], dden[3];
  for (int k = 0; k < 3; ++k) {
    const double dtrace = k < 2 ? 1.0 : 0.0;
    dtau[k] = (dtrace + 2.0 * ds[k]) / (2.0 * tau);
    dden[k] = tau * ds[k] + s * dtau[k];
  }
  CbnWGrad g;
  for (int k = 0; k < 3; ++k) {
    const double dnum00 = (k == 1 ? 1.0 : 0.0) + ds[k];  // d(vii + s)
    const double dnum11 = (k == 0 ? 1.0 : 0.0) + ds[k];  // d(vrr + s)
    const double dnum01 = (k == 2 ? -1.0 : 0.0);         // d(-vri)
    g.d00[k] = (dnum00 * denom - (vii + s) * dden[k]) / denom2;
    g.d11[k] = (dnum11 * denom - (vrr + s) * dden[k]) / denom2;
    g.d01[k] = (dnum01 * denom - (-vri) * dden[k]) / denom2;
  }
  return g;
}

}  // namespace detail

// Complex batch normalization. Per channel the complex mean is removed and
// the (r, i) pair is whitened by the inverse square root of the 2x2
// covariance (eps added to its diagonal). Gradients flow through the batch
// statistics. Train mode updates running statistics (raw, eps-free) with the
// configured momentum; eval mode whitens with the running statistics.
// Optional affine: out = Gamma * out + beta with Gamma 2x2 symmetric per
// channel (off by default).
template <typename T>
class CbnModule {
 public:
  CbnModule() = default;
  CbnModule(std::string name, int64_t channels, bool affine = false, T momentum = T(0.1),
            T eps = T(1e-5))
      : name_(std::move(name)),
        channels_(channels),
        affine_(affine),
        momentum_(momentum),
        eps_(eps),
        running_mean_(Shape{channels}),
        running_cov_(Shape{channels, 3}) {
    for (int64_t c = 0; c < channels; ++c) {
      running_cov_.re[size_t(c * 3 + 0)] = T(0.5);  // vrr
      running_cov_.re[size_t(c * 3 + 1)] = T(0.5);  // vii
      running_cov_.re[size_t(c * 3 + 2)] = T(0);    // vri
    }
    if (affine_) {
      gamma_ = Parameter<T>(name_ + ".gamma", ComplexTensor<T>(Shape{channels, 3}));
      const T d = T(1.0 / std::sqrt(2.0));
      for (int64_t c = 0; c < channels; ++c) {
        gamma_.value.re[size_t(c * 3 + 0)] = d;  // grr
        gamma_.value.re[size_t(c * 3 + 1)] = d;  // gii
        gamma_.value.re[size_t(c * 3 + 2)] = T(0);  // gri
      }
      beta_ = Parameter<T>(name_ + ".beta", ComplexTensor<T>(Shape{channels}));
    }
  }

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }
  int64_t channels() const { return channels_; }
  bool affine() const { return affine_; }
  const std::string& name() const { return name_; }

  ComplexTensor<T>& running_mean() { return running_mean_; }
  ComplexTensor<T>& running_cov() { return running_cov_; }

  std::vector<Parameter<T>*> params() {
    if (!affine_) return {};
    return {&gamma_, &beta_};
  }

  // [B, C, F, T]
  Var forward(Tape<T>& tape, Var x) {
    const ComplexTensor<T>& xv = tape.val(x);
    require_ndim(xv, 4, "cbn_forward");
    if (xv.dim(1) != channels_) {
      throw std::invalid_argument("cbn_forward: expected " + std::to_string(channels_) +
                                  " channels, got " + shape_str(xv.shape));
    }
    return apply(tape, x, xv.dim(0), xv.dim(2) * xv.dim(3));
  }

  // [G, S, d]: the trailing feature axis is normalized as d channels with
  // population G*S.
  Var forward_seq(Tape<T>& tape, Var x) {
    const ComplexTensor<T>& xv = tape.val(x);
    require_ndim(xv, 3, "cbn_forward_seq");
    if (xv.dim(2) != channels_) {
      throw std::invalid_argument("cbn_forward_seq: expected trailing extent " +
                                  std::to_string(channels_) + ", got " + shape_str(xv.shape));
    }
    const int64_t G = xv.dim(0), S = xv.dim(1), d = xv.dim(2);
    Var p = permute(tape, x, {0, 2, 1});              // [G, d, S]
    Var r = reshape(tape, p, Shape{G, d, S, 1});      // [G, d, S, 1]
    Var y = apply(tape, r, G, S);
    Var back = reshape(tape, y, Shape{G, d, S});
    return permute(tape, back, {0, 2, 1});
  }

 private:
  // x is [B, C, inner] in memory; returns the normalized tensor.
  Var apply(Tape<T>& tape, Var x, int64_t B, int64_t inner) {
    const int64_t C = channels_;
    const int64_t N = B * inner;

    Var gv{}, bv{};
    if (affine_) {
      gv = tape.param(gamma_);
      bv = tape.param(beta_);
    }

    if (!training_) return apply_eval(tape, x, gv, bv, B, inner);
    // param() may have grown the node store; fetch the value only afterwards
    const ComplexTensor<T>& xv = tape.val(x);
    if (N < 2) {
      throw std::invalid_argument("cbn_forward: population per channel is " + std::to_string(N) +
                                  ", need >= 2 in train mode");
    }

    const size_t uC = size_t(C);
    std::vector<double> mur(uC, 0.0), mui(uC, 0.0);
    std::vector<double> vrr(uC, 0.0), vii(uC, 0.0), vri(uC, 0.0);
    std::vector<detail::CbnW> w(uC, detail::CbnW{});
    for (int64_t c = 0; c < C; ++c) {
      double sr = 0, si = 0;
      for (int64_t bn = 0; bn < B; ++bn) {
        const size_t base = size_t((bn * C + c) * inner);
        for (int64_t i = 0; i < inner; ++i) {
          sr += double(xv.re[base + size_t(i)]);
          si += double(xv.im[base + size_t(i)]);
        }
      }
      mur[size_t(c)] = sr / double(N);
      mui[size_t(c)] = si / double(N);
      double arr = 0, aii = 0, ari = 0;
      for (int64_t bn = 0; bn < B; ++bn) {
        const size_t base = size_t((bn * C + c) * inner);
        for (int64_t i = 0; i < inner; ++i) {
          const double cr = double(xv.re[base + size_t(i)]) - mur[size_t(c)];
          const double ci = double(xv.im[base + size_t(i)]) - mui[size_t(c)];
          arr += cr * cr;
          aii += ci * ci;
          ari += cr * ci;
        }
      }
      const double vrr_raw = arr / double(N);
      const double vii_raw = aii / double(N);
      const double vri_raw = ari / double(N);
      if (!std::isfinite(mur[size_t(c)]) || !std::isfinite(mui[size_t(c)]) ||
          !std::isfinite(vrr_raw) || !std::isfinite(vii_raw) || !std::isfinite(vri_raw)) {
        throw std::runtime_error("cbn_forward: non-finite statistics in channel " + std::to_string(c));
      }
      vrr[size_t(c)] = vrr_raw + double(eps_);
      vii[size_t(c)] = vii_raw + double(eps_);
      vri[size_t(c)] = vri_raw;
      w[size_t(c)] = detail::cbn_inv_sqrt(vrr[size_t(c)], vii[size_t(c)], vri[size_t(c)]);

      const double m = double(momentum_);
      running_mean_.re[size_t(c)] = T((1 - m) * double(running_mean_.re[size_t(c)]) + m * mur[size_t(c)]);
      running_mean_.im[size_t(c)] = T((1 - m) * double(running_mean_.im[size_t(c)]) + m * mui[size_t(c)]);
      running_cov_.re[size_t(c * 3 + 0)] = T((1 - m) * double(running_cov_.re[size_t(c * 3 + 0)]) + m * vrr_raw);
      running_cov_.re[size_t(c * 3 + 1)] = T((1 - m) * double(running_cov_.re[size_t(c * 3 + 1)]) + m * vii_raw);
      running_cov_.re[size_t(c * 3 + 2)] = T((1 - m) * double(running_cov_.re[size_t(c * 3 + 2)]) + m * vri_raw);
    }

    ComplexTensor<T> out(xv.shape);
    for (int64_t c = 0; c < C; ++c) {
      const detail::CbnW& wc = w[size_t(c)];
      for (int64_t bn = 0; bn < B; ++bn) {
        const size_t base = size_t((bn * C + c) * inner);
        for (int64_t i = 0; i < inner; ++i) {
          const double cr = double(xv.re[base + size_t(i)]) - mur[size_t(c)];
          const double ci = double(xv.im[base + size_t(i)]) - mui[size_t(c)];
          out.re[base + size_t(i)] = T(wc.w00 * cr + wc.w01 * ci);
          out.im[base + size_t(i)] = T(wc.w01 * cr + wc.w11 * ci);
        }
      }
    }
    if (affine_) affine_forward(out, B, inner);

    const bool affine = affine_;
    auto bw = [x, gv, bv, B, C, inner, N, mur, mui, vrr, vii, vri, w, affine](Tape<T>& t,
                                                                             int32_t self) {
      const ComplexTensor<T>& gout = t.grad(Var{self});
      const ComplexTensor<T>& xv2 = t.val(x);
      const bool nx = t.needs(x);
      const bool ng = affine && t.needs(gv);
      const size_t uN = size_t(N);
      std::vector<double> gor(uN, 0.0), goi(uN, 0.0);
      for (int64_t c = 0; c < C; ++c) {
        const detail::CbnW& wc = w[size_t(c)];
        // effective cotangent on the whitened value (affine folded away)
        double dgrr = 0, dgii = 0, dgri = 0, dbr = 0, dbi = 0;
        for (int64_t bn = 0; bn < B; ++bn) {
          const size_t base = size_t((bn * C + c) * inner);
          for (int64_t i = 0; i < inner; ++i) {
            const size_t k = size_t(bn * inner + i);
            const double gr = double(gout.re[base + size_t(i)]);
            const double gi = double(gout.im[base + size_t(i)]);
            if (affine) {
              const double grr = double(t.val(gv).re[size_t(c * 3 + 0)]);
              const double gii = double(t.val(gv).re[size_t(c * 3 + 1)]);
              const double gri = double(t.val(gv).re[size_t(c * 3 + 2)]);
              gor[k] = grr * gr + gri * gi;
              goi[k] = gri * gr + gii * gi;
              if (ng) {
                const double cr = double(xv2.re[base + size_t(i)]) - mur[size_t(c)];
                const double ci = double(xv2.im[base + size_t(i)]) - mui[size_t(c)];
                const double orr = wc.w00 * cr + wc.w01 * ci;
                const double oii = wc.w01 * cr + wc.w11 * ci;
                dgrr += gr * orr;
                dgii += gi * oii;
                dgri += gr * oii + gi * orr;
                dbr += gr;
                dbi += gi;
              }
            } else {
              gor[k] = gr;
              goi[k] = gi;
            }
          }
        }
        if (ng) {
          ComplexTensor<T>& gg = t.grad_mut(gv);
          gg.re[size_t(c * 3 + 0)] += T(dgrr);
          gg.re[size_t(c * 3 + 1)] += T(dgii);
          gg.re[size_t(c * 3 + 2)] += T(dgri);
          if (t.needs(bv)) {
            ComplexTensor<T>& gb = t.grad_mut(bv);
            gb.re[size_t(c)] += T(dbr);
            gb.im[size_t(c)] += T(dbi);
          }
        }
        if (!nx) continue;

        // product path gc = W^T go (W symmetric) and the W-entry cotangents
        double g00 = 0, g01 = 0, g10 = 0, g11 = 0;
        std::vector<double> gcr(uN, 0.0), gci(uN, 0.0);
        for (int64_t bn = 0; bn < B; ++bn) {
          const size_t base = size_t((bn * C + c) * inner);
          for (int64_t i = 0; i < inner; ++i) {
            const size_t k = size_t(bn * inner + i);
            const double cr = double(xv2.re[base + size_t(i)]) - mur[size_t(c)];
            const double ci = double(xv2.im[base + size_t(i)]) - mui[size_t(c)];
            gcr[k] = wc.w00 * gor[k] + wc.w01 * goi[k];
            gci[k] = wc.w01 * gor[k] + wc.w11 * goi[k];
            g00 += gor[k] * cr;
            g01 += gor[k] * ci;
            g10 += goi[k] * cr;
            g11 += goi[k] * ci;
          }
        }
        // covariance cotangents via the closed-form partials
        const auto wg = detail::cbn_inv_sqrt_grad(vrr[size_t(c)], vii[size_t(c)], vri[size_t(c)], wc);
        const double gw00 = g00, gw11 = g11, gw01 = g01 + g10;
        const double dvrr = gw00 * wg.d00[0] + gw01 * wg.d01[0] + gw11 * wg.d11[0];
        const double dvii = gw00 * wg.d00[1] + gw01 * wg.d01[1] + gw11 * wg.d11[1];
        const double dvri = gw00 * wg.d00[2] + gw01 * wg.d01[2] + gw11 * wg.d11[2];
        // stats path into gc, then centering
        double mr = 0, mi = 0;
        for (int64_t bn = 0; bn < B; ++bn) {
          const size_t base = size_t((bn * C + c) * inner);
          for (int64_t i = 0; i < inner; ++i) {
            const size_t k = size_t(bn * inner + i);
            const double cr = double(xv2.re[base + size_t(i)]) - mur[size_t(c)];
            const double ci = double(xv2.im[base + size_t(i)]) - mui[size_t(c)];
            gcr[k] += dvrr * 2.0 * cr / double(N) + dvri * ci / double(N);
            gci[k] += dvii * 2.0 * ci / double(N) + dvri * cr / double(N);
            mr += gcr[k];
            mi += gci[k];
          }
        }
        mr /= double(N);
        mi /= double(N);
        ComplexTensor<T>& gx = t.grad_mut(x);
        for (int64_t bn = 0; bn < B; ++bn) {
          const size_t base = size_t((bn * C + c) * inner);
          for (int64_t i = 0; i < inner; ++i) {
            const size_t k = size_t(bn * inner + i);
            gx.re[base + size_t(i)] += T(gcr[k] - mr);
            gx.im[base + size_t(i)] += T(gci[k] - mi);
          }
        }
      }
    };
    if (affine_) return tape.op(std::move(out), {x, gv, bv}, bw);
    return tape.op(std::move(out), {x}, bw);
  }

  Var apply_eval(Tape<T>& tape, Var x, Var gv, Var bv, int64_t B, int64_t inner) {
    const ComplexTensor<T>& xv = tape.val(x);
    const int64_t C = channels_;
    const size_t uC = size_t(C);
    std::vector<double> mur(uC, 0.0), mui(uC, 0.0);
    std::vector<detail::CbnW> w(uC, detail::CbnW{});
    for (int64_t c = 0; c < C; ++c) {
      mur[size_t(c)] = double(running_mean_.re[size_t(c)]);
      mui[size_t(c)] = double(running_mean_.im[size_t(c)]);
      w[size_t(c)] = detail::cbn_inv_sqrt(double(running_cov_.re[size_t(c * 3 + 0)]) + double(eps_),
                                          double(running_cov_.re[size_t(c * 3 + 1)]) + double(eps_),
                                          double(running_cov_.re[size_t(c * 3 + 2)]));
    }
    ComplexTensor<T> out(xv.shape);
    for (int64_t c = 0; c < C; ++c) {
      const detail::CbnW& wc = w[size_t(c)];
      for (int64_t bn = 0; bn < B; ++bn) {
        const size_t base = size_t((bn * C + c) * inner);
        for (int64_t i = 0; i < inner; ++i) {
          const double cr = double(xv.re[base + size_t(i)]) - mur[size_t(c)];
          const double ci = double(xv.im[base + size_t(i)]) - mui[size_t(c)];
          out.re[base + size_t(i)] = T(wc.w00 * cr + wc.w01 * ci);
          out.im[base + size_t(i)] = T(wc.w01 * cr + wc.w11 * ci);
        }
      }
    }
    if (affine_) affine_forward(out, B, inner);
    const bool affine = affine_;
    auto bw = [x, gv, bv, B, C, inner, mur, mui, w, affine](Tape<T>& t, int32_t self) {
      const ComplexTensor<T>& gout = t.grad(Var{self});
      const ComplexTensor<T>& xv2 = t.val(x);
      const bool nx = t.needs(x);
      const bool ng = affine && t.needs(gv);
      for (int64_t c = 0; c < C; ++c) {
        const detail::CbnW& wc = w[size_t(c)];
        double dgrr = 0, dgii = 0, dgri = 0, dbr = 0, dbi = 0;
        for (int64_t bn = 0; bn < B; ++bn) {
          const size_t base = size_t((bn * C + c) * inner);
          for (int64_t i = 0; i < inner; ++i) {
            const double gr = double(gout.re[base + size_t(i)]);
            const double gi = double(gout.im[base + size_t(i)]);
            double gor = gr, goi = gi;
            if (affine) {
              const double grr = double(t.val(gv).re[size_t(c * 3 + 0)]);
              const double gii = double(t.val(gv).re[size_t(c * 3 + 1)]);
              const double gri = double(t.val(gv).re[size_t(c * 3 + 2)]);
              gor = grr * gr + gri * gi;
              goi = gri * gr + gii * gi;
              if (ng) {
                const double cr = double(xv2.re[base + size_t(i)]) - mur[size_t(c)];
                const double ci = double(xv2.im[base + size_t(i)]) - mui[size_t(c)];
                const double orr = wc.w00 * cr + wc.w01 * ci;
                const double oii = wc.w01 * cr + wc.w11 * ci;
                dgrr += gr * orr;
                dgii += gi * oii;
                dgri += gr * oii + gi * orr;
                dbr += gr;
                dbi += gi;
              }
            }
            if (nx) {
              ComplexTensor<T>& gx = t.grad_mut(x);
              gx.re[base + size_t(i)] += T(wc.w00 * gor + wc.w01 * goi);
              gx.im[base + size_t(i)] += T(wc.w01 * gor + wc.w11 * goi);
            }
          }
        }
        if (ng) {
          ComplexTensor<T>& gg = t.grad_mut(gv);
          gg.re[size_t(c * 3 + 0)] += T(dgrr);
          gg.re[size_t(c * 3 + 1)] += T(dgii);
          gg.re[size_t(c * 3 + 2)] += T(dgri);
          if (t.needs(bv)) {
            ComplexTensor<T>& gb = t.grad_mut(bv);
            gb.re[size_t(c)] += T(dbr);
            gb.im[size_t(c)] += T(dbi);
          }
        }
      }
    };
    if (affine_) return tape.op(std::move(out), {x, gv, bv}, bw);
    return tape.op(std::move(out), {x}, bw);
  }

  // out = Gamma out + beta, in place on the freshly computed tensor.
  void affine_forward(ComplexTensor<T>& out, int64_t B, int64_t inner) const {
    const int64_t C = channels_;
    for (int64_t c = 0; c < C; ++c) {
      const T grr = gamma_.value.re[size_t(c * 3 + 0)];
      const T gii = gamma_.value.re[size_t(c * 3 + 1)];
      const T gri = gamma_.value.re[size_t(c * 3 + 2)];
      const T br = beta_.value.re[size_t(c)];
      const T bi = beta_.value.im[size_t(c)];
      for (int64_t bn = 0; bn < B; ++bn) {
        const size_t base = size_t((bn * C + c) * inner);
        for (int64_t i = 0; i < inner; ++i) {
          const T orr = out.re[base + size_t(i)];
          const T oii = out.im[base + size_t(i)];
          out.re[base + size_t(i)] = grr * orr + gri * oii + br;
          out.im[base + size_t(i)] = gri * orr + gii * oii + bi;
        }
      }
    }
  }

  std::string name_;
  int64_t channels_ = 0;
  bool affine_ = false;
  T momentum_ = T(0.1);
  T eps_ = T(1e-5);
  bool training_ = true;
  ComplexTensor<T> running_mean_;  // [C] complex
  ComplexTensor<T> running_cov_;   // [C, 3] real: vrr, vii, vri (raw, eps-free)
  Parameter<T> gamma_;  // [C, 3] real plane: grr, gii, gri
  Parameter<T> beta_;   // [C] complex
};

// conv (3x3, stride (2,1), pad (1,1)) -> CBN -> CReLU; halves F.
template <typename T>
struct EncoderBlock {
  Parameter<T> w, b;
  CbnModule<T> cbn;
  Conv2dGeom geom{2, 1, 1, 1, 0, 0};

  EncoderBlock(const std::string& name, int64_t cin, int64_t cout, std::mt19937_64& g,
               bool affine = false)
      : w(name + ".w", ComplexTensor<T>(Shape{cout, cin, 3, 3})),
        b(name + ".b", ComplexTensor<T>(Shape{cout})),
        cbn(name + ".cbn", cout, affine) {
    init_complex_uniform(w.value, cin * 9, g);
  }

  Var forward(Tape<T>& tape, Var x) {
    const ComplexTensor<T>& xv = tape.val(x);
    if (xv.ndim() != 4 || xv.dim(2) % 2 != 0) {
      throw std::invalid_argument("encoder_block: input must be [B,C,F,T] with even F, got " +
                                  shape_str(xv.shape));
    }
    Var y = c_conv2d(tape, x, tape.param(w), tape.param(b), geom);
    return crelu(tape, cbn.forward(tape, y));
  }

  std::vector<Parameter<T>*> params() {
    std::vector<Parameter<T>*> p{&w, &b};
    for (auto* q : cbn.params()) p.push_back(q);
    return p;
  }
};

// concat skip -> transposed conv (3x3, stride (2,1), pad (1,1), out pad
// (1,0)) -> CBN -> CReLU; doubles F.
template <typename T>
struct DecoderBlock {
  Parameter<T> w, b;
  CbnModule<T> cbn;
  Conv2dGeom geom{2, 1, 1, 1, 1, 0};

  DecoderBlock(const std::string& name, int64_t cin_total, int64_t cout, std::mt19937_64& g,
               bool affine = false)
      : w(name + ".w", ComplexTensor<T>(Shape{cout, cin_total, 3, 3})),
        b(name + ".b", ComplexTensor<T>(Shape{cout})),
        cbn(name + ".cbn", cout, affine) {
    init_complex_uniform(w.value, cin_total * 9, g);
  }

  Var forward(Tape<T>& tape, Var x, Var skip) {
    Var cat = concat_channels<T>(tape, {x, skip});
    Var y = c_conv_transpose2d(tape, cat, tape.param(w), tape.param(b), geom);
    return crelu(tape, cbn.forward(tape, y));
  }

  std::vector<Parameter<T>*> params() {
    std::vector<Parameter<T>*> p{&w, &b};
    for (auto* q : cbn.params()) p.push_back(q);
    return p;
  }
};

// shape-preserving conv (3x3, stride 1, pad 1) -> CBN -> CReLU.
template <typename T>
struct SkipBlock {
  Parameter<T> w, b;
  CbnModule<T> cbn;
  Conv2dGeom geom{1, 1, 1, 1, 0, 0};

  SkipBlock(const std::string& name, int64_t channels, std::mt19937_64& g, bool affine = false)
      : w(name + ".w", ComplexTensor<T>(Shape{channels, channels, 3, 3})),
        b(name + ".b", ComplexTensor<T>(Shape{channels})),
        cbn(name + ".cbn", channels, affine) {
    init_complex_uniform(w.value, channels * 9, g);
  }

  Var forward(Tape<T>& tape, Var x) {
    Var y = c_conv2d(tape, x, tape.param(w), tape.param(b), geom);
    return crelu(tape, cbn.forward(tape, y));
  }

  std::vector<Parameter<T>*> params() {
    std::vector<Parameter<T>*> p{&w, &b};
    for (auto* q : cbn.params()) p.push_back(q);
    return p;
  }
};

}  // namespace wali
