// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Short-time Fourier analysis/synthesis. Framing is centered: the signal is
// reflection-padded by n_fft/2 on both sides (no edge repeat), so a signal of
// N samples yields 1 + floor(N / hop) frames. Synthesis divides the
// overlap-add by the pointwise window-square sum, which inverts analysis
// exactly wherever that sum is positive.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "wali/fft.hpp"
#include "wali/ops.hpp"
#include "wali/tape.hpp"
#include "wali/tensor.hpp"

namespace wali {

struct StftConfig {
  int n_fft = 512;
  int hop = 128;
  int win_length = 512;

  int64_t bins() const { return int64_t(n_fft) / 2 + 1; }
  int64_t pad() const { return int64_t(n_fft) / 2; }
};

inline void validate_stft(const StftConfig& c, const char* who) {
  if (!is_pow2(c.n_fft)) {
    throw std::invalid_argument(std::string(who) + ": n_fft must be a power of two, got " +
                                std::to_string(c.n_fft));
  }
  if (c.win_length < 2 || c.win_length > c.n_fft) {
    throw std::invalid_argument(std::string(who) + ": win_length must lie in [2, n_fft]");
  }
  if (c.hop < 1 || c.hop > c.win_length) {
    throw std::invalid_argument(std::string(who) + ": hop must lie in [1, win_length]");
  }
}

// Square root of the periodic Hann window: w[n] = sqrt(0.5 - 0.5 cos(2 pi n / win)).
template <typename T>
std::vector<T> sqrt_hann_periodic(int win) {
  std::vector<T> w(static_cast<size_t>(win), T(0));
  for (int n = 0; n < win; ++n) {
    const double h = 0.5 - 0.5 * std::cos(2.0 * M_PI * double(n) / double(win));
    w[size_t(n)] = T(std::sqrt(h < 0 ? 0 : h));
  }
  return w;
}

// Full analysis window of length n_fft: sqrt-Hann of win_length, zero-padded
// centered when win_length < n_fft.
template <typename T>
std::vector<T> stft_window(const StftConfig& c) {
  validate_stft(c, "stft_window");
  std::vector<T> w(size_t(c.n_fft), T(0));
  auto h = sqrt_hann_periodic<T>(c.win_length);
  const int off = (c.n_fft - c.win_length) / 2;
  for (int n = 0; n < c.win_length; ++n) w[size_t(off + n)] = h[size_t(n)];
  return w;
}

inline int64_t stft_frame_count(int64_t n_samples, const StftConfig& c) {
  if (n_samples < c.pad() + 1) {
    throw std::invalid_argument("stft: signal of " + std::to_string(n_samples) +
                                " samples is too short for centered framing (need > n_fft/2)");
  }
  return 1 + n_samples / c.hop;
}

namespace detail {

// Reflection padding without edge repeat: [d c b | a b c d e | d c b] for P=3.
template <typename T>
std::vector<T> reflect_pad(const T* x, int64_t n, int64_t p) {
  if (p > n - 1) throw std::invalid_argument("reflect_pad: pad exceeds signal length - 1");
  std::vector<T> out(size_t(n + 2 * p));
  for (int64_t j = 0; j < p; ++j) out[size_t(j)] = x[p - j];
  for (int64_t j = 0; j < n; ++j) out[size_t(p + j)] = x[j];
  for (int64_t j = 0; j < p; ++j) out[size_t(p + n + j)] = x[n - 2 - j];
  return out;
}

// Adjoint of reflect_pad: scatter-add padded-domain values back onto the
// source indices they were copied from.
template <typename T>
void reflect_pad_adjoint(const std::vector<T>& gpad, int64_t n, int64_t p, T* gx) {
  for (int64_t j = 0; j < p; ++j) gx[p - j] += gpad[size_t(j)];
  for (int64_t j = 0; j < n; ++j) gx[j] += gpad[size_t(p + j)];
  for (int64_t j = 0; j < p; ++j) gx[n - 2 - j] += gpad[size_t(p + n + j)];
}

// Overlap-add of the squared window over all frame positions.
template <typename T>
std::vector<T> window_square_ola(const std::vector<T>& w, int64_t frames, int hop, int64_t lpad) {
  std::vector<T> wss(size_t(lpad), T(0));
  for (int64_t m = 0; m < frames; ++m) {
    for (size_t n = 0; n < w.size(); ++n) wss[size_t(m * hop) + n] += w[n] * w[n];
  }
  return wss;
}

}  // namespace detail

// STFT of a real signal -> [n_fft/2 + 1, frames] complex.
template <typename T>
ComplexTensor<T> stft(const std::vector<T>& x, const StftConfig& c) {
  validate_stft(c, "stft");
  const int64_t n = int64_t(x.size());
  const int64_t p = c.pad();
  const int64_t frames = stft_frame_count(n, c);
  const auto w = stft_window<T>(c);
  const auto xp = detail::reflect_pad(x.data(), n, p);
  const int64_t nb = c.bins();
  ComplexTensor<T> out(Shape{nb, frames});
  std::vector<T> fr(size_t(c.n_fft)), br, bi;
  for (int64_t m = 0; m < frames; ++m) {
    for (int i = 0; i < c.n_fft; ++i) fr[size_t(i)] = w[size_t(i)] * xp[size_t(m * c.hop + i)];
    rfft(fr, br, bi);
    for (int64_t k = 0; k < nb; ++k) {
      out.re[size_t(k * frames + m)] = br[size_t(k)];
      out.im[size_t(k * frames + m)] = bi[size_t(k)];
    }
  }
  return out;
}

// Inverse STFT back to `length` samples. Exact inverse of stft() for any
// window wherever the window-square overlap sum is positive.
template <typename T>
std::vector<T> istft(const ComplexTensor<T>& x, const StftConfig& c, int64_t length) {
  validate_stft(c, "istft");
  require_ndim(x, 2, "istft");
  if (x.dim(0) != c.bins()) {
    throw std::invalid_argument("istft: expected " + std::to_string(c.bins()) + " bins, got " +
                                std::to_string(x.dim(0)));
  }
  const int64_t frames = x.dim(1);
  const int64_t p = c.pad();
  const int64_t lpad = (frames - 1) * c.hop + c.n_fft;
  if (length < 1 || p + length > lpad) {
    throw std::invalid_argument("istft: length " + std::to_string(length) +
                                " not covered by " + std::to_string(frames) + " frames");
  }
  const auto w = stft_window<T>(c);
  const auto wss = detail::window_square_ola(w, frames, c.hop, lpad);
  std::vector<T> ola(size_t(lpad), T(0));
  const int64_t nb = c.bins();
  std::vector<T> br(static_cast<size_t>(nb), T(0)), bi(static_cast<size_t>(nb), T(0)), f;
  for (int64_t m = 0; m < frames; ++m) {
    for (int64_t k = 0; k < nb; ++k) {
      br[size_t(k)] = x.re[size_t(k * frames + m)];
      bi[size_t(k)] = x.im[size_t(k * frames + m)];
    }
    irfft(br, bi, size_t(c.n_fft), f);
    for (int i = 0; i < c.n_fft; ++i) ola[size_t(m * c.hop + i)] += w[size_t(i)] * f[size_t(i)];
  }
  std::vector<T> out(static_cast<size_t>(length), T(0));
  for (int64_t i = 0; i < length; ++i) {
    const T d = wss[size_t(p + i)];
    if (!(d > T(1e-8))) {
      throw std::invalid_argument("istft: window overlap vanishes at sample " + std::to_string(i));
    }
    out[size_t(i)] = ola[size_t(p + i)] / d;
  }
  return out;
}

// log(|S| + eps), elementwise, into the real plane.
template <typename T>
ComplexTensor<T> log_magnitude(const ComplexTensor<T>& s, T eps = T(1e-9)) {
  ComplexTensor<T> out(s.shape);
  for (size_t i = 0; i < s.re.size(); ++i) {
    out.re[i] = std::log(std::hypot(s.re[i], s.im[i]) + eps);
  }
  return out;
}

// atan2(imag, real) in (-pi, pi], elementwise, into the real plane.
template <typename T>
ComplexTensor<T> phase(const ComplexTensor<T>& s) {
  ComplexTensor<T> out(s.shape);
  for (size_t i = 0; i < s.re.size(); ++i) out.re[i] = std::atan2(s.im[i], s.re[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable versions. Waveforms live in the real plane of a 1-d tensor;
// the imaginary plane is ignored on input and carries no gradient.
// ---------------------------------------------------------------------------

// [N] real -> [n_fft/2+1, frames] complex.
template <typename T>
Var stft_op(Tape<T>& tape, Var x, const StftConfig& c) {
  const ComplexTensor<T>& xv = tape.val(x);
  require_ndim(xv, 1, "stft_op");
  const int64_t n = xv.dim(0);
  ComplexTensor<T> out = stft(xv.re, c);
  const int64_t frames = out.dim(1);
  auto bw = [x, c, n, frames](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    const int64_t p = c.pad();
    const int64_t nb = c.bins();
    const auto w = stft_window<T>(c);
    std::vector<T> gpad(size_t(n + 2 * p), T(0));
    std::vector<T> hr(size_t(c.n_fft)), hi(size_t(c.n_fft));
    for (int64_t m = 0; m < frames; ++m) {
      // dL/d frame = Re( unnormalized inverse DFT of the half-spectrum
      // cotangent, upper bins zero )
      std::fill(hr.begin(), hr.end(), T(0));
      std::fill(hi.begin(), hi.end(), T(0));
      for (int64_t k = 0; k < nb; ++k) {
        hr[size_t(k)] = g.re[size_t(k * frames + m)];
        hi[size_t(k)] = g.im[size_t(k * frames + m)];
      }
      fft_radix2(hr, hi, /*inverse=*/true);
      for (int i = 0; i < c.n_fft; ++i) {
        gpad[size_t(m * c.hop + i)] += w[size_t(i)] * hr[size_t(i)];
      }
    }
    detail::reflect_pad_adjoint(gpad, n, p, t.grad_mut(x).re.data());
  };
  return tape.op(std::move(out), {x}, bw);
}

// [n_fft/2+1, frames] complex -> [length] real.
template <typename T>
Var istft_op(Tape<T>& tape, Var x, const StftConfig& c, int64_t length) {
  const ComplexTensor<T>& xv = tape.val(x);
  std::vector<T> y = istft(xv, c, length);
  const int64_t frames = xv.dim(1);
  ComplexTensor<T> out(Shape{length});
  out.re = std::move(y);
  auto bw = [x, c, length, frames](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& g = t.grad(Var{self});
    ComplexTensor<T>& gx = t.grad_mut(x);
    const int64_t p = c.pad();
    const int64_t nb = c.bins();
    const int64_t lpad = (frames - 1) * c.hop + c.n_fft;
    const auto w = stft_window<T>(c);
    const auto wss = detail::window_square_ola(w, frames, c.hop, lpad);
    std::vector<T> gola(size_t(lpad), T(0));
    for (int64_t i = 0; i < length; ++i) gola[size_t(p + i)] = g.re[size_t(i)] / wss[size_t(p + i)];
    std::vector<T> fbar(size_t(c.n_fft)), br, bi;
    const T inv_n = T(1.0 / double(c.n_fft));
    for (int64_t m = 0; m < frames; ++m) {
      for (int i = 0; i < c.n_fft; ++i) {
        fbar[size_t(i)] = w[size_t(i)] * gola[size_t(m * c.hop + i)];
      }
      rfft(fbar, br, bi);
      for (int64_t k = 0; k < nb; ++k) {
        // bins 0 and n/2 enter the synthesis once, interior bins twice (their
        // Hermitian mirror); the imaginary parts of 0 and n/2 never enter.
        const bool edge = (k == 0 || k == nb - 1);
        const T ck = edge ? T(1) : T(2);
        gx.re[size_t(k * frames + m)] += ck * inv_n * br[size_t(k)];
        if (!edge) gx.im[size_t(k * frames + m)] += ck * inv_n * bi[size_t(k)];
      }
    }
  };
  return tape.op(std::move(out), {x}, bw);
}

}  // namespace wali
