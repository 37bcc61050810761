// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Complex multi-resolution STFT loss. Real and imaginary planes of each
// spectrogram are scored separately with a spectral-convergence term and a
// log-magnitude term; per-plane sums are averaged over the resolutions and
// the two plane losses are added. The loss consumes waveforms, so every
// resolution is an honest re-analysis of the signal under comparison.

#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "wali/dsp.hpp"
#include "wali/ops.hpp"
#include "wali/tape.hpp"
#include "wali/tensor.hpp"

namespace wali {

template <typename T>
struct MultiResConfig {
  std::vector<StftConfig> resolutions = {
      StftConfig{256, 128, 256},
      StftConfig{512, 256, 512},
      StftConfig{1024, 512, 1024},
  };
  T eps = T(1e-8);
};

// ‖X − X̂‖_F / (‖X‖_F + eps) on one signed plane (payload in the re plane).
template <typename T>
Var spectral_convergence(Tape<T>& tape, Var x_plane, Var xhat_plane, T eps) {
  if (tape.val(x_plane).shape != tape.val(xhat_plane).shape) {
    throw std::invalid_argument("spectral_convergence: plane shapes differ");
  }
  Var diff = c_sub(tape, x_plane, xhat_plane);
  Var num = sqrt_real(tape, sum_sq(tape, diff));
  Var den = add_const(tape, sqrt_real(tape, sum_sq(tape, x_plane)), eps);
  return div_real(tape, num, den);
}

// mean |log(|X|+eps) − log(|X̂|+eps)| over all bins of one signed plane. The
// absolute value precedes the log because the planes carry signed values.
template <typename T>
Var log_magnitude_loss(Tape<T>& tape, Var x_plane, Var xhat_plane, T eps) {
  if (tape.val(x_plane).shape != tape.val(xhat_plane).shape) {
    throw std::invalid_argument("log_magnitude_loss: plane shapes differ");
  }
  Var lx = log_real(tape, add_const(tape, abs_real(tape, x_plane), eps));
  Var lh = log_real(tape, add_const(tape, abs_real(tape, xhat_plane), eps));
  return mean_all(tape, abs_real(tape, c_sub(tape, lx, lh)));
}

// L_r + L_i where L_p = (1/S) Σ_s (L_SC + L_mag) on plane p of resolution s.
// x and xhat are 1-d waveforms of equal length (payload in the re plane).
template <typename T>
Var complex_multires_stft_loss(Tape<T>& tape, Var x, Var xhat,
                               const MultiResConfig<T>& cfg) {
  if (cfg.resolutions.empty()) {
    throw std::invalid_argument("complex_multires_stft_loss: no resolutions");
  }
  const ComplexTensor<T>& xv = tape.val(x);
  const ComplexTensor<T>& hv = tape.val(xhat);
  if (xv.ndim() != 1 || hv.ndim() != 1) {
    throw std::invalid_argument("complex_multires_stft_loss: waveforms must be 1-d");
  }
  const int64_t n = xv.dim(0);
  if (hv.dim(0) != n) {
    throw std::invalid_argument("complex_multires_stft_loss: length mismatch (" +
                                std::to_string(n) + " vs " + std::to_string(hv.dim(0)) + ")");
  }
  int64_t largest = 0;
  for (const StftConfig& c : cfg.resolutions) {
    validate_stft(c, "complex_multires_stft_loss");
    largest = std::max(largest, int64_t(c.win_length));
  }
  if (n < largest) {
    throw std::invalid_argument("complex_multires_stft_loss: waveform of " + std::to_string(n) +
                                " samples is shorter than the largest window (" +
                                std::to_string(largest) + ")");
  }

  const T inv_s = T(1) / T(cfg.resolutions.size());
  Var acc_r{-1};
  Var acc_i{-1};
  for (const StftConfig& c : cfg.resolutions) {
    Var sx = stft_op(tape, x, c);
    Var sh = stft_op(tape, xhat, c);
    Var xr = real_part(tape, sx);
    Var xi = imag_part(tape, sx);
    Var hr = real_part(tape, sh);
    Var hi = imag_part(tape, sh);
    Var lr = c_add(tape, spectral_convergence(tape, xr, hr, cfg.eps),
                   log_magnitude_loss(tape, xr, hr, cfg.eps));
    Var li = c_add(tape, spectral_convergence(tape, xi, hi, cfg.eps),
                   log_magnitude_loss(tape, xi, hi, cfg.eps));
    acc_r = acc_r.idx < 0 ? lr : c_add(tape, acc_r, lr);
    acc_i = acc_i.idx < 0 ? li : c_add(tape, acc_i, li);
  }
  return c_add(tape, scale(tape, acc_r, inv_s), scale(tape, acc_i, inv_s));
}

}  // namespace wali
