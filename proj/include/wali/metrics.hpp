// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Objective evaluation metrics: log-spectral distance, scale-invariant SDR,
// and short-time objective intelligibility. All three operate on equal-length
// mono waveforms.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "wali/dsp.hpp"
#include "wali/fft.hpp"
#include "wali/resample.hpp"

namespace wali {

// Mean over frames of the RMS-over-bins gap between log10 power spectra.
// Several published LSD variants exist; this log10-power form is frozen so
// numbers stay comparable across runs.
template <typename T>
T lsd(const std::vector<T>& ref, const std::vector<T>& est,
      const StftConfig& cfg = StftConfig{512, 128, 512}, T eps = T(1e-9)) {
  if (ref.size() != est.size()) {
    throw std::invalid_argument("lsd: length mismatch (" + std::to_string(ref.size()) + " vs " +
                                std::to_string(est.size()) + ")");
  }
  ComplexTensor<T> r = stft(ref, cfg);
  ComplexTensor<T> e = stft(est, cfg);
  const int64_t bins = r.dim(0);
  const int64_t frames = r.dim(1);
  T acc = T(0);
  for (int64_t m = 0; m < frames; ++m) {
    T frame = T(0);
    for (int64_t k = 0; k < bins; ++k) {
      const size_t i = size_t(k * frames + m);
      const T pr = r.re[i] * r.re[i] + r.im[i] * r.im[i];
      const T pe = e.re[i] * e.re[i] + e.im[i] * e.im[i];
      const T d = std::log10(pr + eps) - std::log10(pe + eps);
      frame += d * d;
    }
    acc += std::sqrt(frame / T(bins));
  }
  return acc / T(frames);
}

// Scale-invariant signal-to-distortion ratio in dB. The estimate is projected
// onto the reference; gain differences therefore do not count as distortion.
// A zero residual returns +infinity; an estimate with no reference component
// returns -infinity.
template <typename T>
T si_sdr(const std::vector<T>& ref, const std::vector<T>& est) {
  if (ref.size() != est.size()) {
    throw std::invalid_argument("si_sdr: length mismatch (" + std::to_string(ref.size()) +
                                " vs " + std::to_string(est.size()) + ")");
  }
  T rr = T(0), er = T(0);
  for (size_t i = 0; i < ref.size(); ++i) {
    rr += ref[i] * ref[i];
    er += est[i] * ref[i];
  }
  if (rr == T(0)) throw std::invalid_argument("si_sdr: silent reference");
  const T alpha = er / rr;
  const T sig = alpha * alpha * rr;
  T res = T(0);
  for (size_t i = 0; i < ref.size(); ++i) {
    const T d = alpha * ref[i] - est[i];
    res += d * d;
  }
  if (sig == T(0)) return -std::numeric_limits<T>::infinity();
  if (res == T(0)) return std::numeric_limits<T>::infinity();
  return T(10) * std::log10(sig / res);
}

namespace detail {

// MATLAB-style Hann window without the zero endpoints.
template <typename T>
std::vector<T> hanning_matlab(int n) {
  std::vector<T> w(size_t(n), T(0));
  for (int i = 0; i < n; ++i) {
    w[size_t(i)] = T(0.5 - 0.5 * std::cos(2.0 * M_PI * double(i + 1) / double(n + 1)));
  }
  return w;
}

// Drops frames more than 40 dB below the loudest frame of x and overlap-adds
// the survivors of both signals at consecutive positions.
template <typename T>
void remove_silent_frames(std::vector<T>& x, std::vector<T>& y, int n, int k, T dyn_range) {
  const std::vector<T> w = hanning_matlab<T>(n);
  const int64_t len = int64_t(x.size());
  if (len < n) {
    x.clear();
    y.clear();
    return;
  }
  const int64_t frames = (len - n) / k + 1;
  std::vector<T> db(size_t(frames), T(0));
  T top = -std::numeric_limits<T>::infinity();
  for (int64_t m = 0; m < frames; ++m) {
    T e = T(0);
    for (int i = 0; i < n; ++i) {
      const T v = x[size_t(m * k + i)] * w[size_t(i)];
      e += v * v;
    }
    db[size_t(m)] = T(20) * std::log10(std::sqrt(e) / std::sqrt(T(n)));
    top = std::max(top, db[size_t(m)]);
  }
  std::vector<int64_t> kept;
  for (int64_t m = 0; m < frames; ++m) {
    if (db[size_t(m)] - top + dyn_range > T(0)) kept.push_back(m);
  }
  if (kept.empty()) {
    x.clear();
    y.clear();
    return;
  }
  const int64_t out_len = int64_t(kept.size() - 1) * k + n;
  std::vector<T> xs(size_t(out_len), T(0)), ys(size_t(out_len), T(0));
  for (size_t j = 0; j < kept.size(); ++j) {
    const int64_t src = kept[j] * k;
    const int64_t dst = int64_t(j) * k;
    for (int i = 0; i < n; ++i) {
      xs[size_t(dst + i)] += x[size_t(src + i)] * w[size_t(i)];
      ys[size_t(dst + i)] += y[size_t(src + i)] * w[size_t(i)];
    }
  }
  x = std::move(xs);
  y = std::move(ys);
}

// One-third-octave band membership over the first n_fft/2+1 bins: band edges
// are snapped to the nearest FFT bin, bins in [lo, hi) belong to the band.
inline std::vector<std::pair<int, int>> third_octave_bands(double fs, int n_fft, int n_bands,
                                                           double first_cf) {
  const int half = n_fft / 2 + 1;
  auto nearest_bin = [&](double hz) {
    int best = 0;
    double err = std::numeric_limits<double>::infinity();
    for (int b = 0; b < half; ++b) {
      const double f = double(b) * fs / double(n_fft);
      const double d = (f - hz) * (f - hz);
      if (d < err) {
        err = d;
        best = b;
      }
    }
    return best;
  };
  std::vector<std::pair<int, int>> bands;
  for (int j = 0; j < n_bands; ++j) {
    const double cf = first_cf * std::pow(2.0, double(j) / 3.0);
    bands.emplace_back(nearest_bin(cf / std::pow(2.0, 1.0 / 6.0)),
                       nearest_bin(cf * std::pow(2.0, 1.0 / 6.0)));
  }
  return bands;
}

// Mean- and norm-removed correlation; degenerate band segments compare as 1
// only when they are identical.
template <typename T>
T clipped_corr(const std::vector<T>& a, const std::vector<T>& b) {
  const T n = T(a.size());
  T ma = std::accumulate(a.begin(), a.end(), T(0)) / n;
  T mb = std::accumulate(b.begin(), b.end(), T(0)) / n;
  T na = T(0), nb = T(0), dot = T(0);
  for (size_t i = 0; i < a.size(); ++i) {
    const T da = a[i] - ma, db = b[i] - mb;
    na += da * da;
    nb += db * db;
    dot += da * db;
  }
  if (na == T(0) || nb == T(0)) {
    for (size_t i = 0; i < a.size(); ++i) {
      if (a[i] != b[i]) return T(0);
    }
    return T(1);
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace detail

// Short-time objective intelligibility of est against ref, both sampled at
// fs. Follows the standard pipeline: resample to 10 kHz, drop frames 40 dB
// below the loudest, 15 one-third-octave band envelopes from 150 Hz off
// 512-point spectra of 256-sample frames, and clipped normalized correlation
// over 30-frame segments averaged across bands and segments. Rates above
// 10 kHz would need an anti-alias filter and are rejected.
template <typename T>
T stoi(const std::vector<T>& ref, const std::vector<T>& est, int fs) {
  if (ref.size() != est.size()) {
    throw std::invalid_argument("stoi: length mismatch (" + std::to_string(ref.size()) + " vs " +
                                std::to_string(est.size()) + ")");
  }
  if (fs <= 0 || fs > 10000) {
    throw std::invalid_argument("stoi: unsupported sample rate " + std::to_string(fs));
  }
  if (double(ref.size()) < 0.4 * double(fs)) {
    throw std::invalid_argument("stoi: need at least 0.4 s of signal");
  }

  constexpr int kRate = 10000;
  constexpr int kFrame = 256;
  constexpr int kHop = 128;
  constexpr int kFft = 512;
  constexpr int kBands = 15;
  constexpr int kSegment = 30;
  const T kDynRange = T(40);
  const T kClip = T(std::pow(10.0, 15.0 / 20.0));  // -15 dB lower SDR bound

  std::vector<T> x(ref), y(est);
  if (fs != kRate) {
    const int up = kRate / std::gcd(kRate, fs);
    if (up > 256) throw std::invalid_argument("stoi: unsupported sample rate " + std::to_string(fs));
    const int64_t mid = int64_t(fs) * up;
    x = sinc_upsample(x, fs, mid);
    y = sinc_upsample(y, fs, mid);
    if (mid != kRate) {
      x = decimate_alias(x, mid, kRate);
      y = decimate_alias(y, mid, kRate);
    }
  }

  detail::remove_silent_frames(x, y, kFrame, kHop, kDynRange);
  const int64_t len = int64_t(x.size());
  if (len < kFrame + (kSegment - 1) * kHop) {
    throw std::invalid_argument("stoi: too little active signal after silence removal");
  }
  const int64_t frames = (len - kFrame) / kHop + 1;

  const auto bands = detail::third_octave_bands(double(kRate), kFft, kBands, 150.0);
  const std::vector<T> w = detail::hanning_matlab<T>(kFrame);

  // [band, frame] envelopes of both signals
  std::vector<T> bx(size_t(kBands) * size_t(frames), T(0));
  std::vector<T> by(size_t(kBands) * size_t(frames), T(0));
  std::vector<T> re(size_t(kFft), T(0)), im(size_t(kFft), T(0));
  for (int64_t m = 0; m < frames; ++m) {
    for (int pass = 0; pass < 2; ++pass) {
      const std::vector<T>& src = pass == 0 ? x : y;
      std::vector<T>& dst = pass == 0 ? bx : by;
      std::fill(re.begin(), re.end(), T(0));
      std::fill(im.begin(), im.end(), T(0));
      for (int i = 0; i < kFrame; ++i) re[size_t(i)] = src[size_t(m * kHop + i)] * w[size_t(i)];
      fft_radix2(re, im, /*inverse=*/false);
      for (int j = 0; j < kBands; ++j) {
        T e = T(0);
        for (int b = bands[size_t(j)].first; b < bands[size_t(j)].second; ++b) {
          e += re[size_t(b)] * re[size_t(b)] + im[size_t(b)] * im[size_t(b)];
        }
        dst[size_t(j) * size_t(frames) + size_t(m)] = std::sqrt(e);
      }
    }
  }

  T acc = T(0);
  int64_t count = 0;
  std::vector<T> sx(size_t(kSegment), T(0)), sy(size_t(kSegment), T(0));
  for (int64_t m = kSegment - 1; m < frames; ++m) {
    for (int j = 0; j < kBands; ++j) {
      T ex = T(0), ey = T(0);
      for (int i = 0; i < kSegment; ++i) {
        const size_t idx = size_t(j) * size_t(frames) + size_t(m - kSegment + 1 + i);
        sx[size_t(i)] = bx[idx];
        sy[size_t(i)] = by[idx];
        ex += bx[idx] * bx[idx];
        ey += by[idx] * by[idx];
      }
      const T alpha = ey > T(0) ? std::sqrt(ex / ey) : T(0);
      for (int i = 0; i < kSegment; ++i) {
        sy[size_t(i)] = std::min(alpha * sy[size_t(i)], sx[size_t(i)] * (T(1) + kClip));
      }
      acc += detail::clipped_corr(sx, sy);
      ++count;
    }
  }
  return acc / T(count);
}

}  // namespace wali
