// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace wali {

inline bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 decimation-in-time FFT, power-of-two sizes only.
// forward:  X[k] = sum_n x[n] e^{-2 pi i n k / n}   (no normalization)
// inverse:  x[n] = sum_k X[k] e^{+2 pi i n k / n}   (no 1/n; caller scales)
// Twiddles are always evaluated in double and cast, so float instantiations
// stay as accurate as float allows and bit-stable across runs.
template <typename T>
void fft_radix2(std::vector<T>& re, std::vector<T>& im, bool inverse) {
  const size_t n = re.size();
  if (im.size() != n) throw std::invalid_argument("fft_radix2: plane sizes differ");
  if (!is_pow2(int64_t(n))) throw std::invalid_argument("fft_radix2: size must be a power of two");
  if (n <= 1) return;

  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }

  const double sign = inverse ? 1.0 : -1.0;
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / double(len);
    const double wr0 = std::cos(ang), wi0 = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double wr = 1.0, wi = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        const size_t a = i + k, b = i + k + len / 2;
        const double ur = double(re[a]), ui = double(im[a]);
        const double vr = double(re[b]) * wr - double(im[b]) * wi;
        const double vi = double(re[b]) * wi + double(im[b]) * wr;
        re[a] = T(ur + vr);
        im[a] = T(ui + vi);
        re[b] = T(ur - vr);
        im[b] = T(ui - vi);
        const double nwr = wr * wr0 - wi * wi0;
        wi = wr * wi0 + wi * wr0;
        wr = nwr;
      }
    }
  }
}

// Real-input FFT onto bins 0..n/2 (inclusive). Output vectors are resized.
template <typename T>
void rfft(const std::vector<T>& x, std::vector<T>& out_re, std::vector<T>& out_im) {
  const size_t n = x.size();
  std::vector<T> re(x), im(n, T(0));
  fft_radix2(re, im, /*inverse=*/false);
  const size_t nb = n / 2 + 1;
  out_re.assign(re.begin(), re.begin() + nb);
  out_im.assign(im.begin(), im.begin() + nb);
}

// Inverse of rfft under the Hermitian-symmetry convention:
//   x[n] = (1/N) [ Re X[0] + 2 sum_{k=1}^{N/2-1} (Re X[k] cos - Im X[k] sin) + Re X[N/2] (-1)^n ]
// The imaginary parts of bins 0 and N/2 do not influence the result.
template <typename T>
void irfft(const std::vector<T>& xr, const std::vector<T>& xi, size_t n, std::vector<T>& out) {
  if (xr.size() != n / 2 + 1 || xi.size() != xr.size()) {
    throw std::invalid_argument("irfft: expected n/2+1 bins");
  }
  std::vector<T> re(n), im(n);
  re[0] = xr[0];
  im[0] = T(0);
  for (size_t k = 1; k < n / 2; ++k) {
    re[k] = xr[k];
    im[k] = xi[k];
    re[n - k] = xr[k];
    im[n - k] = T(-xi[k]);
  }
  re[n / 2] = xr[n / 2];
  im[n / 2] = T(0);
  fft_radix2(re, im, /*inverse=*/true);
  out.resize(n);
  const T s = T(1.0 / double(n));
  for (size_t t = 0; t < n; ++t) out[t] = re[t] * s;
}

}  // namespace wali
