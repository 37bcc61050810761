// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Integer-factor rate conversion for the sensor channel. Decimation is
// deliberately unfiltered: the point of the exercise is to reproduce the
// aliasing a slow pressure sensor inflicts on speech. Upsampling is a
// windowed-sinc interpolator so the reconstruction front end never sees
// imaging energy above the sensor's Nyquist.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wali {

namespace detail {

inline int64_t rate_ratio(int64_t hi, int64_t lo, const char* who) {
  if (lo < 1 || hi < 1) {
    throw std::invalid_argument(std::string(who) + ": rates must be positive");
  }
  if (hi % lo != 0) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(hi) +
                                " is not an integer multiple of " + std::to_string(lo));
  }
  return hi / lo;
}

// Kaiser-windowed sinc taps for one polyphase branch. Each branch is
// normalized to unit DC gain so a constant signal interpolates to the same
// constant away from the edges; branch 0 reduces to an exact passthrough of
// the input samples.
template <typename T>
std::vector<std::vector<T>> sinc_polyphase(int64_t L, int64_t zeros, double beta) {
  const double i0b = std::cyl_bessel_i(0.0, beta);
  std::vector<std::vector<T>> taps(size_t(L), std::vector<T>{});
  for (int64_t p = 0; p < L; ++p) {
    std::vector<T>& row = taps[size_t(p)];
    row.assign(size_t(2 * zeros + 1), T(0));
    double sum = 0;
    for (int64_t j = -zeros; j <= zeros; ++j) {
      const double u = double(j) + double(p) / double(L);
      if (std::abs(u) > double(zeros)) continue;
      const double s = u == 0.0 ? 1.0 : std::sin(M_PI * u) / (M_PI * u);
      const double v = u / double(zeros);
      const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - v * v)) / i0b;
      row[size_t(j + zeros)] = T(s * w);
      sum += s * w;
    }
    for (T& t : row) t = T(double(t) / sum);
  }
  return taps;
}

}  // namespace detail

// Keep every (fs_in/fs_out)-th sample with no anti-aliasing filter, folding
// everything above the output Nyquist back into band.
template <typename T>
std::vector<T> decimate_alias(const std::vector<T>& x, int64_t fs_in, int64_t fs_out) {
  const int64_t r = detail::rate_ratio(fs_in, fs_out, "decimate_alias");
  std::vector<T> out;
  out.reserve((x.size() + size_t(r) - 1) / size_t(r));
  for (size_t i = 0; i < x.size(); i += size_t(r)) out.push_back(x[i]);
  return out;
}

// Windowed-sinc interpolation by the integer factor fs_out/fs_in (Kaiser
// window, beta 8.6, 64 zero crossings per side). Output length is the input
// length times the factor; samples beyond the ends are treated as zero, so
// roughly `kSincZeros` input samples at each edge taper off.
inline constexpr int64_t kSincZeros = 64;
inline constexpr double kSincKaiserBeta = 8.6;

template <typename T>
std::vector<T> sinc_upsample(const std::vector<T>& x, int64_t fs_in, int64_t fs_out) {
  const int64_t L = detail::rate_ratio(fs_out, fs_in, "sinc_upsample");
  const int64_t n = int64_t(x.size());
  std::vector<T> out(size_t(n * L), T(0));
  if (n == 0) return out;
  if (L == 1) return x;
  const auto taps = detail::sinc_polyphase<T>(L, kSincZeros, kSincKaiserBeta);
  for (int64_t m = 0; m < n; ++m) {
    out[size_t(m * L)] = x[size_t(m)];
    for (int64_t p = 1; p < L; ++p) {
      const std::vector<T>& row = taps[size_t(p)];
      T acc = T(0);
      const int64_t jlo = std::max(-kSincZeros, m - (n - 1));
      const int64_t jhi = std::min(kSincZeros, m);
      for (int64_t j = jlo; j <= jhi; ++j) {
        acc += row[size_t(j + kSincZeros)] * x[size_t(m - j)];
      }
      out[size_t(m * L + p)] = acc;
    }
  }
  return out;
}

}  // namespace wali
