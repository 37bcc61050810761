// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "test_support.hpp"
#include "wali/dsp.hpp"
#include "wali/fft.hpp"
#include "wali/gradcheck.hpp"

using namespace wali;

namespace {

// Direct O(n^2) DFT oracle.
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x, bool inverse) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> s = 0;
    for (size_t t = 0; t < n; ++t) {
      const double ang = sign * 2.0 * M_PI * double(k) * double(t) / double(n);
      s += x[t] * std::polar(1.0, ang);
    }
    out[k] = s;
  }
  return out;
}

std::vector<double> random_signal(size_t n, uint64_t seed, double scale = 1.0) {
  std::mt19937_64 g(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = scale * (2.0 * uniform01(g) - 1.0);
  return x;
}

}  // namespace

TEST_CASE("fft_radix2 matches naive DFT, forward and inverse") {
  const size_t n = 16;
  std::mt19937_64 g(311);
  std::vector<double> re(n), im(n);
  std::vector<std::complex<double>> x(n);
  for (size_t i = 0; i < n; ++i) {
    re[i] = 2.0 * uniform01(g) - 1.0;
    im[i] = 2.0 * uniform01(g) - 1.0;
    x[i] = {re[i], im[i]};
  }
  auto want_f = naive_dft(x, false);
  auto fr = re, fi = im;
  fft_radix2(fr, fi, false);
  for (size_t k = 0; k < n; ++k) {
    CHECK(fr[k] == doctest::Approx(want_f[k].real()).epsilon(1e-10));
    CHECK(fi[k] == doctest::Approx(want_f[k].imag()).epsilon(1e-10));
  }
  auto want_b = naive_dft(x, true);
  auto br = re, bi = im;
  fft_radix2(br, bi, true);
  for (size_t k = 0; k < n; ++k) {
    CHECK(br[k] == doctest::Approx(want_b[k].real()).epsilon(1e-10));
    CHECK(bi[k] == doctest::Approx(want_b[k].imag()).epsilon(1e-10));
  }
  // forward then scaled inverse is identity
  fft_radix2(fr, fi, true);
  for (size_t i = 0; i < n; ++i) {
    CHECK(fr[i] / double(n) == doctest::Approx(re[i]).epsilon(1e-12));
    CHECK(fi[i] / double(n) == doctest::Approx(im[i]).epsilon(1e-12));
  }
  std::vector<double> bad(6, 0.0);
  CHECK_THROWS_AS(fft_radix2(bad, bad, false), std::invalid_argument);
}

TEST_CASE("rfft satisfies Parseval and irfft inverts it") {
  const size_t n = 64;
  auto x = random_signal(n, 313);
  std::vector<double> xr, xi;
  rfft(x, xr, xi);
  REQUIRE(xr.size() == n / 2 + 1);

  double energy = 0;
  for (double v : x) energy += v * v;
  double spec = xr[0] * xr[0] + xr[n / 2] * xr[n / 2];
  for (size_t k = 1; k < n / 2; ++k) spec += 2.0 * (xr[k] * xr[k] + xi[k] * xi[k]);
  CHECK(energy == doctest::Approx(spec / double(n)).epsilon(1e-10));

  std::vector<double> back;
  irfft(xr, xi, n, back);
  for (size_t i = 0; i < n; ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-11));
}

TEST_CASE("sqrt-Hann periodic window identities") {
  const int win = 512;
  auto w = sqrt_hann_periodic<double>(win);
  CHECK(w[0] == doctest::Approx(0.0));
  CHECK(w[win / 2] == doctest::Approx(1.0));
  CHECK(w[win / 4] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  // periodic Hann pairs half a period apart sum to one
  for (int i = 0; i < win / 2; ++i) {
    CHECK(w[size_t(i)] * w[size_t(i)] + w[size_t(i + win / 2)] * w[size_t(i + win / 2)] ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  StftConfig pad_cfg{64, 8, 32};
  auto wp = stft_window<double>(pad_cfg);
  REQUIRE(wp.size() == 64);
  CHECK(wp[0] == 0.0);
  CHECK(wp[15] == 0.0);
  CHECK(wp[16 + 16] == doctest::Approx(1.0));
  CHECK(wp[48] == 0.0);
}

TEST_CASE("frame count for centered framing") {
  StftConfig c{512, 128, 512};
  CHECK(stft_frame_count(32000, c) == 251);
  CHECK(stft_frame_count(4000, c) == 32);
  CHECK(stft_frame_count(1000, c) == 8);
  CHECK_THROWS_AS(stft_frame_count(200, c), std::invalid_argument);
  CHECK_THROWS_AS(validate_stft(StftConfig{500, 128, 500}, "t"), std::invalid_argument);
  CHECK_THROWS_AS(validate_stft(StftConfig{512, 600, 512}, "t"), std::invalid_argument);
}

TEST_CASE("1 kHz tone at 8 kHz lands in bin 64 of a 512-point analysis") {
  const double fs = 8000.0, f0 = 1000.0;
  const size_t n = 4000;
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = std::cos(2.0 * M_PI * f0 * double(i) / fs);
  StftConfig c{512, 128, 512};
  auto s = stft(x, c);
  const int64_t frames = s.dim(1);
  const int64_t mid = frames / 2;
  int64_t peak = 0;
  double peak_mag = -1;
  for (int64_t k = 0; k < s.dim(0); ++k) {
    const double re = s.re[size_t(k * frames + mid)], im = s.im[size_t(k * frames + mid)];
    const double mag = std::hypot(re, im);
    if (mag > peak_mag) {
      peak_mag = mag;
      peak = k;
    }
  }
  CHECK(peak == 64);
  // sqrt-Hann is the sine window: first side lobe near -23 dB, so distant
  // bins must stay below 5% of the peak and carry under 1% of the energy
  double total = 0, near = 0;
  for (int64_t k = 0; k < s.dim(0); ++k) {
    const double mag = std::hypot(s.re[size_t(k * frames + mid)], s.im[size_t(k * frames + mid)]);
    total += mag * mag;
    if (std::abs(k - peak) <= 2) near += mag * mag;
    else CHECK(mag < 0.05 * peak_mag);
  }
  CHECK(near > 0.99 * total);
}

TEST_CASE("istft inverts stft exactly") {
  SUBCASE("model geometry, length not a hop multiple") {
    auto x = random_signal(1000, 317);
    StftConfig c{512, 128, 512};
    auto s = stft(x, c);
    REQUIRE(s.shape == Shape{257, 8});
    auto y = istft(s, c, 1000);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-10));
  }
  SUBCASE("zero-padded window") {
    auto x = random_signal(300, 318);
    StftConfig c{64, 8, 32};
    auto y = istft(stft(x, c), c, 300);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-9));
  }
  SUBCASE("float instantiation") {
    std::vector<float> x(600);
    std::mt19937_64 g(319);
    for (auto& v : x) v = float(2.0 * uniform01(g) - 1.0);
    StftConfig c{256, 64, 256};
    auto y = istft(stft(x, c), c, 600);
    for (size_t i = 0; i < x.size(); ++i) {
      CHECK(double(y[i]) == doctest::Approx(double(x[i])).epsilon(2e-4).scale(1.0));
    }
  }
  SUBCASE("bad bin count") {
    StftConfig c{64, 16, 64};
    ComplexTensor<double> s(Shape{30, 5});
    CHECK_THROWS_AS(istft(s, c, 64), std::invalid_argument);
  }
}

TEST_CASE("stft_op / istft_op forward equals the plain transforms") {
  auto x = random_signal(200, 321);
  StftConfig c{64, 16, 64};
  Tape<double> t;
  ComplexTensor<double> xt(Shape{200});
  xt.re = x;
  Var xv = t.leaf(xt);
  Var sv = stft_op(t, xv, c);
  auto want = stft(x, c);
  REQUIRE(t.val(sv).shape == want.shape);
  for (size_t i = 0; i < want.re.size(); ++i) {
    CHECK(t.val(sv).re[i] == want.re[i]);
    CHECK(t.val(sv).im[i] == want.im[i]);
  }
  Var yv = istft_op(t, sv, c, 200);
  auto wanty = istft(want, c, 200);
  for (size_t i = 0; i < wanty.size(); ++i) {
    CHECK(t.val(yv).re[i] == doctest::Approx(wanty[i]).epsilon(1e-12));
  }
}

TEST_CASE("gradcheck: stft_op") {
  StftConfig c{16, 4, 16};
  auto x = testsup::random_tensor<double>({48}, 331);
  for (auto& v : x.im) v = 0;
  auto r = finite_diff_gradcheck<double>(
      [c](Tape<double>& t, Var v) { return testsup::proj_loss(t, stft_op(t, v, c), 31); }, x, 1e-4);
  CHECK(r.max_rel_err < 1e-6);
  CHECK(r.checked == 96);
}

TEST_CASE("gradcheck: istft_op") {
  StftConfig c{16, 4, 16};
  auto x = testsup::random_tensor<double>({9, 7}, 332);
  auto r = finite_diff_gradcheck<double>(
      [c](Tape<double>& t, Var v) { return testsup::proj_loss(t, istft_op(t, v, c, 20), 32); }, x,
      1e-4);
  CHECK(r.max_rel_err < 1e-6);
  CHECK(r.checked == 126);
}

TEST_CASE("gradcheck: synthesis-analysis composition") {
  // The training loss runs istft_op then stft_op at other resolutions; check
  // the chained adjoints together.
  StftConfig cs{16, 4, 16};
  StftConfig ca{8, 4, 8};
  auto x = testsup::random_tensor<double>({9, 6}, 333);
  auto r = finite_diff_gradcheck<double>(
      [&](Tape<double>& t, Var v) {
        Var y = istft_op(t, v, cs, 18);
        Var s = stft_op(t, y, ca);
        return testsup::proj_loss(t, s, 33);
      },
      x, 1e-4);
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("append_zero_rows pads and routes gradients") {
  auto x = testsup::random_tensor<double>({3, 4}, 334);
  Tape<double> t;
  Var y = append_zero_rows(t, t.leaf(x), 2);
  REQUIRE(t.val(y).shape == Shape{5, 4});
  for (int64_t i = 0; i < 12; ++i) CHECK(t.val(y).re[size_t(i)] == x.re[size_t(i)]);
  for (int64_t i = 12; i < 20; ++i) {
    CHECK(t.val(y).re[size_t(i)] == 0.0);
    CHECK(t.val(y).im[size_t(i)] == 0.0);
  }
  auto r = finite_diff_gradcheck<double>(
      [](Tape<double>& t2, Var v) { return testsup::proj_loss(t2, append_zero_rows(t2, v, 2), 34); },
      x, 1e-4);
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("log_magnitude and phase match their scalar definitions") {
  auto s = testsup::random_tensor<double>({3, 4}, 404, 2.0);
  s.re[0] = 0.0;
  s.im[0] = 0.0;  // eps keeps the log finite at exact zero
  auto lm = log_magnitude(s);
  auto ph = phase(s);
  REQUIRE(lm.shape == s.shape);
  REQUIRE(ph.shape == s.shape);
  for (size_t i = 0; i < s.re.size(); ++i) {
    CHECK(lm.re[i] == doctest::Approx(std::log(std::hypot(s.re[i], s.im[i]) + 1e-9)));
    CHECK(lm.im[i] == 0.0);
    CHECK(ph.re[i] == doctest::Approx(std::atan2(s.im[i], s.re[i])));
    CHECK(ph.im[i] == 0.0);
  }
  CHECK(std::isfinite(lm.re[0]));
  auto lm2 = log_magnitude(s, 1e-3);
  CHECK(lm2.re[0] == doctest::Approx(std::log(1e-3)));
}
