// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"
#include "wali/channel_sim.hpp"
#include "wali/wav_io.hpp"

using namespace wali;
namespace fsys = std::filesystem;

namespace {

std::vector<double> white_noise(int64_t n, uint64_t seed, double amp = 1.0) {
  auto g = make_rng(seed, "test-noise");
  std::vector<double> x(size_t(n), 0.0);
  for (double& v : x) v = amp * (2.0 * uniform01(g) - 1.0);
  return x;
}

std::vector<double> tone(double hz, int64_t fs, double seconds, double amp = 1.0) {
  std::vector<double> x(size_t(std::llround(seconds * double(fs))), 0.0);
  for (size_t i = 0; i < x.size(); ++i) {
    x[i] = amp * std::sin(2.0 * M_PI * hz * double(i) / double(fs));
  }
  return x;
}

double mean_power(const std::vector<double>& x) {
  double p = 0;
  for (double v : x) p += v * v;
  return p / double(x.size());
}

// SNR of (noisy - clean) against clean, the measurement the mixer must hit.
double measured_snr_db(const std::vector<double>& clean, const std::vector<double>& noisy) {
  double pc = 0, pr = 0;
  for (size_t i = 0; i < clean.size(); ++i) {
    const double r = noisy[i] - clean[i];
    pc += clean[i] * clean[i];
    pr += r * r;
  }
  return 10.0 * std::log10(pc / pr);
}

// Energy above f_lo relative to total, in dB, via an O(N^2) DFT independent
// of the library FFT. Hann-windowed: broadband input against a rectangular
// window would leak band-edge energy across the whole measurement.
double high_band_db(const std::vector<double>& x, int64_t fs, double f_lo) {
  const size_t n = x.size();
  std::vector<double> w(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    w[i] = x[i] * 0.5 * (1.0 - std::cos(2.0 * M_PI * double(i) / double(n)));
  }
  double total = 0, high = 0;
  for (size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0;
    for (size_t i = 0; i < n; ++i) {
      const double ph = -2.0 * M_PI * double(k) * double(i) / double(n);
      acc += w[i] * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    const double e = std::norm(acc);
    total += e;
    if (double(k) * double(fs) / double(n) > f_lo) high += e;
  }
  return 10.0 * std::log10(high / total);
}

// Single-bin amplitude of a tone over an interior window.
double tone_amp(const std::vector<double>& x, int64_t fs, double hz, size_t i0, size_t count) {
  std::complex<double> acc = 0;
  for (size_t i = 0; i < count; ++i) {
    const double ph = -2.0 * M_PI * hz * double(i0 + i) / double(fs);
    acc += x[i0 + i] * std::complex<double>(std::cos(ph), std::sin(ph));
  }
  return 2.0 * std::abs(acc) / double(count);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("SPL conversion follows the 20 uPa reference in both directions") {
  CHECK(spl_to_pascal(94.0) == doctest::Approx(1.0023744672545452).epsilon(1e-12));
  CHECK(spl_to_pascal(94.0) == doctest::Approx(1.002).epsilon(1e-3));
  CHECK(spl_to_pascal(0.0) == 20e-6);
  // Circulated tables put conversation at 60 dB near 0.2 Pa; the reference
  // formula gives 0.02 Pa and wins.
  CHECK(spl_to_pascal(60.0) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(pascal_to_spl(1.0) == doctest::Approx(93.97940008672037).epsilon(1e-12));
  for (double level : {0.0, 40.0, 60.0, 70.0, 94.0, 115.0}) {
    CHECK(pascal_to_spl(spl_to_pascal(level)) == doctest::Approx(level).epsilon(1e-9));
  }
  CHECK_THROWS_AS(spl_to_pascal(std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(pascal_to_spl(0.0), std::invalid_argument);
  CHECK_THROWS_AS(pascal_to_spl(-1.0), std::invalid_argument);
}

TEST_CASE("noise mixing hits the requested SNR exactly") {
  const auto clean = testsup::synthetic_speech(4000, 8000.0, 60);

  // Equal powers at 0 dB: unit gain, so the mixture is exactly twice the
  // input.
  const auto doubled = mix_noise_at_snr(clean, clean, 0.0);
  for (size_t i = 0; i < clean.size(); ++i) {
    CHECK(doubled[i] == 2.0 * clean[i]);
  }

  const auto noise = white_noise(4000, 9);
  const auto at40 = mix_noise_at_snr(clean, noise, 40.0);
  std::vector<double> added(clean.size(), 0.0);
  for (size_t i = 0; i < clean.size(); ++i) added[i] = at40[i] - clean[i];
  CHECK(std::sqrt(mean_power(added)) * 100.0 ==
        doctest::Approx(std::sqrt(mean_power(clean))).epsilon(1e-9));

  const auto at_m7 = mix_noise_at_snr(clean, noise, -7.0);
  CHECK(measured_snr_db(clean, at_m7) == doctest::Approx(-7.0).epsilon(1e-9));
  CHECK(std::abs(measured_snr_db(clean, at_m7) + 7.0) <= 0.1);
}

TEST_CASE("noise mixing loops or crops the noise to fit the clean length") {
  const auto clean = white_noise(20, 1, 0.5);
  const auto short_noise = white_noise(7, 2);
  const auto mixed = mix_noise_at_snr(clean, short_noise, 3.0);
  // The added component must be one gain applied to the tiled noise.
  const double g0 = (mixed[0] - clean[0]) / short_noise[0];
  for (size_t i = 0; i < clean.size(); ++i) {
    CHECK((mixed[i] - clean[i]) / short_noise[i % 7] == doctest::Approx(g0).epsilon(1e-12));
  }

  const auto long_noise = white_noise(50, 3);
  const auto cropped = mix_noise_at_snr(clean, long_noise, 3.0);
  const double g1 = (cropped[0] - clean[0]) / long_noise[0];
  for (size_t i = 0; i < clean.size(); ++i) {
    CHECK((cropped[i] - clean[i]) / long_noise[i] == doctest::Approx(g1).epsilon(1e-12));
  }
}

TEST_CASE("noise mixing rejects silent and empty inputs") {
  const std::vector<double> silent(100, 0.0);
  const auto live = white_noise(100, 4);
  CHECK_THROWS_AS(mix_noise_at_snr(silent, live, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(mix_noise_at_snr(live, silent, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(mix_noise_at_snr(std::vector<double>{}, live, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(mix_noise_at_snr(live, std::vector<double>{}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(mix_noise_at_snr(live, live, std::nan("")), std::invalid_argument);
}

TEST_CASE("a sensor at the target rate with noise off is the identity channel") {
  SimConfig cfg;
  cfg.sensor_rate = 8000;
  cfg.clip_seconds = 1.0;
  const auto x = testsup::synthetic_speech(6000, 8000.0, 61);
  const auto pair = simulate_sensor(x, cfg);
  REQUIRE(pair.clean.size() == 8000);
  REQUIRE(pair.degraded.size() == 8000);
  CHECK_FALSE(pair.snr_db.has_value());
  for (size_t i = 0; i < 6000; ++i) CHECK(pair.clean[i] == x[i]);
  for (size_t i = 6000; i < 8000; ++i) CHECK(pair.clean[i] == 0.0);
  CHECK(pair.degraded == pair.clean);

  // Long inputs are trimmed to the standard duration instead.
  const auto y = testsup::synthetic_speech(10000, 8000.0, 62);
  const auto trimmed = simulate_sensor(y, cfg);
  REQUIRE(trimmed.clean.size() == 8000);
  for (size_t i = 0; i < 8000; ++i) CHECK(trimmed.clean[i] == y[i]);
}

TEST_CASE("a 500 Hz sensor leaves nothing above its band in the output") {
  SimConfig cfg;
  cfg.sensor_rate = 500;
  cfg.clip_seconds = 2.0;
  const auto x = white_noise(16000, 5, 0.5);
  const auto pair = simulate_sensor(x, cfg);
  REQUIRE(pair.degraded.size() == 16000);
  // Interior window clear of the interpolator's edge taper; 275 Hz clears
  // its transition band (about 22 Hz wide at these settings).
  const std::vector<double> mid(pair.degraded.begin() + 4000, pair.degraded.begin() + 12000);
  CHECK(high_band_db(mid, 8000, 275.0) <= -60.0);
}

TEST_CASE("the optional prefilter softens what would alias") {
  SimConfig cfg;
  cfg.sensor_rate = 500;
  cfg.clip_seconds = 2.0;
  const auto x = tone(300.0, 8000, 2.0, 0.5);
  const auto plain = simulate_sensor(x, cfg);
  cfg.prefilter = true;
  const auto soft = simulate_sensor(x, cfg);
  // 300 Hz folds across the 250 Hz Nyquist to 200 Hz in both cases.
  const double a_plain = tone_amp(plain.degraded, 8000, 200.0, 4000, 8000);
  const double a_soft = tone_amp(soft.degraded, 8000, 200.0, 4000, 8000);
  // One-pole low-pass at 250 Hz, evaluated at 300 Hz on the 8 kHz grid.
  const double dt = 1.0 / 8000.0;
  const double rc = 1.0 / (M_PI * 500.0);
  const double a = dt / (rc + dt);
  const double w = 2.0 * M_PI * 300.0 / 8000.0;
  const double h = a / std::sqrt(1.0 - 2.0 * (1.0 - a) * std::cos(w) + (1.0 - a) * (1.0 - a));
  CHECK(a_soft / a_plain == doctest::Approx(h).epsilon(0.02));
  CHECK(a_soft < a_plain);
}

TEST_CASE("channel gain scales the degraded signal only") {
  SimConfig cfg;
  cfg.sensor_rate = 8000;
  cfg.clip_seconds = 0.5;
  cfg.channel_gain = 0.5;
  const auto x = testsup::synthetic_speech(4000, 8000.0, 63);
  const auto pair = simulate_sensor(x, cfg);
  for (size_t i = 0; i < pair.clean.size(); ++i) {
    CHECK(pair.degraded[i] == 0.5 * pair.clean[i]);
  }
}

TEST_CASE("noise draws are deterministic per stream and cover the range") {
  SimConfig cfg;
  cfg.sensor_rate = 8000;
  cfg.clip_seconds = 0.25;
  cfg.add_noise = true;
  cfg.seed = 1;
  // A quarter-second speech clip can land entirely in a pause; broadband
  // noise is never silent.
  const auto x = white_noise(2000, 64, 0.5);
  const std::vector<std::vector<double>> bank = {white_noise(1500, 6), white_noise(900, 7)};

  const auto once = simulate_sensor(x, cfg, bank, "pair/a");
  const auto again = simulate_sensor(x, cfg, bank, "pair/a");
  CHECK(once.degraded == again.degraded);
  CHECK(*once.snr_db == *again.snr_db);
  const auto other = simulate_sensor(x, cfg, bank, "pair/b");
  CHECK(*other.snr_db != *once.snr_db);
  SimConfig reseeded = cfg;
  reseeded.seed = 4;
  CHECK(*simulate_sensor(x, cfg, bank, "pair/a").snr_db !=
        *simulate_sensor(x, reseeded, bank, "pair/a").snr_db);

  // Identity channel, so the mixture SNR can be measured directly against
  // the recorded draw; 100 streams must average near the range midpoint.
  double sum = 0;
  for (int i = 0; i < 100; ++i) {
    const auto p = simulate_sensor(x, cfg, bank, "pair/" + std::to_string(i));
    REQUIRE(p.snr_db.has_value());
    CHECK(*p.snr_db >= cfg.snr_low_db);
    CHECK(*p.snr_db <= cfg.snr_high_db);
    CHECK(measured_snr_db(p.clean, p.degraded) == doctest::Approx(*p.snr_db).epsilon(1e-9));
    sum += *p.snr_db;
  }
  CHECK(std::abs(sum / 100.0 - 16.5) <= 2.0);
}

TEST_CASE("simulation config is validated") {
  const auto x = white_noise(800, 8, 0.5);
  SimConfig cfg;
  cfg.sensor_rate = 300;  // 8000 is not a multiple
  CHECK_THROWS_AS(simulate_sensor(x, cfg), ConfigError);
  cfg = SimConfig{};
  cfg.snr_low_db = 5.0;
  cfg.snr_high_db = -5.0;
  CHECK_THROWS_AS(simulate_sensor(x, cfg), ConfigError);
  cfg = SimConfig{};
  cfg.clip_seconds = 0.0;
  CHECK_THROWS_AS(simulate_sensor(x, cfg), ConfigError);
  cfg = SimConfig{};
  cfg.channel_gain = std::nan("");
  CHECK_THROWS_AS(simulate_sensor(x, cfg), ConfigError);
  cfg = SimConfig{};
  cfg.add_noise = true;
  CHECK_THROWS_AS(simulate_sensor(x, cfg, {}), std::invalid_argument);
}

TEST_CASE("wav files round trip through 16-bit PCM") {
  const auto dir = testsup::fresh_dir("wavio");
  auto x = testsup::synthetic_speech(1000, 8000.0, 65);
  x.push_back(1.7);   // clamps to full scale
  x.push_back(-2.0);
  const std::string path = (dir / "t.wav").string();
  write_wav(path, x, 8000);
  const Wav w1 = read_wav(path);
  CHECK(w1.sample_rate == 8000);
  REQUIRE(w1.samples.size() == x.size());
  for (size_t i = 0; i + 2 < x.size(); ++i) {
    CHECK(std::abs(w1.samples[i] - x[i]) <= 0.5 / 32767.0 + 1e-12);
  }
  CHECK(w1.samples[x.size() - 2] == 1.0);
  CHECK(w1.samples[x.size() - 1] == -1.0);

  // Quantized data survives another cycle bit for bit.
  const std::string path2 = (dir / "t2.wav").string();
  write_wav(path2, w1.samples, 8000);
  CHECK(read_wav(path2).samples == w1.samples);
  CHECK(slurp(path2) == slurp(path));
}

TEST_CASE("wav reader rejects what it cannot represent") {
  const auto dir = testsup::fresh_dir("wavbad");
  const auto good = (dir / "good.wav").string();
  write_wav(good, white_noise(200, 10, 0.5), 8000);

  const auto text = (dir / "junk.wav").string();
  std::ofstream(text) << "this is not audio";
  CHECK_THROWS_AS(read_wav(text), IoError);

  std::string bytes = slurp(good);
  auto patched = [&](size_t at, char v) {
    std::string b = bytes;
    b[at] = v;
    const auto p = (dir / "patched.wav").string();
    std::ofstream(p, std::ios::binary) << b;
    return p;
  };
  CHECK_THROWS_AS(read_wav(patched(22, 2)), IoError);   // stereo
  CHECK_THROWS_AS(read_wav(patched(34, 24)), IoError);  // 24-bit
  CHECK_THROWS_AS(read_wav(patched(20, 3)), IoError);   // non-PCM
  CHECK_THROWS_AS(read_wav(patched(39, 'x')), IoError); // no data chunk

  const auto cut = (dir / "cut.wav").string();
  std::ofstream(cut, std::ios::binary) << bytes.substr(0, 30);
  CHECK_THROWS_AS(read_wav(cut), IoError);
  CHECK_THROWS_AS(read_wav((dir / "missing.wav").string()), IoError);
}

TEST_CASE("build_dataset materializes pairs with a replayable manifest") {
  const auto root = testsup::fresh_dir("dataset");
  const auto clean_dir = root / "clean";
  const auto noise_dir = root / "noise";
  const auto out_dir = root / "out";
  fsys::create_directories(clean_dir);
  fsys::create_directories(noise_dir);
  write_wav((clean_dir / "a.wav").string(), testsup::synthetic_speech(6400, 8000.0, 71), 8000);
  write_wav((clean_dir / "b.wav").string(), testsup::synthetic_speech(9600, 8000.0, 72), 8000);
  write_wav((clean_dir / "c.wav").string(), testsup::synthetic_speech(4000, 8000.0, 73), 8000);
  std::ofstream((clean_dir / "junk.wav").string()) << "not a wav";
  write_wav((clean_dir / "d.wav").string(), testsup::synthetic_speech(4000, 16000.0, 74), 16000);
  write_wav((noise_dir / "n1.wav").string(), white_noise(8000, 75), 8000);
  write_wav((noise_dir / "n2.wav").string(), white_noise(5600, 76), 8000);

  SimConfig cfg;
  cfg.sensor_rate = 500;
  cfg.clip_seconds = 1.0;
  cfg.add_noise = true;
  cfg.seed = 21;
  const auto manifest = build_dataset(clean_dir.string(), noise_dir.string(), out_dir.string(), cfg);

  REQUIRE(manifest.records.size() == 3);
  CHECK(manifest.skipped.size() == 2);
  for (const auto& s : manifest.skipped) CHECK_FALSE(s.reason.empty());
  CHECK(manifest.records[0].clean_path.ends_with("a_clean.wav"));
  CHECK(manifest.records[1].degraded_path.ends_with("b_degraded.wav"));
  for (const auto& r : manifest.records) {
    CHECK(fsys::exists(r.clean_path));
    CHECK(fsys::exists(r.degraded_path));
    CHECK(r.duration_s == 1.0);
    CHECK(r.sensor_rate == 500);
    REQUIRE(r.snr_db.has_value());
    CHECK(*r.snr_db >= cfg.snr_low_db);
    CHECK(*r.snr_db <= cfg.snr_high_db);
    const Wav deg = read_wav(r.degraded_path);
    CHECK(deg.sample_rate == 8000);
    CHECK(deg.samples.size() == 8000);
  }

  // The manifest file round trips and matches what was returned.
  const auto parsed = read_manifest(manifest.manifest_path);
  REQUIRE(parsed.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(parsed[i].clean_path == manifest.records[i].clean_path);
    CHECK(parsed[i].degraded_path == manifest.records[i].degraded_path);
    CHECK(parsed[i].sensor_rate == manifest.records[i].sensor_rate);
    CHECK(parsed[i].duration_s == manifest.records[i].duration_s);
    CHECK(*parsed[i].snr_db == *manifest.records[i].snr_db);
  }
  std::ifstream mf(manifest.manifest_path);
  std::string line;
  int lines = 0;
  while (std::getline(mf, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.size() == 5);
    CHECK(j.contains("clean_path"));
    CHECK(j.contains("snr_db"));
    ++lines;
  }
  CHECK(lines == 3);

  // Reruns are byte-identical, whatever the worker count.
  const std::string bytes1 = slurp(manifest.manifest_path);
  const std::string deg1 = slurp(manifest.records[0].degraded_path);
  build_dataset(clean_dir.string(), noise_dir.string(), out_dir.string(), cfg);
  CHECK(slurp(manifest.manifest_path) == bytes1);
  build_dataset(clean_dir.string(), noise_dir.string(), out_dir.string(), cfg, 3);
  CHECK(slurp(manifest.manifest_path) == bytes1);
  CHECK(slurp(manifest.records[0].degraded_path) == deg1);

  const auto empty_dir = root / "empty";
  fsys::create_directories(empty_dir);
  CHECK_THROWS_AS(
      build_dataset(empty_dir.string(), noise_dir.string(), out_dir.string(), cfg), IoError);
  CHECK_THROWS_AS(
      build_dataset((root / "nowhere").string(), noise_dir.string(), out_dir.string(), cfg),
      IoError);
  CHECK_THROWS_AS(
      build_dataset(clean_dir.string(), empty_dir.string(), out_dir.string(), cfg), IoError);
  CHECK_THROWS_AS(
      build_dataset(clean_dir.string(), noise_dir.string(), out_dir.string(), cfg, 0), ConfigError);
}

TEST_CASE("recorded SNR matches the mixture on disk") {
  const auto root = testsup::fresh_dir("snrdisk");
  const auto clean_dir = root / "clean";
  const auto noise_dir = root / "noise";
  fsys::create_directories(clean_dir);
  fsys::create_directories(noise_dir);
  write_wav((clean_dir / "a.wav").string(), testsup::synthetic_speech(4000, 8000.0, 81), 8000);
  write_wav((clean_dir / "b.wav").string(), testsup::synthetic_speech(4000, 8000.0, 82), 8000);
  write_wav((noise_dir / "n.wav").string(), white_noise(4000, 83, 0.8), 8000);

  SimConfig cfg;
  cfg.sensor_rate = 8000;  // identity channel, so the files expose the mixer
  cfg.clip_seconds = 0.5;
  cfg.add_noise = true;
  cfg.snr_low_db = 10.0;  // keeps the 16-bit write clear of clipping
  cfg.seed = 5;
  const auto manifest =
      build_dataset(clean_dir.string(), noise_dir.string(), (root / "out").string(), cfg);
  REQUIRE(manifest.records.size() == 2);
  for (const auto& r : manifest.records) {
    const auto clean = read_wav(r.clean_path).samples;
    const auto degraded = read_wav(r.degraded_path).samples;
    REQUIRE(clean.size() == degraded.size());
    CHECK(std::abs(measured_snr_db(clean, degraded) - *r.snr_db) <= 0.05);
  }
}

TEST_CASE("manifest reader rejects junk") {
  const auto dir = testsup::fresh_dir("manifest");
  CHECK_THROWS_AS(read_manifest((dir / "missing.jsonl").string()), IoError);

  const auto bad = (dir / "bad.jsonl").string();
  std::ofstream(bad) << "not json\n";
  CHECK_THROWS_AS(read_manifest(bad), IoError);

  const auto partial = (dir / "partial.jsonl").string();
  std::ofstream(partial) << "{\"clean_path\": \"x\"}\n";
  CHECK_THROWS_AS(read_manifest(partial), IoError);

  const auto ok = (dir / "ok.jsonl").string();
  std::ofstream(ok) << "{\"clean_path\":\"a\",\"degraded_path\":\"b\",\"duration_s\":4.0,"
                       "\"sensor_rate\":500,\"snr_db\":null}\n\n";
  const auto recs = read_manifest(ok);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].clean_path == "a");
  CHECK(recs[0].duration_s == 4.0);
  CHECK_FALSE(recs[0].snr_db.has_value());
}
