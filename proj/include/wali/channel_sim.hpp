// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Software stand-in for the pressure-sensor acoustic channel: SPL/Pascal
// conversion, deliberately aliased decimation to the sensor rate, sinc
// reconstruction back to the target rate, transient-noise mixing, and
// paired-dataset generation with a JSONL manifest.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "wali/errors.hpp"
#include "wali/resample.hpp"
#include "wali/rng.hpp"
#include "wali/wav_io.hpp"

namespace wali {

// Sound pressure level against the standard 20 uPa reference. Some
// circulated tables put conversational speech at 60 dB near 0.2 Pa; the
// reference formula gives 0.02 Pa and governs everywhere in this toolkit.
inline double spl_to_pascal(double level_db) {
  if (!std::isfinite(level_db)) {
    throw std::invalid_argument("spl_to_pascal: level must be finite");
  }
  return 20e-6 * std::pow(10.0, level_db / 20.0);
}

inline double pascal_to_spl(double pressure_pa) {
  if (!(pressure_pa > 0.0) || !std::isfinite(pressure_pa)) {
    throw std::invalid_argument("pascal_to_spl: pressure must be positive and finite");
  }
  return 20.0 * std::log10(pressure_pa / 20e-6);
}

// HVAC pressure sensors ship at 250-2000 Hz; sensor_rate is free to leave
// that range (sensor_rate == target_rate is the identity channel used as a
// control). prefilter and channel_gain are crude stand-ins for tube damping,
// diaphragm dynamics, and distance loss; both default to the plain aliasing
// channel.
struct SimConfig {
  int64_t sensor_rate = 500;
  int64_t target_rate = 8000;
  double snr_low_db = -7.0;
  double snr_high_db = 40.0;
  double clip_seconds = 4.0;
  bool add_noise = false;    // off: clean channel; on: draw a clip and an SNR
  bool prefilter = false;    // one-pole low-pass at the sensor Nyquist before decimation
  double channel_gain = 1.0;
  uint64_t seed = 0;
};

inline void validate(const SimConfig& cfg) {
  if (cfg.sensor_rate < 1 || cfg.target_rate < 1) {
    throw ConfigError("sim: rates must be positive");
  }
  if (cfg.target_rate % cfg.sensor_rate != 0) {
    throw ConfigError("sim: target rate " + std::to_string(cfg.target_rate) +
                      " is not an integer multiple of sensor rate " +
                      std::to_string(cfg.sensor_rate));
  }
  if (!(cfg.snr_low_db <= cfg.snr_high_db)) {
    throw ConfigError("sim: snr range low must not exceed high");
  }
  if (!(cfg.clip_seconds > 0.0) || !std::isfinite(cfg.clip_seconds)) {
    throw ConfigError("sim: clip_seconds must be positive");
  }
  if (!std::isfinite(cfg.channel_gain)) {
    throw ConfigError("sim: channel_gain must be finite");
  }
}

template <typename T>
struct TrainingPair {
  std::vector<T> clean;     // standardized to clip_seconds at target_rate
  std::vector<T> degraded;  // same length and rate
  std::optional<double> snr_db;  // set only when noise was mixed in
};

// noisy = clean + g * noise, noise looped or cropped to clean's length and g
// chosen from RMS powers so the mixture hits snr_db exactly.
template <typename T>
std::vector<T> mix_noise_at_snr(const std::vector<T>& clean, const std::vector<T>& noise,
                                double snr_db) {
  if (!std::isfinite(snr_db)) {
    throw std::invalid_argument("mix_noise_at_snr: snr must be finite");
  }
  if (clean.empty() || noise.empty()) {
    throw std::invalid_argument("mix_noise_at_snr: empty input");
  }
  double pc = 0;
  for (const T& v : clean) pc += double(v) * double(v);
  double pn = 0;
  for (size_t i = 0; i < clean.size(); ++i) {
    const double v = double(noise[i % noise.size()]);
    pn += v * v;
  }
  if (pc == 0.0 || pn == 0.0) {
    throw std::invalid_argument("mix_noise_at_snr: silent input, SNR undefined");
  }
  const double g = std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10.0)));
  std::vector<T> out(clean.size(), T(0));
  for (size_t i = 0; i < clean.size(); ++i) {
    out[i] = clean[i] + T(g) * noise[i % noise.size()];
  }
  return out;
}

// The full channel: standardize to clip_seconds (zero-pad or trim the tail),
// optionally low-pass, alias down to the sensor rate, sinc-interpolate back,
// scale, and optionally mix one noise-bank clip at an SNR drawn uniformly
// from the configured range. Pure function of (clean, cfg, stream): the clip
// choice and the SNR come from the stream-named generator derived from
// cfg.seed, so distinct files get independent draws in any processing order.
template <typename T>
TrainingPair<T> simulate_sensor(const std::vector<T>& clean, const SimConfig& cfg,
                                const std::vector<std::vector<T>>& noise_bank = {},
                                std::string_view stream = "sensor") {
  validate(cfg);
  const int64_t n = std::llround(cfg.clip_seconds * double(cfg.target_rate));
  if (n < 1) {
    throw ConfigError("sim: clip shorter than one sample");
  }
  TrainingPair<T> pair;
  pair.clean = clean;
  pair.clean.resize(size_t(n), T(0));

  std::vector<T> s = pair.clean;
  if (cfg.prefilter) {
    const double rc = 1.0 / (M_PI * double(cfg.sensor_rate));  // f_c = sensor Nyquist
    const double dt = 1.0 / double(cfg.target_rate);
    const T a = T(dt / (rc + dt));
    T y = T(0);
    for (T& v : s) {
      y += a * (v - y);
      v = y;
    }
  }
  pair.degraded = sinc_upsample(decimate_alias(s, cfg.target_rate, cfg.sensor_rate),
                                cfg.sensor_rate, cfg.target_rate);
  if (cfg.channel_gain != 1.0) {
    for (T& v : pair.degraded) v = T(double(v) * cfg.channel_gain);
  }
  if (cfg.add_noise) {
    if (noise_bank.empty()) {
      throw std::invalid_argument("sim: noise requested but the bank is empty");
    }
    auto g = make_rng(cfg.seed, stream);
    const size_t pick = size_t(g() % uint64_t(noise_bank.size()));
    const double snr = uniform(g, cfg.snr_low_db, cfg.snr_high_db);
    pair.degraded = mix_noise_at_snr(pair.degraded, noise_bank[pick], snr);
    pair.snr_db = snr;
  }
  return pair;
}

struct DatasetRecord {
  std::string clean_path;
  std::string degraded_path;
  int64_t sensor_rate = 0;
  std::optional<double> snr_db;
  double duration_s = 0;
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

struct DatasetManifest {
  std::vector<DatasetRecord> records;
  std::vector<SkippedFile> skipped;
  std::string manifest_path;
};

namespace detail {

inline std::vector<std::filesystem::path> list_wavs(const std::string& dir, const char* who) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError(std::string(who) + ": " + dir + " is not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline nlohmann::json record_json(const DatasetRecord& r) {
  nlohmann::json j;
  j["clean_path"] = r.clean_path;
  j["degraded_path"] = r.degraded_path;
  j["sensor_rate"] = r.sensor_rate;
  j["snr_db"] = r.snr_db ? nlohmann::json(*r.snr_db) : nlohmann::json(nullptr);
  j["duration_s"] = r.duration_s;
  return j;
}

}  // namespace detail

// One degraded/clean pair on disk per readable clean file, plus
// <out_dir>/manifest.jsonl with one record object per line. Unreadable or
// wrong-rate files are skipped with a logged warning and returned in the
// skip list; a clean directory without wav files is a hard error. Workers
// process files concurrently when jobs > 1; records keep input order and the
// manifest is byte-identical for any job count.
inline DatasetManifest build_dataset(const std::string& clean_dir, const std::string& noise_dir,
                                     const std::string& out_dir, const SimConfig& cfg,
                                     int jobs = 1) {
  validate(cfg);
  if (jobs < 1) {
    throw ConfigError("build_dataset: jobs must be at least 1");
  }
  const auto files = detail::list_wavs(clean_dir, "build_dataset");
  if (files.empty()) {
    throw IoError("build_dataset: no .wav files in " + clean_dir);
  }

  DatasetManifest manifest;
  std::vector<std::vector<double>> bank;
  if (cfg.add_noise) {
    for (const auto& p : detail::list_wavs(noise_dir, "build_dataset")) {
      try {
        Wav w = read_wav(p.string());
        if (w.sample_rate != cfg.target_rate) {
          throw IoError("sample rate " + std::to_string(w.sample_rate) + ", expected " +
                        std::to_string(cfg.target_rate));
        }
        bank.push_back(std::move(w.samples));
      } catch (const IoError& e) {
        std::cerr << "warning: skipping noise " << p.string() << ": " << e.what() << "\n";
        manifest.skipped.push_back({p.string(), e.what()});
      }
    }
    if (bank.empty()) {
      throw IoError("build_dataset: no usable noise clips in " + noise_dir);
    }
  }

  std::filesystem::create_directories(out_dir);
  struct Slot {
    std::optional<DatasetRecord> record;
    std::optional<SkippedFile> skip;
  };
  std::vector<Slot> slots(files.size());
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= files.size()) return;
      const std::string in = files[i].string();
      try {
        Wav w = read_wav(in);
        if (w.sample_rate != cfg.target_rate) {
          throw IoError("sample rate " + std::to_string(w.sample_rate) + ", expected " +
                        std::to_string(cfg.target_rate));
        }
        const std::string stem = files[i].stem().string();
        auto pair = simulate_sensor(w.samples, cfg, bank, "pair/" + stem);
        DatasetRecord r;
        r.clean_path = (std::filesystem::path(out_dir) / (stem + "_clean.wav")).string();
        r.degraded_path = (std::filesystem::path(out_dir) / (stem + "_degraded.wav")).string();
        write_wav(r.clean_path, pair.clean, cfg.target_rate);
        write_wav(r.degraded_path, pair.degraded, cfg.target_rate);
        r.sensor_rate = cfg.sensor_rate;
        r.snr_db = pair.snr_db;
        r.duration_s = double(pair.clean.size()) / double(cfg.target_rate);
        slots[i].record = std::move(r);
      } catch (const std::exception& e) {
        slots[i].skip = SkippedFile{in, e.what()};
      }
    }
  };
  if (jobs == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  for (Slot& s : slots) {
    if (s.record) {
      manifest.records.push_back(std::move(*s.record));
    } else if (s.skip) {
      std::cerr << "warning: skipping " << s.skip->path << ": " << s.skip->reason << "\n";
      manifest.skipped.push_back(std::move(*s.skip));
    }
  }

  manifest.manifest_path = (std::filesystem::path(out_dir) / "manifest.jsonl").string();
  std::ofstream f(manifest.manifest_path, std::ios::trunc);
  if (!f) {
    throw IoError("build_dataset: cannot write " + manifest.manifest_path);
  }
  for (const DatasetRecord& r : manifest.records) {
    f << detail::record_json(r).dump() << "\n";
  }
  if (!f.flush()) {
    throw IoError("build_dataset: cannot write " + manifest.manifest_path);
  }
  return manifest;
}

inline std::vector<DatasetRecord> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    throw IoError("read_manifest: cannot open " + path);
  }
  std::vector<DatasetRecord> records;
  std::string line;
  for (int64_t no = 1; std::getline(f, line); ++no) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DatasetRecord r;
      r.clean_path = j.at("clean_path").get<std::string>();
      r.degraded_path = j.at("degraded_path").get<std::string>();
      r.sensor_rate = j.at("sensor_rate").get<int64_t>();
      if (!j.at("snr_db").is_null()) {
        r.snr_db = j.at("snr_db").get<double>();
      }
      r.duration_s = j.at("duration_s").get<double>();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("read_manifest: " + path + " line " + std::to_string(no) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace wali
