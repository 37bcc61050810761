// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "wali/channel_sim.hpp"
#include "wali/report.hpp"
#include "wali/wav_io.hpp"

using namespace wali;
namespace fsys = std::filesystem;

namespace {

// A small on-disk dataset; speech seeds are offset so clips differ.
DatasetManifest make_dataset(const fsys::path& root, const SimConfig& cfg, int clips,
                             uint32_t seed0) {
  const auto clean_dir = root / "clean";
  const auto noise_dir = root / "noise";
  fsys::create_directories(clean_dir);
  fsys::create_directories(noise_dir);
  const int64_t n = std::llround(cfg.clip_seconds * double(cfg.target_rate));
  for (int i = 0; i < clips; ++i) {
    const std::string name = "clip" + std::to_string(i) + ".wav";
    write_wav((clean_dir / name).string(),
              testsup::synthetic_speech(n, double(cfg.target_rate), seed0 + uint32_t(i)),
              cfg.target_rate);
  }
  auto g = make_rng(99, "report-noise");
  std::vector<double> noise(size_t(cfg.target_rate), 0.0);
  for (double& v : noise) v = 0.6 * (2.0 * uniform01(g) - 1.0);
  write_wav((noise_dir / "n.wav").string(), noise, cfg.target_rate);
  return build_dataset(clean_dir.string(), noise_dir.string(), (root / "out").string(), cfg);
}

bool rows_equal(const MetricRow& a, const MetricRow& b) {
  auto same = [](double x, double y) {
    return (std::isnan(x) && std::isnan(y)) || x == y;
  };
  return a.clip_id == b.clip_id && a.condition == b.condition && same(a.lsd, b.lsd) &&
         same(a.si_sdr_db, b.si_sdr_db) && same(a.stoi, b.stoi) && a.pesq == b.pesq &&
         a.nisqa_mos == b.nisqa_mos;
}

}  // namespace

TEST_CASE("an identity channel scores perfect raw rows") {
  SimConfig cfg;
  cfg.sensor_rate = 8000;
  cfg.clip_seconds = 1.0;
  const auto manifest = make_dataset(testsup::fresh_dir("report_id"), cfg, 2, 300);
  REQUIRE(manifest.records.size() == 2);

  const auto report = evaluate_dataset(manifest.records);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.skipped.empty());
  for (const auto& r : report.rows) {
    CHECK(r.condition == "raw");
    CHECK(r.lsd == 0.0);
    CHECK((std::isinf(r.si_sdr_db) && r.si_sdr_db > 0));
    CHECK(r.stoi == doctest::Approx(1.0).epsilon(1e-6));
    CHECK_FALSE(r.pesq.has_value());
  }
  CHECK(report.rows[0].clip_id == "clip0");
  CHECK(report.rows[1].clip_id == "clip1");
  REQUIRE(report.means.size() == 1);
  CHECK(report.means[0].condition == "raw");
  CHECK(report.means[0].clips == 2);
  CHECK(report.means[0].lsd == 0.0);
  CHECK(report.means[0].stoi == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("a model adds a reconstructed row per clip") {
  SimConfig cfg;
  cfg.sensor_rate = 8000;
  cfg.clip_seconds = 1.0;
  const auto manifest = make_dataset(testsup::fresh_dir("report_model"), cfg, 2, 310);

  // Pure gain: SI-SDR and STOI are scale-invariant, LSD is not, so the
  // reconstructed rows must differ from raw in exactly one metric.
  const auto halve = [](const std::vector<double>& x, int64_t) {
    std::vector<double> y = x;
    for (double& v : y) v *= 0.5;
    return y;
  };
  const auto report = evaluate_dataset(manifest.records, halve);
  REQUIRE(report.rows.size() == 4);
  for (size_t i = 0; i < 4; i += 2) {
    CHECK(report.rows[i].condition == "raw");
    CHECK(report.rows[i + 1].condition == "reconstructed");
    CHECK(report.rows[i].clip_id == report.rows[i + 1].clip_id);
    CHECK(report.rows[i].lsd == 0.0);
    CHECK(report.rows[i + 1].lsd > 0.1);
    CHECK((std::isinf(report.rows[i + 1].si_sdr_db) && report.rows[i + 1].si_sdr_db > 0));
    CHECK(report.rows[i + 1].stoi == doctest::Approx(report.rows[i].stoi).epsilon(1e-9));
  }
  REQUIRE(report.means.size() == 2);
  CHECK(report.means[0].condition == "raw");
  CHECK(report.means[1].condition == "reconstructed");
  CHECK(report.means[1].clips == 2);

  const auto bad_model = [](const std::vector<double>& x, int64_t) {
    return std::vector<double>(x.size() / 2, 0.0);
  };
  CHECK_THROWS_AS(evaluate_dataset(manifest.records, bad_model), std::invalid_argument);
}

TEST_CASE("means are the arithmetic row means and jobs do not change rows") {
  SimConfig cfg;
  cfg.sensor_rate = 500;
  cfg.clip_seconds = 1.0;
  cfg.add_noise = true;
  cfg.snr_low_db = 5.0;
  cfg.snr_high_db = 25.0;
  cfg.seed = 17;
  const auto manifest = make_dataset(testsup::fresh_dir("report_means"), cfg, 3, 320);
  REQUIRE(manifest.records.size() == 3);

  const auto report = evaluate_dataset(manifest.records);
  REQUIRE(report.rows.size() == 3);
  double lsd_sum = 0, sdr_sum = 0, stoi_sum = 0;
  for (const auto& r : report.rows) {
    CHECK(r.lsd >= 0.0);
    CHECK(std::isfinite(r.si_sdr_db));
    CHECK(r.stoi >= -1.0);
    CHECK(r.stoi <= 1.0);
    lsd_sum += r.lsd;
    sdr_sum += r.si_sdr_db;
    stoi_sum += r.stoi;
  }
  REQUIRE(report.means.size() == 1);
  CHECK(report.means[0].clips == 3);
  CHECK(report.means[0].lsd == lsd_sum / 3.0);
  CHECK(report.means[0].si_sdr_db == sdr_sum / 3.0);
  CHECK(report.means[0].stoi == stoi_sum / 3.0);

  const auto threaded = evaluate_dataset(manifest.records, {}, {}, 3);
  REQUIRE(threaded.rows.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(rows_equal(threaded.rows[i], report.rows[i]));
  }
}

TEST_CASE("CSV and JSONL reports parse back to equal rows and means") {
  SimConfig cfg;
  cfg.sensor_rate = 1000;
  cfg.clip_seconds = 0.8;
  cfg.add_noise = true;
  cfg.seed = 23;
  const auto root = testsup::fresh_dir("report_rt");
  const auto manifest = make_dataset(root, cfg, 2, 330);

  auto report = evaluate_dataset(manifest.records);
  REQUIRE(report.rows.size() == 2);
  // Exercise the reserved columns and the non-finite path.
  report.rows[0].pesq = 3.25;
  report.rows[1].nisqa_mos = 1.78;
  report.rows[1].si_sdr_db = std::numeric_limits<double>::infinity();

  const auto csv = (root / "report.csv").string();
  write_report_csv(report, csv);
  const auto from_csv = read_report_csv(csv);
  REQUIRE(from_csv.size() == report.rows.size());
  for (size_t i = 0; i < from_csv.size(); ++i) {
    CHECK(rows_equal(from_csv[i], report.rows[i]));
  }

  const auto jsonl = (root / "report.jsonl").string();
  write_report_jsonl(report, jsonl);
  const auto from_jsonl = read_report_jsonl(jsonl);
  REQUIRE(from_jsonl.size() == report.rows.size());
  for (size_t i = 0; i < from_jsonl.size(); ++i) {
    CHECK(rows_equal(from_jsonl[i], report.rows[i]));
  }

  // Aggregating the parsed rows reproduces the report's means.
  const auto means = aggregate_rows(from_csv);
  REQUIRE(means.size() == 1);
  CHECK(means[0].clips == 2);
  CHECK(means[0].lsd == aggregate_rows(report.rows)[0].lsd);
  CHECK(means[0].stoi == aggregate_rows(report.rows)[0].stoi);
}

TEST_CASE("unreadable or mismatched clips are skipped with reasons") {
  SimConfig cfg;
  cfg.sensor_rate = 8000;
  cfg.clip_seconds = 1.0;
  const auto root = testsup::fresh_dir("report_skip");
  const auto manifest = make_dataset(root, cfg, 2, 340);

  auto records = manifest.records;
  DatasetRecord missing = records[0];
  missing.clean_path = (root / "nope.wav").string();
  records.push_back(missing);
  DatasetRecord mismatched = records[1];
  mismatched.degraded_path = (root / "short.wav").string();
  write_wav(mismatched.degraded_path, std::vector<double>(100, 0.1), 8000);
  records.push_back(mismatched);

  const auto report = evaluate_dataset(records);
  CHECK(report.rows.size() == 2);
  REQUIRE(report.skipped.size() == 2);
  CHECK(report.skipped[0].reason.find("cannot open") != std::string::npos);
  CHECK(report.skipped[1].reason.find("lengths differ") != std::string::npos);
}

TEST_CASE("report readers reject junk") {
  const auto dir = testsup::fresh_dir("report_junk");
  CHECK_THROWS_AS(read_report_csv((dir / "missing.csv").string()), IoError);
  CHECK_THROWS_AS(read_report_jsonl((dir / "missing.jsonl").string()), IoError);

  const auto bad_header = (dir / "h.csv").string();
  std::ofstream(bad_header) << "who,what\n";
  CHECK_THROWS_AS(read_report_csv(bad_header), IoError);

  const auto bad_cols = (dir / "c.csv").string();
  std::ofstream(bad_cols) << kReportCsvHeader << "\nclip,raw,1.0\n";
  CHECK_THROWS_AS(read_report_csv(bad_cols), IoError);

  const auto bad_num = (dir / "n.csv").string();
  std::ofstream(bad_num) << kReportCsvHeader << "\nclip,raw,abc,1.0,1.0,,\n";
  CHECK_THROWS_AS(read_report_csv(bad_num), IoError);

  const auto bad_json = (dir / "b.jsonl").string();
  std::ofstream(bad_json) << "{\"clip_id\": \"x\"}\n";
  CHECK_THROWS_AS(read_report_jsonl(bad_json), IoError);

  MetricReport awkward;
  awkward.rows.push_back(MetricRow{"has,comma", "raw", 0, 0, 0, {}, {}});
  CHECK_THROWS_AS(write_report_csv(awkward, (dir / "a.csv").string()), IoError);
}
