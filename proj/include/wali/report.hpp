// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Corpus-level evaluation: per-clip LSD / SI-SDR / STOI rows for the
// degraded channel and, when a reconstruction model is supplied, for its
// output, plus per-condition arithmetic means and CSV / JSON-lines
// serialization that parses back exactly.

#pragma once

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "wali/channel_sim.hpp"
#include "wali/errors.hpp"
#include "wali/metrics.hpp"
#include "wali/wav_io.hpp"

namespace wali {

struct EvalConfig {
  StftConfig lsd_stft{512, 128, 512};
  double lsd_eps = 1e-9;
};

struct MetricRow {
  std::string clip_id;
  std::string condition;  // "raw" or "reconstructed"
  double lsd = 0;
  double si_sdr_db = 0;
  double stoi = 0;
  std::optional<double> pesq;       // reserved: merged from external tools, never computed here
  std::optional<double> nisqa_mos;  // reserved likewise
};

struct ConditionMean {
  std::string condition;
  int64_t clips = 0;
  double lsd = 0;
  double si_sdr_db = 0;
  double stoi = 0;
};

struct MetricReport {
  EvalConfig config;
  std::vector<MetricRow> rows;
  std::vector<ConditionMean> means;
  std::vector<SkippedFile> skipped;
};

// Arithmetic means per condition, conditions ordered by first appearance.
inline std::vector<ConditionMean> aggregate_rows(const std::vector<MetricRow>& rows) {
  std::vector<ConditionMean> means;
  for (const MetricRow& r : rows) {
    ConditionMean* m = nullptr;
    for (ConditionMean& c : means) {
      if (c.condition == r.condition) m = &c;
    }
    if (!m) {
      means.push_back(ConditionMean{r.condition, 0, 0, 0, 0});
      m = &means.back();
    }
    m->clips += 1;
    m->lsd += r.lsd;
    m->si_sdr_db += r.si_sdr_db;
    m->stoi += r.stoi;
  }
  for (ConditionMean& c : means) {
    c.lsd /= double(c.clips);
    c.si_sdr_db /= double(c.clips);
    c.stoi /= double(c.clips);
  }
  return means;
}

// Waveform in, reconstruction out, at the given rate and the same length.
using ReconstructFn = std::function<std::vector<double>(const std::vector<double>&, int64_t)>;

namespace detail {

inline std::string clip_id_of(const std::string& clean_path) {
  std::string id = std::filesystem::path(clean_path).stem().string();
  if (id.size() > 6 && id.ends_with("_clean")) {
    id.resize(id.size() - 6);
  }
  return id;
}

}  // namespace detail

// Two rows per clip when a model is supplied ("raw" then "reconstructed"),
// one otherwise. Clips whose files are missing, mismatched, or too short to
// score are skipped with a logged warning. Workers split the clips when
// jobs > 1; row order stays the manifest order regardless.
inline MetricReport evaluate_dataset(const std::vector<DatasetRecord>& manifest,
                                     const ReconstructFn& model = {},
                                     const EvalConfig& cfg = {}, int jobs = 1) {
  if (jobs < 1) {
    throw ConfigError("evaluate_dataset: jobs must be at least 1");
  }
  struct Slot {
    std::vector<MetricRow> rows;
    std::optional<SkippedFile> skip;
  };
  std::vector<Slot> slots(manifest.size());
  std::atomic<size_t> next{0};
  std::atomic<bool> poisoned{false};
  std::exception_ptr model_error;
  std::mutex error_mu;
  auto work = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= manifest.size() || poisoned.load()) return;
      const DatasetRecord& rec = manifest[i];
      try {
        const Wav clean = read_wav(rec.clean_path);
        const Wav degraded = read_wav(rec.degraded_path);
        if (clean.sample_rate != degraded.sample_rate) {
          throw IoError("sample rates differ: " + std::to_string(clean.sample_rate) + " vs " +
                        std::to_string(degraded.sample_rate));
        }
        if (clean.samples.size() != degraded.samples.size()) {
          throw IoError("lengths differ: " + std::to_string(clean.samples.size()) + " vs " +
                        std::to_string(degraded.samples.size()));
        }
        const std::string id = detail::clip_id_of(rec.clean_path);
        auto score = [&](const std::vector<double>& est, const char* condition) {
          MetricRow row;
          row.clip_id = id;
          row.condition = condition;
          row.lsd = lsd(clean.samples, est, cfg.lsd_stft, cfg.lsd_eps);
          row.si_sdr_db = si_sdr(clean.samples, est);
          row.stoi = stoi(clean.samples, est, int(clean.sample_rate));
          return row;
        };
        slots[i].rows.push_back(score(degraded.samples, "raw"));
        if (model) {
          const auto rebuilt = model(degraded.samples, degraded.sample_rate);
          if (rebuilt.size() != degraded.samples.size()) {
            // A broken model contract poisons the whole report instead of
            // shrinking it; rethrown once the pool has drained.
            const std::scoped_lock lock(error_mu);
            if (!model_error) {
              model_error = std::make_exception_ptr(std::invalid_argument(
                  "evaluate_dataset: model returned " + std::to_string(rebuilt.size()) +
                  " samples for " + std::to_string(degraded.samples.size())));
            }
            poisoned.store(true);
            return;
          }
          slots[i].rows.push_back(score(rebuilt, "reconstructed"));
        }
      } catch (const std::exception& e) {
        slots[i].rows.clear();
        slots[i].skip = SkippedFile{rec.clean_path, e.what()};
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
  if (model_error) {
    std::rethrow_exception(model_error);
  }

  MetricReport report;
  report.config = cfg;
  for (Slot& s : slots) {
    if (s.skip) {
      std::cerr << "warning: skipping clip " << s.skip->path << ": " << s.skip->reason << "\n";
      report.skipped.push_back(std::move(*s.skip));
    } else {
      for (MetricRow& r : s.rows) report.rows.push_back(std::move(r));
    }
  }
  report.means = aggregate_rows(report.rows);
  return report;
}

namespace detail {

// Shortest exact decimal form; infinities spelled so strtod reads them back.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": bad number '" + s + "'");
  }
}

inline void check_csv_safe(const std::string& s, const char* what) {
  if (s.find_first_of(",\"\n\r") != std::string::npos) {
    throw IoError(std::string("report: ") + what + " '" + s + "' needs CSV quoting, refusing");
  }
}

}  // namespace detail

inline constexpr const char* kReportCsvHeader =
    "clip_id,condition,lsd,si_sdr_db,stoi,pesq,nisqa_mos";

inline void write_report_csv(const MetricReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) {
    throw IoError("write_report_csv: cannot write " + path);
  }
  f << kReportCsvHeader << "\n";
  for (const MetricRow& r : report.rows) {
    detail::check_csv_safe(r.clip_id, "clip id");
    detail::check_csv_safe(r.condition, "condition");
    f << r.clip_id << ',' << r.condition << ',' << detail::fmt_double(r.lsd) << ','
      << detail::fmt_double(r.si_sdr_db) << ',' << detail::fmt_double(r.stoi) << ','
      << (r.pesq ? detail::fmt_double(*r.pesq) : "") << ','
      << (r.nisqa_mos ? detail::fmt_double(*r.nisqa_mos) : "") << "\n";
  }
  if (!f.flush()) {
    throw IoError("write_report_csv: cannot write " + path);
  }
}

inline std::vector<MetricRow> read_report_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    throw IoError("read_report_csv: cannot open " + path);
  }
  std::string line;
  if (!std::getline(f, line) || line != kReportCsvHeader) {
    throw IoError("read_report_csv: " + path + ": unexpected header");
  }
  std::vector<MetricRow> rows;
  for (int64_t no = 2; std::getline(f, line); ++no) {
    if (line.empty()) continue;
    std::vector<std::string> cell;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        cell.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (cell.size() != 7) {
      throw IoError("read_report_csv: " + path + " line " + std::to_string(no) +
                    ": expected 7 columns, got " + std::to_string(cell.size()));
    }
    const std::string where = path + " line " + std::to_string(no);
    MetricRow r;
    r.clip_id = cell[0];
    r.condition = cell[1];
    r.lsd = detail::parse_double(cell[2], where);
    r.si_sdr_db = detail::parse_double(cell[3], where);
    r.stoi = detail::parse_double(cell[4], where);
    if (!cell[5].empty()) r.pesq = detail::parse_double(cell[5], where);
    if (!cell[6].empty()) r.nisqa_mos = detail::parse_double(cell[6], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace detail {

// JSON numbers cannot hold infinities, so non-finite metrics travel as the
// same strings the CSV uses.
inline nlohmann::json metric_json(double v) {
  if (std::isfinite(v)) return v;
  return fmt_double(v);
}

inline double metric_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return parse_double(j.get<std::string>(), where);
  throw IoError(where + ": expected a number");
}

}  // namespace detail

inline void write_report_jsonl(const MetricReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) {
    throw IoError("write_report_jsonl: cannot write " + path);
  }
  for (const MetricRow& r : report.rows) {
    nlohmann::json j;
    j["clip_id"] = r.clip_id;
    j["condition"] = r.condition;
    j["lsd"] = detail::metric_json(r.lsd);
    j["si_sdr_db"] = detail::metric_json(r.si_sdr_db);
    j["stoi"] = detail::metric_json(r.stoi);
    if (r.pesq) j["pesq"] = detail::metric_json(*r.pesq);
    if (r.nisqa_mos) j["nisqa_mos"] = detail::metric_json(*r.nisqa_mos);
    f << j.dump() << "\n";
  }
  if (!f.flush()) {
    throw IoError("write_report_jsonl: cannot write " + path);
  }
}

inline std::vector<MetricRow> read_report_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    throw IoError("read_report_jsonl: cannot open " + path);
  }
  std::vector<MetricRow> rows;
  std::string line;
  for (int64_t no = 1; std::getline(f, line); ++no) {
    if (line.empty()) continue;
    const std::string where = path + " line " + std::to_string(no);
    try {
      const auto j = nlohmann::json::parse(line);
      MetricRow r;
      r.clip_id = j.at("clip_id").get<std::string>();
      r.condition = j.at("condition").get<std::string>();
      r.lsd = detail::metric_from_json(j.at("lsd"), where);
      r.si_sdr_db = detail::metric_from_json(j.at("si_sdr_db"), where);
      r.stoi = detail::metric_from_json(j.at("stoi"), where);
      if (j.contains("pesq")) r.pesq = detail::metric_from_json(j.at("pesq"), where);
      if (j.contains("nisqa_mos")) r.nisqa_mos = detail::metric_from_json(j.at("nisqa_mos"), where);
      rows.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(where + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace wali
