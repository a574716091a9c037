#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lskd/config.hpp"
#include "lskd/metrics.hpp"
#include "lskd/training.hpp"

namespace lskd {

// --out wins, then $LSKD_OUT_ROOT/<subcommand>, then ./lskd_out/<subcommand>.
std::filesystem::path resolve_out_dir(const Config& cfg, const std::string& subcommand);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

struct GenerateOutcome {
  std::filesystem::path dataset_path;
  std::uint64_t fingerprint = 0;
  std::string summary;  // printed by the CLI
};

GenerateOutcome run_generate(const Config& cfg);

struct TrainOutcome {
  std::filesystem::path out_dir;
  TrainResult result;
  EvalReport test_report;
};

TrainOutcome run_train(const Config& cfg);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;

  bool operator==(const MeanStd&) const = default;
};

struct SweepCell {
  double alpha = 0.0;
  double tau = 0.0;
  double interval = 0.0;
  std::size_t num_seeds = 0;
  bool failed = false;
  MeanStd mr50, mr100, r50, r100, mean_metric;

  bool operator==(const SweepCell&) const = default;
};

struct SweepOutcome {
  std::filesystem::path out_dir;
  std::vector<SweepCell> cells;
  std::size_t failures = 0;  // cells with at least one failed run
  std::vector<std::string> errors;
};

SweepOutcome run_sweep(const Config& cfg);

std::string sweep_csv(const std::vector<SweepCell>& cells);
std::vector<SweepCell> parse_sweep_csv(const std::string& text);
std::string sweep_markdown(const std::vector<SweepCell>& cells);

struct TrendCheck {
  std::string metric;
  std::string axis;
  bool strictly_increasing = false;
  bool strictly_decreasing = false;
};

// Directional check over non-failed sweep cells sorted by `axis`; the other
// two axes must be constant across the sweep.
std::vector<TrendCheck> trend_checks(const std::vector<SweepCell>& cells,
                                     const std::string& axis);

struct ReportOutcome {
  std::filesystem::path out_dir;
  std::string markdown;
  std::string json;
};

ReportOutcome run_report(const Config& cfg);

}  // namespace lskd
