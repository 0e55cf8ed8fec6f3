#pragma once

#include "uqf/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace uqf::experiments {

/// One threshold comparison. `comparison` is one of <, <=, >, >=, ==, in;
/// for "in" the accepted range is [threshold, threshold_hi].
struct Check {
  std::string name;
  double value = 0.0;
  std::string comparison;
  double threshold = 0.0;
  double threshold_hi = 0.0;
  bool pass = false;
};

Check make_check(std::string name, double value, std::string comparison, double threshold, double threshold_hi = 0.0);

struct ExperimentReport {
  std::string experiment;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, double> metrics;
  std::vector<Check> checks;
  std::map<std::string, std::string> config;
  std::vector<std::filesystem::path> artifacts;
  double runtime_seconds = 0.0;

  bool pass() const;
  const Check* find_check(const std::string& name) const;
};

std::string to_json(const ExperimentReport& report);

struct ExperimentOptions {
  std::vector<std::uint64_t> seeds;              // empty: experiment default
  std::optional<std::filesystem::path> out_dir;  // artifacts are written only when set
  std::optional<std::filesystem::path> data;     // CSV for the real-data experiments
  CsvSchema schema;                              // overrides for real-data column names
  bool schema_given = false;
  NoiseDistribution noise = NoiseDistribution::gaussian;  // fig8, fig9
  std::vector<double> b_values;                           // fig10; empty: default sweep
  std::vector<double> periods;                            // fig9; empty: default sweep
  Index points_per_period = 500;
  bool oob_mode = false;
};

/// fig4 fig5 fig7 fig8 fig9 fig10 dielectric diffraction
const std::vector<std::string>& experiment_names();

/// Seeds 1..count.
std::vector<std::uint64_t> seed_range(std::size_t count);

/// Runs the named protocol and, when options.out_dir is set, writes
/// <name>_report.json plus plot-ready CSV and SVG files there.
ExperimentReport run_experiment(const std::string& name, const ExperimentOptions& options);

ExperimentReport fig4(const ExperimentOptions& options);
ExperimentReport fig5(const ExperimentOptions& options);
ExperimentReport fig7(const ExperimentOptions& options);
ExperimentReport fig8(const ExperimentOptions& options);
ExperimentReport fig9(const ExperimentOptions& options);
ExperimentReport fig10(const ExperimentOptions& options);
ExperimentReport dielectric(const ExperimentOptions& options);
ExperimentReport diffraction(const ExperimentOptions& options);

// Validation-curve summaries used by fig8/fig9.

/// Smallest prediction over the validation rows.
double min_prediction(const Vector& prediction);

/// X at which the validation predictions first leave the band within 5% of
/// the prediction range below their starting value; the plateau runs from
/// the first validation X up to there. Rows must be sorted by X.
double plateau_extent(const Vector& x, const Vector& prediction);

double pearson(const Vector& a, const Vector& b);
double median(std::vector<double> values);

}  // namespace uqf::experiments
