#pragma once

#include "uqf/core.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace uqf {

/// Feature matrix X with an optional intermediate target Y and an optional
/// final target Z. Rows where `z_mask` is false have no usable Z; generated
/// data still stores the true Z there so held-out predictions can be scored.
struct Dataset {
  Matrix x;
  std::optional<Vector> y;
  std::optional<Vector> z;
  Mask z_mask;

  Index rows() const { return x.rows(); }
  Index features() const { return x.cols(); }
  bool has_y() const { return y.has_value(); }
  bool has_z() const { return z.has_value(); }

  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  Dataset select_rows(std::span<const Index> rows) const;
  std::vector<Index> masked_rows() const;    // z present
  std::vector<Index> unmasked_rows() const;  // z missing
};

enum class NoiseDistribution { gaussian, cauchy, uniform, exponential };

/// Noise with mean `location` and standard deviation `scale`; for Cauchy,
/// which has neither, `location` and `scale` are the median and half-width.
struct NoiseSpec {
  NoiseDistribution distribution = NoiseDistribution::gaussian;
  double location = 0.0;
  double scale = 1.0;
};

enum class TargetKind {
  white_noise,
  linear_plus_noise,
  cos2_mediated,
  cos2_sigma_encoded,
  cos2_combined
};

struct GeneratorConfig {
  Index n_points = 100;
  double x_min = 0.0;
  double x_max = 1.0;
  TargetKind kind = TargetKind::white_noise;
  double b = 0.0;
  // For the cos² kinds: when set, the grid starts at -periods.
  std::optional<double> periods;
  std::uint64_t seed = 0;
  NoiseSpec noise;

  void validate() const;
};

/// Grid for the cos² experiments: [-periods, 0.5] with `points_per_period`
/// samples per unit of X, so X > 0 is the half period held out for scoring.
GeneratorConfig cos2_config(TargetKind kind, double periods, std::uint64_t seed,
                            Index points_per_period = 500);

Dataset generate(const GeneratorConfig& config);

/// Unit-location/unit-scale draw transformed by `spec`.
Vector sample_noise(const NoiseSpec& spec, Index n, std::uint64_t seed);

double cos2_target(double x);

// CSV (comma, dot decimal, one header row). Empty Z cells mean "missing".
struct CsvSchema {
  std::vector<std::string> x_columns{"x"};
  std::optional<std::string> y_column{"y"};
  std::optional<std::string> z_column;
};

Dataset read_csv(const std::filesystem::path& path, const CsvSchema& schema);
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

/// Column names used by write_csv.
CsvSchema default_schema(const Dataset& dataset);

std::string to_string(TargetKind kind);
std::string to_string(NoiseDistribution d);
TargetKind parse_target_kind(std::string_view name);
NoiseDistribution parse_noise_distribution(std::string_view name);

}  // namespace uqf
