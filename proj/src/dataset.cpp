#include "uqf/dataset.hpp"

#include "uqf/text.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace uqf {

namespace {

bool all_finite(const Vector& v) { return v.array().isFinite().all(); }

}  // namespace

void Dataset::validate() const {
  if (x.rows() < 1) throw ConfigError("dataset has no rows");
  if (x.cols() < 1) throw ConfigError("dataset has no feature columns");
  if (!x.array().isFinite().all()) throw ConfigError("non-finite feature value");
  if (y) {
    if (y->size() != x.rows()) throw ConfigError("y row count differs from x");
    if (!all_finite(*y)) throw ConfigError("non-finite y value");
  }
  if (z) {
    if (z->size() != x.rows()) throw ConfigError("z row count differs from x");
    if (z_mask.size() != x.rows()) throw ConfigError("z_mask length differs from row count");
    for (Index i = 0; i < x.rows(); ++i)
      if (z_mask(i) && !std::isfinite((*z)(i))) throw ConfigError("non-finite z value");
  }
}

Dataset Dataset::select_rows(std::span<const Index> idx) const {
  Dataset out;
  const auto n = static_cast<Index>(idx.size());
  out.x.resize(n, x.cols());
  for (Index i = 0; i < n; ++i) out.x.row(i) = x.row(idx[i]);
  if (y) {
    out.y = Vector(n);
    for (Index i = 0; i < n; ++i) (*out.y)(i) = (*y)(idx[i]);
  }
  if (z) {
    out.z = Vector(n);
    out.z_mask.resize(n);
    for (Index i = 0; i < n; ++i) {
      (*out.z)(i) = (*z)(idx[i]);
      out.z_mask(i) = z_mask(idx[i]);
    }
  }
  return out;
}

std::vector<Index> Dataset::masked_rows() const {
  std::vector<Index> out;
  if (!z) return out;
  for (Index i = 0; i < rows(); ++i)
    if (z_mask(i)) out.push_back(i);
  return out;
}

std::vector<Index> Dataset::unmasked_rows() const {
  std::vector<Index> out;
  if (!z) return out;
  for (Index i = 0; i < rows(); ++i)
    if (!z_mask(i)) out.push_back(i);
  return out;
}

void GeneratorConfig::validate() const {
  if (n_points < 2) throw ConfigError("n_points must be at least 2");
  if (periods && !(*periods > 0.0)) throw ConfigError("periods must be positive");
  double lo = periods ? -*periods : x_min;
  if (!(lo < x_max)) throw ConfigError("x_min must be below x_max");
  if (!(b >= 0.0)) throw ConfigError("b must be non-negative");
  if (!(noise.scale >= 0.0)) throw ConfigError("noise scale must be non-negative");
}

GeneratorConfig cos2_config(TargetKind kind, double periods, std::uint64_t seed,
                            Index points_per_period) {
  GeneratorConfig c;
  c.kind = kind;
  c.periods = periods;
  c.x_min = -periods;
  c.x_max = 0.5;
  c.n_points = static_cast<Index>(std::lround(points_per_period * (periods + 0.5))) + 1;
  c.seed = seed;
  return c;
}

double cos2_target(double x) {
  // half-angle form is exact at the zeros and maxima of cos²(πx)
  return 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * x));
}

Vector sample_noise(const NoiseSpec& spec, Index n, std::uint64_t seed) {
  if (!(spec.scale >= 0.0)) throw ConfigError("noise scale must be non-negative");
  if (n < 1) throw ConfigError("noise sample count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    double e = 0.0;
    switch (spec.distribution) {
      case NoiseDistribution::gaussian:
        e = normal(rng);
        break;
      case NoiseDistribution::cauchy:
        e = std::tan(std::numbers::pi * (unit(rng) - 0.5));
        break;
      case NoiseDistribution::uniform:
        // mean 0, std 1: width sqrt(12)
        e = std::sqrt(3.0) * (2.0 * unit(rng) - 1.0);
        break;
      case NoiseDistribution::exponential:
        // rate 1 shifted to mean 0; std 1
        e = -std::log1p(-unit(rng)) - 1.0;
        break;
    }
    out(i) = spec.location + spec.scale * e;
  }
  return out;
}

Dataset generate(const GeneratorConfig& config) {
  config.validate();
  const Index n = config.n_points;
  const double lo = config.periods ? -*config.periods : config.x_min;
  const double hi = config.x_max;

  Dataset d;
  d.x.resize(n, 1);
  for (Index i = 0; i < n; ++i)
    d.x(i, 0) = (i == n - 1) ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);

  auto column = d.x.col(0);
  NoiseSpec unit = config.noise;
  switch (config.kind) {
    case TargetKind::white_noise:
      d.y = sample_noise(config.noise, n, config.seed);
      return d;
    case TargetKind::linear_plus_noise:
      d.y = column + sample_noise(config.noise, n, config.seed);
      return d;
    default:
      break;
  }

  Vector z = column.unaryExpr([](double v) { return cos2_target(v); });
  unit.location = 0.0;
  unit.scale = 1.0;
  switch (config.kind) {
    case TargetKind::cos2_mediated:
      d.y = z;
      break;
    case TargetKind::cos2_sigma_encoded:
      d.y = z.cwiseAbs().cwiseProduct(sample_noise(unit, n, config.seed));
      break;
    case TargetKind::cos2_combined:
      d.y = z + config.b * z.cwiseAbs().cwiseProduct(sample_noise(unit, n, config.seed));
      break;
    default:
      break;
  }
  d.z = z;
  d.z_mask = (column.array() <= 0.0);
  return d;
}

CsvSchema default_schema(const Dataset& dataset) {
  CsvSchema s;
  s.x_columns.clear();
  if (dataset.features() == 1) {
    s.x_columns.push_back("x");
  } else {
    for (Index j = 0; j < dataset.features(); ++j) s.x_columns.push_back("x" + std::to_string(j));
  }
  s.y_column = dataset.has_y() ? std::optional<std::string>("y") : std::nullopt;
  s.z_column = dataset.has_z() ? std::optional<std::string>("z") : std::nullopt;
  return s;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
  if (dataset.rows() < 1) throw IoError("refusing to write a dataset with no rows");
  dataset.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());

  const CsvSchema schema = default_schema(dataset);
  for (std::size_t j = 0; j < schema.x_columns.size(); ++j) out << (j ? "," : "") << schema.x_columns[j];
  if (schema.y_column) out << ',' << *schema.y_column;
  if (schema.z_column) out << ',' << *schema.z_column;
  out << '\n';

  for (Index i = 0; i < dataset.rows(); ++i) {
    for (Index j = 0; j < dataset.features(); ++j)
      out << (j ? "," : "") << text::format_double(dataset.x(i, j));
    if (dataset.y) out << ',' << text::format_double((*dataset.y)(i));
    if (dataset.z) {
      out << ',';
      if (dataset.z_mask(i)) out << text::format_double((*dataset.z)(i));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset read_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty CSV file: " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header;
  for (auto cell : text::split(line, ',')) header.emplace_back(text::trim(cell));

  auto locate = [&](const std::string& name) -> std::size_t {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    throw SchemaError("missing column '" + name + "' in " + path.string());
  };
  if (schema.x_columns.empty()) throw SchemaError("schema names no x column");
  std::vector<std::size_t> xcol;
  for (const auto& name : schema.x_columns) xcol.push_back(locate(name));
  std::optional<std::size_t> ycol, zcol;
  if (schema.y_column) ycol = locate(*schema.y_column);
  if (schema.z_column) zcol = locate(*schema.z_column);

  std::vector<double> xs, ys, zs;
  std::vector<bool> mask;
  Index row = 0;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    ++row;
    auto cells = text::split(line, ',');
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(cells.size()),
                       row);
    auto numeric = [&](std::size_t j, const std::string& what) {
      auto v = text::parse_double(cells[j]);
      if (!v || !std::isfinite(*v)) throw ParseError("non-numeric " + what + " cell '" + std::string(cells[j]) + "'", row);
      return *v;
    };
    for (std::size_t k = 0; k < xcol.size(); ++k) xs.push_back(numeric(xcol[k], "x"));
    if (ycol) ys.push_back(numeric(*ycol, "y"));
    if (zcol) {
      if (text::trim(cells[*zcol]).empty()) {
        zs.push_back(std::numeric_limits<double>::quiet_NaN());
        mask.push_back(false);
      } else {
        zs.push_back(numeric(*zcol, "z"));
        mask.push_back(true);
      }
    }
  }
  if (row == 0) throw SchemaError("CSV has a header but no data rows: " + path.string());

  Dataset d;
  const auto nf = static_cast<Index>(xcol.size());
  d.x.resize(row, nf);
  for (Index i = 0; i < row; ++i)
    for (Index j = 0; j < nf; ++j) d.x(i, j) = xs[static_cast<std::size_t>(i * nf + j)];
  if (ycol) d.y = Eigen::Map<const Vector>(ys.data(), row);
  if (zcol) {
    d.z = Eigen::Map<const Vector>(zs.data(), row);
    d.z_mask.resize(row);
    for (Index i = 0; i < row; ++i) d.z_mask(i) = mask[static_cast<std::size_t>(i)];
  }
  return d;
}

std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::white_noise: return "white-noise";
    case TargetKind::linear_plus_noise: return "linear";
    case TargetKind::cos2_mediated: return "cos2-mediated";
    case TargetKind::cos2_sigma_encoded: return "cos2-sigma";
    case TargetKind::cos2_combined: return "cos2-combined";
  }
  return "?";
}

std::string to_string(NoiseDistribution d) {
  switch (d) {
    case NoiseDistribution::gaussian: return "gaussian";
    case NoiseDistribution::cauchy: return "cauchy";
    case NoiseDistribution::uniform: return "uniform";
    case NoiseDistribution::exponential: return "exponential";
  }
  return "?";
}

TargetKind parse_target_kind(std::string_view name) {
  for (auto k : {TargetKind::white_noise, TargetKind::linear_plus_noise, TargetKind::cos2_mediated,
                 TargetKind::cos2_sigma_encoded, TargetKind::cos2_combined})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown target kind '" + std::string(name) + "'");
}

NoiseDistribution parse_noise_distribution(std::string_view name) {
  for (auto d : {NoiseDistribution::gaussian, NoiseDistribution::cauchy, NoiseDistribution::uniform,
                 NoiseDistribution::exponential})
    if (to_string(d) == name) return d;
  throw ConfigError("unknown noise distribution '" + std::string(name) + "'");
}

}  // namespace uqf
