#include "uqf/theory.hpp"

#include "uqf/dataset.hpp"
#include "uqf/text.hpp"
#include "uqf/validation.hpp"

#include <fstream>

namespace uqf::theory {

LineFit fit_line(const Vector& x, const Vector& y) {
  const Index n = x.size();
  if (n != y.size()) throw ConfigError("fit_line: length mismatch");
  if (n < 3) throw ConfigError("fit_line needs at least 3 points");
  const double mx = x.mean(), my = y.mean();
  const Vector dx = x.array() - mx;
  const double sxx = dx.squaredNorm();
  if (!(sxx > 0.0)) throw ConfigError("fit_line: x has no spread");
  LineFit f;
  f.slope = dx.dot(y.array().matrix() - Vector::Constant(n, my)) / sxx;
  f.intercept = my - f.slope * mx;
  const Vector resid = y - (f.slope * x).array().matrix() - Vector::Constant(n, f.intercept);
  const double s2 = resid.squaredNorm() / static_cast<double>(n - 2);
  f.slope_se = std::sqrt(s2 / sxx);
  f.intercept_se = std::sqrt(s2 * (1.0 / static_cast<double>(n) + mx * mx / sxx));
  return f;
}

double linear_delta_y(const LengthscaleConfig& config) {
  return (config.x_max - config.x_min) / static_cast<double>(config.n_points - 1);
}

LengthscaleResult lengthscale_experiment(const std::vector<double>& sigmas, const LengthscaleConfig& config) {
  if (sigmas.empty()) throw ConfigError("no sigma values");
  if (config.repeats < 1) throw ConfigError("repeats must be positive");
  std::vector<Index> candidates = config.candidates;
  if (candidates.empty())
    for (Index c = 1; c <= std::min<Index>(150, config.n_points); ++c) candidates.push_back(c);

  LengthscaleResult result;
  result.delta_y = linear_delta_y(config);
  std::uint64_t stream = 0;
  for (double sigma : sigmas) {
    for (Index rep = 0; rep < config.repeats; ++rep) {
      GeneratorConfig g;
      g.kind = TargetKind::linear_plus_noise;
      g.n_points = config.n_points;
      g.x_min = config.x_min;
      g.x_max = config.x_max;
      g.noise = NoiseSpec{NoiseDistribution::gaussian, 0.0, sigma};
      g.seed = mix_seed(config.seed, stream++);
      const Dataset d = generate(g);

      ForestHyperparams base;
      base.n_trees = config.n_trees;
      base.seed = g.seed;
      const auto tuned = tune_min_samples_leaf(d.x, *d.y, CvScheme{CvScheme::Kind::kfold, config.k}, candidates,
                                               MetricKind::mse, base, g.seed);
      LengthscaleRow row;
      row.sigma = sigma;
      row.seed = g.seed;
      row.n_opt = tuned.best_min_samples_leaf;
      row.ratio_sq = (sigma / result.delta_y) * (sigma / result.delta_y);
      row.lhs = eq2_lhs(row.n_opt, config.k, 1.0);
      result.rows.push_back(row);
    }
  }
  Vector xs(static_cast<Index>(result.rows.size())), ys(xs.size());
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    xs(static_cast<Index>(i)) = result.rows[i].ratio_sq;
    ys(static_cast<Index>(i)) = result.rows[i].lhs;
  }
  if (xs.size() >= 3) result.fit = fit_line(xs, ys);
  return result;
}

void write_lengthscale_csv(const LengthscaleResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "sigma,n_opt,lhs,ratio_sq\n";
  for (const auto& r : result.rows)
    out << text::format_double(r.sigma) << ',' << r.n_opt << ',' << text::format_double(r.lhs) << ','
        << text::format_double(r.ratio_sq) << '\n';
}

}  // namespace uqf::theory
