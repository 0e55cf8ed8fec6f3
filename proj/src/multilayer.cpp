#include "uqf/multilayer.hpp"

#include "uqf/text.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <ranges>
#include <sstream>

namespace uqf {

void FeatureFlags::validate() const {
  if (!use_x && !use_y && !use_sigma_y) throw ConfigError("at least one of x, y, sigma_y must feed the second layer");
}

RotationAngle::RotationAngle(double degrees) : degrees_(degrees) {
  if (!(degrees >= 0.0 && degrees <= 90.0)) throw ConfigError("rotation angle must lie in [0, 90] degrees");
}

Standardizer Standardizer::fit(const Vector& y, const Vector& sigma) {
  auto moments = [](const Vector& v) {
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().mean());
    return std::pair{mean, sd};
  };
  Standardizer s;
  std::tie(s.mean_y, s.std_y) = moments(y);
  std::tie(s.mean_sigma, s.std_sigma) = moments(sigma);
  return s;
}

MultilayerModel assemble_multilayer(std::optional<ForestModel> layer1, ForestModel layer2, FeatureFlags flags,
                                    std::optional<Standardizer> standardizer, std::optional<RotationAngle> theta,
                                    bool oob_mode, Index n_inputs) {
  flags.validate();
  if (theta && !(flags.use_y && flags.use_sigma_y)) throw ConfigError("rotation needs both y and sigma_y channels");
  if (flags.uses_layer1() && !layer1) throw ConfigError("flags need a first layer");
  MultilayerModel m;
  m.layer1_ = std::move(layer1);
  m.layer2_ = std::move(layer2);
  m.flags_ = flags;
  m.standardizer_ = standardizer;
  m.theta_ = theta;
  m.oob_mode_ = oob_mode;
  m.n_inputs_ = n_inputs;
  const Index expected = (flags.use_x ? n_inputs : 0) + flags.use_y + flags.use_sigma_y;
  if (m.layer2_.n_features() != expected) throw ConfigError("layer-2 feature count does not match flags");
  return m;
}

std::vector<std::string> MultilayerModel::layer2_feature_names() const {
  std::vector<std::string> names;
  if (flags_.use_x) {
    if (n_inputs_ == 1)
      names.emplace_back("x");
    else
      for (Index j = 0; j < n_inputs_; ++j) names.push_back("x" + std::to_string(j));
  }
  const bool rotated = theta_ && theta_->degrees() != 0.0;
  if (flags_.use_y) names.emplace_back(rotated ? "y_rot" : "y");
  if (flags_.use_sigma_y) names.emplace_back(rotated ? "sigma_y_rot" : "sigma_y");
  return names;
}

namespace {

Matrix design_matrix(const FeatureFlags& flags, const std::optional<Standardizer>& standardizer,
                     const std::optional<RotationAngle>& theta, const Matrix& x, const EnsemblePrediction& out) {
  const Index nx = flags.use_x ? x.cols() : 0;
  Matrix f(x.rows(), nx + flags.use_y + flags.use_sigma_y);
  if (flags.use_x) f.leftCols(nx) = x;
  if (!flags.uses_layer1()) return f;
  for (Index i = 0; i < x.rows(); ++i) {
    double y = out.mean(i), s = out.std(i);
    if (standardizer) {
      y = standardizer->y(y);
      s = standardizer->sigma(s);
    }
    if (theta) {
      const auto r = rotate(y, s, *theta);
      y = r(0);
      s = r(1);
    }
    Index c = nx;
    if (flags.use_y) f(i, c++) = y;
    if (flags.use_sigma_y) f(i, c) = s;
  }
  return f;
}

}  // namespace

Matrix MultilayerModel::layer2_features(const Matrix& x, const EnsemblePrediction& out) const {
  return design_matrix(flags_, standardizer_, theta_, x, out);
}

namespace {

struct Layer1Fit {
  std::optional<ForestModel> model;
  EnsemblePrediction train_out;
  std::optional<Standardizer> standardizer;
};

void check_options(const Dataset& train, const MultilayerOptions& o) {
  o.flags.validate();
  if (o.theta && !(o.flags.use_y && o.flags.use_sigma_y))
    throw ConfigError("rotation needs both y and sigma_y channels");
  train.validate();
  if (!train.has_z()) throw FitError("training data has no final target column");
  if (o.flags.uses_layer1() && !train.has_y()) throw FitError("training data has no intermediate target column");
}

Layer1Fit fit_layer1(const Dataset& train, const MultilayerOptions& o) {
  Layer1Fit l1;
  if (!o.flags.uses_layer1()) return l1;
  l1.model = fit_forest(train.x, *train.y, o.hp);
  l1.train_out = o.oob_mode ? predict_out_of_bag(*l1.model, train.x) : predict_forest_rows(*l1.model, train.x);
  if (o.standardize) l1.standardizer = Standardizer::fit(l1.train_out.mean, l1.train_out.std);
  return l1;
}

MultilayerModel fit_layer2(const Dataset& train, const MultilayerOptions& o, const Layer1Fit& l1) {
  const auto rows = train.masked_rows();
  if (static_cast<Index>(rows.size()) < o.hp.min_samples_leaf)
    throw FitError("only " + std::to_string(rows.size()) + " rows carry Z, fewer than min_samples_leaf " +
                   std::to_string(o.hp.min_samples_leaf));
  if (rows.empty()) throw FitError("no rows carry Z");

  const Matrix all_features = design_matrix(o.flags, l1.standardizer, o.theta, train.x, l1.train_out);
  Matrix features(static_cast<Index>(rows.size()), all_features.cols());
  Vector z(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    features.row(static_cast<Index>(i)) = all_features.row(rows[i]);
    z(static_cast<Index>(i)) = (*train.z)(rows[i]);
  }
  ForestModel layer2 = fit_forest(features, z, o.hp);
  return assemble_multilayer(l1.model, std::move(layer2), o.flags, l1.standardizer, o.theta, o.oob_mode,
                             train.features());
}

/// Z-bearing rows, with Z hidden outside the middle block along X.
struct BlockedData {
  Dataset data;
  std::vector<Index> validation;
  Index train_rows = 0;
};

BlockedData blocked(const Dataset& train) {
  train.validate();
  if (!train.has_z()) throw FitError("training data has no final target column");
  const auto rows = train.masked_rows();
  BlockedData b;
  b.data = train.select_rows(rows);
  const auto split = blocking_split(b.data.x.col(0));
  b.data.z_mask.setConstant(false);
  for (Index r : split.train) b.data.z_mask(r) = true;
  b.validation = split.validation;
  b.train_rows = static_cast<Index>(split.train.size());
  return b;
}

double score_outer(const MultilayerModel& model, const BlockedData& b) {
  Matrix xv(static_cast<Index>(b.validation.size()), b.data.x.cols());
  Vector zv(xv.rows());
  for (std::size_t i = 0; i < b.validation.size(); ++i) {
    xv.row(static_cast<Index>(i)) = b.data.x.row(b.validation[i]);
    zv(static_cast<Index>(i)) = (*b.data.z)(b.validation[i]);
  }
  return r2(zv, predict_multilayer_rows(model, xv).mean);
}

}  // namespace

MultilayerModel fit_multilayer(const Dataset& train, const MultilayerOptions& options) {
  check_options(train, options);
  return fit_layer2(train, options, fit_layer1(train, options));
}

EnsemblePrediction predict_multilayer_rows(const MultilayerModel& model, const Matrix& queries) {
  if (queries.cols() != model.n_inputs())
    throw QueryError("queries have " + std::to_string(queries.cols()) + " features, model expects " +
                     std::to_string(model.n_inputs()));
  EnsemblePrediction l1;
  if (model.flags().uses_layer1()) l1 = predict_forest_rows(*model.layer1(), queries);
  return predict_forest_rows(model.layer2(), model.layer2_features(queries, l1));
}

PredictionWithUncertainty predict_multilayer(const MultilayerModel& model, const Vector& x_query) {
  if (x_query.size() != model.n_inputs())
    throw QueryError("query has " + std::to_string(x_query.size()) + " features, model expects " +
                     std::to_string(model.n_inputs()));
  const Matrix row = x_query.transpose();
  auto p = predict_multilayer_rows(model, row);
  return {p.mean(0), p.std(0)};
}

double multilayer_blocking_cv(const Dataset& train, const MultilayerOptions& options) {
  check_options(train, options);
  const BlockedData b = blocked(train);
  MultilayerOptions o = options;
  o.hp = clamp_leaf(o.hp, b.train_rows);
  return score_outer(fit_multilayer(b.data, o), b);
}

TuningResult tune_multilayer_leaf(const Dataset& train, const MultilayerOptions& options,
                                  const std::vector<Index>& candidates) {
  check_options(train, options);
  const BlockedData b = blocked(train);
  return tune_leaf_size(candidates, MetricKind::r2, [&](Index c) {
    MultilayerOptions o = options;
    o.hp.min_samples_leaf = c;
    o.hp = clamp_leaf(o.hp, b.train_rows);
    return score_outer(fit_multilayer(b.data, o), b);
  });
}

ThetaScan scan_theta(const Dataset& train, const MultilayerOptions& options, const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("empty rotation-angle grid");
  if (!(options.flags.use_y && options.flags.use_sigma_y))
    throw ConfigError("rotation tuning needs both y and sigma_y channels");
  MultilayerOptions o = options;
  o.theta = RotationAngle(grid.front());
  check_options(train, o);

  const BlockedData b = blocked(train);
  o.hp = clamp_leaf(o.hp, b.train_rows);
  const Layer1Fit l1 = fit_layer1(b.data, o);  // independent of theta

  ThetaScan scan;
  bool have = false;
  double best_score = 0.0;
  for (double deg : grid) {
    o.theta = RotationAngle(deg);
    const double s = score_outer(fit_layer2(b.data, o, l1), b);
    scan.table.emplace_back(deg, s);
    if (!have || s > best_score || (s == best_score && deg < scan.best.degrees())) {
      have = true;
      best_score = s;
      scan.best = RotationAngle(deg);
    }
  }
  return scan;
}

RotationAngle tune_theta(const Dataset& train, const MultilayerOptions& options, const std::vector<double>& grid) {
  return scan_theta(train, options, grid).best;
}

std::vector<double> default_theta_grid() {
  std::vector<double> g;
  for (int d = 0; d <= 90; d += 5) g.push_back(d);
  return g;
}

namespace {

double channel_importance(const MultilayerModel& model, bool sigma) {
  const auto& f = model.flags();
  if (sigma ? !f.use_sigma_y : !f.use_y)
    throw QueryError(sigma ? "model was fit without the sigma_y channel" : "model was fit without the y channel");
  const Index nx = f.use_x ? model.n_inputs() : 0;
  const Index col = nx + (sigma && f.use_y ? 1 : 0);
  return model.layer2().importances()(col);
}

}  // namespace

double importance_of_sigma(const MultilayerModel& model) { return channel_importance(model, true); }
double importance_of_y(const MultilayerModel& model) { return channel_importance(model, false); }

void save_multilayer(const MultilayerModel& model, std::ostream& out) {
  const auto& f = model.flags();
  out << "uqf-multilayer 1\n";
  out << "inputs " << model.n_inputs() << '\n';
  out << "flags" << (f.use_x ? " x" : "") << (f.use_y ? " y" : "") << (f.use_sigma_y ? " sigma_y" : "") << '\n';
  out << "theta " << (model.theta() ? text::format_double(model.theta()->degrees()) : "none") << '\n';
  if (const auto& s = model.standardizer())
    out << "standardizer " << text::format_double(s->mean_y) << ' ' << text::format_double(s->std_y) << ' '
        << text::format_double(s->mean_sigma) << ' ' << text::format_double(s->std_sigma) << '\n';
  else
    out << "standardizer none\n";
  out << "oob " << (model.oob_mode() ? 1 : 0) << '\n';
  if (model.layer1()) {
    out << "layer1\n";
    save_forest(*model.layer1(), out);
  } else {
    out << "layer1 none\n";
  }
  out << "layer2\n";
  save_forest(model.layer2(), out);
  out << "end-multilayer\n";
}

namespace {

std::vector<std::string> line_fields(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("unexpected end of model, expected '" + key + "'");
  std::istringstream ss(line);
  std::vector<std::string> f;
  for (std::string s; ss >> s;) f.push_back(s);
  if (f.empty() || f[0] != key) throw FormatError("expected '" + key + "', got '" + line + "'");
  return f;
}

double num(const std::string& s) {
  auto v = text::parse_double(s);
  if (!v) throw FormatError("bad number '" + s + "' in model");
  return *v;
}

}  // namespace

MultilayerModel load_multilayer(std::istream& in) {
  auto header = line_fields(in, "uqf-multilayer");
  if (header.size() != 2 || header[1] != "1") throw FormatError("unsupported multilayer format version");
  auto inputs = line_fields(in, "inputs");
  if (inputs.size() != 2) throw FormatError("malformed inputs line");
  const auto n_inputs = text::parse_int<Index>(inputs[1]);
  if (!n_inputs || *n_inputs < 1) throw FormatError("bad input count");

  FeatureFlags flags{false, false, false};
  const auto flag_fields = line_fields(in, "flags");
  for (const auto& name : flag_fields | std::views::drop(1)) {
    if (name == "x")
      flags.use_x = true;
    else if (name == "y")
      flags.use_y = true;
    else if (name == "sigma_y")
      flags.use_sigma_y = true;
    else
      throw FormatError("unknown flag '" + name + "'");
  }

  auto theta_f = line_fields(in, "theta");
  if (theta_f.size() != 2) throw FormatError("malformed theta line");
  std::optional<RotationAngle> theta;
  if (theta_f[1] != "none") theta = RotationAngle(num(theta_f[1]));

  auto st = line_fields(in, "standardizer");
  std::optional<Standardizer> standardizer;
  if (st.size() == 5) {
    standardizer = Standardizer{num(st[1]), num(st[2]), num(st[3]), num(st[4])};
  } else if (st.size() != 2 || st[1] != "none") {
    throw FormatError("malformed standardizer line");
  }

  auto oob = line_fields(in, "oob");
  if (oob.size() != 2 || (oob[1] != "0" && oob[1] != "1")) throw FormatError("malformed oob line");

  auto l1 = line_fields(in, "layer1");
  std::optional<ForestModel> layer1;
  if (l1.size() == 1)
    layer1 = load_forest(in);
  else if (l1.size() != 2 || l1[1] != "none")
    throw FormatError("malformed layer1 line");
  line_fields(in, "layer2");
  ForestModel layer2 = load_forest(in);
  line_fields(in, "end-multilayer");
  if (layer1 && layer1->n_features() != *n_inputs) throw FormatError("layer-1 feature count mismatch");
  try {
    return assemble_multilayer(std::move(layer1), std::move(layer2), flags, standardizer, theta, oob[1] == "1",
                               *n_inputs);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("inconsistent model: ") + e.what());
  }
}

}  // namespace uqf
