#include "uqf/cli.hpp"

#include "uqf/dataset.hpp"
#include "uqf/experiments.hpp"
#include "uqf/forest.hpp"
#include "uqf/multilayer.hpp"
#include "uqf/text.hpp"
#include "uqf/validation.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>

namespace uqf::cli {

namespace fs = std::filesystem;

namespace {

fs::path default_output_dir() {
  if (const char* env = std::getenv("UQF_OUTPUT_DIR"); env && *env) return env;
  return ".";
}

fs::path output_path(const std::string& given, const std::string& fallback_name) {
  if (!given.empty()) return given;
  const fs::path dir = default_output_dir();
  fs::create_directories(dir);
  return dir / fallback_name;
}

struct SchemaArgs {
  std::vector<std::string> x_cols;
  std::string y_col;
  std::string z_col;

  void add(CLI::App* app, bool with_targets = true) {
    app->add_option("--x-col", x_cols, "feature column name (repeatable; default x)");
    if (with_targets) {
      app->add_option("--y-col", y_col, "intermediate target column (default y)");
      app->add_option("--z-col", z_col, "final target column; empty Z cells mark missing values");
    }
  }
  bool given() const { return !x_cols.empty() || !y_col.empty() || !z_col.empty(); }
  CsvSchema schema() const {
    CsvSchema s;
    if (!x_cols.empty()) s.x_columns = x_cols;
    if (!y_col.empty()) s.y_column = y_col;
    if (!z_col.empty()) s.z_column = z_col;
    return s;
  }
};

struct GenerateArgs {
  std::string kind;
  Index n = 0;
  double x_min = 0.0, x_max = 1.0, b = 0.0, mu = 0.0, sigma = 1.0;
  double periods = 0.0;
  std::uint64_t seed = 0;
  std::string noise = "gaussian";
  std::string out;
  CLI::Option* n_opt = nullptr;
  CLI::Option* x_min_opt = nullptr;
  CLI::Option* x_max_opt = nullptr;
  CLI::Option* periods_opt = nullptr;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const TargetKind kind = parse_target_kind(a.kind);
  const bool cos2 = kind == TargetKind::cos2_mediated || kind == TargetKind::cos2_sigma_encoded ||
                    kind == TargetKind::cos2_combined;
  GeneratorConfig c;
  if (cos2 && (*a.periods_opt || (!*a.x_min_opt && !*a.x_max_opt))) {
    c = cos2_config(kind, *a.periods_opt ? a.periods : 1.0, a.seed);
  } else {
    c.kind = kind;
    c.seed = a.seed;
    if (kind == TargetKind::linear_plus_noise) c.x_max = 10.0;
    if (*a.x_min_opt) c.x_min = a.x_min;
    if (*a.x_max_opt) c.x_max = a.x_max;
    if (kind == TargetKind::linear_plus_noise) c.n_points = 1000;
  }
  if (*a.n_opt) c.n_points = a.n;
  c.b = a.b;
  c.noise = {parse_noise_distribution(a.noise), a.mu, a.sigma};
  const Dataset d = generate(c);
  const fs::path path = output_path(a.out, to_string(kind) + ".csv");
  write_csv(d, path);
  out << "wrote " << d.rows() << " rows to " << path.string() << '\n';
  return ok;
}

struct ModelArgs {
  SchemaArgs schema;
  std::string data;
  std::string model;
  bool use_x = false, use_y = false, use_sigma = false, oob = false, tune_theta = false, tune_leaf = false;
  double theta = 0.0;
  CLI::Option* theta_opt = nullptr;
  Index min_samples_leaf = 1;
  Index trees = 125;
  std::uint64_t seed = 0;
};

// Without a Z column the model is a plain forest on Y, stored as an
// x-only multilayer bundle so predict handles both.
Dataset training_data(const ModelArgs& a, bool& has_z) {
  CsvSchema s = a.schema.schema();
  Dataset d = read_csv(a.data, s);
  has_z = d.has_z();
  if (!has_z) {
    if (!d.has_y()) throw SchemaError("need a target column (--y-col or --z-col)");
    d.z = *d.y;
    d.z_mask = Mask::Constant(d.rows(), true);
  }
  return d;
}

int cmd_fit(const ModelArgs& a, std::ostream& out) {
  bool has_z = false;
  const Dataset d = training_data(a, has_z);
  MultilayerOptions o;
  if (a.use_x || a.use_y || a.use_sigma)
    o.flags = {a.use_x, a.use_y, a.use_sigma};
  else
    o.flags = {true, false, false};
  if (!has_z && o.flags.uses_layer1()) throw ConfigError("--use-y/--use-sigma need a Z column (--z-col)");
  o.oob_mode = a.oob;
  o.hp = {a.trees, a.min_samples_leaf, a.seed};
  if (a.theta_opt && *a.theta_opt) o.theta = RotationAngle(a.theta);
  if (a.tune_leaf) {
    const auto candidates = default_candidates(static_cast<Index>(d.masked_rows().size()));
    if (has_z) {
      o.hp.min_samples_leaf = tune_multilayer_leaf(d, o, candidates).best_min_samples_leaf;
    } else {
      o.hp.min_samples_leaf = tune_min_samples_leaf(d.x, *d.z, CvScheme{}, candidates, MetricKind::r2, o.hp, a.seed)
                                  .best_min_samples_leaf;
    }
    out << "tuned min_samples_leaf " << o.hp.min_samples_leaf << '\n';
  }
  if (a.tune_theta) {
    o.theta = tune_theta(d, o, default_theta_grid());
    out << "tuned theta " << text::format_double(o.theta->degrees()) << '\n';
  }
  const MultilayerModel m = fit_multilayer(d, o);
  const fs::path path = output_path(a.model, "model.uqf");
  std::ofstream file(path);
  if (!file) throw IoError("cannot open for writing: " + path.string());
  save_multilayer(m, file);
  out << "wrote model to " << path.string() << '\n';
  return ok;
}

int cmd_predict(const ModelArgs& a, const std::string& out_path, std::ostream& out) {
  std::ifstream file(a.model);
  if (!file) throw IoError("cannot open model: " + a.model);
  const MultilayerModel m = load_multilayer(file);
  CsvSchema s;
  if (!a.schema.x_cols.empty()) s.x_columns = a.schema.x_cols;
  s.y_column.reset();
  const Dataset d = read_csv(a.data, s);
  const auto p = predict_multilayer_rows(m, d.x);

  const fs::path path = output_path(out_path, "predictions.csv");
  std::ofstream csv(path);
  if (!csv) throw IoError("cannot open for writing: " + path.string());
  for (std::size_t j = 0; j < s.x_columns.size(); ++j) csv << (j ? "," : "") << s.x_columns[j];
  csv << ",z_pred,z_std\n";
  for (Index i = 0; i < d.rows(); ++i) {
    for (Index j = 0; j < d.x.cols(); ++j) csv << (j ? "," : "") << text::format_double(d.x(i, j));
    csv << ',' << text::format_double(p.mean(i)) << ',' << text::format_double(p.std(i)) << '\n';
  }
  out << "wrote " << d.rows() << " predictions to " << path.string() << '\n';
  return ok;
}

std::vector<Index> parse_candidates(const std::string& spec, Index rows) {
  if (spec.empty()) return default_candidates(rows);
  std::vector<Index> out;
  for (auto part : text::split(spec, ',')) {
    const auto range = text::split(part, ':');
    if (range.size() == 2) {
      const auto lo = text::parse_int<Index>(range[0]), hi = text::parse_int<Index>(range[1]);
      if (!lo || !hi || *lo > *hi) throw ConfigError("bad candidate range '" + std::string(part) + "'");
      for (Index c = *lo; c <= *hi; ++c) out.push_back(c);
    } else {
      const auto v = text::parse_int<Index>(part);
      if (!v) throw ConfigError("bad candidate '" + std::string(part) + "'");
      out.push_back(*v);
    }
  }
  return out;
}

struct TuneArgs {
  ModelArgs model;
  std::string scheme = "kfold";
  Index k = 5;
  std::string objective = "r2";
  std::string candidates;
  std::string out;
};

int cmd_tune(const TuneArgs& a, std::ostream& out) {
  bool has_z = false;
  const Dataset d = training_data(a.model, has_z);
  CvScheme scheme;
  if (a.scheme == "kfold")
    scheme = {CvScheme::Kind::kfold, a.k};
  else if (a.scheme == "blocking")
    scheme = {CvScheme::Kind::blocking, 3};
  else
    throw ConfigError("unknown CV scheme '" + a.scheme + "' (kfold, blocking)");
  const MetricKind objective = parse_metric(a.objective);
  const auto candidates = parse_candidates(a.candidates, static_cast<Index>(d.masked_rows().size()));
  const ForestHyperparams hp{a.model.trees, 1, a.model.seed};

  TuningResult result;
  const bool multilayer = has_z && (a.model.use_y || a.model.use_sigma);
  if (multilayer) {
    if (scheme.kind != CvScheme::Kind::blocking || objective != MetricKind::r2)
      throw ConfigError("multilayer tuning uses blocking CV with the r2 objective");
    MultilayerOptions o;
    o.flags = {a.model.use_x, a.model.use_y, a.model.use_sigma};
    o.hp = hp;
    o.oob_mode = a.model.oob;
    result = tune_multilayer_leaf(d, o, candidates);
  } else {
    const auto rows = d.masked_rows();
    const Dataset t = d.select_rows(rows);
    result = tune_min_samples_leaf(t.x, *t.z, scheme, candidates, objective, hp, a.model.seed);
  }
  const fs::path path = output_path(a.out, "tuning.csv");
  write_score_table(result, path);
  out << "best min_samples_leaf " << result.best_min_samples_leaf << " (" << to_string(objective) << ' '
      << text::format_double(result.cv_score) << ")\n";
  out << "wrote score table to " << path.string() << '\n';
  return ok;
}

struct ExperimentArgs {
  std::string name;
  std::size_t seeds = 0;
  std::string out_dir;
  std::string data;
  std::string noise = "gaussian";
  std::vector<double> b;
  std::vector<double> periods;
  bool oob = false;
  SchemaArgs schema;
};

int cmd_experiment(const ExperimentArgs& a, std::ostream& out) {
  experiments::ExperimentOptions o;
  if (a.seeds > 0) o.seeds = experiments::seed_range(a.seeds);
  o.out_dir = a.out_dir.empty() ? default_output_dir() : fs::path(a.out_dir);
  if (!a.data.empty()) o.data = a.data;
  if (a.schema.given()) {
    o.schema = a.schema.schema();
    o.schema_given = true;
  }
  o.noise = parse_noise_distribution(a.noise);
  o.b_values = a.b;
  o.periods = a.periods;
  o.oob_mode = a.oob;
  const auto report = experiments::run_experiment(a.name, o);
  out << report.experiment << ": " << (report.pass() ? "PASS" : "FAIL") << " ("
      << text::format_double(std::round(report.runtime_seconds * 10) / 10) << " s)\n";
  for (const auto& [k, v] : report.metrics) out << "  " << k << " = " << text::format_double(v) << '\n';
  for (const auto& c : report.checks)
    out << "  [" << (c.pass ? "pass" : "FAIL") << "] " << c.name << ": " << text::format_double(c.value) << ' '
        << c.comparison << ' '
        << (c.comparison == "in"
                ? "[" + text::format_double(c.threshold) + ", " + text::format_double(c.threshold_hi) + "]"
                : text::format_double(c.threshold))
        << '\n';
  out << "report: " << (*o.out_dir / (report.experiment + "_report.json")).string() << '\n';
  return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Random forests with bootstrap uncertainty and multilayer extrapolation", "uqf"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "write a synthetic dataset as CSV");
  generate_cmd->add_option("--kind", gen.kind, "white-noise, linear, cos2-mediated, cos2-sigma, cos2-combined")
      ->required();
  gen.n_opt = generate_cmd->add_option("--n", gen.n, "number of points");
  gen.x_min_opt = generate_cmd->add_option("--x-min", gen.x_min, "lower end of the X grid");
  gen.x_max_opt = generate_cmd->add_option("--x-max", gen.x_max, "upper end of the X grid");
  generate_cmd->add_option("--b", gen.b, "relative noise amplitude (cos2-combined)");
  gen.periods_opt = generate_cmd->add_option("--periods", gen.periods, "training periods for cos2 kinds");
  generate_cmd->add_option("--seed", gen.seed, "random seed");
  generate_cmd->add_option("--noise", gen.noise, "gaussian, cauchy, uniform, exponential");
  generate_cmd->add_option("--mu", gen.mu, "noise location (white-noise, linear)");
  generate_cmd->add_option("--sigma", gen.sigma, "noise scale (white-noise, linear)");
  generate_cmd->add_option("--out", gen.out, "output CSV (default $UQF_OUTPUT_DIR/<kind>.csv)");

  ModelArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "train a forest or multilayer model");
  fit_cmd->add_option("--data", fit_args.data, "training CSV")->required();
  fit_args.schema.add(fit_cmd);
  fit_cmd->add_flag("--use-x", fit_args.use_x, "second layer sees X");
  fit_cmd->add_flag("--use-y", fit_args.use_y, "second layer sees the first layer's prediction");
  fit_cmd->add_flag("--use-sigma", fit_args.use_sigma, "second layer sees the first layer's uncertainty");
  fit_cmd->add_flag("--oob", fit_args.oob, "build layer-2 training features from out-of-bag predictions");
  fit_args.theta_opt = fit_cmd->add_option("--theta", fit_args.theta, "rotation angle in degrees");
  fit_cmd->add_flag("--tune-theta", fit_args.tune_theta, "pick the rotation angle by blocking CV");
  fit_cmd->add_option("--min-samples-leaf", fit_args.min_samples_leaf, "minimum distinct rows per leaf");
  fit_cmd->add_flag("--tune-leaf", fit_args.tune_leaf, "pick min_samples_leaf by CV first");
  fit_cmd->add_option("--trees", fit_args.trees, "number of trees");
  fit_cmd->add_option("--seed", fit_args.seed, "random seed");
  fit_cmd->add_option("--model", fit_args.model, "output model file (default $UQF_OUTPUT_DIR/model.uqf)");

  ModelArgs predict_args;
  std::string predict_out;
  auto* predict_cmd = app.add_subcommand("predict", "predict with uncertainty from a saved model");
  predict_cmd->add_option("--model", predict_args.model, "model file")->required();
  predict_cmd->add_option("--data", predict_args.data, "CSV with the feature columns")->required();
  predict_args.schema.add(predict_cmd, false);
  predict_cmd->add_option("--out", predict_out, "predictions CSV (default $UQF_OUTPUT_DIR/predictions.csv)");

  TuneArgs tune_args;
  auto* tune_cmd = app.add_subcommand("tune", "grid-search min_samples_leaf");
  tune_cmd->add_option("--data", tune_args.model.data, "training CSV")->required();
  tune_args.model.schema.add(tune_cmd);
  tune_cmd->add_flag("--use-x", tune_args.model.use_x, "multilayer: second layer sees X");
  tune_cmd->add_flag("--use-y", tune_args.model.use_y, "multilayer: second layer sees Y");
  tune_cmd->add_flag("--use-sigma", tune_args.model.use_sigma, "multilayer: second layer sees sigma_Y");
  tune_cmd->add_flag("--oob", tune_args.model.oob, "multilayer: out-of-bag layer-2 features");
  tune_cmd->add_option("--scheme", tune_args.scheme, "kfold or blocking");
  tune_cmd->add_option("--k", tune_args.k, "folds for kfold");
  tune_cmd->add_option("--objective", tune_args.objective, "r2 or mse");
  tune_cmd->add_option("--candidates", tune_args.candidates, "e.g. 1:100 or 5,10,25 (default grid from row count)");
  tune_cmd->add_option("--trees", tune_args.model.trees, "number of trees");
  tune_cmd->add_option("--seed", tune_args.model.seed, "random seed");
  tune_cmd->add_option("--out", tune_args.out, "score table CSV (default $UQF_OUTPUT_DIR/tuning.csv)");

  ExperimentArgs exp_args;
  auto* exp_cmd = app.add_subcommand("experiment", "run a scripted experiment and write its report");
  exp_cmd->add_option("name", exp_args.name, "fig4 fig5 fig7 fig8 fig9 fig10 dielectric diffraction")->required();
  exp_cmd->add_option("--seeds", exp_args.seeds, "number of master seeds (1..N)");
  exp_cmd->add_option("--out-dir", exp_args.out_dir, "artifact directory (default $UQF_OUTPUT_DIR or .)");
  exp_cmd->add_option("--data", exp_args.data, "CSV for dielectric/diffraction");
  exp_cmd->add_option("--noise", exp_args.noise, "noise distribution for fig8/fig9");
  exp_cmd->add_option("--b", exp_args.b, "b values for fig10 (repeatable)");
  exp_cmd->add_option("--periods", exp_args.periods, "training periods for fig9 (repeatable)");
  exp_cmd->add_flag("--oob", exp_args.oob, "out-of-bag layer-2 features");
  exp_args.schema.add(exp_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return config_error;
  }

  try {
    if (*generate_cmd) return cmd_generate(gen, out);
    if (*fit_cmd) return cmd_fit(fit_args, out);
    if (*predict_cmd) return cmd_predict(predict_args, predict_out, out);
    if (*tune_cmd) return cmd_tune(tune_args, out);
    if (*exp_cmd) return cmd_experiment(exp_args, out);
  } catch (const MissingDataError& e) {
    err << "error: " << e.what() << '\n';
    return missing_data;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return config_error;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return data_error;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return data_error;
  }
  return config_error;
}

}  // namespace uqf::cli
