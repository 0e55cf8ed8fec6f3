#pragma once

#include "uqf/core.hpp"
#include "uqf/dataset.hpp"
#include "uqf/forest.hpp"
#include "uqf/validation.hpp"

#include <cmath>
#include <iosfwd>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace uqf {

/// Which channels the second layer sees: the raw input X, the first layer's
/// prediction Y and its ensemble uncertainty sigma_Y.
struct FeatureFlags {
  bool use_x = true;
  bool use_y = false;
  bool use_sigma_y = false;

  bool uses_layer1() const { return use_y || use_sigma_y; }
  void validate() const;
};

/// Mixing angle in the standardized (Y, sigma_Y) plane, degrees in [0, 90].
class RotationAngle {
 public:
  RotationAngle() = default;
  explicit RotationAngle(double degrees);
  double degrees() const { return degrees_; }
  double radians() const { return degrees_ * std::numbers::pi / 180.0; }

 private:
  double degrees_ = 0.0;
};

/// (y, sigma) -> (cos t * y - sin t * sigma, sin t * y + cos t * sigma).
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> rotate(Scalar y, Scalar sigma, RotationAngle theta) {
  Scalar c, s;
  if (theta.degrees() == 0.0) {
    c = Scalar(1), s = Scalar(0);
  } else if (theta.degrees() == 90.0) {
    c = Scalar(0), s = Scalar(1);
  } else {
    c = static_cast<Scalar>(std::cos(theta.radians()));
    s = static_cast<Scalar>(std::sin(theta.radians()));
  }
  Eigen::Matrix<Scalar, 2, 2> r;
  r << c, -s, s, c;
  return r * Eigen::Matrix<Scalar, 2, 1>(y, sigma);
}

/// Centering/scaling of the first-layer outputs. A channel with zero spread
/// is only centered.
struct Standardizer {
  double mean_y = 0.0;
  double std_y = 1.0;
  double mean_sigma = 0.0;
  double std_sigma = 1.0;

  static Standardizer fit(const Vector& y, const Vector& sigma);
  double y(double v) const { return std_y > 0.0 ? (v - mean_y) / std_y : v - mean_y; }
  double sigma(double v) const { return std_sigma > 0.0 ? (v - mean_sigma) / std_sigma : v - mean_sigma; }
};

struct MultilayerOptions {
  FeatureFlags flags;
  ForestHyperparams hp;  // shared by both layers
  std::optional<RotationAngle> theta;
  bool oob_mode = false;  // layer-2 training features from out-of-bag layer-1 predictions
  bool standardize = true;
};

class MultilayerModel {
 public:
  const std::optional<ForestModel>& layer1() const { return layer1_; }
  const ForestModel& layer2() const { return layer2_; }
  const FeatureFlags& flags() const { return flags_; }
  const std::optional<Standardizer>& standardizer() const { return standardizer_; }
  const std::optional<RotationAngle>& theta() const { return theta_; }
  const ForestHyperparams& hyperparams() const { return layer2_.hyperparams(); }
  bool oob_mode() const { return oob_mode_; }
  Index n_inputs() const { return n_inputs_; }

  /// Names of the layer-2 columns in order, e.g. {"x", "y", "sigma_y"}.
  std::vector<std::string> layer2_feature_names() const;

  /// Layer-2 design matrix for inputs `x` given layer-1 outputs at those rows.
  Matrix layer2_features(const Matrix& x, const EnsemblePrediction& layer1_out) const;

 private:
  friend MultilayerModel assemble_multilayer(std::optional<ForestModel>, ForestModel, FeatureFlags,
                                             std::optional<Standardizer>, std::optional<RotationAngle>, bool,
                                             Index);
  std::optional<ForestModel> layer1_;
  ForestModel layer2_;
  FeatureFlags flags_;
  std::optional<Standardizer> standardizer_;
  std::optional<RotationAngle> theta_;
  bool oob_mode_ = false;
  Index n_inputs_ = 0;
};

MultilayerModel assemble_multilayer(std::optional<ForestModel> layer1, ForestModel layer2, FeatureFlags flags,
                                    std::optional<Standardizer> standardizer, std::optional<RotationAngle> theta,
                                    bool oob_mode, Index n_inputs);

/// Layer 1 learns X -> Y on every row; layer 2 learns Z on rows with z_mask
/// set, from X and/or the (standardized, optionally rotated) layer-1 outputs.
MultilayerModel fit_multilayer(const Dataset& train, const MultilayerOptions& options);

PredictionWithUncertainty predict_multilayer(const MultilayerModel& model, const Vector& x_query);
EnsemblePrediction predict_multilayer_rows(const MultilayerModel& model, const Matrix& queries);

/// Blocking CV of the whole pipeline on the Z-bearing rows: Y stays visible
/// on all of them, Z only on the middle block; R² is scored on the outer
/// blocks. min_samples_leaf is clamped to the middle block's size.
double multilayer_blocking_cv(const Dataset& train, const MultilayerOptions& options);

/// min_samples_leaf by blocking-CV R², with the options' theta held fixed.
TuningResult tune_multilayer_leaf(const Dataset& train, const MultilayerOptions& options,
                                  const std::vector<Index>& candidates);

struct ThetaScan {
  RotationAngle best;
  std::vector<std::pair<double, double>> table;  // (degrees, blocking-CV R²)
};

/// Grid search over the rotation angle at fixed hyperparameters. Ties go to
/// the smaller angle.
ThetaScan scan_theta(const Dataset& train, const MultilayerOptions& options, const std::vector<double>& grid_degrees);
RotationAngle tune_theta(const Dataset& train, const MultilayerOptions& options,
                         const std::vector<double>& grid_degrees);

/// 0, 5, ..., 90 degrees.
std::vector<double> default_theta_grid();

/// Layer-2 importance of the sigma_Y channel (the rotated one when theta != 0).
double importance_of_sigma(const MultilayerModel& model);
/// Layer-2 importance of the Y channel (the rotated one when theta != 0).
double importance_of_y(const MultilayerModel& model);

void save_multilayer(const MultilayerModel& model, std::ostream& out);
MultilayerModel load_multilayer(std::istream& in);

}  // namespace uqf
