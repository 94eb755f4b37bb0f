#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "captrack/datagen.hpp"
#include "captrack/geometry.hpp"
#include "captrack/sensor.hpp"

namespace captrack {

inline const std::vector<std::size_t>& default_layer_sizes() {
  static const std::vector<std::size_t> sizes{kWindowSize, 400, 400, 400, 400, 4};
  return sizes;
}

/// Per-channel z-score statistics applied to every time step of a window.
struct InputNormalization {
  std::array<double, kChannels> mean{};
  std::array<double, kChannels> stddev{1, 1, 1, 1, 1, 1};

  static constexpr double kStdFloor = 1e-8;
  static InputNormalization fit(const Dataset& data, const std::vector<std::size_t>& rows);

  bool operator==(const InputNormalization&) const = default;
};

/// Fully connected ReLU network weights plus input normalization. Hidden
/// layers use ReLU, the output layer is linear. Training runs in float; the
/// double instantiation backs gradient checking and hand-computed tests.
template <typename T>
struct BasicMlpParams {
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  std::vector<std::size_t> layer_sizes = default_layer_sizes();
  std::vector<Matrix> weights;  // weights[l] is sizes[l+1] x sizes[l]
  std::vector<Vector> biases;
  InputNormalization norm;
  Material trained_mode = Material::air_gown;

  /// Zero weights and biases with the given shape.
  static BasicMlpParams zeros(const std::vector<std::size_t>& sizes = default_layer_sizes());
  /// Uniform He fan-in initialization, biases zero.
  static BasicMlpParams he_uniform(std::uint64_t seed, const std::vector<std::size_t>& sizes = default_layer_sizes());

  std::size_t num_layers() const { return weights.size(); }
  std::size_t num_parameters() const;
  /// Throws InvalidArgument when shapes do not match layer_sizes.
  void validate() const;

  template <typename U>
  BasicMlpParams<U> cast() const;

  bool operator==(const BasicMlpParams& other) const;
};

using MlpParams = BasicMlpParams<float>;
using MlpParamsD = BasicMlpParams<double>;

/// Forward pass on one raw window (length layer_sizes.front()). Throws
/// NonFiniteInput for NaN/inf inputs.
template <typename T>
RelPose predict(const BasicMlpParams<T>& params, std::span<const double> window);

/// Raw network output for one window, no interpretation.
template <typename T>
Vec4 forward_raw(const BasicMlpParams<T>& params, std::span<const double> window);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Per-output loss weights for (p_y, p_z, theta_y, theta_z).
  std::array<double, 4> output_weights{1.0, 1.0, 1.0, 1.0};
  std::vector<std::size_t> layer_sizes = default_layer_sizes();

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation split
};

struct TrainResult {
  MlpParams params;  // best validation epoch
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Adam on weighted MSE with a 90/10 split by collection iteration. Throws
/// EmptyDataset. Deterministic for a given seed.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Continues training from `init` (keeping its normalization).
TrainResult train_from(const MlpParams& init, const Dataset& data, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {});

/// Per-output RMSE of `params` on the records selected by `rows`.
template <typename T>
std::array<double, 4> rmse(const BasicMlpParams<T>& params, const Dataset& data, const std::vector<std::size_t>& rows);

/// Row indices of the train / validation split.
std::vector<std::size_t> training_rows(const Dataset& data);
std::vector<std::size_t> validation_rows(const Dataset& data);

void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path);

/// One mini-batch for gradient checking: raw windows as columns, targets as columns.
struct GradBatch {
  Eigen::MatrixXd inputs;   // sizes.front() x B
  Eigen::MatrixXd targets;  // 4 x B
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_near_kink = 0;
};

/// Analytic gradients of the (unweighted) MSE against central differences on
/// randomly chosen parameters. Parameters whose perturbation crosses a ReLU
/// kink, or that feed a pre-activation within `kink_margin` of zero, are
/// skipped and resampled.
GradCheckReport grad_check(const MlpParamsD& params, const GradBatch& batch, std::size_t n_params = 200,
                           double step = 1e-5, std::uint64_t seed = 0, double kink_margin = 1e-4);

/// Analytic gradients for the whole parameter vector, laid out layer by layer
/// as weights (column-major) then biases. Exposed for tests.
std::vector<double> mse_gradient(const MlpParamsD& params, const GradBatch& batch);
double mse_loss(const MlpParamsD& params, const GradBatch& batch);

void save_model(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_model(const std::filesystem::path& path);

}  // namespace captrack
