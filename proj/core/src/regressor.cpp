#include "captrack/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

#include "captrack/binary_io.hpp"
#include "captrack/errors.hpp"
#include "captrack/rng.hpp"

namespace captrack {

namespace {

constexpr std::string_view kModelMagic{"CAPMODEL", 8};
constexpr std::uint32_t kModelVersion = 1;
constexpr std::size_t kOutputs = 4;

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// Adam's second moments decay into the subnormal range late in training,
// which costs an order of magnitude per operation on x86.
class FlushDenormals {
 public:
#if defined(__SSE__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }  // FTZ | DAZ
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

template <typename T>
void normalize_into(const InputNormalization& norm, std::span<const double> window, T* out) {
  for (std::size_t i = 0; i < window.size(); ++i) {
    const std::size_t ch = i % kChannels;
    out[i] = static_cast<T>((window[i] - norm.mean[ch]) / norm.stddev[ch]);
  }
}

// Forward pass over a batch of columns, keeping pre-activations for backprop.
template <typename T>
struct Activations {
  std::vector<Mat<T>> pre;   // z_l for l = 0..L-1
  std::vector<Mat<T>> post;  // a_0 = input, a_l = relu(z_{l-1})
};

template <typename T>
void forward_batch(const BasicMlpParams<T>& p, const Mat<T>& input, Activations<T>& acts) {
  const std::size_t layers = p.num_layers();
  acts.pre.resize(layers);
  acts.post.resize(layers);
  acts.post[0] = input;
  for (std::size_t l = 0; l < layers; ++l) {
    acts.pre[l].noalias() = p.weights[l] * acts.post[l];
    acts.pre[l].colwise() += p.biases[l];
    if (l + 1 < layers) acts.post[l + 1] = acts.pre[l].cwiseMax(T(0));
  }
}

// d(loss)/d(params) given d(loss)/d(output).
template <typename T>
void backward_batch(const BasicMlpParams<T>& p, const Activations<T>& acts, Mat<T> delta, std::vector<Mat<T>>& grad_w,
                    std::vector<typename BasicMlpParams<T>::Vector>& grad_b) {
  const std::size_t layers = p.num_layers();
  grad_w.resize(layers);
  grad_b.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    grad_w[l].noalias() = delta * acts.post[l].transpose();
    grad_b[l] = delta.rowwise().sum();
    if (l > 0) {
      Mat<T> upstream = p.weights[l].transpose() * delta;
      delta = upstream.cwiseProduct((acts.pre[l - 1].array() > T(0)).matrix().template cast<T>());
    }
  }
}

std::vector<std::size_t> split_rows(const Dataset& data, bool validation) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (is_validation_iteration(data.iteration(i)) == validation) rows.push_back(i);
  return rows;
}

template <typename T>
Mat<T> normalized_columns(const InputNormalization& norm, const Dataset& data, const std::vector<std::size_t>& rows) {
  Mat<T> out(static_cast<Eigen::Index>(kWindowSize), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) normalize_into(norm, data.window(rows[c]), out.col(c).data());
  return out;
}

template <typename T>
Mat<T> target_columns(const Dataset& data, const std::vector<std::size_t>& rows) {
  Mat<T> out(static_cast<Eigen::Index>(kOutputs), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) out.col(c) = data.target(rows[c]).as_vector().cast<T>();
  return out;
}

// Weighted MSE over a column range, evaluated in chunks to bound memory.
template <typename T>
double evaluate_loss(const BasicMlpParams<T>& p, const Mat<T>& x, const Mat<T>& y, const Eigen::Array<T, 4, 1>& w) {
  if (x.cols() == 0) return std::numeric_limits<double>::quiet_NaN();
  constexpr Eigen::Index kChunk = 2048;
  Activations<T> acts;
  double total = 0.0;
  for (Eigen::Index start = 0; start < x.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, x.cols() - start);
    forward_batch(p, Mat<T>(x.middleCols(start, n)), acts);
    const auto diff = (acts.pre.back() - y.middleCols(start, n)).array();
    total += static_cast<double>((diff.square().colwise() * w).sum());
  }
  return total / static_cast<double>(x.cols() * kOutputs);
}

}  // namespace

InputNormalization InputNormalization::fit(const Dataset& data, const std::vector<std::size_t>& rows) {
  InputNormalization norm;
  if (rows.empty()) return norm;
  std::array<double, kChannels> sum{};
  for (std::size_t r : rows) {
    const auto w = data.window(r);
    for (std::size_t i = 0; i < w.size(); ++i) sum[i % kChannels] += w[i];
  }
  const double count = static_cast<double>(rows.size() * kWindowSteps);
  for (std::size_t c = 0; c < kChannels; ++c) norm.mean[c] = sum[c] / count;
  std::array<double, kChannels> sq{};
  for (std::size_t r : rows) {
    const auto w = data.window(r);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = w[i] - norm.mean[i % kChannels];
      sq[i % kChannels] += d * d;
    }
  }
  for (std::size_t c = 0; c < kChannels; ++c) norm.stddev[c] = std::max(std::sqrt(sq[c] / count), kStdFloor);
  return norm;
}

template <typename T>
BasicMlpParams<T> BasicMlpParams<T>::zeros(const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) throw InvalidArgument("network needs at least an input and an output layer");
  BasicMlpParams p;
  p.layer_sizes = sizes;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    p.weights.push_back(Matrix::Zero(static_cast<Eigen::Index>(sizes[l + 1]), static_cast<Eigen::Index>(sizes[l])));
    p.biases.push_back(Vector::Zero(static_cast<Eigen::Index>(sizes[l + 1])));
  }
  return p;
}

template <typename T>
BasicMlpParams<T> BasicMlpParams<T>::he_uniform(std::uint64_t seed, const std::vector<std::size_t>& sizes) {
  BasicMlpParams p = zeros(sizes);
  std::mt19937_64 gen(splitmix64(seed));
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(sizes[l]));
    Matrix& w = p.weights[l];
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<T>(uniform(gen, -limit, limit));
  }
  return p;
}

template <typename T>
std::size_t BasicMlpParams<T>::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

template <typename T>
void BasicMlpParams<T>::validate() const {
  if (layer_sizes.size() < 2 || weights.size() + 1 != layer_sizes.size() || biases.size() != weights.size())
    throw InvalidArgument("layer count mismatch");
  if (layer_sizes.front() % kChannels != 0 || layer_sizes.back() != kOutputs)
    throw InvalidArgument("input must be whole time steps and output must be 4-dimensional");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != static_cast<Eigen::Index>(layer_sizes[l + 1]) ||
        weights[l].cols() != static_cast<Eigen::Index>(layer_sizes[l]) ||
        biases[l].size() != static_cast<Eigen::Index>(layer_sizes[l + 1]))
      throw InvalidArgument("weight shape mismatch");
  }
  for (double s : norm.stddev)
    if (!(s >= InputNormalization::kStdFloor)) throw InvalidArgument("normalization stddev below floor");
}

template <typename T>
template <typename U>
BasicMlpParams<U> BasicMlpParams<T>::cast() const {
  BasicMlpParams<U> out;
  out.layer_sizes = layer_sizes;
  out.norm = norm;
  out.trained_mode = trained_mode;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.weights.push_back(weights[l].template cast<U>());
    out.biases.push_back(biases[l].template cast<U>());
  }
  return out;
}

template <typename T>
bool BasicMlpParams<T>::operator==(const BasicMlpParams& other) const {
  if (layer_sizes != other.layer_sizes || !(norm == other.norm) || trained_mode != other.trained_mode ||
      weights.size() != other.weights.size())
    return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].size() != other.weights[l].size() || biases[l].size() != other.biases[l].size()) return false;
    if (std::memcmp(weights[l].data(), other.weights[l].data(), sizeof(T) * weights[l].size()) != 0) return false;
    if (std::memcmp(biases[l].data(), other.biases[l].data(), sizeof(T) * biases[l].size()) != 0) return false;
  }
  return true;
}

template <typename T>
Vec4 forward_raw(const BasicMlpParams<T>& params, std::span<const double> window) {
  if (window.size() != params.layer_sizes.front()) throw InvalidArgument("window size does not match the network input");
  for (double v : window)
    if (!std::isfinite(v)) throw NonFiniteInput("window contains a non-finite value");
  typename BasicMlpParams<T>::Vector a(static_cast<Eigen::Index>(window.size()));
  normalize_into(params.norm, window, a.data());
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    typename BasicMlpParams<T>::Vector z = params.weights[l] * a + params.biases[l];
    a = l + 1 < params.num_layers() ? typename BasicMlpParams<T>::Vector(z.cwiseMax(T(0))) : z;
  }
  return a.template cast<double>();
}

template <typename T>
RelPose predict(const BasicMlpParams<T>& params, std::span<const double> window) {
  return RelPose::from_vector(forward_raw(params, window));
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw InvalidArgument("epochs and batch size must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (layer_sizes.size() < 2 || layer_sizes.front() != kWindowSize || layer_sizes.back() != kOutputs)
    throw InvalidArgument("layer sizes must map 300 inputs to 4 outputs");
}

std::vector<std::size_t> training_rows(const Dataset& data) { return split_rows(data, false); }
std::vector<std::size_t> validation_rows(const Dataset& data) { return split_rows(data, true); }

TrainResult train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (data.empty()) throw EmptyDataset("cannot train on an empty dataset");
  cfg.validate();
  MlpParams init = MlpParams::he_uniform(cfg.seed, cfg.layer_sizes);
  init.norm = InputNormalization::fit(data, training_rows(data));
  init.trained_mode = data.mode(0);
  return train_from(init, data, cfg, on_epoch);
}

TrainResult train_from(const MlpParams& init, const Dataset& data, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  if (data.empty()) throw EmptyDataset("cannot train on an empty dataset");
  cfg.validate();
  init.validate();
  const FlushDenormals flush;

  const auto train_idx = training_rows(data);
  const auto val_idx = validation_rows(data);
  if (train_idx.empty()) throw EmptyDataset("no training records after the validation split");

  using Matrix = MlpParams::Matrix;
  using Vector = MlpParams::Vector;
  const Matrix x_train = normalized_columns<float>(init.norm, data, train_idx);
  const Matrix y_train = target_columns<float>(data, train_idx);
  const Matrix x_val = normalized_columns<float>(init.norm, data, val_idx);
  const Matrix y_val = target_columns<float>(data, val_idx);
  const Eigen::Array<float, 4, 1> weights(static_cast<float>(cfg.output_weights[0]),
                                          static_cast<float>(cfg.output_weights[1]),
                                          static_cast<float>(cfg.output_weights[2]),
                                          static_cast<float>(cfg.output_weights[3]));

  MlpParams params = init;
  const std::size_t layers = params.num_layers();
  std::vector<Matrix> m_w(layers), v_w(layers);
  std::vector<Vector> m_b(layers), v_b(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    m_w[l] = v_w[l] = Matrix::Zero(params.weights[l].rows(), params.weights[l].cols());
    m_b[l] = v_b[l] = Vector::Zero(params.biases[l].size());
  }

  TrainResult result;
  result.params = params;
  double best = std::numeric_limits<double>::infinity();

  std::mt19937_64 gen(splitmix64(derive_seed(cfg.seed, 1)));
  std::vector<std::size_t> order(train_idx.size());
  std::iota(order.begin(), order.end(), 0);

  Activations<float> acts;
  std::vector<Matrix> grad_w;
  std::vector<Vector> grad_b;
  Matrix xb, yb;
  const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
  const float eps = static_cast<float>(cfg.epsilon);
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(gen, i)]);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto n = static_cast<Eigen::Index>(std::min<std::size_t>(cfg.batch_size, order.size() - start));
      xb.resize(x_train.rows(), n);
      yb.resize(y_train.rows(), n);
      for (Eigen::Index c = 0; c < n; ++c) {
        xb.col(c) = x_train.col(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(c)]));
        yb.col(c) = y_train.col(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(c)]));
      }
      forward_batch(params, xb, acts);
      const Matrix diff = acts.pre.back() - yb;
      const float scale = 2.0f / static_cast<float>(n * static_cast<Eigen::Index>(kOutputs));
      Matrix delta = (diff.array().colwise() * weights).matrix() * scale;
      loss_sum += static_cast<double>((diff.array().square().colwise() * weights).sum());
      loss_count += static_cast<std::size_t>(n) * kOutputs;

      backward_batch(params, acts, std::move(delta), grad_w, grad_b);

      ++step;
      const float lr_t = static_cast<float>(cfg.learning_rate * std::sqrt(1.0 - std::pow(cfg.beta2, step)) /
                                            (1.0 - std::pow(cfg.beta1, step)));
      const float eps_t = eps * static_cast<float>(std::sqrt(1.0 - std::pow(cfg.beta2, step)));
      const auto adam = [&](float* w, float* m, float* v, const float* g, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) {
          m[i] = b1 * m[i] + (1.0f - b1) * g[i];
          v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
          w[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps_t);
        }
      };
      for (std::size_t l = 0; l < layers; ++l) {
        adam(params.weights[l].data(), m_w[l].data(), v_w[l].data(), grad_w[l].data(), grad_w[l].size());
        adam(params.biases[l].data(), m_b[l].data(), v_b[l].data(), grad_b[l].data(), grad_b[l].size());
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(loss_count);
    stats.val_loss = evaluate_loss(params, x_val, y_val, weights);
    result.history.push_back(stats);
    const double selection = val_idx.empty() ? stats.train_loss : stats.val_loss;
    if (selection < best) {
      best = selection;
      result.params = params;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

template <typename T>
std::array<double, 4> rmse(const BasicMlpParams<T>& params, const Dataset& data, const std::vector<std::size_t>& rows) {
  std::array<double, 4> sq{};
  for (std::size_t r : rows) {
    const Vec4 err = forward_raw(params, data.window(r)) - data.target(r).as_vector();
    for (int k = 0; k < 4; ++k) sq[k] += err[k] * err[k];
  }
  for (auto& v : sq) v = rows.empty() ? 0.0 : std::sqrt(v / static_cast<double>(rows.size()));
  return sq;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "epoch,train_loss,val_loss\n" << std::setprecision(17);
  for (const auto& h : history) out << h.epoch << ',' << h.train_loss << ',' << h.val_loss << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

Eigen::MatrixXd normalized_batch(const MlpParamsD& p, const GradBatch& batch) {
  Eigen::MatrixXd x(batch.inputs.rows(), batch.inputs.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const std::span<const double> col(batch.inputs.col(c).data(), static_cast<std::size_t>(batch.inputs.rows()));
    normalize_into(p.norm, col, x.col(c).data());
  }
  return x;
}

double batch_loss(const MlpParamsD& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Activations<double>& acts) {
  forward_batch(p, x, acts);
  return (acts.pre.back() - y).squaredNorm() / static_cast<double>(y.size());
}

// Locates flat parameter index `k` in the layer-by-layer layout.
struct ParamRef {
  std::size_t layer;
  bool is_bias;
  Eigen::Index row, col;
};

ParamRef locate(const MlpParamsD& p, std::size_t k) {
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const auto nw = static_cast<std::size_t>(p.weights[l].size());
    if (k < nw) {
      const auto rows = static_cast<std::size_t>(p.weights[l].rows());
      return {l, false, static_cast<Eigen::Index>(k % rows), static_cast<Eigen::Index>(k / rows)};
    }
    k -= nw;
    const auto nb = static_cast<std::size_t>(p.biases[l].size());
    if (k < nb) return {l, true, static_cast<Eigen::Index>(k), 0};
    k -= nb;
  }
  throw InvalidArgument("parameter index out of range");
}

double& param_at(MlpParamsD& p, const ParamRef& r) {
  return r.is_bias ? p.biases[r.layer](r.row) : p.weights[r.layer](r.row, r.col);
}

}  // namespace

double mse_loss(const MlpParamsD& params, const GradBatch& batch) {
  Activations<double> acts;
  return batch_loss(params, normalized_batch(params, batch), batch.targets, acts);
}

std::vector<double> mse_gradient(const MlpParamsD& params, const GradBatch& batch) {
  Activations<double> acts;
  const Eigen::MatrixXd x = normalized_batch(params, batch);
  forward_batch(params, x, acts);
  Eigen::MatrixXd delta = (acts.pre.back() - batch.targets) * (2.0 / static_cast<double>(batch.targets.size()));
  std::vector<Eigen::MatrixXd> gw;
  std::vector<Eigen::VectorXd> gb;
  backward_batch(params, acts, std::move(delta), gw, gb);
  std::vector<double> flat;
  flat.reserve(params.num_parameters());
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    flat.insert(flat.end(), gw[l].data(), gw[l].data() + gw[l].size());
    flat.insert(flat.end(), gb[l].data(), gb[l].data() + gb[l].size());
  }
  return flat;
}

GradCheckReport grad_check(const MlpParamsD& params, const GradBatch& batch, std::size_t n_params, double step,
                           std::uint64_t seed, double kink_margin) {
  params.validate();
  const std::vector<double> analytic = mse_gradient(params, batch);
  const Eigen::MatrixXd x = normalized_batch(params, batch);
  Activations<double> base;
  forward_batch(params, x, base);

  const auto masks_of = [](const Activations<double>& a) {
    std::vector<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>> m;
    for (std::size_t l = 0; l + 1 < a.pre.size(); ++l) m.emplace_back(a.pre[l].array() > 0.0);
    return m;
  };
  const auto base_masks = masks_of(base);
  const auto same_masks = [&](const Activations<double>& a) {
    const auto m = masks_of(a);
    for (std::size_t l = 0; l < m.size(); ++l)
      if ((m[l] != base_masks[l]).any()) return false;
    return true;
  };

  GradCheckReport report;
  std::mt19937_64 gen(splitmix64(seed));
  MlpParamsD probe = params;
  Activations<double> acts;
  const std::size_t total = params.num_parameters();
  std::size_t attempts = 0;
  while (report.checked < n_params && attempts < 50 * n_params + 1000) {
    ++attempts;
    const std::size_t k = uniform_index(gen, total);
    const ParamRef ref = locate(params, k);
    // The parameter feeds pre-activation row `ref.row` of layer `ref.layer`.
    if (ref.layer + 1 < params.num_layers() && (base.pre[ref.layer].row(ref.row).array().abs() < kink_margin).any()) {
      ++report.skipped_near_kink;
      continue;
    }
    double& slot = param_at(probe, ref);
    const double original = slot;
    slot = original + step;
    const double up = batch_loss(probe, x, batch.targets, acts);
    const bool up_same = same_masks(acts);
    slot = original - step;
    const double down = batch_loss(probe, x, batch.targets, acts);
    const bool down_same = same_masks(acts);
    slot = original;
    if (!up_same || !down_same) {
      ++report.skipped_near_kink;
      continue;
    }
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[k];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    report.max_relative_error = std::max(report.max_relative_error, std::abs(a - numeric) / denom);
    ++report.checked;
  }
  return report;
}

// Layout (little-endian):
//   "CAPMODEL" | u32 version | u8 scalar bytes (4) | u8 trained mode | u32 n_sizes | u64[n_sizes] sizes |
//   f64[6] mean | f64[6] stddev | per layer: f32 weights (column-major), f32 biases | u32 crc32
void save_model(const MlpParams& params, const std::filesystem::path& path) {
  params.validate();
  io::Writer w;
  w.put_bytes(kModelMagic.data(), kModelMagic.size());
  w.put(kModelVersion);
  w.put(static_cast<std::uint8_t>(sizeof(float)));
  w.put(static_cast<std::uint8_t>(params.trained_mode));
  w.put(static_cast<std::uint32_t>(params.layer_sizes.size()));
  for (std::size_t s : params.layer_sizes) w.put(static_cast<std::uint64_t>(s));
  w.put(params.norm.mean);
  w.put(params.norm.stddev);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    w.put_span(std::span<const float>(params.weights[l].data(), static_cast<std::size_t>(params.weights[l].size())));
    w.put_span(std::span<const float>(params.biases[l].data(), static_cast<std::size_t>(params.biases[l].size())));
  }
  w.write_file(path);
}

MlpParams load_model(const std::filesystem::path& path) {
  io::Reader r(path, kModelMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kModelVersion) throw VersionMismatch("unsupported model version " + std::to_string(version));
  if (r.get<std::uint8_t>() != sizeof(float)) throw VersionMismatch("unsupported scalar width");
  const auto mode = r.get<std::uint8_t>();
  if (mode > 1) throw IoError("corrupt model header");
  const auto n_sizes = r.get<std::uint32_t>();
  if (n_sizes < 2 || n_sizes > 64) throw IoError("corrupt model header");
  std::vector<std::size_t> sizes;
  for (std::uint32_t i = 0; i < n_sizes; ++i) {
    const auto s = r.get<std::uint64_t>();
    if (s == 0 || s > 1'000'000) throw IoError("corrupt layer size");
    sizes.push_back(static_cast<std::size_t>(s));
  }
  MlpParams p = MlpParams::zeros(sizes);
  p.trained_mode = static_cast<Material>(mode);
  p.norm.mean = r.get<std::array<double, kChannels>>();
  p.norm.stddev = r.get<std::array<double, kChannels>>();
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    r.get_span(std::span<float>(p.weights[l].data(), static_cast<std::size_t>(p.weights[l].size())));
    r.get_span(std::span<float>(p.biases[l].data(), static_cast<std::size_t>(p.biases[l].size())));
  }
  if (r.remaining() != 0) throw IoError("trailing bytes in model file");
  p.validate();
  return p;
}

template struct BasicMlpParams<float>;
template struct BasicMlpParams<double>;
template BasicMlpParams<double> BasicMlpParams<float>::cast<double>() const;
template BasicMlpParams<float> BasicMlpParams<double>::cast<float>() const;
template BasicMlpParams<float> BasicMlpParams<float>::cast<float>() const;
template BasicMlpParams<double> BasicMlpParams<double>::cast<double>() const;
template RelPose predict(const BasicMlpParams<float>&, std::span<const double>);
template RelPose predict(const BasicMlpParams<double>&, std::span<const double>);
template Vec4 forward_raw(const BasicMlpParams<float>&, std::span<const double>);
template Vec4 forward_raw(const BasicMlpParams<double>&, std::span<const double>);
template std::array<double, 4> rmse(const BasicMlpParams<float>&, const Dataset&, const std::vector<std::size_t>&);
template std::array<double, 4> rmse(const BasicMlpParams<double>&, const Dataset&, const std::vector<std::size_t>&);

}  // namespace captrack
