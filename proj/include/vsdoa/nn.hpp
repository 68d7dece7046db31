#ifndef VSDOA_NN_HPP
#define VSDOA_NN_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "vsdoa/features.hpp"
#include "vsdoa/random.hpp"

namespace vsdoa::nn {

// Flat parameter storage. Eigen-aligned so vectorized reductions over it do
// not depend on where the heap placed the buffer.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

enum class HeadKind { regression, classifier };
enum class LossKind { mse_angles, chordal, cross_entropy };
enum class Mode { train, eval };

std::string to_string(HeadKind h);
std::string to_string(LossKind l);
HeadKind head_kind_from_string(const std::string& s);
LossKind loss_kind_from_string(const std::string& s);

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// Per-layer intermediates kept by a forward pass for backpropagation.
struct LayerCache {
  Eigen::MatrixXd input;       // activations entering the layer
  Eigen::MatrixXd normalized;  // batch-norm x-hat (hidden layers)
  Eigen::VectorXd inv_std;     // 1 / sqrt(var + eps) used for x-hat
  Eigen::VectorXd batch_mean;
  Eigen::VectorXd batch_var;   // biased
  Eigen::MatrixXd gate;        // relu mask times dropout scale
};

struct ForwardCache {
  Mode mode = Mode::eval;
  std::vector<LayerCache> layers;
};

// Feed-forward network: each hidden layer is affine -> batch norm -> ReLU ->
// dropout (train mode only); the output layer is affine. Batches are
// column-per-sample. Parameters live in one flat vector in layer order
// (W column-major, b, then gamma and beta for hidden layers) so the optimizer
// and gradient checks work on a single array.
class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(int input_dim, std::vector<int> hidden_dims, int output_dim, HeadKind head,
           std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  const std::vector<int>& hidden_dims() const { return hidden_; }
  HeadKind head() const { return head_; }
  std::size_t num_layers() const { return hidden_.size() + 1; }
  std::size_t parameter_count() const { return params_.size(); }

  ParamVector& parameters() { return params_; }
  const ParamVector& parameters() const { return params_; }

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bn_scale(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bn_shift(std::size_t layer) const;
  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<Eigen::VectorXd> bn_scale(std::size_t layer);
  Eigen::Map<Eigen::VectorXd> bn_shift(std::size_t layer);

  std::vector<Eigen::VectorXd>& running_mean() { return running_mean_; }
  std::vector<Eigen::VectorXd>& running_var() { return running_var_; }
  const std::vector<Eigen::VectorXd>& running_mean() const { return running_mean_; }
  const std::vector<Eigen::VectorXd>& running_var() const { return running_var_; }

  // Train mode normalizes with batch statistics and applies dropout drawn
  // from `rng` (required when dropout > 0). Eval mode uses running
  // statistics and is a pure function of (model, x). Running statistics are
  // never touched here; see update_running_stats().
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Mode mode, double dropout = 0.0,
                          Rng* rng = nullptr, ForwardCache* cache = nullptr) const;

  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const { return forward(x, Mode::eval); }

  // Gradient of the loss with respect to the flat parameter vector, given
  // the cache of the forward pass and dLoss/dOutput.
  ParamVector backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_output) const;

  // running = momentum * running + (1 - momentum) * batch (unbiased variance).
  void update_running_stats(const ForwardCache& cache);

  // Metadata carried with the weights so inference is self-contained.
  FeatureStats feature_stats;
  nlohmann::json training_echo = nlohmann::json::object();

 private:
  struct Offsets {
    std::size_t weight = 0, bias = 0, scale = 0, shift = 0;
    int in = 0, out = 0;
  };

  void build_layout();
  friend MlpModel decode_model(std::span<const std::uint8_t> bytes);

  int input_dim_ = 0;
  int output_dim_ = 0;
  std::vector<int> hidden_;
  HeadKind head_ = HeadKind::regression;
  std::vector<Offsets> layout_;
  ParamVector params_;
  std::vector<Eigen::VectorXd> running_mean_;
  std::vector<Eigen::VectorXd> running_var_;
};

struct LossResult {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // dLoss/dOutput, same shape as the outputs
};

// Mean squared error over every output coordinate.
LossResult mse_loss(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets);

// Outputs and targets are (elevation/pi, azimuth/2pi) per source, 2K rows.
// Loss is the mean squared chordal distance over sources and batch.
LossResult chordal_loss(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets);

// `targets` is 1 x B holding class labels 1..C for C = outputs.rows().
LossResult cross_entropy_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets);

LossResult compute_loss(LossKind kind, const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets);

// Column-wise softmax.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits);

struct TrainOptions {
  int max_epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Multiplies the step size after every epoch.
  double lr_decay = 1.0;
  double dropout = 0.1;
  int patience = 10;
  LossKind loss = LossKind::chordal;
  // Epochs trained with mse_angles before switching to `loss`; early
  // stopping only watches the epochs after the switch.
  int mse_warmup_epochs = 0;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const TrainOptions& o);
TrainOptions train_options_from_json(const nlohmann::json& j);

struct TrainHistory {
  std::vector<double> train_loss;       // per epoch
  std::vector<double> validation_loss;  // per epoch
  int stopped_epoch = 0;                // epochs run (1-based count)
  int best_epoch = 0;                   // 1-based epoch whose weights were kept

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

nlohmann::json to_json(const TrainHistory& h);

// Patience-based stopping on a validation-loss sequence.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  // Records the loss of `epoch` (1-based). Returns true if it is the new best.
  bool observe(int epoch, double validation_loss);
  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  void reset();

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
  int since_best_ = 0;
};

struct TrainResult {
  MlpModel model;
  TrainHistory history;
};

// Mini-batch Adam with per-epoch validation and early stopping. The returned
// model carries the best-validation weights and running statistics.
TrainResult train(MlpModel model, const Eigen::MatrixXd& train_x, const Eigen::MatrixXd& train_y,
                  const Eigen::MatrixXd& val_x, const Eigen::MatrixXd& val_y, const TrainOptions& opts);

// Loss of the eval-mode forward pass.
double evaluate_loss(const MlpModel& model, LossKind kind, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct GradientCheckOptions {
  std::size_t probes = 200;  // parameters sampled (all if the model is smaller)
  double step = 1e-5;
  std::uint64_t seed = 7;
  Mode mode = Mode::train;   // batch-norm statistics from the batch
  // Test hook applied to the analytic gradient before comparison.
  std::function<void(ParamVector&)> perturb_analytic;
};

// Worst relative deviation |g - g_fd| / max(|g|, |g_fd|, 1e-6) between the
// analytic gradient and central finite differences, over the probed
// parameters. Dropout is off so the loss is deterministic.
double gradient_check(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, LossKind kind,
                      const GradientCheckOptions& opts = {});

inline constexpr std::uint32_t kModelFormatVersion = 1;

enum class WeightPrecision { f32, f64 };

std::vector<std::uint8_t> encode_model(const MlpModel& model, WeightPrecision precision = WeightPrecision::f32);
MlpModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const MlpModel& model, const std::filesystem::path& path,
                WeightPrecision precision = WeightPrecision::f32);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace vsdoa::nn

#endif  // VSDOA_NN_HPP
