#include "vsdoa/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vsdoa/binary_io.hpp"
#include "vsdoa/errors.hpp"
#include "vsdoa/geometry.hpp"

namespace vsdoa::nn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

constexpr std::string_view kModelMagic = "VSNN";
constexpr Index kEvalChunk = 4096;

MatrixXd gather_columns(const MatrixXd& m, std::span<const Index> cols) {
  MatrixXd out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = m.col(cols[c]);
  return out;
}

}  // namespace

std::string to_string(HeadKind h) { return h == HeadKind::regression ? "regression" : "classifier"; }

std::string to_string(LossKind l) {
  switch (l) {
    case LossKind::mse_angles: return "mse_angles";
    case LossKind::chordal: return "chordal";
    case LossKind::cross_entropy: return "cross_entropy";
  }
  return "unknown";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "regression") return HeadKind::regression;
  if (s == "classifier") return HeadKind::classifier;
  throw FormatError("unknown head kind '" + s + "'");
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "mse_angles" || s == "mse") return LossKind::mse_angles;
  if (s == "chordal") return LossKind::chordal;
  if (s == "cross_entropy") return LossKind::cross_entropy;
  throw ConfigError("unknown loss '" + s + "' (expected mse_angles, chordal or cross_entropy)");
}

// ---------------------------------------------------------------------------
// Model

MlpModel::MlpModel(int input_dim, std::vector<int> hidden_dims, int output_dim, HeadKind head,
                   std::uint64_t seed)
    : input_dim_(input_dim), output_dim_(output_dim), hidden_(std::move(hidden_dims)), head_(head) {
  if (input_dim_ < 1 || output_dim_ < 1) throw ConfigError("layer widths must be positive");
  for (int h : hidden_) {
    if (h < 1) throw ConfigError("layer widths must be positive");
  }
  build_layout();

  // He initialization for ReLU layers, LeCun for the linear output.
  Rng rng(seed);
  for (std::size_t l = 0; l < layout_.size(); ++l) {
    const Offsets& o = layout_[l];
    const bool hidden = l + 1 < layout_.size();
    const double scale = std::sqrt((hidden ? 2.0 : 1.0) / o.in);
    for (std::size_t i = 0; i < static_cast<std::size_t>(o.in * o.out); ++i) {
      params_[o.weight + i] = scale * rng.normal();
    }
    if (hidden) {
      std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(o.scale), o.out, 1.0);
    }
  }
}

void MlpModel::build_layout() {
  layout_.clear();
  running_mean_.clear();
  running_var_.clear();
  std::size_t cursor = 0;
  int in = input_dim_;
  for (std::size_t l = 0; l <= hidden_.size(); ++l) {
    const bool hidden = l < hidden_.size();
    const int out = hidden ? hidden_[l] : output_dim_;
    Offsets o;
    o.in = in;
    o.out = out;
    o.weight = cursor;
    cursor += static_cast<std::size_t>(in) * static_cast<std::size_t>(out);
    o.bias = cursor;
    cursor += static_cast<std::size_t>(out);
    if (hidden) {
      o.scale = cursor;
      cursor += static_cast<std::size_t>(out);
      o.shift = cursor;
      cursor += static_cast<std::size_t>(out);
      running_mean_.push_back(VectorXd::Zero(out));
      running_var_.push_back(VectorXd::Ones(out));
    }
    layout_.push_back(o);
    in = out;
  }
  params_.assign(cursor, 0.0);
}

Eigen::Map<const MatrixXd> MlpModel::weight(std::size_t l) const {
  const Offsets& o = layout_.at(l);
  return {params_.data() + o.weight, o.out, o.in};
}
Eigen::Map<const VectorXd> MlpModel::bias(std::size_t l) const {
  const Offsets& o = layout_.at(l);
  return {params_.data() + o.bias, o.out};
}
Eigen::Map<const VectorXd> MlpModel::bn_scale(std::size_t l) const {
  const Offsets& o = layout_.at(l);
  return {params_.data() + o.scale, o.out};
}
Eigen::Map<const VectorXd> MlpModel::bn_shift(std::size_t l) const {
  const Offsets& o = layout_.at(l);
  return {params_.data() + o.shift, o.out};
}
Eigen::Map<MatrixXd> MlpModel::weight(std::size_t l) {
  const Offsets& o = layout_.at(l);
  return {params_.data() + o.weight, o.out, o.in};
}
Eigen::Map<VectorXd> MlpModel::bn_scale(std::size_t l) {
  const Offsets& o = layout_.at(l);
  return {params_.data() + o.scale, o.out};
}
Eigen::Map<VectorXd> MlpModel::bn_shift(std::size_t l) {
  const Offsets& o = layout_.at(l);
  return {params_.data() + o.shift, o.out};
}

MatrixXd MlpModel::forward(const MatrixXd& x, Mode mode, double dropout, Rng* rng, ForwardCache* cache) const {
  if (x.rows() != input_dim_) {
    throw DimensionError("input width " + std::to_string(x.rows()) + " does not match model input " +
                         std::to_string(input_dim_));
  }
  const bool train = mode == Mode::train;
  if (train && dropout > 0.0 && rng == nullptr) throw ConfigError("dropout needs a random stream");
  if (cache) {
    cache->mode = mode;
    cache->layers.assign(num_layers(), LayerCache{});
  }

  MatrixXd a = x;
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    MatrixXd z = weight(l) * a;
    z.colwise() += bias(l);

    VectorXd mean, var;
    if (train) {
      mean = z.rowwise().mean();
      var = (z.colwise() - mean).array().square().rowwise().mean();
    } else {
      mean = running_mean_[l];
      var = running_var_[l];
    }
    const VectorXd inv_std = (var.array() + kBatchNormEpsilon).rsqrt();
    MatrixXd xhat = (z.colwise() - mean).array().colwise() * inv_std.array();
    MatrixXd y = (xhat.array().colwise() * bn_scale(l).array()).colwise() + bn_shift(l).array();

    MatrixXd gate = (y.array() > 0.0).cast<double>();
    if (train && dropout > 0.0) {
      const double keep_scale = 1.0 / (1.0 - dropout);
      for (Index i = 0; i < gate.size(); ++i) {
        gate.data()[i] *= rng->uniform() < dropout ? 0.0 : keep_scale;
      }
    }
    MatrixXd next = y.array() * gate.array();

    if (cache) {
      LayerCache& lc = cache->layers[l];
      lc.input = std::move(a);
      lc.normalized = std::move(xhat);
      lc.inv_std = inv_std;
      lc.batch_mean = std::move(mean);
      lc.batch_var = std::move(var);
      lc.gate = std::move(gate);
    }
    a = std::move(next);
  }

  const std::size_t last = hidden_.size();
  MatrixXd out = weight(last) * a;
  out.colwise() += bias(last);
  if (cache) cache->layers[last].input = std::move(a);
  return out;
}

ParamVector MlpModel::backward(const ForwardCache& cache, const MatrixXd& grad_output) const {
  if (cache.layers.size() != num_layers()) throw DimensionError("forward cache does not match the model");
  if (grad_output.rows() != output_dim_) throw DimensionError("output gradient width mismatch");

  ParamVector grad(params_.size(), 0.0);
  auto map_mat = [&](std::size_t off, int rows, int cols) { return Eigen::Map<MatrixXd>(grad.data() + off, rows, cols); };
  auto map_vec = [&](std::size_t off, int n) { return Eigen::Map<VectorXd>(grad.data() + off, n); };

  const std::size_t last = hidden_.size();
  const Offsets& lo = layout_[last];
  MatrixXd g = grad_output;
  map_mat(lo.weight, lo.out, lo.in) = g * cache.layers[last].input.transpose();
  map_vec(lo.bias, lo.out) = g.rowwise().sum();
  g = weight(last).transpose() * g;

  const bool train = cache.mode == Mode::train;
  for (std::size_t li = hidden_.size(); li-- > 0;) {
    const LayerCache& lc = cache.layers[li];
    const Offsets& o = layout_[li];
    const double batch = static_cast<double>(g.cols());

    const MatrixXd dy = g.array() * lc.gate.array();
    map_vec(o.scale, o.out) = (dy.array() * lc.normalized.array()).rowwise().sum();
    map_vec(o.shift, o.out) = dy.rowwise().sum();
    const MatrixXd dxhat = dy.array().colwise() * bn_scale(li).array();

    MatrixXd dz;
    if (train) {
      const VectorXd sum_dxhat = dxhat.rowwise().sum();
      const VectorXd sum_dxhat_xhat = (dxhat.array() * lc.normalized.array()).rowwise().sum();
      dz = (batch * dxhat.array()).colwise() - sum_dxhat.array();
      dz.array() -= lc.normalized.array().colwise() * sum_dxhat_xhat.array();
      dz.array().colwise() *= lc.inv_std.array() / batch;
    } else {
      dz = dxhat.array().colwise() * lc.inv_std.array();
    }

    map_mat(o.weight, o.out, o.in) = dz * lc.input.transpose();
    map_vec(o.bias, o.out) = dz.rowwise().sum();
    if (li > 0) g = weight(li).transpose() * dz;
  }
  return grad;
}

void MlpModel::update_running_stats(const ForwardCache& cache) {
  if (cache.mode != Mode::train) return;
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    const LayerCache& lc = cache.layers[l];
    const double b = static_cast<double>(lc.input.cols());
    const double unbias = b > 1.0 ? b / (b - 1.0) : 1.0;
    running_mean_[l] = kBatchNormMomentum * running_mean_[l] + (1.0 - kBatchNormMomentum) * lc.batch_mean;
    running_var_[l] = kBatchNormMomentum * running_var_[l] + (1.0 - kBatchNormMomentum) * unbias * lc.batch_var;
  }
}

// ---------------------------------------------------------------------------
// Losses

LossResult mse_loss(const MatrixXd& outputs, const MatrixXd& targets) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols()) {
    throw DimensionError("mse: output and label shapes differ");
  }
  const double count = static_cast<double>(outputs.size());
  const MatrixXd diff = outputs - targets;
  return {diff.squaredNorm() / count, (2.0 / count) * diff};
}

LossResult chordal_loss(const MatrixXd& outputs, const MatrixXd& targets) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols() || outputs.rows() % 2 != 0) {
    throw DimensionError("chordal: outputs and labels must both be 2K x B");
  }
  const Index pairs = outputs.rows() / 2;
  const double count = static_cast<double>(pairs * outputs.cols());
  LossResult r;
  r.grad.resize(outputs.rows(), outputs.cols());
  double total = 0.0;
  for (Index c = 0; c < outputs.cols(); ++c) {
    for (Index k = 0; k < pairs; ++k) {
      const double el = kPi * outputs(2 * k, c), az = kTwoPi * outputs(2 * k + 1, c);
      const double el_t = kPi * targets(2 * k, c), az_t = kTwoPi * targets(2 * k + 1, c);
      const double se = std::sin(el), ce = std::cos(el);
      const double st = std::sin(el_t), ct = std::cos(el_t);
      const double cd = std::cos(az - az_t), sd = std::sin(az - az_t);
      total += 2.0 * (1.0 - se * st * cd - ce * ct);
      r.grad(2 * k, c) = kPi * 2.0 * (-ce * st * cd + se * ct) / count;
      r.grad(2 * k + 1, c) = kTwoPi * 2.0 * (se * st * sd) / count;
    }
  }
  r.loss = total / count;
  return r;
}

MatrixXd softmax(const MatrixXd& logits) {
  MatrixXd p = logits.rowwise() - logits.colwise().maxCoeff();
  p = p.array().exp();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

LossResult cross_entropy_loss(const MatrixXd& logits, const MatrixXd& targets) {
  if (targets.rows() != 1 || targets.cols() != logits.cols()) {
    throw DimensionError("cross entropy: labels must be 1 x B");
  }
  const Index classes = logits.rows();
  const double batch = static_cast<double>(logits.cols());
  LossResult r;
  r.grad = softmax(logits);
  double total = 0.0;
  for (Index c = 0; c < logits.cols(); ++c) {
    const double label = targets(0, c);
    const Index cls = static_cast<Index>(std::lround(label)) - 1;
    if (cls < 0 || cls >= classes || label != std::round(label)) {
      throw ConfigError("class label " + std::to_string(label) + " outside 1.." + std::to_string(classes));
    }
    // log-softmax computed from the max-shifted logits.
    const double m = logits.col(c).maxCoeff();
    const double lse = m + std::log((logits.col(c).array() - m).exp().sum());
    total += lse - logits(cls, c);
    r.grad(cls, c) -= 1.0;
  }
  r.grad /= batch;
  r.loss = total / batch;
  return r;
}

LossResult compute_loss(LossKind kind, const MatrixXd& outputs, const MatrixXd& targets) {
  switch (kind) {
    case LossKind::mse_angles: return mse_loss(outputs, targets);
    case LossKind::chordal: return chordal_loss(outputs, targets);
    case LossKind::cross_entropy: return cross_entropy_loss(outputs, targets);
  }
  throw ConfigError("unknown loss kind");
}

// ---------------------------------------------------------------------------
// Training

void TrainOptions::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2 (batch normalization)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("moment decays must be in [0,1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must be in (0,1]");
  if (mse_warmup_epochs < 0) throw ConfigError("mse_warmup_epochs must be non-negative");
}

json to_json(const TrainOptions& o) {
  return json{{"max_epochs", o.max_epochs},
              {"batch_size", o.batch_size},
              {"learning_rate", o.learning_rate},
              {"beta1", o.beta1},
              {"beta2", o.beta2},
              {"adam_epsilon", o.adam_epsilon},
              {"lr_decay", o.lr_decay},
              {"dropout", o.dropout},
              {"patience", o.patience},
              {"loss", to_string(o.loss)},
              {"mse_warmup_epochs", o.mse_warmup_epochs},
              {"seed", o.seed}};
}

TrainOptions train_options_from_json(const json& j) {
  TrainOptions o;
  try {
    o.max_epochs = j.value("max_epochs", o.max_epochs);
    o.batch_size = j.value("batch_size", o.batch_size);
    o.learning_rate = j.value("learning_rate", o.learning_rate);
    o.beta1 = j.value("beta1", o.beta1);
    o.beta2 = j.value("beta2", o.beta2);
    o.adam_epsilon = j.value("adam_epsilon", o.adam_epsilon);
    o.lr_decay = j.value("lr_decay", o.lr_decay);
    o.dropout = j.value("dropout", o.dropout);
    o.patience = j.value("patience", o.patience);
    if (j.contains("loss")) o.loss = loss_kind_from_string(j["loss"].get<std::string>());
    o.mse_warmup_epochs = j.value("mse_warmup_epochs", o.mse_warmup_epochs);
    o.seed = j.value("seed", o.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed training options: ") + e.what());
  }
  return o;
}

json to_json(const TrainHistory& h) {
  return json{{"train_loss", h.train_loss},
              {"validation_loss", h.validation_loss},
              {"stopped_epoch", h.stopped_epoch},
              {"best_epoch", h.best_epoch}};
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be at least 1");
}

bool EarlyStopping::observe(int epoch, double validation_loss) {
  if (best_epoch_ == 0 || validation_loss < best_loss_) {
    best_epoch_ = epoch;
    best_loss_ = validation_loss;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

void EarlyStopping::reset() {
  best_epoch_ = 0;
  best_loss_ = 0.0;
  since_best_ = 0;
}

double evaluate_loss(const MlpModel& model, LossKind kind, const MatrixXd& x, const MatrixXd& y) {
  if (x.cols() != y.cols()) throw DimensionError("feature and label counts differ");
  if (x.cols() == 0) throw ConfigError("cannot evaluate on an empty set");
  // Every loss is a mean over columns, so chunked means combine by weight.
  double total = 0.0;
  for (Index start = 0; start < x.cols(); start += kEvalChunk) {
    const Index n = std::min(kEvalChunk, x.cols() - start);
    const MatrixXd out = model.predict(x.middleCols(start, n));
    total += compute_loss(kind, out, y.middleCols(start, n)).loss * static_cast<double>(n);
  }
  return total / static_cast<double>(x.cols());
}

TrainResult train(MlpModel model, const MatrixXd& train_x, const MatrixXd& train_y, const MatrixXd& val_x,
                  const MatrixXd& val_y, const TrainOptions& opts) {
  opts.validate();
  if (train_x.cols() == 0 || val_x.cols() == 0) throw ConfigError("training and validation sets must be nonempty");
  if (train_x.cols() != train_y.cols() || val_x.cols() != val_y.cols()) {
    throw DimensionError("feature and label counts differ");
  }
  if (train_x.rows() != model.input_dim() || val_x.rows() != model.input_dim()) {
    throw DimensionError("feature width does not match model input");
  }
  if ((opts.loss == LossKind::cross_entropy) != (model.head() == HeadKind::classifier)) {
    throw ConfigError("cross entropy pairs with a classifier head, angle losses with a regression head");
  }
  const Index label_rows = opts.loss == LossKind::cross_entropy ? 1 : model.output_dim();
  if (train_y.rows() != label_rows || val_y.rows() != label_rows) {
    throw DimensionError("label width does not match model output");
  }

  Rng rng(opts.seed);
  ParamVector& params = model.parameters();
  ParamVector m1(params.size(), 0.0), m2(params.size(), 0.0);
  std::vector<Index> order(static_cast<std::size_t>(train_x.cols()));
  std::iota(order.begin(), order.end(), Index{0});

  EarlyStopping stopper(opts.patience);
  TrainHistory history;
  MlpModel best = model;
  std::uint64_t step = 0;
  const Index n = train_x.cols();
  const Index batch_size = opts.batch_size;

  for (int epoch = 1; epoch <= opts.max_epochs; ++epoch) {
    const bool warmup = epoch <= opts.mse_warmup_epochs;
    const LossKind loss_kind = warmup ? LossKind::mse_angles : opts.loss;
    const double lr = opts.learning_rate * std::pow(opts.lr_decay, epoch - 1);
    rng.shuffle(std::span<Index>(order));

    double epoch_loss = 0.0;
    Index seen = 0;
    int batch_index = 0;
    for (Index start = 0; start < n; start += batch_size, ++batch_index) {
      const Index count = std::min(batch_size, n - start);
      if (count < 2) break;  // batch statistics need two samples
      const std::span<const Index> cols(order.data() + start, static_cast<std::size_t>(count));
      const MatrixXd xb = gather_columns(train_x, cols);
      const MatrixXd yb = gather_columns(train_y, cols);

      ForwardCache cache;
      const MatrixXd out = model.forward(xb, Mode::train, opts.dropout, &rng, &cache);
      const LossResult lr_result = compute_loss(loss_kind, out, yb);
      if (!std::isfinite(lr_result.loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      }
      const ParamVector grad = model.backward(cache, lr_result.grad);

      ++step;
      const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i] = opts.beta1 * m1[i] + (1.0 - opts.beta1) * grad[i];
        m2[i] = opts.beta2 * m2[i] + (1.0 - opts.beta2) * grad[i] * grad[i];
        params[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + opts.adam_epsilon);
      }
      model.update_running_stats(cache);

      epoch_loss += lr_result.loss * static_cast<double>(count);
      seen += count;
    }

    const double val_loss = evaluate_loss(model, loss_kind, val_x, val_y);
    if (!std::isfinite(val_loss)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    history.train_loss.push_back(seen > 0 ? epoch_loss / static_cast<double>(seen) : 0.0);
    history.validation_loss.push_back(val_loss);
    history.stopped_epoch = epoch;

    if (warmup) continue;
    if (stopper.observe(epoch, val_loss)) best = model;
    if (stopper.should_stop()) break;
  }

  if (stopper.best_epoch() == 0) {
    // Every epoch was warm-up; keep the final weights.
    best = model;
    history.best_epoch = history.stopped_epoch;
  } else {
    history.best_epoch = stopper.best_epoch();
  }
  best.training_echo = json{{"options", to_json(opts)}, {"history", to_json(history)}};
  return {std::move(best), std::move(history)};
}

double gradient_check(const MlpModel& model, const MatrixXd& x, const MatrixXd& y, LossKind kind,
                      const GradientCheckOptions& opts) {
  auto loss_at = [&](const MlpModel& m) {
    return compute_loss(kind, m.forward(x, opts.mode), y).loss;
  };

  ForwardCache cache;
  const MatrixXd out = model.forward(x, opts.mode, 0.0, nullptr, &cache);
  ParamVector analytic = model.backward(cache, compute_loss(kind, out, y).grad);
  if (opts.perturb_analytic) opts.perturb_analytic(analytic);

  std::vector<std::size_t> probe(model.parameter_count());
  std::iota(probe.begin(), probe.end(), std::size_t{0});
  if (opts.probes < probe.size()) {
    Rng rng(opts.seed);
    rng.shuffle(std::span<std::size_t>(probe));
    probe.resize(opts.probes);
  }

  MlpModel work = model;
  double worst = 0.0;
  for (std::size_t i : probe) {
    double& p = work.parameters()[i];
    const double saved = p;
    p = saved + opts.step;
    const double up = loss_at(work);
    p = saved - opts.step;
    const double down = loss_at(work);
    p = saved;
    const double numeric = (up - down) / (2.0 * opts.step);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-6});
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Persistence

std::vector<std::uint8_t> encode_model(const MlpModel& model, WeightPrecision precision) {
  io::ByteWriter payload;
  auto put = [&](double v) {
    if (precision == WeightPrecision::f32) {
      payload.f32(static_cast<float>(v));
    } else {
      payload.f64(v);
    }
  };
  for (double v : model.parameters()) put(v);
  for (std::size_t l = 0; l < model.hidden_dims().size(); ++l) {
    for (Index i = 0; i < model.running_mean()[l].size(); ++i) put(model.running_mean()[l](i));
    for (Index i = 0; i < model.running_var()[l].size(); ++i) put(model.running_var()[l](i));
  }

  json header{
      {"architecture",
       {{"input_dim", model.input_dim()}, {"hidden", model.hidden_dims()}, {"output_dim", model.output_dim()}}},
      {"head", to_string(model.head())},
      {"activation", "relu"},
      {"batch_norm", {{"epsilon", kBatchNormEpsilon}, {"momentum", kBatchNormMomentum}}},
      {"label_normalization", {{"elevation_scale_deg", 180.0}, {"azimuth_scale_deg", 360.0}}},
      {"feature_stats", {{"mean", model.feature_stats.mean}, {"stddev", model.feature_stats.stddev}}},
      {"feature_layout_version", kFeatureLayoutVersion},
      {"training", model.training_echo},
      {"weight_precision", precision == WeightPrecision::f32 ? "f32" : "f64"},
      {"parameter_count", model.parameter_count()},
      {"checksum", io::kChecksumAlgorithm},
      {"payload_bytes", payload.buffer().size()}};

  io::Container c;
  c.version = kModelFormatVersion;
  c.header = header.dump();
  c.payload = std::move(payload.buffer());
  return io::encode_container(kModelMagic, c);
}

MlpModel decode_model(std::span<const std::uint8_t> bytes) {
  const io::Container c = io::decode_container(bytes, kModelMagic, kModelFormatVersion, "model");
  MlpModel model;
  WeightPrecision precision = WeightPrecision::f32;
  try {
    const json header = json::parse(c.header);
    if (header.at("feature_layout_version").get<std::uint32_t>() != kFeatureLayoutVersion) {
      throw VersionMismatchError("model: feature layout version " + header.at("feature_layout_version").dump() +
                                 " is not supported");
    }
    const json& arch = header.at("architecture");
    model.input_dim_ = arch.at("input_dim").get<int>();
    model.hidden_ = arch.at("hidden").get<std::vector<int>>();
    model.output_dim_ = arch.at("output_dim").get<int>();
    model.head_ = head_kind_from_string(header.at("head").get<std::string>());
    model.feature_stats.mean = header.at("feature_stats").at("mean").get<std::vector<double>>();
    model.feature_stats.stddev = header.at("feature_stats").at("stddev").get<std::vector<double>>();
    model.training_echo = header.at("training");
    const std::string prec = header.at("weight_precision").get<std::string>();
    if (prec == "f64") {
      precision = WeightPrecision::f64;
    } else if (prec != "f32") {
      throw FormatError("model: unknown weight precision '" + prec + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: malformed header (") + e.what() + ")");
  }
  model.build_layout();

  std::size_t values = model.parameter_count();
  for (int h : model.hidden_) values += 2 * static_cast<std::size_t>(h);
  const std::size_t width = precision == WeightPrecision::f32 ? 4 : 8;
  if (c.payload.size() != values * width) throw FormatError("model: payload size disagrees with header");

  io::ByteReader r(c.payload);
  auto get = [&]() { return precision == WeightPrecision::f32 ? static_cast<double>(r.f32()) : r.f64(); };
  for (double& v : model.params_) v = get();
  for (std::size_t l = 0; l < model.hidden_.size(); ++l) {
    for (Index i = 0; i < model.running_mean_[l].size(); ++i) model.running_mean_[l](i) = get();
    for (Index i = 0; i < model.running_var_[l].size(); ++i) model.running_var_[l](i) = get();
  }
  return model;
}

void save_model(const MlpModel& model, const std::filesystem::path& path, WeightPrecision precision) {
  io::write_file_atomic(path, encode_model(model, precision));
}

MlpModel load_model(const std::filesystem::path& path) { return decode_model(io::read_file(path)); }

}  // namespace vsdoa::nn
