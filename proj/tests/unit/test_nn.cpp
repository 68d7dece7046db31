#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "vsdoa/binary_io.hpp"
#include "vsdoa/dataset.hpp"
#include "vsdoa/errors.hpp"
#include "vsdoa/nn.hpp"

using namespace vsdoa;
using namespace vsdoa::nn;
using Eigen::MatrixXd;

namespace {

MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  }
  return m;
}

// Angle targets normalized as (elevation/pi, azimuth/2pi).
MatrixXd random_angles(Eigen::Index k, Eigen::Index cols, Rng& rng) {
  MatrixXd m(2 * k, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index s = 0; s < k; ++s) {
      m(2 * s, c) = rng.uniform(0.05, 0.95);
      m(2 * s + 1, c) = rng.uniform(0.0, 1.0);
    }
  }
  return m;
}

MatrixXd random_classes(Eigen::Index cols, Rng& rng) {
  MatrixXd y(1, cols);
  for (Eigen::Index c = 0; c < cols; ++c) y(0, c) = 1.0 + static_cast<double>(rng.below(5));
  return y;
}

}  // namespace

TEST(Mlp, ShapesAndParameterCount) {
  const MlpModel m(42, {512, 512, 512, 512, 512}, 10, HeadKind::regression, 1);
  Rng rng(1);
  const MatrixXd out = m.predict(random_matrix(42, 3, rng));
  EXPECT_EQ(out.rows(), 10);
  EXPECT_EQ(out.cols(), 3);
  const std::size_t expect = (42 * 512 + 512 + 2 * 512) + 4 * (512 * 512 + 512 + 2 * 512) + (512 * 10 + 10);
  EXPECT_EQ(m.parameter_count(), expect);
  EXPECT_THROW(m.predict(random_matrix(41, 3, rng)), DimensionError);
}

TEST(Mlp, EvalModeIsPure) {
  const MlpModel m(42, {32, 32}, 4, HeadKind::regression, 2);
  Rng rng(2);
  const MatrixXd x = random_matrix(42, 17, rng);
  EXPECT_TRUE(m.predict(x) == m.predict(x));
  // Per-sample outputs do not depend on the rest of the batch.
  EXPECT_TRUE(m.predict(x.col(3)).isApprox(m.predict(x).col(3), 1e-12));
}

TEST(Mlp, BatchNormIdentityConfigurationPassesThrough) {
  MlpModel m(3, {3}, 3, HeadKind::regression, 3);
  std::fill(m.parameters().begin(), m.parameters().end(), 0.0);
  m.weight(0) = Eigen::Matrix3d::Identity();
  m.weight(1) = Eigen::Matrix3d::Identity();
  m.bn_scale(0).setOnes();
  MatrixXd x(3, 2);
  x << 0.5, -1.0, 2.0, 0.25, -0.75, 3.0;
  const MatrixXd out = m.predict(x);
  const double s = 1.0 / std::sqrt(1.0 + kBatchNormEpsilon);
  for (Eigen::Index c = 0; c < 2; ++c) {
    for (Eigen::Index r = 0; r < 3; ++r) {
      EXPECT_NEAR(out(r, c), std::max(0.0, x(r, c)) * s, 1e-15);
    }
  }
}

TEST(Losses, ChordalExamples) {
  Rng rng(4);
  const MatrixXd y = random_angles(3, 20, rng);
  const LossResult same = chordal_loss(y, y);
  EXPECT_NEAR(same.loss, 0.0, 1e-15);
  EXPECT_LT(same.grad.cwiseAbs().maxCoeff(), 1e-15);

  MatrixXd wrapped = y;
  for (Eigen::Index k = 1; k < wrapped.rows(); k += 2) wrapped.row(k).array() += 1.0;
  EXPECT_NEAR(chordal_loss(wrapped, y).loss, 0.0, 1e-14);

  const MatrixXd o = random_angles(3, 20, rng);
  double sum = 0.0;
  for (Eigen::Index c = 0; c < 20; ++c) {
    for (Eigen::Index k = 0; k < 3; ++k) {
      sum += chordal_sq_distance(kPi * o(2 * k, c), kTwoPi * o(2 * k + 1, c), kPi * y(2 * k, c),
                                 kTwoPi * y(2 * k + 1, c));
    }
  }
  EXPECT_NEAR(chordal_loss(o, y).loss, sum / 60.0, 1e-12);
  EXPECT_GE(chordal_loss(o, y).loss, 0.0);
  EXPECT_THROW(chordal_loss(o.topRows(5), y.topRows(5)), DimensionError);
}

TEST(Losses, MseExamples) {
  MatrixXd a(1, 1), b(1, 1);
  a << 1.0;
  b << 3.0;
  EXPECT_DOUBLE_EQ(mse_loss(a, b).loss, 4.0);
  EXPECT_DOUBLE_EQ(mse_loss(a, a).loss, 0.0);
  // Truth 1 degree, estimate 359 degrees: 2 degrees apart physically.
  MatrixXd t(2, 1), e(2, 1);
  t << 0.5, 1.0 / 360.0;
  e << 0.5, 359.0 / 360.0;
  EXPECT_GT(mse_loss(e, t).loss, 0.4);
  EXPECT_NEAR(chordal_loss(e, t).loss, 4.0 * std::pow(std::sin(deg2rad(1.0)), 2), 1e-12);
  EXPECT_THROW(mse_loss(t, MatrixXd(3, 1)), DimensionError);
}

TEST(Losses, CrossEntropyExamples) {
  MatrixXd logits = MatrixXd::Zero(5, 4);
  MatrixXd y(1, 4);
  y << 1, 2, 3, 5;
  const LossResult u = cross_entropy_loss(logits, y);
  EXPECT_NEAR(u.loss, std::log(5.0), 1e-14);
  for (Eigen::Index c = 0; c < 4; ++c) EXPECT_NEAR(u.grad.col(c).sum(), 0.0, 1e-15);

  MatrixXd sure = MatrixXd::Zero(5, 1);
  sure(2, 0) = 60.0;
  MatrixXd y3(1, 1);
  y3 << 3;
  EXPECT_LT(cross_entropy_loss(sure, y3).loss, 1e-20);
  MatrixXd bad(1, 1);
  bad << 6;
  EXPECT_THROW(cross_entropy_loss(sure, bad), ConfigError);
  const MatrixXd p = softmax(logits);
  EXPECT_NEAR(p.col(0).sum(), 1.0, 1e-15);
}

TEST(GradientCheck, AllHeadsWithinTolerance) {
  Rng rng(5);
  const MatrixXd x = random_matrix(42, 16, rng);
  GradientCheckOptions opts;
  opts.probes = 400;
  for (Mode mode : {Mode::train, Mode::eval}) {
    opts.mode = mode;
    MlpModel reg(42, {32, 32}, 4, HeadKind::regression, 6);
    if (mode == Mode::eval) {
      for (auto& v : reg.running_var()) v.setConstant(1.7);
      for (auto& m : reg.running_mean()) m.setConstant(0.1);
    }
    const MatrixXd y = random_angles(2, 16, rng);
    EXPECT_LE(gradient_check(reg, x, y, LossKind::chordal, opts), 1e-4);
    EXPECT_LE(gradient_check(reg, x, y, LossKind::mse_angles, opts), 1e-4);
    const MlpModel cls(42, {32, 32}, 5, HeadKind::classifier, 7);
    EXPECT_LE(gradient_check(cls, x, random_classes(16, rng), LossKind::cross_entropy, opts), 1e-4);
  }
}

TEST(GradientCheck, DetectsCorruptedGradient) {
  Rng rng(8);
  const MatrixXd x = random_matrix(42, 8, rng);
  const MatrixXd y = random_angles(1, 8, rng);
  const MlpModel m(42, {8}, 2, HeadKind::regression, 9);
  GradientCheckOptions opts;
  opts.probes = m.parameter_count();
  opts.perturb_analytic = [](ParamVector& g) {
    // The largest-magnitude first-layer weight gradient, scaled by 1.1.
    std::size_t best = 0;
    for (std::size_t i = 0; i < 42 * 8; ++i) {
      if (std::abs(g[i]) > std::abs(g[best])) best = i;
    }
    g[best] *= 1.1;
  };
  EXPECT_GT(gradient_check(m, x, y, LossKind::chordal, opts), 1e-2);
}

TEST(EarlyStopping, ScriptedValidationCurve) {
  const int e = 6, patience = 4;
  std::vector<double> curve;
  for (int i = 1; i <= 30; ++i) curve.push_back(i <= e ? 10.0 - i : 10.0 - e + 0.5 * (i - e));
  EarlyStopping s(patience);
  int stopped = 0;
  for (int i = 1; i <= 30; ++i) {
    s.observe(i, curve[static_cast<std::size_t>(i - 1)]);
    if (s.should_stop()) {
      stopped = i;
      break;
    }
  }
  EXPECT_EQ(stopped, e + patience);
  EXPECT_EQ(s.best_epoch(), e);
  EXPECT_DOUBLE_EQ(s.best_loss(), 4.0);
  EXPECT_THROW(EarlyStopping(0), ConfigError);
}

namespace {

struct TinySet {
  MatrixXd x, y, xv, yv;
};

TinySet tiny_noiseless(std::size_t samples) {
  GenerationConfig c;
  c.samples = samples;
  c.snapshots = 64;
  c.noiseless = true;
  c.master_seed = 3;
  const LabeledDataset ds = generate(c);
  TinySet t;
  t.x = ds.feature_matrix();
  standardize(t.x, fit_stats(t.x));
  t.y = ds.target_matrix();
  t.xv = t.x.leftCols(40);
  t.yv = t.y.leftCols(40);
  return t;
}

}  // namespace

TEST(Train, OverfitsTinySet) {
  const TinySet t = tiny_noiseless(200);
  TrainOptions o;
  o.max_epochs = 500;
  o.patience = 1000;
  o.dropout = 0.0;
  o.batch_size = 50;
  o.learning_rate = 3e-3;
  o.loss = LossKind::mse_angles;
  const TrainResult r = train(MlpModel(42, {64, 64}, 2, HeadKind::regression, 1), t.x, t.y, t.xv, t.yv, o);
  EXPECT_EQ(r.history.stopped_epoch, 500);
  EXPECT_LT(r.history.train_loss.back(), 0.01 * r.history.train_loss.front());
}

TEST(Train, DeterministicHistoryAndBestWeightsRestored) {
  const TinySet t = tiny_noiseless(160);
  TrainOptions o;
  o.max_epochs = 40;
  o.patience = 5;
  o.batch_size = 32;
  o.mse_warmup_epochs = 3;
  const TrainResult a = train(MlpModel(42, {24, 24}, 2, HeadKind::regression, 4), t.x, t.y, t.xv, t.yv, o);
  const TrainResult b = train(MlpModel(42, {24, 24}, 2, HeadKind::regression, 4), t.x, t.y, t.xv, t.yv, o);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.model.parameters(), b.model.parameters());
  ASSERT_GE(a.history.best_epoch, 1);
  EXPECT_LE(a.history.best_epoch, a.history.stopped_epoch);
  EXPECT_GT(a.history.best_epoch, o.mse_warmup_epochs);
  const auto& vl = a.history.validation_loss;
  const double best = vl[static_cast<std::size_t>(a.history.best_epoch - 1)];
  for (std::size_t i = static_cast<std::size_t>(o.mse_warmup_epochs); i < vl.size(); ++i) EXPECT_LE(best, vl[i]);
  EXPECT_DOUBLE_EQ(evaluate_loss(a.model, LossKind::chordal, t.xv, t.yv), best);

  o.seed = 2;
  const TrainResult c = train(MlpModel(42, {24, 24}, 2, HeadKind::regression, 4), t.x, t.y, t.xv, t.yv, o);
  EXPECT_NE(c.history.train_loss, a.history.train_loss);
}

TEST(Train, RejectsBadInputs) {
  const TinySet t = tiny_noiseless(60);
  TrainOptions o;
  o.max_epochs = 2;
  MlpModel m(42, {8}, 2, HeadKind::regression, 1);
  EXPECT_THROW(train(m, t.x.topRows(40), t.y, t.xv, t.yv, o), DimensionError);
  EXPECT_THROW(train(m, t.x, t.y.topRows(1), t.xv, t.yv, o), DimensionError);
  o.loss = LossKind::cross_entropy;
  EXPECT_THROW(train(m, t.x, t.y, t.xv, t.yv, o), ConfigError);
  o.loss = LossKind::chordal;
  o.dropout = 1.0;
  EXPECT_THROW(train(m, t.x, t.y, t.xv, t.yv, o), ConfigError);
  o.dropout = 0.1;
  MatrixXd poisoned = t.x;
  poisoned(0, 5) = std::nan("");
  try {
    train(m, poisoned, t.y, t.xv, t.yv, o);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
}

TEST(TrainOptions, JsonRoundTrip) {
  TrainOptions o;
  o.learning_rate = 0.01;
  o.loss = LossKind::mse_angles;
  o.mse_warmup_epochs = 7;
  const TrainOptions b = train_options_from_json(to_json(o));
  EXPECT_EQ(to_json(b), to_json(o));
  EXPECT_EQ(loss_kind_from_string("chordal"), LossKind::chordal);
  EXPECT_THROW(loss_kind_from_string("hinge"), ConfigError);
}

TEST(ModelFile, RoundTripAndRejections) {
  TempDir dir;
  Rng rng(10);
  MlpModel m(42, {16, 16}, 5, HeadKind::classifier, 11);
  m.feature_stats.mean.assign(kFeatureDim, 0.5);
  m.feature_stats.stddev.assign(kFeatureDim, 2.0);
  for (auto& v : m.running_var()) v.setConstant(1.3);
  const MatrixXd x = random_matrix(42, 9, rng);

  save_model(m, dir / "m64.vsnn", WeightPrecision::f64);
  const MlpModel exact = load_model(dir / "m64.vsnn");
  EXPECT_TRUE(exact.predict(x) == m.predict(x));
  EXPECT_EQ(exact.head(), HeadKind::classifier);
  EXPECT_EQ(exact.feature_stats.mean, m.feature_stats.mean);

  save_model(m, dir / "m32.vsnn");
  const MlpModel f32 = load_model(dir / "m32.vsnn");
  EXPECT_LT((f32.predict(x) - m.predict(x)).cwiseAbs().maxCoeff(), 1e-4);
  save_model(f32, dir / "again.vsnn");
  EXPECT_EQ(io::read_file(dir / "m32.vsnn"), io::read_file(dir / "again.vsnn"));
  EXPECT_TRUE(load_model(dir / "again.vsnn").predict(x) == f32.predict(x));

  auto bytes = io::read_file(dir / "m32.vsnn");
  auto cut = bytes;
  cut.resize(cut.size() - 100);
  EXPECT_THROW(decode_model(cut), TruncatedFileError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_model(magic), FormatError);
  auto flip = bytes;
  flip[flip.size() - 30] ^= 4;
  EXPECT_THROW(decode_model(flip), ChecksumError);
  GenerationConfig c;
  c.samples = 3;
  c.snapshots = 8;
  EXPECT_THROW(decode_model(encode_dataset(generate(c))), FormatError);
}
