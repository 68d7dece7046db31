#include "vsdoa/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "vsdoa/binary_io.hpp"
#include "vsdoa/errors.hpp"

namespace vsdoa {

using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

namespace {

constexpr std::uint32_t kSystemManifestVersion = 1;

MatrixXd class_labels(const LabeledDataset& ds) {
  MatrixXd y(1, static_cast<Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) y(0, static_cast<Index>(i)) = ds.count(i);
  return y;
}

void require_sorted_labels(const LabeledDataset& ds, const char* which) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.label_row(i);
    for (std::size_t k = 2; k < row.size(); k += 2) {
      if (row[k] < row[k - 2]) {
        throw ConfigError(std::string(which) + " set: labels of sample " + std::to_string(i) +
                          " are not sorted by elevation");
      }
    }
  }
}

std::string estimator_file(int k) { return "estimator_k" + std::to_string(k) + ".vsnn"; }

}  // namespace

void DoaSystem::validate() const {
  if (classifier) {
    if (classifier->head() != nn::HeadKind::classifier || classifier->output_dim() != kMaxSources) {
      throw ConfigError("classifier must be a 5-way softmax head");
    }
  }
  for (const auto& [k, model] : estimators) {
    if (k < 1 || k > kMaxSources) throw ConfigError("estimator key out of range");
    if (model.head() != nn::HeadKind::regression || model.output_dim() != 2 * k) {
      throw ConfigError("estimator for K=" + std::to_string(k) + " must have " + std::to_string(2 * k) +
                        " regression outputs");
    }
  }
}

nn::TrainResult train_classifier(const LabeledDataset& train_set, const LabeledDataset& validation_set,
                                 const nn::TrainOptions& opts, const ArchitectureOptions& arch) {
  std::array<std::size_t, kMaxSources> seen{};
  for (std::uint8_t c : train_set.counts) {
    if (c < 1 || c > kMaxSources) throw ConfigError("count label out of range");
    ++seen[c - 1];
  }
  for (int k = 0; k < kMaxSources; ++k) {
    if (seen[static_cast<std::size_t>(k)] == 0) {
      throw ConfigError("classifier training data has no samples with K=" + std::to_string(k + 1));
    }
  }

  nn::TrainOptions o = opts;
  o.loss = nn::LossKind::cross_entropy;
  o.mse_warmup_epochs = 0;

  MatrixXd x = train_set.feature_matrix();
  MatrixXd xv = validation_set.feature_matrix();
  FeatureStats stats = fit_stats(x);
  standardize(x, stats);
  standardize(xv, stats);

  nn::MlpModel model(static_cast<int>(kFeatureDim), arch.hidden, kMaxSources, nn::HeadKind::classifier,
                     arch.init_seed);
  model.feature_stats = stats;
  nn::TrainResult result = nn::train(std::move(model), x, class_labels(train_set), xv, class_labels(validation_set), o);
  result.model.feature_stats = stats;
  result.model.training_echo["dataset"] = to_json(train_set.config);
  result.model.training_echo["hidden"] = arch.hidden;
  return result;
}

nn::TrainResult train_estimator(int k, const LabeledDataset& train_set, const LabeledDataset& validation_set,
                                const nn::TrainOptions& opts, const ArchitectureOptions& arch) {
  if (k < 1 || k > kMaxSources) throw ConfigError("K must be in 1..5");
  const std::size_t width = 2 * static_cast<std::size_t>(k);
  for (const LabeledDataset* ds : {&train_set, &validation_set}) {
    if (ds->config.mixed || ds->label_slots != width) {
      throw DimensionError("estimator for K=" + std::to_string(k) + " needs " + std::to_string(width) +
                           "-wide labels, dataset has " + std::to_string(ds->label_slots));
    }
  }
  require_sorted_labels(train_set, "training");
  require_sorted_labels(validation_set, "validation");
  if (opts.loss == nn::LossKind::cross_entropy) throw ConfigError("estimators use an angle loss");

  MatrixXd x = train_set.feature_matrix();
  MatrixXd xv = validation_set.feature_matrix();
  FeatureStats stats = fit_stats(x);
  standardize(x, stats);
  standardize(xv, stats);

  nn::MlpModel model(static_cast<int>(kFeatureDim), arch.hidden, 2 * k, nn::HeadKind::regression, arch.init_seed);
  model.feature_stats = stats;
  nn::TrainResult result =
      nn::train(std::move(model), x, train_set.target_matrix(), xv, validation_set.target_matrix(), opts);
  result.model.feature_stats = stats;
  result.model.training_echo["dataset"] = to_json(train_set.config);
  result.model.training_echo["hidden"] = arch.hidden;
  result.model.training_echo["num_sources"] = k;
  return result;
}

MatrixXd prepare_features(const nn::MlpModel& model, const MatrixXd& raw_features) {
  if (model.feature_stats.empty()) throw ConfigError("model carries no feature statistics");
  MatrixXd x = raw_features;
  standardize(x, model.feature_stats);
  return x;
}

std::vector<DoA> outputs_to_doas(const Eigen::Ref<const Eigen::VectorXd>& outputs) {
  std::vector<DoA> doas;
  for (Index k = 0; k + 1 < outputs.size(); k += 2) {
    doas.emplace_back(kPi * outputs(k), kTwoPi * outputs(k + 1));
  }
  return sort_by_elevation(doas);
}

std::vector<std::vector<DoA>> estimate_doas(const nn::MlpModel& estimator, const MatrixXd& raw_features) {
  const MatrixXd out = estimator.predict(prepare_features(estimator, raw_features));
  std::vector<std::vector<DoA>> result;
  result.reserve(static_cast<std::size_t>(out.cols()));
  for (Index c = 0; c < out.cols(); ++c) result.push_back(outputs_to_doas(out.col(c)));
  return result;
}

MatrixXd classify(const nn::MlpModel& classifier, const MatrixXd& raw_features) {
  return nn::softmax(classifier.predict(prepare_features(classifier, raw_features)));
}

std::vector<Prediction> predict_features(const DoaSystem& system, const MatrixXd& raw_features) {
  if (!system.classifier) throw ConfigError("system has no trained classifier");
  system.validate();
  const MatrixXd probs = classify(*system.classifier, raw_features);

  std::vector<Prediction> preds(static_cast<std::size_t>(raw_features.cols()));
  std::map<int, std::vector<Index>> routed;
  for (Index c = 0; c < probs.cols(); ++c) {
    Prediction& p = preds[static_cast<std::size_t>(c)];
    Index best = 0;
    for (Index r = 0; r < probs.rows(); ++r) {
      p.probabilities[static_cast<std::size_t>(r)] = probs(r, c);
      if (probs(r, c) > probs(best, c)) best = r;
    }
    p.k_hat = static_cast<int>(best) + 1;
    routed[p.k_hat].push_back(c);
  }

  for (const auto& [k, cols] : routed) {
    auto it = system.estimators.find(k);
    if (it == system.estimators.end()) {
      throw ConfigError("system has no trained estimator for K=" + std::to_string(k));
    }
    MatrixXd sub(raw_features.rows(), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) sub.col(static_cast<Index>(i)) = raw_features.col(cols[i]);
    std::vector<std::vector<DoA>> doas = estimate_doas(it->second, sub);
    for (std::size_t i = 0; i < cols.size(); ++i) preds[static_cast<std::size_t>(cols[i])].doas = std::move(doas[i]);
  }
  return preds;
}

Prediction predict(const DoaSystem& system, const SnapshotMatrix& x) {
  const CovarianceFeature f = vectorize(sample_covariance(x));
  MatrixXd col(static_cast<Index>(kFeatureDim), 1);
  for (std::size_t d = 0; d < kFeatureDim; ++d) col(static_cast<Index>(d), 0) = f[d];
  return predict_features(system, col).front();
}

CrossProductEstimate cross_product_doa(const SnapshotMatrix& x, double min_confidence) {
  if (x.cols() < 1) throw ConfigError("cross product needs at least one snapshot");
  double s[3] = {0.0, 0.0, 0.0};
  double power = 0.0;
  for (Index c = 0; c < x.cols(); ++c) {
    const cd ex = x(0, c), ey = x(1, c), ez = x(2, c);
    const cd hx = std::conj(x(3, c)), hy = std::conj(x(4, c)), hz = std::conj(x(5, c));
    s[0] += (ey * hz - ez * hy).real();
    s[1] += (ez * hx - ex * hz).real();
    s[2] += (ex * hy - ey * hx).real();
    power += x.col(c).squaredNorm();
  }
  const double n = static_cast<double>(x.cols());
  for (double& v : s) v /= n;
  power /= n;

  const double norm = std::sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2]);
  CrossProductEstimate est;
  est.confidence = power > 0.0 ? 2.0 * norm / power : 0.0;
  est.low_confidence = !(est.confidence >= min_confidence) || norm == 0.0;
  if (norm > 0.0) {
    est.doa = DoA(std::acos(std::clamp(s[2] / norm, -1.0, 1.0)), std::atan2(s[1], s[0]));
  }
  return est;
}

void save_system(const DoaSystem& system, const std::filesystem::path& dir, nn::WeightPrecision precision) {
  system.validate();
  std::filesystem::create_directories(dir);
  json manifest{{"format", "vsdoa-system"},
                {"version", kSystemManifestVersion},
                {"feature_layout_version", kFeatureLayoutVersion},
                {"classifier", nullptr},
                {"estimators", json::object()}};
  if (system.classifier) {
    nn::save_model(*system.classifier, dir / "classifier.vsnn", precision);
    manifest["classifier"] = "classifier.vsnn";
  }
  for (const auto& [k, model] : system.estimators) {
    nn::save_model(model, dir / estimator_file(k), precision);
    manifest["estimators"][std::to_string(k)] = estimator_file(k);
  }
  io::write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

DoaSystem load_system(const std::filesystem::path& dir) {
  const std::vector<std::uint8_t> raw = io::read_file(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(raw.begin(), raw.end());
    if (manifest.at("format").get<std::string>() != "vsdoa-system") throw FormatError("not a system manifest");
    if (manifest.at("version").get<std::uint32_t>() != kSystemManifestVersion) {
      throw VersionMismatchError("unsupported system manifest version");
    }
    if (manifest.at("feature_layout_version").get<std::uint32_t>() != kFeatureLayoutVersion) {
      throw VersionMismatchError("system was trained on a different feature layout");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed system manifest: ") + e.what());
  }

  DoaSystem system;
  if (!manifest["classifier"].is_null()) {
    system.classifier = nn::load_model(dir / manifest["classifier"].get<std::string>());
  }
  for (const auto& [key, file] : manifest["estimators"].items()) {
    system.estimators.emplace(std::stoi(key), nn::load_model(dir / file.get<std::string>()));
  }
  system.validate();
  return system;
}

}  // namespace vsdoa
