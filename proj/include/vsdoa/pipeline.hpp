#ifndef VSDOA_PIPELINE_HPP
#define VSDOA_PIPELINE_HPP

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "vsdoa/dataset.hpp"
#include "vsdoa/nn.hpp"
#include "vsdoa/signal_model.hpp"

namespace vsdoa {

// Source-count classifier plus one DoA regressor per count. Each model
// carries the feature statistics it was trained with.
struct DoaSystem {
  std::optional<nn::MlpModel> classifier;
  std::map<int, nn::MlpModel> estimators;  // K -> 2K-output regressor

  // Throws ConfigError when a component is missing or mis-shaped.
  void validate() const;
};

struct Prediction {
  int k_hat = 0;
  std::array<double, kMaxSources> probabilities{};
  std::vector<DoA> doas;  // ascending elevation
};

struct ArchitectureOptions {
  std::vector<int> hidden = {128, 128, 128};
  std::uint64_t init_seed = 1;
};

// Softmax classifier over K in 1..5 trained with cross entropy. Requires a
// mixed dataset whose training split covers all five classes.
nn::TrainResult train_classifier(const LabeledDataset& train_set, const LabeledDataset& validation_set,
                                 const nn::TrainOptions& opts, const ArchitectureOptions& arch = {});

// 2K-output regressor. Labels must already be elevation-sorted; an unsorted
// row is rejected rather than re-sorted.
nn::TrainResult train_estimator(int k, const LabeledDataset& train_set, const LabeledDataset& validation_set,
                                const nn::TrainOptions& opts, const ArchitectureOptions& arch = {});

// Standardizes raw feature columns with the model's own statistics.
Eigen::MatrixXd prepare_features(const nn::MlpModel& model, const Eigen::MatrixXd& raw_features);

// Raw regression outputs (one column per sample) to elevation-sorted DoAs.
std::vector<DoA> outputs_to_doas(const Eigen::Ref<const Eigen::VectorXd>& outputs);

// DoAs for every column of raw (unstandardized) features.
std::vector<std::vector<DoA>> estimate_doas(const nn::MlpModel& estimator, const Eigen::MatrixXd& raw_features);

// Class probabilities (5 x B) for raw features.
Eigen::MatrixXd classify(const nn::MlpModel& classifier, const Eigen::MatrixXd& raw_features);

// Feature extraction -> classify K -> route to estimator K -> sorted DoAs.
Prediction predict(const DoaSystem& system, const SnapshotMatrix& x);
std::vector<Prediction> predict_features(const DoaSystem& system, const Eigen::MatrixXd& raw_features);

struct CrossProductEstimate {
  DoA doa;
  // |mean Re(e x conj(h))| relative to half the mean total field power; 1 for
  // a single noiseless plane wave, near 0 for noise.
  double confidence = 0.0;
  bool low_confidence = false;
};

// Single-source baseline from the time-averaged Poynting vector.
CrossProductEstimate cross_product_doa(const SnapshotMatrix& x, double min_confidence = 0.1);

// Bundle on disk: a directory holding classifier.vsnn, estimator_k<K>.vsnn
// and manifest.json binding them.
void save_system(const DoaSystem& system, const std::filesystem::path& dir,
                 nn::WeightPrecision precision = nn::WeightPrecision::f32);
DoaSystem load_system(const std::filesystem::path& dir);

}  // namespace vsdoa

#endif  // VSDOA_PIPELINE_HPP
