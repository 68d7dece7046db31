#ifndef VSDOA_DATASET_HPP
#define VSDOA_DATASET_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "vsdoa/features.hpp"
#include "vsdoa/geometry.hpp"
#include "vsdoa/signal_model.hpp"

namespace vsdoa {

struct GenerationConfig {
  // 1..5 for a per-K regression dataset; ignored when `mixed` is set.
  int num_sources = 1;
  // Classifier data: sample i carries K = 1 + (i mod 5) sources.
  bool mixed = false;
  std::size_t samples = 1000;
  std::size_t snapshots = 4000;
  double snr_lo_db = 0.0;
  double snr_hi_db = 20.0;
  bool noiseless = false;
  double power_ratio_lo_db = -3.0;
  double power_ratio_hi_db = 3.0;
  FieldOfView fov = FieldOfView::full();
  Polarization polarization = Polarization::default_fixed();
  Waveform waveform = Waveform::digital;
  std::uint64_t master_seed = 0;

  void validate() const;
  int sources_for_sample(std::size_t index) const;
  // Width of the DoA label row: 2K, or 10 for mixed data.
  std::size_t label_slots() const;
};

nlohmann::json to_json(const GenerationConfig& c);
GenerationConfig generation_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FieldOfView& f);
FieldOfView fov_from_json(const nlohmann::json& j);

// Features and elevation-sorted labels. Labels are in degrees as
// (elevation, azimuth) pairs; unused slots of mixed data hold kLabelSentinel.
struct LabeledDataset {
  static constexpr float kLabelSentinel = -1.0f;

  GenerationConfig config;
  std::size_t label_slots = 0;
  std::vector<float> features;        // size() x kFeatureDim, row-major
  std::vector<float> doa_labels;      // size() x label_slots, row-major
  std::vector<std::uint8_t> counts;   // per-sample source count
  std::vector<float> snr_db;          // per-sample SNR; +inf when noiseless

  std::size_t size() const { return counts.size(); }
  std::span<const float> feature_row(std::size_t i) const;
  std::span<const float> label_row(std::size_t i) const;
  int count(std::size_t i) const { return counts[i]; }
  std::vector<DoA> doas(std::size_t i) const;

  // kFeatureDim x size(), one column per sample.
  Eigen::MatrixXd feature_matrix() const;
  // Normalized regression targets (elevation/180, azimuth/360 per slot), 2K x size().
  Eigen::MatrixXd target_matrix() const;

  // Copy of the selected samples, in the given order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

// Generates `config.samples` samples. Sample i uses its own stream seeded by
// derive_seed(master_seed, i), so the output does not depend on `workers`.
LabeledDataset generate(const GenerationConfig& config, unsigned workers = 1);

// Draws the source list, SNR and snapshots of one sample exactly as
// generate() does; exposed for tests and diagnostics.
struct SampleDraw {
  std::vector<SourceSpec> sources;
  double snr_db = 0.0;
  SnapshotMatrix snapshots;
};
SampleDraw draw_sample(const GenerationConfig& config, std::size_t index);

struct SplitResult {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
};

// Shuffled disjoint partition; sizes are rounded train/validation fractions
// with the remainder going to test.
SplitResult split(const LabeledDataset& ds, std::array<double, 3> fractions, std::uint64_t seed);
std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n, std::array<double, 3> fractions,
                                                      std::uint64_t seed);

// File format "VSDS", version 1. See README for the byte layout.
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds);
LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes);
void save(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load(const std::filesystem::path& path);

struct NeighborReport {
  std::size_t query_index = 0;
  std::vector<double> query_feature;  // standardized
  std::vector<DoA> query_doas;
  std::vector<std::size_t> indices;
  std::vector<double> distances;      // ascending
  std::vector<std::vector<DoA>> neighbor_doas;
};

// k nearest samples to `query_index` in the dataset's own standardized
// feature space. With `exclude_query` unset the query is a candidate too.
NeighborReport knn_fingerprint(const LabeledDataset& ds, std::size_t query_index, std::size_t k,
                               bool exclude_query = true);
// Same, reusing already standardized columns (kFeatureDim x size()).
NeighborReport knn_fingerprint(const LabeledDataset& ds, const Eigen::MatrixXd& standardized,
                               std::size_t query_index, std::size_t k, bool exclude_query = true);

nlohmann::json to_json(const NeighborReport& r);

}  // namespace vsdoa

#endif  // VSDOA_DATASET_HPP
