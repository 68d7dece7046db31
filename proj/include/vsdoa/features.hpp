#ifndef VSDOA_FEATURES_HPP
#define VSDOA_FEATURES_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vsdoa/signal_model.hpp"

namespace vsdoa {

using CovarianceMatrix = Eigen::Matrix<cd, kSensorChannels, kSensorChannels>;

inline constexpr std::size_t kFeatureDim = 42;
// Bump whenever the slot order of vectorize() changes.
inline constexpr std::uint32_t kFeatureLayoutVersion = 1;

// Upper triangle (i <= j) of the 6x6 covariance in row-major order, each
// entry stored as (real, imag). The six diagonal imaginary slots are zero.
using CovarianceFeature = std::array<double, kFeatureDim>;

// Z = X X^H / N. The upper triangle is accumulated and mirrored, so Z is
// exactly Hermitian.
CovarianceMatrix sample_covariance(const SnapshotMatrix& x);

// Expected covariance A diag(p) A^H + noise_variance I.
CovarianceMatrix analytic_covariance(std::span<const SourceSpec> specs, double noise_variance);

CovarianceFeature vectorize(const CovarianceMatrix& z);
CovarianceMatrix devectorize(const CovarianceFeature& f);

// Slot index of the real part of Z(i, j), i <= j.
std::size_t feature_slot(int i, int j);

// Per-dimension z-score statistics fitted on a training set.
struct FeatureStats {
  static constexpr double kStdFloor = 1e-8;

  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t dim() const { return mean.size(); }
  bool empty() const { return mean.empty(); }
};

// Columns of `features` are samples. Throws ConfigError when empty.
FeatureStats fit_stats(const Eigen::MatrixXd& features);
FeatureStats fit_stats(std::span<const CovarianceFeature> features);

// In-place, columns are samples.
void standardize(Eigen::MatrixXd& features, const FeatureStats& stats);
CovarianceFeature standardize(const CovarianceFeature& f, const FeatureStats& stats);

struct TradeoffCell {
  double snr_db = 0.0;
  std::size_t snapshots = 0;
  // Mean over trials of the squared error per feature slot.
  double mean_sq_error = 0.0;
  // Mean over trials of the Euclidean feature error ||f - f0||.
  double mean_feature_error = 0.0;
};

struct TradeoffScenario {
  int num_sources = 1;
  FieldOfView fov = FieldOfView::full();
  Polarization pol = Polarization::default_fixed();
  Waveform waveform = Waveform::digital;
  double power_ratio_lo_db = -3.0;
  double power_ratio_hi_db = 3.0;
};

// For every (snr, N) pair: draw a random scenario per trial, synthesize,
// and compare the sample feature with the analytic noise-free feature
// vectorize(A diag(p) A^H). Trials reuse the same scenario seeds across grid
// cells so cells differ only in SNR and N.
std::vector<TradeoffCell> snapshot_snr_tradeoff(std::span<const double> snr_grid_db,
                                                std::span<const std::size_t> n_grid,
                                                std::size_t trials, std::uint64_t seed,
                                                const TradeoffScenario& scenario = {});

}  // namespace vsdoa

#endif  // VSDOA_FEATURES_HPP
