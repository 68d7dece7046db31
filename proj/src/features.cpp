#include "vsdoa/features.hpp"

#include <algorithm>
#include <cmath>

#include "vsdoa/errors.hpp"

namespace vsdoa {

CovarianceMatrix sample_covariance(const SnapshotMatrix& x) {
  const Eigen::Index n = x.cols();
  if (n < 1) throw ConfigError("sample covariance needs at least one snapshot");

  std::array<double, 21> re{};
  std::array<double, 21> im{};
  for (Eigen::Index c = 0; c < n; ++c) {
    const cd* col = x.col(c).data();
    int slot = 0;
    for (int i = 0; i < kSensorChannels; ++i) {
      const double ar = col[i].real(), ai = col[i].imag();
      for (int j = i; j < kSensorChannels; ++j, ++slot) {
        const double br = col[j].real(), bi = col[j].imag();
        // x_i * conj(x_j)
        re[slot] += ar * br + ai * bi;
        im[slot] += ai * br - ar * bi;
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  CovarianceMatrix z;
  int slot = 0;
  for (int i = 0; i < kSensorChannels; ++i) {
    for (int j = i; j < kSensorChannels; ++j, ++slot) {
      if (i == j) {
        z(i, i) = cd(re[slot] * inv_n, 0.0);
      } else {
        z(i, j) = cd(re[slot] * inv_n, im[slot] * inv_n);
        z(j, i) = std::conj(z(i, j));
      }
    }
  }
  return z;
}

CovarianceMatrix analytic_covariance(std::span<const SourceSpec> specs, double noise_variance) {
  CovarianceMatrix z = noise_variance * CovarianceMatrix::Identity();
  for (const SourceSpec& s : specs) {
    const SteeringVector a = steering_vector(s.doa, s.pol);
    z += s.power() * (a * a.adjoint());
  }
  // Force exact Hermitian symmetry.
  for (int i = 0; i < kSensorChannels; ++i) {
    z(i, i) = cd(z(i, i).real(), 0.0);
    for (int j = i + 1; j < kSensorChannels; ++j) z(j, i) = std::conj(z(i, j));
  }
  return z;
}

std::size_t feature_slot(int i, int j) {
  // Entries before row i: sum_{r < i} (6 - r).
  const int before = i * kSensorChannels - i * (i - 1) / 2;
  return static_cast<std::size_t>(2 * (before + (j - i)));
}

CovarianceFeature vectorize(const CovarianceMatrix& z) {
  CovarianceFeature f{};
  std::size_t s = 0;
  for (int i = 0; i < kSensorChannels; ++i) {
    for (int j = i; j < kSensorChannels; ++j) {
      f[s++] = z(i, j).real();
      f[s++] = i == j ? 0.0 : z(i, j).imag();
    }
  }
  return f;
}

CovarianceMatrix devectorize(const CovarianceFeature& f) {
  CovarianceMatrix z;
  std::size_t s = 0;
  for (int i = 0; i < kSensorChannels; ++i) {
    for (int j = i; j < kSensorChannels; ++j, s += 2) {
      if (i == j) {
        z(i, i) = cd(f[s], 0.0);
      } else {
        z(i, j) = cd(f[s], f[s + 1]);
        z(j, i) = std::conj(z(i, j));
      }
    }
  }
  return z;
}

FeatureStats fit_stats(const Eigen::MatrixXd& features) {
  if (features.cols() == 0 || features.rows() == 0) {
    throw ConfigError("cannot fit feature statistics on an empty set");
  }
  const Eigen::Index dim = features.rows();
  const double count = static_cast<double>(features.cols());
  FeatureStats stats;
  stats.mean.resize(static_cast<std::size_t>(dim));
  stats.stddev.resize(static_cast<std::size_t>(dim));
  for (Eigen::Index d = 0; d < dim; ++d) {
    const auto row = features.row(d);
    const double mean = row.sum() / count;
    const double var = (row.array() - mean).square().sum() / count;
    stats.mean[static_cast<std::size_t>(d)] = mean;
    stats.stddev[static_cast<std::size_t>(d)] = std::max(std::sqrt(var), FeatureStats::kStdFloor);
  }
  return stats;
}

FeatureStats fit_stats(std::span<const CovarianceFeature> features) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(kFeatureDim), static_cast<Eigen::Index>(features.size()));
  for (std::size_t c = 0; c < features.size(); ++c) {
    for (std::size_t d = 0; d < kFeatureDim; ++d) {
      m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c)) = features[c][d];
    }
  }
  return fit_stats(m);
}

void standardize(Eigen::MatrixXd& features, const FeatureStats& stats) {
  if (static_cast<std::size_t>(features.rows()) != stats.dim()) {
    throw DimensionError("feature width does not match statistics");
  }
  for (Eigen::Index d = 0; d < features.rows(); ++d) {
    const auto k = static_cast<std::size_t>(d);
    features.row(d) = (features.row(d).array() - stats.mean[k]) / stats.stddev[k];
  }
}

CovarianceFeature standardize(const CovarianceFeature& f, const FeatureStats& stats) {
  if (stats.dim() != kFeatureDim) throw DimensionError("feature width does not match statistics");
  CovarianceFeature out;
  for (std::size_t d = 0; d < kFeatureDim; ++d) out[d] = (f[d] - stats.mean[d]) / stats.stddev[d];
  return out;
}

std::vector<TradeoffCell> snapshot_snr_tradeoff(std::span<const double> snr_grid_db,
                                                std::span<const std::size_t> n_grid,
                                                std::size_t trials, std::uint64_t seed,
                                                const TradeoffScenario& scenario) {
  if (snr_grid_db.empty() || n_grid.empty()) throw ConfigError("trade-off grids must be nonempty");
  if (trials < 1) throw ConfigError("trade-off needs at least one trial");
  if (scenario.num_sources < 1 || scenario.num_sources > kMaxSources) {
    throw ConfigError("trade-off source count must be in 1..5");
  }

  std::vector<TradeoffCell> table;
  for (double snr : snr_grid_db) {
    for (std::size_t n : n_grid) {
      if (n < 1) throw ConfigError("snapshot counts must be positive");
      TradeoffCell cell{snr, n, 0.0, 0.0};
      for (std::size_t t = 0; t < trials; ++t) {
        Rng scenario_rng(derive_seed(seed, t));
        std::vector<SourceSpec> specs(static_cast<std::size_t>(scenario.num_sources));
        for (std::size_t k = 0; k < specs.size(); ++k) {
          specs[k].doa = sample_uniform_sphere(scenario_rng, scenario.fov);
          specs[k].pol = scenario.pol;
          specs[k].waveform = scenario.waveform;
          specs[k].power_db =
              k == 0 ? 0.0 : scenario_rng.uniform(scenario.power_ratio_lo_db, scenario.power_ratio_hi_db);
        }
        const CovarianceFeature clean = vectorize(analytic_covariance(specs, 0.0));

        Rng signal_rng(derive_seed(seed ^ 0x5bd1e995ULL, t));
        const CovarianceFeature observed = vectorize(sample_covariance(synth_snapshots(specs, snr, n, signal_rng)));
        double sq = 0.0;
        for (std::size_t d = 0; d < kFeatureDim; ++d) {
          const double e = observed[d] - clean[d];
          sq += e * e;
        }
        cell.mean_sq_error += sq / static_cast<double>(kFeatureDim);
        cell.mean_feature_error += std::sqrt(sq);
      }
      cell.mean_sq_error /= static_cast<double>(trials);
      cell.mean_feature_error /= static_cast<double>(trials);
      table.push_back(cell);
    }
  }
  return table;
}

}  // namespace vsdoa
