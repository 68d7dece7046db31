#ifndef VSDOA_EVALUATION_HPP
#define VSDOA_EVALUATION_HPP

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vsdoa/dataset.hpp"
#include "vsdoa/geometry.hpp"
#include "vsdoa/nn.hpp"
#include "vsdoa/pipeline.hpp"

namespace vsdoa {

struct AngleError {
  double elevation_deg = 0.0;  // |truth - estimate|
  double azimuth_deg = 0.0;    // wrapped, in [0, 180]
};

// Slot i of `pred` against slot i of `truth`; both must be elevation-sorted
// and of equal length.
std::vector<AngleError> angle_errors(std::span<const DoA> pred, std::span<const DoA> truth);

struct ErrorMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
};

ErrorMetrics metrics(std::span<const double> errors);

class ConfusionMatrix {
 public:
  static constexpr int kClasses = 5;

  void add(int truth, int prediction);
  std::size_t at(int truth, int prediction) const;
  std::size_t row_sum(int truth) const;
  std::size_t total() const;
  std::size_t errors() const { return total() - correct(); }
  std::size_t correct() const;
  double accuracy() const;
  // Misclassifications between 4 and 5 sources (either direction).
  std::size_t pair45_errors() const { return at(4, 5) + at(5, 4); }
  double pair45_error_fraction() const;

 private:
  std::array<std::array<std::size_t, kClasses>, kClasses> counts_{};
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truths);

struct QuiverRecord {
  double true_elev_deg = 0.0;
  double true_az_deg = 0.0;
  double est_elev_deg = 0.0;
  double est_az_deg = 0.0;
  double chordal_err = 0.0;
};

struct GridSpec {
  int elevation_bins = 18;
  int azimuth_bins = 36;
};

// Per-cell means over the true DoA's cell, row-major (elevation, azimuth).
struct RegionGrid {
  GridSpec spec;
  std::vector<std::size_t> count;
  std::vector<double> mean_chordal;
  std::vector<double> mean_elevation_error;
  std::vector<double> mean_azimuth_error;

  std::size_t cell(double elevation_deg, double azimuth_deg) const;
};

struct RegionAnalysis {
  std::vector<QuiverRecord> records;  // one per (sample, source)
  RegionGrid grid;
};

RegionAnalysis region_analysis(std::span<const std::vector<DoA>> predictions,
                               std::span<const std::vector<DoA>> truths, const GridSpec& spec = {});

inline constexpr const char* kQuiverCsvHeader = "true_elev_deg,true_az_deg,est_elev_deg,est_az_deg,chordal_err";
std::string quiver_csv(std::span<const QuiverRecord> records);
void write_quiver_csv(const std::filesystem::path& path, std::span<const QuiverRecord> records);

struct SnrBin {
  double lo_db = 0.0;
  double hi_db = 0.0;
  bool noiseless = false;
  ErrorMetrics elevation;
  ErrorMetrics azimuth;
};

inline constexpr int kEvalReportSchemaVersion = 1;

struct EvalReport {
  std::size_t samples = 0;
  // Samples whose angles entered the metrics (predicted K equal to true K).
  std::size_t scored_samples = 0;
  ErrorMetrics elevation;
  ErrorMetrics azimuth;
  // sqrt of the mean of squared elevation and azimuth errors.
  double overall_rmse = 0.0;
  double mean_chordal = 0.0;
  std::vector<ErrorMetrics> per_source_elevation;  // slot-wise
  std::vector<ErrorMetrics> per_source_azimuth;
  // Same errors under the best source assignment; diagnostic only.
  ErrorMetrics assignment_elevation;
  ErrorMetrics assignment_azimuth;
  std::vector<SnrBin> snr_bins;
  std::optional<ConfusionMatrix> confusion;
  nlohmann::json config = nlohmann::json::object();
};

// Slot-wise metrics over matched prediction/truth lists. Pairs with
// different lengths are counted in `samples` but not scored. `snr_db` may be
// empty; otherwise it is binned by `snr_bin_width_db`.
EvalReport evaluate(std::span<const std::vector<DoA>> predictions, std::span<const std::vector<DoA>> truths,
                    std::span<const double> snr_db = {}, double snr_bin_width_db = 5.0);

EvalReport evaluate_estimator(const nn::MlpModel& estimator, const LabeledDataset& test_set);
// Runs the full classify-then-estimate flow; fills the confusion matrix.
EvalReport evaluate_system(const DoaSystem& system, const LabeledDataset& test_set);

nlohmann::json to_json(const ErrorMetrics& m);
nlohmann::json to_json(const ConfusionMatrix& c);
nlohmann::json to_json(const EvalReport& r);
nlohmann::json to_json(const RegionGrid& g);

struct FovData {
  const LabeledDataset* train = nullptr;
  const LabeledDataset* validation = nullptr;
  const LabeledDataset* test = nullptr;
};

struct FovCrossOptions {
  nn::TrainOptions train;
  ArchitectureOptions arch;
};

// reports[i][j]: trained on i, tested on j, with 0 = full and 1 = limited.
struct FovCrossTable {
  std::array<std::array<EvalReport, 2>, 2> reports;

  bool limited_limited_best() const;
};

FovCrossTable fov_cross_experiment(int num_sources, const FovData& full, const FovData& limited,
                                   const FovCrossOptions& opts);
nlohmann::json to_json(const FovCrossTable& t);

}  // namespace vsdoa

#endif  // VSDOA_EVALUATION_HPP
