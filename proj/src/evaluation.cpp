#include "vsdoa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "vsdoa/binary_io.hpp"
#include "vsdoa/errors.hpp"

namespace vsdoa {

using nlohmann::json;

std::vector<AngleError> angle_errors(std::span<const DoA> pred, std::span<const DoA> truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("angle_errors: " + std::to_string(pred.size()) + " predicted vs " +
                         std::to_string(truth.size()) + " true sources");
  }
  std::vector<AngleError> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out[i].elevation_deg = std::abs(truth[i].elevation_deg() - pred[i].elevation_deg());
    out[i].azimuth_deg = wrapped_azimuth_error(truth[i].azimuth_deg(), pred[i].azimuth_deg());
  }
  return out;
}

ErrorMetrics metrics(std::span<const double> errors) {
  if (errors.empty()) throw ConfigError("metrics of an empty error list");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (double e : errors) {
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(errors.size());
  return {abs_sum / n, std::sqrt(sq_sum / n), errors.size()};
}

void ConfusionMatrix::add(int truth, int prediction) {
  if (truth < 1 || truth > kClasses || prediction < 1 || prediction > kClasses) {
    throw ConfigError("confusion: class out of range 1..5");
  }
  ++counts_[static_cast<std::size_t>(truth - 1)][static_cast<std::size_t>(prediction - 1)];
}

std::size_t ConfusionMatrix::at(int truth, int prediction) const {
  return counts_.at(static_cast<std::size_t>(truth - 1)).at(static_cast<std::size_t>(prediction - 1));
}

std::size_t ConfusionMatrix::row_sum(int truth) const {
  const auto& row = counts_.at(static_cast<std::size_t>(truth - 1));
  return std::accumulate(row.begin(), row.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (int k = 1; k <= kClasses; ++k) t += row_sum(k);
  return t;
}

std::size_t ConfusionMatrix::correct() const {
  std::size_t c = 0;
  for (int k = 1; k <= kClasses; ++k) c += at(k, k);
  return c;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t t = total();
  return t == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(t);
}

double ConfusionMatrix::pair45_error_fraction() const {
  const std::size_t e = errors();
  return e == 0 ? 0.0 : static_cast<double>(pair45_errors()) / static_cast<double>(e);
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.size() != truths.size()) throw DimensionError("confusion: length mismatch");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < truths.size(); ++i) m.add(truths[i], predictions[i]);
  return m;
}

std::size_t RegionGrid::cell(double elevation_deg, double azimuth_deg) const {
  const auto bin = [](double v, double span, int bins) {
    const int b = static_cast<int>(std::floor(v / span * bins));
    return static_cast<std::size_t>(std::clamp(b, 0, bins - 1));
  };
  return bin(elevation_deg, 180.0, spec.elevation_bins) * static_cast<std::size_t>(spec.azimuth_bins) +
         bin(azimuth_deg, 360.0, spec.azimuth_bins);
}

RegionAnalysis region_analysis(std::span<const std::vector<DoA>> predictions,
                               std::span<const std::vector<DoA>> truths, const GridSpec& spec) {
  if (predictions.size() != truths.size()) throw DimensionError("region_analysis: length mismatch");
  if (spec.elevation_bins < 1 || spec.azimuth_bins < 1) throw ConfigError("grid needs at least one cell");

  RegionAnalysis out;
  out.grid.spec = spec;
  const std::size_t cells = static_cast<std::size_t>(spec.elevation_bins * spec.azimuth_bins);
  out.grid.count.assign(cells, 0);
  out.grid.mean_chordal.assign(cells, 0.0);
  out.grid.mean_elevation_error.assign(cells, 0.0);
  out.grid.mean_azimuth_error.assign(cells, 0.0);

  for (std::size_t s = 0; s < truths.size(); ++s) {
    const auto errs = angle_errors(predictions[s], truths[s]);
    for (std::size_t k = 0; k < errs.size(); ++k) {
      const DoA& t = truths[s][k];
      const DoA& p = predictions[s][k];
      QuiverRecord r{t.elevation_deg(), t.azimuth_deg(), p.elevation_deg(), p.azimuth_deg(),
                     chordal_sq_distance(t, p)};
      const std::size_t c = out.grid.cell(r.true_elev_deg, r.true_az_deg);
      ++out.grid.count[c];
      out.grid.mean_chordal[c] += r.chordal_err;
      out.grid.mean_elevation_error[c] += errs[k].elevation_deg;
      out.grid.mean_azimuth_error[c] += errs[k].azimuth_deg;
      out.records.push_back(r);
    }
  }
  for (std::size_t c = 0; c < cells; ++c) {
    if (out.grid.count[c] == 0) continue;
    const double n = static_cast<double>(out.grid.count[c]);
    out.grid.mean_chordal[c] /= n;
    out.grid.mean_elevation_error[c] /= n;
    out.grid.mean_azimuth_error[c] /= n;
  }
  return out;
}

std::string quiver_csv(std::span<const QuiverRecord> records) {
  std::ostringstream os;
  os.precision(17);
  os << kQuiverCsvHeader << '\n';
  for (const QuiverRecord& r : records) {
    os << r.true_elev_deg << ',' << r.true_az_deg << ',' << r.est_elev_deg << ',' << r.est_az_deg << ','
       << r.chordal_err << '\n';
  }
  return os.str();
}

void write_quiver_csv(const std::filesystem::path& path, std::span<const QuiverRecord> records) {
  io::write_text_atomic(path, quiver_csv(records));
}

namespace {

// Permutation of `pred` minimizing the total chordal distance to `truth`.
std::vector<DoA> best_assignment(const std::vector<DoA>& pred, const std::vector<DoA>& truth) {
  std::vector<std::size_t> perm(pred.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) cost += chordal_sq_distance(pred[perm[i]], truth[i]);
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<DoA> out;
  for (std::size_t i : best) out.push_back(pred[i]);
  return out;
}

struct ErrorLists {
  std::vector<double> elevation, azimuth;
  void add(const std::vector<AngleError>& errs) {
    for (const AngleError& e : errs) {
      elevation.push_back(e.elevation_deg);
      azimuth.push_back(e.azimuth_deg);
    }
  }
};

ErrorMetrics metrics_or_empty(const std::vector<double>& v) { return v.empty() ? ErrorMetrics{} : metrics(v); }

}  // namespace

EvalReport evaluate(std::span<const std::vector<DoA>> predictions, std::span<const std::vector<DoA>> truths,
                    std::span<const double> snr_db, double snr_bin_width_db) {
  if (predictions.size() != truths.size()) throw DimensionError("evaluate: length mismatch");
  if (!snr_db.empty() && snr_db.size() != truths.size()) throw DimensionError("evaluate: SNR list length mismatch");
  if (!(snr_bin_width_db > 0.0)) throw ConfigError("SNR bin width must be positive");

  EvalReport rep;
  rep.samples = truths.size();
  ErrorLists all, assigned;
  std::vector<ErrorLists> slots;
  std::map<long, ErrorLists> bins;  // key floor(snr / width); LONG_MAX for noiseless
  double chordal_sum = 0.0;
  std::size_t chordal_n = 0;

  for (std::size_t s = 0; s < truths.size(); ++s) {
    if (predictions[s].size() != truths[s].size() || truths[s].empty()) continue;
    ++rep.scored_samples;
    const auto errs = angle_errors(predictions[s], truths[s]);
    all.add(errs);
    if (slots.size() < errs.size()) slots.resize(errs.size());
    for (std::size_t k = 0; k < errs.size(); ++k) {
      slots[k].elevation.push_back(errs[k].elevation_deg);
      slots[k].azimuth.push_back(errs[k].azimuth_deg);
      chordal_sum += chordal_sq_distance(truths[s][k], predictions[s][k]);
      ++chordal_n;
    }
    const auto matched = best_assignment(predictions[s], truths[s]);
    assigned.add(angle_errors(matched, truths[s]));
    if (!snr_db.empty()) {
      const double snr = snr_db[s];
      const long key = std::isfinite(snr) ? static_cast<long>(std::floor(snr / snr_bin_width_db))
                                          : std::numeric_limits<long>::max();
      bins[key].add(errs);
    }
  }

  rep.elevation = metrics_or_empty(all.elevation);
  rep.azimuth = metrics_or_empty(all.azimuth);
  rep.overall_rmse = std::sqrt(0.5 * (rep.elevation.rmse * rep.elevation.rmse + rep.azimuth.rmse * rep.azimuth.rmse));
  rep.mean_chordal = chordal_n == 0 ? 0.0 : chordal_sum / static_cast<double>(chordal_n);
  for (const ErrorLists& sl : slots) {
    rep.per_source_elevation.push_back(metrics_or_empty(sl.elevation));
    rep.per_source_azimuth.push_back(metrics_or_empty(sl.azimuth));
  }
  rep.assignment_elevation = metrics_or_empty(assigned.elevation);
  rep.assignment_azimuth = metrics_or_empty(assigned.azimuth);
  for (const auto& [key, lists] : bins) {
    SnrBin b;
    if (key == std::numeric_limits<long>::max()) {
      b.noiseless = true;
    } else {
      b.lo_db = static_cast<double>(key) * snr_bin_width_db;
      b.hi_db = b.lo_db + snr_bin_width_db;
    }
    b.elevation = metrics_or_empty(lists.elevation);
    b.azimuth = metrics_or_empty(lists.azimuth);
    rep.snr_bins.push_back(b);
  }
  return rep;
}

namespace {

std::vector<std::vector<DoA>> all_truths(const LabeledDataset& ds) {
  std::vector<std::vector<DoA>> t;
  t.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) t.push_back(ds.doas(i));
  return t;
}

std::vector<double> all_snr(const LabeledDataset& ds) { return {ds.snr_db.begin(), ds.snr_db.end()}; }

}  // namespace

EvalReport evaluate_estimator(const nn::MlpModel& estimator, const LabeledDataset& test_set) {
  if (test_set.size() == 0) throw ConfigError("empty test set");
  if (test_set.config.mixed || static_cast<int>(test_set.label_slots) != estimator.output_dim()) {
    throw DimensionError("test labels do not match the estimator's output width");
  }
  const auto preds = estimate_doas(estimator, test_set.feature_matrix());
  const auto truths = all_truths(test_set);
  const auto snr = all_snr(test_set);
  EvalReport rep = evaluate(preds, truths, snr);
  rep.config = {{"dataset", to_json(test_set.config)}, {"model", estimator.training_echo}};
  return rep;
}

EvalReport evaluate_system(const DoaSystem& system, const LabeledDataset& test_set) {
  if (test_set.size() == 0) throw ConfigError("empty test set");
  const auto preds = predict_features(system, test_set.feature_matrix());
  const auto truths = all_truths(test_set);
  const auto snr = all_snr(test_set);
  std::vector<std::vector<DoA>> pred_doas;
  std::vector<int> k_hat, k_true;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    pred_doas.push_back(preds[i].doas);
    k_hat.push_back(preds[i].k_hat);
    k_true.push_back(test_set.count(i));
  }
  EvalReport rep = evaluate(pred_doas, truths, snr);
  rep.confusion = confusion(k_hat, k_true);
  rep.config = {{"dataset", to_json(test_set.config)}};
  if (system.classifier) rep.config["classifier"] = system.classifier->training_echo;
  return rep;
}

json to_json(const ErrorMetrics& m) { return {{"mae_deg", m.mae}, {"rmse_deg", m.rmse}, {"count", m.count}}; }

json to_json(const ConfusionMatrix& c) {
  json rows = json::array();
  for (int t = 1; t <= ConfusionMatrix::kClasses; ++t) {
    json row = json::array();
    for (int p = 1; p <= ConfusionMatrix::kClasses; ++p) row.push_back(c.at(t, p));
    rows.push_back(row);
  }
  return {{"schema_version", kEvalReportSchemaVersion},
          {"rows", "truth"},
          {"columns", "prediction"},
          {"classes", {1, 2, 3, 4, 5}},
          {"counts", rows},
          {"total", c.total()},
          {"accuracy", c.accuracy()},
          {"pair45_error_fraction", c.pair45_error_fraction()}};
}

json to_json(const EvalReport& r) {
  json per_source = json::array();
  for (std::size_t k = 0; k < r.per_source_elevation.size(); ++k) {
    per_source.push_back({{"slot", k + 1},
                          {"elevation", to_json(r.per_source_elevation[k])},
                          {"azimuth", to_json(r.per_source_azimuth[k])}});
  }
  json bins = json::array();
  for (const SnrBin& b : r.snr_bins) {
    json jb{{"noiseless", b.noiseless}, {"elevation", to_json(b.elevation)}, {"azimuth", to_json(b.azimuth)}};
    if (!b.noiseless) {
      jb["lo_db"] = b.lo_db;
      jb["hi_db"] = b.hi_db;
    }
    bins.push_back(jb);
  }
  json j{{"schema_version", kEvalReportSchemaVersion},
         {"samples", r.samples},
         {"scored_samples", r.scored_samples},
         {"elevation", to_json(r.elevation)},
         {"azimuth", to_json(r.azimuth)},
         {"overall_rmse_deg", r.overall_rmse},
         {"mean_chordal", r.mean_chordal},
         {"per_source", per_source},
         {"assignment_matched", {{"elevation", to_json(r.assignment_elevation)},
                                 {"azimuth", to_json(r.assignment_azimuth)}}},
         {"snr_bins", bins},
         {"config", r.config}};
  if (r.confusion) j["confusion"] = to_json(*r.confusion);
  return j;
}

json to_json(const RegionGrid& g) {
  return {{"elevation_bins", g.spec.elevation_bins},
          {"azimuth_bins", g.spec.azimuth_bins},
          {"count", g.count},
          {"mean_chordal", g.mean_chordal},
          {"mean_elevation_error_deg", g.mean_elevation_error},
          {"mean_azimuth_error_deg", g.mean_azimuth_error}};
}

bool FovCrossTable::limited_limited_best() const {
  const double ll = reports[1][1].overall_rmse;
  return ll <= reports[0][0].overall_rmse && ll <= reports[0][1].overall_rmse && ll <= reports[1][0].overall_rmse;
}

FovCrossTable fov_cross_experiment(int num_sources, const FovData& full, const FovData& limited,
                                   const FovCrossOptions& opts) {
  for (const FovData* d : {&full, &limited}) {
    if (!d->train || !d->validation || !d->test) throw ConfigError("fov_cross_experiment: missing dataset");
  }
  const FovData* data[2] = {&full, &limited};
  const char* names[2] = {"full", "limited"};
  FovCrossTable table;
  for (int i = 0; i < 2; ++i) {
    const nn::TrainResult trained =
        train_estimator(num_sources, *data[i]->train, *data[i]->validation, opts.train, opts.arch);
    for (int j = 0; j < 2; ++j) {
      EvalReport rep = evaluate_estimator(trained.model, *data[j]->test);
      rep.config["trained_on"] = names[i];
      rep.config["tested_on"] = names[j];
      rep.config["history"] = to_json(trained.history);
      table.reports[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::move(rep);
    }
  }
  return table;
}

json to_json(const FovCrossTable& t) {
  const char* names[2] = {"full", "limited"};
  json cells = json::array();
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      cells.push_back({{"trained_on", names[i]}, {"tested_on", names[j]}, {"report", to_json(t.reports[i][j])}});
    }
  }
  return {{"schema_version", kEvalReportSchemaVersion},
          {"cells", cells},
          {"limited_limited_best", t.limited_limited_best()}};
}

}  // namespace vsdoa
