#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"
#include "vsdoa/binary_io.hpp"
#include "vsdoa/errors.hpp"
#include "vsdoa/evaluation.hpp"

using namespace vsdoa;

namespace {

std::vector<DoA> doas(std::initializer_list<std::pair<double, double>> deg) {
  std::vector<DoA> v;
  for (auto [e, a] : deg) v.push_back(DoA::from_degrees(e, a));
  return v;
}

}  // namespace

TEST(AngleErrors, Examples) {
  const auto t = doas({{20, 1}, {40, 100}});
  for (const AngleError& e : angle_errors(t, t)) {
    EXPECT_EQ(e.elevation_deg, 0.0);
    EXPECT_EQ(e.azimuth_deg, 0.0);
  }
  const auto e = angle_errors(doas({{20, 359}}), doas({{25, 1}}));
  EXPECT_NEAR(e[0].azimuth_deg, 2.0, 1e-12);
  EXPECT_NEAR(e[0].elevation_deg, 5.0, 1e-12);
  EXPECT_THROW(angle_errors(t, doas({{1, 1}})), DimensionError);
}

TEST(Metrics, Examples) {
  const std::vector<double> ones{1, 1, 1};
  EXPECT_DOUBLE_EQ(metrics(ones).mae, 1.0);
  EXPECT_DOUBLE_EQ(metrics(ones).rmse, 1.0);
  const std::vector<double> v{0, 3, 4};
  EXPECT_NEAR(metrics(v).mae, 7.0 / 3.0, 1e-15);
  EXPECT_NEAR(metrics(v).rmse, std::sqrt(25.0 / 3.0), 1e-15);
  EXPECT_THROW(metrics(std::vector<double>{}), ConfigError);
}

TEST(Confusion, CountsAndPairShare) {
  const std::vector<int> truth{1, 2, 3, 4, 5, 4, 5, 5};
  EXPECT_EQ(confusion(truth, truth).accuracy(), 1.0);
  const ConfusionMatrix perfect = confusion(truth, truth);
  for (int i = 1; i <= 5; ++i) {
    for (int j = 1; j <= 5; ++j) {
      if (i != j) EXPECT_EQ(perfect.at(i, j), 0u);
    }
  }
  const std::vector<int> pred{1, 2, 3, 5, 4, 4, 5, 3};
  const ConfusionMatrix m = confusion(pred, truth);
  EXPECT_EQ(m.row_sum(5), 3u);
  EXPECT_EQ(m.row_sum(4), 2u);
  EXPECT_EQ(m.total(), 8u);
  EXPECT_EQ(m.errors(), 3u);
  EXPECT_EQ(m.pair45_errors(), 2u);
  EXPECT_NEAR(m.pair45_error_fraction(), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.accuracy(), 5.0 / 8.0, 1e-15);
  EXPECT_THROW(confusion(std::vector<int>{6}, std::vector<int>{1}), ConfigError);
  EXPECT_THROW(confusion(std::vector<int>{1, 2}, std::vector<int>{1}), DimensionError);
  EXPECT_EQ(to_json(m)["counts"][4][3], 1);
}

TEST(RegionAnalysis, RecordsAndGrid) {
  Rng rng(1);
  std::vector<std::vector<DoA>> truth, pred;
  for (int i = 0; i < 50; ++i) {
    std::vector<DoA> t{sample_uniform_sphere(rng, FieldOfView::full()), sample_uniform_sphere(rng, FieldOfView::full())};
    std::vector<DoA> p{DoA(t[0].elevation() + 0.01, t[0].azimuth()), DoA(t[1].elevation(), t[1].azimuth() + 0.02)};
    truth.push_back(sort_by_elevation(t));
    pred.push_back(sort_by_elevation(p));
  }
  const RegionAnalysis ra = region_analysis(pred, truth);
  ASSERT_EQ(ra.records.size(), 100u);
  std::size_t total = 0;
  for (std::size_t c : ra.grid.count) total += c;
  EXPECT_EQ(total, 100u);
  EXPECT_EQ(ra.grid.count.size(), 18u * 36u);
  for (const QuiverRecord& r : ra.records) {
    const double d = chordal_sq_distance(DoA::from_degrees(r.true_elev_deg, r.true_az_deg),
                                         DoA::from_degrees(r.est_elev_deg, r.est_az_deg));
    EXPECT_NEAR(r.chordal_err, d, 1e-12);
  }
  EXPECT_EQ(ra.grid.cell(0.0, 0.0), 0u);
  EXPECT_EQ(ra.grid.cell(179.999, 359.999), 18u * 36u - 1);
  EXPECT_EQ(ra.grid.cell(15.0, 25.0), 1u * 36u + 2u);
}

TEST(RegionAnalysis, QuiverCsv) {
  const std::vector<QuiverRecord> recs{{10, 20, 11, 21, 0.5}};
  const std::string csv = quiver_csv(recs);
  std::istringstream is(csv);
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "true_elev_deg,true_az_deg,est_elev_deg,est_az_deg,chordal_err");
  EXPECT_EQ(row, "10,20,11,21,0.5");
  TempDir dir;
  write_quiver_csv(dir / "q.csv", recs);
  const auto bytes = io::read_file(dir / "q.csv");
  EXPECT_EQ(std::string(bytes.begin(), bytes.end()), csv);
}

TEST(Evaluate, ReportInvariants) {
  Rng rng(2);
  std::vector<std::vector<DoA>> truth, pred;
  std::vector<double> snr;
  for (int i = 0; i < 200; ++i) {
    std::vector<DoA> t, p;
    for (int k = 0; k < 3; ++k) {
      const DoA d = sample_uniform_sphere(rng, FieldOfView::limited());
      t.push_back(d);
      p.push_back(DoA(d.elevation() + 0.05 * rng.normal(), d.azimuth() + 0.1 * rng.normal()));
    }
    truth.push_back(sort_by_elevation(t));
    pred.push_back(sort_by_elevation(p));
    snr.push_back(rng.uniform(0.0, 20.0));
  }
  pred[0].pop_back();  // count mismatch: not scored
  const EvalReport r = evaluate(pred, truth, snr);
  EXPECT_EQ(r.samples, 200u);
  EXPECT_EQ(r.scored_samples, 199u);
  EXPECT_GE(r.elevation.rmse, r.elevation.mae);
  EXPECT_GE(r.azimuth.rmse, r.azimuth.mae);
  EXPECT_EQ(r.per_source_elevation.size(), 3u);
  EXPECT_EQ(r.assignment_elevation.count, 199u * 3u);
  EXPECT_EQ(r.snr_bins.size(), 4u);
  std::size_t binned = 0;
  for (const SnrBin& b : r.snr_bins) binned += b.elevation.count;
  EXPECT_EQ(binned, 199u * 3u);
  const auto j = to_json(r);
  EXPECT_EQ(j["schema_version"], kEvalReportSchemaVersion);
  EXPECT_TRUE(j.contains("per_source"));
  EXPECT_TRUE(j.contains("config"));
  EXPECT_FALSE(j.contains("confusion"));
}

TEST(Evaluate, AzimuthErrorsNeverExceed180) {
  Rng rng(3);
  std::vector<std::vector<DoA>> truth, pred;
  for (int i = 0; i < 500; ++i) {
    truth.push_back({sample_uniform_sphere(rng, FieldOfView::full())});
    pred.push_back({sample_uniform_sphere(rng, FieldOfView::full())});
  }
  const RegionAnalysis ra = region_analysis(pred, truth);
  for (double v : ra.grid.mean_azimuth_error) EXPECT_LE(v, 180.0);
  EXPECT_LE(evaluate(pred, truth).azimuth.rmse, 180.0);
}

TEST(FovCross, MissingDatasetRejected) {
  FovData full, limited;
  EXPECT_THROW(fov_cross_experiment(1, full, limited, {}), ConfigError);
}

TEST(FovCross, TableShapeAndDeterminism) {
  auto make = [](FieldOfView fov, std::uint64_t seed) {
    GenerationConfig c;
    c.samples = 150;
    c.snapshots = 100;
    c.fov = fov;
    c.master_seed = seed;
    return split(generate(c), {0.6, 0.2, 0.2}, 0);
  };
  const SplitResult f = make(FieldOfView::full(), 1);
  const SplitResult l = make(FieldOfView::limited(), 2);
  FovCrossOptions o;
  o.train.max_epochs = 2;
  o.train.batch_size = 30;
  o.arch.hidden = {8};
  const FovData fd{&f.train, &f.validation, &f.test}, ld{&l.train, &l.validation, &l.test};
  const FovCrossTable a = fov_cross_experiment(1, fd, ld, o);
  const FovCrossTable b = fov_cross_experiment(1, fd, ld, o);
  const auto ja = to_json(a);
  EXPECT_EQ(ja["cells"].size(), 4u);
  for (const auto& cell : ja["cells"]) EXPECT_TRUE(cell["report"]["config"].contains("trained_on"));
  EXPECT_EQ(ja.dump(), to_json(b).dump());
}
