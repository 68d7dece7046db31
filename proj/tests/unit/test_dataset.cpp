#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "test_util.hpp"
#include "vsdoa/binary_io.hpp"
#include "vsdoa/dataset.hpp"
#include "vsdoa/errors.hpp"

using namespace vsdoa;

namespace {

GenerationConfig small_config(int k, std::size_t samples = 200) {
  GenerationConfig c;
  c.num_sources = k;
  c.samples = samples;
  c.snapshots = 200;
  c.master_seed = 99;
  return c;
}

bool labels_sorted(const LabeledDataset& ds) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!is_elevation_sorted(ds.doas(i))) return false;
    const auto row = ds.label_row(i);
    for (int k = 1; k < ds.count(i); ++k) {
      if (row[2 * static_cast<std::size_t>(k)] < row[2 * static_cast<std::size_t>(k) - 2]) return false;
    }
  }
  return true;
}

}  // namespace

TEST(GenerationConfig, Validation) {
  EXPECT_NO_THROW(small_config(3).validate());
  EXPECT_THROW(small_config(0).validate(), ConfigError);
  EXPECT_THROW(small_config(6).validate(), ConfigError);
  GenerationConfig c = small_config(1);
  c.snr_lo_db = 10;
  c.snr_hi_db = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(1);
  c.samples = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(9);
  c.mixed = true;
  EXPECT_NO_THROW(c.validate());
}

TEST(GenerationConfig, JsonRoundTripAndPartial) {
  GenerationConfig c = small_config(4);
  c.fov = FieldOfView::limited();
  c.waveform = Waveform::single_tone;
  c.noiseless = true;
  const GenerationConfig back = generation_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  const GenerationConfig partial = generation_config_from_json({{"num_sources", 2}});
  EXPECT_EQ(partial.num_sources, 2);
  EXPECT_EQ(partial.snapshots, GenerationConfig{}.snapshots);
  EXPECT_THROW(generation_config_from_json({{"num_sources", "two"}}), ConfigError);
}

TEST(Generate, SortedLabelsForEveryK) {
  for (int k = 1; k <= 5; ++k) {
    const LabeledDataset ds = generate(small_config(k, 300));
    ASSERT_EQ(ds.size(), 300u);
    ASSERT_EQ(ds.label_slots, static_cast<std::size_t>(2 * k));
    EXPECT_TRUE(labels_sorted(ds)) << "K=" << k;
  }
}

TEST(Generate, LimitedFovLabels) {
  GenerationConfig c = small_config(3, 500);
  c.fov = FieldOfView::limited();
  const LabeledDataset ds = generate(c);
  for (float v : ds.doa_labels) ASSERT_NE(v, LabeledDataset::kLabelSentinel);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.label_row(i);
    for (std::size_t k = 0; k < row.size(); k += 2) {
      ASSERT_TRUE(FieldOfView::limited().contains_deg(row[k], row[k + 1]));
    }
  }
}

TEST(Generate, MixedCountsAndPadding) {
  GenerationConfig c = small_config(1, 50);
  c.mixed = true;
  const LabeledDataset ds = generate(c);
  EXPECT_EQ(ds.label_slots, 10u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ASSERT_EQ(ds.count(i), 1 + static_cast<int>(i % 5));
    const auto row = ds.label_row(i);
    for (std::size_t s = 2 * static_cast<std::size_t>(ds.count(i)); s < 10; ++s) {
      ASSERT_EQ(row[s], LabeledDataset::kLabelSentinel);
    }
  }
  EXPECT_TRUE(labels_sorted(ds));
  EXPECT_THROW(ds.target_matrix(), ConfigError);
}

TEST(Generate, WorkerCountDoesNotChangeBytes) {
  const GenerationConfig c = small_config(2, 97);
  const auto one = encode_dataset(generate(c, 1));
  EXPECT_EQ(one, encode_dataset(generate(c, 8)));
  EXPECT_EQ(one, encode_dataset(generate(c, 3)));
}

TEST(Generate, SnrRangeAndNoiseless) {
  GenerationConfig c = small_config(1, 100);
  c.snr_lo_db = 2;
  c.snr_hi_db = 4;
  const LabeledDataset ds = generate(c);
  for (float s : ds.snr_db) {
    ASSERT_GE(s, 2.0f);
    ASSERT_LE(s, 4.0f);
  }
  c.noiseless = true;
  for (float s : generate(c).snr_db) ASSERT_TRUE(std::isinf(s));
}

TEST(Generate, DrawSampleMatchesDataset) {
  const GenerationConfig c = small_config(2, 20);
  const LabeledDataset ds = generate(c);
  const SampleDraw d = draw_sample(c, 7);
  const CovarianceFeature f = vectorize(sample_covariance(d.snapshots));
  for (std::size_t j = 0; j < kFeatureDim; ++j) EXPECT_EQ(ds.feature_row(7)[j], static_cast<float>(f[j]));
}

TEST(Generate, PermutedSourceOrderGivesSameFeatureAndLabels) {
  // The sorted labels and the feature of a sample do not depend on the
  // order in which its sources were drawn.
  const GenerationConfig c = small_config(4, 30);
  for (std::size_t i = 0; i < c.samples; ++i) {
    SampleDraw d = draw_sample(c, i);
    auto reversed = d.sources;
    std::reverse(reversed.begin(), reversed.end());
    Rng r1(5), r2(5);
    SymbolMatrix s(static_cast<Eigen::Index>(d.sources.size()), 100);
    for (Eigen::Index k = 0; k < s.rows(); ++k) {
      const auto row = synth_symbols(Waveform::digital, 100, r1);
      for (Eigen::Index n = 0; n < 100; ++n) s(k, n) = row[static_cast<std::size_t>(n)];
    }
    SymbolMatrix sr = s.colwise().reverse();
    const SnapshotMatrix noise = synth_noise(0.05, 100, r2);
    const auto fa = vectorize(sample_covariance(compose_snapshots(d.sources, s, noise)));
    const auto fb = vectorize(sample_covariance(compose_snapshots(reversed, sr, noise)));
    for (std::size_t j = 0; j < kFeatureDim; ++j) ASSERT_NEAR(fa[j], fb[j], 1e-10 * (1.0 + std::abs(fa[j])));
    std::vector<DoA> da, db;
    for (const auto& sp : d.sources) da.push_back(sp.doa);
    for (const auto& sp : reversed) db.push_back(sp.doa);
    ASSERT_EQ(sort_by_elevation(da), sort_by_elevation(db));
  }
}

TEST(Split, SizesPartitionAndDeterminism) {
  const auto parts = split_indices(1000, {0.8, 0.1, 0.1}, 5);
  EXPECT_EQ(parts[0].size(), 800u);
  EXPECT_EQ(parts[1].size(), 100u);
  EXPECT_EQ(parts[2].size(), 100u);
  std::set<std::size_t> all;
  for (const auto& p : parts) all.insert(p.begin(), p.end());
  EXPECT_EQ(all.size(), 1000u);
  EXPECT_EQ(*all.rbegin(), 999u);
  EXPECT_EQ(split_indices(1000, {0.8, 0.1, 0.1}, 5), parts);
  EXPECT_NE(split_indices(1000, {0.8, 0.1, 0.1}, 6), parts);
  EXPECT_THROW(split_indices(2, {0.8, 0.1, 0.1}, 5), ConfigError);
  EXPECT_THROW(split_indices(100, {0.8, 0.3, 0.1}, 5), ConfigError);
  EXPECT_THROW(split_indices(100, {1.0, 0.0, 0.0}, 5), ConfigError);

  const LabeledDataset ds = generate(small_config(1, 50));
  const SplitResult s = split(ds, {0.6, 0.2, 0.2}, 1);
  EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), 50u);
  EXPECT_EQ(s.train.config.samples, s.train.size());
}

TEST(Persistence, RoundTripBitExact) {
  TempDir dir;
  GenerationConfig c = small_config(3, 40);
  c.fov = FieldOfView::limited();
  const LabeledDataset ds = generate(c);
  save(ds, dir / "a.vsds");
  const LabeledDataset back = load(dir / "a.vsds");
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.doa_labels, ds.doa_labels);
  EXPECT_EQ(back.counts, ds.counts);
  EXPECT_EQ(back.snr_db, ds.snr_db);
  EXPECT_EQ(to_json(back.config), to_json(ds.config));
  save(back, dir / "b.vsds");
  EXPECT_EQ(io::read_file(dir / "a.vsds"), io::read_file(dir / "b.vsds"));

  GenerationConfig m = small_config(1, 20);
  m.mixed = true;
  const LabeledDataset mixed = generate(m);
  const LabeledDataset mb = decode_dataset(encode_dataset(mixed));
  EXPECT_EQ(mb.counts, mixed.counts);
  EXPECT_EQ(mb.doa_labels, mixed.doa_labels);
}

TEST(Persistence, RejectsDamagedFiles) {
  const auto bytes = encode_dataset(generate(small_config(1, 10)));
  auto bad = bytes;
  bad[1] = 'Z';
  EXPECT_THROW(decode_dataset(bad), FormatError);
  auto cut = bytes;
  cut.resize(cut.size() / 2);
  EXPECT_THROW(decode_dataset(cut), TruncatedFileError);
  auto flip = bytes;
  flip[flip.size() - 20] ^= 1;
  EXPECT_THROW(decode_dataset(flip), ChecksumError);
  auto ver = bytes;
  ver[4] = 2;
  EXPECT_THROW(decode_dataset(ver), VersionMismatchError);
}

TEST(Persistence, RejectsOtherFeatureLayout) {
  const auto bytes = encode_dataset(generate(small_config(1, 10)));
  io::Container c = io::decode_container(bytes, "VSDS", kDatasetFormatVersion, "dataset");
  auto header = nlohmann::json::parse(c.header);
  header["feature_layout_version"] = kFeatureLayoutVersion + 1;
  c.header = header.dump();
  EXPECT_THROW(decode_dataset(io::encode_container("VSDS", c)), VersionMismatchError);
}

TEST(Knn, ContractAndSelfMatch) {
  const LabeledDataset ds = generate(small_config(2, 100));
  const NeighborReport r = knn_fingerprint(ds, 10, 5);
  ASSERT_EQ(r.indices.size(), 5u);
  EXPECT_TRUE(std::is_sorted(r.distances.begin(), r.distances.end()));
  for (std::size_t i : r.indices) EXPECT_NE(i, 10u);
  EXPECT_EQ(r.query_feature.size(), kFeatureDim);
  EXPECT_EQ(r.neighbor_doas.size(), 5u);

  const NeighborReport self = knn_fingerprint(ds, 10, 1, false);
  EXPECT_EQ(self.indices[0], 10u);
  EXPECT_EQ(self.distances[0], 0.0);

  EXPECT_THROW(knn_fingerprint(ds, 10, 100), ConfigError);
  EXPECT_NO_THROW(knn_fingerprint(ds, 10, 100, false));
  EXPECT_THROW(knn_fingerprint(ds, 100, 1), ConfigError);
  EXPECT_EQ(to_json(r)["neighbors"].size(), 5u);
}

TEST(Knn, NeighboursShareDirections) {
  GenerationConfig c = small_config(1, 10000);
  c.noiseless = true;
  c.snapshots = 50;
  const LabeledDataset ds = generate(c, 4);
  Eigen::MatrixXd m = ds.feature_matrix();
  standardize(m, fit_stats(m));
  Rng rng(3);
  double nn_sum = 0.0, rand_sum = 0.0;
  const int queries = 200;
  for (int q = 0; q < queries; ++q) {
    const std::size_t qi = rng.below(ds.size());
    const NeighborReport r = knn_fingerprint(ds, m, qi, 3);
    for (const auto& d : r.neighbor_doas) nn_sum += chordal_sq_distance(r.query_doas[0], d[0]) / 3.0;
    rand_sum += chordal_sq_distance(ds.doas(qi)[0], ds.doas(rng.below(ds.size()))[0]);
  }
  EXPECT_LT(nn_sum / queries, rand_sum / queries / 10.0);
}
