#include "vsdoa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "vsdoa/binary_io.hpp"
#include "vsdoa/errors.hpp"

namespace vsdoa {

using nlohmann::json;

namespace {

constexpr std::string_view kDatasetMagic = "VSDS";

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

}  // namespace

void GenerationConfig::validate() const {
  if (!mixed && (num_sources < 1 || num_sources > kMaxSources)) {
    throw ConfigError("num_sources must be in 1..5");
  }
  if (samples < 1) throw ConfigError("samples must be at least 1");
  if (snapshots < 1) throw ConfigError("snapshots must be at least 1");
  if (!std::isfinite(snr_lo_db) || !std::isfinite(snr_hi_db) || snr_lo_db > snr_hi_db) {
    throw ConfigError("snr range must be finite with lo <= hi");
  }
  if (!std::isfinite(power_ratio_lo_db) || !std::isfinite(power_ratio_hi_db) ||
      power_ratio_lo_db > power_ratio_hi_db) {
    throw ConfigError("power ratio range must be finite with lo <= hi");
  }
  fov.validate();
  polarization.validate();
}

int GenerationConfig::sources_for_sample(std::size_t index) const {
  return mixed ? 1 + static_cast<int>(index % kMaxSources) : num_sources;
}

std::size_t GenerationConfig::label_slots() const {
  return 2 * static_cast<std::size_t>(mixed ? kMaxSources : num_sources);
}

json to_json(const FieldOfView& f) {
  return json{{"elevation_deg", {f.elevation_min_deg, f.elevation_max_deg}},
              {"azimuth_deg", {f.azimuth_min_deg, f.azimuth_max_deg}}};
}

FieldOfView fov_from_json(const json& j) {
  FieldOfView f;
  f.elevation_min_deg = j.at("elevation_deg").at(0).get<double>();
  f.elevation_max_deg = j.at("elevation_deg").at(1).get<double>();
  f.azimuth_min_deg = j.at("azimuth_deg").at(0).get<double>();
  f.azimuth_max_deg = j.at("azimuth_deg").at(1).get<double>();
  return f;
}

json to_json(const GenerationConfig& c) {
  return json{{"num_sources", c.num_sources},
              {"mixed", c.mixed},
              {"samples", c.samples},
              {"snapshots", c.snapshots},
              {"snr_db", {c.snr_lo_db, c.snr_hi_db}},
              {"noiseless", c.noiseless},
              {"power_ratio_db", {c.power_ratio_lo_db, c.power_ratio_hi_db}},
              {"fov", to_json(c.fov)},
              {"polarization_rad", {{"gamma", c.polarization.gamma}, {"eta", c.polarization.eta}}},
              {"waveform", to_string(c.waveform)},
              {"master_seed", c.master_seed}};
}

GenerationConfig generation_config_from_json(const json& j) {
  GenerationConfig c;
  try {
    c.num_sources = get_or(j, "num_sources", c.num_sources);
    c.mixed = get_or(j, "mixed", c.mixed);
    c.samples = get_or(j, "samples", c.samples);
    c.snapshots = get_or(j, "snapshots", c.snapshots);
    if (j.contains("snr_db")) {
      c.snr_lo_db = j["snr_db"].at(0).get<double>();
      c.snr_hi_db = j["snr_db"].at(1).get<double>();
    }
    c.noiseless = get_or(j, "noiseless", c.noiseless);
    if (j.contains("power_ratio_db")) {
      c.power_ratio_lo_db = j["power_ratio_db"].at(0).get<double>();
      c.power_ratio_hi_db = j["power_ratio_db"].at(1).get<double>();
    }
    if (j.contains("fov")) c.fov = fov_from_json(j["fov"]);
    if (j.contains("polarization_rad")) {
      c.polarization.gamma = j["polarization_rad"].at("gamma").get<double>();
      c.polarization.eta = j["polarization_rad"].at("eta").get<double>();
    }
    if (j.contains("waveform")) c.waveform = waveform_from_string(j["waveform"].get<std::string>());
    c.master_seed = get_or(j, "master_seed", c.master_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed generation config: ") + e.what());
  }
  return c;
}

std::span<const float> LabeledDataset::feature_row(std::size_t i) const {
  return std::span<const float>(features).subspan(i * kFeatureDim, kFeatureDim);
}

std::span<const float> LabeledDataset::label_row(std::size_t i) const {
  return std::span<const float>(doa_labels).subspan(i * label_slots, label_slots);
}

std::vector<DoA> LabeledDataset::doas(std::size_t i) const {
  const auto row = label_row(i);
  std::vector<DoA> out;
  for (int k = 0; k < count(i); ++k) {
    out.push_back(DoA::from_degrees(row[2 * static_cast<std::size_t>(k)], row[2 * static_cast<std::size_t>(k) + 1]));
  }
  return out;
}

Eigen::MatrixXd LabeledDataset::feature_matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(kFeatureDim), static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) {
    const auto row = feature_row(i);
    for (std::size_t d = 0; d < kFeatureDim; ++d) {
      m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) = row[d];
    }
  }
  return m;
}

Eigen::MatrixXd LabeledDataset::target_matrix() const {
  if (config.mixed) throw ConfigError("regression targets need a per-K dataset");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(label_slots), static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) {
    const auto row = label_row(i);
    for (std::size_t s = 0; s < label_slots; ++s) {
      const double scale = s % 2 == 0 ? 180.0 : 360.0;
      m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) = row[s] / scale;
    }
  }
  return m;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.config = config;
  out.config.samples = indices.size();
  out.label_slots = label_slots;
  out.features.reserve(indices.size() * kFeatureDim);
  out.doa_labels.reserve(indices.size() * label_slots);
  out.counts.reserve(indices.size());
  out.snr_db.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ConfigError("subset index out of range");
    const auto f = feature_row(i);
    const auto l = label_row(i);
    out.features.insert(out.features.end(), f.begin(), f.end());
    out.doa_labels.insert(out.doa_labels.end(), l.begin(), l.end());
    out.counts.push_back(counts[i]);
    out.snr_db.push_back(snr_db[i]);
  }
  return out;
}

SampleDraw draw_sample(const GenerationConfig& config, std::size_t index) {
  Rng rng(derive_seed(config.master_seed, index));
  SampleDraw draw;
  const int k = config.sources_for_sample(index);
  draw.sources.resize(static_cast<std::size_t>(k));
  for (int s = 0; s < k; ++s) {
    SourceSpec& spec = draw.sources[static_cast<std::size_t>(s)];
    spec.doa = sample_uniform_sphere(rng, config.fov);
    spec.pol = config.polarization;
    spec.waveform = config.waveform;
    spec.power_db = s == 0 ? 0.0 : rng.uniform(config.power_ratio_lo_db, config.power_ratio_hi_db);
  }
  draw.snr_db = config.noiseless ? std::numeric_limits<double>::infinity()
                                 : rng.uniform(config.snr_lo_db, config.snr_hi_db);
  draw.snapshots = synth_snapshots(draw.sources, draw.snr_db, config.snapshots, rng);
  return draw;
}

LabeledDataset generate(const GenerationConfig& config, unsigned workers) {
  config.validate();
  const std::size_t n = config.samples;
  LabeledDataset ds;
  ds.config = config;
  ds.label_slots = config.label_slots();
  ds.features.assign(n * kFeatureDim, 0.0f);
  ds.doa_labels.assign(n * ds.label_slots, LabeledDataset::kLabelSentinel);
  ds.counts.assign(n, 0);
  ds.snr_db.assign(n, 0.0f);

  auto fill = [&](std::size_t i) {
    const SampleDraw draw = draw_sample(config, i);
    const CovarianceFeature f = vectorize(sample_covariance(draw.snapshots));
    for (std::size_t d = 0; d < kFeatureDim; ++d) ds.features[i * kFeatureDim + d] = static_cast<float>(f[d]);

    std::vector<DoA> doas;
    for (const SourceSpec& s : draw.sources) doas.push_back(s.doa);
    const std::vector<DoA> sorted = sort_by_elevation(doas);
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      ds.doa_labels[i * ds.label_slots + 2 * k] = static_cast<float>(sorted[k].elevation_deg());
      ds.doa_labels[i * ds.label_slots + 2 * k + 1] = static_cast<float>(sorted[k].azimuth_deg());
    }
    ds.counts[i] = static_cast<std::uint8_t>(sorted.size());
    ds.snr_db[i] = static_cast<float>(draw.snr_db);
  };

  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fill(i);
  } else {
    // Strided assignment; each slot is written by exactly one thread.
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) fill(i);
      });
    }
  }
  return ds;
}

std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n, std::array<double, 3> fractions,
                                                      std::uint64_t seed) {
  if (n < 3) throw ConfigError("dataset needs at least 3 samples to split");
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
  }
  if (std::fabs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
  n_val = std::clamp<std::size_t>(n_val, 1, n - n_train - 1);

  std::array<std::vector<std::size_t>, 3> parts;
  parts[0].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  parts[1].assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                  order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  parts[2].assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return parts;
}

SplitResult split(const LabeledDataset& ds, std::array<double, 3> fractions, std::uint64_t seed) {
  const auto parts = split_indices(ds.size(), fractions, seed);
  return {ds.subset(parts[0]), ds.subset(parts[1]), ds.subset(parts[2])};
}

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds) {
  const bool with_counts = ds.config.mixed;
  io::ByteWriter payload;
  for (float v : ds.features) payload.f32(v);
  for (float v : ds.doa_labels) payload.f32(v);
  if (with_counts) {
    for (std::uint8_t c : ds.counts) payload.f32(static_cast<float>(c));
  }
  for (float v : ds.snr_db) payload.f32(v);

  json header{{"config", to_json(ds.config)},
              {"samples", ds.size()},
              {"feature_dim", kFeatureDim},
              {"feature_layout_version", kFeatureLayoutVersion},
              {"label_slots", ds.label_slots},
              {"label_units", "degrees"},
              {"label_sentinel", LabeledDataset::kLabelSentinel},
              {"count_labels", with_counts},
              {"label_blocks", with_counts ? json{"doa_deg", "count", "snr_db"} : json{"doa_deg", "snr_db"}},
              {"checksum", io::kChecksumAlgorithm},
              {"payload_bytes", payload.buffer().size()}};

  io::Container c;
  c.version = kDatasetFormatVersion;
  c.header = header.dump();
  c.payload = std::move(payload.buffer());
  return io::encode_container(kDatasetMagic, c);
}

LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  const io::Container c = io::decode_container(bytes, kDatasetMagic, kDatasetFormatVersion, "dataset");
  const json header = json::parse(c.header);
  LabeledDataset ds;
  std::size_t n = 0;
  bool with_counts = false;
  try {
    if (header.at("feature_layout_version").get<std::uint32_t>() != kFeatureLayoutVersion) {
      throw VersionMismatchError("dataset: feature layout version " +
                                 header.at("feature_layout_version").dump() + " is not supported");
    }
    if (header.at("feature_dim").get<std::size_t>() != kFeatureDim) {
      throw FormatError("dataset: unexpected feature width");
    }
    if (header.at("checksum").get<std::string>() != io::kChecksumAlgorithm) {
      throw FormatError("dataset: unknown checksum algorithm");
    }
    ds.config = generation_config_from_json(header.at("config"));
    n = header.at("samples").get<std::size_t>();
    ds.label_slots = header.at("label_slots").get<std::size_t>();
    with_counts = header.at("count_labels").get<bool>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset: malformed header (") + e.what() + ")");
  }

  const std::size_t expected = 4 * (n * kFeatureDim + n * ds.label_slots + (with_counts ? n : 0) + n);
  if (c.payload.size() != expected) throw FormatError("dataset: payload size disagrees with header");

  io::ByteReader r(c.payload);
  ds.features.resize(n * kFeatureDim);
  for (float& v : ds.features) v = r.f32();
  ds.doa_labels.resize(n * ds.label_slots);
  for (float& v : ds.doa_labels) v = r.f32();
  ds.counts.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.counts[i] = with_counts ? static_cast<std::uint8_t>(r.f32()) : static_cast<std::uint8_t>(ds.config.num_sources);
  }
  ds.snr_db.resize(n);
  for (float& v : ds.snr_db) v = r.f32();
  return ds;
}

void save(const LabeledDataset& ds, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_dataset(ds));
}

LabeledDataset load(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

NeighborReport knn_fingerprint(const LabeledDataset& ds, const Eigen::MatrixXd& standardized,
                               std::size_t query_index, std::size_t k, bool exclude_query) {
  const std::size_t n = ds.size();
  if (query_index >= n) throw ConfigError("query index out of range");
  const std::size_t candidates = exclude_query ? n - 1 : n;
  if (k < 1 || k > candidates) throw ConfigError("k must be in 1.." + std::to_string(candidates));

  const Eigen::VectorXd q = standardized.col(static_cast<Eigen::Index>(query_index));
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (exclude_query && i == query_index) continue;
    dist.emplace_back((standardized.col(static_cast<Eigen::Index>(i)) - q).squaredNorm(), i);
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

  NeighborReport r;
  r.query_index = query_index;
  r.query_feature.assign(q.data(), q.data() + q.size());
  r.query_doas = ds.doas(query_index);
  for (std::size_t i = 0; i < k; ++i) {
    r.indices.push_back(dist[i].second);
    r.distances.push_back(std::sqrt(dist[i].first));
    r.neighbor_doas.push_back(ds.doas(dist[i].second));
  }
  return r;
}

NeighborReport knn_fingerprint(const LabeledDataset& ds, std::size_t query_index, std::size_t k,
                               bool exclude_query) {
  Eigen::MatrixXd m = ds.feature_matrix();
  standardize(m, fit_stats(m));
  return knn_fingerprint(ds, m, query_index, k, exclude_query);
}

json to_json(const NeighborReport& r) {
  auto doa_list = [](const std::vector<DoA>& doas) {
    json a = json::array();
    for (const DoA& d : doas) a.push_back({d.elevation_deg(), d.azimuth_deg()});
    return a;
  };
  json neighbors = json::array();
  for (std::size_t i = 0; i < r.indices.size(); ++i) {
    neighbors.push_back({{"index", r.indices[i]},
                         {"distance", r.distances[i]},
                         {"doas_deg", doa_list(r.neighbor_doas[i])}});
  }
  return json{{"query_index", r.query_index},
              {"query_feature", r.query_feature},
              {"query_doas_deg", doa_list(r.query_doas)},
              {"neighbors", neighbors}};
}

}  // namespace vsdoa
